// Compares the OpenMP kernels against their serial references: wall time and
// agreement. hash2col and the pools must match bit-exactly; col2hash
// accumulates in a different order in the scatter reference, so it is
// checked to a small relative tolerance.
#include <omp.h>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <set>

#include "hashconv/cnn_ops.hpp"
#include "hashconv/gemm.hpp"
#include "hashconv/rng.hpp"
#include "hashconv/serial_ref.hpp"
#include "hashconv/threading.hpp"
#include "hashconv/voxel.hpp"

using namespace hashconv;

namespace {

SparseVoxelSet random_set(std::int32_t res, std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::set<std::int64_t> flats;
    while (static_cast<std::int64_t>(flats.size()) < n)
        flats.insert(rng.uniform_int(0, ipow(res, 3) - 1));
    std::vector<Coord> coords;
    for (const std::int64_t f : flats) coords.push_back(unflatten(f, res, 3));
    FeatureMatrix features(3, n);
    for (auto& v : features.values) v = rng.uniform_float() * 2.0f - 1.0f;
    return make_sparse_set(3, res, std::move(coords), std::move(features));
}

double max_rel_err(const FeatureMatrix& a, const FeatureMatrix& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double denom = std::max({std::abs(static_cast<double>(a.values[i])),
                                       std::abs(static_cast<double>(b.values[i])), 1e-12});
        worst = std::max(worst, std::abs(static_cast<double>(a.values[i]) - b.values[i]) / denom);
    }
    return worst;
}

template <typename F>
double time_best_of(int iters, F&& fn) {
    double best = 1e100;
    for (int i = 0; i < iters; ++i) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel benchmark"};
    int res = 32, models = 4, channels = 8, iters = 5;
    std::int64_t voxels_per_model = 3000;
    std::uint64_t seed = 7;
    app.add_option("--res", res);
    app.add_option("--models", models);
    app.add_option("--channels", channels);
    app.add_option("--voxels", voxels_per_model);
    app.add_option("--iters", iters);
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    std::vector<PshLevel> fine_levels, coarse_levels;
    for (int k = 0; k < models; ++k) {
        const SparseVoxelSet fine = random_set(res, voxels_per_model, mix_seed(seed, k));
        PshBuildOptions opt;
        opt.seed = mix_seed(seed, 100 + k);
        fine_levels.push_back(build_psh(fine, opt));
        coarse_levels.push_back(build_psh(coarsen(fine), opt));
    }
    const SuperPsh fine = build_super(fine_levels);
    const SuperPsh coarse = build_super(coarse_levels);

    Rng rng(seed);
    FeatureMatrix data(channels, fine.total_columns());
    for (auto& v : data.values) v = rng.uniform_float() * 2.0f - 1.0f;

    ConvSpec conv_spec{3, 1, 0, channels, channels};
    ConvSpec pool_spec{2, 2, 0, channels, channels};

    const int threads = max_threads();
    std::printf("batch: %d models, %lld voxels total, %d channels, %d threads\n", models,
                static_cast<long long>(fine.total_columns()), channels, threads);
    std::printf("%-12s %12s %12s %8s %10s\n", "kernel", "serial_ms", "omp_ms", "speedup",
                "agreement");

    FeatureMatrix cols_ref, cols_par;
    double t_ser = time_best_of(iters, [&] { cols_ref = serial::hash2col_ref(fine, data, fine, conv_spec); });
    double t_par = time_best_of(iters, [&] { cols_par = hash2col(fine, data, fine, conv_spec); });
    std::printf("%-12s %12.2f %12.2f %7.2fx %10s\n", "hash2col", t_ser * 1e3, t_par * 1e3,
                t_ser / t_par, cols_ref == cols_par ? "exact" : "MISMATCH");

    FeatureMatrix back_ref, back_par;
    t_ser = time_best_of(iters, [&] { back_ref = serial::col2hash_ref(cols_par, fine, fine, conv_spec); });
    t_par = time_best_of(iters, [&] { back_par = col2hash(cols_par, fine, fine, conv_spec); });
    const double err = max_rel_err(back_ref, back_par);
    std::printf("%-12s %12.2f %12.2f %7.2fx %9.1e\n", "col2hash", t_ser * 1e3, t_par * 1e3,
                t_ser / t_par, err);

    MaxPoolResult<float> pool_ref, pool_par;
    t_ser = time_best_of(iters, [&] { pool_ref = serial::max_pool_ref(fine, data, coarse, pool_spec); });
    t_par = time_best_of(iters, [&] { pool_par = max_pool(fine, data, coarse, pool_spec); });
    const bool pool_ok = pool_ref.output == pool_par.output &&
                         pool_ref.switches.values == pool_par.switches.values;
    std::printf("%-12s %12.2f %12.2f %7.2fx %10s\n", "max_pool", t_ser * 1e3, t_par * 1e3,
                t_ser / t_par, pool_ok ? "exact" : "MISMATCH");

    const std::int64_t k_dim = cols_par.rows;
    FeatureMatrix w(64, k_dim);
    for (auto& v : w.values) v = rng.uniform_float() - 0.5f;
    FeatureMatrix prod_ref(w.rows, cols_par.cols), prod_par(w.rows, cols_par.cols);
    t_ser = time_best_of(iters, [&] {
        serial::matmul(w.values.data(), cols_par.values.data(), prod_ref.values.data(), w.rows,
                       k_dim, cols_par.cols);
    });
    t_par = time_best_of(iters, [&] {
        matmul(w.values.data(), cols_par.values.data(), prod_par.values.data(), w.rows, k_dim,
               cols_par.cols);
    });
    std::printf("%-12s %12.2f %12.2f %7.2fx %10s\n", "matmul", t_ser * 1e3, t_par * 1e3,
                t_ser / t_par, prod_ref == prod_par ? "exact" : "MISMATCH");

    const bool all_ok = cols_ref == cols_par && err < 1e-5 && pool_ok && prod_ref == prod_par;
    return all_ok ? 0 : 1;
}
