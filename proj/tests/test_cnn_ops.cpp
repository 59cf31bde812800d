#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hashconv/cnn_ops.hpp"
#include "hashconv/dense_oracle.hpp"
#include "hashconv/gemm.hpp"
#include "hashconv/serial_ref.hpp"
#include "hashconv/threading.hpp"
#include "test_utils.hpp"

using namespace hashconv;
using hashconv::testing::max_rel_err;
using hashconv::testing::random_matrix;
using hashconv::testing::random_sparse_set;
using hashconv::testing::restricted_err;

namespace {

struct OpFixture {
    std::vector<SparseVoxelSet> fine_sets;
    SuperPsh fine;    // at `res`
    SuperPsh coarse;  // coarsened occupancy at res/2
};

OpFixture make_fixture(int models, std::int32_t res, std::uint64_t seed, std::int64_t n_lo = 50,
                       std::int64_t n_hi = 250) {
    OpFixture fx;
    std::vector<PshLevel> fine_levels, coarse_levels;
    Rng rng(seed);
    for (int k = 0; k < models; ++k) {
        const std::int64_t n = rng.uniform_int(n_lo, n_hi);
        fx.fine_sets.push_back(random_sparse_set(res, n, mix_seed(seed, 10 + k)));
        PshBuildOptions opt;
        opt.seed = mix_seed(seed, 20 + k);
        fine_levels.push_back(build_psh(fx.fine_sets.back(), opt));
        coarse_levels.push_back(build_psh(coarsen(fx.fine_sets.back()), opt));
    }
    fx.fine = build_super(fine_levels);
    fx.coarse = build_super(coarse_levels);
    return fx;
}

SuperPsh single_voxel_structure(const Coord& p, std::int32_t res, float value = 2.5f) {
    FeatureMatrix f(1, 1);
    f.at(0, 0) = value;
    return build_super({{build_psh(make_sparse_set(3, res, {p}, f))}});
}

}  // namespace

TEST_CASE("hash2col: isolated voxel fills only the center row of its column") {
    const SuperPsh s = single_voxel_structure({4, 4, 4}, 8);
    const ConvSpec spec{3, 1, 0, 1, 1};
    const FeatureMatrix data = convert_matrix<float>(s.data);
    const FeatureMatrix cols = hash2col(s, data, s, spec);
    REQUIRE(cols.rows == 27);
    REQUIRE(cols.cols == 1);
    for (std::int64_t row = 0; row < 27; ++row)
        CHECK(cols.at(row, 0) == (row == 13 ? 2.5f : 0.0f));
}

TEST_CASE("hash2col: stride-2 field of output (1,1,1) gathers input cube [2,3]^3") {
    // occupy all of [2,3]^3 plus decoys outside; the output voxel (1,1,1)
    // must see exactly the eight cube voxels in field-row order
    std::vector<Coord> coords;
    FeatureMatrix f(1, 10);
    int i = 0;
    for (int z = 2; z <= 3; ++z)
        for (int y = 2; y <= 3; ++y)
            for (int x = 2; x <= 3; ++x) {
                coords.push_back({x, y, z});
                f.at(0, i) = static_cast<float>(100 + i);
                ++i;
            }
    coords.push_back({0, 0, 0});
    f.at(0, i++) = 7.0f;
    coords.push_back({5, 5, 5});
    f.at(0, i++) = 9.0f;
    const SparseVoxelSet fine_set = make_sparse_set(3, 8, coords, f);
    const SuperPsh fine = build_super({{build_psh(fine_set)}});

    FeatureMatrix cf(1, 1);
    const SuperPsh coarse = build_super({{build_psh(make_sparse_set(3, 4, {{1, 1, 1}}, cf))}});

    const ConvSpec spec{2, 2, 0, 1, 1};
    const FeatureMatrix cols = hash2col(fine, convert_matrix<float>(fine.data), coarse, spec);
    REQUIRE(cols.rows == 8);
    REQUIRE(cols.cols == 1);
    for (int row = 0; row < 8; ++row) {
        const Coord p{2 + (row & 1), 2 + ((row >> 1) & 1), 2 + (row >> 2)};
        const auto idx = fine_set.index_of(p);
        REQUIRE(idx.has_value());
        CHECK(cols.at(row, 0) == fine_set.features.at(0, *idx));
    }
}

TEST_CASE("hash2col equals dense im2col on random two-model batches") {
    const OpFixture fx = make_fixture(2, 16, 31, 80, 200);
    const ConvSpec spec{3, 1, 0, 3, 4};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const FeatureMatrix cols = hash2col(fx.fine, data, fx.fine, spec);

    for (int v = 1; v <= fx.fine.batch; ++v) {
        const oracle::DenseGrid grid = oracle::densify(fx.fine, v, data);
        const FeatureMatrix dense_cols = oracle::im2col(grid, spec, 16);
        const SparseVoxelSet& s = fx.fine_sets[static_cast<std::size_t>(v - 1)];
        for (const Coord& p : s.voxels) {
            const auto col = locate(fx.fine, v, p);
            REQUIRE(col.has_value());
            const std::int64_t dense_col = flatten(p, 16, 3);
            for (std::int64_t row = 0; row < cols.rows; ++row)
                CHECK(cols.at(row, *col) == dense_cols.at(row, dense_col));
        }
    }
}

TEST_CASE("hash2col matches the serial reference bit-exactly") {
    const OpFixture fx = make_fixture(2, 16, 37);
    for (const ConvSpec spec : {ConvSpec{3, 1, 0, 3, 3}, ConvSpec{2, 2, 0, 3, 3}}) {
        const SuperPsh& out = spec.stride == 1 ? fx.fine : fx.coarse;
        const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
        CHECK(hash2col(fx.fine, data, out, spec) ==
              serial::hash2col_ref(fx.fine, data, out, spec));
    }
}

TEST_CASE("col2hash: single isolated voxel routes its center row back") {
    const SuperPsh s = single_voxel_structure({4, 4, 4}, 8);
    const ConvSpec spec{3, 1, 0, 1, 1};
    FeatureMatrix dcols(27, 1);
    dcols.at(13, 0) = 1.0f;
    const FeatureMatrix grads = col2hash(dcols, s, s, spec);
    REQUIRE(grads.rows == 1);
    REQUIRE(grads.cols == 1);
    CHECK(grads.at(0, 0) == 1.0f);
}

TEST_CASE("col2hash: two adjacent voxels accumulate both contributions") {
    FeatureMatrix f(1, 2);
    f.at(0, 0) = 1.0f;
    f.at(0, 1) = 1.0f;
    const SparseVoxelSet set = make_sparse_set(3, 8, {{3, 3, 3}, {4, 3, 3}}, f);
    const SuperPsh s = build_super({{build_psh(set)}});
    const ConvSpec spec{3, 1, 0, 1, 1};
    // columns are ordered like the voxels: col 0 = (3,3,3), col 1 = (4,3,3)
    FeatureMatrix dcols(27, 2);
    dcols.at(13, 0) = 10.0f;  // A in its own field center
    dcols.at(14, 0) = 20.0f;  // B at +x inside A's field
    dcols.at(12, 1) = 40.0f;  // A at -x inside B's field
    dcols.at(13, 1) = 80.0f;  // B center
    const FeatureMatrix grads = col2hash(dcols, s, s, spec);
    CHECK(grads.at(0, 0) == 10.0f + 40.0f);
    CHECK(grads.at(0, 1) == 20.0f + 80.0f);
}

TEST_CASE("hash2col and col2hash are adjoint (100 random trials)") {
    for (int trial = 0; trial < 100; ++trial) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
        const int models = 1 + trial % 3;
        const OpFixture fx = make_fixture(models, 16, seed, 30, 120);
        ConvSpec spec;
        if (trial % 2 == 0) {
            spec = ConvSpec{3, 1, 0, 2, 2};
        } else {
            spec = ConvSpec{trial % 4 == 1 ? 2 : 3, 2, trial % 4 == 3 ? 1 : 0, 2, 2};
        }
        const SuperPsh& out = spec.stride == 1 ? fx.fine : fx.coarse;
        const std::int64_t fd = field_size(spec, 3);

        const FeatureMatrix x =
            random_matrix<float>(spec.in_channels, fx.fine.total_columns(), seed * 3 + 1);
        const FeatureMatrix y =
            random_matrix<float>(spec.in_channels * fd, out.total_columns(), seed * 3 + 2);

        const FeatureMatrix hx = hash2col(fx.fine, x, out, spec);
        const FeatureMatrix cy = col2hash(y, fx.fine, out, spec);
        const double lhs = testing::inner(hx.values, y.values);
        const double rhs = testing::inner(x.values, cy.values);
        const double denom = std::max({std::abs(lhs), std::abs(rhs), 1e-6});
        CHECK(std::abs(lhs - rhs) / denom <= 1e-6);
    }
}

TEST_CASE("col2hash agrees with the serial scatter reference") {
    const OpFixture fx = make_fixture(3, 16, 41);
    const ConvSpec spec{3, 1, 0, 2, 2};
    const FeatureMatrix dcols =
        random_matrix<float>(2 * 27, fx.fine.total_columns(), 4242);
    const FeatureMatrix a = col2hash(dcols, fx.fine, fx.fine, spec);
    const FeatureMatrix b = serial::col2hash_ref(dcols, fx.fine, fx.fine, spec);
    CHECK(max_rel_err(a, b) <= 1e-5);
}

TEST_CASE("conv_forward: delta kernel reproduces the data array") {
    const OpFixture fx = make_fixture(2, 16, 43);
    const ConvSpec spec{3, 1, 0, 3, 3};
    KernelWeights w;
    w.w = FeatureMatrix(3, 3 * 27);
    for (int c = 0; c < 3; ++c) w.w.at(c, c * 27 + 13) = 1.0f;
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const FeatureMatrix out = conv_forward(fx.fine, data, fx.fine, w, spec);
    CHECK(out == data);
}

TEST_CASE("conv_forward: all-ones kernel over an isolated voxel") {
    const SuperPsh s = single_voxel_structure({4, 4, 4}, 8, 1.75f);
    const ConvSpec spec{3, 1, 0, 1, 1};
    KernelWeights w;
    w.w = FeatureMatrix(1, 27);
    for (auto& v : w.w.values) v = 1.0f;
    const FeatureMatrix out =
        conv_forward(s, convert_matrix<float>(s.data), s, w, spec);
    CHECK(out.at(0, 0) == doctest::Approx(1.75f));
}

TEST_CASE("conv_forward matches the dense oracle on random batches") {
    for (int trial = 0; trial < 5; ++trial) {
        const std::uint64_t seed = 300 + static_cast<std::uint64_t>(trial);
        const OpFixture fx = make_fixture(2, 16, seed);
        const int stride = trial % 2 == 0 ? 1 : 2;
        const ConvSpec spec{stride == 1 ? 3 : 2, stride, 0, 3, 4};
        const SuperPsh& out_s = stride == 1 ? fx.fine : fx.coarse;
        const KernelWeights w{random_matrix<float>(4, 3 * field_size(spec, 3), seed + 7)};
        const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
        const FeatureMatrix out = conv_forward(fx.fine, data, out_s, w, spec);
        for (int v = 1; v <= fx.fine.batch; ++v) {
            const oracle::DenseGrid grid = oracle::densify(fx.fine, v, data);
            const oracle::DenseGrid dense = oracle::conv3d(grid, w, spec, out_s.resolution);
            CHECK(restricted_err(out_s, v, out, dense) <= 1e-5);
        }
    }
}

TEST_CASE("conv_backward: zero output gradient gives zero gradients") {
    const OpFixture fx = make_fixture(1, 16, 51);
    const ConvSpec spec{3, 1, 0, 3, 4};
    const KernelWeights w{random_matrix<float>(4, 3 * 27, 5)};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const FeatureMatrix cols = hash2col(fx.fine, data, fx.fine, spec);
    const FeatureMatrix dzero(4, fx.fine.total_columns());
    const ConvGradients<float> grads = conv_backward(dzero, w, cols, fx.fine, fx.fine, spec);
    for (const float v : grads.weights.values) CHECK(v == 0.0f);
    for (const float v : grads.input.values) CHECK(v == 0.0f);
}

TEST_CASE("conv_backward: isolated voxel puts dW at the center tap only") {
    const SuperPsh s = single_voxel_structure({4, 4, 4}, 8, 3.0f);
    const ConvSpec spec{3, 1, 0, 1, 2};
    const KernelWeights w{random_matrix<float>(2, 27, 8)};
    const FeatureMatrix data = convert_matrix<float>(s.data);
    const FeatureMatrix cols = hash2col(s, data, s, spec);
    FeatureMatrix dout(2, 1);
    dout.at(0, 0) = 5.0f;
    dout.at(1, 0) = -2.0f;
    const ConvGradients<float> grads = conv_backward(dout, w, cols, s, s, spec);
    for (std::int64_t r = 0; r < 2; ++r)
        for (std::int64_t k = 0; k < 27; ++k)
            CHECK(grads.weights.at(r, k) ==
                  (k == 13 ? dout.at(r, 0) * 3.0f : 0.0f));
}

TEST_CASE("conv gradients match finite differences (double path)") {
    // ~50-voxel instance; d/dW and d/dinput of sum(conv_out * R)
    const OpFixture fx = make_fixture(1, 16, 61, 50, 50);
    const ConvSpec spec{3, 1, 0, 3, 2};
    KernelWeightsT<double> w{random_matrix<double>(2, 3 * 27, 71)};
    const FeatureMatrixT<double> data =
        convert_matrix<double>(convert_matrix<float>(fx.fine.data));
    const FeatureMatrixT<double> r_mat =
        random_matrix<double>(2, fx.fine.total_columns(), 72);

    auto loss = [&](const KernelWeightsT<double>& weights, const FeatureMatrixT<double>& input) {
        const FeatureMatrixT<double> out = conv_forward(fx.fine, input, fx.fine, weights, spec);
        double acc = 0;
        for (std::size_t i = 0; i < out.values.size(); ++i) acc += out.values[i] * r_mat.values[i];
        return acc;
    };

    const FeatureMatrixT<double> cols = hash2col(fx.fine, data, fx.fine, spec);
    const ConvGradients<double> grads = conv_backward(r_mat, w, cols, fx.fine, fx.fine, spec);

    const double h = 1e-3;
    Rng pick(99);
    for (int t = 0; t < 30; ++t) {
        const auto i = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(w.w.values.size()) - 1));
        KernelWeightsT<double> wp = w, wm = w;
        wp.w.values[i] += h;
        wm.w.values[i] -= h;
        const double fd = (loss(wp, data) - loss(wm, data)) / (2 * h);
        const double an = grads.weights.values[i];
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}) <= 1e-4);
    }
    for (int t = 0; t < 30; ++t) {
        const auto i = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(data.values.size()) - 1));
        FeatureMatrixT<double> dp = data, dm = data;
        dp.values[i] += h;
        dm.values[i] -= h;
        const double fd = (loss(w, dp) - loss(w, dm)) / (2 * h);
        const double an = grads.input.values[i];
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}) <= 1e-4);
    }
}

TEST_CASE("max/avg pool over a full 2x2x2 block of values 1..8") {
    std::vector<Coord> coords;
    FeatureMatrix f(1, 8);
    int i = 0;
    for (int z = 4; z <= 5; ++z)
        for (int y = 4; y <= 5; ++y)
            for (int x = 4; x <= 5; ++x) {
                coords.push_back({x, y, z});
                ++i;
            }
    // values 1..8 in canonical order
    for (std::int64_t c = 0; c < 8; ++c) f.at(0, c) = static_cast<float>(c + 1);
    const SparseVoxelSet set = make_sparse_set(3, 8, coords, f);
    const SuperPsh fine = build_super({{build_psh(set)}});
    const SuperPsh coarse = build_super({{build_psh(coarsen(set))}});
    const ConvSpec spec{2, 2, 0, 1, 1};

    const MaxPoolResult<float> mp = max_pool(fine, convert_matrix<float>(fine.data), coarse, spec);
    REQUIRE(mp.output.cols == 1);
    CHECK(mp.output.at(0, 0) == 8.0f);
    CHECK(mp.switches.at(0, 0) == 7);  // the max sits at the last field position

    const FeatureMatrix ap = avg_pool(fine, convert_matrix<float>(fine.data), coarse, spec);
    CHECK(ap.at(0, 0) == doctest::Approx(36.0f / 8.0f));
}

TEST_CASE("max pool of a single present child returns that value") {
    FeatureMatrix f(1, 1);
    f.at(0, 0) = -3.5f;  // negative values must survive (max over present entries)
    const SparseVoxelSet set = make_sparse_set(3, 8, {{4, 4, 4}}, f);
    const SuperPsh fine = build_super({{build_psh(set)}});
    const SuperPsh coarse = build_super({{build_psh(coarsen(set))}});
    const ConvSpec spec{2, 2, 0, 1, 1};
    const MaxPoolResult<float> mp = max_pool(fine, convert_matrix<float>(fine.data), coarse, spec);
    CHECK(mp.output.at(0, 0) == -3.5f);
    CHECK(mp.switches.at(0, 0) == 0);
}

TEST_CASE("pooling matches the dense oracle on random batches") {
    const OpFixture fx = make_fixture(3, 16, 71);
    const ConvSpec spec{2, 2, 0, 3, 3};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const MaxPoolResult<float> mp = max_pool(fx.fine, data, fx.coarse, spec);
    const FeatureMatrix ap = avg_pool(fx.fine, data, fx.coarse, spec);
    for (int v = 1; v <= fx.fine.batch; ++v) {
        const oracle::DenseGrid grid = oracle::densify(fx.fine, v, data);
        const oracle::DensePool<float> dense_max = oracle::max_pool(grid, spec, 8);
        const oracle::DenseGrid dense_avg = oracle::avg_pool(grid, spec, 8);
        CHECK(restricted_err(fx.coarse, v, mp.output, dense_max.output) == 0.0);
        CHECK(restricted_err(fx.coarse, v, ap, dense_avg) <= 1e-6);
    }
}

TEST_CASE("pools match their serial references bit-exactly") {
    const OpFixture fx = make_fixture(2, 16, 73);
    const ConvSpec spec{2, 2, 0, 3, 3};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const MaxPoolResult<float> a = max_pool(fx.fine, data, fx.coarse, spec);
    const MaxPoolResult<float> b = serial::max_pool_ref(fx.fine, data, fx.coarse, spec);
    CHECK(a.output == b.output);
    CHECK(a.switches.values == b.switches.values);
    CHECK(avg_pool(fx.fine, data, fx.coarse, spec) ==
          serial::avg_pool_ref(fx.fine, data, fx.coarse, spec));
}

TEST_CASE("max_unpool restores an isolated voxel (identity round trip)") {
    FeatureMatrix f(1, 1);
    f.at(0, 0) = 4.25f;
    const SparseVoxelSet set = make_sparse_set(3, 8, {{5, 2, 7}}, f);
    const SuperPsh fine = build_super({{build_psh(set)}});
    const SuperPsh coarse = build_super({{build_psh(coarsen(set))}});
    const ConvSpec spec{2, 2, 0, 1, 1};
    const FeatureMatrix data = convert_matrix<float>(fine.data);
    const MaxPoolResult<float> mp = max_pool(fine, data, coarse, spec);
    const FeatureMatrix restored = max_unpool(mp.output, mp.switches, fine, coarse, spec);
    CHECK(restored == data);
}

TEST_CASE("avg_unpool distributes value/F^3 to every present child") {
    std::vector<Coord> coords;
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) coords.push_back({x, y, z});
    FeatureMatrix f(1, 8);
    const SparseVoxelSet set = make_sparse_set(3, 8, coords, f);
    const SuperPsh fine = build_super({{build_psh(set)}});
    const SuperPsh coarse = build_super({{build_psh(coarsen(set))}});
    const ConvSpec spec{2, 2, 0, 1, 1};
    FeatureMatrix coarse_data(1, 1);
    coarse_data.at(0, 0) = 8.0f;
    const FeatureMatrix out = avg_unpool(coarse_data, fine, coarse, spec);
    for (std::int64_t i = 0; i < 8; ++i) CHECK(out.at(0, i) == doctest::Approx(1.0f));
}

TEST_CASE("restore-pool idempotence: pool(unpool(pool(x))) == pool(x)") {
    const OpFixture fx = make_fixture(2, 16, 83);
    const ConvSpec spec{2, 2, 0, 3, 3};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const MaxPoolResult<float> once = max_pool(fx.fine, data, fx.coarse, spec);
    const FeatureMatrix restored = max_unpool(once.output, once.switches, fx.fine, fx.coarse, spec);
    const MaxPoolResult<float> twice = max_pool(fx.fine, restored, fx.coarse, spec);
    CHECK(twice.output == once.output);
}

TEST_CASE("unpooling matches the dense oracle") {
    const OpFixture fx = make_fixture(2, 16, 89);
    const ConvSpec spec{2, 2, 0, 3, 3};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const MaxPoolResult<float> mp = max_pool(fx.fine, data, fx.coarse, spec);
    const FeatureMatrix max_restored = max_unpool(mp.output, mp.switches, fx.fine, fx.coarse, spec);
    const FeatureMatrix coarse_vals = random_matrix<float>(3, fx.coarse.total_columns(), 91);
    const FeatureMatrix avg_restored = avg_unpool(coarse_vals, fx.fine, fx.coarse, spec);

    for (int v = 1; v <= fx.fine.batch; ++v) {
        const oracle::DenseGrid grid = oracle::densify(fx.fine, v, data);
        const oracle::DensePool<float> dense_mp = oracle::max_pool(grid, spec, 8);
        const oracle::DenseGrid dense_max_restored =
            oracle::max_unpool(dense_mp.output, dense_mp.switches, spec, 16);
        CHECK(restricted_err(fx.fine, v, max_restored, dense_max_restored) == 0.0);

        const oracle::DenseGrid coarse_grid = oracle::densify(fx.coarse, v, coarse_vals);
        const oracle::DenseGrid fine_occ = oracle::densify(fx.fine, v, data);
        const oracle::DenseGrid dense_avg_restored =
            oracle::avg_unpool(coarse_grid, fine_occ, spec);
        CHECK(restricted_err(fx.fine, v, avg_restored, dense_avg_restored) <= 1e-6);
    }
}

TEST_CASE("unpool rejects out-of-range switches") {
    const OpFixture fx = make_fixture(1, 16, 97);
    const ConvSpec spec{2, 2, 0, 3, 3};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    MaxPoolResult<float> mp = max_pool(fx.fine, data, fx.coarse, spec);
    mp.switches.values[0] = 8;  // F^3 == 8 is out of range
    CHECK_THROWS_AS(max_unpool(mp.output, mp.switches, fx.fine, fx.coarse, spec),
                    std::invalid_argument);
}

TEST_CASE("deconv: delta kernel copies coarse values to the matching fine voxels") {
    // one coarse voxel (1,1,1), its 8 children present on the fine level
    std::vector<Coord> coords;
    for (int z = 2; z <= 3; ++z)
        for (int y = 2; y <= 3; ++y)
            for (int x = 2; x <= 3; ++x) coords.push_back({x, y, z});
    FeatureMatrix ff(1, 8);
    const SparseVoxelSet fine_set = make_sparse_set(3, 8, coords, ff);
    const SuperPsh fine = build_super({{build_psh(fine_set)}});
    const SuperPsh coarse = build_super({{build_psh(coarsen(fine_set))}});

    // F=2 stride 2: each fine voxel appears in exactly one coarse field; an
    // all-ones kernel writes the coarse value to every child
    const ConvSpec spec{2, 2, 0, 1, 1};
    KernelWeights w;
    w.w = FeatureMatrix(1, 8);
    for (auto& v : w.w.values) v = 1.0f;
    FeatureMatrix coarse_data(1, 1);
    coarse_data.at(0, 0) = 6.5f;
    const FeatureMatrix out = deconv_forward(coarse, coarse_data, fine, w, spec);
    REQUIRE(out.cols == 8);
    for (std::int64_t i = 0; i < 8; ++i) CHECK(out.at(0, i) == 6.5f);
}

TEST_CASE("conv and deconv are adjoint") {
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t seed = 500 + static_cast<std::uint64_t>(trial);
        const OpFixture fx = make_fixture(1 + trial % 2, 16, seed, 40, 150);
        const ConvSpec spec{2, 2, 0, 3, 4};
        const KernelWeights w{random_matrix<float>(4, 3 * 8, seed + 3)};

        const FeatureMatrix x = random_matrix<float>(3, fx.fine.total_columns(), seed + 4);
        const FeatureMatrix y = random_matrix<float>(4, fx.coarse.total_columns(), seed + 5);

        const FeatureMatrix cx = conv_forward(fx.fine, x, fx.coarse, w, spec);
        const FeatureMatrix dy = deconv_forward(fx.coarse, y, fx.fine, w, spec);
        const double lhs = testing::inner(cx.values, y.values);
        const double rhs = testing::inner(x.values, dy.values);
        const double denom = std::max({std::abs(lhs), std::abs(rhs), 1e-6});
        CHECK(std::abs(lhs - rhs) / denom <= 1e-6);
    }
}

TEST_CASE("deconv matches the dense transposed convolution") {
    const OpFixture fx = make_fixture(2, 16, 101);
    const ConvSpec spec{2, 2, 0, 3, 4};
    const KernelWeights w{random_matrix<float>(4, 3 * 8, 103)};
    const FeatureMatrix coarse_data = random_matrix<float>(4, fx.coarse.total_columns(), 105);
    const FeatureMatrix out = deconv_forward(fx.coarse, coarse_data, fx.fine, w, spec);
    for (int v = 1; v <= fx.fine.batch; ++v) {
        const oracle::DenseGrid coarse_grid = oracle::densify(fx.coarse, v, coarse_data);
        const oracle::DenseGrid dense = oracle::transposed_conv(coarse_grid, w, spec, 16);
        CHECK(restricted_err(fx.fine, v, out, dense) <= 1e-5);
    }
}

TEST_CASE("deconv backward matches finite differences (double path)") {
    const OpFixture fx = make_fixture(1, 16, 107, 40, 60);
    const ConvSpec spec{2, 2, 0, 2, 3};
    KernelWeightsT<double> w{random_matrix<double>(3, 2 * 8, 109)};
    const FeatureMatrixT<double> coarse_data =
        random_matrix<double>(3, fx.coarse.total_columns(), 111);
    const FeatureMatrixT<double> r_mat = random_matrix<double>(2, fx.fine.total_columns(), 113);

    auto loss = [&](const KernelWeightsT<double>& weights, const FeatureMatrixT<double>& input) {
        const FeatureMatrixT<double> out = deconv_forward(fx.coarse, input, fx.fine, weights, spec);
        double acc = 0;
        for (std::size_t i = 0; i < out.values.size(); ++i) acc += out.values[i] * r_mat.values[i];
        return acc;
    };
    const ConvGradients<double> grads =
        deconv_backward(r_mat, w, coarse_data, fx.coarse, fx.fine, spec);
    const double h = 1e-3;
    Rng pick(115);
    for (int t = 0; t < 20; ++t) {
        const auto i = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(w.w.values.size()) - 1));
        KernelWeightsT<double> wp = w, wm = w;
        wp.w.values[i] += h;
        wm.w.values[i] -= h;
        const double fd = (loss(wp, coarse_data) - loss(wm, coarse_data)) / (2 * h);
        CHECK(std::abs(fd - grads.weights.values[i]) /
                  std::max({std::abs(fd), std::abs(grads.weights.values[i]), 1e-4}) <=
              1e-4);
    }
    for (int t = 0; t < 20; ++t) {
        const auto i = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(coarse_data.values.size()) - 1));
        FeatureMatrixT<double> dp = coarse_data, dm = coarse_data;
        dp.values[i] += h;
        dm.values[i] -= h;
        const double fd = (loss(w, dp) - loss(w, dm)) / (2 * h);
        CHECK(std::abs(fd - grads.input.values[i]) /
                  std::max({std::abs(fd), std::abs(grads.input.values[i]), 1e-4}) <=
              1e-4);
    }
}

TEST_CASE("batch norm: constant channel becomes zeros") {
    FeatureMatrix x(2, 6);
    for (std::int64_t j = 0; j < 6; ++j) {
        x.at(0, j) = 3.25f;
        x.at(1, j) = static_cast<float>(j);
    }
    BatchNormStats<float> stats(2);
    const FeatureMatrix y = batch_norm_forward(x, stats, true);
    for (std::int64_t j = 0; j < 6; ++j) CHECK(std::abs(y.at(0, j)) <= 1e-3f);
    // non-constant channel is normalized to zero mean, unit variance
    double mean = 0, var = 0;
    for (std::int64_t j = 0; j < 6; ++j) mean += y.at(1, j);
    mean /= 6;
    for (std::int64_t j = 0; j < 6; ++j) var += (y.at(1, j) - mean) * (y.at(1, j) - mean);
    CHECK(std::abs(mean) <= 1e-5);
    CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("batch norm backward matches finite differences on a 20-column matrix") {
    const FeatureMatrixT<double> x = random_matrix<double>(4, 20, 121);
    const FeatureMatrixT<double> r_mat = random_matrix<double>(4, 20, 123);
    auto loss = [&](const FeatureMatrixT<double>& input) {
        BatchNormStats<double> stats(4);
        const FeatureMatrixT<double> y = batch_norm_forward(input, stats, true);
        double acc = 0;
        for (std::size_t i = 0; i < y.values.size(); ++i) acc += y.values[i] * r_mat.values[i];
        return acc;
    };
    BatchNormStats<double> stats(4);
    BatchNormCache<double> cache;
    batch_norm_forward(x, stats, true, &cache);
    const FeatureMatrixT<double> dx = batch_norm_backward(r_mat, cache);
    const double h = 1e-3;
    Rng pick(125);
    for (int t = 0; t < 40; ++t) {
        const auto i = static_cast<std::size_t>(
            pick.uniform_int(0, static_cast<std::int64_t>(x.values.size()) - 1));
        FeatureMatrixT<double> xp = x, xm = x;
        xp.values[i] += h;
        xm.values[i] -= h;
        const double fd = (loss(xp) - loss(xm)) / (2 * h);
        CHECK(std::abs(fd - dx.values[i]) /
                  std::max({std::abs(fd), std::abs(dx.values[i]), 1e-4}) <=
              1e-4);
    }
}

TEST_CASE("batch norm: inference uses running statistics") {
    BatchNormStats<float> stats(1);
    FeatureMatrix x(1, 4);
    for (std::int64_t j = 0; j < 4; ++j) x.at(0, j) = static_cast<float>(j * 2);
    batch_norm_forward(x, stats, true);
    CHECK(stats.running_mean[0] != 0.0f);
    const float mean_after = stats.running_mean[0];
    const FeatureMatrix y = batch_norm_forward(x, stats, false);
    CHECK(stats.running_mean[0] == mean_after);  // inference does not update
    CHECK(y.all_finite());
}

TEST_CASE("scale applies per-channel gamma and beta; backward sums correctly") {
    const FeatureMatrix x = random_matrix<float>(3, 10, 131);
    const std::vector<float> gamma = {2.0f, -1.0f, 0.5f};
    const std::vector<float> beta = {0.25f, 0.0f, -0.75f};
    const FeatureMatrix y = scale_forward(x, gamma, beta);
    for (std::int64_t r = 0; r < 3; ++r)
        for (std::int64_t j = 0; j < 10; ++j)
            CHECK(y.at(r, j) == doctest::Approx(gamma[static_cast<std::size_t>(r)] * x.at(r, j) +
                                                beta[static_cast<std::size_t>(r)]));
    const FeatureMatrix dy = random_matrix<float>(3, 10, 133);
    const ScaleGradients<float> grads = scale_backward(dy, x, gamma);
    for (std::int64_t r = 0; r < 3; ++r) {
        double dg = 0, db = 0;
        for (std::int64_t j = 0; j < 10; ++j) {
            dg += dy.at(r, j) * x.at(r, j);
            db += dy.at(r, j);
        }
        CHECK(grads.gamma[static_cast<std::size_t>(r)] == doctest::Approx(dg).epsilon(1e-5));
        CHECK(grads.beta[static_cast<std::size_t>(r)] == doctest::Approx(db).epsilon(1e-5));
        for (std::int64_t j = 0; j < 10; ++j)
            CHECK(grads.input.at(r, j) ==
                  doctest::Approx(gamma[static_cast<std::size_t>(r)] * dy.at(r, j)));
    }
}

TEST_CASE("relu clamps negatives; backward masks by the forward sign") {
    FeatureMatrix x(1, 2);
    x.at(0, 0) = -1.0f;
    x.at(0, 1) = 2.0f;
    const FeatureMatrix y = relu_forward(x);
    CHECK(y.at(0, 0) == 0.0f);
    CHECK(y.at(0, 1) == 2.0f);
    FeatureMatrix dy(1, 2);
    dy.at(0, 0) = 5.0f;
    dy.at(0, 1) = 7.0f;
    const FeatureMatrix dx = relu_backward(dy, y);
    CHECK(dx.at(0, 0) == 0.0f);
    CHECK(dx.at(0, 1) == 7.0f);
}

TEST_CASE("dropout: seeded mask, inverted scaling, identity at inference") {
    const FeatureMatrix x = random_matrix<float>(8, 50, 141, 0.5f, 1.5f);
    DropoutMask mask_a, mask_b;
    const FeatureMatrix a = dropout_forward(x, 0.5f, 9, true, &mask_a);
    const FeatureMatrix b = dropout_forward(x, 0.5f, 9, true, &mask_b);
    CHECK(a == b);
    CHECK(mask_a.keep == mask_b.keep);
    std::int64_t kept = 0;
    for (std::size_t i = 0; i < mask_a.keep.size(); ++i) {
        if (mask_a.keep[i]) {
            CHECK(a.values[i] == doctest::Approx(x.values[i] * 2.0f));
            ++kept;
        } else {
            CHECK(a.values[i] == 0.0f);
        }
    }
    const double keep_rate = static_cast<double>(kept) / static_cast<double>(mask_a.keep.size());
    CHECK(keep_rate > 0.35);
    CHECK(keep_rate < 0.65);
    CHECK(dropout_forward(x, 0.5f, 9, false) == x);  // inference mode

    const FeatureMatrix dy = random_matrix<float>(8, 50, 143);
    const FeatureMatrix dx = dropout_backward(dy, mask_a, 0.5f);
    for (std::size_t i = 0; i < dx.values.size(); ++i)
        CHECK(dx.values[i] == (mask_a.keep[i] ? dy.values[i] * 2.0f : 0.0f));
}

TEST_CASE("empty-voxel neutrality: embedding in a larger domain changes nothing") {
    const SparseVoxelSet base = random_sparse_set(16, 120, 151);
    // same occupancy translated by +8 into a 32^3 domain
    std::vector<Coord> shifted;
    for (const Coord& p : base.voxels) shifted.push_back({p[0] + 8, p[1] + 8, p[2] + 8});
    const SparseVoxelSet moved = make_sparse_set(3, 32, shifted, base.features);

    const SuperPsh small_s = build_super({{build_psh(base)}});
    const SuperPsh big_s = build_super({{build_psh(moved)}});
    const ConvSpec spec{3, 1, 0, 3, 4};
    const KernelWeights w{random_matrix<float>(4, 3 * 27, 153)};
    const FeatureMatrix small_out =
        conv_forward(small_s, convert_matrix<float>(small_s.data), small_s, w, spec);
    const FeatureMatrix big_out =
        conv_forward(big_s, convert_matrix<float>(big_s.data), big_s, w, spec);

    // translation preserves the canonical voxel order, so columns line up
    REQUIRE(small_out.cols == big_out.cols);
    CHECK(small_out == big_out);
}

TEST_CASE("thread count does not change any op result") {
    const OpFixture fx = make_fixture(2, 16, 161);
    const ConvSpec conv_spec{3, 1, 0, 3, 4};
    const ConvSpec pool_spec{2, 2, 0, 3, 3};
    const KernelWeights w{random_matrix<float>(4, 3 * 27, 163)};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    const FeatureMatrix dout = random_matrix<float>(4, fx.fine.total_columns(), 165);

    auto run_all = [&] {
        const FeatureMatrix cols = hash2col(fx.fine, data, fx.fine, conv_spec);
        const FeatureMatrix out = matmul(w.w, cols);
        const ConvGradients<float> grads =
            conv_backward(dout, w, cols, fx.fine, fx.fine, conv_spec);
        const MaxPoolResult<float> mp = max_pool(fx.fine, data, fx.coarse, pool_spec);
        const FeatureMatrix restored =
            max_unpool(mp.output, mp.switches, fx.fine, fx.coarse, pool_spec);
        return std::tuple{out, grads.weights, grads.input, mp.output, restored};
    };
    set_thread_override(1);
    const auto serial = run_all();
    set_thread_override(4);
    const auto parallel = run_all();
    set_thread_override(0);
    CHECK(std::get<0>(serial) == std::get<0>(parallel));
    CHECK(std::get<1>(serial) == std::get<1>(parallel));
    CHECK(std::get<2>(serial) == std::get<2>(parallel));
    CHECK(std::get<3>(serial) == std::get<3>(parallel));
    CHECK(std::get<4>(serial) == std::get<4>(parallel));
}

TEST_CASE("shape mismatches are rejected") {
    const OpFixture fx = make_fixture(1, 16, 171);
    const ConvSpec spec{3, 1, 0, 3, 4};
    const KernelWeights bad{random_matrix<float>(4, 3 * 27 + 1, 173)};
    const FeatureMatrix data = convert_matrix<float>(fx.fine.data);
    CHECK_THROWS_AS(conv_forward(fx.fine, data, fx.fine, bad, spec), std::invalid_argument);
    const FeatureMatrix bad_cols(5, fx.fine.total_columns());
    CHECK_THROWS_AS(col2hash(bad_cols, fx.fine, fx.fine, spec), std::invalid_argument);
    const ConvSpec even{4, 1, 0, 3, 3};  // even kernel at stride 1
    CHECK_THROWS_AS(hash2col(fx.fine, data, fx.fine, even), std::invalid_argument);
}
