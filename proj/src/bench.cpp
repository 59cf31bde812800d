#include "hashconv/bench.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "hashconv/mesh.hpp"
#include "hashconv/psh.hpp"
#include "hashconv/rng.hpp"
#include "hashconv/threading.hpp"

namespace hashconv {

namespace {

constexpr double kSphereRadius = 0.4;  // in unit-domain coordinates

// min/max distance from the domain center to the cell cube, in cell units
void cell_distance_range(const Coord& p, double center, double& lo, double& hi) {
    lo = hi = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d_lo = std::max({p[a] - center, center - (p[a] + 1.0), 0.0});
        const double d_hi = std::max(std::abs(p[a] - center), std::abs(p[a] + 1.0 - center));
        lo += d_lo * d_lo;
        hi += d_hi * d_hi;
    }
    lo = std::sqrt(lo);
    hi = std::sqrt(hi);
}

}  // namespace

SparseVoxelSet sphere_voxels(std::int32_t resolution, bool shell) {
    const double center = resolution / 2.0;
    const double radius = kSphereRadius * resolution;
    const double band = std::sqrt(3.0) / 2.0;  // half cell diagonal

    // per-z-slice collection keeps the scan parallel yet ordered
    std::vector<std::vector<Coord>> slices(static_cast<std::size_t>(resolution));
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int32_t z = 0; z < resolution; ++z) {
        auto& slice = slices[static_cast<std::size_t>(z)];
        for (std::int32_t y = 0; y < resolution; ++y)
            for (std::int32_t x = 0; x < resolution; ++x) {
                const Coord p{x, y, z};
                bool occupied;
                if (shell) {
                    double d = 0;
                    for (int a = 0; a < 3; ++a) {
                        const double c = p[a] + 0.5 - center;
                        d += c * c;
                    }
                    occupied = std::abs(std::sqrt(d) - radius) <= band;
                } else {
                    double lo, hi;
                    cell_distance_range(p, center, lo, hi);
                    occupied = lo <= radius && radius <= hi;
                }
                if (occupied) slice.push_back(p);
            }
    }

    std::vector<Coord> coords;
    for (const auto& slice : slices) coords.insert(coords.end(), slice.begin(), slice.end());
    FeatureMatrix features(3, static_cast<std::int64_t>(coords.size()));
    for (std::int64_t i = 0; i < features.cols; ++i) {
        const Coord& p = coords[static_cast<std::size_t>(i)];
        Vec3 n{static_cast<float>(p[0] + 0.5 - center), static_cast<float>(p[1] + 0.5 - center),
               static_cast<float>(p[2] + 0.5 - center)};
        n = normalized(n);
        features.at(0, i) = n.x;
        features.at(1, i) = n.y;
        features.at(2, i) = n.z;
    }
    return make_sparse_set(3, resolution, std::move(coords), std::move(features));
}

std::int64_t octant_estimate(const SparseVoxelSet& parents) { return 8 * parents.count(); }

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("slope fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(std::max(y[i], 1.0));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(x.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

BenchResult run_memory_bench(const BenchOptions& options) {
    BenchResult result;
    std::vector<double> ns, slacks, octs, res;

    InputModel model;
    if (options.shape == BenchShape::File) {
        model = normalize_model(load_model(options.model_path));
    }

    for (const std::int32_t n_res : options.resolutions) {
        SparseVoxelSet fine, parents;
        switch (options.shape) {
            case BenchShape::Sphere:
                fine = sphere_voxels(n_res, false);
                parents = sphere_voxels(n_res / 2, false);
                break;
            case BenchShape::Shell:
                fine = sphere_voxels(n_res, true);
                parents = sphere_voxels(n_res / 2, true);
                break;
            case BenchShape::File: {
                VoxelizeParams params;
                params.resolution = n_res;
                params.samples_per_area = options.sample_density;
                params.seed = options.seed;
                fine = voxelize(model, params);
                parents = coarsen(fine);
                break;
            }
        }

        PshBuildOptions build_opt;
        build_opt.seed = mix_seed(options.seed, static_cast<std::uint64_t>(n_res));
        const PshLevel psh = build_psh(fine, build_opt);

        BenchRow row;
        row.resolution = n_res;
        row.voxels = psh.n;
        row.hash_slots = psh.hash_slots();
        row.offset_slots = psh.offset_cells();
        row.octants = octant_estimate(parents);
        row.bytes_hash = row.hash_slots * 4;
        row.bytes_offsets = row.offset_slots * psh.dim;
        row.bytes_tags = row.hash_slots * psh.dim * 2;
        row.bytes_data = psh.data.rows * psh.n * 4;
        result.rows.push_back(row);

        res.push_back(n_res);
        ns.push_back(static_cast<double>(row.voxels));
        slacks.push_back(static_cast<double>(row.hash_slots - row.voxels));
        octs.push_back(static_cast<double>(row.octants));
    }
    result.slope_voxels = loglog_slope(res, ns);
    result.slope_slack = loglog_slope(res, slacks);
    result.slope_octants = loglog_slope(res, octs);
    return result;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "N,n,m,r,octants,bytes_H,bytes_Phi,bytes_T,bytes_D\n";
    for (const BenchRow& r : rows)
        out << r.resolution << ',' << r.voxels << ',' << r.hash_slots << ',' << r.offset_slots
            << ',' << r.octants << ',' << r.bytes_hash << ',' << r.bytes_offsets << ','
            << r.bytes_tags << ',' << r.bytes_data << '\n';
}

}  // namespace hashconv
