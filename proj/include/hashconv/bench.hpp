#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hashconv/voxel.hpp"

namespace hashconv {

// One memory-benchmark measurement at resolution N.
struct BenchRow {
    std::int32_t resolution = 0;   // N
    std::int64_t voxels = 0;       // n
    std::int64_t hash_slots = 0;   // m = m_bar^3
    std::int64_t offset_slots = 0; // r = r_bar^3
    std::int64_t octants = 0;      // OCNN-style leaf-octant estimate
    std::int64_t bytes_hash = 0;
    std::int64_t bytes_offsets = 0;
    std::int64_t bytes_tags = 0;
    std::int64_t bytes_data = 0;
};

// Analytic sphere occupancy: cell occupied iff its cube intersects the
// sphere of radius 0.4 (in unit-domain coordinates) centered in the domain.
// "shell" tests cell centers against a half-diagonal-thick band instead.
SparseVoxelSet sphere_voxels(std::int32_t resolution, bool shell = false);

// Leaf-octant estimate at resolution N: every surface-intersecting parent
// cell at N/2 spawns its 8 children.
std::int64_t octant_estimate(const SparseVoxelSet& parents);

enum class BenchShape { Sphere, Shell, File };

struct BenchOptions {
    BenchShape shape = BenchShape::Sphere;
    std::vector<std::int32_t> resolutions = {32, 64, 128, 256, 512};
    std::string model_path;  // for BenchShape::File
    std::uint64_t seed = 0;
    float sample_density = 4.0f;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double slope_voxels = 0.0;      // log n vs log N
    double slope_slack = 0.0;       // log (m - n) vs log N
    double slope_octants = 0.0;     // log octants vs log N
};

BenchResult run_memory_bench(const BenchOptions& options);

// Fixed header: N,n,m,r,octants,bytes_H,bytes_Phi,bytes_T,bytes_D
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace hashconv
