#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hashconv/feature_matrix.hpp"
#include "hashconv/mesh.hpp"
#include "hashconv/types.hpp"

namespace hashconv {

// Occupied surface voxels of one model at one resolution, with per-voxel
// feature vectors (averaged unit normals). Voxels are kept sorted in (z,y,x)
// order so feature column k always belongs to voxels[k].
struct SparseVoxelSet {
    int dim = 3;
    std::int32_t resolution = 0;  // cells per axis, power of two in [4, 65536]
    int level = 0;                // resolution == 2^level
    std::vector<Coord> voxels;
    FeatureMatrix features;  // channels x |voxels|

    std::int64_t count() const { return static_cast<std::int64_t>(voxels.size()); }
    std::optional<std::int64_t> index_of(const Coord& p) const;
};

// Builds a canonical set from unordered (coordinate, feature) pairs;
// validates ranges and uniqueness.
SparseVoxelSet make_sparse_set(int dim, std::int32_t resolution,
                               std::vector<Coord> coords, FeatureMatrix features);

// Centers the model and uniformly scales it so every vertex fits in a sphere
// of radius 0.5; the axis-aligned unit bounding cube then contains the model
// under any rotation.
InputModel normalize_model(const InputModel& model);

struct VoxelizeParams {
    std::int32_t resolution = 0;
    float samples_per_area = 4.0f;  // sample density per voxel-face area
    bool dilate = false;            // displace samples by a half voxel along the normal
    std::uint64_t seed = 0;
};

struct VoxelizeStats {
    std::int64_t degenerate_triangles = 0;
    std::int64_t samples = 0;
};

// Surface voxelization of a normalized model: a voxel is occupied iff at
// least one sample lands in it; its feature is the normalized mean of the
// sample normals.
SparseVoxelSet voxelize(const InputModel& model, const VoxelizeParams& params,
                        VoxelizeStats* stats = nullptr);

// Halves the resolution; parent occupied iff any child is. Requires
// resolution >= 8 so outputs never go below the minimum 4.
SparseVoxelSet coarsen(const SparseVoxelSet& s);

}  // namespace hashconv
