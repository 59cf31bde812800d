#pragma once

#include <cstdint>
#include <vector>

#include "hashconv/cnn_ops.hpp"
#include "hashconv/psh_batch.hpp"
#include "hashconv/voxel.hpp"

// Brute-force dense-grid reference implementations, used only by tests and
// validation commands. Everything here is written as literal nested loops
// with no shared code with the hashed path, and is capped at resolution 32.
namespace hashconv::oracle {

inline constexpr std::int32_t kMaxOracleResolution = 32;

template <typename T>
struct DenseGridT {
    int dim = 3;
    std::int32_t resolution = 0;
    std::int64_t channels = 0;
    std::vector<T> values;              // channels * resolution^dim, zero where empty
    std::vector<std::uint8_t> occupied;  // resolution^dim

    std::int64_t cells() const { return ipow(resolution, dim); }
    T& at(std::int64_t c, const Coord& p) {
        return values[static_cast<std::size_t>(c * cells() + flatten(p, resolution, dim))];
    }
    const T& at(std::int64_t c, const Coord& p) const {
        return values[static_cast<std::size_t>(c * cells() + flatten(p, resolution, dim))];
    }
    bool is_occupied(const Coord& p) const {
        return occupied[static_cast<std::size_t>(flatten(p, resolution, dim))] != 0;
    }
};
using DenseGrid = DenseGridT<float>;

DenseGrid densify(const SparseVoxelSet& s);

// One model's slice of a batch, with the given data array.
template <typename T>
DenseGridT<T> densify(const SuperPsh& super, int model, const FeatureMatrixT<T>& data);

SparseVoxelSet sparsify(const DenseGrid& grid);

// Columns for every dense output cell in flat (z,y,x) order; row layout
// matches hash2col (channel-major, field x fastest).
template <typename T>
FeatureMatrixT<T> im2col(const DenseGridT<T>& grid, const ConvSpec& spec,
                         std::int32_t out_resolution);

template <typename T>
DenseGridT<T> conv3d(const DenseGridT<T>& grid, const KernelWeightsT<T>& weights,
                     const ConvSpec& spec, std::int32_t out_resolution);

template <typename T>
struct DensePool {
    DenseGridT<T> output;
    std::vector<std::int32_t> switches;  // channels * out cells, -1 for all-empty fields
};

// Max over *occupied* cells in the window (the sparse op never sees empty
// voxels); average divides the zero-filled window sum by F^dim.
template <typename T>
DensePool<T> max_pool(const DenseGridT<T>& grid, const ConvSpec& spec,
                      std::int32_t out_resolution);
template <typename T>
DenseGridT<T> avg_pool(const DenseGridT<T>& grid, const ConvSpec& spec,
                       std::int32_t out_resolution);

template <typename T>
DenseGridT<T> max_unpool(const DenseGridT<T>& coarse, const std::vector<std::int32_t>& switches,
                         const ConvSpec& spec, std::int32_t fine_resolution);
// Present field voxels are read off the fine occupancy grid.
template <typename T>
DenseGridT<T> avg_unpool(const DenseGridT<T>& coarse, const DenseGridT<T>& fine_occupancy,
                         const ConvSpec& spec);

template <typename T>
DenseGridT<T> transposed_conv(const DenseGridT<T>& coarse, const KernelWeightsT<T>& weights,
                              const ConvSpec& spec, std::int32_t fine_resolution);

}  // namespace hashconv::oracle
