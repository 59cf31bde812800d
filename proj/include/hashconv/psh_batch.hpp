#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hashconv/psh.hpp"

namespace hashconv {

// Concatenated per-model PSH tables of one mini-batch at one level, with
// accumulated index arrays locating each model's segment. Model ordinals are
// 1-based throughout.
struct SuperPsh {
    int dim = 3;
    std::int32_t resolution = 0;
    int batch = 0;

    std::vector<std::int32_t> hash;     // H*, length hash_acc[batch]
    std::vector<std::uint8_t> offsets;  // Phi*, length offset_acc[batch] * dim
    std::vector<std::uint16_t> tags;    // T*, length hash_acc[batch] * dim
    std::vector<std::int32_t> model_of_slot;  // V*, 1-based model ordinal per H* slot

    // Accumulated sizes with a leading zero (length batch+1): hash slots
    // (M*), offset cells (R*) and data columns (N*).
    std::vector<std::int64_t> hash_acc;
    std::vector<std::int64_t> offset_acc;
    std::vector<std::int64_t> data_acc;

    std::vector<std::int32_t> hash_dims;    // m_bar per model
    std::vector<std::int32_t> offset_dims;  // r_bar per model

    FeatureMatrix data;  // D*, channels x data_acc[batch]

    std::int64_t total_slots() const { return hash_acc[static_cast<std::size_t>(batch)]; }
    std::int64_t total_columns() const { return data_acc[static_cast<std::size_t>(batch)]; }
};

// All levels must share dim, resolution and channel count.
SuperPsh build_super(std::span<const PshLevel> levels);

// Global data index of voxel p on model v (1-based), or empty if p is not
// occupied on that model.
std::optional<std::int64_t> locate(const SuperPsh& super, int model, const Coord& p);

// Inverse of build_super; reproduces the inputs bit-exactly.
std::vector<PshLevel> split_super(const SuperPsh& super);

}  // namespace hashconv
