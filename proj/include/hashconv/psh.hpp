#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hashconv/feature_matrix.hpp"
#include "hashconv/types.hpp"
#include "hashconv/voxel.hpp"

namespace hashconv {

// Position tag stored in redundant hash slots. Valid coordinates stay below
// it because the default build refuses resolution 65536.
inline constexpr std::uint16_t kRedundantTag = 0xFFFF;

// Perfect spatial hash of one model at one resolution: hash table H (data
// indices, -1 marks redundant slots), offset table Phi, position tags T and
// the compact data array D.
struct PshLevel {
    int dim = 3;
    std::int32_t resolution = 0;
    std::int64_t n = 0;           // occupied voxel count
    std::int32_t hash_dim = 0;    // m_bar; H has hash_dim^dim slots
    std::int32_t offset_dim = 0;  // r_bar; Phi has offset_dim^dim cells

    std::vector<std::int32_t> hash;      // hash_dim^dim
    std::vector<std::uint8_t> offsets;   // offset_dim^dim * dim bytes
    std::vector<std::uint16_t> tags;     // hash_dim^dim * dim
    FeatureMatrix data;                  // channels x n

    std::int64_t hash_slots() const { return ipow(hash_dim, dim); }
    std::int64_t offset_cells() const { return ipow(offset_dim, dim); }
};

// p mod m_bar / p mod r_bar, componentwise.
inline Coord h0(const Coord& p, std::int32_t m_bar) {
    return {p[0] % m_bar, p[1] % m_bar, p[2] % m_bar};
}
inline Coord h1(const Coord& p, std::int32_t r_bar) {
    return {p[0] % r_bar, p[1] % r_bar, p[2] % r_bar};
}

// Smallest m_bar with m_bar^dim > n.
std::int32_t minimal_hash_dim(std::int64_t n, int dim);
// Smallest r_bar with r_bar^dim >= n/(2*dim), before coprimality adjustment.
std::int32_t initial_offset_dim(std::int64_t n, int dim);

struct PshBuildOptions {
    std::uint64_t seed = 0;
    // Resolution 65536 would collide with the redundant-slot tag; refuse it
    // unless the caller accepts the ambiguity at coordinate 65535.
    bool allow_tag_ambiguity = false;
    // Test hook: use this offset table verbatim (offset_dim^dim * dim bytes)
    // instead of searching. Construction fails if it is not perfect.
    const std::vector<std::uint8_t>* injected_offsets = nullptr;
    std::int32_t injected_offset_dim = 0;
};

// Greedy offset-table construction; deterministic for a given (set, seed).
// Throws std::runtime_error("hash construction diverged") if the offset
// table would outgrow the hash table.
PshLevel build_psh(const SparseVoxelSet& s, const PshBuildOptions& options = {});

// Hash slot of p under Eq-1 style addressing (flattened).
std::int64_t hash_slot(const PshLevel& psh, const Coord& p);

// Data index of p, or empty if p is off the model. p must lie in
// [0, resolution)^dim.
std::optional<std::int32_t> query(const PshLevel& psh, const Coord& p);

// Checks every structural invariant plus perfectness/bijectivity against the
// source set; returns human-readable violations (empty means valid).
std::vector<std::string> validate(const PshLevel& psh, const SparseVoxelSet& s);

// Reconstructs the sparse set (tags of occupied slots + data columns).
SparseVoxelSet to_sparse(const PshLevel& psh);

}  // namespace hashconv
