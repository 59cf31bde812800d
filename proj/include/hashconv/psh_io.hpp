#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hashconv/psh.hpp"

namespace hashconv {

// Little-endian ".psh" container:
//   magic "PSH1", u32 level_count, then per level (finest first):
//   u32 version=1, dim, resolution, n, hash_dim, offset_dim, channels;
//   H  as hash_dim^dim   i32
//   Phi as offset_dim^dim * dim  u8
//   T  as hash_dim^dim * dim     u16
//   D  as channels * n           f32 (row-major)
void write_psh_file(const std::string& path, const std::vector<PshLevel>& levels);
void write_psh_stream(std::ostream& out, const std::vector<PshLevel>& levels);

std::vector<PshLevel> read_psh_file(const std::string& path);
std::vector<PshLevel> read_psh_stream(std::istream& in);

// Exact on-disk size of one level block, header included (for the memory
// benchmark's byte accounting).
std::int64_t psh_level_bytes(const PshLevel& level);

}  // namespace hashconv
