#include "hashconv/psh_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hashconv {

namespace {

static_assert(std::endian::native == std::endian::little,
              "the .psh container is little-endian; byte-swapping IO is not implemented");

constexpr char kMagic[4] = {'P', 'S', 'H', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("truncated .psh container");
    return v;
}

template <typename T>
void write_array(std::ostream& out, const std::vector<T>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_array(std::istream& in, std::vector<T>& v, std::size_t count) {
    v.resize(count);
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(count * sizeof(T))))
        throw std::runtime_error("truncated .psh container");
}

}  // namespace

void write_psh_stream(std::ostream& out, const std::vector<PshLevel>& levels) {
    if (levels.empty()) throw std::invalid_argument("no levels to write");
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(levels.size()));
    for (const PshLevel& l : levels) {
        write_u32(out, kVersion);
        write_u32(out, static_cast<std::uint32_t>(l.dim));
        write_u32(out, static_cast<std::uint32_t>(l.resolution));
        write_u32(out, static_cast<std::uint32_t>(l.n));
        write_u32(out, static_cast<std::uint32_t>(l.hash_dim));
        write_u32(out, static_cast<std::uint32_t>(l.offset_dim));
        write_u32(out, static_cast<std::uint32_t>(l.data.rows));
        write_array(out, l.hash);
        write_array(out, l.offsets);
        write_array(out, l.tags);
        write_array(out, l.data.values);
    }
    if (!out) throw std::runtime_error("failed writing .psh stream");
}

std::vector<PshLevel> read_psh_stream(std::istream& in) {
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a .psh container (bad magic)");
    const std::uint32_t count = read_u32(in);
    if (count == 0 || count > 32) throw std::runtime_error("unreasonable .psh level count");
    std::vector<PshLevel> levels(count);
    for (PshLevel& l : levels) {
        if (read_u32(in) != kVersion) throw std::runtime_error("unsupported .psh version");
        l.dim = static_cast<int>(read_u32(in));
        l.resolution = static_cast<std::int32_t>(read_u32(in));
        l.n = read_u32(in);
        l.hash_dim = static_cast<std::int32_t>(read_u32(in));
        l.offset_dim = static_cast<std::int32_t>(read_u32(in));
        const std::uint32_t channels = read_u32(in);
        if (l.dim != 2 && l.dim != 3) throw std::runtime_error("corrupt .psh: bad dim");
        if (l.hash_dim <= 0 || l.offset_dim <= 0 || l.n <= 0)
            throw std::runtime_error("corrupt .psh: bad table dims");
        read_array(in, l.hash, static_cast<std::size_t>(l.hash_slots()));
        read_array(in, l.offsets, static_cast<std::size_t>(l.offset_cells() * l.dim));
        read_array(in, l.tags, static_cast<std::size_t>(l.hash_slots() * l.dim));
        l.data = FeatureMatrix(channels, l.n);
        read_array(in, l.data.values, static_cast<std::size_t>(channels * l.n));
    }
    return levels;
}

void write_psh_file(const std::string& path, const std::vector<PshLevel>& levels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_psh_stream(out, levels);
}

std::vector<PshLevel> read_psh_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return read_psh_stream(in);
}

std::int64_t psh_level_bytes(const PshLevel& level) {
    return 7 * 4 + level.hash_slots() * 4 + level.offset_cells() * level.dim +
           level.hash_slots() * level.dim * 2 + level.data.rows * level.n * 4;
}

}  // namespace hashconv
