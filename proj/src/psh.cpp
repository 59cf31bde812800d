#include "hashconv/psh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hashconv/rng.hpp"

namespace hashconv {

namespace {

struct Offset {
    std::uint8_t v[3] = {0, 0, 0};
    bool operator==(const Offset&) const = default;
};

std::int64_t slot_with_offset(const Coord& p, const Offset& o, std::int32_t m_bar, int dim) {
    Coord s{0, 0, 0};
    for (int a = 0; a < dim; ++a) s[a] = (p[a] % m_bar + o.v[a]) % m_bar;
    return flatten(s, m_bar, dim);
}

std::int64_t gcd64(std::int64_t a, std::int64_t b) { return std::gcd(a, b); }

// One greedy construction attempt for a fixed (m_bar, r_bar). Offset cells
// are processed by decreasing load (ties: ascending cell index); candidate
// offsets are a seeded random sequence of previously accepted offsets, then
// an exhaustive scan.
bool try_build(const SparseVoxelSet& s, std::int32_t m_bar, std::int32_t r_bar,
               std::uint64_t seed, std::vector<std::int32_t>& hash,
               std::vector<std::uint8_t>& offsets, std::vector<std::uint16_t>& tags) {
    const int dim = s.dim;
    const std::int64_t slots = ipow(m_bar, dim);
    const std::int64_t cells = ipow(r_bar, dim);

    std::vector<std::vector<std::int32_t>> bucket(static_cast<std::size_t>(cells));
    for (std::size_t i = 0; i < s.voxels.size(); ++i) {
        const std::int64_t cell = flatten(h1(s.voxels[i], r_bar), r_bar, dim);
        bucket[static_cast<std::size_t>(cell)].push_back(static_cast<std::int32_t>(i));
    }

    std::vector<std::int64_t> cell_order;
    cell_order.reserve(static_cast<std::size_t>(cells));
    for (std::int64_t c = 0; c < cells; ++c)
        if (!bucket[static_cast<std::size_t>(c)].empty()) cell_order.push_back(c);
    std::stable_sort(cell_order.begin(), cell_order.end(), [&](std::int64_t a, std::int64_t b) {
        return bucket[static_cast<std::size_t>(a)].size() > bucket[static_cast<std::size_t>(b)].size();
    });

    hash.assign(static_cast<std::size_t>(slots), -1);
    tags.assign(static_cast<std::size_t>(slots) * static_cast<std::size_t>(dim), kRedundantTag);
    offsets.assign(static_cast<std::size_t>(cells) * static_cast<std::size_t>(dim), 0);

    Rng rng(seed);
    std::vector<Offset> used;       // accepted offsets in first-use order
    std::vector<std::int32_t> perm;  // evolving index permutation over `used`
    // At most this many random reuse probes per cell before falling back to
    // the exhaustive scan; keeps heavy instances near-linear.
    constexpr int kMaxReuseProbes = 64;

    const std::int32_t scan_limit = std::min<std::int32_t>(m_bar, 256);

    auto fits = [&](const std::vector<std::int32_t>& voxel_ids, const Offset& o) {
        for (const std::int32_t id : voxel_ids) {
            if (hash[static_cast<std::size_t>(
                    slot_with_offset(s.voxels[static_cast<std::size_t>(id)], o, m_bar, dim))] != -1)
                return false;
        }
        // offsets inside one cell can still collide with each other
        if (voxel_ids.size() > 1) {
            for (std::size_t i = 0; i < voxel_ids.size(); ++i)
                for (std::size_t j = i + 1; j < voxel_ids.size(); ++j)
                    if (slot_with_offset(s.voxels[static_cast<std::size_t>(voxel_ids[i])], o, m_bar,
                                         dim) ==
                        slot_with_offset(s.voxels[static_cast<std::size_t>(voxel_ids[j])], o, m_bar,
                                         dim))
                        return false;
        }
        return true;
    };

    for (const std::int64_t cell : cell_order) {
        const auto& ids = bucket[static_cast<std::size_t>(cell)];
        bool placed = false;
        Offset chosen;

        const int probes = static_cast<int>(
            std::min<std::size_t>(used.size(), static_cast<std::size_t>(kMaxReuseProbes)));
        for (int t = 0; t < probes && !placed; ++t) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(t, static_cast<std::int64_t>(used.size()) - 1));
            std::swap(perm[static_cast<std::size_t>(t)], perm[j]);
            const Offset& cand = used[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])];
            if (fits(ids, cand)) {
                chosen = cand;
                placed = true;
            }
        }
        if (!placed) {
            // Exhaustive scan. Offsets act modulo m_bar, so scanning
            // [0, min(m_bar,256)) per axis visits every distinct candidate in
            // the same order as the full [0,255] scan would accept them.
            Offset o;
            for (std::int32_t oz = 0; oz < (dim == 3 ? scan_limit : 1) && !placed; ++oz) {
                o.v[2] = static_cast<std::uint8_t>(oz);
                for (std::int32_t oy = 0; oy < scan_limit && !placed; ++oy) {
                    o.v[1] = static_cast<std::uint8_t>(oy);
                    for (std::int32_t ox = 0; ox < scan_limit && !placed; ++ox) {
                        o.v[0] = static_cast<std::uint8_t>(ox);
                        if (fits(ids, o)) {
                            chosen = o;
                            placed = true;
                        }
                    }
                }
            }
        }
        if (!placed) return false;

        for (int a = 0; a < dim; ++a)
            offsets[static_cast<std::size_t>(cell * dim + a)] = chosen.v[a];
        for (const std::int32_t id : ids) {
            const std::int64_t slot =
                slot_with_offset(s.voxels[static_cast<std::size_t>(id)], chosen, m_bar, dim);
            hash[static_cast<std::size_t>(slot)] = id;
            for (int a = 0; a < dim; ++a)
                tags[static_cast<std::size_t>(slot * dim + a)] =
                    static_cast<std::uint16_t>(s.voxels[static_cast<std::size_t>(id)][a]);
        }
        if (std::find(used.begin(), used.end(), chosen) == used.end()) {
            used.push_back(chosen);
            perm.push_back(static_cast<std::int32_t>(perm.size()));
        }
    }
    return true;
}

void fill_from_offsets(const SparseVoxelSet& s, std::int32_t m_bar, std::int32_t r_bar,
                       const std::vector<std::uint8_t>& offsets, std::vector<std::int32_t>& hash,
                       std::vector<std::uint16_t>& tags) {
    const int dim = s.dim;
    const std::int64_t slots = ipow(m_bar, dim);
    hash.assign(static_cast<std::size_t>(slots), -1);
    tags.assign(static_cast<std::size_t>(slots) * static_cast<std::size_t>(dim), kRedundantTag);
    for (std::size_t i = 0; i < s.voxels.size(); ++i) {
        const Coord& p = s.voxels[i];
        const std::int64_t cell = flatten(h1(p, r_bar), r_bar, dim);
        Offset o;
        for (int a = 0; a < dim; ++a)
            o.v[a] = offsets[static_cast<std::size_t>(cell * dim + a)];
        const std::int64_t slot = slot_with_offset(p, o, m_bar, dim);
        if (hash[static_cast<std::size_t>(slot)] != -1)
            throw std::runtime_error("injected offset table is not perfect for this set");
        hash[static_cast<std::size_t>(slot)] = static_cast<std::int32_t>(i);
        for (int a = 0; a < dim; ++a)
            tags[static_cast<std::size_t>(slot * dim + a)] = static_cast<std::uint16_t>(p[a]);
    }
}

}  // namespace

std::int32_t minimal_hash_dim(std::int64_t n, int dim) {
    auto m = static_cast<std::int32_t>(std::floor(std::pow(static_cast<double>(n), 1.0 / dim)));
    m = std::max(m - 2, 1);
    while (ipow(m, dim) <= n) ++m;
    return m;
}

std::int32_t initial_offset_dim(std::int64_t n, int dim) {
    const double target = static_cast<double>(n) / (2.0 * dim);
    auto r = static_cast<std::int32_t>(std::floor(std::pow(target, 1.0 / dim)));
    r = std::max(r - 2, 1);
    while (ipow(r, dim) < static_cast<std::int64_t>(std::ceil(target))) ++r;
    return std::max(r, 1);
}

PshLevel build_psh(const SparseVoxelSet& s, const PshBuildOptions& options) {
    if (s.voxels.empty()) throw std::invalid_argument("empty input");
    if (s.resolution >= 65536 && !options.allow_tag_ambiguity)
        throw std::invalid_argument(
            "resolution 65536 conflicts with the redundant-slot tag; pass allow_tag_ambiguity");
    const std::int64_t n = s.count();

    PshLevel psh;
    psh.dim = s.dim;
    psh.resolution = s.resolution;
    psh.n = n;
    psh.hash_dim = minimal_hash_dim(n, s.dim);
    psh.data = s.features;

    if (options.injected_offsets) {
        psh.offset_dim = options.injected_offset_dim;
        if (psh.offset_dim <= 0) throw std::invalid_argument("injected offsets need offset_dim");
        if (options.injected_offsets->size() !=
            static_cast<std::size_t>(ipow(psh.offset_dim, s.dim) * s.dim))
            throw std::invalid_argument("injected offset table has the wrong size");
        psh.offsets = *options.injected_offsets;
        fill_from_offsets(s, psh.hash_dim, psh.offset_dim, psh.offsets, psh.hash, psh.tags);
        return psh;
    }

    std::int32_t r_bar = initial_offset_dim(n, s.dim);
    int attempt = 0;
    while (true) {
        // Coprimality helps the greedy search; once r_bar reaches the domain
        // resolution h1 is injective and the condition is moot.
        if (r_bar < s.resolution) {
            while (gcd64(psh.hash_dim, r_bar) != 1 && r_bar < s.resolution) ++r_bar;
        }
        r_bar = std::min(r_bar, s.resolution);
        if (ipow(r_bar, s.dim) * s.dim > (std::int64_t{1} << 31))
            throw std::runtime_error("hash construction diverged");
        if (try_build(s, psh.hash_dim, r_bar, mix_seed(options.seed, attempt), psh.hash,
                      psh.offsets, psh.tags)) {
            psh.offset_dim = r_bar;
            return psh;
        }
        if (r_bar >= s.resolution) throw std::runtime_error("hash construction diverged");
        // grow the offset table by cbrt(2) per failed attempt
        const auto grown = static_cast<std::int32_t>(
            std::ceil(static_cast<double>(r_bar) * std::cbrt(2.0)));
        r_bar = std::max(grown, r_bar + 1);
        ++attempt;
    }
}

std::int64_t hash_slot(const PshLevel& psh, const Coord& p) {
    const std::int64_t cell = flatten(h1(p, psh.offset_dim), psh.offset_dim, psh.dim);
    Coord s{0, 0, 0};
    for (int a = 0; a < psh.dim; ++a) {
        const auto off = psh.offsets[static_cast<std::size_t>(cell * psh.dim + a)];
        s[a] = (p[a] % psh.hash_dim + off) % psh.hash_dim;
    }
    return flatten(s, psh.hash_dim, psh.dim);
}

std::optional<std::int32_t> query(const PshLevel& psh, const Coord& p) {
    const std::int64_t slot = hash_slot(psh, p);
    const std::int32_t idx = psh.hash[static_cast<std::size_t>(slot)];
    if (idx < 0) return std::nullopt;
    for (int a = 0; a < psh.dim; ++a)
        if (psh.tags[static_cast<std::size_t>(slot * psh.dim + a)] !=
            static_cast<std::uint16_t>(p[a]))
            return std::nullopt;
    return idx;
}

std::vector<std::string> validate(const PshLevel& psh, const SparseVoxelSet& s) {
    std::vector<std::string> violations;
    auto fail = [&](std::string msg) { violations.push_back(std::move(msg)); };

    const std::int64_t n = psh.n;
    if (n != s.count()) fail("n does not match the source voxel count");
    if (ipow(psh.hash_dim, psh.dim) <= n) fail("hash table is not larger than n");
    if (psh.hash_dim > 1 && ipow(psh.hash_dim - 1, psh.dim) > n)
        fail("hash dimension is not minimal");
    if (psh.hash.size() != static_cast<std::size_t>(psh.hash_slots()))
        fail("hash array size mismatch");
    if (psh.tags.size() != static_cast<std::size_t>(psh.hash_slots() * psh.dim))
        fail("tag array size mismatch");
    if (psh.offsets.size() != static_cast<std::size_t>(psh.offset_cells() * psh.dim))
        fail("offset array size mismatch");
    if (psh.data.cols != n) fail("data column count mismatch");
    if (!psh.data.all_finite()) fail("data array contains non-finite values");

    std::vector<std::uint8_t> seen(static_cast<std::size_t>(std::max<std::int64_t>(n, 1)), 0);
    std::int64_t occupied = 0;
    for (std::size_t i = 0; i < psh.hash.size(); ++i) {
        const std::int32_t idx = psh.hash[i];
        if (idx == -1) {
            for (int a = 0; a < psh.dim; ++a)
                if (psh.tags[i * static_cast<std::size_t>(psh.dim) + static_cast<std::size_t>(a)] !=
                    kRedundantTag) {
                    fail("redundant slot " + std::to_string(i) + " lacks the sentinel tag");
                    break;
                }
            continue;
        }
        ++occupied;
        if (idx < 0 || idx >= n) {
            fail("hash slot " + std::to_string(i) + " holds out-of-range index");
            continue;
        }
        if (seen[static_cast<std::size_t>(idx)]++)
            fail("data index " + std::to_string(idx) + " appears in more than one slot");
        for (int a = 0; a < psh.dim; ++a) {
            const auto tag =
                psh.tags[i * static_cast<std::size_t>(psh.dim) + static_cast<std::size_t>(a)];
            if (tag >= psh.resolution)
                fail("tag component out of range at slot " + std::to_string(i));
        }
    }
    if (occupied != n) fail("hash table does not hold exactly n occupied slots");

    for (std::size_t i = 0; i < s.voxels.size(); ++i) {
        const Coord& p = s.voxels[i];
        const std::int64_t slot = hash_slot(psh, p);
        const std::int32_t idx = psh.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) {
            fail("occupied voxel hashes to a redundant slot (perfectness broken)");
            continue;
        }
        bool tag_ok = true;
        for (int a = 0; a < psh.dim; ++a)
            tag_ok &= psh.tags[static_cast<std::size_t>(slot * psh.dim + a)] ==
                      static_cast<std::uint16_t>(p[a]);
        if (!tag_ok) fail("position tag mismatch for an occupied voxel");
        if (idx != static_cast<std::int32_t>(i))
            fail("data index does not match canonical voxel order");
    }
    return violations;
}

SparseVoxelSet to_sparse(const PshLevel& psh) {
    std::vector<Coord> coords(static_cast<std::size_t>(psh.n));
    FeatureMatrix features(psh.data.rows, psh.n);
    for (std::size_t slot = 0; slot < psh.hash.size(); ++slot) {
        const std::int32_t idx = psh.hash[slot];
        if (idx < 0) continue;
        Coord p{0, 0, 0};
        for (int a = 0; a < psh.dim; ++a)
            p[a] = psh.tags[slot * static_cast<std::size_t>(psh.dim) + static_cast<std::size_t>(a)];
        coords[static_cast<std::size_t>(idx)] = p;
        for (std::int64_t r = 0; r < psh.data.rows; ++r)
            features.at(r, idx) = psh.data.at(r, idx);
    }
    return make_sparse_set(psh.dim, psh.resolution, std::move(coords), std::move(features));
}

}  // namespace hashconv
