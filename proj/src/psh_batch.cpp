#include "hashconv/psh_batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace hashconv {

SuperPsh build_super(std::span<const PshLevel> levels) {
    if (levels.empty()) throw std::invalid_argument("batch must contain at least one model");
    const PshLevel& first = levels.front();
    for (const PshLevel& l : levels) {
        if (l.dim != first.dim || l.resolution != first.resolution)
            throw std::invalid_argument("mixed resolutions in one batch");
        if (l.data.rows != first.data.rows)
            throw std::invalid_argument("mixed channel counts in one batch");
    }

    SuperPsh super;
    super.dim = first.dim;
    super.resolution = first.resolution;
    super.batch = static_cast<int>(levels.size());
    super.hash_acc.assign(levels.size() + 1, 0);
    super.offset_acc.assign(levels.size() + 1, 0);
    super.data_acc.assign(levels.size() + 1, 0);

    for (std::size_t k = 0; k < levels.size(); ++k) {
        super.hash_acc[k + 1] = super.hash_acc[k] + levels[k].hash_slots();
        super.offset_acc[k + 1] = super.offset_acc[k] + levels[k].offset_cells();
        super.data_acc[k + 1] = super.data_acc[k] + levels[k].n;
        super.hash_dims.push_back(levels[k].hash_dim);
        super.offset_dims.push_back(levels[k].offset_dim);
    }

    super.hash.reserve(static_cast<std::size_t>(super.hash_acc.back()));
    super.tags.reserve(static_cast<std::size_t>(super.hash_acc.back() * super.dim));
    super.offsets.reserve(static_cast<std::size_t>(super.offset_acc.back() * super.dim));
    super.model_of_slot.reserve(static_cast<std::size_t>(super.hash_acc.back()));
    super.data = FeatureMatrix(first.data.rows, super.data_acc.back());

    for (std::size_t k = 0; k < levels.size(); ++k) {
        const PshLevel& l = levels[k];
        super.hash.insert(super.hash.end(), l.hash.begin(), l.hash.end());
        super.tags.insert(super.tags.end(), l.tags.begin(), l.tags.end());
        super.offsets.insert(super.offsets.end(), l.offsets.begin(), l.offsets.end());
        super.model_of_slot.insert(super.model_of_slot.end(), static_cast<std::size_t>(l.hash_slots()),
                                   static_cast<std::int32_t>(k + 1));
        for (std::int64_t r = 0; r < l.data.rows; ++r) {
            const float* src = l.data.row_ptr(r);
            float* dst = super.data.row_ptr(r) + super.data_acc[k];
            std::copy(src, src + l.n, dst);
        }
    }
    return super;
}

std::optional<std::int64_t> locate(const SuperPsh& super, int model, const Coord& p) {
    const auto v = static_cast<std::size_t>(model - 1);
    const std::int32_t m_bar = super.hash_dims[v];
    const std::int32_t r_bar = super.offset_dims[v];

    // i_Phi* = R*[v-1] + h1(p); i_H* = M*[v-1] + (h0(p) + Phi*[i_Phi*] mod m_bar)
    const std::int64_t cell =
        super.offset_acc[v] + flatten(h1(p, r_bar), r_bar, super.dim);
    Coord s{0, 0, 0};
    for (int a = 0; a < super.dim; ++a) {
        const auto off = super.offsets[static_cast<std::size_t>(cell * super.dim + a)];
        s[a] = (p[a] % m_bar + off) % m_bar;
    }
    const std::int64_t slot = super.hash_acc[v] + flatten(s, m_bar, super.dim);

    const std::int32_t idx = super.hash[static_cast<std::size_t>(slot)];
    if (idx < 0) return std::nullopt;
    for (int a = 0; a < super.dim; ++a)
        if (super.tags[static_cast<std::size_t>(slot * super.dim + a)] !=
            static_cast<std::uint16_t>(p[a]))
            return std::nullopt;
    return super.data_acc[v] + idx;
}

std::vector<PshLevel> split_super(const SuperPsh& super) {
    std::vector<PshLevel> levels(static_cast<std::size_t>(super.batch));
    for (std::size_t k = 0; k < levels.size(); ++k) {
        PshLevel& l = levels[k];
        l.dim = super.dim;
        l.resolution = super.resolution;
        l.n = super.data_acc[k + 1] - super.data_acc[k];
        l.hash_dim = super.hash_dims[k];
        l.offset_dim = super.offset_dims[k];
        l.hash.assign(super.hash.begin() + super.hash_acc[k],
                      super.hash.begin() + super.hash_acc[k + 1]);
        l.tags.assign(super.tags.begin() + super.hash_acc[k] * super.dim,
                      super.tags.begin() + super.hash_acc[k + 1] * super.dim);
        l.offsets.assign(super.offsets.begin() + super.offset_acc[k] * super.dim,
                         super.offsets.begin() + super.offset_acc[k + 1] * super.dim);
        l.data = FeatureMatrix(super.data.rows, l.n);
        for (std::int64_t r = 0; r < super.data.rows; ++r) {
            const float* src = super.data.row_ptr(r) + super.data_acc[k];
            std::copy(src, src + l.n, l.data.row_ptr(r));
        }
    }
    return levels;
}

}  // namespace hashconv
