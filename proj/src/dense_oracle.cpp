#include "hashconv/dense_oracle.hpp"

#include <stdexcept>

namespace hashconv::oracle {

namespace {

void check_res(std::int32_t res) {
    if (res > kMaxOracleResolution)
        throw std::invalid_argument("dense oracle is capped at resolution 32");
}

template <typename T>
DenseGridT<T> make_grid(int dim, std::int32_t res, std::int64_t channels) {
    check_res(res);
    DenseGridT<T> g;
    g.dim = dim;
    g.resolution = res;
    g.channels = channels;
    g.values.assign(static_cast<std::size_t>(channels * g.cells()), T(0));
    g.occupied.assign(static_cast<std::size_t>(g.cells()), 0);
    return g;
}

// in-range test covering the z axis of 2D grids too
bool inside(const Coord& p, std::int32_t res, int dim) {
    for (int a = 0; a < dim; ++a)
        if (p[a] < 0 || p[a] >= res) return false;
    return dim == 3 || p[2] == 0;
}

Coord window_base(const Coord& p_o, const ConvSpec& spec, int dim) {
    Coord base{0, 0, 0};
    for (int a = 0; a < dim; ++a)
        base[a] = spec.stride == 1 ? p_o[a] - (spec.kernel - 1) / 2
                                   : p_o[a] * spec.stride - spec.pad;
    return base;
}

}  // namespace

DenseGrid densify(const SparseVoxelSet& s) {
    DenseGrid g = make_grid<float>(s.dim, s.resolution, s.features.rows);
    for (std::size_t i = 0; i < s.voxels.size(); ++i) {
        const std::int64_t flat = flatten(s.voxels[i], s.resolution, s.dim);
        g.occupied[static_cast<std::size_t>(flat)] = 1;
        for (std::int64_t c = 0; c < s.features.rows; ++c)
            g.values[static_cast<std::size_t>(c * g.cells() + flat)] =
                s.features.at(c, static_cast<std::int64_t>(i));
    }
    return g;
}

template <typename T>
DenseGridT<T> densify(const SuperPsh& super, int model, const FeatureMatrixT<T>& data) {
    DenseGridT<T> g = make_grid<T>(super.dim, super.resolution, data.rows);
    const auto v = static_cast<std::size_t>(model - 1);
    for (std::int64_t slot = super.hash_acc[v]; slot < super.hash_acc[v + 1]; ++slot) {
        const std::int32_t idx = super.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) continue;
        Coord p{0, 0, 0};
        for (int a = 0; a < super.dim; ++a)
            p[a] = super.tags[static_cast<std::size_t>(slot * super.dim + a)];
        const std::int64_t flat = flatten(p, super.resolution, super.dim);
        g.occupied[static_cast<std::size_t>(flat)] = 1;
        const std::int64_t col = super.data_acc[v] + idx;
        for (std::int64_t c = 0; c < data.rows; ++c)
            g.values[static_cast<std::size_t>(c * g.cells() + flat)] = data.at(c, col);
    }
    return g;
}

SparseVoxelSet sparsify(const DenseGrid& grid) {
    std::vector<Coord> coords;
    std::vector<std::int64_t> flats;
    for (std::int64_t flat = 0; flat < grid.cells(); ++flat) {
        if (!grid.occupied[static_cast<std::size_t>(flat)]) continue;
        coords.push_back(unflatten(flat, grid.resolution, grid.dim));
        flats.push_back(flat);
    }
    FeatureMatrix features(grid.channels, static_cast<std::int64_t>(coords.size()));
    for (std::int64_t i = 0; i < features.cols; ++i)
        for (std::int64_t c = 0; c < grid.channels; ++c)
            features.at(c, i) = grid.values[static_cast<std::size_t>(
                c * grid.cells() + flats[static_cast<std::size_t>(i)])];
    return make_sparse_set(grid.dim, grid.resolution, std::move(coords), std::move(features));
}

template <typename T>
FeatureMatrixT<T> im2col(const DenseGridT<T>& grid, const ConvSpec& spec,
                         std::int32_t out_resolution) {
    check_res(out_resolution);
    const int dim = grid.dim;
    const int F = spec.kernel;
    const std::int64_t fd = field_size(spec, dim);
    const std::int64_t out_cells = ipow(out_resolution, dim);
    FeatureMatrixT<T> cols(grid.channels * fd, out_cells);
    for (std::int64_t oc = 0; oc < out_cells; ++oc) {
        const Coord p_o = unflatten(oc, out_resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        std::int64_t row = 0;
        for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
            for (int dy = 0; dy < F; ++dy)
                for (int dx = 0; dx < F; ++dx, ++row) {
                    const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                    if (!inside(p, grid.resolution, dim)) continue;
                    for (std::int64_t c = 0; c < grid.channels; ++c)
                        cols.at(c * fd + row, oc) = grid.at(c, p);
                }
    }
    return cols;
}

template <typename T>
DenseGridT<T> conv3d(const DenseGridT<T>& grid, const KernelWeightsT<T>& weights,
                     const ConvSpec& spec, std::int32_t out_resolution) {
    const int dim = grid.dim;
    const int F = spec.kernel;
    const std::int64_t fd = field_size(spec, dim);
    if (weights.w.rows != spec.out_channels || weights.w.cols != grid.channels * fd)
        throw std::invalid_argument("oracle conv3d: weight shape mismatch");
    DenseGridT<T> out = make_grid<T>(dim, out_resolution, spec.out_channels);
    const std::int64_t out_cells = out.cells();
    for (std::int64_t oc = 0; oc < out_cells; ++oc) {
        const Coord p_o = unflatten(oc, out_resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        out.occupied[static_cast<std::size_t>(oc)] = 1;
        for (std::int64_t k = 0; k < spec.out_channels; ++k) {
            T acc = T(0);
            std::int64_t row = 0;
            for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
                for (int dy = 0; dy < F; ++dy)
                    for (int dx = 0; dx < F; ++dx, ++row) {
                        const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                        if (!inside(p, grid.resolution, dim)) continue;
                        for (std::int64_t c = 0; c < grid.channels; ++c)
                            acc += weights.w.at(k, c * fd + row) * grid.at(c, p);
                    }
            out.values[static_cast<std::size_t>(k * out_cells + oc)] = acc;
        }
    }
    return out;
}

template <typename T>
DensePool<T> max_pool(const DenseGridT<T>& grid, const ConvSpec& spec,
                      std::int32_t out_resolution) {
    const int dim = grid.dim;
    const int F = spec.kernel;
    DensePool<T> result;
    result.output = make_grid<T>(dim, out_resolution, grid.channels);
    const std::int64_t out_cells = result.output.cells();
    result.switches.assign(static_cast<std::size_t>(grid.channels * out_cells), -1);
    for (std::int64_t oc = 0; oc < out_cells; ++oc) {
        const Coord p_o = unflatten(oc, out_resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        result.output.occupied[static_cast<std::size_t>(oc)] = 1;
        for (std::int64_t c = 0; c < grid.channels; ++c) {
            T best = T(0);
            std::int64_t best_row = -1, row = 0;
            for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
                for (int dy = 0; dy < F; ++dy)
                    for (int dx = 0; dx < F; ++dx, ++row) {
                        const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                        if (!inside(p, grid.resolution, dim) || !grid.is_occupied(p)) continue;
                        const T val = grid.at(c, p);
                        if (best_row < 0 || val > best) {
                            best = val;
                            best_row = row;
                        }
                    }
            if (best_row >= 0) {
                result.output.values[static_cast<std::size_t>(c * out_cells + oc)] = best;
                result.switches[static_cast<std::size_t>(c * out_cells + oc)] =
                    static_cast<std::int32_t>(best_row);
            }
        }
    }
    return result;
}

template <typename T>
DenseGridT<T> avg_pool(const DenseGridT<T>& grid, const ConvSpec& spec,
                       std::int32_t out_resolution) {
    const int dim = grid.dim;
    const int F = spec.kernel;
    const T inv_fd = T(1) / static_cast<T>(field_size(spec, dim));
    DenseGridT<T> out = make_grid<T>(dim, out_resolution, grid.channels);
    const std::int64_t out_cells = out.cells();
    for (std::int64_t oc = 0; oc < out_cells; ++oc) {
        const Coord p_o = unflatten(oc, out_resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        out.occupied[static_cast<std::size_t>(oc)] = 1;
        for (std::int64_t c = 0; c < grid.channels; ++c) {
            T acc = T(0);
            for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
                for (int dy = 0; dy < F; ++dy)
                    for (int dx = 0; dx < F; ++dx) {
                        const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                        if (!inside(p, grid.resolution, dim)) continue;
                        acc += grid.at(c, p);
                    }
            out.values[static_cast<std::size_t>(c * out_cells + oc)] = acc * inv_fd;
        }
    }
    return out;
}

template <typename T>
DenseGridT<T> max_unpool(const DenseGridT<T>& coarse, const std::vector<std::int32_t>& switches,
                         const ConvSpec& spec, std::int32_t fine_resolution) {
    const int dim = coarse.dim;
    const int F = spec.kernel;
    DenseGridT<T> fine = make_grid<T>(dim, fine_resolution, coarse.channels);
    const std::int64_t coarse_cells = coarse.cells();
    for (std::int64_t oc = 0; oc < coarse_cells; ++oc) {
        if (!coarse.occupied[static_cast<std::size_t>(oc)]) continue;
        const Coord p_o = unflatten(oc, coarse.resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        for (std::int64_t c = 0; c < coarse.channels; ++c) {
            const std::int32_t sw = switches[static_cast<std::size_t>(c * coarse_cells + oc)];
            if (sw < 0) continue;
            std::int32_t rem = sw;
            Coord p = base;
            for (int a = 0; a < dim; ++a) {
                p[a] += rem % F;
                rem /= F;
            }
            if (!inside(p, fine_resolution, dim)) continue;
            fine.values[static_cast<std::size_t>(c * fine.cells() +
                                                 flatten(p, fine_resolution, dim))] +=
                coarse.values[static_cast<std::size_t>(c * coarse_cells + oc)];
        }
    }
    return fine;
}

template <typename T>
DenseGridT<T> avg_unpool(const DenseGridT<T>& coarse, const DenseGridT<T>& fine_occupancy,
                         const ConvSpec& spec) {
    const int dim = coarse.dim;
    const int F = spec.kernel;
    const T inv_fd = T(1) / static_cast<T>(field_size(spec, dim));
    DenseGridT<T> fine = make_grid<T>(dim, fine_occupancy.resolution, coarse.channels);
    fine.occupied = fine_occupancy.occupied;
    const std::int64_t coarse_cells = coarse.cells();
    for (std::int64_t oc = 0; oc < coarse_cells; ++oc) {
        if (!coarse.occupied[static_cast<std::size_t>(oc)]) continue;
        const Coord p_o = unflatten(oc, coarse.resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
            for (int dy = 0; dy < F; ++dy)
                for (int dx = 0; dx < F; ++dx) {
                    const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                    if (!inside(p, fine.resolution, dim) || !fine_occupancy.is_occupied(p))
                        continue;
                    for (std::int64_t c = 0; c < coarse.channels; ++c)
                        fine.values[static_cast<std::size_t>(c * fine.cells() +
                                                             flatten(p, fine.resolution, dim))] +=
                            coarse.values[static_cast<std::size_t>(c * coarse_cells + oc)] * inv_fd;
                }
    }
    return fine;
}

template <typename T>
DenseGridT<T> transposed_conv(const DenseGridT<T>& coarse, const KernelWeightsT<T>& weights,
                              const ConvSpec& spec, std::int32_t fine_resolution) {
    const int dim = coarse.dim;
    const int F = spec.kernel;
    const std::int64_t fd = field_size(spec, dim);
    // weights are those of the matching fine->coarse convolution:
    // rows = coarse channels, cols = fine channels * F^dim
    if (weights.w.rows != coarse.channels || weights.w.cols != spec.in_channels * fd)
        throw std::invalid_argument("oracle transposed_conv: weight shape mismatch");
    DenseGridT<T> fine = make_grid<T>(dim, fine_resolution, spec.in_channels);
    const std::int64_t coarse_cells = coarse.cells();
    for (std::int64_t oc = 0; oc < coarse_cells; ++oc) {
        const Coord p_o = unflatten(oc, coarse.resolution, dim);
        const Coord base = window_base(p_o, spec, dim);
        std::int64_t row = 0;
        for (int dz = 0; dz < (dim == 3 ? F : 1); ++dz)
            for (int dy = 0; dy < F; ++dy)
                for (int dx = 0; dx < F; ++dx, ++row) {
                    const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                    if (!inside(p, fine_resolution, dim)) continue;
                    for (std::int64_t cf = 0; cf < spec.in_channels; ++cf) {
                        T acc = T(0);
                        for (std::int64_t cc = 0; cc < coarse.channels; ++cc)
                            acc += weights.w.at(cc, cf * fd + row) *
                                   coarse.values[static_cast<std::size_t>(cc * coarse_cells + oc)];
                        fine.values[static_cast<std::size_t>(cf * fine.cells() +
                                                             flatten(p, fine_resolution, dim))] +=
                            acc;
                    }
                }
    }
    return fine;
}

#define HASHCONV_INSTANTIATE_ORACLE(T)                                                          \
    template DenseGridT<T> densify<T>(const SuperPsh&, int, const FeatureMatrixT<T>&);          \
    template FeatureMatrixT<T> im2col<T>(const DenseGridT<T>&, const ConvSpec&, std::int32_t);  \
    template DenseGridT<T> conv3d<T>(const DenseGridT<T>&, const KernelWeightsT<T>&,            \
                                     const ConvSpec&, std::int32_t);                            \
    template DensePool<T> max_pool<T>(const DenseGridT<T>&, const ConvSpec&, std::int32_t);     \
    template DenseGridT<T> avg_pool<T>(const DenseGridT<T>&, const ConvSpec&, std::int32_t);    \
    template DenseGridT<T> max_unpool<T>(const DenseGridT<T>&, const std::vector<std::int32_t>&,\
                                         const ConvSpec&, std::int32_t);                        \
    template DenseGridT<T> avg_unpool<T>(const DenseGridT<T>&, const DenseGridT<T>&,            \
                                         const ConvSpec&);                                      \
    template DenseGridT<T> transposed_conv<T>(const DenseGridT<T>&, const KernelWeightsT<T>&,   \
                                              const ConvSpec&, std::int32_t);

HASHCONV_INSTANTIATE_ORACLE(float)
HASHCONV_INSTANTIATE_ORACLE(double)

#undef HASHCONV_INSTANTIATE_ORACLE

}  // namespace hashconv::oracle
