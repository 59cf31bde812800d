#include "hashconv/cnn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hashconv/gemm.hpp"
#include "hashconv/rng.hpp"
#include "hashconv/threading.hpp"

namespace hashconv {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}
std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return floor_div(a + b - 1, b); }

void check_pair(const SuperPsh& input, const SuperPsh& output, const ConvSpec& spec) {
    if (input.dim != output.dim) throw std::invalid_argument("structure dim mismatch");
    if (input.batch != output.batch) throw std::invalid_argument("batch size mismatch");
    if (spec.kernel < 1 || spec.stride < 1 || spec.pad < 0)
        throw std::invalid_argument("bad conv spec");
    if (spec.stride == 1) {
        if (spec.kernel % 2 == 0)
            throw std::invalid_argument("stride-1 fields need an odd kernel size");
        if (input.resolution != output.resolution)
            throw std::invalid_argument("stride-1 ops keep the level fixed");
    } else if (input.resolution != output.resolution * spec.stride) {
        throw std::invalid_argument("input resolution must be output resolution * stride");
    }
}

// Lower corner of the receptive field of output voxel p_o.
Coord field_base(const Coord& p_o, const ConvSpec& spec, int dim) {
    Coord base{0, 0, 0};
    for (int a = 0; a < dim; ++a)
        base[a] = spec.stride == 1 ? p_o[a] - (spec.kernel - 1) / 2
                                   : p_o[a] * spec.stride - spec.pad;
    return base;
}

// Voxel coordinate and model ordinal for every data column of a structure.
struct ColumnInfo {
    std::vector<Coord> coord;
    std::vector<std::int32_t> model;
};

ColumnInfo column_info(const SuperPsh& s) {
    ColumnInfo info;
    info.coord.resize(static_cast<std::size_t>(s.total_columns()));
    info.model.resize(static_cast<std::size_t>(s.total_columns()));
    for (std::size_t slot = 0; slot < s.hash.size(); ++slot) {
        const std::int32_t idx = s.hash[slot];
        if (idx < 0) continue;
        const std::int32_t v = s.model_of_slot[slot];
        const std::int64_t g = s.data_acc[static_cast<std::size_t>(v - 1)] + idx;
        Coord p{0, 0, 0};
        for (int a = 0; a < s.dim; ++a)
            p[a] = s.tags[slot * static_cast<std::size_t>(s.dim) + static_cast<std::size_t>(a)];
        info.coord[static_cast<std::size_t>(g)] = p;
        info.model[static_cast<std::size_t>(g)] = v;
    }
    return info;
}

// Range of output voxels whose receptive field contains input voxel p_i
// (per-axis inclusive bounds, clipped to the output domain).
void covering_range(const Coord& p_i, const ConvSpec& spec, int dim, std::int32_t out_res,
                    Coord& lo, Coord& hi) {
    for (int a = 0; a < dim; ++a) {
        std::int64_t l, h;
        if (spec.stride == 1) {
            l = p_i[a] - (spec.kernel - 1) / 2;
            h = p_i[a] + (spec.kernel - 1) / 2;
        } else {
            l = ceil_div(p_i[a] + spec.pad - spec.kernel + 1, spec.stride);
            h = floor_div(p_i[a] + spec.pad, spec.stride);
        }
        lo[a] = static_cast<std::int32_t>(std::max<std::int64_t>(l, 0));
        hi[a] = static_cast<std::int32_t>(std::min<std::int64_t>(h, out_res - 1));
    }
    if (dim == 2) lo[2] = hi[2] = 0;
}

// Field row of p_i inside the field anchored at base ((dz*F + dy)*F + dx).
std::int64_t field_row(const Coord& p_i, const Coord& base, int F, int dim) {
    std::int64_t row = 0;
    for (int a = dim - 1; a >= 0; --a) row = row * F + (p_i[a] - base[a]);
    return row;
}

// Present receptive-field entries of one output voxel, in field-row order.
struct FieldHit {
    std::int64_t row;
    std::int64_t column;  // global input data column
};

int collect_field_hits(const SuperPsh& input, std::int32_t model, const Coord& base,
                       const ConvSpec& spec, int dim, FieldHit* hits) {
    const std::int32_t res = input.resolution;
    const int F = spec.kernel;
    const int fz = dim == 3 ? F : 1;
    int count = 0;
    std::int64_t row = 0;
    for (int dz = 0; dz < fz; ++dz) {
        for (int dy = 0; dy < F; ++dy) {
            for (int dx = 0; dx < F; ++dx, ++row) {
                const Coord p{base[0] + dx, base[1] + dy, dim == 3 ? base[2] + dz : 0};
                bool in_range = true;
                for (int a = 0; a < dim; ++a) in_range &= p[a] >= 0 && p[a] < res;
                if (!in_range) continue;
                if (const auto g = locate(input, model, p)) hits[count++] = {row, *g};
            }
        }
    }
    return count;
}

}  // namespace

template <typename T>
FeatureMatrixT<T> hash2col(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                           const SuperPsh& output, const ConvSpec& spec) {
    check_pair(input, output, spec);
    if (input_data.rows != spec.in_channels || input_data.cols != input.total_columns())
        throw std::invalid_argument("hash2col: input data shape mismatch");
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);
    FeatureMatrixT<T> cols(spec.in_channels * fd, output.total_columns());

    const std::int64_t slots = output.total_slots();
    const int nt = max_threads();
#pragma omp parallel num_threads(nt)
    {
        std::vector<FieldHit> hits(static_cast<std::size_t>(fd));
#pragma omp for schedule(static)
        for (std::int64_t slot = 0; slot < slots; ++slot) {
            const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
            if (idx < 0) continue;
            const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
            const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
            Coord p_o{0, 0, 0};
            for (int a = 0; a < dim; ++a)
                p_o[a] = output.tags[static_cast<std::size_t>(slot * dim + a)];
            const Coord base = field_base(p_o, spec, dim);
            const int nhits = collect_field_hits(input, v, base, spec, dim, hits.data());
            for (std::int64_t c = 0; c < spec.in_channels; ++c) {
                T* dst = cols.row_ptr(c * fd);
                const T* src = input_data.row_ptr(c);
                for (int h = 0; h < nhits; ++h)
                    dst[hits[h].row * cols.cols + col] = src[hits[h].column];
            }
        }
    }
    return cols;
}

template <typename T>
FeatureMatrixT<T> col2hash(const FeatureMatrixT<T>& col_grads, const SuperPsh& input,
                           const SuperPsh& output, const ConvSpec& spec) {
    check_pair(input, output, spec);
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);
    if (col_grads.rows != spec.in_channels * fd || col_grads.cols != output.total_columns())
        throw std::invalid_argument("col2hash: column gradient shape mismatch");

    FeatureMatrixT<T> result(spec.in_channels, input.total_columns());
    const ColumnInfo info = column_info(input);
    const std::int64_t columns = input.total_columns();
    const int nt = max_threads();
#pragma omp parallel num_threads(nt)
    {
        std::vector<T> acc(static_cast<std::size_t>(spec.in_channels));
#pragma omp for schedule(static)
        for (std::int64_t g = 0; g < columns; ++g) {
            const Coord p_i = info.coord[static_cast<std::size_t>(g)];
            const std::int32_t v = info.model[static_cast<std::size_t>(g)];
            std::fill(acc.begin(), acc.end(), T(0));
            Coord lo, hi;
            covering_range(p_i, spec, dim, output.resolution, lo, hi);
            Coord p_o{0, 0, 0};
            // ascending (z,y,x) == ascending output data index: the fixed
            // accumulation order that makes the reduction deterministic
            for (p_o[2] = lo[2]; p_o[2] <= hi[2]; ++p_o[2]) {
                for (p_o[1] = lo[1]; p_o[1] <= hi[1]; ++p_o[1]) {
                    for (p_o[0] = lo[0]; p_o[0] <= hi[0]; ++p_o[0]) {
                        const auto col = locate(output, v, p_o);
                        if (!col) continue;
                        const Coord base = field_base(p_o, spec, dim);
                        const std::int64_t row = field_row(p_i, base, spec.kernel, dim);
                        for (std::int64_t c = 0; c < spec.in_channels; ++c)
                            acc[static_cast<std::size_t>(c)] +=
                                col_grads.at(c * fd + row, *col);
                    }
                }
            }
            for (std::int64_t c = 0; c < spec.in_channels; ++c)
                result.at(c, g) = acc[static_cast<std::size_t>(c)];
        }
    }
    return result;
}

template <typename T>
FeatureMatrixT<T> conv_forward(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                               const SuperPsh& output, const KernelWeightsT<T>& weights,
                               const ConvSpec& spec) {
    const std::int64_t fd = field_size(spec, input.dim);
    if (weights.w.rows != spec.out_channels || weights.w.cols != spec.in_channels * fd)
        throw std::invalid_argument("conv_forward: weight shape mismatch");
    const FeatureMatrixT<T> cols = hash2col(input, input_data, output, spec);
    return matmul(weights.w, cols);
}

template <typename T>
ConvGradients<T> conv_backward(const FeatureMatrixT<T>& output_grad,
                               const KernelWeightsT<T>& weights,
                               const FeatureMatrixT<T>& cached_cols, const SuperPsh& input,
                               const SuperPsh& output, const ConvSpec& spec) {
    const std::int64_t fd = field_size(spec, input.dim);
    if (output_grad.rows != spec.out_channels || output_grad.cols != output.total_columns())
        throw std::invalid_argument("conv_backward: output gradient shape mismatch");
    if (cached_cols.rows != spec.in_channels * fd || cached_cols.cols != output.total_columns())
        throw std::invalid_argument("conv_backward: cached column shape mismatch");
    ConvGradients<T> grads;
    grads.weights = matmul_trans_b(output_grad, cached_cols);    // dW = dDo * cols^T
    const FeatureMatrixT<T> dcols = matmul_trans_a(weights.w, output_grad);  // W^T * dDo
    grads.input = col2hash(dcols, input, output, spec);
    return grads;
}

template <typename T>
MaxPoolResult<T> max_pool(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                          const SuperPsh& output, const ConvSpec& spec) {
    check_pair(input, output, spec);
    if (spec.stride < 2) throw std::invalid_argument("pooling requires stride >= 2");
    if (input_data.rows != spec.in_channels || input_data.cols != input.total_columns())
        throw std::invalid_argument("max_pool: input data shape mismatch");
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);

    MaxPoolResult<T> result;
    result.output = FeatureMatrixT<T>(spec.in_channels, output.total_columns());
    result.switches.rows = spec.in_channels;
    result.switches.cols = output.total_columns();
    result.switches.values.assign(
        static_cast<std::size_t>(spec.in_channels * output.total_columns()), -1);

    const std::int64_t slots = output.total_slots();
    const int nt = max_threads();
#pragma omp parallel num_threads(nt)
    {
        std::vector<FieldHit> hits(static_cast<std::size_t>(fd));
#pragma omp for schedule(static)
        for (std::int64_t slot = 0; slot < slots; ++slot) {
            const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
            if (idx < 0) continue;
            const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
            const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
            Coord p_o{0, 0, 0};
            for (int a = 0; a < dim; ++a)
                p_o[a] = output.tags[static_cast<std::size_t>(slot * dim + a)];
            const Coord base = field_base(p_o, spec, dim);
            const int nhits = collect_field_hits(input, v, base, spec, dim, hits.data());
            if (nhits == 0) continue;  // all-empty field: zero output, -1 switch
            for (std::int64_t c = 0; c < spec.in_channels; ++c) {
                T best = input_data.at(c, hits[0].column);
                std::int64_t best_row = hits[0].row;
                for (int h = 1; h < nhits; ++h) {
                    const T val = input_data.at(c, hits[h].column);
                    if (val > best) {
                        best = val;
                        best_row = hits[h].row;
                    }
                }
                result.output.at(c, col) = best;
                result.switches.at(c, col) = static_cast<std::int32_t>(best_row);
            }
        }
    }
    return result;
}

template <typename T>
FeatureMatrixT<T> avg_pool(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                           const SuperPsh& output, const ConvSpec& spec) {
    check_pair(input, output, spec);
    if (spec.stride < 2) throw std::invalid_argument("pooling requires stride >= 2");
    if (input_data.rows != spec.in_channels || input_data.cols != input.total_columns())
        throw std::invalid_argument("avg_pool: input data shape mismatch");
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);
    const T inv_fd = T(1) / static_cast<T>(fd);

    FeatureMatrixT<T> out(spec.in_channels, output.total_columns());
    const std::int64_t slots = output.total_slots();
    const int nt = max_threads();
#pragma omp parallel num_threads(nt)
    {
        std::vector<FieldHit> hits(static_cast<std::size_t>(fd));
#pragma omp for schedule(static)
        for (std::int64_t slot = 0; slot < slots; ++slot) {
            const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
            if (idx < 0) continue;
            const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
            const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
            Coord p_o{0, 0, 0};
            for (int a = 0; a < dim; ++a)
                p_o[a] = output.tags[static_cast<std::size_t>(slot * dim + a)];
            const Coord base = field_base(p_o, spec, dim);
            const int nhits = collect_field_hits(input, v, base, spec, dim, hits.data());
            for (std::int64_t c = 0; c < spec.in_channels; ++c) {
                T acc = T(0);
                for (int h = 0; h < nhits; ++h) acc += input_data.at(c, hits[h].column);
                out.at(c, col) = acc * inv_fd;
            }
        }
    }
    return out;
}

namespace {

void check_switches(const PoolSwitches& switches, std::int64_t channels, std::int64_t cols,
                    std::int64_t fd) {
    if (switches.rows != channels || switches.cols != cols)
        throw std::invalid_argument("unpool: switch shape mismatch");
    for (const std::int32_t s : switches.values)
        if (s >= fd || s < -1) throw std::invalid_argument("unpool: switch index out of range");
}

}  // namespace

template <typename T>
FeatureMatrixT<T> max_unpool(const FeatureMatrixT<T>& coarse_data, const PoolSwitches& switches,
                             const SuperPsh& fine, const SuperPsh& coarse, const ConvSpec& spec) {
    check_pair(fine, coarse, spec);
    const int dim = fine.dim;
    const std::int64_t fd = field_size(spec, dim);
    if (coarse_data.rows != spec.in_channels || coarse_data.cols != coarse.total_columns())
        throw std::invalid_argument("max_unpool: coarse data shape mismatch");
    check_switches(switches, spec.in_channels, coarse.total_columns(), fd);

    FeatureMatrixT<T> out(spec.in_channels, fine.total_columns());
    const ColumnInfo info = column_info(fine);
    const std::int64_t columns = fine.total_columns();
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t g = 0; g < columns; ++g) {
        const Coord p_i = info.coord[static_cast<std::size_t>(g)];
        const std::int32_t v = info.model[static_cast<std::size_t>(g)];
        Coord lo, hi;
        covering_range(p_i, spec, dim, coarse.resolution, lo, hi);
        Coord p_o{0, 0, 0};
        for (p_o[2] = lo[2]; p_o[2] <= hi[2]; ++p_o[2]) {
            for (p_o[1] = lo[1]; p_o[1] <= hi[1]; ++p_o[1]) {
                for (p_o[0] = lo[0]; p_o[0] <= hi[0]; ++p_o[0]) {
                    const auto col = locate(coarse, v, p_o);
                    if (!col) continue;
                    const Coord base = field_base(p_o, spec, dim);
                    const auto row =
                        static_cast<std::int32_t>(field_row(p_i, base, spec.kernel, dim));
                    for (std::int64_t c = 0; c < spec.in_channels; ++c)
                        if (switches.at(c, *col) == row) out.at(c, g) += coarse_data.at(c, *col);
                }
            }
        }
    }
    return out;
}

template <typename T>
FeatureMatrixT<T> avg_unpool(const FeatureMatrixT<T>& coarse_data, const SuperPsh& fine,
                             const SuperPsh& coarse, const ConvSpec& spec) {
    check_pair(fine, coarse, spec);
    const int dim = fine.dim;
    if (coarse_data.rows != spec.in_channels || coarse_data.cols != coarse.total_columns())
        throw std::invalid_argument("avg_unpool: coarse data shape mismatch");
    const T inv_fd = T(1) / static_cast<T>(field_size(spec, dim));

    FeatureMatrixT<T> out(spec.in_channels, fine.total_columns());
    const ColumnInfo info = column_info(fine);
    const std::int64_t columns = fine.total_columns();
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t g = 0; g < columns; ++g) {
        const Coord p_i = info.coord[static_cast<std::size_t>(g)];
        const std::int32_t v = info.model[static_cast<std::size_t>(g)];
        Coord lo, hi;
        covering_range(p_i, spec, dim, coarse.resolution, lo, hi);
        Coord p_o{0, 0, 0};
        for (p_o[2] = lo[2]; p_o[2] <= hi[2]; ++p_o[2]) {
            for (p_o[1] = lo[1]; p_o[1] <= hi[1]; ++p_o[1]) {
                for (p_o[0] = lo[0]; p_o[0] <= hi[0]; ++p_o[0]) {
                    const auto col = locate(coarse, v, p_o);
                    if (!col) continue;
                    for (std::int64_t c = 0; c < spec.in_channels; ++c)
                        out.at(c, g) += coarse_data.at(c, *col) * inv_fd;
                }
            }
        }
    }
    return out;
}

template <typename T>
FeatureMatrixT<T> deconv_forward(const SuperPsh& coarse, const FeatureMatrixT<T>& coarse_data,
                                 const SuperPsh& fine, const KernelWeightsT<T>& weights,
                                 const ConvSpec& spec) {
    const std::int64_t fd = field_size(spec, fine.dim);
    if (weights.w.rows != spec.out_channels || weights.w.cols != spec.in_channels * fd)
        throw std::invalid_argument("deconv_forward: weight shape mismatch");
    if (coarse_data.rows != spec.out_channels || coarse_data.cols != coarse.total_columns())
        throw std::invalid_argument("deconv_forward: coarse data shape mismatch");
    const FeatureMatrixT<T> cols = matmul_trans_a(weights.w, coarse_data);  // W^T * D_i
    return col2hash(cols, fine, coarse, spec);
}

template <typename T>
ConvGradients<T> deconv_backward(const FeatureMatrixT<T>& fine_grad,
                                 const KernelWeightsT<T>& weights,
                                 const FeatureMatrixT<T>& cached_coarse_data,
                                 const SuperPsh& coarse, const SuperPsh& fine,
                                 const ConvSpec& spec) {
    if (fine_grad.rows != spec.in_channels || fine_grad.cols != fine.total_columns())
        throw std::invalid_argument("deconv_backward: fine gradient shape mismatch");
    // adjoint of col2hash is hash2col with the same structural parameters
    const FeatureMatrixT<T> dcols = hash2col(fine, fine_grad, coarse, spec);
    ConvGradients<T> grads;
    grads.weights = matmul_trans_b(cached_coarse_data, dcols);  // dW = D_i * dcols^T
    grads.input = matmul(weights.w, dcols);                     // dD_i = W * dcols
    return grads;
}

template <typename T>
FeatureMatrixT<T> batch_norm_forward(const FeatureMatrixT<T>& x, BatchNormStats<T>& stats,
                                     bool training, BatchNormCache<T>* cache) {
    const std::int64_t c = x.rows, n = x.cols;
    if (static_cast<std::int64_t>(stats.running_mean.size()) != c)
        throw std::invalid_argument("batch_norm: stats channel mismatch");
    if (n == 0) throw std::invalid_argument("batch_norm: empty input");

    FeatureMatrixT<T> y(c, n);
    if (cache) {
        cache->normalized = FeatureMatrixT<T>(c, n);
        cache->inv_std.assign(static_cast<std::size_t>(c), T(0));
    }
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t r = 0; r < c; ++r) {
        const T* xr = x.row_ptr(r);
        T* yr = y.row_ptr(r);
        double mean, var;
        if (training) {
            double s = 0;
            for (std::int64_t j = 0; j < n; ++j) s += xr[j];
            mean = s / static_cast<double>(n);
            double s2 = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double d = xr[j] - mean;
                s2 += d * d;
            }
            var = s2 / static_cast<double>(n);
            auto& rm = stats.running_mean[static_cast<std::size_t>(r)];
            auto& rv = stats.running_var[static_cast<std::size_t>(r)];
            rm = (T(1) - stats.momentum) * rm + stats.momentum * static_cast<T>(mean);
            rv = (T(1) - stats.momentum) * rv + stats.momentum * static_cast<T>(var);
        } else {
            mean = stats.running_mean[static_cast<std::size_t>(r)];
            var = stats.running_var[static_cast<std::size_t>(r)];
        }
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(stats.eps)));
        for (std::int64_t j = 0; j < n; ++j) yr[j] = (xr[j] - static_cast<T>(mean)) * inv_std;
        if (cache) {
            std::copy(yr, yr + n, cache->normalized.row_ptr(r));
            cache->inv_std[static_cast<std::size_t>(r)] = inv_std;
        }
    }
    return y;
}

template <typename T>
FeatureMatrixT<T> batch_norm_backward(const FeatureMatrixT<T>& dy, const BatchNormCache<T>& cache) {
    const std::int64_t c = dy.rows, n = dy.cols;
    if (cache.normalized.rows != c || cache.normalized.cols != n)
        throw std::invalid_argument("batch_norm_backward: cache shape mismatch");
    FeatureMatrixT<T> dx(c, n);
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t r = 0; r < c; ++r) {
        const T* dyr = dy.row_ptr(r);
        const T* xh = cache.normalized.row_ptr(r);
        T* dxr = dx.row_ptr(r);
        double s1 = 0, s2 = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            s1 += dyr[j];
            s2 += static_cast<double>(dyr[j]) * xh[j];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        const double istd = cache.inv_std[static_cast<std::size_t>(r)];
        for (std::int64_t j = 0; j < n; ++j)
            dxr[j] = static_cast<T>(istd * (dyr[j] - s1 * inv_n - xh[j] * s2 * inv_n));
    }
    return dx;
}

template <typename T>
FeatureMatrixT<T> scale_forward(const FeatureMatrixT<T>& x, const std::vector<T>& gamma,
                                const std::vector<T>& beta) {
    if (static_cast<std::int64_t>(gamma.size()) != x.rows || gamma.size() != beta.size())
        throw std::invalid_argument("scale: parameter channel mismatch");
    FeatureMatrixT<T> y(x.rows, x.cols);
    for (std::int64_t r = 0; r < x.rows; ++r) {
        const T g = gamma[static_cast<std::size_t>(r)], b = beta[static_cast<std::size_t>(r)];
        const T* xr = x.row_ptr(r);
        T* yr = y.row_ptr(r);
        for (std::int64_t j = 0; j < x.cols; ++j) yr[j] = g * xr[j] + b;
    }
    return y;
}

template <typename T>
ScaleGradients<T> scale_backward(const FeatureMatrixT<T>& dy, const FeatureMatrixT<T>& x,
                                 const std::vector<T>& gamma) {
    ScaleGradients<T> grads;
    grads.gamma.assign(static_cast<std::size_t>(dy.rows), T(0));
    grads.beta.assign(static_cast<std::size_t>(dy.rows), T(0));
    grads.input = FeatureMatrixT<T>(dy.rows, dy.cols);
    for (std::int64_t r = 0; r < dy.rows; ++r) {
        const T* dyr = dy.row_ptr(r);
        const T* xr = x.row_ptr(r);
        T* dxr = grads.input.row_ptr(r);
        double sg = 0, sb = 0;
        for (std::int64_t j = 0; j < dy.cols; ++j) {
            sg += static_cast<double>(dyr[j]) * xr[j];
            sb += dyr[j];
            dxr[j] = gamma[static_cast<std::size_t>(r)] * dyr[j];
        }
        grads.gamma[static_cast<std::size_t>(r)] = static_cast<T>(sg);
        grads.beta[static_cast<std::size_t>(r)] = static_cast<T>(sb);
    }
    return grads;
}

template <typename T>
FeatureMatrixT<T> relu_forward(const FeatureMatrixT<T>& x) {
    FeatureMatrixT<T> y(x.rows, x.cols);
    const std::int64_t total = x.rows * x.cols;
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < total; ++i)
        y.values[static_cast<std::size_t>(i)] =
            std::max(T(0), x.values[static_cast<std::size_t>(i)]);
    return y;
}

template <typename T>
FeatureMatrixT<T> relu_backward(const FeatureMatrixT<T>& dy, const FeatureMatrixT<T>& forward_out) {
    if (dy.rows != forward_out.rows || dy.cols != forward_out.cols)
        throw std::invalid_argument("relu_backward: shape mismatch");
    FeatureMatrixT<T> dx(dy.rows, dy.cols);
    const std::int64_t total = dy.rows * dy.cols;
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < total; ++i)
        dx.values[static_cast<std::size_t>(i)] = forward_out.values[static_cast<std::size_t>(i)] > T(0)
                                                     ? dy.values[static_cast<std::size_t>(i)]
                                                     : T(0);
    return dx;
}

template <typename T>
FeatureMatrixT<T> dropout_forward(const FeatureMatrixT<T>& x, T ratio, std::uint64_t seed,
                                  bool training, DropoutMask* mask) {
    if (ratio < T(0) || ratio >= T(1)) throw std::invalid_argument("dropout ratio must be in [0,1)");
    if (!training || ratio == T(0)) {
        if (mask) mask->keep.assign(x.values.size(), 1);
        return x;
    }
    FeatureMatrixT<T> y(x.rows, x.cols);
    DropoutMask local;
    local.keep.resize(x.values.size());
    Rng rng(seed);
    const T scale = T(1) / (T(1) - ratio);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const bool keep = rng.uniform_float() >= static_cast<float>(ratio);
        local.keep[i] = keep ? 1 : 0;
        y.values[i] = keep ? x.values[i] * scale : T(0);
    }
    if (mask) *mask = std::move(local);
    return y;
}

template <typename T>
FeatureMatrixT<T> dropout_backward(const FeatureMatrixT<T>& dy, const DropoutMask& mask, T ratio) {
    if (mask.keep.size() != dy.values.size())
        throw std::invalid_argument("dropout_backward: mask size mismatch");
    FeatureMatrixT<T> dx(dy.rows, dy.cols);
    const T scale = T(1) / (T(1) - ratio);
    for (std::size_t i = 0; i < dy.values.size(); ++i)
        dx.values[i] = mask.keep[i] ? dy.values[i] * scale : T(0);
    return dx;
}

#define HASHCONV_INSTANTIATE_OPS(T)                                                              \
    template FeatureMatrixT<T> hash2col<T>(const SuperPsh&, const FeatureMatrixT<T>&,            \
                                           const SuperPsh&, const ConvSpec&);                    \
    template FeatureMatrixT<T> col2hash<T>(const FeatureMatrixT<T>&, const SuperPsh&,            \
                                           const SuperPsh&, const ConvSpec&);                    \
    template FeatureMatrixT<T> conv_forward<T>(const SuperPsh&, const FeatureMatrixT<T>&,        \
                                               const SuperPsh&, const KernelWeightsT<T>&,        \
                                               const ConvSpec&);                                 \
    template ConvGradients<T> conv_backward<T>(const FeatureMatrixT<T>&,                         \
                                               const KernelWeightsT<T>&,                         \
                                               const FeatureMatrixT<T>&, const SuperPsh&,        \
                                               const SuperPsh&, const ConvSpec&);                \
    template MaxPoolResult<T> max_pool<T>(const SuperPsh&, const FeatureMatrixT<T>&,             \
                                          const SuperPsh&, const ConvSpec&);                     \
    template FeatureMatrixT<T> avg_pool<T>(const SuperPsh&, const FeatureMatrixT<T>&,            \
                                           const SuperPsh&, const ConvSpec&);                    \
    template FeatureMatrixT<T> max_unpool<T>(const FeatureMatrixT<T>&, const PoolSwitches&,      \
                                             const SuperPsh&, const SuperPsh&, const ConvSpec&); \
    template FeatureMatrixT<T> avg_unpool<T>(const FeatureMatrixT<T>&, const SuperPsh&,          \
                                             const SuperPsh&, const ConvSpec&);                  \
    template FeatureMatrixT<T> deconv_forward<T>(const SuperPsh&, const FeatureMatrixT<T>&,      \
                                                 const SuperPsh&, const KernelWeightsT<T>&,      \
                                                 const ConvSpec&);                               \
    template ConvGradients<T> deconv_backward<T>(const FeatureMatrixT<T>&,                       \
                                                 const KernelWeightsT<T>&,                       \
                                                 const FeatureMatrixT<T>&, const SuperPsh&,      \
                                                 const SuperPsh&, const ConvSpec&);              \
    template FeatureMatrixT<T> batch_norm_forward<T>(const FeatureMatrixT<T>&,                   \
                                                     BatchNormStats<T>&, bool,                   \
                                                     BatchNormCache<T>*);                        \
    template FeatureMatrixT<T> batch_norm_backward<T>(const FeatureMatrixT<T>&,                  \
                                                      const BatchNormCache<T>&);                 \
    template FeatureMatrixT<T> scale_forward<T>(const FeatureMatrixT<T>&, const std::vector<T>&, \
                                                const std::vector<T>&);                          \
    template ScaleGradients<T> scale_backward<T>(const FeatureMatrixT<T>&,                       \
                                                 const FeatureMatrixT<T>&,                       \
                                                 const std::vector<T>&);                         \
    template FeatureMatrixT<T> relu_forward<T>(const FeatureMatrixT<T>&);                        \
    template FeatureMatrixT<T> relu_backward<T>(const FeatureMatrixT<T>&,                        \
                                                const FeatureMatrixT<T>&);                       \
    template FeatureMatrixT<T> dropout_forward<T>(const FeatureMatrixT<T>&, T, std::uint64_t,    \
                                                  bool, DropoutMask*);                           \
    template FeatureMatrixT<T> dropout_backward<T>(const FeatureMatrixT<T>&, const DropoutMask&, \
                                                   T);

HASHCONV_INSTANTIATE_OPS(float)
HASHCONV_INSTANTIATE_OPS(double)

#undef HASHCONV_INSTANTIATE_OPS

}  // namespace hashconv
