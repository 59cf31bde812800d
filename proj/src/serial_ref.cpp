#include "hashconv/serial_ref.hpp"

#include <algorithm>
#include <stdexcept>

namespace hashconv::serial {

namespace {

// Receptive-field voxels of p_o in field-row order (x fastest), plus their
// lookup results on the input structure.
struct FieldScan {
    Coord base{0, 0, 0};
    int F = 0;
    int dim = 0;
};

FieldScan begin_field(const SuperPsh& out_s, std::int64_t slot, const ConvSpec& spec) {
    FieldScan f;
    f.F = spec.kernel;
    f.dim = out_s.dim;
    Coord p_o{0, 0, 0};
    for (int a = 0; a < out_s.dim; ++a)
        p_o[a] = out_s.tags[static_cast<std::size_t>(slot * out_s.dim + a)];
    for (int a = 0; a < out_s.dim; ++a)
        f.base[a] = spec.stride == 1 ? p_o[a] - (spec.kernel - 1) / 2
                                     : p_o[a] * spec.stride - spec.pad;
    return f;
}

}  // namespace

FeatureMatrix hash2col_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                           const SuperPsh& output, const ConvSpec& spec) {
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);
    const std::int64_t slots = output.total_slots();
    FeatureMatrix cols(spec.in_channels * fd, output.total_columns());

    // one task per channel x output hash slot, executed sequentially
    for (std::int64_t task = 0; task < spec.in_channels * slots; ++task) {
        const std::int64_t ic = task / slots;
        const std::int64_t slot = task - ic * slots;
        const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) continue;
        const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
        const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
        const FieldScan f = begin_field(output, slot, spec);
        std::int64_t row = 0;
        const int fz = dim == 3 ? f.F : 1;
        for (int dz = 0; dz < fz; ++dz)
            for (int dy = 0; dy < f.F; ++dy)
                for (int dx = 0; dx < f.F; ++dx, ++row) {
                    const Coord p{f.base[0] + dx, f.base[1] + dy, dim == 3 ? f.base[2] + dz : 0};
                    bool in_range = true;
                    for (int a = 0; a < dim; ++a) in_range &= p[a] >= 0 && p[a] < input.resolution;
                    const auto g = in_range ? locate(input, v, p) : std::nullopt;
                    cols.at(ic * fd + row, col) = g ? input_data.at(ic, *g) : 0.0f;
                }
    }
    return cols;
}

FeatureMatrix col2hash_ref(const FeatureMatrix& col_grads, const SuperPsh& input,
                           const SuperPsh& output, const ConvSpec& spec) {
    const int dim = input.dim;
    const std::int64_t fd = field_size(spec, dim);
    const std::int64_t slots = output.total_slots();
    FeatureMatrix grads(spec.in_channels, input.total_columns());

    for (std::int64_t task = 0; task < spec.in_channels * slots; ++task) {
        const std::int64_t ic = task / slots;
        const std::int64_t slot = task - ic * slots;
        const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) continue;
        const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
        const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
        const FieldScan f = begin_field(output, slot, spec);
        std::int64_t row = 0;
        const int fz = dim == 3 ? f.F : 1;
        for (int dz = 0; dz < fz; ++dz)
            for (int dy = 0; dy < f.F; ++dy)
                for (int dx = 0; dx < f.F; ++dx, ++row) {
                    const Coord p{f.base[0] + dx, f.base[1] + dy, dim == 3 ? f.base[2] + dz : 0};
                    bool in_range = true;
                    for (int a = 0; a < dim; ++a) in_range &= p[a] >= 0 && p[a] < input.resolution;
                    if (!in_range) continue;
                    if (const auto g = locate(input, v, p))
                        grads.at(ic, *g) += col_grads.at(ic * fd + row, col);
                }
    }
    return grads;
}

MaxPoolResult<float> max_pool_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                                  const SuperPsh& output, const ConvSpec& spec) {
    if (spec.stride < 2) throw std::invalid_argument("pooling requires stride >= 2");
    const int dim = input.dim;
    const std::int64_t slots = output.total_slots();
    MaxPoolResult<float> result;
    result.output = FeatureMatrix(spec.in_channels, output.total_columns());
    result.switches.rows = spec.in_channels;
    result.switches.cols = output.total_columns();
    result.switches.values.assign(
        static_cast<std::size_t>(spec.in_channels * output.total_columns()), -1);

    for (std::int64_t task = 0; task < spec.in_channels * slots; ++task) {
        const std::int64_t ic = task / slots;
        const std::int64_t slot = task - ic * slots;
        const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) continue;
        const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
        const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
        const FieldScan f = begin_field(output, slot, spec);
        std::int64_t row = 0, best_row = -1;
        float best = 0.0f;
        const int fz = dim == 3 ? f.F : 1;
        for (int dz = 0; dz < fz; ++dz)
            for (int dy = 0; dy < f.F; ++dy)
                for (int dx = 0; dx < f.F; ++dx, ++row) {
                    const Coord p{f.base[0] + dx, f.base[1] + dy, dim == 3 ? f.base[2] + dz : 0};
                    bool in_range = true;
                    for (int a = 0; a < dim; ++a) in_range &= p[a] >= 0 && p[a] < input.resolution;
                    if (!in_range) continue;
                    const auto g = locate(input, v, p);
                    if (!g) continue;
                    const float val = input_data.at(ic, *g);
                    if (best_row < 0 || val > best) {
                        best = val;
                        best_row = row;
                    }
                }
        if (best_row >= 0) {
            result.output.at(ic, col) = best;
            result.switches.at(ic, col) = static_cast<std::int32_t>(best_row);
        }
    }
    return result;
}

FeatureMatrix avg_pool_ref(const SuperPsh& input, const FeatureMatrix& input_data,
                           const SuperPsh& output, const ConvSpec& spec) {
    if (spec.stride < 2) throw std::invalid_argument("pooling requires stride >= 2");
    const int dim = input.dim;
    const std::int64_t slots = output.total_slots();
    const float inv_fd = 1.0f / static_cast<float>(field_size(spec, dim));
    FeatureMatrix out(spec.in_channels, output.total_columns());

    for (std::int64_t task = 0; task < spec.in_channels * slots; ++task) {
        const std::int64_t ic = task / slots;
        const std::int64_t slot = task - ic * slots;
        const std::int32_t idx = output.hash[static_cast<std::size_t>(slot)];
        if (idx < 0) continue;
        const std::int32_t v = output.model_of_slot[static_cast<std::size_t>(slot)];
        const std::int64_t col = output.data_acc[static_cast<std::size_t>(v - 1)] + idx;
        const FieldScan f = begin_field(output, slot, spec);
        float acc = 0.0f;
        const int fz = dim == 3 ? f.F : 1;
        for (int dz = 0; dz < fz; ++dz)
            for (int dy = 0; dy < f.F; ++dy)
                for (int dx = 0; dx < f.F; ++dx) {
                    const Coord p{f.base[0] + dx, f.base[1] + dy, dim == 3 ? f.base[2] + dz : 0};
                    bool in_range = true;
                    for (int a = 0; a < dim; ++a) in_range &= p[a] >= 0 && p[a] < input.resolution;
                    if (!in_range) continue;
                    if (const auto g = locate(input, v, p)) acc += input_data.at(ic, *g);
                }
        out.at(ic, col) = acc * inv_fd;
    }
    return out;
}

}  // namespace hashconv::serial
