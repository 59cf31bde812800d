#pragma once

#include <cstdint>
#include <vector>

#include "hashconv/feature_matrix.hpp"
#include "hashconv/psh_batch.hpp"

namespace hashconv {

struct ConvSpec {
    int kernel = 3;  // F, per axis
    int stride = 1;  // S_s
    int pad = 0;     // S_p (used when stride > 1)
    int in_channels = 0;
    int out_channels = 0;
};

inline std::int64_t field_size(const ConvSpec& spec, int dim) { return ipow(spec.kernel, dim); }

template <typename T>
struct KernelWeightsT {
    // rows = out channels, columns = in_channels * F^dim (channel-major, then
    // field position with x fastest)
    FeatureMatrixT<T> w;
};
using KernelWeights = KernelWeightsT<float>;

// Gathers receptive-field columns: row (i_c * F^dim + field_row) of column
// `col` holds channel i_c of the input voxel at that field position, zero
// when absent. Columns are indexed by the output level's data indices.
template <typename T>
FeatureMatrixT<T> hash2col(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                           const SuperPsh& output, const ConvSpec& spec);

// Adjoint of hash2col: accumulates column-layout gradients back onto input
// data cells. Contributions to one cell are summed over output voxels in
// ascending data-index order, so results do not depend on the worker count.
template <typename T>
FeatureMatrixT<T> col2hash(const FeatureMatrixT<T>& col_grads, const SuperPsh& input,
                           const SuperPsh& output, const ConvSpec& spec);

template <typename T>
FeatureMatrixT<T> conv_forward(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                               const SuperPsh& output, const KernelWeightsT<T>& weights,
                               const ConvSpec& spec);

template <typename T>
struct ConvGradients {
    FeatureMatrixT<T> weights;  // same shape as W
    FeatureMatrixT<T> input;    // same shape as the input data array
};

template <typename T>
ConvGradients<T> conv_backward(const FeatureMatrixT<T>& output_grad,
                               const KernelWeightsT<T>& weights,
                               const FeatureMatrixT<T>& cached_cols, const SuperPsh& input,
                               const SuperPsh& output, const ConvSpec& spec);

// Per output column and channel: flattened field row of the max entry, or -1
// for an all-empty field.
struct PoolSwitches {
    std::int64_t rows = 0;  // channels
    std::int64_t cols = 0;  // output columns
    std::vector<std::int32_t> values;

    std::int32_t& at(std::int64_t r, std::int64_t c) {
        return values[static_cast<std::size_t>(r * cols + c)];
    }
    const std::int32_t& at(std::int64_t r, std::int64_t c) const {
        return values[static_cast<std::size_t>(r * cols + c)];
    }
};

template <typename T>
struct MaxPoolResult {
    FeatureMatrixT<T> output;
    PoolSwitches switches;
};

// Max over the present entries of each receptive field (ties: smallest field
// row). Requires stride >= 2; the caller supplies the coarser structure.
template <typename T>
MaxPoolResult<T> max_pool(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                          const SuperPsh& output, const ConvSpec& spec);

// Sum over present entries divided by F^dim (the all-ones/F^dim kernel).
template <typename T>
FeatureMatrixT<T> avg_pool(const SuperPsh& input, const FeatureMatrixT<T>& input_data,
                           const SuperPsh& output, const ConvSpec& spec);

// Scatters each coarse value to the recorded switch position (also the
// backward pass of max_pool). `fine` is the target structure.
template <typename T>
FeatureMatrixT<T> max_unpool(const FeatureMatrixT<T>& coarse_data, const PoolSwitches& switches,
                             const SuperPsh& fine, const SuperPsh& coarse, const ConvSpec& spec);

// Distributes value/F^dim to every present field voxel.
template <typename T>
FeatureMatrixT<T> avg_unpool(const FeatureMatrixT<T>& coarse_data, const SuperPsh& fine,
                             const SuperPsh& coarse, const ConvSpec& spec);

// Transposed convolution from the coarse level onto the finer structure:
// col2hash(W^T * D_in). `spec` and `weights` are those of the matching
// fine-to-coarse convolution.
template <typename T>
FeatureMatrixT<T> deconv_forward(const SuperPsh& coarse, const FeatureMatrixT<T>& coarse_data,
                                 const SuperPsh& fine, const KernelWeightsT<T>& weights,
                                 const ConvSpec& spec);

template <typename T>
ConvGradients<T> deconv_backward(const FeatureMatrixT<T>& fine_grad,
                                 const KernelWeightsT<T>& weights,
                                 const FeatureMatrixT<T>& cached_coarse_data,
                                 const SuperPsh& coarse, const SuperPsh& fine,
                                 const ConvSpec& spec);

template <typename T>
struct BatchNormStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    explicit BatchNormStats(std::int64_t channels = 0)
        : running_mean(static_cast<std::size_t>(channels), T(0)),
          running_var(static_cast<std::size_t>(channels), T(1)) {}
};

template <typename T>
struct BatchNormCache {
    FeatureMatrixT<T> normalized;
    std::vector<T> inv_std;
};

template <typename T>
FeatureMatrixT<T> batch_norm_forward(const FeatureMatrixT<T>& x, BatchNormStats<T>& stats,
                                     bool training, BatchNormCache<T>* cache = nullptr);
template <typename T>
FeatureMatrixT<T> batch_norm_backward(const FeatureMatrixT<T>& dy, const BatchNormCache<T>& cache);

template <typename T>
FeatureMatrixT<T> scale_forward(const FeatureMatrixT<T>& x, const std::vector<T>& gamma,
                                const std::vector<T>& beta);
template <typename T>
struct ScaleGradients {
    std::vector<T> gamma;
    std::vector<T> beta;
    FeatureMatrixT<T> input;
};
template <typename T>
ScaleGradients<T> scale_backward(const FeatureMatrixT<T>& dy, const FeatureMatrixT<T>& x,
                                 const std::vector<T>& gamma);

template <typename T>
FeatureMatrixT<T> relu_forward(const FeatureMatrixT<T>& x);
template <typename T>
FeatureMatrixT<T> relu_backward(const FeatureMatrixT<T>& dy, const FeatureMatrixT<T>& forward_out);

struct DropoutMask {
    std::vector<std::uint8_t> keep;
};

// Inverted dropout: kept entries are scaled by 1/(1-ratio) at training time;
// identity in inference mode. The mask depends only on the seed.
template <typename T>
FeatureMatrixT<T> dropout_forward(const FeatureMatrixT<T>& x, T ratio, std::uint64_t seed,
                                  bool training, DropoutMask* mask = nullptr);
template <typename T>
FeatureMatrixT<T> dropout_backward(const FeatureMatrixT<T>& dy, const DropoutMask& mask, T ratio);

}  // namespace hashconv
