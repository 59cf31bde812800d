#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hashconv/cnn_ops.hpp"
#include "hashconv/train_config.hpp"

namespace hashconv {

// Per-level channel width: max{2, 2^(9-l)}.
int channels_at_level(int level);

// One model's PSH pyramid, finest level first, coarsest at resolution 4.
using ModelPyramid = std::vector<PshLevel>;

// Builds the pyramid (finest resolution -> 4) for one voxelization.
ModelPyramid build_pyramid(const SparseVoxelSet& finest, std::uint64_t seed);

// Batched structures at every level of the pyramid, finest first.
struct MultiLevelBatch {
    std::vector<SuperPsh> levels;

    int batch() const { return levels.empty() ? 0 : levels.front().batch; }
    const SuperPsh& at_resolution(std::int32_t res) const;  // throws "missing level"
};

MultiLevelBatch build_batch(std::span<const ModelPyramid* const> models);

template <typename T>
struct DenseLayerT {
    FeatureMatrixT<T> weights;  // out x in
    std::vector<T> bias;
};

template <typename T>
struct ConvBlockT {
    int level = 0;
    ConvSpec conv_spec;          // stride-1 3^3 convolution at this level
    ConvSpec pool_spec;          // 2^3 stride-2 max pool to the next level
    KernelWeightsT<T> conv;
    BatchNormStats<T> bn;
};

// LeNet-style hierarchy: per level (finest..resolution 4) the sequence
// convolution -> batch norm -> ReLU -> max pool; the last pool lands on a
// dense 2^3 grid per model, followed by
// dropout -> FC(128) -> dropout -> FC(num_classes) -> softmax.
template <typename T>
struct LayerGraphT {
    int level_max = 0;
    int num_classes = 0;
    int input_channels = 3;
    T dropout_ratio = T(0.5);
    std::vector<ConvBlockT<T>> blocks;  // levels level_max .. 2
    DenseLayerT<T> fc1;
    DenseLayerT<T> fc2;
};
using LayerGraph = LayerGraphT<float>;

// Seeded Xavier-uniform initialization.
template <typename T>
LayerGraphT<T> make_graph(int level_max, int num_classes, std::uint64_t seed,
                          int input_channels = 3);

struct NetRunOptions {
    bool training = false;
    bool update_running_stats = true;  // only meaningful when training
    std::uint64_t dropout_seed = 0;
};

template <typename T>
struct BlockCache {
    FeatureMatrixT<T> input;
    FeatureMatrixT<T> cols;
    BatchNormCache<T> bn;
    FeatureMatrixT<T> relu_out;
    PoolSwitches pool_switches;
};

template <typename T>
struct ForwardCacheT {
    std::vector<BlockCache<T>> blocks;
    // final 2^3 dense pool: source fine column per (channel*8 + cell, model),
    // -1 when the field was empty
    std::vector<std::int64_t> head_pool_src;
    FeatureMatrixT<T> head_in;  // (c2*8) x b
    DropoutMask drop1, drop2;
    FeatureMatrixT<T> fc1_in, fc1_out, fc2_in;
};

// Class scores, num_classes x batch.
template <typename T>
FeatureMatrixT<T> net_forward(LayerGraphT<T>& graph, const MultiLevelBatch& batch,
                              const NetRunOptions& options, ForwardCacheT<T>* cache = nullptr);

template <typename T>
struct NetGradientsT {
    std::vector<FeatureMatrixT<T>> conv;  // per block
    FeatureMatrixT<T> fc1_w, fc2_w;
    std::vector<T> fc1_b, fc2_b;
    FeatureMatrixT<T> input;  // grad at the finest-level data array
};

// Softmax cross-entropy of the forward scores; fills gradients.
template <typename T>
T net_loss_and_gradients(LayerGraphT<T>& graph, const MultiLevelBatch& batch,
                         const std::vector<int>& labels, const NetRunOptions& options,
                         NetGradientsT<T>* gradients = nullptr);

template <typename T>
struct SgdStateT {
    std::vector<FeatureMatrixT<T>> conv_v;
    FeatureMatrixT<T> fc1_w_v, fc2_w_v;
    std::vector<T> fc1_b_v, fc2_b_v;
    std::uint64_t step = 0;
    int epoch = 0;
};

template <typename T>
SgdStateT<T> make_sgd_state(const LayerGraphT<T>& graph);

// One SGD step with momentum and weight decay at the epoch's learning rate;
// returns the batch loss.
template <typename T>
T train_step(LayerGraphT<T>& graph, const MultiLevelBatch& batch, const std::vector<int>& labels,
             const TrainConfig& config, SgdStateT<T>& state);

struct EvalSample {
    ModelPyramid levels;
    int label = 0;
    int group = 0;  // pose-voting group; plain samples use a unique group
    int pose = 0;
};

// Accuracy over groups. voting <= 1 scores pose 0 only; otherwise the class
// scores of poses [0, voting) are averaged before the argmax.
template <typename T>
double evaluate(LayerGraphT<T>& graph, const std::vector<EvalSample>& samples, int voting,
                int batch_size = 16);

void save_checkpoint(const std::string& path, const LayerGraph& graph);
LayerGraph load_checkpoint(const std::string& path);

struct TrainSummary {
    std::vector<float> epoch_losses;
};

// Full seeded training loop: per-epoch shuffle, mini-batches (last one may be
// short), SGD steps. Logs one line per epoch when `log` is given.
TrainSummary train_classifier(LayerGraph& graph, const std::vector<EvalSample>& train_set,
                              const TrainConfig& config, std::ostream* log = nullptr);

}  // namespace hashconv
