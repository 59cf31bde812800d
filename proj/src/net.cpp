#include "hashconv/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "hashconv/gemm.hpp"
#include "hashconv/rng.hpp"

namespace hashconv {

int channels_at_level(int level) {
    return std::max(2, 1 << std::max(0, 9 - level));
}

ModelPyramid build_pyramid(const SparseVoxelSet& finest, std::uint64_t seed) {
    ModelPyramid pyramid;
    SparseVoxelSet current = finest;
    int level_index = 0;
    while (true) {
        PshBuildOptions opt;
        opt.seed = mix_seed(seed, static_cast<std::uint64_t>(level_index));
        pyramid.push_back(build_psh(current, opt));
        if (current.resolution == 4) break;
        current = coarsen(current);
        ++level_index;
    }
    return pyramid;
}

const SuperPsh& MultiLevelBatch::at_resolution(std::int32_t res) const {
    for (const SuperPsh& s : levels)
        if (s.resolution == res) return s;
    throw std::runtime_error("missing level: resolution " + std::to_string(res));
}

MultiLevelBatch build_batch(std::span<const ModelPyramid* const> models) {
    if (models.empty()) throw std::invalid_argument("empty batch");
    const std::size_t depth = models.front()->size();
    for (const ModelPyramid* m : models)
        if (m->size() != depth) throw std::invalid_argument("pyramids have mismatched depths");
    MultiLevelBatch batch;
    std::vector<PshLevel> level_group;
    for (std::size_t l = 0; l < depth; ++l) {
        level_group.clear();
        for (const ModelPyramid* m : models) level_group.push_back((*m)[l]);
        batch.levels.push_back(build_super(level_group));
    }
    return batch;
}

namespace {

template <typename T>
FeatureMatrixT<T> xavier_matrix(std::int64_t rows, std::int64_t cols, double fan_in,
                                double fan_out, std::uint64_t seed) {
    FeatureMatrixT<T> m(rows, cols);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(seed);
    for (auto& v : m.values) v = static_cast<T>(rng.uniform(-bound, bound));
    return m;
}

// Final 2^3 dense pool: max over present resolution-4 children per model and
// dense parent cell. Rows are channel-major (c*8 + cell).
template <typename T>
FeatureMatrixT<T> final_dense_pool(const SuperPsh& s, const FeatureMatrixT<T>& data,
                                   std::vector<std::int64_t>* src) {
    if (s.resolution != 4) throw std::runtime_error("final pool expects the resolution-4 level");
    const std::int64_t channels = data.rows;
    const int b = s.batch;
    FeatureMatrixT<T> out(channels * 8, b);
    if (src) src->assign(static_cast<std::size_t>(channels * 8 * b), -1);
    for (int v = 1; v <= b; ++v) {
        for (std::int64_t cell = 0; cell < 8; ++cell) {
            const Coord q = unflatten(cell, 2, 3);
            std::int64_t hits[8];
            int nhits = 0;
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const Coord p{q[0] * 2 + dx, q[1] * 2 + dy, q[2] * 2 + dz};
                        if (const auto g = locate(s, v, p)) hits[nhits++] = *g;
                    }
            if (nhits == 0) continue;
            for (std::int64_t c = 0; c < channels; ++c) {
                T best = data.at(c, hits[0]);
                std::int64_t best_col = hits[0];
                for (int h = 1; h < nhits; ++h) {
                    const T val = data.at(c, hits[h]);
                    if (val > best) {
                        best = val;
                        best_col = hits[h];
                    }
                }
                out.at(c * 8 + cell, v - 1) = best;
                if (src)
                    (*src)[static_cast<std::size_t>((c * 8 + cell) * b + (v - 1))] = best_col;
            }
        }
    }
    return out;
}

template <typename T>
FeatureMatrixT<T> final_dense_pool_backward(const FeatureMatrixT<T>& d_head,
                                            const std::vector<std::int64_t>& src,
                                            std::int64_t channels, std::int64_t fine_columns) {
    const std::int64_t b = d_head.cols;
    FeatureMatrixT<T> dx(channels, fine_columns);
    for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t cell = 0; cell < 8; ++cell)
            for (std::int64_t v = 0; v < b; ++v) {
                const std::int64_t col =
                    src[static_cast<std::size_t>((c * 8 + cell) * b + v)];
                if (col >= 0) dx.at(c, col) += d_head.at(c * 8 + cell, v);
            }
    return dx;
}

template <typename T>
FeatureMatrixT<T> dense_forward(const DenseLayerT<T>& layer, const FeatureMatrixT<T>& in) {
    FeatureMatrixT<T> out = matmul(layer.weights, in);
    for (std::int64_t r = 0; r < out.rows; ++r) {
        const T bias = layer.bias[static_cast<std::size_t>(r)];
        T* row = out.row_ptr(r);
        for (std::int64_t j = 0; j < out.cols; ++j) row[j] += bias;
    }
    return out;
}

template <typename T>
std::vector<T> row_sums(const FeatureMatrixT<T>& m) {
    std::vector<T> sums(static_cast<std::size_t>(m.rows));
    for (std::int64_t r = 0; r < m.rows; ++r) {
        double acc = 0;
        const T* row = m.row_ptr(r);
        for (std::int64_t j = 0; j < m.cols; ++j) acc += row[j];
        sums[static_cast<std::size_t>(r)] = static_cast<T>(acc);
    }
    return sums;
}

}  // namespace

template <typename T>
LayerGraphT<T> make_graph(int level_max, int num_classes, std::uint64_t seed, int input_channels) {
    if (level_max < 2 || level_max > 16) throw std::invalid_argument("level_max out of range");
    if (num_classes < 2) throw std::invalid_argument("need at least two classes");
    LayerGraphT<T> g;
    g.level_max = level_max;
    g.num_classes = num_classes;
    g.input_channels = input_channels;
    for (int l = level_max; l >= 2; --l) {
        ConvBlockT<T> block;
        block.level = l;
        const int in_c = l == level_max ? input_channels : channels_at_level(l + 1);
        const int out_c = channels_at_level(l);
        block.conv_spec = ConvSpec{3, 1, 0, in_c, out_c};
        block.pool_spec = ConvSpec{2, 2, 0, out_c, out_c};
        const double fan = 27.0;
        block.conv.w = xavier_matrix<T>(out_c, static_cast<std::int64_t>(in_c) * 27,
                                        in_c * fan, out_c * fan,
                                        mix_seed(seed, 100 + static_cast<std::uint64_t>(l)));
        block.bn = BatchNormStats<T>(out_c);
        g.blocks.push_back(std::move(block));
    }
    const std::int64_t head_in = static_cast<std::int64_t>(channels_at_level(2)) * 8;
    g.fc1.weights = xavier_matrix<T>(128, head_in, static_cast<double>(head_in), 128.0,
                                     mix_seed(seed, 1));
    g.fc1.bias.assign(128, T(0));
    g.fc2.weights = xavier_matrix<T>(num_classes, 128, 128.0, static_cast<double>(num_classes),
                                     mix_seed(seed, 2));
    g.fc2.bias.assign(static_cast<std::size_t>(num_classes), T(0));
    return g;
}

template <typename T>
FeatureMatrixT<T> net_forward(LayerGraphT<T>& graph, const MultiLevelBatch& batch,
                              const NetRunOptions& options, ForwardCacheT<T>* cache) {
    if (cache) cache->blocks.resize(graph.blocks.size());

    const SuperPsh* finest = &batch.at_resolution(1 << graph.level_max);
    FeatureMatrixT<T> data = convert_matrix<T>(finest->data);
    if (data.rows != graph.input_channels)
        throw std::runtime_error("input channel count does not match the graph");

    for (std::size_t i = 0; i < graph.blocks.size(); ++i) {
        ConvBlockT<T>& block = graph.blocks[i];
        const SuperPsh& s = batch.at_resolution(1 << block.level);
        BlockCache<T>* bc = cache ? &cache->blocks[i] : nullptr;

        FeatureMatrixT<T> cols = hash2col(s, data, s, block.conv_spec);
        FeatureMatrixT<T> conv_out = matmul(block.conv.w, cols);
        if (bc) {
            bc->input = std::move(data);
            bc->cols = std::move(cols);
        }
        BatchNormCache<T> bn_cache;
        const bool track = options.training;
        BatchNormStats<T> scratch_stats = block.bn;
        BatchNormStats<T>& stats =
            (track && options.update_running_stats) ? block.bn : scratch_stats;
        FeatureMatrixT<T> bn_out =
            batch_norm_forward(conv_out, stats, track, bc ? &bn_cache : nullptr);
        FeatureMatrixT<T> relu_out = relu_forward(bn_out);

        if (block.level > 2) {
            const SuperPsh& coarser = batch.at_resolution(1 << (block.level - 1));
            MaxPoolResult<T> pooled = max_pool(s, relu_out, coarser, block.pool_spec);
            data = std::move(pooled.output);
            if (bc) {
                bc->bn = std::move(bn_cache);
                bc->relu_out = std::move(relu_out);
                bc->pool_switches = std::move(pooled.switches);
            }
        } else {
            FeatureMatrixT<T> head_in =
                final_dense_pool(s, relu_out, cache ? &cache->head_pool_src : nullptr);
            if (bc) {
                bc->bn = std::move(bn_cache);
                bc->relu_out = std::move(relu_out);
            }
            data = std::move(head_in);
        }
    }

    // head: dropout -> FC(128) -> dropout -> FC(num_classes)
    FeatureMatrixT<T> fc1_in =
        dropout_forward(data, options.training ? graph.dropout_ratio : T(0),
                        mix_seed(options.dropout_seed, 1), options.training,
                        cache ? &cache->drop1 : nullptr);
    FeatureMatrixT<T> fc1_out = dense_forward(graph.fc1, fc1_in);
    FeatureMatrixT<T> fc2_in =
        dropout_forward(fc1_out, options.training ? graph.dropout_ratio : T(0),
                        mix_seed(options.dropout_seed, 2), options.training,
                        cache ? &cache->drop2 : nullptr);
    FeatureMatrixT<T> scores = dense_forward(graph.fc2, fc2_in);
    if (cache) {
        cache->head_in = std::move(data);
        cache->fc1_in = std::move(fc1_in);
        cache->fc1_out = std::move(fc1_out);
        cache->fc2_in = std::move(fc2_in);
    }
    return scores;
}

template <typename T>
T net_loss_and_gradients(LayerGraphT<T>& graph, const MultiLevelBatch& batch,
                         const std::vector<int>& labels, const NetRunOptions& options,
                         NetGradientsT<T>* gradients) {
    const int b = batch.batch();
    if (static_cast<int>(labels.size()) != b)
        throw std::invalid_argument("label count does not match batch size");
    for (const int label : labels)
        if (label < 0 || label >= graph.num_classes)
            throw std::invalid_argument("label out of range");

    ForwardCacheT<T> cache;
    FeatureMatrixT<T> scores = net_forward(graph, batch, options, &cache);

    // softmax cross-entropy over columns
    FeatureMatrixT<T> dscores(scores.rows, scores.cols);
    double loss = 0;
    for (std::int64_t j = 0; j < scores.cols; ++j) {
        T max_score = scores.at(0, j);
        for (std::int64_t r = 1; r < scores.rows; ++r)
            max_score = std::max(max_score, scores.at(r, j));
        double denom = 0;
        for (std::int64_t r = 0; r < scores.rows; ++r)
            denom += std::exp(static_cast<double>(scores.at(r, j) - max_score));
        const int label = labels[static_cast<std::size_t>(j)];
        const double log_p =
            static_cast<double>(scores.at(label, j) - max_score) - std::log(denom);
        loss -= log_p;
        for (std::int64_t r = 0; r < scores.rows; ++r) {
            const double p = std::exp(static_cast<double>(scores.at(r, j) - max_score)) / denom;
            dscores.at(r, j) = static_cast<T>((p - (r == label ? 1.0 : 0.0)) / b);
        }
    }
    loss /= b;
    if (!gradients) return static_cast<T>(loss);

    // head backward
    NetGradientsT<T>& g = *gradients;
    g.conv.resize(graph.blocks.size());
    g.fc2_w = matmul_trans_b(dscores, cache.fc2_in);
    g.fc2_b = row_sums(dscores);
    FeatureMatrixT<T> d_fc2_in = matmul_trans_a(graph.fc2.weights, dscores);
    FeatureMatrixT<T> d_fc1_out = dropout_backward(d_fc2_in, cache.drop2, graph.dropout_ratio);
    g.fc1_w = matmul_trans_b(d_fc1_out, cache.fc1_in);
    g.fc1_b = row_sums(d_fc1_out);
    FeatureMatrixT<T> d_fc1_in = matmul_trans_a(graph.fc1.weights, d_fc1_out);
    FeatureMatrixT<T> d_head = dropout_backward(d_fc1_in, cache.drop1, graph.dropout_ratio);

    // blocks, coarsest first
    FeatureMatrixT<T> d_carry;
    for (std::size_t idx = graph.blocks.size(); idx-- > 0;) {
        ConvBlockT<T>& block = graph.blocks[idx];
        BlockCache<T>& bc = cache.blocks[idx];
        const SuperPsh& s = batch.at_resolution(1 << block.level);

        FeatureMatrixT<T> d_relu;
        if (block.level > 2) {
            const SuperPsh& coarser = batch.at_resolution(1 << (block.level - 1));
            d_relu = max_unpool(d_carry, bc.pool_switches, s, coarser, block.pool_spec);
        } else {
            d_relu = final_dense_pool_backward(d_head, cache.head_pool_src, bc.relu_out.rows,
                                               bc.relu_out.cols);
        }
        FeatureMatrixT<T> d_bn = relu_backward(d_relu, bc.relu_out);
        FeatureMatrixT<T> d_conv = batch_norm_backward(d_bn, bc.bn);
        ConvGradients<T> conv_grads =
            conv_backward(d_conv, block.conv, bc.cols, s, s, block.conv_spec);
        g.conv[idx] = std::move(conv_grads.weights);
        d_carry = std::move(conv_grads.input);
    }
    g.input = std::move(d_carry);
    return static_cast<T>(loss);
}

template <typename T>
SgdStateT<T> make_sgd_state(const LayerGraphT<T>& graph) {
    SgdStateT<T> state;
    for (const ConvBlockT<T>& block : graph.blocks)
        state.conv_v.emplace_back(block.conv.w.rows, block.conv.w.cols);
    state.fc1_w_v = FeatureMatrixT<T>(graph.fc1.weights.rows, graph.fc1.weights.cols);
    state.fc2_w_v = FeatureMatrixT<T>(graph.fc2.weights.rows, graph.fc2.weights.cols);
    state.fc1_b_v.assign(graph.fc1.bias.size(), T(0));
    state.fc2_b_v.assign(graph.fc2.bias.size(), T(0));
    return state;
}

namespace {

template <typename T>
void sgd_update(std::vector<T>& w, std::vector<T>& v, const std::vector<T>& g, T lr, T momentum,
                T weight_decay) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + lr * (g[i] + weight_decay * w[i]);
        w[i] -= v[i];
    }
}

}  // namespace

template <typename T>
T train_step(LayerGraphT<T>& graph, const MultiLevelBatch& batch, const std::vector<int>& labels,
             const TrainConfig& config, SgdStateT<T>& state) {
    NetRunOptions options;
    options.training = true;
    options.update_running_stats = true;
    options.dropout_seed = mix_seed(config.seed, 0xD0 + state.step);

    NetGradientsT<T> grads;
    const T loss = net_loss_and_gradients(graph, batch, labels, options, &grads);

    const T lr = static_cast<T>(config.lr_at_epoch(state.epoch));
    const T momentum = static_cast<T>(config.momentum);
    const T wd = static_cast<T>(config.weight_decay);
    for (std::size_t i = 0; i < graph.blocks.size(); ++i)
        sgd_update(graph.blocks[i].conv.w.values, state.conv_v[i].values, grads.conv[i].values,
                   lr, momentum, wd);
    sgd_update(graph.fc1.weights.values, state.fc1_w_v.values, grads.fc1_w.values, lr, momentum,
               wd);
    sgd_update(graph.fc1.bias, state.fc1_b_v, grads.fc1_b, lr, momentum, wd);
    sgd_update(graph.fc2.weights.values, state.fc2_w_v.values, grads.fc2_w.values, lr, momentum,
               wd);
    sgd_update(graph.fc2.bias, state.fc2_b_v, grads.fc2_b, lr, momentum, wd);
    ++state.step;
    return loss;
}

template <typename T>
double evaluate(LayerGraphT<T>& graph, const std::vector<EvalSample>& samples, int voting,
                int batch_size) {
    if (samples.empty()) return 0.0;
    std::vector<std::vector<T>> scores(samples.size());

    NetRunOptions options;  // inference mode
    for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<const ModelPyramid*> members;
        for (std::size_t i = begin; i < end; ++i) members.push_back(&samples[i].levels);
        const MultiLevelBatch batch = build_batch(members);
        FeatureMatrixT<T> s = net_forward(graph, batch, options,
                                          static_cast<ForwardCacheT<T>*>(nullptr));
        for (std::size_t i = begin; i < end; ++i) {
            scores[i].resize(static_cast<std::size_t>(s.rows));
            for (std::int64_t r = 0; r < s.rows; ++r)
                scores[i][static_cast<std::size_t>(r)] = s.at(r, static_cast<std::int64_t>(i - begin));
        }
    }

    // group -> (label, accumulated scores over voted poses)
    std::map<int, std::pair<int, std::vector<double>>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const EvalSample& sample = samples[i];
        const bool use = voting <= 1 ? sample.pose == 0 : sample.pose < voting;
        if (!use) continue;
        auto& entry = groups[sample.group];
        entry.first = sample.label;
        if (entry.second.empty()) entry.second.assign(scores[i].size(), 0.0);
        for (std::size_t r = 0; r < scores[i].size(); ++r) entry.second[r] += scores[i][r];
    }
    std::int64_t correct = 0;
    for (const auto& [group, entry] : groups) {
        const auto& acc = entry.second;
        const std::size_t best =
            static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
        if (static_cast<int>(best) == entry.first) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(groups.size());
}

TrainSummary train_classifier(LayerGraph& graph, const std::vector<EvalSample>& train_set,
                              const TrainConfig& config, std::ostream* log) {
    TrainSummary summary;
    SgdStateT<float> state = make_sgd_state(graph);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        state.epoch = epoch;
        Rng shuffle_rng(mix_seed(config.seed, 0xE0000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0;
        int batches = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            std::vector<const ModelPyramid*> members;
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) {
                members.push_back(&train_set[order[i]].levels);
                labels.push_back(train_set[order[i]].label);
            }
            const MultiLevelBatch batch = build_batch(members);
            epoch_loss += train_step(graph, batch, labels, config, state);
            ++batches;
        }
        summary.epoch_losses.push_back(static_cast<float>(epoch_loss / batches));
        if (log)
            *log << "epoch " << epoch << " loss " << summary.epoch_losses.back() << " lr "
                 << config.lr_at_epoch(epoch) << "\n";
    }
    return summary;
}

namespace {

struct TensorRef {
    std::string name;
    std::vector<std::uint32_t> dims;
    float* data;
    std::size_t count;
};

std::vector<TensorRef> graph_tensors(LayerGraph& g) {
    std::vector<TensorRef> tensors;
    for (ConvBlockT<float>& block : g.blocks) {
        const std::string prefix = "block" + std::to_string(block.level);
        tensors.push_back({prefix + ".conv.w",
                           {static_cast<std::uint32_t>(block.conv.w.rows),
                            static_cast<std::uint32_t>(block.conv.w.cols)},
                           block.conv.w.values.data(), block.conv.w.values.size()});
        tensors.push_back({prefix + ".bn.mean",
                           {static_cast<std::uint32_t>(block.bn.running_mean.size())},
                           block.bn.running_mean.data(), block.bn.running_mean.size()});
        tensors.push_back({prefix + ".bn.var",
                           {static_cast<std::uint32_t>(block.bn.running_var.size())},
                           block.bn.running_var.data(), block.bn.running_var.size()});
    }
    auto add_dense = [&tensors](const std::string& name, DenseLayerT<float>& layer) {
        tensors.push_back({name + ".w",
                           {static_cast<std::uint32_t>(layer.weights.rows),
                            static_cast<std::uint32_t>(layer.weights.cols)},
                           layer.weights.values.data(), layer.weights.values.size()});
        tensors.push_back({name + ".b", {static_cast<std::uint32_t>(layer.bias.size())},
                           layer.bias.data(), layer.bias.size()});
    };
    add_dense("fc1", g.fc1);
    add_dense("fc2", g.fc2);
    return tensors;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const LayerGraph& graph) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    LayerGraph& g = const_cast<LayerGraph&>(graph);
    std::vector<TensorRef> tensors = graph_tensors(g);

    out.write("HCP1", 4);
    write_u32(out, 1);  // version
    write_u32(out, static_cast<std::uint32_t>(graph.level_max));
    write_u32(out, static_cast<std::uint32_t>(graph.num_classes));
    write_u32(out, static_cast<std::uint32_t>(graph.input_channels));
    const float ratio = graph.dropout_ratio;
    out.write(reinterpret_cast<const char*>(&ratio), sizeof ratio);

    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    std::uint64_t offset = 0;
    for (const TensorRef& t : tensors) {
        write_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (const std::uint32_t d : t.dims) write_u32(out, d);
        out.write(reinterpret_cast<const char*>(&offset), sizeof offset);
        offset += t.count * sizeof(float);
    }
    out.write(reinterpret_cast<const char*>(&offset), sizeof offset);  // payload size
    for (const TensorRef& t : tensors)
        out.write(reinterpret_cast<const char*>(t.data),
                  static_cast<std::streamsize>(t.count * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

LayerGraph load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, "HCP1", 4) != 0)
        throw std::runtime_error("not a checkpoint file");
    if (read_u32(in) != 1) throw std::runtime_error("unsupported checkpoint version");
    const int level_max = static_cast<int>(read_u32(in));
    const int num_classes = static_cast<int>(read_u32(in));
    const int input_channels = static_cast<int>(read_u32(in));
    float ratio = 0.5f;
    in.read(reinterpret_cast<char*>(&ratio), sizeof ratio);

    LayerGraph graph = make_graph<float>(level_max, num_classes, 0, input_channels);
    graph.dropout_ratio = ratio;
    std::vector<TensorRef> tensors = graph_tensors(graph);

    const std::uint32_t count = read_u32(in);
    if (count != tensors.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    struct Entry {
        std::string name;
        std::vector<std::uint32_t> dims;
        std::uint64_t offset;
    };
    std::vector<Entry> entries(count);
    for (Entry& e : entries) {
        const std::uint32_t name_len = read_u32(in);
        e.name.resize(name_len);
        if (!in.read(e.name.data(), name_len)) throw std::runtime_error("truncated checkpoint");
        const std::uint32_t rank = read_u32(in);
        e.dims.resize(rank);
        for (auto& d : e.dims) d = read_u32(in);
        if (!in.read(reinterpret_cast<char*>(&e.offset), sizeof e.offset))
            throw std::runtime_error("truncated checkpoint");
    }
    std::uint64_t payload = 0;
    if (!in.read(reinterpret_cast<char*>(&payload), sizeof payload))
        throw std::runtime_error("truncated checkpoint");

    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const Entry& e = entries[i];
        TensorRef& t = tensors[i];
        if (e.name != t.name || e.dims != t.dims)
            throw std::runtime_error("checkpoint tensor mismatch: " + e.name);
        if (!in.read(reinterpret_cast<char*>(t.data),
                     static_cast<std::streamsize>(t.count * sizeof(float))))
            throw std::runtime_error("truncated checkpoint");
    }
    return graph;
}

#define HASHCONV_INSTANTIATE_NET(T)                                                              \
    template LayerGraphT<T> make_graph<T>(int, int, std::uint64_t, int);                         \
    template FeatureMatrixT<T> net_forward<T>(LayerGraphT<T>&, const MultiLevelBatch&,           \
                                              const NetRunOptions&, ForwardCacheT<T>*);          \
    template T net_loss_and_gradients<T>(LayerGraphT<T>&, const MultiLevelBatch&,                \
                                         const std::vector<int>&, const NetRunOptions&,          \
                                         NetGradientsT<T>*);                                     \
    template SgdStateT<T> make_sgd_state<T>(const LayerGraphT<T>&);                              \
    template T train_step<T>(LayerGraphT<T>&, const MultiLevelBatch&, const std::vector<int>&,   \
                             const TrainConfig&, SgdStateT<T>&);                                 \
    template double evaluate<T>(LayerGraphT<T>&, const std::vector<EvalSample>&, int, int);

HASHCONV_INSTANTIATE_NET(float)
HASHCONV_INSTANTIATE_NET(double)

#undef HASHCONV_INSTANTIATE_NET

}  // namespace hashconv
