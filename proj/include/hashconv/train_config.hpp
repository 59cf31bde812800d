#pragma once

#include <cstdint>
#include <string>

namespace hashconv {

// key=value training configuration ('#' starts a comment).
struct TrainConfig {
    float lr = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 0.0005f;
    int batch_size = 32;
    float dropout = 0.5f;
    int lr_decay_epochs = 10;    // attenuate every this many epochs
    float lr_decay_factor = 10.0f;
    int epochs = 30;
    std::uint64_t seed = 1;

    float lr_at_epoch(int epoch) const;
    void validate() const;  // throws std::invalid_argument
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const std::string& path, const TrainConfig& config);

}  // namespace hashconv
