#include "hashconv/train_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hashconv {

float TrainConfig::lr_at_epoch(int epoch) const {
    const int drops = lr_decay_epochs > 0 ? epoch / lr_decay_epochs : 0;
    return lr / std::pow(lr_decay_factor, static_cast<float>(drops));
}

void TrainConfig::validate() const {
    if (lr <= 0 || momentum < 0 || momentum >= 1 || weight_decay < 0)
        throw std::invalid_argument("bad optimizer parameters");
    if (batch_size < 1 || epochs < 1) throw std::invalid_argument("bad batch size or epoch count");
    if (dropout < 0 || dropout >= 1) throw std::invalid_argument("dropout must be in [0,1)");
    if (lr_decay_epochs < 1 || lr_decay_factor < 1)
        throw std::invalid_argument("learning-rate schedule must be non-increasing");
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        const std::size_t eq = key.find('=');
        std::string value;
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.erase(eq);
            if (value.empty()) ls >> value;
        } else {
            std::string eq_tok;
            ls >> eq_tok;
            if (eq_tok == "=") ls >> value;
            else if (!eq_tok.empty() && eq_tok[0] == '=') value = eq_tok.substr(1);
        }
        if (value.empty())
            throw std::runtime_error("config parse failure at line " + std::to_string(lineno));
        try {
            if (key == "lr") c.lr = std::stof(value);
            else if (key == "momentum") c.momentum = std::stof(value);
            else if (key == "weight_decay") c.weight_decay = std::stof(value);
            else if (key == "batch_size") c.batch_size = std::stoi(value);
            else if (key == "dropout") c.dropout = std::stof(value);
            else if (key == "lr_decay_epochs") c.lr_decay_epochs = std::stoi(value);
            else if (key == "lr_decay_factor") c.lr_decay_factor = std::stof(value);
            else if (key == "epochs") c.epochs = std::stoi(value);
            else if (key == "seed") c.seed = std::stoull(value);
            else throw std::runtime_error("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("config parse failure at line " + std::to_string(lineno));
        }
    }
    c.validate();
    return c;
}

void save_train_config(const std::string& path, const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << "lr=" << config.lr << "\n"
        << "momentum=" << config.momentum << "\n"
        << "weight_decay=" << config.weight_decay << "\n"
        << "batch_size=" << config.batch_size << "\n"
        << "dropout=" << config.dropout << "\n"
        << "lr_decay_epochs=" << config.lr_decay_epochs << "\n"
        << "lr_decay_factor=" << config.lr_decay_factor << "\n"
        << "epochs=" << config.epochs << "\n"
        << "seed=" << config.seed << "\n";
}

}  // namespace hashconv
