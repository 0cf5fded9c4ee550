#pragma once

#include <cstdint>
#include <string>

#include "hyperctr/data/slots.hpp"
#include "hyperctr/errors.hpp"
#include "hyperctr/kv.hpp"
#include "hyperctr/numerics/matrix.hpp"

namespace hyperctr {

struct TrainConfig {
  Index dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 1;
  bool positional = false;
  std::size_t hgcn_layers = 3;
  std::size_t neighbor_size = 20;
  bool use_hypergraph = true;
  // Training batches see graphs built without their own fold of clicks.
  std::size_t graph_folds = 5;
  std::size_t mlp_hidden1 = 0;  // 0 means 2 * dim
  std::size_t mlp_hidden2 = 0;  // 0 means dim
  std::size_t seq_len = 20;
  std::int64_t granularity_months = 3;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  std::string optimizer = "adam";
  double init_std = 0.1;

  Index hidden1() const { return mlp_hidden1 == 0 ? 2 * dim : static_cast<Index>(mlp_hidden1); }
  Index hidden2() const { return mlp_hidden2 == 0 ? dim : static_cast<Index>(mlp_hidden2); }
  std::int64_t granularity_seconds() const { return granularity_months * kSecondsPerMonth; }

  void validate() const {
    if (dim <= 0 || heads == 0 || dim % static_cast<Index>(heads) != 0) throw ConfigError("dim must be positive and divisible by heads");
    if (blocks == 0) throw ConfigError("blocks must be >= 1");
    if (graph_folds == 0) throw ConfigError("graph_folds must be >= 1");
    if (neighbor_size == 0) throw ConfigError("neighbor_size must be >= 1");
    if (seq_len == 0) throw ConfigError("seq_len must be >= 1");
    if (granularity_months <= 0) throw ConfigError("granularity_months must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must lie in [0, 1]");
    if (!(l2 >= 0.0 && l2 <= 1.0)) throw ConfigError("l2 must lie in [0, 1]");
    if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
    if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  }

  KeyValues to_key_values() const {
    return {{"dim", std::to_string(dim)},
            {"heads", std::to_string(heads)},
            {"blocks", std::to_string(blocks)},
            {"positional", positional ? "true" : "false"},
            {"hgcn_layers", std::to_string(hgcn_layers)},
            {"neighbor_size", std::to_string(neighbor_size)},
            {"use_hypergraph", use_hypergraph ? "true" : "false"},
            {"graph_folds", std::to_string(graph_folds)},
            {"mlp_hidden1", std::to_string(mlp_hidden1)},
            {"mlp_hidden2", std::to_string(mlp_hidden2)},
            {"seq_len", std::to_string(seq_len)},
            {"granularity_months", std::to_string(granularity_months)},
            {"batch_size", std::to_string(batch_size)},
            {"learning_rate", format_double(learning_rate)},
            {"l2", format_double(l2)},
            {"epochs", std::to_string(epochs)},
            {"seed", std::to_string(seed)},
            {"split_seed", std::to_string(split_seed)},
            {"optimizer", optimizer},
            {"init_std", format_double(init_std)}};
  }

  // Applies known keys; returns false for a key this config does not own.
  bool apply(const std::string& key, const std::string& value) {
    auto num = [&](auto& field) {
      if (!parse_number(value, field)) throw ConfigError("invalid value '" + value + "' for " + key);
    };
    auto flag = [&](bool& field) {
      if (value == "true" || value == "1") {
        field = true;
      } else if (value == "false" || value == "0") {
        field = false;
      } else {
        throw ConfigError("invalid boolean '" + value + "' for " + key);
      }
    };
    if (key == "dim") num(dim);
    else if (key == "heads") num(heads);
    else if (key == "blocks") num(blocks);
    else if (key == "positional") flag(positional);
    else if (key == "hgcn_layers") num(hgcn_layers);
    else if (key == "neighbor_size") num(neighbor_size);
    else if (key == "use_hypergraph") flag(use_hypergraph);
    else if (key == "graph_folds") num(graph_folds);
    else if (key == "mlp_hidden1") num(mlp_hidden1);
    else if (key == "mlp_hidden2") num(mlp_hidden2);
    else if (key == "seq_len") num(seq_len);
    else if (key == "granularity_months") num(granularity_months);
    else if (key == "batch_size") num(batch_size);
    else if (key == "learning_rate") num(learning_rate);
    else if (key == "l2") num(l2);
    else if (key == "epochs") num(epochs);
    else if (key == "seed") num(seed);
    else if (key == "split_seed") num(split_seed);
    else if (key == "optimizer") optimizer = value;
    else if (key == "init_std") num(init_std);
    else return false;
    return true;
  }

  static TrainConfig from_key_values(const KeyValues& kv) {
    TrainConfig cfg;
    for (const auto& [k, v] : kv) {
      if (!cfg.apply(k, v)) throw ConfigError("unknown config key '" + k + "'");
    }
    cfg.validate();
    return cfg;
  }
};

}  // namespace hyperctr
