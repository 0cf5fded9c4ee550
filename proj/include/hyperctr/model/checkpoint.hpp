#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/model/config.hpp"
#include "hyperctr/model/hyperctr.hpp"
#include "hyperctr/numerics/serialize.hpp"

namespace hyperctr {

inline constexpr const char* kCheckpointMagic = "HYPERCTR-CKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::vector<Modality> modalities;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<ModalityMask> interests;  // active modalities the graphs were built with
  ParameterStore params;
};

inline constexpr const char* kInterestTensor = "context.interests";

inline std::string join_modalities(const std::vector<Modality>& mods) {
  std::string out;
  for (Modality m : mods) out += (out.empty() ? "" : ",") + std::string(modality_name(m));
  return out;
}

inline std::vector<Modality> parse_modality_list(const std::string& text) {
  std::vector<Modality> out;
  if (trim(text).empty()) return out;
  for (const auto& name : split(text, ',')) {
    auto m = parse_modality(trim(name));
    if (!m) throw ConfigError("unknown modality '" + name + "'");
    if (std::find(out.begin(), out.end(), *m) != out.end()) throw ConfigError("modality listed twice: " + name);
    out.push_back(*m);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Parameter values followed by their Adam moments ("<name>@m1", "<name>@m2").
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  TensorFile tf;
  for (const auto& [k, v] : ck.config.to_key_values()) tf.meta["config." + k] = v;
  tf.meta["modalities"] = join_modalities(ck.modalities);
  tf.meta["num_users"] = std::to_string(ck.num_users);
  tf.meta["num_items"] = std::to_string(ck.num_items);
  Matrix active(static_cast<Index>(ck.interests.size()), static_cast<Index>(kMaxModalities));
  for (std::size_t u = 0; u < ck.interests.size(); ++u) {
    for (std::size_t m = 0; m < kMaxModalities; ++m) active(static_cast<Index>(u), static_cast<Index>(m)) = ck.interests[u][m];
  }
  tf.tensors.emplace_back(kInterestTensor, std::move(active));
  for (const auto& p : ck.params.all()) tf.tensors.emplace_back(p.name, p.value);
  for (const auto& p : ck.params.all()) {
    tf.tensors.emplace_back(p.name + "@m1", p.moment1);
    tf.tensors.emplace_back(p.name + "@m2", p.moment2);
  }
  write_tensor_file(path, kCheckpointMagic, kCheckpointVersion, tf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const TensorFile tf = read_tensor_file(path, kCheckpointMagic, kCheckpointVersion);
  Checkpoint ck;
  KeyValues cfg;
  for (const auto& [k, v] : tf.meta) {
    if (k.rfind("config.", 0) == 0) cfg[k.substr(7)] = v;
  }
  ck.config = TrainConfig::from_key_values(cfg);
  auto get = [&](const std::string& key) {
    auto it = tf.meta.find(key);
    if (it == tf.meta.end()) throw IoError(path + ": missing '" + key + "'");
    return it->second;
  };
  ck.modalities = parse_modality_list(get("modalities"));
  if (!parse_number(get("num_users"), ck.num_users) || !parse_number(get("num_items"), ck.num_items)) {
    throw IoError(path + ": malformed counts");
  }
  const Matrix& active = tf.tensor(kInterestTensor);
  if (active.cols() != static_cast<Index>(kMaxModalities)) throw IoError(path + ": malformed interest table");
  for (Index u = 0; u < active.rows(); ++u) {
    ModalityMask mask{};
    for (Index m = 0; m < active.cols(); ++m) mask[static_cast<std::size_t>(m)] = active(u, m) != 0.0 ? 1 : 0;
    ck.interests.push_back(mask);
  }
  for (const auto& [name, m] : tf.tensors) {
    if (name.find('@') != std::string::npos || name == kInterestTensor) continue;
    Parameter& p = ck.params.add(name, m);
    p.moment1 = tf.tensor(name + "@m1");
    p.moment2 = tf.tensor(name + "@m2");
  }
  return ck;
}

inline constexpr const char* kMetricsHeader = "epoch,split,auc,logloss,loss,seconds";

inline std::string metrics_row(const EpochLog& row) {
  char secs[32];
  std::snprintf(secs, sizeof(secs), "%.3f", row.seconds);
  return std::to_string(row.epoch) + ',' + row.split + ',' + format_double(row.auc) + ',' + format_double(row.logloss) +
         ',' + format_double(row.loss) + ',' + secs;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << metrics_row(r) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace hyperctr
