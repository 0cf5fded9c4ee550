#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/kv.hpp"

namespace hyperctr {

inline constexpr std::string_view kInteractionHeader = "user,item,timestamp,label";

// Dense index <-> raw identifier. Dense ids follow sorted raw order (numeric
// when every raw id is an integer), so already-dense integer ids map to themselves.
class IdMap {
 public:
  IdMap() = default;

  static IdMap from_raw(const std::vector<std::string>& raw_ids) {
    std::vector<std::string> uniq(raw_ids.begin(), raw_ids.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    bool numeric = true;
    for (const auto& s : uniq) {
      long long v;
      if (!parse_number(s, v)) {
        numeric = false;
        break;
      }
    }
    if (numeric) {
      std::sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
        long long x = 0, y = 0;
        parse_number(a, x);
        parse_number(b, y);
        return x < y;
      });
    }
    IdMap m;
    m.raw_ = std::move(uniq);
    for (std::size_t i = 0; i < m.raw_.size(); ++i) m.index_.emplace(m.raw_[i], static_cast<std::uint32_t>(i));
    return m;
  }

  std::size_t size() const { return raw_.size(); }
  const std::vector<std::string>& raw() const { return raw_; }
  std::optional<std::uint32_t> find(const std::string& raw) const {
    auto it = index_.find(raw);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::uint32_t at(const std::string& raw) const {
    auto id = find(raw);
    if (!id) throw ValidationError("unknown id '" + raw + "'");
    return *id;
  }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct LoadOptions {
  // When set, a numeric rating >= threshold becomes label 1 and anything else 0.
  std::optional<double> binarize_threshold;
};

struct RawInteraction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
  std::uint8_t label = 0;
};

inline std::vector<RawInteraction> read_raw_interactions(const std::string& path, const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (trim(line).empty()) continue;
      if (trim(line) != kInteractionHeader) {
        throw ParseError(path, lineno, "expected header '" + std::string(kInteractionHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    if (trim(line).empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw ParseError(path, lineno, "expected 4 columns, got " + std::to_string(cols.size()));
    RawInteraction r;
    r.user = trim(cols[0]);
    r.item = trim(cols[1]);
    if (r.user.empty() || r.item.empty()) throw ParseError(path, lineno, "empty user or item id");
    if (!parse_number(cols[2], r.timestamp)) throw ParseError(path, lineno, "bad timestamp '" + cols[2] + "'");
    double label = 0.0;
    if (!parse_number(cols[3], label)) throw ParseError(path, lineno, "bad label '" + cols[3] + "'");
    if (opt.binarize_threshold) {
      r.label = label >= *opt.binarize_threshold ? 1 : 0;
    } else if (label == 0.0 || label == 1.0) {
      r.label = static_cast<std::uint8_t>(label);
    } else {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": label " + trim(cols[3]) +
                            " is not binary (use a binarize threshold for ratings)");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

struct LoadedInteractions {
  std::vector<InteractionRecord> records;
  IdMap users;
  IdMap items;
};

inline std::vector<InteractionRecord> densify(const std::vector<RawInteraction>& rows, const IdMap& users, const IdMap& items) {
  std::vector<InteractionRecord> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(InteractionRecord{users.at(r.user), items.at(r.item), r.timestamp, r.label});
  return out;
}

// Records come back in file order with 0-based contiguous ids.
inline LoadedInteractions load_interactions(const std::string& path, const LoadOptions& opt = {}) {
  const auto rows = read_raw_interactions(path, opt);
  std::vector<std::string> u, i;
  u.reserve(rows.size());
  i.reserve(rows.size());
  for (const auto& r : rows) {
    u.push_back(r.user);
    i.push_back(r.item);
  }
  LoadedInteractions out;
  out.users = IdMap::from_raw(u);
  out.items = IdMap::from_raw(i);
  out.records = densify(rows, out.users, out.items);
  return out;
}

inline void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << kInteractionHeader << '\n';
  for (const auto& r : records) {
    out << r.user << ',' << r.item << ',' << r.timestamp << ',' << static_cast<int>(r.label) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

inline void write_id_map(const std::string& path, const std::vector<std::string>& raw) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "dense,raw\n";
  for (std::size_t i = 0; i < raw.size(); ++i) out << i << ',' << raw[i] << '\n';
}

struct RawFeatureRows {
  std::vector<std::string> item_ids;
  std::vector<std::vector<double>> rows;
};

// `item,f0,f1,...` header, then one row per item that carries this modality.
inline RawFeatureRows read_feature_file(const std::string& path, Index dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  RawFeatureRows out;
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) continue;
    if (trim(line).empty()) continue;
    const auto cols = split(line, ',');
    if (static_cast<Index>(cols.size()) != dim + 1) {
      throw ParseError(path, lineno, "expected " + std::to_string(dim + 1) + " columns, got " + std::to_string(cols.size()));
    }
    std::string id = trim(cols[0]);
    if (!seen.insert(id).second) throw ParseError(path, lineno, "duplicate item '" + id + "'");
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (Index j = 0; j < dim; ++j) {
      if (!parse_number(cols[static_cast<std::size_t>(j + 1)], v[static_cast<std::size_t>(j)])) {
        throw ParseError(path, lineno, "bad feature value '" + cols[static_cast<std::size_t>(j + 1)] + "'");
      }
    }
    out.item_ids.push_back(std::move(id));
    out.rows.push_back(std::move(v));
  }
  return out;
}

inline void write_feature_file(const std::string& path, const ModalFeatureStore& store, Modality m,
                               const std::vector<std::string>& item_ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const Matrix& f = store.features(m);
  out << "item";
  for (Index j = 0; j < f.cols(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < store.num_items(); ++i) {
    if (!store.present(i, m)) continue;
    out << (item_ids.empty() ? std::to_string(i) : item_ids[i]);
    for (Index j = 0; j < f.cols(); ++j) out << ',' << format_double(f(static_cast<Index>(i), j));
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

// Per-user planted dominant modality, written by the synthetic generator.
struct GroundTruthFile {
  std::vector<std::string> user_ids;
  std::vector<Modality> dominant;
};

inline GroundTruthFile read_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  GroundTruthFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || trim(line).empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() < 2) throw ParseError(path, lineno, "expected user,dominant_modality");
    auto m = parse_modality(trim(cols[1]));
    if (!m) throw ParseError(path, lineno, "unknown modality '" + cols[1] + "'");
    out.user_ids.push_back(trim(cols[0]));
    out.dominant.push_back(*m);
  }
  return out;
}

struct LoadedDataset {
  Dataset dataset;
  // Dense-user-indexed planted modality, when the directory carries ground truth.
  std::optional<std::vector<Modality>> dominant_truth;
  KeyValues manifest;
};

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

// Reads a dataset directory described by manifest.txt.
inline LoadedDataset load_dataset(const std::string& dir, const LoadOptions& opt = {}) {
  LoadedDataset out;
  out.manifest = read_key_values(join_path(dir, "manifest.txt"));
  const auto& mf = out.manifest;
  auto get = [&](const std::string& key) -> std::string {
    auto it = mf.find(key);
    if (it == mf.end()) throw ConfigError("manifest missing key '" + key + "'");
    return it->second;
  };
  const auto rows = read_raw_interactions(join_path(dir, get("interactions")), opt);

  std::vector<Modality> modalities;
  const std::string mod_list = mf.count("modalities") ? mf.at("modalities") : std::string();
  if (!mod_list.empty()) {
    for (const auto& name : split(mod_list, ',')) {
      auto m = parse_modality(trim(name));
      if (!m) throw ConfigError("manifest lists unknown modality '" + name + "'");
      modalities.push_back(*m);
    }
  }
  std::vector<std::pair<Modality, RawFeatureRows>> raw_features;
  std::vector<std::string> item_raw;
  std::vector<std::string> user_raw;
  for (const auto& r : rows) {
    user_raw.push_back(r.user);
    item_raw.push_back(r.item);
  }
  for (Modality m : modalities) {
    const std::string name(modality_name(m));
    Index dim = 0;
    if (!parse_number(get(name + ".dim"), dim) || dim <= 0) throw ConfigError("bad dimension for " + name);
    auto feats = read_feature_file(join_path(dir, get(name + ".file")), dim);
    item_raw.insert(item_raw.end(), feats.item_ids.begin(), feats.item_ids.end());
    raw_features.emplace_back(m, std::move(feats));
  }
  std::optional<GroundTruthFile> truth;
  if (mf.count("ground_truth") != 0) {
    truth = read_ground_truth(join_path(dir, mf.at("ground_truth")));
    user_raw.insert(user_raw.end(), truth->user_ids.begin(), truth->user_ids.end());
  }

  const IdMap users = IdMap::from_raw(user_raw);
  const IdMap items = IdMap::from_raw(item_raw);
  Dataset& ds = out.dataset;
  ds.num_users = users.size();
  ds.num_items = items.size();
  ds.user_ids = users.raw();
  ds.item_ids = items.raw();
  ds.records = densify(rows, users, items);
  ds.features = ModalFeatureStore(ds.num_items);
  for (auto& [m, feats] : raw_features) {
    const Index dim = feats.rows.empty() ? 0 : static_cast<Index>(feats.rows.front().size());
    Index want = 0;
    parse_number(get(std::string(modality_name(m)) + ".dim"), want);
    Matrix f = Matrix::Zero(static_cast<Index>(ds.num_items), dim == 0 ? want : dim);
    std::vector<std::uint8_t> present(ds.num_items, 0);
    for (std::size_t k = 0; k < feats.item_ids.size(); ++k) {
      const auto id = items.at(feats.item_ids[k]);
      present[id] = 1;
      for (std::size_t j = 0; j < feats.rows[k].size(); ++j) f(id, static_cast<Index>(j)) = feats.rows[k][j];
    }
    ds.features.add_modality(m, std::move(f), std::move(present));
  }
  if (truth) {
    std::vector<Modality> dom(ds.num_users, Modality::visual);
    for (std::size_t k = 0; k < truth->user_ids.size(); ++k) dom[users.at(truth->user_ids[k])] = truth->dominant[k];
    out.dominant_truth = std::move(dom);
  }
  ds.validate();
  return out;
}

// Writes interactions, one feature file per modality, the manifest and, when
// given, the ground-truth assignment.
inline void save_dataset(const std::string& dir, const Dataset& ds, const std::vector<Modality>* dominant_truth = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  write_interactions(join_path(dir, "interactions.csv"), ds.records);
  KeyValues mf;
  mf["format"] = "hyperctr-dataset";
  mf["version"] = "1";
  mf["num_users"] = std::to_string(ds.num_users);
  mf["num_items"] = std::to_string(ds.num_items);
  mf["interactions"] = "interactions.csv";
  std::string mods;
  for (Modality m : ds.features.modalities()) {
    const std::string name(modality_name(m));
    if (!mods.empty()) mods += ',';
    mods += name;
    mf[name + ".dim"] = std::to_string(ds.features.dim(m));
    mf[name + ".file"] = "features_" + name + ".csv";
    write_feature_file(join_path(dir, "features_" + name + ".csv"), ds.features, m, {});
  }
  mf["modalities"] = mods;
  if (dominant_truth != nullptr) {
    mf["ground_truth"] = "ground_truth.csv";
    std::ofstream out(join_path(dir, "ground_truth.csv"), std::ios::binary);
    if (!out) throw IoError("cannot write ground truth in " + dir);
    out << "user,dominant_modality\n";
    for (std::size_t u = 0; u < dominant_truth->size(); ++u) out << u << ',' << modality_name((*dominant_truth)[u]) << '\n';
  }
  write_key_values(join_path(dir, "manifest.txt"), mf);
}

}  // namespace hyperctr
