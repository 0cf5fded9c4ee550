#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hyperctr/numerics/matrix.hpp"

namespace hyperctr {

// Fixed modality order; it doubles as the tie-break order for interest argmax.
enum class Modality : std::uint8_t { visual = 0, acoustic = 1, textual = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {Modality::visual, Modality::acoustic, Modality::textual};
inline constexpr std::size_t kMaxModalities = 3;

inline std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::acoustic: return "acoustic";
    case Modality::textual: return "textual";
  }
  return "unknown";
}

inline std::optional<Modality> parse_modality(std::string_view name) {
  for (Modality m : kAllModalities) {
    if (modality_name(m) == name) return m;
  }
  return std::nullopt;
}

inline std::size_t modality_index(Modality m) { return static_cast<std::size_t>(m); }

// Per-user active-modality flags, indexed by modality_index.
using ModalityMask = std::array<std::uint8_t, kMaxModalities>;

struct InteractionRecord {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;
  std::uint8_t label = 0;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Per-item dense vectors for each available modality plus a presence mask.
// An absent (item, modality) pair has a zero row that must never be read as data.
class ModalFeatureStore {
 public:
  ModalFeatureStore() = default;
  explicit ModalFeatureStore(std::size_t num_items) : num_items_(num_items) {}

  void add_modality(Modality m, Matrix features, std::vector<std::uint8_t> present) {
    if (has_modality(m)) throw ValidationError("duplicate modality " + std::string(modality_name(m)));
    if (static_cast<std::size_t>(features.rows()) != num_items_ || present.size() != num_items_) {
      throw ShapeError("features for " + std::string(modality_name(m)) + " have " + std::to_string(features.rows()) +
                       " rows, expected " + std::to_string(num_items_));
    }
    for (std::size_t i = 0; i < num_items_; ++i) {
      if (present[i] && !features.row(static_cast<Index>(i)).allFinite()) {
        throw ValidationError("non-finite feature for item " + std::to_string(i) + " in " + std::string(modality_name(m)));
      }
      if (!present[i]) features.row(static_cast<Index>(i)).setZero();
    }
    Entry e{m, std::move(features), std::move(present)};
    auto pos = std::find_if(entries_.begin(), entries_.end(), [m](const Entry& x) { return x.modality > m; });
    entries_.insert(pos, std::move(e));
  }

  std::vector<Modality> modalities() const {
    std::vector<Modality> out;
    for (const auto& e : entries_) out.push_back(e.modality);
    return out;
  }
  std::size_t num_modalities() const { return entries_.size(); }
  bool has_modality(Modality m) const { return find(m) != nullptr; }
  std::size_t num_items() const { return num_items_; }

  const Matrix& features(Modality m) const { return get(m).features; }
  Index dim(Modality m) const { return get(m).features.cols(); }
  bool present(std::size_t item, Modality m) const {
    const Entry* e = find(m);
    return e != nullptr && item < num_items_ && e->present[item] != 0;
  }
  const std::vector<std::uint8_t>& present_mask(Modality m) const { return get(m).present; }

  // Copy restricted to the given modalities (unimodal ablations).
  ModalFeatureStore restricted_to(const std::vector<Modality>& keep) const {
    ModalFeatureStore out(num_items_);
    for (const auto& e : entries_) {
      if (std::find(keep.begin(), keep.end(), e.modality) != keep.end()) {
        out.add_modality(e.modality, e.features, e.present);
      }
    }
    return out;
  }

 private:
  struct Entry {
    Modality modality;
    Matrix features;
    std::vector<std::uint8_t> present;
  };

  const Entry* find(Modality m) const {
    for (const auto& e : entries_) {
      if (e.modality == m) return &e;
    }
    return nullptr;
  }
  const Entry& get(Modality m) const {
    const Entry* e = find(m);
    if (e == nullptr) throw ContractError("modality " + std::string(modality_name(m)) + " not in feature store");
    return *e;
  }

  std::size_t num_items_ = 0;
  std::vector<Entry> entries_;
};

struct Dataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<InteractionRecord> records;
  ModalFeatureStore features;
  std::vector<std::string> user_ids;  // dense id -> raw id
  std::vector<std::string> item_ids;

  void validate() const {
    for (std::size_t r = 0; r < records.size(); ++r) {
      const auto& rec = records[r];
      if (rec.user >= num_users || rec.item >= num_items) {
        throw ValidationError("record " + std::to_string(r) + " references user " + std::to_string(rec.user) +
                              " / item " + std::to_string(rec.item) + " outside " + std::to_string(num_users) + "x" +
                              std::to_string(num_items));
      }
      if (rec.label > 1) throw ValidationError("record " + std::to_string(r) + " has non-binary label");
    }
    if (features.num_items() != num_items && features.num_modalities() != 0) {
      throw ValidationError("feature store covers " + std::to_string(features.num_items()) + " items, dataset has " +
                            std::to_string(num_items));
    }
  }
};

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "unknown";
}

// Random 7:2:1 assignment with exact counts (floor for train/valid, rest test).
inline std::vector<Split> split_records(std::size_t n, std::uint64_t seed, double train_frac = 0.7, double valid_frac = 0.2) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_frac);
  const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * valid_frac);
  std::vector<Split> out(n, Split::test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) {
      out[perm[k]] = Split::train;
    } else if (k < n_train + n_valid) {
      out[perm[k]] = Split::valid;
    }
  }
  return out;
}

}  // namespace hyperctr
