#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/data/slots.hpp"

namespace hyperctr {

// Planted-preference generator. Each user leans on one dominant modality and
// clicks according to a logistic function of the affinity between the user's
// (possibly drifting) latent vector and the item's latent vector in that
// modality. Observed item features are noisy linear images of the latents.
struct SyntheticConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 500;
  std::size_t num_interactions = 10'000;
  std::vector<Modality> modalities = {Modality::visual, Modality::acoustic, Modality::textual};
  std::array<Index, kMaxModalities> dims = {32, 16, 16};
  std::array<double, kMaxModalities> dominant_weights = {0.5, 0.3, 0.2};
  std::int64_t start_time = 1'600'000'000;
  std::int64_t span_seconds = 12 * kSecondsPerMonth;
  double noise_rate = 0.1;
  double base_rate = 0.5;
  // 0 draws continuous Gaussian latents; otherwise latents jitter around
  // `clusters` orthogonal prototypes.
  std::size_t clusters = 4;
  std::size_t latent_dim = 8;
  double latent_jitter = 0.2;
  double sharpness = 12.0;
  double feature_noise = 0.1;
  // Probability an exposure is drawn among items matching the user's current
  // preferred cluster (clustered mode only).
  double exposure_bias = 0.0;
  // Every `drift_period` seconds (per-user phase offset) a user's latent
  // preference is redrawn. 0 disables drift.
  std::int64_t drift_period = 0;
  // Probability that an (item, modality) feature row is missing.
  double missing_rate = 0.0;

  void validate() const {
    if (num_users == 0 || num_items == 0) throw ConfigError("synthetic data needs at least one user and one item");
    if (modalities.empty()) throw ConfigError("synthetic data needs at least one modality");
    if (num_interactions == 0) throw ConfigError("synthetic data needs at least one interaction");
    if (span_seconds <= 0) throw ConfigError("time span must be positive");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise rate must lie in [0, 1]");
    if (!(base_rate > 0.0 && base_rate < 1.0)) throw ConfigError("base rate must lie in (0, 1)");
    if (latent_dim == 0) throw ConfigError("latent dimension must be positive");
    if (!(sharpness > 0.0)) throw ConfigError("sharpness must be positive");
    if (!(exposure_bias >= 0.0 && exposure_bias <= 1.0)) throw ConfigError("exposure bias must lie in [0, 1]");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing rate must lie in [0, 1)");
    if (drift_period < 0) throw ConfigError("drift period must be >= 0");
    double wsum = 0.0;
    for (Modality m : modalities) {
      if (dims[modality_index(m)] <= 0) throw ConfigError("modality dimension must be positive");
      if (dominant_weights[modality_index(m)] < 0.0) throw ConfigError("dominant weights must be >= 0");
      wsum += dominant_weights[modality_index(m)];
    }
    if (!(wsum > 0.0)) throw ConfigError("dominant weights of enabled modalities sum to zero");
  }
};

struct SyntheticTruth {
  std::vector<Modality> dominant;         // per user
  std::vector<double> affinity;           // per record, at the record's time
  std::vector<double> click_probability;  // per record, before label noise
  double offset = 0.0;                    // calibrated logistic offset
};

struct SyntheticData {
  Dataset dataset;
  SyntheticTruth truth;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

inline std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t r = cfg.latent_dim;
  const bool clustered = cfg.clusters > 0;
  const std::size_t nmod = cfg.modalities.size();

  auto latent_rng = detail::stream(seed, 1);
  auto feature_rng = detail::stream(seed, 2);
  auto event_rng = detail::stream(seed, 3);
  auto label_rng = detail::stream(seed, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::vector<double>> prototypes;
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    std::vector<double> p(r, 0.0);
    if (cfg.clusters <= r) {
      p[c] = 1.0;
    } else {
      for (double& x : p) x = normal(latent_rng);
    }
    prototypes.push_back(detail::unit(std::move(p)));
  }
  const double jitter_scale = cfg.latent_jitter / std::sqrt(static_cast<double>(r));
  auto draw_latent = [&](std::size_t cluster) {
    std::vector<double> v(r);
    for (std::size_t k = 0; k < r; ++k) {
      v[k] = (clustered ? prototypes[cluster][k] : 0.0) + (clustered ? jitter_scale : 1.0) * normal(latent_rng);
    }
    return detail::unit(std::move(v));
  };
  std::uniform_int_distribution<std::size_t> pick_cluster(0, clustered ? cfg.clusters - 1 : 0);

  SyntheticData out;
  // Dominant modality per user.
  std::vector<double> weights;
  for (Modality m : cfg.modalities) weights.push_back(cfg.dominant_weights[modality_index(m)]);
  std::discrete_distribution<std::size_t> pick_modality(weights.begin(), weights.end());
  out.truth.dominant.resize(cfg.num_users);
  for (auto& d : out.truth.dominant) d = cfg.modalities[pick_modality(latent_rng)];

  // Item latents per enabled modality.
  std::vector<std::vector<std::size_t>> item_cluster(nmod, std::vector<std::size_t>(cfg.num_items, 0));
  std::vector<std::vector<std::vector<double>>> item_latent(nmod);
  for (std::size_t mi = 0; mi < nmod; ++mi) {
    item_latent[mi].resize(cfg.num_items);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      item_cluster[mi][i] = pick_cluster(latent_rng);
      item_latent[mi][i] = draw_latent(item_cluster[mi][i]);
    }
  }

  // User preference phases.
  const std::int64_t period = cfg.drift_period;
  const std::size_t phases =
      period > 0 ? static_cast<std::size_t>((cfg.span_seconds + period - 1) / period) + 1 : std::size_t{1};
  std::vector<std::int64_t> phase_offset(cfg.num_users, 0);
  std::vector<std::vector<std::size_t>> user_cluster(cfg.num_users, std::vector<std::size_t>(phases, 0));
  std::vector<std::vector<std::vector<double>>> user_latent(cfg.num_users);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    if (period > 0) {
      phase_offset[u] = std::uniform_int_distribution<std::int64_t>(0, period - 1)(latent_rng);
    }
    user_latent[u].resize(phases);
    for (std::size_t p = 0; p < phases; ++p) {
      std::size_t c = pick_cluster(latent_rng);
      if (clustered && p > 0 && cfg.clusters > 1) {
        while (c == user_cluster[u][p - 1]) c = pick_cluster(latent_rng);
      }
      user_cluster[u][p] = c;
      user_latent[u][p] = draw_latent(c);
    }
  }
  auto phase_of = [&](std::size_t u, std::int64_t t) -> std::size_t {
    if (period <= 0) return 0;
    return static_cast<std::size_t>((t - cfg.start_time + phase_offset[u]) / period);
  };
  auto mod_slot = [&](Modality m) {
    return static_cast<std::size_t>(std::find(cfg.modalities.begin(), cfg.modalities.end(), m) - cfg.modalities.begin());
  };

  // Observed features.
  Dataset& ds = out.dataset;
  ds.num_users = cfg.num_users;
  ds.num_items = cfg.num_items;
  ds.features = ModalFeatureStore(cfg.num_items);
  for (Modality m : kAllModalities) {
    auto pos = std::find(cfg.modalities.begin(), cfg.modalities.end(), m);
    if (pos == cfg.modalities.end()) continue;
    const std::size_t mi = static_cast<std::size_t>(pos - cfg.modalities.begin());
    const Index dm = cfg.dims[modality_index(m)];
    Matrix proj(dm, static_cast<Index>(r));
    for (Index a = 0; a < proj.size(); ++a) proj.data()[a] = normal(feature_rng) / std::sqrt(static_cast<double>(r)) * 2.0;
    Matrix f(static_cast<Index>(cfg.num_items), dm);
    std::vector<std::uint8_t> present(cfg.num_items, 1);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      for (Index a = 0; a < dm; ++a) {
        double v = 0.0;
        for (std::size_t k = 0; k < r; ++k) v += proj(a, static_cast<Index>(k)) * item_latent[mi][i][k];
        f(static_cast<Index>(i), a) = v + cfg.feature_noise * normal(feature_rng);
      }
      if (cfg.missing_rate > 0.0 && unif(feature_rng) < cfg.missing_rate) present[i] = 0;
    }
    ds.features.add_modality(m, std::move(f), std::move(present));
  }

  // Items grouped by (modality, cluster) for biased exposure.
  std::vector<std::vector<std::vector<std::uint32_t>>> by_cluster(nmod, std::vector<std::vector<std::uint32_t>>(cfg.clusters));
  if (clustered) {
    for (std::size_t mi = 0; mi < nmod; ++mi) {
      for (std::size_t i = 0; i < cfg.num_items; ++i) by_cluster[mi][item_cluster[mi][i]].push_back(static_cast<std::uint32_t>(i));
    }
  }

  // Events.
  std::uniform_int_distribution<std::size_t> pick_user(0, cfg.num_users - 1);
  std::uniform_int_distribution<std::size_t> pick_item(0, cfg.num_items - 1);
  std::uniform_int_distribution<std::int64_t> pick_time(cfg.start_time, cfg.start_time + cfg.span_seconds - 1);
  std::vector<InteractionRecord> recs(cfg.num_interactions);
  std::vector<double> aff(cfg.num_interactions);
  for (std::size_t n = 0; n < cfg.num_interactions; ++n) {
    const auto u = static_cast<std::uint32_t>(pick_user(event_rng));
    const std::int64_t t = pick_time(event_rng);
    const std::size_t p = phase_of(u, t);
    const std::size_t mi = mod_slot(out.truth.dominant[u]);
    std::uint32_t item;
    const double coin = unif(event_rng);
    if (clustered && coin < cfg.exposure_bias && !by_cluster[mi][user_cluster[u][p]].empty()) {
      const auto& pool = by_cluster[mi][user_cluster[u][p]];
      item = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(event_rng)];
    } else {
      item = static_cast<std::uint32_t>(pick_item(event_rng));
    }
    recs[n] = InteractionRecord{u, item, t, 0};
    aff[n] = detail::dot(user_latent[u][p], item_latent[mi][item]);
  }

  // Offset b so that the mean click probability equals the base rate.
  auto mean_prob = [&](double b) {
    double s = 0.0;
    for (double a : aff) s += stable_sigmoid(cfg.sharpness * (a - b));
    return s / static_cast<double>(aff.size());
  };
  double lo = -1.0 - 40.0 / cfg.sharpness;
  double hi = 1.0 + 40.0 / cfg.sharpness;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mean_prob(mid) > cfg.base_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double offset = 0.5 * (lo + hi);

  std::vector<double> prob(recs.size());
  for (std::size_t n = 0; n < recs.size(); ++n) {
    prob[n] = stable_sigmoid(cfg.sharpness * (aff[n] - offset));
    const bool noisy = unif(label_rng) < cfg.noise_rate;
    const double pr = noisy ? cfg.base_rate : prob[n];
    recs[n].label = unif(label_rng) < pr ? 1 : 0;
  }

  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return recs[a].timestamp < recs[b].timestamp; });
  ds.records.reserve(recs.size());
  out.truth.affinity.reserve(recs.size());
  out.truth.click_probability.reserve(recs.size());
  for (std::size_t k : order) {
    ds.records.push_back(recs[k]);
    out.truth.affinity.push_back(aff[k]);
    out.truth.click_probability.push_back(prob[k]);
  }
  out.truth.offset = offset;
  return out;
}

// Permutes labels across records; destroys any feature/label association.
inline void shuffle_labels(std::vector<InteractionRecord>& records, std::uint64_t seed) {
  std::vector<std::uint8_t> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(r.label);
  std::mt19937_64 rng(seed);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t k = 0; k < records.size(); ++k) records[k].label = labels[k];
}

}  // namespace hyperctr
