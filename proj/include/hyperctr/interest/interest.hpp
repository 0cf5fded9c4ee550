#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/kv.hpp"
#include "hyperctr/numerics/ops.hpp"
#include "hyperctr/numerics/optimizer.hpp"
#include "hyperctr/numerics/parameters.hpp"
#include "hyperctr/numerics/serialize.hpp"

namespace hyperctr {

struct UipConfig {
  Index dim = 64;
  std::size_t epochs = 5;
  std::size_t batch_size = 256;
  std::size_t negatives = 4;
  double learning_rate = 0.01;
  double l2 = 1e-4;
  double threshold = 0.5;
  bool learn_modality_weights = false;
  std::uint64_t seed = 1;
};

// Learned user-interest state. `scores` is F: one row per user, one column per
// entry of `modalities` (sorted in the fixed modality order).
struct InterestModel {
  std::vector<Modality> modalities;
  Matrix scores;
  double threshold = 0.5;
  std::vector<double> modality_weights;
  std::vector<std::uint8_t> fallback_rows;  // users without interactions
  ParameterStore params;

  // Interest levels of one user, one per modality column.
  std::vector<double> interest_degrees(std::size_t user) const {
    std::vector<double> out(modalities.size());
    for (std::size_t m = 0; m < modalities.size(); ++m) out[m] = scores(static_cast<Index>(user), static_cast<Index>(m));
    return out;
  }
};

// Active flags: F(u,m) >= threshold; when a row has none, the argmax column is
// activated with ties going to the earlier modality.
inline std::vector<ModalityMask> assign_interests(const Matrix& scores, double threshold,
                                                  const std::vector<Modality>& modalities) {
  if (static_cast<std::size_t>(scores.cols()) != modalities.size()) {
    throw ShapeError("interest matrix has " + std::to_string(scores.cols()) + " columns for " +
                     std::to_string(modalities.size()) + " modalities");
  }
  if (modalities.empty()) throw ContractError("interest assignment needs at least one modality");
  std::vector<ModalityMask> out(static_cast<std::size_t>(scores.rows()), ModalityMask{});
  for (Index u = 0; u < scores.rows(); ++u) {
    auto& mask = out[static_cast<std::size_t>(u)];
    bool any = false;
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      if (scores(u, static_cast<Index>(m)) >= threshold) {
        mask[modality_index(modalities[m])] = 1;
        any = true;
      }
    }
    if (!any) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < modalities.size(); ++m) {
        if (scores(u, static_cast<Index>(m)) > scores(u, static_cast<Index>(best))) best = m;
      }
      mask[modality_index(modalities[best])] = 1;
    }
  }
  return out;
}

inline std::vector<ModalityMask> all_active(std::size_t num_users, const std::vector<Modality>& modalities) {
  ModalityMask mask{};
  for (Modality m : modalities) mask[modality_index(m)] = 1;
  return std::vector<ModalityMask>(num_users, mask);
}

namespace ad {

// Pre-sigmoid trilinear score e_u . ((W e_a) * e_i), one per row.
inline Var uip_logits(Var users, Var items, Var attrs, Var bilinear) {
  return row_sum(mul(mul(users, matmul(attrs, transpose(bilinear))), items));
}

// Mean over rows of -s+ + log sum exp(s~).
inline Var uip_loss(Var positive, Var negatives) {
  if (positive.cols() != 1) throw ShapeError("uip_loss: positive scores must be a column, got " + shape_of(positive.value()));
  if (negatives.cols() < 1) throw ContractError("uip_loss needs at least one negative");
  if (negatives.rows() != positive.rows()) {
    throw ShapeError("uip_loss: " + shape_of(positive.value()) + " positives vs " + shape_of(negatives.value()) + " negatives");
  }
  return mean_all(sub(logsumexp_rows(negatives), positive));
}

}  // namespace ad

inline double uip_score(const Matrix& user, const Matrix& item, const Matrix& attr, const Matrix& bilinear) {
  if (!is_vector(user) || !is_vector(item) || !is_vector(attr)) throw ShapeError("uip_score expects vectors");
  const Index d = user.size();
  if (item.size() != d || attr.size() != d || bilinear.rows() != d || bilinear.cols() != d) {
    throw ShapeError("uip_score: inconsistent dimensions " + shape_of(user) + ", " + shape_of(item) + ", " +
                     shape_of(attr) + ", " + shape_of(bilinear));
  }
  const Eigen::VectorXd proj = bilinear * Eigen::Map<const Eigen::VectorXd>(attr.data(), d);
  double s = 0.0;
  for (Index k = 0; k < d; ++k) s += user.data()[k] * proj[k] * item.data()[k];
  return stable_sigmoid(s);
}

namespace detail {

inline std::string uip_projection_name(Modality m) { return "uip.proj." + std::string(modality_name(m)); }

struct UipTriple {
  std::uint32_t user;
  std::uint32_t item;
  std::size_t column;
};

}  // namespace detail

// Contrastive pretraining over (user, item, modality) triples taken from
// `interactions`, followed by the F computation. Every random draw comes from
// generators seeded by cfg.seed.
inline InterestModel pretrain_interest(const Dataset& ds, std::span<const InteractionRecord> interactions,
                                       const UipConfig& cfg) {
  const auto mods = ds.features.modalities();
  if (mods.empty()) throw ConfigError("interest pretraining needs at least one feature modality");
  if (cfg.dim <= 0 || cfg.batch_size == 0) throw ConfigError("interest pretraining needs positive dim and batch size");
  if (cfg.negatives == 0) throw ConfigError("interest pretraining needs at least one negative");
  if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) throw ConfigError("interest threshold must lie in (0, 1]");

  std::mt19937_64 init_rng(cfg.seed);
  InterestModel model;
  model.modalities = mods;
  model.threshold = cfg.threshold;
  const Index d = cfg.dim;
  const auto nu = static_cast<Index>(ds.num_users);
  const auto ni = static_cast<Index>(ds.num_items);
  auto& P = model.params;
  P.add("uip.user", gaussian_matrix(nu, d, 0.3, init_rng));
  P.add("uip.item", gaussian_matrix(ni, d, 0.3, init_rng));
  for (Modality m : mods) {
    P.add(detail::uip_projection_name(m),
          gaussian_matrix(ds.features.dim(m), d, 1.0 / std::sqrt(static_cast<double>(ds.features.dim(m))), init_rng));
  }
  P.add("uip.bilinear", Matrix::Identity(d, d));
  P.add("uip.theta", Matrix::Ones(1, static_cast<Index>(mods.size())), cfg.learn_modality_weights);

  // Items that carry each modality, used as the negative pool.
  std::vector<std::vector<std::uint32_t>> carriers(mods.size());
  for (std::size_t c = 0; c < mods.size(); ++c) {
    for (std::size_t i = 0; i < ds.num_items; ++i) {
      if (ds.features.present(i, mods[c])) carriers[c].push_back(static_cast<std::uint32_t>(i));
    }
  }
  std::vector<detail::UipTriple> triples;
  for (const auto& r : interactions) {
    if (r.user >= ds.num_users || r.item >= ds.num_items) throw ValidationError("interaction outside dataset bounds");
    for (std::size_t c = 0; c < mods.size(); ++c) {
      if (carriers[c].size() >= 2 && ds.features.present(r.item, mods[c])) triples.push_back({r.user, r.item, c});
    }
  }

  Adam adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  for (std::size_t epoch = 0; epoch < cfg.epochs && !triples.empty(); ++epoch) {
    std::shuffle(triples.begin(), triples.end(), rng);
    for (std::size_t start = 0; start < triples.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(triples.size(), start + cfg.batch_size);
      ad::Tape tape;
      ad::Binding b(tape, P);
      std::vector<ad::Var> terms;
      for (std::size_t c = 0; c < mods.size(); ++c) {
        std::vector<long> users;
        std::vector<long> items;
        std::vector<std::uint32_t> pos_items;
        for (std::size_t k = start; k < stop; ++k) {
          if (triples[k].column != c) continue;
          users.push_back(triples[k].user);
          items.push_back(triples[k].item);
          pos_items.push_back(triples[k].item);
        }
        if (users.empty()) continue;
        const Matrix& feats = ds.features.features(mods[c]);
        auto attr_rows = [&](const std::vector<std::uint32_t>& which) {
          Matrix a(static_cast<Index>(which.size()), feats.cols());
          for (std::size_t r = 0; r < which.size(); ++r) a.row(static_cast<Index>(r)) = feats.row(which[r]);
          return ad::matmul(tape.constant(std::move(a)), b[detail::uip_projection_name(mods[c])]);
        };
        ad::Var eu = ad::gather_rows(b["uip.user"], users);
        ad::Var ei = ad::gather_rows(b["uip.item"], items);
        ad::Var theta = ad::slice_cols(b["uip.theta"], static_cast<Index>(c), 1);
        auto weighted = [&](ad::Var logits) { return ad::matmul(ad::sigmoid(logits), theta); };
        ad::Var pos = weighted(ad::uip_logits(eu, ei, attr_rows(pos_items), b["uip.bilinear"]));
        std::uniform_int_distribution<std::size_t> pick(0, carriers[c].size() - 1);
        ad::Var neg;
        for (std::size_t k = 0; k < cfg.negatives; ++k) {
          std::vector<std::uint32_t> neg_items(pos_items.size());
          for (std::size_t r = 0; r < pos_items.size(); ++r) {
            std::uint32_t j;
            do {
              j = carriers[c][pick(rng)];
            } while (j == pos_items[r]);
            neg_items[r] = j;
          }
          ad::Var col = weighted(ad::uip_logits(eu, ei, attr_rows(neg_items), b["uip.bilinear"]));
          neg = k == 0 ? col : ad::concat_cols(neg, col);
        }
        terms.push_back(ad::scale(ad::uip_loss(pos, neg), static_cast<double>(users.size())));
        terms.push_back(ad::scale(ad::add(ad::sum_squares(eu), ad::sum_squares(ei)), cfg.l2));
      }
      ad::Var loss = terms.front();
      for (std::size_t k = 1; k < terms.size(); ++k) loss = ad::add(loss, terms[k]);
      loss = ad::scale(loss, 1.0 / static_cast<double>(stop - start));
      // Embedding tables are regularized through the rows gathered above.
      for (const auto& p : P.all()) {
        if (p.trainable && p.name != "uip.theta" && p.name != "uip.user" && p.name != "uip.item") {
          loss = ad::add(loss, ad::scale(ad::sum_squares(b[p.name]), cfg.l2));
        }
      }
      if (!std::isfinite(loss.value()(0, 0))) throw DivergenceError("interest pretraining loss is not finite");
      tape.backward(loss);
      b.collect_grads(P);
      adam.step(P);
      if (cfg.learn_modality_weights) {
        Matrix& th = P.at("uip.theta").value;
        th = th.cwiseMax(1e-6).cwiseMin(1.0);
      }
    }
  }

  // F(u, m): weighted mean score over the user's items carrying m.
  const Matrix& eu = P.at("uip.user").value;
  const Matrix& ei = P.at("uip.item").value;
  const Matrix& w = P.at("uip.bilinear").value;
  const Matrix& th = P.at("uip.theta").value;
  model.modality_weights.assign(th.data(), th.data() + th.size());
  const auto k = static_cast<Index>(mods.size());
  Matrix sums = Matrix::Zero(nu, k);
  Matrix counts = Matrix::Zero(nu, k);
  std::vector<std::uint8_t> seen(ds.num_users, 0);
  for (const auto& r : interactions) {
    seen[r.user] = 1;
    for (Index c = 0; c < k; ++c) {
      const Modality m = mods[static_cast<std::size_t>(c)];
      if (!ds.features.present(r.item, m)) continue;
      const Matrix attr = ds.features.features(m).row(r.item) * P.at(detail::uip_projection_name(m)).value;
      sums(r.user, c) += th(0, c) * uip_score(eu.row(r.user), ei.row(r.item), attr, w);
      counts(r.user, c) += 1.0;
    }
  }
  model.scores = Matrix::Constant(nu, k, 1.0 / static_cast<double>(k));
  model.fallback_rows.assign(ds.num_users, 0);
  for (Index c = 0; c < k; ++c) {
    double total = 0.0;
    double n = 0.0;
    for (Index u = 0; u < nu; ++u) {
      if (counts(u, c) > 0.0) {
        total += sums(u, c) / counts(u, c);
        n += 1.0;
      }
    }
    const double population = n > 0.0 ? total / n : 1.0 / static_cast<double>(k);
    for (Index u = 0; u < nu; ++u) {
      if (!seen[static_cast<std::size_t>(u)]) continue;
      model.scores(u, c) = counts(u, c) > 0.0 ? sums(u, c) / counts(u, c) : population;
    }
  }
  for (std::size_t u = 0; u < ds.num_users; ++u) model.fallback_rows[u] = seen[u] ? 0 : 1;
  return model;
}

inline constexpr const char* kInterestMagic = "HYPERCTR-UIP";
inline constexpr int kInterestVersion = 1;

inline void save_interest_model(const std::string& path, const InterestModel& model) {
  TensorFile tf;
  std::string names;
  for (Modality m : model.modalities) names += (names.empty() ? "" : ",") + std::string(modality_name(m));
  tf.meta["modalities"] = names;
  tf.meta["threshold"] = format_double(model.threshold);
  tf.tensors.emplace_back("scores", model.scores);
  Matrix fb(static_cast<Index>(model.fallback_rows.size()), 1);
  for (std::size_t u = 0; u < model.fallback_rows.size(); ++u) fb(static_cast<Index>(u), 0) = model.fallback_rows[u];
  tf.tensors.emplace_back("fallback", std::move(fb));
  for (const auto& p : model.params.all()) tf.tensors.emplace_back(p.name, p.value);
  write_tensor_file(path, kInterestMagic, kInterestVersion, tf);
}

inline InterestModel load_interest_model(const std::string& path) {
  const TensorFile tf = read_tensor_file(path, kInterestMagic, kInterestVersion);
  InterestModel model;
  auto it = tf.meta.find("modalities");
  if (it == tf.meta.end()) throw IoError(path + ": missing modality list");
  for (const auto& name : split(it->second, ',')) {
    auto m = parse_modality(name);
    if (!m) throw IoError(path + ": unknown modality '" + name + "'");
    model.modalities.push_back(*m);
  }
  it = tf.meta.find("threshold");
  if (it == tf.meta.end() || !parse_number(it->second, model.threshold)) throw IoError(path + ": missing threshold");
  model.scores = tf.tensor("scores");
  if (static_cast<std::size_t>(model.scores.cols()) != model.modalities.size()) throw IoError(path + ": score shape mismatch");
  const Matrix& fb = tf.tensor("fallback");
  for (Index u = 0; u < fb.rows(); ++u) model.fallback_rows.push_back(fb(u, 0) != 0.0 ? 1 : 0);
  for (const auto& [name, m] : tf.tensors) {
    if (name.rfind("uip.", 0) == 0) model.params.add(name, m, name != "uip.theta");
  }
  const Matrix& th = model.params.at("uip.theta").value;
  model.modality_weights.assign(th.data(), th.data() + th.size());
  return model;
}

// Human-readable F with one row per user.
inline void write_interest_csv(const std::string& path, const InterestModel& model, const std::vector<std::string>& user_ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "user";
  for (Modality m : model.modalities) out << ',' << modality_name(m);
  out << ",fallback\n";
  for (Index u = 0; u < model.scores.rows(); ++u) {
    out << (static_cast<std::size_t>(u) < user_ids.size() ? user_ids[static_cast<std::size_t>(u)] : std::to_string(u));
    for (Index c = 0; c < model.scores.cols(); ++c) out << ',' << format_double(model.scores(u, c));
    out << ',' << int(model.fallback_rows[static_cast<std::size_t>(u)]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace hyperctr
