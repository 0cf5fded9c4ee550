#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/data/slots.hpp"
#include "hyperctr/hypergraph/builders.hpp"
#include "hyperctr/hypergraph/convolution.hpp"
#include "hyperctr/model/config.hpp"
#include "hyperctr/model/metrics.hpp"
#include "hyperctr/numerics/optimizer.hpp"
#include "hyperctr/numerics/parameters.hpp"
#include "hyperctr/sequence/encoder.hpp"

namespace hyperctr {

// A compacted hypergraph ready for convolution.
struct PreparedGraph {
  std::vector<std::size_t> nodes;  // local -> global id
  std::vector<long> local;         // global id -> local, -1 if absent
  std::shared_ptr<const PropagationOperator> op;
  std::optional<Modality> view;  // item graphs: modality view, empty for the union view
};

struct SlotGraphs {
  std::vector<PreparedGraph> user;
  std::vector<PreparedGraph> item;
};

inline PreparedGraph prepare_graph(const Hypergraph& g, std::optional<Modality> view = std::nullopt) {
  CompactGraph c = compact(g);
  return PreparedGraph{std::move(c.nodes), std::move(c.local), std::make_shared<PropagationOperator>(c.graph), view};
}

// Data-derived state shared by training and evaluation: split, time slots,
// per-slot behaviour histories and hypergraphs. Histories hold clicked records
// of the training split. Hypergraphs are built from training clicks; a
// training batch sees a graph view that leaves out the clicks of its own fold.
class TrainingContext {
 public:
  TrainingContext(const Dataset& data, std::vector<Split> split, std::vector<ModalityMask> interests, TrainConfig cfg)
      : data_(&data), cfg_(std::move(cfg)), split_(std::move(split)), interests_(std::move(interests)) {
    cfg_.validate();
    data.validate();
    if (split_.size() != data.records.size()) throw ContractError("split assignment does not cover every record");
    if (interests_.size() != data.num_users) throw ContractError("interest assignment does not cover every user");
    if (data.features.num_modalities() == 0) throw ConfigError("training needs at least one feature modality");
    partition_ = partition_slots(data.records, cfg_.granularity_seconds());
    record_slot_.resize(data.records.size());
    for (std::size_t s = 0; s < partition_.slots.size(); ++s) {
      for (std::size_t r : partition_.slots[s].records) record_slot_[r] = s;
    }
    std::vector<std::uint8_t> clicks(data.records.size(), 0);
    for (std::size_t r = 0; r < data.records.size(); ++r) {
      clicks[r] = split_[r] == Split::train && data.records[r].label == 1 ? 1 : 0;
    }
    history_ = std::make_unique<SlotHistory>(partition_, data.records, &clicks);
    const auto mods = data.features.modalities();
    // Users whose assignment misses every available modality fall back to all of them.
    ModalityMask every{};
    for (Modality m : mods) every[modality_index(m)] = 1;
    for (auto& mask : interests_) {
      bool any = false;
      for (Modality m : mods) any = any || mask[modality_index(m)] != 0;
      if (!any) mask = every;
    }

    // Training records are dealt into folds; view k leaves out the clicks of
    // fold k, the last view uses every training click.
    const std::size_t folds = cfg_.graph_folds > 1 ? cfg_.graph_folds : 0;
    fold_.assign(data.records.size(), folds);
    {
      std::vector<std::size_t> train_rows;
      for (std::size_t r = 0; r < data.records.size(); ++r) {
        if (split_[r] == Split::train) train_rows.push_back(r);
      }
      std::mt19937_64 rng(cfg_.seed ^ 0xf01dULL);
      std::shuffle(train_rows.begin(), train_rows.end(), rng);
      for (std::size_t k = 0; k < train_rows.size() && folds > 0; ++k) fold_[train_rows[k]] = k % folds;
    }
    graphs_.assign(folds + 1, std::vector<SlotGraphs>(partition_.slots.size()));
    if (!cfg_.use_hypergraph) return;
    for (std::size_t view = 0; view <= folds; ++view) {
      for (std::size_t s = 0; s < partition_.slots.size(); ++s) {
        std::vector<InteractionRecord> evidence;
        for (std::size_t r : partition_.slots[s].records) {
          if (clicks[r] && fold_[r] != view) evidence.push_back(data.records[r]);
        }
        if (evidence.empty()) continue;
        const std::uint64_t base = cfg_.seed * 1000003ULL + s * 7919ULL + view * 104729ULL;
        SlotGraphs& out = graphs_[view][s];
        auto groups = build_group_hypergraphs(s, evidence, data.num_users, interests_, mods);
        for (std::size_t k = 0; k < groups.graphs.size(); ++k) {
          if (groups.graphs[k].num_edges() == 0) continue;
          out.user.push_back(prepare_graph(sample_neighbors(groups.graphs[k], cfg_.neighbor_size, base + k)));
        }
        auto items = build_item_hypergraphs(s, evidence, data.num_items, data.features);
        for (std::size_t k = 0; k < items.view_graphs.size(); ++k) {
          if (items.view_graphs[k].num_edges() == 0) continue;
          out.item.push_back(
              prepare_graph(sample_neighbors(items.view_graphs[k], cfg_.neighbor_size, base + 100 + k), items.views[k]));
        }
        if (items.group.num_edges() > 0) {
          out.item.push_back(prepare_graph(sample_neighbors(items.group, cfg_.neighbor_size, base + 200)));
        }
      }
    }
  }

  const Dataset& data() const { return *data_; }
  const TrainConfig& config() const { return cfg_; }
  const SlotPartition& partition() const { return partition_; }
  const SlotGraphs& graphs(std::size_t slot, std::size_t view) const { return graphs_.at(view).at(slot); }
  std::size_t num_views() const { return graphs_.size(); }
  std::size_t evaluation_view() const { return graphs_.size() - 1; }
  // Graph view a record is scored against: its training fold's held-out view,
  // or the full view for everything else.
  std::size_t view_of(std::size_t record) const { return std::min(fold_.at(record), evaluation_view()); }
  const std::vector<Split>& split() const { return split_; }
  const std::vector<ModalityMask>& interests() const { return interests_; }
  std::size_t slot_of(std::size_t record) const { return record_slot_.at(record); }

  std::vector<std::size_t> records_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < split_.size(); ++r) {
      if (split_[r] == s) out.push_back(r);
    }
    return out;
  }

  // The user's clicks in the record's slot, excluding the record's own item.
  SlotSequence sequence_for(std::size_t record) const {
    const auto& rec = data_->records.at(record);
    return with_user_fallback(history_->sequence(rec.user, slot_of(record), cfg_.seq_len, static_cast<long>(rec.item)));
  }

  // Record indices grouped by slot (slot order, then input order).
  std::vector<std::vector<std::size_t>> group_by_slot(std::span<const std::size_t> records) const {
    std::vector<std::vector<std::size_t>> out(partition_.slots.size());
    for (std::size_t r : records) out[slot_of(r)].push_back(r);
    return out;
  }

  // Record indices grouped by (slot, view), flattened as slot * num_views() + view.
  std::vector<std::vector<std::size_t>> group_by_slot_view(std::span<const std::size_t> records) const {
    std::vector<std::vector<std::size_t>> out(partition_.slots.size() * num_views());
    for (std::size_t r : records) out[slot_of(r) * num_views() + view_of(r)].push_back(r);
    return out;
  }

 private:
  const Dataset* data_;
  TrainConfig cfg_;
  std::vector<Split> split_;
  std::vector<ModalityMask> interests_;
  SlotPartition partition_;
  std::vector<std::size_t> record_slot_;
  std::vector<std::size_t> fold_;
  std::unique_ptr<SlotHistory> history_;
  std::vector<std::vector<SlotGraphs>> graphs_;  // [view][slot]
};

inline std::string hgcn_name(const char* side, std::size_t layer) {
  return std::string("hgcn.") + side + "." + std::to_string(layer);
}

// Gaussian initialisation of every trainable tensor. Weight matrices use a
// fan-in scaled deviation; embedding tables use cfg.init_std.
inline ParameterStore init_parameters(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParameterStore store;
  const Index d = cfg.dim;
  add_embedding_params(store, data.num_users, data.num_items, data.features, d, cfg.init_std, rng);
  add_encoder_params(store, EncoderConfig{d, cfg.heads, cfg.blocks, cfg.positional}, rng);
  if (cfg.use_hypergraph) {
    for (const char* side : {"user", "item"}) {
      for (std::size_t l = 0; l < cfg.hgcn_layers; ++l) {
        store.add(hgcn_name(side, l), gaussian_matrix(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
      }
    }
  }
  store.add("fusion", gaussian_matrix((d + 1) * (d + 1), d, 1.0 / static_cast<double>(d + 1), rng));
  const Index h1 = cfg.hidden1();
  const Index h2 = cfg.hidden2();
  auto fan = [](Index n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  store.add("mlp.w1", gaussian_matrix(2 * d, h1, fan(2 * d), rng));
  store.add("mlp.b1", Matrix::Zero(1, h1));
  store.add("mlp.w2", gaussian_matrix(h1, h2, fan(h1), rng));
  store.add("mlp.b2", Matrix::Zero(1, h2));
  store.add("mlp.w3", gaussian_matrix(h2, 1, fan(h2), rng));
  store.add("mlp.b3", Matrix::Zero(1, 1));
  return store;
}

inline bool is_table(const std::string& name) { return name == "user_table" || name == "item_table"; }

namespace ad {

// Slot-level tensors shared by every batch of the slot.
struct SlotState {
  std::size_t slot = 0;
  std::size_t view = 0;
  Var attributes;                  // |I| x d mean projected features
  std::vector<Var> user_outputs;   // per user graph, local rows
  std::vector<Var> item_outputs;   // per item graph, local rows
};

inline SlotState slot_state(const Binding& b, const TrainingContext& ctx, std::size_t slot, std::size_t view) {
  const auto& data = ctx.data();
  const auto mods = data.features.modalities();
  std::vector<Var> projected;
  std::vector<double> count(data.num_items, 0.0);
  for (Modality m : mods) {
    projected.push_back(modality_table(b, data.features, m));
    for (std::size_t i = 0; i < data.num_items; ++i) count[i] += data.features.present(i, m) ? 1.0 : 0.0;
  }
  SlotState st;
  st.slot = slot;
  st.view = view;
  for (std::size_t k = 0; k < mods.size(); ++k) {
    std::vector<double> coeff(data.num_items);
    for (std::size_t i = 0; i < data.num_items; ++i) coeff[i] = data.features.present(i, mods[k]) ? 1.0 / count[i] : 0.0;
    Var term = row_scale(projected[k], std::move(coeff));
    st.attributes = k == 0 ? term : add(st.attributes, term);
  }
  const auto& cfg = ctx.config();
  if (!cfg.use_hypergraph) return st;
  std::vector<Var> user_thetas;
  std::vector<Var> item_thetas;
  for (std::size_t l = 0; l < cfg.hgcn_layers; ++l) {
    user_thetas.push_back(b[hgcn_name("user", l)]);
    item_thetas.push_back(b[hgcn_name("item", l)]);
  }
  const SlotGraphs& graphs = ctx.graphs(slot, view);
  for (const auto& g : graphs.user) {
    std::vector<long> nodes(g.nodes.begin(), g.nodes.end());
    st.user_outputs.push_back(hgcn_stack(gather_rows(b["user_table"], nodes), g.op, user_thetas));
  }
  for (const auto& g : graphs.item) {
    std::vector<long> nodes(g.nodes.begin(), g.nodes.end());
    Var side = g.view ? projected[static_cast<std::size_t>(std::find(mods.begin(), mods.end(), *g.view) - mods.begin())]
                      : st.attributes;
    Var input = add(gather_rows(b["item_table"], nodes), gather_rows(side, nodes));
    st.item_outputs.push_back(hgcn_stack(input, g.op, item_thetas));
  }
  return st;
}

// Row-wise mean over the graphs that contain each node; zero where none does.
inline Var mean_over_graphs(Tape& tape, const std::vector<PreparedGraph>& graphs, const std::vector<Var>& outputs,
                            const std::vector<std::size_t>& ids, Index dim) {
  std::vector<double> count(ids.size(), 0.0);
  Var total = tape.constant(Matrix::Zero(static_cast<Index>(ids.size()), dim));
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    std::vector<long> rows(ids.size());
    bool any = false;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      rows[r] = graphs[g].local[ids[r]];
      if (rows[r] >= 0) {
        count[r] += 1.0;
        any = true;
      }
    }
    if (any) total = add(total, gather_rows(outputs[g], std::move(rows)));
  }
  for (double& c : count) c = c > 0.0 ? 1.0 / c : 0.0;
  return row_scale(total, std::move(count));
}

// Outer product of the 1-augmented embeddings, flattened, projected, ReLU.
inline Var fuse(Var e_seq, Var e_group, Var weight) {
  return relu(matmul(rowwise_outer(append_const_col(e_seq, 1.0), append_const_col(e_group, 1.0)), weight));
}

inline Var mlp_logits(const Binding& b, Var input) {
  Var h = relu(add_row(matmul(input, b["mlp.w1"]), b["mlp.b1"]));
  h = relu(add_row(matmul(h, b["mlp.w2"]), b["mlp.b2"]));
  return add_row(matmul(h, b["mlp.w3"]), b["mlp.b3"]);
}

// Pre-sigmoid click scores for records that all belong to the state's slot.
inline Var batch_logits(const Binding& b, const TrainingContext& ctx, const SlotState& st,
                        std::span<const std::size_t> records) {
  const auto& cfg = ctx.config();
  const auto& data = ctx.data();
  std::vector<SlotSequence> seqs;
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  seqs.reserve(records.size());
  for (std::size_t r : records) {
    seqs.push_back(ctx.sequence_for(r));
    users.push_back(data.records[r].user);
    items.push_back(data.records[r].item);
  }
  Var embedded = embed_sequences(b["user_table"], b["item_table"], st.attributes, seqs, cfg.positional);
  Var e_seq = encode_sequences(embedded, seqs, all_block_vars(b, cfg.blocks), cfg.heads);
  Tape& tape = b.tape();
  const SlotGraphs& graphs = ctx.graphs(st.slot, st.view);
  Var e_group = cfg.use_hypergraph ? mean_over_graphs(tape, graphs.user, st.user_outputs, users, cfg.dim)
                                   : tape.constant(Matrix::Zero(static_cast<Index>(records.size()), cfg.dim));
  Var e_user = fuse(e_seq, e_group, b["fusion"]);
  const std::vector<long> item_rows(items.begin(), items.end());
  Var e_item = add(gather_rows(b["item_table"], item_rows), gather_rows(st.attributes, item_rows));
  if (cfg.use_hypergraph) e_item = add(e_item, mean_over_graphs(tape, graphs.item, st.item_outputs, items, cfg.dim));
  return mlp_logits(b, concat_cols(e_user, e_item));
}

inline std::vector<double> labels_of(const TrainingContext& ctx, std::span<const std::size_t> records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (std::size_t r : records) y.push_back(ctx.data().records[r].label);
  return y;
}

// L2 on dense weights plus the embedding rows looked up by this batch.
inline Var l2_penalty(const Binding& b, const ParameterStore& params, const TrainingContext& ctx,
                      std::span<const std::size_t> records) {
  std::vector<long> users;
  std::vector<long> items;
  for (std::size_t r : records) {
    users.push_back(ctx.data().records[r].user);
    items.push_back(ctx.data().records[r].item);
  }
  Var total = add(sum_squares(gather_rows(b["user_table"], users)), sum_squares(gather_rows(b["item_table"], items)));
  for (const auto& p : params.all()) {
    if (p.trainable && !is_table(p.name)) total = add(total, sum_squares(b[p.name]));
  }
  return total;
}

// Mean cross-entropy plus L2 for records of one slot.
inline Var batch_loss(const Binding& b, const ParameterStore& params, const TrainingContext& ctx, const SlotState& st,
                      std::span<const std::size_t> records) {
  const std::vector<double> y = labels_of(ctx, records);
  Var loss = bce_with_logits_mean(batch_logits(b, ctx, st, records), y);
  const double l2 = ctx.config().l2;
  if (l2 > 0.0) loss = add(loss, scale(l2_penalty(b, params, ctx, records), l2));
  return loss;
}

// Record-weighted loss over records spanning any number of slots and views.
inline Var full_loss(const Binding& b, const ParameterStore& params, const TrainingContext& ctx,
                     std::span<const std::size_t> records) {
  const auto groups = ctx.group_by_slot_view(records);
  Var total;
  bool first = true;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) continue;
    const SlotState st = slot_state(b, ctx, s / ctx.num_views(), s % ctx.num_views());
    Var term = scale(batch_loss(b, params, ctx, st, groups[s]),
                     static_cast<double>(groups[s].size()) / static_cast<double>(records.size()));
    total = first ? term : add(total, term);
    first = false;
  }
  if (first) throw ContractError("full_loss needs at least one record");
  return total;
}

}  // namespace ad

// Plain-matrix snapshot of a slot's shared tensors for inference.
struct SlotValues {
  Matrix attributes;
  std::vector<Matrix> user_outputs;
  std::vector<Matrix> item_outputs;
};

inline SlotValues compute_slot_values(const ParameterStore& params, const TrainingContext& ctx, std::size_t slot) {
  ad::Tape tape;
  ad::Binding b(tape, params, true);
  const ad::SlotState st = ad::slot_state(b, ctx, slot, ctx.evaluation_view());
  SlotValues v;
  v.attributes = st.attributes.value();
  for (const auto& o : st.user_outputs) v.user_outputs.push_back(o.value());
  for (const auto& o : st.item_outputs) v.item_outputs.push_back(o.value());
  return v;
}

inline std::vector<double> score_chunk(const ParameterStore& params, const TrainingContext& ctx, const SlotValues& values,
                                       std::span<const std::size_t> records) {
  ad::Tape tape;
  ad::Binding b(tape, params, true);
  ad::SlotState st;
  st.slot = ctx.slot_of(records.front());
  st.view = ctx.evaluation_view();
  st.attributes = tape.constant(values.attributes);
  for (const auto& m : values.user_outputs) st.user_outputs.push_back(tape.constant(m));
  for (const auto& m : values.item_outputs) st.item_outputs.push_back(tape.constant(m));
  const Matrix& logits = ad::batch_logits(b, ctx, st, records).value();
  std::vector<double> out(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) out[k] = stable_sigmoid(logits(static_cast<Index>(k), 0));
  return out;
}

inline constexpr std::size_t kEvalChunk = 512;

// Runs fn(k) for k in [0, n) on `threads` workers; the first exception wins.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// Click probabilities for `records`, in input order. Work is cut into fixed
// chunks independent of the thread count, so results do not depend on it.
inline std::vector<double> score_records(const ParameterStore& params, const TrainingContext& ctx,
                                         std::span<const std::size_t> records, std::size_t threads = 1) {
  std::vector<std::size_t> position(ctx.data().records.size(), 0);
  for (std::size_t k = 0; k < records.size(); ++k) position[records[k]] = k;
  const auto groups = ctx.group_by_slot(records);
  std::vector<std::size_t> slots;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (!groups[s].empty()) slots.push_back(s);
  }
  std::vector<SlotValues> values(groups.size());
  parallel_for(slots.size(), threads, [&](std::size_t k) { values[slots[k]] = compute_slot_values(params, ctx, slots[k]); });
  struct Chunk {
    std::size_t slot;
    std::span<const std::size_t> records;
  };
  std::vector<Chunk> chunks;
  for (std::size_t s : slots) {
    std::span<const std::size_t> all(groups[s]);
    for (std::size_t start = 0; start < all.size(); start += kEvalChunk) {
      chunks.push_back({s, all.subspan(start, std::min(kEvalChunk, all.size() - start))});
    }
  }
  std::vector<double> out(records.size());
  parallel_for(chunks.size(), threads, [&](std::size_t k) {
    const auto probs = score_chunk(params, ctx, values[chunks[k].slot], chunks[k].records);
    for (std::size_t j = 0; j < probs.size(); ++j) out[position[chunks[k].records[j]]] = probs[j];
  });
  return out;
}

struct EvalResult {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t count = 0;
  std::size_t clamped = 0;
  double seconds = 0.0;
  double throughput = 0.0;  // records per second
};

inline EvalResult evaluate_records(const ParameterStore& params, const TrainingContext& ctx,
                                   std::span<const std::size_t> records, std::size_t threads = 1) {
  if (records.empty()) throw MetricError("cannot evaluate an empty split");
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> probs = score_records(params, ctx, records, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::vector<double> y = ad::labels_of(ctx, records);
  EvalResult res;
  ClampCounter clamp;
  res.auc = auc(probs, y);
  res.logloss = logloss(probs, y, &clamp);
  res.count = records.size();
  res.clamped = clamp.clamped;
  res.seconds = secs;
  res.throughput = secs > 0.0 ? static_cast<double>(records.size()) / secs : 0.0;
  return res;
}

inline EvalResult evaluate_parallel(const ParameterStore& params, const TrainingContext& ctx, Split split,
                                    std::size_t threads) {
  const auto records = ctx.records_of(split);
  return evaluate_records(params, ctx, records, threads);
}

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;
  double auc = 0.0;
  double logloss = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_auc = -1.0;
  ParameterStore best;
};

inline std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == "sgd") return std::make_unique<Sgd>(cfg.learning_rate);
  return std::make_unique<Adam>(cfg.learning_rate);
}

// Mini-batches never straddle slots or graph views: each group is shuffled and
// cut into batches, then the batch order is shuffled.
inline std::vector<std::vector<std::size_t>> make_batches(const TrainingContext& ctx, std::span<const std::size_t> records,
                                                          std::mt19937_64& rng) {
  auto groups = ctx.group_by_slot_view(records);
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t bs = ctx.config().batch_size;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t start = 0; start < g.size(); start += bs) {
      batches.emplace_back(g.begin() + static_cast<std::ptrdiff_t>(start),
                           g.begin() + static_cast<std::ptrdiff_t>(std::min(g.size(), start + bs)));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

// Single-threaded, seed-deterministic training. After each epoch the
// validation split is scored; the best-AUC parameters are kept. A non-finite
// loss restores the last completed epoch's parameters and throws.
inline TrainResult train(ParameterStore& params, const TrainingContext& ctx,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const auto& cfg = ctx.config();
  auto optimizer = make_optimizer(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0xba7c4e5ULL);
  const auto train_records = ctx.records_of(Split::train);
  const auto valid_records = ctx.records_of(Split::valid);
  TrainResult result;
  result.best = params;
  ParameterStore last_good = params;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(ctx, train_records, rng)) {
      ad::Tape tape;
      ad::Binding b(tape, params);
      const ad::SlotState st = ad::slot_state(b, ctx, ctx.slot_of(batch.front()), ctx.view_of(batch.front()));
      ad::Var loss = ad::batch_loss(b, params, ctx, st, batch);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        params = last_good;
        throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      loss_sum += value * static_cast<double>(batch.size());
      tape.backward(loss);
      b.collect_grads(params);
      optimizer->step(params);
    }
    EpochLog row;
    row.epoch = epoch;
    row.split = "valid";
    row.loss = train_records.empty() ? 0.0 : loss_sum / static_cast<double>(train_records.size());
    if (!valid_records.empty()) {
      const EvalResult ev = evaluate_records(params, ctx, valid_records);
      row.auc = ev.auc;
      row.logloss = ev.logloss;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    last_good = params;
    if (row.auc > result.best_auc) {
      result.best_auc = row.auc;
      result.best_epoch = epoch;
      result.best = params;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace hyperctr
