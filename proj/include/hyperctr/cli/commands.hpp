#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hyperctr/data/io.hpp"
#include "hyperctr/data/synthetic.hpp"
#include "hyperctr/interest/interest.hpp"
#include "hyperctr/model/checkpoint.hpp"
#include "hyperctr/model/hyperctr.hpp"

namespace hyperctr::cli {

struct KeySpec {
  std::string key;
  std::string fallback;
  bool boolean = false;
  std::string help;
};

inline std::vector<KeySpec> train_config_keys() {
  std::vector<KeySpec> out;
  for (const auto& [k, v] : TrainConfig{}.to_key_values()) {
    out.push_back({k, v, v == "true" || v == "false", "model/training setting"});
  }
  return out;
}

inline std::vector<KeySpec> uip_keys() {
  const UipConfig d;
  return {{"uip_dim", std::to_string(d.dim), false, "pretraining embedding size"},
          {"uip_epochs", std::to_string(d.epochs), false, "pretraining epochs"},
          {"uip_batch_size", std::to_string(d.batch_size), false, "pretraining batch size"},
          {"uip_negatives", std::to_string(d.negatives), false, "negatives per positive"},
          {"uip_learning_rate", format_double(d.learning_rate), false, "pretraining learning rate"},
          {"uip_l2", format_double(d.l2), false, "pretraining L2 weight"},
          {"threshold", format_double(d.threshold), false, "interest activation threshold"},
          {"learn_modality_weights", "false", true, "train per-modality weights"}};
}

inline std::vector<KeySpec> data_keys() {
  return {{"data", "", false, "dataset directory"},
          {"binarize_ratings", "", false, "ratings >= this value become clicks"}};
}

inline std::vector<KeySpec> interest_source_keys() {
  return {{"interest", "", false, "pretrained interest model file"},
          {"no_pretrain", "false", true, "activate every modality for every user"}};
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-data", "pretrain", "train", "eval", "ablate"};
  return names;
}

inline std::vector<KeySpec> command_keys(const std::string& command) {
  std::vector<KeySpec> keys = {{"out", "", false, "output directory"}};
  auto append = [&](const std::vector<KeySpec>& more) { keys.insert(keys.end(), more.begin(), more.end()); };
  if (command == "gen-data") {
    const SyntheticConfig d;
    append({{"seed", "1", false, "generator seed"},
            {"users", std::to_string(d.num_users), false, "number of users"},
            {"items", std::to_string(d.num_items), false, "number of items"},
            {"interactions", std::to_string(d.num_interactions), false, "number of interaction records"},
            {"modalities", "visual,acoustic,textual", false, "feature modalities to emit"},
            {"visual_dim", std::to_string(d.dims[0]), false, "visual feature size"},
            {"acoustic_dim", std::to_string(d.dims[1]), false, "acoustic feature size"},
            {"textual_dim", std::to_string(d.dims[2]), false, "textual feature size"},
            {"dominant_weights", "0.5,0.3,0.2", false, "visual,acoustic,textual dominance weights"},
            {"span_months", "12", false, "time span of the records"},
            {"noise", format_double(d.noise_rate), false, "fraction of labels drawn at the base rate"},
            {"base_rate", format_double(d.base_rate), false, "overall click rate"},
            {"clusters", std::to_string(d.clusters), false, "latent taste clusters, 0 for continuous"},
            {"latent_dim", std::to_string(d.latent_dim), false, "latent preference size"},
            {"latent_jitter", format_double(d.latent_jitter), false, "spread around cluster prototypes"},
            {"sharpness", format_double(d.sharpness), false, "logistic slope of the affinity"},
            {"feature_noise", format_double(d.feature_noise), false, "additive feature noise"},
            {"exposure_bias", format_double(d.exposure_bias), false, "share of exposures drawn from matching items"},
            {"drift_months", "0", false, "preference redraw period, 0 disables"},
            {"missing_rate", format_double(d.missing_rate), false, "probability a feature row is missing"}});
  } else if (command == "pretrain") {
    append(data_keys());
    append({{"seed", "1", false, "pretraining seed"}, {"split_seed", "1", false, "train/valid/test split seed"}});
    append(uip_keys());
  } else if (command == "train" || command == "ablate") {
    append(data_keys());
    append(interest_source_keys());
    append(train_config_keys());
    append(uip_keys());
    if (command == "train") {
      append({{"ablate", "full", false, "full, visual-only, acoustic-only, textual-only or no-hypergraph"}});
    } else {
      append({{"variants", "full,visual-only,acoustic-only,textual-only,no-hypergraph", false, "variants to compare"},
              {"granularities", "", false, "slot lengths in months for the granularity sweep"},
              {"depths", "", false, "HGCN depths for the depth sweep"}});
    }
  } else if (command == "eval") {
    append(data_keys());
    append({{"checkpoint", "", false, "checkpoint file"},
            {"threads", "1", false, "scoring threads"},
            {"split", "all", false, "train, valid, test or all"},
            {"negatives", "0", false, "sampled unobserved items per test click, 0 disables"},
            {"seed", "1", false, "negative sampling seed"}});
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return keys;
}

// Defaults, then the config file, then flags. Unknown keys are rejected.
inline KeyValues resolve_config(const std::string& command, const KeyValues& file, const KeyValues& flags) {
  KeyValues out;
  std::set<std::string> known;
  for (const auto& spec : command_keys(command)) {
    known.insert(spec.key);
    out[spec.key] = spec.fallback;
  }
  for (const KeyValues* layer : {&file, &flags}) {
    for (const auto& [k, v] : *layer) {
      if (known.count(k) == 0) throw ConfigError("unknown key '" + k + "' for " + command);
      out[k] = v;
    }
  }
  return out;
}

class Options {
 public:
  explicit Options(const KeyValues& kv) : kv_(&kv) {}

  const std::string& str(const std::string& key) const {
    auto it = kv_->find(key);
    if (it == kv_->end()) throw ConfigError("missing key '" + key + "'");
    return it->second;
  }

  const std::string& required(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) throw ConfigError("--" + dashed(key) + " is required");
    return v;
  }

  template <typename T>
  T number(const std::string& key) const {
    T v{};
    if (!parse_number(str(key), v)) throw ConfigError("invalid value '" + str(key) + "' for " + key);
    return v;
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + v + "' for " + key);
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    if (trim(str(key)).empty()) return out;
    for (const auto& part : split(str(key), ',')) out.push_back(trim(part));
    return out;
  }

  template <typename T>
  std::vector<T> numbers(const std::string& key) const {
    std::vector<T> out;
    for (const auto& part : list(key)) {
      T v{};
      if (!parse_number(part, v)) throw ConfigError("invalid list entry '" + part + "' for " + key);
      out.push_back(v);
    }
    return out;
  }

  static std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

 private:
  const KeyValues* kv_;
};

// Creates the output directory and writes the resolved configuration into it.
inline std::string prepare_output(const std::string& command, const KeyValues& resolved) {
  const std::string dir = Options(resolved).required("out");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  const std::string path = join_path(dir, "config.txt");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# hyperctr " << command << '\n';
  for (const auto& [k, v] : resolved) out << k << '=' << v << '\n';
  if (!out) throw IoError("write failed for " + path);
  return dir;
}

inline SyntheticConfig synthetic_config(const Options& o) {
  SyntheticConfig c;
  c.num_users = o.number<std::size_t>("users");
  c.num_items = o.number<std::size_t>("items");
  c.num_interactions = o.number<std::size_t>("interactions");
  c.modalities = parse_modality_list(o.str("modalities"));
  c.dims = {o.number<Index>("visual_dim"), o.number<Index>("acoustic_dim"), o.number<Index>("textual_dim")};
  const auto w = o.numbers<double>("dominant_weights");
  if (w.size() != kMaxModalities) throw ConfigError("dominant_weights needs three values");
  std::copy(w.begin(), w.end(), c.dominant_weights.begin());
  c.span_seconds = o.number<std::int64_t>("span_months") * kSecondsPerMonth;
  c.noise_rate = o.number<double>("noise");
  c.base_rate = o.number<double>("base_rate");
  c.clusters = o.number<std::size_t>("clusters");
  c.latent_dim = o.number<std::size_t>("latent_dim");
  c.latent_jitter = o.number<double>("latent_jitter");
  c.sharpness = o.number<double>("sharpness");
  c.feature_noise = o.number<double>("feature_noise");
  c.exposure_bias = o.number<double>("exposure_bias");
  c.drift_period = o.number<std::int64_t>("drift_months") * kSecondsPerMonth;
  c.missing_rate = o.number<double>("missing_rate");
  c.validate();
  return c;
}

inline UipConfig uip_config(const Options& o, std::uint64_t seed) {
  UipConfig c;
  c.dim = o.number<Index>("uip_dim");
  c.epochs = o.number<std::size_t>("uip_epochs");
  c.batch_size = o.number<std::size_t>("uip_batch_size");
  c.negatives = o.number<std::size_t>("uip_negatives");
  c.learning_rate = o.number<double>("uip_learning_rate");
  c.l2 = o.number<double>("uip_l2");
  c.threshold = o.number<double>("threshold");
  c.learn_modality_weights = o.flag("learn_modality_weights");
  c.seed = seed;
  return c;
}

inline TrainConfig train_config(const KeyValues& resolved) {
  TrainConfig cfg;
  for (const auto& [k, v] : TrainConfig{}.to_key_values()) cfg.apply(k, resolved.at(k));
  cfg.validate();
  return cfg;
}

inline LoadedDataset load_data(const Options& o) {
  LoadOptions opt;
  if (!o.str("binarize_ratings").empty()) opt.binarize_threshold = o.number<double>("binarize_ratings");
  return load_dataset(o.required("data"), opt);
}

// Pretraining sees only clicks from the training split.
inline std::vector<InteractionRecord> training_clicks(const Dataset& ds, const std::vector<Split>& split) {
  std::vector<InteractionRecord> out;
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    if (split[r] == Split::train && ds.records[r].label == 1) out.push_back(ds.records[r]);
  }
  return out;
}

inline void print_assignment(std::ostream& log, const InterestModel& model, const std::vector<ModalityMask>& masks,
                             const std::optional<std::vector<Modality>>& truth) {
  for (Modality m : model.modalities) {
    std::size_t active = 0;
    for (const auto& mask : masks) active += mask[modality_index(m)];
    log << "  " << std::left << std::setw(9) << modality_name(m) << active << " users active\n";
  }
  if (truth) {
    std::size_t hit = 0;
    for (std::size_t u = 0; u < truth->size(); ++u) {
      const auto deg = model.interest_degrees(u);
      const auto best = static_cast<std::size_t>(std::max_element(deg.begin(), deg.end()) - deg.begin());
      hit += model.modalities[best] == (*truth)[u] ? 1 : 0;
    }
    log << "  strongest interest matches planted modality for " << hit << "/" << truth->size() << " users\n";
  }
}

inline void cmd_gen_data(const KeyValues& resolved, std::ostream& log) {
  const Options o(resolved);
  const SyntheticConfig cfg = synthetic_config(o);
  const std::string dir = prepare_output("gen-data", resolved);
  const SyntheticData data = generate_synthetic(cfg, o.number<std::uint64_t>("seed"));
  save_dataset(dir, data.dataset, &data.truth.dominant);
  std::size_t clicks = 0;
  for (const auto& r : data.dataset.records) clicks += r.label;
  log << "wrote " << data.dataset.records.size() << " interactions (click rate "
      << static_cast<double>(clicks) / static_cast<double>(data.dataset.records.size()) << ") to " << dir << '\n';
}

inline void cmd_pretrain(const KeyValues& resolved, std::ostream& log) {
  const Options o(resolved);
  const LoadedDataset loaded = load_data(o);
  const Dataset& ds = loaded.dataset;
  if (ds.features.num_modalities() == 0) throw ConfigError("dataset has no feature files");
  const UipConfig ucfg = uip_config(o, o.number<std::uint64_t>("seed"));
  const std::string dir = prepare_output("pretrain", resolved);
  const auto split = split_records(ds.records.size(), o.number<std::uint64_t>("split_seed"));
  const auto clicks = training_clicks(ds, split);
  const InterestModel model = pretrain_interest(ds, clicks, ucfg);
  save_interest_model(join_path(dir, "interest.bin"), model);
  write_interest_csv(join_path(dir, "interest.csv"), model, ds.user_ids);
  log << "interest assignment (threshold " << model.threshold << "):\n";
  print_assignment(log, model, assign_interests(model.scores, model.threshold, model.modalities), loaded.dominant_truth);
}

// Interest masks from a saved model, from inline pretraining, or all-active.
inline std::vector<ModalityMask> obtain_interests(const KeyValues& resolved, const LoadedDataset& loaded,
                                                  const std::vector<Split>& split, const TrainConfig& cfg,
                                                  const std::string& dir, std::ostream& log) {
  const Options o(resolved);
  const Dataset& ds = loaded.dataset;
  if (o.flag("no_pretrain")) {
    if (!o.str("interest").empty()) throw ConfigError("--interest and --no-pretrain are mutually exclusive");
    return all_active(ds.num_users, ds.features.modalities());
  }
  InterestModel model;
  if (!o.str("interest").empty()) {
    model = load_interest_model(o.str("interest"));
    if (static_cast<std::size_t>(model.scores.rows()) != ds.num_users) {
      throw ConfigError("interest model covers " + std::to_string(model.scores.rows()) + " users, dataset has " +
                        std::to_string(ds.num_users));
    }
  } else {
    model = pretrain_interest(ds, training_clicks(ds, split), uip_config(o, cfg.seed));
    save_interest_model(join_path(dir, "interest.bin"), model);
  }
  const auto masks = assign_interests(model.scores, model.threshold, model.modalities);
  log << "interest assignment:\n";
  print_assignment(log, model, masks, loaded.dominant_truth);
  return masks;
}

enum class Variant { full, visual_only, acoustic_only, textual_only, no_hypergraph };

inline Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "visual-only") return Variant::visual_only;
  if (name == "acoustic-only") return Variant::acoustic_only;
  if (name == "textual-only") return Variant::textual_only;
  if (name == "no-hypergraph") return Variant::no_hypergraph;
  throw ConfigError("unknown ablation variant '" + name + "'");
}

inline std::optional<Modality> variant_modality(Variant v) {
  switch (v) {
    case Variant::visual_only: return Modality::visual;
    case Variant::acoustic_only: return Modality::acoustic;
    case Variant::textual_only: return Modality::textual;
    default: return std::nullopt;
  }
}

// The dataset and config a variant trains on.
inline std::pair<Dataset, TrainConfig> apply_variant(const Dataset& ds, TrainConfig cfg, Variant v) {
  Dataset out = ds;
  if (auto m = variant_modality(v)) {
    if (!ds.features.has_modality(*m)) throw ConfigError("dataset has no " + std::string(modality_name(*m)) + " features");
    out.features = ds.features.restricted_to({*m});
  }
  if (v == Variant::no_hypergraph) cfg.use_hypergraph = false;
  return {std::move(out), cfg};
}

struct RunOutcome {
  TrainResult result;
  EvalResult test;
};

inline RunOutcome run_training(const Dataset& ds, const std::vector<Split>& split,
                               const std::vector<ModalityMask>& interests, const TrainConfig& cfg, std::ostream& log,
                               const std::string& label = {}) {
  const TrainingContext ctx(ds, split, interests, cfg);
  ParameterStore params = init_parameters(ds, cfg);
  RunOutcome out;
  out.result = train(params, ctx, [&](const EpochLog& e) {
    log << label << "epoch " << e.epoch << "  loss " << format_double(e.loss) << "  valid auc " << e.auc
        << "  valid logloss " << e.logloss << "  (" << std::fixed << std::setprecision(1) << e.seconds << "s)"
        << std::defaultfloat << std::setprecision(6) << '\n';
  });
  out.test = evaluate_parallel(out.result.best, ctx, Split::test, 1);
  return out;
}

inline void cmd_train(const KeyValues& resolved, std::ostream& log) {
  const Options o(resolved);
  const TrainConfig cfg0 = train_config(resolved);
  const Variant variant = parse_variant(o.str("ablate"));
  const LoadedDataset loaded = load_data(o);
  const std::string dir = prepare_output("train", resolved);
  const auto split = split_records(loaded.dataset.records.size(), cfg0.split_seed);
  const auto interests = obtain_interests(resolved, loaded, split, cfg0, dir, log);
  const auto [ds, cfg] = apply_variant(loaded.dataset, cfg0, variant);
  const RunOutcome run = run_training(ds, split, interests, cfg, log);

  Checkpoint ck;
  ck.config = cfg;
  ck.modalities = ds.features.modalities();
  ck.num_users = ds.num_users;
  ck.num_items = ds.num_items;
  ck.interests = interests;
  ck.params = run.result.best;
  save_checkpoint(join_path(dir, "checkpoint.bin"), ck);
  write_metrics_csv(join_path(dir, "metrics.csv"), run.result.log);
  log << "best epoch " << run.result.best_epoch << "  test auc " << run.test.auc << "  test logloss "
      << run.test.logloss << '\n';
}

// Adds, for every clicked test record, up to `count` items the user never
// interacted with as unclicked test records at the same timestamp. Graphs only
// use training clicks, so they are unchanged.
inline void add_sampled_negatives(Dataset& ds, std::vector<Split>& split, std::size_t count, std::uint64_t seed) {
  std::vector<std::set<std::uint32_t>> seen(ds.num_users);
  for (const auto& r : ds.records) seen[r.user].insert(r.item);
  std::mt19937_64 rng(seed);
  const std::size_t original = ds.records.size();
  for (std::size_t r = 0; r < original; ++r) {
    if (split[r] != Split::test || ds.records[r].label != 1) continue;
    const InteractionRecord rec = ds.records[r];
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 0; i < ds.num_items; ++i) {
      if (seen[rec.user].count(i) == 0) pool.push_back(i);
    }
    std::vector<std::uint32_t> picked;
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), count, rng);
    for (std::uint32_t i : picked) {
      ds.records.push_back(InteractionRecord{rec.user, i, rec.timestamp, 0});
      split.push_back(Split::test);
    }
  }
}

struct EvalRow {
  std::string split;
  EvalResult result;
};

inline std::vector<EvalRow> cmd_eval(const KeyValues& resolved, std::ostream& log) {
  const Options o(resolved);
  const Checkpoint ck = load_checkpoint(o.required("checkpoint"));
  const std::string which = o.str("split");
  if (which != "all" && which != "train" && which != "valid" && which != "test") {
    throw ConfigError("split must be train, valid, test or all");
  }
  const auto threads = o.number<std::size_t>("threads");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  const auto negatives = o.number<std::size_t>("negatives");
  LoadedDataset loaded = load_data(o);
  Dataset& ds = loaded.dataset;
  if (ds.num_users != ck.num_users || ds.num_items != ck.num_items) {
    throw ConfigError("checkpoint was trained on " + std::to_string(ck.num_users) + " users and " +
                      std::to_string(ck.num_items) + " items; dataset has " + std::to_string(ds.num_users) + " and " +
                      std::to_string(ds.num_items));
  }
  if (ck.interests.size() != ds.num_users) throw IoError("checkpoint interest table does not match the dataset");
  for (Modality m : ck.modalities) {
    if (!ds.features.has_modality(m)) throw ConfigError("dataset lacks " + std::string(modality_name(m)) + " features");
  }
  ds.features = ds.features.restricted_to(ck.modalities);
  const std::string dir = prepare_output("eval", resolved);
  auto split = split_records(ds.records.size(), ck.config.split_seed);

  std::vector<EvalRow> rows;
  if (negatives > 0) {
    add_sampled_negatives(ds, split, negatives, o.number<std::uint64_t>("seed"));
    const TrainingContext ctx(ds, split, ck.interests, ck.config);
    rows.push_back({"test-sampled", evaluate_parallel(ck.params, ctx, Split::test, threads)});
  } else {
    const TrainingContext ctx(ds, split, ck.interests, ck.config);
    for (Split s : {Split::train, Split::valid, Split::test}) {
      if (which != "all" && which != split_name(s)) continue;
      rows.push_back({std::string(split_name(s)), evaluate_parallel(ck.params, ctx, s, threads)});
    }
  }

  const std::string path = join_path(dir, "eval.csv");
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw IoError("cannot write " + path);
  csv << "split,auc,logloss,count\n";
  log << std::left << std::setw(14) << "split" << std::setw(12) << "AUC" << std::setw(12) << "logloss" << "records\n";
  for (const auto& row : rows) {
    csv << row.split << ',' << format_double(row.result.auc) << ',' << format_double(row.result.logloss) << ','
        << row.result.count << '\n';
    log << std::left << std::setw(14) << row.split << std::setw(12) << std::setprecision(4) << std::fixed
        << row.result.auc << std::setw(12) << row.result.logloss << row.result.count << std::defaultfloat
        << std::setprecision(6) << '\n';
  }
  if (!csv) throw IoError("write failed for " + path);
  return rows;
}

struct AblationRow {
  std::string sweep;
  std::string setting;
  double valid_auc = 0.0;
  double test_auc = 0.0;
  double test_logloss = 0.0;
  std::size_t best_epoch = 0;
};

// Index of the best interior setting when it beats both ends, else nullopt.
inline std::optional<std::size_t> interior_optimum(const std::vector<double>& values) {
  if (values.size() < 3) return std::nullopt;
  const auto best = static_cast<std::size_t>(std::max_element(values.begin() + 1, values.end() - 1) - values.begin());
  if (values[best] > values.front() && values[best] > values.back()) return best;
  return std::nullopt;
}

inline std::vector<AblationRow> cmd_ablate(const KeyValues& resolved, std::ostream& log) {
  const Options o(resolved);
  const TrainConfig base = train_config(resolved);
  std::vector<Variant> variants;
  for (const auto& name : o.list("variants")) variants.push_back(parse_variant(name));
  auto granularities = o.numbers<std::int64_t>("granularities");
  std::sort(granularities.begin(), granularities.end());
  const auto depths = o.numbers<std::size_t>("depths");
  for (auto g : granularities) {
    if (g <= 0) throw ConfigError("granularities must be positive");
  }
  const LoadedDataset loaded = load_data(o);
  const std::string dir = prepare_output("ablate", resolved);
  const auto split = split_records(loaded.dataset.records.size(), base.split_seed);
  const auto interests = obtain_interests(resolved, loaded, split, base, dir, log);

  std::vector<AblationRow> rows;
  auto run = [&](const std::string& sweep, const std::string& setting, Variant v, const TrainConfig& cfg) {
    const auto [ds, vcfg] = apply_variant(loaded.dataset, cfg, v);
    const RunOutcome out = run_training(ds, split, interests, vcfg, log, sweep + "=" + setting + "  ");
    rows.push_back({sweep, setting, out.result.best_auc, out.test.auc, out.test.logloss, out.result.best_epoch});
    log << sweep << '=' << setting << "  test auc " << out.test.auc << "  test logloss " << out.test.logloss << '\n';
  };
  const std::vector<std::string> names = o.list("variants");
  for (std::size_t k = 0; k < variants.size(); ++k) run("variant", names[k], variants[k], base);
  for (auto g : granularities) {
    TrainConfig cfg = base;
    cfg.granularity_months = g;
    run("granularity", std::to_string(g), Variant::full, cfg);
  }
  for (auto depth : depths) {
    TrainConfig cfg = base;
    cfg.hgcn_layers = depth;
    run("depth", std::to_string(depth), Variant::full, cfg);
  }

  const std::string path = join_path(dir, "ablation.csv");
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw IoError("cannot write " + path);
  csv << "sweep,setting,valid_auc,test_auc,test_logloss,best_epoch\n";
  for (const auto& r : rows) {
    csv << r.sweep << ',' << r.setting << ',' << format_double(r.valid_auc) << ',' << format_double(r.test_auc) << ','
        << format_double(r.test_logloss) << ',' << r.best_epoch << '\n';
  }
  if (!csv) throw IoError("write failed for " + path);

  if (!granularities.empty()) {
    std::vector<double> curve;
    for (const auto& r : rows) {
      if (r.sweep == "granularity") curve.push_back(r.test_auc);
    }
    if (auto inner = interior_optimum(curve)) {
      log << "granularity optimum: " << granularities[*inner] << " months (interior)\n";
    } else {
      const auto k = static_cast<std::size_t>(std::max_element(curve.begin(), curve.end()) - curve.begin());
      log << "granularity optimum: " << granularities[k] << " months (at an end of the sweep)\n";
    }
  }
  return rows;
}

inline void run_command(const std::string& command, const KeyValues& resolved, std::ostream& log) {
  if (command == "gen-data") cmd_gen_data(resolved, log);
  else if (command == "pretrain") cmd_pretrain(resolved, log);
  else if (command == "train") cmd_train(resolved, log);
  else if (command == "eval") cmd_eval(resolved, log);
  else if (command == "ablate") cmd_ablate(resolved, log);
  else throw ConfigError("unknown command '" + command + "'");
}

}  // namespace hyperctr::cli
