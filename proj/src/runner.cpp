#include "anchoral/runner.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace anchoral {

const char *to_string(FilterKind f) {
  switch (f) {
    case FilterKind::AnchorAL: return "anchoral";
    case FilterKind::Seals: return "seals";
    case FilterKind::RandomSubset: return "random_subset";
    case FilterKind::NoOp: return "noop";
  }
  return "unknown";
}

FilterKind filter_from_string(const std::string &s) {
  if (s == "anchoral") return FilterKind::AnchorAL;
  if (s == "seals") return FilterKind::Seals;
  if (s == "random_subset") return FilterKind::RandomSubset;
  if (s == "noop") return FilterKind::NoOp;
  throw ConfigError(fmt::format("unknown filter `{}` (expected anchoral, seals, random_subset or noop)", s));
}

void FilterConfig::validate() const {
  if (anchors_per_class < 1) throw ConfigError("filter.a must be >= 1");
  if (neighbors_per_anchor < 1) throw ConfigError("filter.K must be >= 1");
  if (max_subpool < 1) throw ConfigError("filter.max_subpool must be >= 1");
  if (subset_size < 1) throw ConfigError("filter.subset_size must be >= 1");
  if (seals_neighbors < 1) throw ConfigError("filter.k must be >= 1");
}

void LoopConfig::validate() const {
  if (rounds < 1) throw ConfigError("loop.rounds must be >= 1");
  if (query_size() < 1) throw ConfigError("loop.budget / loop.rounds must be >= 1");
  if (n_init < 1) throw ConfigError("loop.n_init must be >= 1");
  if (time_limit && !(*time_limit > 0.0)) throw ConfigError("loop.time_limit must be > 0");
}

void ExperimentConfig::validate() const {
  index.validate();
  filter.validate();
  train.validate();
  loop.validate();
}

void Dataset::validate() const {
  validate_embeddings(train);
  if (train_labels.size() != static_cast<std::size_t>(train.rows()))
    throw ConfigError("training labels do not match training embeddings");
  if (test.rows() > 0) {
    validate_embeddings(test);
    if (test.cols() != train.cols()) throw ConfigError("test embeddings have a different dimension");
  }
  if (test_labels.size() != static_cast<std::size_t>(test.rows()))
    throw ConfigError("test labels do not match test embeddings");
  if (test_labels.num_classes() != train_labels.num_classes() ||
      test_labels.majority_class() != train_labels.majority_class())
    throw ConfigError("test and training label layouts differ");
  if (!cluster_ids.empty() && cluster_ids.size() != train_labels.size())
    throw ConfigError("cluster ids do not cover the training set");
}

std::size_t ExperimentResult::labeled_minority() const {
  if (rounds.empty()) return 0;
  std::size_t n = 0;
  const auto &counts = rounds.back().labeled_per_class;
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (static_cast<ClassId>(c) != majority_class) n += counts[c];
  return n;
}

double auc_trapezoid(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractError("auc_trapezoid: xs and ys differ in length");
  if (xs.size() < 2) throw ContractError("auc_trapezoid: need at least two points");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    if (!(xs[i + 1] > xs[i])) throw ContractError("auc_trapezoid: xs must be strictly increasing");
    area += (xs[i + 1] - xs[i]) * (ys[i] + ys[i + 1]) / 2.0;
  }
  return area;
}

void finalize_result(ExperimentResult &result, std::size_t n_init) {
  std::vector<double> xs, minority, majority;
  result.total_selection_time = 0.0;
  for (const auto &r : result.rounds) {
    xs.push_back(static_cast<double>(r.labeled_total));
    minority.push_back(r.minority_f1);
    majority.push_back(r.majority_f1);
    result.total_selection_time += r.selection_time_s;
  }
  result.completed_budget = result.rounds.empty() ? 0 : result.rounds.back().labeled_total - n_init;
  if (xs.size() >= 2) {
    result.auc_minority = auc_trapezoid(xs, minority);
    result.auc_majority = auc_trapezoid(xs, majority);
  } else {
    result.auc_minority = result.auc_majority = 0.0;
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

/// Reads true labels for instrumentation; nothing here flows back into selection.
class Recorder {
public:
  Recorder(const Dataset &data) : data_(data) {}

  RoundRecord record(std::size_t round, const DatasetState &state, const ProxyClassifier &model) {
    RoundRecord r;
    r.round = round;
    r.labeled_total = state.labeled_ids().size();
    r.labeled_per_class = state.labeled_class_counts();
    if (data_.test.rows() > 0) {
      const auto pred = predict(model, data_.test);
      r.per_class_f1 = per_class_f1(pred, data_.test_labels.labels(), data_.test_labels.num_classes());
      const auto &layout = data_.test_labels.layout();
      double sum = 0.0;
      for (auto c : layout.minority) sum += r.per_class_f1[static_cast<std::size_t>(c)];
      r.minority_f1 = sum / static_cast<double>(layout.minority.size());
      r.majority_f1 = r.per_class_f1[static_cast<std::size_t>(layout.majority)];
    }
    if (!data_.cluster_ids.empty()) {
      for (Id id : state.labeled_ids())
        if (data_.train_labels.is_minority(id)) discovered_.insert(data_.cluster_ids[id]);
      r.discovered_clusters.assign(discovered_.begin(), discovered_.end());
    }
    return r;
  }

  double minority_fraction(std::span<const Id> ids) const {
    if (ids.empty()) return 0.0;
    std::size_t m = 0;
    for (Id id : ids) m += data_.train_labels.is_minority(id) ? 1 : 0;
    return static_cast<double>(m) / static_cast<double>(ids.size());
  }

  std::size_t minority_count(std::span<const Id> ids) const {
    std::size_t m = 0;
    for (Id id : ids) m += data_.train_labels.is_minority(id) ? 1 : 0;
    return m;
  }

private:
  const Dataset &data_;
  std::set<int> discovered_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig &cfg, const Dataset &data, const NeighborRetriever &index) {
  cfg.validate();
  data.validate();
  const auto &emb = data.train;
  if (index.size() != static_cast<std::size_t>(emb.rows()))
    throw ConfigError(fmt::format("index covers {} instances, dataset has {}", index.size(), emb.rows()));
  if (!cfg.dataset.initial_minority_clusters.empty() && data.cluster_ids.empty())
    throw ConfigError("initial_minority_clusters requires cluster metadata");

  const std::size_t b = cfg.loop.query_size();
  DatasetState state = build_initial_split(data.train_labels, cfg.loop.n_init, cfg.loop.per_minority,
                                           cfg.seeds.initial_set, data.cluster_ids,
                                           cfg.dataset.initial_minority_clusters);

  TrainConfig train = cfg.train;
  train.seed = cfg.seeds.model_init;
  train.shuffle_seed = cfg.seeds.data_order;

  const std::uint64_t filter_seed = derive_seed(cfg.seeds.selection, {kFilterStream});
  Rng filter_rng(filter_seed);
  Rng strategy_rng(derive_seed(cfg.seeds.selection, {kStrategyStream}));
  SealsState seals;
  seals.k = cfg.filter.seals_neighbors;
  AnchorConfig anchor_cfg{cfg.filter.anchors_per_class, cfg.filter.majority_anchor, cfg.filter.minority_anchor,
                          cfg.filter.anchoring};

  Recorder recorder(data);
  ExperimentResult result;
  result.majority_class = data.train_labels.majority_class();
  ProxyClassifier model = fit(emb, state, train);
  result.rounds.push_back(recorder.record(0, state, model));
  result.stop_reason = "completed";

  std::vector<Id> newly_labeled;
  const auto loop_start = Clock::now();
  for (std::size_t t = 1; t <= cfg.loop.rounds; ++t) {
    if (cfg.loop.time_limit && seconds_between(loop_start, Clock::now()) >= *cfg.loop.time_limit) {
      result.stop_reason = "time_limit";
      break;
    }
    if (state.pool_ids().empty()) {
      result.stop_reason = "pool_exhausted";
      break;
    }

    const auto t0 = Clock::now();
    Subpool sub;
    switch (cfg.filter.type) {
      case FilterKind::AnchorAL: {
        const auto anchors = select_anchors(state, emb, anchor_cfg, &model, derive_seed(filter_seed, {t}));
        sub = anchoral_filter(anchors, index, state, cfg.filter.neighbors_per_anchor, cfg.filter.max_subpool);
        break;
      }
      case FilterKind::Seals:
        std::tie(seals, sub) = seals_filter(std::move(seals), index, state, newly_labeled);
        break;
      case FilterKind::RandomSubset:
        sub = random_subset_filter(state, cfg.filter.subset_size, filter_rng);
        break;
      case FilterKind::NoOp:
        sub = noop_filter(state);
        break;
    }
    const auto t1 = Clock::now();
    auto query = select_queries(cfg.strategy, model, emb, sub.ids, b, strategy_rng);
    const auto t2 = Clock::now();

    if (query.ids.empty()) {
      result.stop_reason = "empty_subpool";
      spdlog::warn("round {}: filter returned no candidates, stopping", t);
      break;
    }
    const double subpool_minority = recorder.minority_fraction(sub.ids);
    state.reveal(query.ids, data.train_labels);
    newly_labeled = query.ids;
    model = fit(emb, state, train);

    RoundRecord r = recorder.record(t, state, model);
    if (cfg.loop.record_timing) {
      r.selection_time_s = seconds_between(t0, t2);
      r.filter_time_s = seconds_between(t0, t1);
    }
    r.subpool_size = sub.size();
    r.subpool_minority_frac = subpool_minority;
    r.new_labels = query.ids.size();
    r.new_minority = recorder.minority_count(query.ids);
    r.short_round = query.ids.size() < b;
    if (r.short_round) spdlog::debug("round {}: short round, {} of {} labels", t, query.ids.size(), b);
    spdlog::debug("round {}: labelled {} subpool {} minority_f1 {:.4f}", t, r.labeled_total, r.subpool_size,
                  r.minority_f1);
    result.rounds.push_back(std::move(r));
  }
  finalize_result(result, cfg.loop.n_init);
  return result;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

Summary summarize(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75)};
}

std::map<std::string, Summary> aggregate_runs(std::span<const ExperimentResult> results) {
  if (results.empty()) throw ContractError("aggregate_runs: no results");
  std::map<std::string, std::vector<double>> columns;
  for (const auto &r : results) {
    columns["budget"].push_back(static_cast<double>(r.completed_budget));
    columns["auc_majority"].push_back(r.auc_majority);
    columns["auc_minority"].push_back(r.auc_minority);
    columns["selection_time"].push_back(r.total_selection_time);
    columns["labeled_minority"].push_back(static_cast<double>(r.labeled_minority()));
  }
  std::map<std::string, Summary> out;
  for (const auto &[name, values] : columns) out[name] = summarize(values);
  return out;
}

ExperimentResult truncate_result(const ExperimentResult &result, std::size_t t, std::size_t n_init) {
  ExperimentResult out = result;
  if (out.rounds.size() > t + 1) {
    out.rounds.resize(t + 1);
    out.stop_reason = "budget_matched";
  }
  finalize_result(out, n_init);
  return out;
}

std::map<std::string, std::vector<ExperimentResult>> budget_matched(
    const std::map<std::string, std::vector<ExperimentResult>> &by_method, std::size_t n_init) {
  std::size_t t_star = std::numeric_limits<std::size_t>::max();
  for (const auto &[method, runs] : by_method)
    for (const auto &r : runs) {
      if (r.completed_rounds() == 0)
        throw ContractError(fmt::format("budget_matched: a run of `{}` completed no rounds", method));
      t_star = std::min(t_star, r.completed_rounds());
    }
  std::map<std::string, std::vector<ExperimentResult>> out;
  for (const auto &[method, runs] : by_method)
    for (const auto &r : runs) out[method].push_back(truncate_result(r, t_star, n_init));
  return out;
}

void write_rounds_csv(std::ostream &out, std::span<const RoundRecord> rounds) {
  out << kRoundsCsvHeader << '\n';
  for (const auto &r : rounds) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.round, r.labeled_total,
                       fmt::join(r.labeled_per_class, ";"), r.minority_f1, r.majority_f1, r.selection_time_s,
                       r.subpool_size, r.subpool_minority_frac, r.new_minority,
                       fmt::join(r.discovered_clusters, ";"));
  }
}

}  // namespace anchoral
