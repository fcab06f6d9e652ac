#pragma once

#include "anchoral/anchor.hpp"
#include "anchoral/data.hpp"
#include "anchoral/filter.hpp"
#include "anchoral/index.hpp"
#include "anchoral/model.hpp"
#include "anchoral/strategy.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace anchoral {

enum class FilterKind { AnchorAL, Seals, RandomSubset, NoOp };

const char *to_string(FilterKind f);
FilterKind filter_from_string(const std::string &s);

struct FilterConfig {
  FilterKind type = FilterKind::AnchorAL;
  std::size_t anchors_per_class = 10;       // a
  std::size_t neighbors_per_anchor = 50;    // K
  std::size_t max_subpool = 1000;           // AnchorAL cap
  std::size_t subset_size = 10000;          // RandomSubset size
  std::size_t seals_neighbors = 50;         // SEALS k
  AnchorStrategy majority_anchor = AnchorStrategy::KMeansPP;
  AnchorStrategy minority_anchor = AnchorStrategy::KMeansPP;
  bool anchoring = true;  // false: class-agnostic uniform anchors

  void validate() const;
  bool operator==(const FilterConfig &) const = default;
};

struct LoopConfig {
  std::size_t budget = 5000;  // B
  std::size_t rounds = 200;   // T
  std::size_t n_init = 100;
  std::size_t per_minority = 5;
  std::optional<double> time_limit;  // seconds of wall clock for the whole loop
  bool record_timing = true;         // false writes zero timings (byte-stable output)

  std::size_t query_size() const { return rounds == 0 ? 0 : budget / rounds; }
  void validate() const;
  bool operator==(const LoopConfig &) const = default;
};

/// One seed per source of randomness.
struct SeedConfig {
  std::uint64_t model_init = 0;
  std::uint64_t data_order = 0;
  std::uint64_t initial_set = 0;
  std::uint64_t selection = 0;  // pool filter and acquisition streams

  SeedConfig offset(std::uint64_t i) const { return {model_init + i, data_order + i, initial_set + i, selection + i}; }
  bool operator==(const SeedConfig &) const = default;
};

struct DatasetConfig {
  std::string train;
  std::string train_labels;
  std::string test;
  std::string test_labels;
  std::string meta;   // synthetic metadata JSON with cluster ids (optional)
  std::string index;  // AIDX file (optional)
  /// Restrict the initial minority sample to these clusters (needs `meta`).
  std::vector<int> initial_minority_clusters;

  bool operator==(const DatasetConfig &) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  IndexParams index;
  FilterConfig filter;
  StrategyKind strategy = StrategyKind::Entropy;
  TrainConfig train;
  LoopConfig loop;
  SeedConfig seeds;

  void validate() const;
  bool operator==(const ExperimentConfig &) const = default;
};

/// Training pool plus held-out test split.
struct Dataset {
  EmbeddingMatrix train;
  LabelStore train_labels;
  EmbeddingMatrix test;
  LabelStore test_labels;
  /// Ground-truth cluster per training instance, for discovery metrics only.
  std::vector<int> cluster_ids;

  void validate() const;
};

struct RoundRecord {
  std::size_t round = 0;  // 0 is the model trained on the initial set
  std::size_t labeled_total = 0;
  std::vector<std::size_t> labeled_per_class;
  std::vector<double> per_class_f1;
  double minority_f1 = 0.0;
  double majority_f1 = 0.0;
  double selection_time_s = 0.0;  // filter + strategy
  double filter_time_s = 0.0;     // filter (incl. anchor selection) alone
  std::size_t subpool_size = 0;
  double subpool_minority_frac = 0.0;
  std::size_t new_labels = 0;
  std::size_t new_minority = 0;
  std::vector<int> discovered_clusters;  // minority clusters with a labelled member
  bool short_round = false;

  bool operator==(const RoundRecord &) const = default;
};

struct ExperimentResult {
  std::vector<RoundRecord> rounds;
  double auc_minority = 0.0;
  double auc_majority = 0.0;
  double total_selection_time = 0.0;
  std::size_t completed_budget = 0;
  std::string stop_reason;
  ClassId majority_class = 0;

  std::size_t completed_rounds() const { return rounds.empty() ? 0 : rounds.size() - 1; }
  std::size_t labeled_minority() const;
};

/// Sum over i of (x[i+1]-x[i]) (y[i]+y[i+1]) / 2; xs strictly increasing.
double auc_trapezoid(std::span<const double> xs, std::span<const double> ys);

/// Fills the AUC, time and budget fields from `rounds`.
void finalize_result(ExperimentResult &result, std::size_t n_init);

/// Executes the filter-then-acquire loop: fit, filter, select, reveal, evaluate.
ExperimentResult run_experiment(const ExperimentConfig &cfg, const Dataset &data, const NeighborRetriever &index);

struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

/// Linear-interpolation quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);
Summary summarize(std::span<const double> values);

/// Median and IQR of budget, auc_majority, auc_minority, selection_time and
/// labeled_minority across runs.
std::map<std::string, Summary> aggregate_runs(std::span<const ExperimentResult> results);

/// Truncates one run to rounds 0..t and recomputes its totals.
ExperimentResult truncate_result(const ExperimentResult &result, std::size_t t, std::size_t n_init);

/// Truncates every run of every method to the smallest completed round count.
std::map<std::string, std::vector<ExperimentResult>> budget_matched(
    const std::map<std::string, std::vector<ExperimentResult>> &by_method, std::size_t n_init);

inline constexpr const char *kRoundsCsvHeader =
    "round,labeled_total,labeled_per_class,minority_f1,majority_f1,selection_time_s,subpool_size,"
    "subpool_minority_frac,new_minority,discovered_clusters";

void write_rounds_csv(std::ostream &out, std::span<const RoundRecord> rounds);

}  // namespace anchoral
