// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "anchoral/runner.hpp"

#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace anchoral;

namespace {

constexpr double kEntropyTol = 1e-9;
constexpr double kAucTol = 1e-12;
constexpr double kGradRelTol = 1e-4;
constexpr double kRecallMin = 0.95;
constexpr std::size_t kSubpoolCap = 1000;
constexpr double kDiscoveryRatio = 1.5;
constexpr std::size_t kDiscoveryRuns = 6;
constexpr std::size_t kSeeds = 8;
constexpr double kSigmas = 3.0;
constexpr double kF1Min = 0.99;
constexpr double kSoftmaxTol = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

EmbeddingMatrix gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  EmbeddingMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = g(rng);
  return m;
}

LabelStore binary(std::size_t n, std::size_t minority) {
  std::vector<ClassId> y(n, 0);
  for (std::size_t i = 0; i < minority; ++i) y[i] = 1;
  return LabelStore(std::move(y), 2, 0);
}

/// The shared 100k discovery task: dataset, index and results by variant.
struct DiscoveryTask {
  explicit DiscoveryTask(Dataset d) : data(std::move(d)), index(VectorIndex::build(data.train, IndexParams{})) {}

  Dataset data;
  VectorIndex index;
  std::vector<ExperimentResult> anchoral, random_subset, no_anchoring;

  static ExperimentConfig config(std::uint64_t run) {
    ExperimentConfig cfg;
    cfg.loop.budget = 1000;
    cfg.loop.rounds = 40;
    cfg.loop.record_timing = false;
    cfg.dataset.initial_minority_clusters = {0};
    cfg.seeds = SeedConfig{}.offset(run);
    return cfg;
  }
};

DiscoveryTask &task() {
  static DiscoveryTask t([] {
    auto ds = generate_synthetic(SyntheticSpec{});
    return Dataset{std::move(ds.train.embeddings), std::move(ds.train.labels), std::move(ds.test.embeddings),
                   std::move(ds.test.labels), std::move(ds.train.cluster_ids)};
  }());
  return t;
}

std::vector<ExperimentResult> &variant_runs(const std::string &name) {
  auto &t = task();
  auto &runs = name == "anchoral" ? t.anchoral : name == "random_subset" ? t.random_subset : t.no_anchoring;
  if (!runs.empty()) return runs;
  for (std::uint64_t i = 0; i < kSeeds; ++i) {
    auto cfg = DiscoveryTask::config(i);
    if (name == "random_subset") cfg.filter.type = FilterKind::RandomSubset;
    if (name == "no_anchoring") cfg.filter.anchoring = false;
    runs.push_back(run_experiment(cfg, t.data, t.index));
  }
  return runs;
}

double median_minority(const std::vector<ExperimentResult> &runs) {
  std::vector<double> v;
  for (const auto &r : runs) v.push_back(static_cast<double>(r.labeled_minority()));
  return quantile(v, 0.5);
}

std::string rounds_csv(const ExperimentResult &r) {
  std::ostringstream os;
  write_rounds_csv(os, r.rounds);
  return os.str();
}

Outcome closed_form() {
  double worst_h = 0.0;
  for (int c : {2, 4, 10}) {
    const std::vector<double> p(static_cast<std::size_t>(c), 1.0 / c);
    worst_h = std::max(worst_h, std::abs(entropy(p) - std::log(c)));
  }
  const std::vector<double> xs = {0.0, 0.5, 1.0, 1.5, 2.0};
  const double auc_err = std::abs(auc_trapezoid(xs, xs) - 2.0);

  const auto emb = gaussian_rows(10, 8, 5);
  const double h = 1e-5;
  double worst_g = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto clf = initial_classifier(3, 8, seed);
    clf.weights *= 20.0;
    for (Id id = 0; id < 10; ++id) {
      const auto g = gradient_embedding(clf, emb, id);
      const std::vector<Id> ids = {id};
      const std::vector<ClassId> y = {argmax_class(predict_proba(clf, emb, ids).row(0))};
      Eigen::VectorXd numeric(g.size());
      for (Eigen::Index c = 0; c < 3; ++c)
        for (Eigen::Index j = 0; j < 8; ++j) {
          auto plus = clf, minus = clf;
          plus.weights(c, j) += h;
          minus.weights(c, j) -= h;
          numeric[c * 8 + j] = (cross_entropy(plus, emb, ids, y) - cross_entropy(minus, emb, ids, y)) / (2 * h);
        }
      if (numeric.norm() > 0) worst_g = std::max(worst_g, (g - numeric).norm() / numeric.norm());
    }
  }
  return {worst_h <= kEntropyTol && auc_err <= kAucTol && worst_g <= kGradRelTol,
          fmt::format("entropy err {:.2e}, AUC err {:.2e}, gradient rel err {:.2e}", worst_h, auc_err, worst_g)};
}

Outcome index_recall() {
  const auto emb = gaussian_rows(10000, 32, 21);
  const auto index = VectorIndex::build(emb, IndexParams{});
  const std::vector<std::uint8_t> none(10000, 0);
  Rng rng(22);
  double total = 0.0;
  for (int q = 0; q < 100; ++q) {
    const Id id = static_cast<Id>(uniform_index(rng, 10000));
    const auto approx = index.knn(id, 50, none);
    const auto exact = exact_knn(emb, id, 50, ExclusionMask(none));
    std::set<Id> truth;
    for (const auto &hit : exact) truth.insert(hit.id);
    std::size_t found = 0;
    for (const auto &hit : approx) found += truth.count(hit.id);
    total += static_cast<double>(found) / static_cast<double>(truth.size());
  }
  const double recall = total / 100.0;
  return {recall >= kRecallMin, fmt::format("mean recall@50 {:.4f}", recall)};
}

Outcome subpool_bounds() {
  auto &t = task();
  std::size_t worst = 0, rounds = 0;
  for (const auto &r : variant_runs("anchoral"))
    for (std::size_t i = 1; i < r.rounds.size(); ++i) {
      worst = std::max(worst, r.rounds[i].subpool_size);
      ++rounds;
    }
  const bool anchoral_ok = worst <= kSubpoolCap && variant_runs("anchoral")[0].completed_rounds() == 40;

  auto cfg = DiscoveryTask::config(0);
  cfg.filter.type = FilterKind::Seals;
  const auto seals = run_experiment(cfg, t.data, t.index);
  bool monotone = true, exceeded = false;
  for (std::size_t i = 1; i < seals.rounds.size(); ++i) {
    if (i > 1 && seals.rounds[i].subpool_size < seals.rounds[i - 1].subpool_size) monotone = false;
    exceeded = exceeded || seals.rounds[i].subpool_size > kSubpoolCap;
  }
  return {anchoral_ok && monotone && exceeded && seals.completed_rounds() == 40,
          fmt::format("AnchorAL max subpool {} over {} rounds; SEALS {} -> {} candidates, non-decreasing {}", worst,
                      rounds, seals.rounds[1].subpool_size, seals.rounds.back().subpool_size, monotone)};
}

Subpool brute_force(const AnchorSet &anchors, const EmbeddingMatrix &emb, const DatasetState &state, std::size_t K,
                    std::size_t cap) {
  auto order = [](const auto &x, const auto &y) {
    return x.first > y.first || (x.first == y.first && x.second < y.second);
  };
  std::map<Id, std::pair<double, int>> acc;
  for (Id a : anchors.flattened()) {
    std::vector<std::pair<double, Id>> sims;
    for (Id p : state.pool_ids())
      sims.push_back({cosine_similarity(emb.row(a).cast<double>(), emb.row(p).cast<double>()), p});
    std::sort(sims.begin(), sims.end(), order);
    sims.resize(std::min(K, sims.size()));
    for (const auto &[s, id] : sims) {
      acc[id].first += s;
      acc[id].second += 1;
    }
  }
  std::vector<std::pair<double, Id>> ranked;
  for (const auto &[id, v] : acc) ranked.push_back({v.first / v.second, id});
  std::sort(ranked.begin(), ranked.end(), order);
  ranked.resize(std::min(cap, ranked.size()));
  Subpool out;
  for (const auto &[s, id] : ranked) {
    out.ids.push_back(id);
    out.scores.push_back(s);
  }
  return out;
}

Outcome oracle_equivalence() {
  int agree = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(derive_seed(trial, {4}));
    const std::size_t n = 20 + uniform_index(rng, 181);
    const auto emb = gaussian_rows(n, 2 + uniform_index(rng, 15), trial);
    const auto labels = binary(n, std::max<std::size_t>(2, n / 8));
    std::vector<Id> ids(n);
    std::iota(ids.begin(), ids.end(), Id{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(n / 3);
    ids.push_back(0);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    DatasetState state(n, labels.layout());
    state.reveal(ids, labels);
    AnchorConfig acfg;
    acfg.per_class = 1 + uniform_index(rng, 10);
    const auto anchors = select_anchors(state, emb, acfg, nullptr, trial);
    const std::size_t K = 1 + uniform_index(rng, 50);
    const std::size_t cap = 1 + uniform_index(rng, 100);
    const auto sub = anchoral_filter(anchors, ExactRetriever(emb), state, K, cap);
    const auto oracle = brute_force(anchors, emb, state, K, cap);
    agree += sub.ids == oracle.ids && sub.scores == oracle.scores;
  }
  return {agree == 50, fmt::format("{}/50 trials identical", agree)};
}

Outcome discovery_direction() {
  const auto &anchoral = variant_runs("anchoral");
  const auto &random = variant_runs("random_subset");
  const double ma = median_minority(anchoral), mr = median_minority(random);
  std::size_t discovered = 0;
  for (const auto &r : anchoral) {
    const auto &found = r.rounds.back().discovered_clusters;
    discovered += std::any_of(found.begin(), found.end(), [](int c) { return c != 0; });
  }
  return {ma >= kDiscoveryRatio * mr && discovered >= kDiscoveryRuns,
          fmt::format("median labelled minority AnchorAL {} vs RandomSubset {} ({:.2f}x); new cluster found in {}/{}",
                      ma, mr, mr > 0 ? ma / mr : INFINITY, discovered, kSeeds)};
}

Outcome no_anchoring_direction() {
  const double ma = median_minority(variant_runs("anchoral"));
  const double mn = median_minority(variant_runs("no_anchoring"));
  return {mn < ma, fmt::format("median labelled minority no-anchoring {} vs AnchorAL {}", mn, ma)};
}

Outcome kmeanspp_law() {
  Eigen::MatrixXd pts(3, 1);
  pts << 0.0, 1.0, 3.0;
  const std::vector<Id> all = {0, 1, 2};
  std::size_t zero_first = 0, zero_then_three = 0, one_first = 0, one_then_three = 0;
  for (std::uint64_t trial = 0; trial < 10000; ++trial) {
    Rng rng(derive_seed(trial, {7}));
    const auto picked = kmeanspp_sample(pts, all, 2, rng);
    if (picked[0] == 0) {
      ++zero_first;
      zero_then_three += picked[1] == 2;
    } else if (picked[0] == 1) {
      ++one_first;
      one_then_three += picked[1] == 2;
    }
  }
  // From x=0: d² = 1 and 9, so 1/10 vs 9/10. From x=1: d² = 1 and 4, so 1/5 vs 4/5.
  auto within = [](std::size_t hits, std::size_t n, double p) {
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    return std::abs(static_cast<double>(hits) / static_cast<double>(n) - p) <= kSigmas * sigma;
  };
  const bool ok = within(zero_then_three, zero_first, 0.9) && within(one_then_three, one_first, 0.8);
  return {ok, fmt::format("P(3 | 0 first) = {:.4f} over {}, P(3 | 1 first) = {:.4f} over {}",
                          static_cast<double>(zero_then_three) / zero_first, zero_first,
                          static_cast<double>(one_then_three) / one_first, one_first)};
}

Outcome aggregation() {
  std::vector<ExperimentResult> runs;
  for (double v : {1.0, 2.0, 3.0, 4.0}) {
    ExperimentResult r;
    r.auc_minority = v;
    r.rounds.resize(1);
    runs.push_back(r);
  }
  const auto stats = aggregate_runs(runs).at("auc_minority");
  const bool agg_ok = stats.median == 2.5 && stats.iqr() == 1.5;

  auto run_with = [](std::size_t rounds) {
    ExperimentResult r;
    for (std::size_t t = 0; t <= rounds; ++t) {
      RoundRecord rec;
      rec.round = t;
      rec.labeled_total = 10 + 5 * t;
      rec.labeled_per_class = {10 + 4 * t, t};
      rec.minority_f1 = 0.1 * static_cast<double>(t);
      r.rounds.push_back(rec);
    }
    finalize_result(r, 10);
    return r;
  };
  const std::map<std::string, std::vector<ExperimentResult>> by_method = {
      {"a", {run_with(6), run_with(4)}}, {"b", {run_with(5)}}};
  const auto matched = budget_matched(by_method, 10);
  bool trunc_ok = true;
  for (const auto &[m, rs] : matched)
    for (const auto &r : rs) trunc_ok = trunc_ok && r.completed_rounds() == 4 && r.completed_budget == 20;
  return {agg_ok && trunc_ok, fmt::format("median {} IQR {}; all methods truncated to round 4: {}", stats.median,
                                          stats.iqr(), trunc_ok)};
}

Outcome determinism() {
  auto &t = task();
  const auto first = rounds_csv(variant_runs("anchoral")[0]);
  const auto again = rounds_csv(run_experiment(DiscoveryTask::config(0), t.data, t.index));
  return {first == again, fmt::format("{} bytes, identical: {}", first.size(), first == again)};
}

Outcome proxy_sanity() {
  Rng rng(10);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const std::size_t n = 2000, minority = 200, d = 16;
  EmbeddingMatrix emb(n, d);
  std::vector<ClassId> y(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) emb(i, j) = g(rng);
    const bool is_min = i < minority;
    y[i] = is_min ? 1 : 0;
    // Margin of at least 0.5 on the first coordinate.
    emb(i, 0) = is_min ? 0.5f + std::abs(emb(i, 0)) : -0.5f - std::abs(emb(i, 0));
  }
  const LabelStore labels(y, 2, 0);
  DatasetState state(n, labels.layout());
  std::vector<Id> all(n);
  std::iota(all.begin(), all.end(), Id{0});
  state.reveal(all, labels);
  const auto clf = fit(emb, state, TrainConfig{});
  const auto f1 = per_class_f1(predict(clf, emb), y, 2)[1];

  const auto logits = gaussian_rows(1000, 7, 11).cast<double>() * 10.0;
  const auto p = softmax_rows(logits);
  const double worst = (p.rowwise().sum().array() - 1.0).abs().maxCoeff();
  return {f1 >= kF1Min && worst <= kSoftmaxTol,
          fmt::format("minority F1 {:.4f}; max |row sum - 1| {:.2e}", f1, worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, closed_form},        {2, index_recall},           {3, subpool_bounds}, {4, oracle_equivalence},
      {5, discovery_direction}, {6, no_anchoring_direction}, {7, kmeanspp_law},   {8, aggregation},
      {9, determinism},         {10, proxy_sanity}};
  int failed = 0;
  for (const auto &[id, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception &e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("criterion {:>2}: {} - {} [{:.1f}s]\n", id, o.pass ? "PASS" : "FAIL", o.detail, secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
