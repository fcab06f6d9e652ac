#include "anchoral/runner.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace anchoral;

namespace {

Dataset small_dataset(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_total = n;
  spec.d = 8;
  spec.minority_fraction = 0.05;
  spec.n_minority_clusters = 2;
  spec.n_majority_clusters = 6;
  spec.cluster_sigma = 0.5;
  spec.n_test_majority = 300;
  spec.n_test_minority = 60;
  spec.seed = seed;
  auto ds = generate_synthetic(spec);
  return {std::move(ds.train.embeddings), std::move(ds.train.labels), std::move(ds.test.embeddings),
          std::move(ds.test.labels), std::move(ds.train.cluster_ids)};
}

ExperimentConfig small_config(FilterKind filter, std::size_t budget, std::size_t rounds) {
  ExperimentConfig cfg;
  cfg.filter.type = filter;
  cfg.loop.budget = budget;
  cfg.loop.rounds = rounds;
  cfg.loop.record_timing = false;
  return cfg;
}

ExperimentResult fake_result(std::vector<double> minority_f1, std::size_t n_init = 10, std::size_t b = 5) {
  ExperimentResult r;
  for (std::size_t t = 0; t < minority_f1.size(); ++t) {
    RoundRecord rec;
    rec.round = t;
    rec.labeled_total = n_init + t * b;
    rec.labeled_per_class = {rec.labeled_total - 1, 1};
    rec.minority_f1 = minority_f1[t];
    rec.majority_f1 = 0.9;
    rec.selection_time_s = t == 0 ? 0.0 : 0.5;
    rec.new_labels = t == 0 ? 0 : b;
    r.rounds.push_back(rec);
  }
  finalize_result(r, n_init);
  return r;
}

}  // namespace

TEST_CASE("trapezoid AUC") {
  const std::vector<double> x = {0, 1, 2};
  CHECK(auc_trapezoid(x, x) == doctest::Approx(2.0).epsilon(1e-15));
  const std::vector<double> xs = {3, 4.5, 10}, ys = {0.7, 0.7, 0.7};
  CHECK(std::abs(auc_trapezoid(xs, ys) - 0.7 * 7) <= 1e-12);

  Rng rng(3);
  std::vector<double> rx(50), ry(50);
  double pos = 0.0;
  for (int i = 0; i < 50; ++i) {
    pos += 0.1 + uniform01(rng) * 25.0;
    rx[static_cast<std::size_t>(i)] = pos;
    ry[static_cast<std::size_t>(i)] = uniform01(rng);
  }
  // Rectangle under the lower end plus the triangle above it.
  double independent = 0.0;
  for (std::size_t i = 0; i + 1 < 50; ++i) {
    const double w = rx[i + 1] - rx[i];
    independent += std::min(ry[i], ry[i + 1]) * w + std::abs(ry[i + 1] - ry[i]) * w / 2.0;
  }
  CHECK(std::abs(auc_trapezoid(rx, ry) - independent) <= 1e-12 * independent);

  CHECK_THROWS_AS(auc_trapezoid(std::vector<double>{1, 1}, std::vector<double>{0, 0}), ContractError);
  CHECK_THROWS_AS(auc_trapezoid(std::vector<double>{1}, std::vector<double>{0}), ContractError);
}

TEST_CASE("quantiles and summaries") {
  const auto one = summarize(std::vector<double>{4.2});
  CHECK(one.median == 4.2);
  CHECK(one.iqr() == 0.0);
  const auto five = summarize(std::vector<double>{5, 1, 4, 2, 3});
  CHECK(five.median == 3.0);
  CHECK(five.iqr() == 2.0);
  const auto four = summarize(std::vector<double>{1, 2, 3, 4});
  CHECK(four.median == 2.5);
  CHECK(four.q1 == 1.75);
  CHECK(four.q3 == 3.25);
  CHECK(four.iqr() == 1.5);
  CHECK_THROWS_AS(quantile({}, 0.5), ContractError);
}

TEST_CASE("aggregate_runs") {
  std::vector<ExperimentResult> runs;
  for (double v : {1.0, 2.0, 3.0, 4.0}) {
    auto r = fake_result({0.1, 0.2});
    r.auc_minority = v;
    runs.push_back(r);
  }
  const auto stats = aggregate_runs(runs);
  CHECK(stats.at("auc_minority").median == 2.5);
  CHECK(stats.at("auc_minority").iqr() == 1.5);
  CHECK(stats.at("budget").median == 5.0);
  CHECK(stats.at("budget").iqr() == 0.0);
  CHECK(stats.at("labeled_minority").median == 1.0);
  CHECK(stats.at("selection_time").median == 0.5);
  CHECK(stats.size() == 5);
}

TEST_CASE("budget matching") {
  std::vector<double> long_curve(201), short_curve(11);
  for (std::size_t i = 0; i < long_curve.size(); ++i) long_curve[i] = 0.3 + 0.002 * static_cast<double>(i);
  for (std::size_t i = 0; i < short_curve.size(); ++i) short_curve[i] = 0.5;

  SUBCASE("complete runs are unchanged") {
    std::map<std::string, std::vector<ExperimentResult>> m = {{"a", {fake_result(long_curve)}},
                                                              {"b", {fake_result(long_curve)}}};
    const auto matched = budget_matched(m, 10);
    CHECK(matched.at("a")[0].rounds == m.at("a")[0].rounds);
    CHECK(matched.at("a")[0].auc_minority == m.at("a")[0].auc_minority);
  }
  SUBCASE("everything is cut to the shortest run") {
    std::map<std::string, std::vector<ExperimentResult>> m = {
        {"anchoral", {fake_result(long_curve), fake_result(long_curve)}}, {"seals", {fake_result(short_curve)}}};
    const auto matched = budget_matched(m, 10);
    for (const auto &[method, runs] : matched)
      for (std::size_t i = 0; i < runs.size(); ++i) {
        CHECK(runs[i].completed_rounds() == 10);
        CHECK(runs[i].completed_budget == 50);
        CHECK(runs[i].auc_minority <= m.at(method)[i].auc_minority);
        CHECK(runs[i].total_selection_time == doctest::Approx(5.0));
      }
  }
}

TEST_CASE("config validation") {
  ExperimentConfig cfg;
  CHECK(cfg.loop.query_size() == 25);
  cfg.loop.rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.loop.budget = 10;
  cfg.loop.rounds = 20;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.filter.anchors_per_class = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  for (auto f : {FilterKind::AnchorAL, FilterKind::Seals, FilterKind::RandomSubset, FilterKind::NoOp})
    CHECK(filter_from_string(to_string(f)) == f);
}

TEST_CASE("runner loop") {
  const auto data = small_dataset(2000, 1);
  const ExactRetriever exact(data.train);

  SUBCASE("records, accounting and AUC consistency") {
    for (auto f : {FilterKind::AnchorAL, FilterKind::Seals, FilterKind::RandomSubset, FilterKind::NoOp}) {
      auto cfg = small_config(f, 100, 10);
      cfg.filter.subset_size = 300;
      const auto r = run_experiment(cfg, data, exact);
      REQUIRE(r.rounds.size() == 11);
      CHECK(r.rounds[0].labeled_total == 100);
      std::size_t added = 0;
      std::vector<double> xs, ys;
      for (const auto &rec : r.rounds) {
        added += rec.new_labels;
        xs.push_back(static_cast<double>(rec.labeled_total));
        ys.push_back(rec.minority_f1);
        CHECK(std::accumulate(rec.labeled_per_class.begin(), rec.labeled_per_class.end(), std::size_t{0}) ==
              rec.labeled_total);
        if (rec.round > 0 && f == FilterKind::AnchorAL) CHECK(rec.subpool_size <= 1000);
        if (rec.round > 0 && f == FilterKind::NoOp) CHECK(rec.subpool_size == 2000 - rec.labeled_total + rec.new_labels);
      }
      CHECK(added == r.completed_budget);
      CHECK(r.completed_budget == 100);
      CHECK(std::abs(auc_trapezoid(xs, ys) - r.auc_minority) <= 1e-12);
      CHECK(r.stop_reason == "completed");
    }
  }
  SUBCASE("one round with b = |pool| labels everything") {
    auto cfg = small_config(FilterKind::NoOp, 1900, 1);
    const auto r = run_experiment(cfg, data, exact);
    CHECK(r.rounds.back().labeled_total == 2000);
    CHECK(r.completed_budget == 1900);
  }
  SUBCASE("pool exhaustion stops the loop") {
    auto cfg = small_config(FilterKind::NoOp, 3800, 2);
    const auto r = run_experiment(cfg, data, exact);
    CHECK(r.completed_rounds() == 1);
    CHECK(r.stop_reason == "pool_exhausted");
  }
  SUBCASE("short rounds when the filter is too small") {
    auto cfg = small_config(FilterKind::AnchorAL, 200, 5);
    cfg.filter.anchors_per_class = 1;
    cfg.filter.neighbors_per_anchor = 3;
    const auto r = run_experiment(cfg, data, exact);
    for (std::size_t t = 1; t < r.rounds.size(); ++t) {
      CHECK(r.rounds[t].short_round);
      CHECK(r.rounds[t].new_labels <= 6);
    }
  }
  SUBCASE("deterministic given seeds") {
    auto cfg = small_config(FilterKind::AnchorAL, 100, 10);
    cfg.seeds = {3, 4, 5, 6};
    const auto a = run_experiment(cfg, data, exact);
    const auto b = run_experiment(cfg, data, exact);
    CHECK(a.rounds == b.rounds);
    std::ostringstream ca, cb;
    write_rounds_csv(ca, a.rounds);
    write_rounds_csv(cb, b.rounds);
    CHECK(ca.str() == cb.str());
    cfg.seeds.selection = 7;
    CHECK_FALSE(run_experiment(cfg, data, exact).rounds == a.rounds);
  }
  SUBCASE("time limit") {
    auto cfg = small_config(FilterKind::NoOp, 400, 40);
    cfg.loop.time_limit = 1e-9;
    const auto r = run_experiment(cfg, data, exact);
    CHECK(r.stop_reason == "time_limit");
    CHECK(r.completed_rounds() < 40);
  }
  SUBCASE("mismatched index is rejected") {
    const auto other = anchoral::testing::random_embeddings(10, 8, 1);
    CHECK_THROWS_AS(run_experiment(small_config(FilterKind::AnchorAL, 100, 10), data, ExactRetriever(other)),
                    ConfigError);
  }
  SUBCASE("initial set restricted to one cluster") {
    auto cfg = small_config(FilterKind::NoOp, 25, 1);
    cfg.dataset.initial_minority_clusters = {1};
    const auto r = run_experiment(cfg, data, exact);
    CHECK(r.rounds[0].discovered_clusters == std::vector<int>{1});
  }
}

TEST_CASE("default budget gives 200 rounds of 25") {
  const auto data = small_dataset(6000, 2);
  const ExactRetriever exact(data.train);
  auto cfg = small_config(FilterKind::RandomSubset, 5000, 200);
  cfg.filter.subset_size = 200;
  cfg.strategy = StrategyKind::Random;
  const auto r = run_experiment(cfg, data, exact);
  CHECK(r.completed_rounds() == 200);
  CHECK(r.completed_budget == 5000);
  for (std::size_t t = 1; t < r.rounds.size(); ++t) REQUIRE(r.rounds[t].new_labels == 25);
}

TEST_CASE("NoOp with random acquisition labels in proportion to the pool") {
  const auto data = small_dataset(4000, 3);
  const ExactRetriever exact(data.train);
  const auto pool_counts = data.train_labels.class_counts();
  std::vector<double> observed(2, 0.0);
  double total = 0.0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    auto cfg = small_config(FilterKind::NoOp, 400, 4);
    cfg.strategy = StrategyKind::Random;
    cfg.seeds = SeedConfig{}.offset(s);
    const auto r = run_experiment(cfg, data, exact);
    for (std::size_t t = 1; t < r.rounds.size(); ++t) {
      observed[1] += static_cast<double>(r.rounds[t].new_minority);
      observed[0] += static_cast<double>(r.rounds[t].new_labels - r.rounds[t].new_minority);
      total += static_cast<double>(r.rounds[t].new_labels);
    }
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double e = total * static_cast<double>(pool_counts[c]) / 4000.0;
    chi2 += (observed[c] - e) * (observed[c] - e) / e;
  }
  CHECK(chi2 < 6.63);  // 1 dof, 1%
}

TEST_CASE("rounds CSV layout") {
  std::ostringstream out;
  auto r = fake_result({0.25, 0.5});
  r.rounds[1].discovered_clusters = {0, 3};
  write_rounds_csv(out, r.rounds);
  std::istringstream in(out.str());
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header ==
        "round,labeled_total,labeled_per_class,minority_f1,majority_f1,selection_time_s,subpool_size,"
        "subpool_minority_frac,new_minority,discovered_clusters");
  CHECK(row0 == "0,10,9;1,0.25,0.9,0,0,0,0,");
  CHECK(row1 == "1,15,14;1,0.5,0.9,0.5,0,0,0,0;3");
}
