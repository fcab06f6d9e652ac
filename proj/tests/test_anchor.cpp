#include "anchoral/anchor.hpp"
#include "anchoral/strategy.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace anchoral;
using anchoral::testing::random_embeddings;

namespace {

struct Fixture {
  EmbeddingMatrix emb;
  LabelStore labels;
  DatasetState state;
};

/// 400 points, class 1 for ids < 60; `labelled_minority` and `labelled_majority`
/// of each class are revealed.
Fixture make_fixture(std::size_t labelled_minority, std::size_t labelled_majority, std::uint64_t seed = 1) {
  auto emb = random_embeddings(400, 6, seed);
  auto labels = anchoral::testing::binary_labels(400, 60);
  DatasetState state(400, labels.layout());
  std::vector<Id> ids;
  for (Id i = 0; i < labelled_minority; ++i) ids.push_back(i);
  for (Id i = 0; i < labelled_majority; ++i) ids.push_back(100 + i);
  state.reveal(ids, labels);
  return {std::move(emb), std::move(labels), std::move(state)};
}

}  // namespace

TEST_CASE("kmeans++ forced cases") {
  Eigen::MatrixXd one(1, 1);
  one << 4.0;
  const std::vector<Id> row0 = {0};
  Rng rng(1);
  CHECK(kmeanspp_sample(one, row0, 1, rng) == std::vector<Id>{0});
  CHECK(kmeanspp_sample(one, row0, 5, rng) == std::vector<Id>{0});

  // Two points at the same location as the first draw and one far away.
  Eigen::MatrixXd pts(3, 1);
  pts << 0.0, 0.0, 10.0;
  const std::vector<Id> all = {0, 1, 2};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    const auto picked = kmeanspp_sample(pts, all, 2, r);
    if (picked[0] != 2) CHECK(picked[1] == 2);
  }

  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(4, 2);
  const std::vector<Id> four = {0, 1, 2, 3};
  Rng r(3);
  auto picked = kmeanspp_sample(same, four, 4, r);
  std::sort(picked.begin(), picked.end());
  CHECK(picked == four);
}

TEST_CASE("kmeans++ second pick law on x = 0, 1, 3") {
  Eigen::MatrixXd pts(3, 1);
  pts << 0.0, 1.0, 3.0;
  const std::vector<Id> all = {0, 1, 2};
  int first_zero = 0, then_three = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Rng rng(derive_seed(seed, {77}));
    const auto picked = kmeanspp_sample(pts, all, 2, rng);
    if (picked[0] != 0) continue;
    ++first_zero;
    then_three += picked[1] == 2 ? 1 : 0;
  }
  const double p = static_cast<double>(then_three) / first_zero;
  const double sigma = std::sqrt(0.9 * 0.1 / first_zero);
  CHECK(std::abs(p - 0.9) <= 3 * sigma);
}

TEST_CASE("per-class anchors") {
  AnchorConfig cfg;
  SUBCASE("a x C when every class has enough labels") {
    auto f = make_fixture(20, 30);
    const auto set = select_anchors(f.state, f.emb, cfg, nullptr, 5);
    CHECK(set.total() == 20);
    CHECK(set.anchors.at(0).size() == 10);
    CHECK(set.anchors.at(1).size() == 10);
  }
  SUBCASE("small classes are returned whole") {
    auto f = make_fixture(3, 30);
    const auto set = select_anchors(f.state, f.emb, cfg, nullptr, 5);
    auto minority = set.anchors.at(1);
    std::sort(minority.begin(), minority.end());
    CHECK(minority == std::vector<Id>{0, 1, 2});
    CHECK(set.total() == 13);
  }
  SUBCASE("class purity and cardinality over many seeds") {
    auto f = make_fixture(15, 40);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto set = select_anchors(f.state, f.emb, cfg, nullptr, seed);
      CHECK(set.total() <= 20);
      for (const auto &[c, ids] : set.anchors) {
        CHECK(std::set<Id>(ids.begin(), ids.end()).size() == ids.size());
        for (Id id : ids) REQUIRE(f.state.revealed_label(id) == c);
      }
    }
  }
  SUBCASE("consecutive draws differ") {
    auto f = make_fixture(15, 40);
    int differ = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
      const auto a = select_anchors(f.state, f.emb, cfg, nullptr, derive_seed(t, {1}));
      const auto b = select_anchors(f.state, f.emb, cfg, nullptr, derive_seed(t, {2}));
      differ += a.anchors != b.anchors ? 1 : 0;
    }
    CHECK(differ >= 90);
  }
  SUBCASE("seeded") {
    auto f = make_fixture(15, 40);
    CHECK(select_anchors(f.state, f.emb, cfg, nullptr, 9).anchors ==
          select_anchors(f.state, f.emb, cfg, nullptr, 9).anchors);
  }
}

TEST_CASE("entropy anchors are the top-a by entropy") {
  auto f = make_fixture(25, 40);
  const auto clf = initial_classifier(2, 6, 3);
  ProxyClassifier sharp = clf;
  sharp.weights *= 200.0;  // spread the probabilities out
  AnchorConfig cfg;
  cfg.majority = AnchorStrategy::Entropy;
  cfg.minority = AnchorStrategy::Entropy;
  const auto set = select_anchors(f.state, f.emb, cfg, &sharp, 0);
  for (ClassId c : {0, 1}) {
    auto ids = f.state.labeled_of_class(c);
    const auto probs = predict_proba(sharp, f.emb, ids);
    std::vector<std::pair<double, Id>> scored;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Eigen::RowVectorXd p = probs.row(static_cast<Eigen::Index>(i));
      double h = 0.0;
      for (double v : p)
        if (v > 0) h -= v * std::log(v);
      scored.push_back({h, ids[i]});
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto &a, const auto &b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<Id> expected;
    for (std::size_t i = 0; i < 10; ++i) expected.push_back(scored[i].second);
    CHECK(set.anchors.at(c) == expected);
  }
  CHECK_THROWS_AS(select_anchors(f.state, f.emb, cfg, nullptr, 0), ConfigError);
}

TEST_CASE("random anchors and class-agnostic anchors") {
  auto f = make_fixture(25, 40);
  AnchorConfig cfg;
  cfg.majority = AnchorStrategy::Random;
  cfg.minority = AnchorStrategy::Random;
  const auto set = select_anchors(f.state, f.emb, cfg, nullptr, 4);
  CHECK(set.total() == 20);

  AnchorConfig agnostic;
  agnostic.class_anchored = false;
  std::size_t minority_share = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = select_anchors(f.state, f.emb, agnostic, nullptr, seed);
    CHECK(s.total() == 20);
    std::set<Id> distinct;
    for (const auto &[c, ids] : s.anchors)
      for (Id id : ids) {
        REQUIRE(f.state.revealed_label(id) == c);
        distinct.insert(id);
      }
    CHECK(distinct.size() == 20);
    if (s.anchors.count(1)) minority_share += s.anchors.at(1).size();
  }
  // Proportional to the labelled mix (25 of 65), not 10 per class.
  CHECK(static_cast<double>(minority_share) / (200.0 * 20.0) == doctest::Approx(25.0 / 65.0).epsilon(0.1));
}

TEST_CASE("anchor strategy names") {
  for (auto s : {AnchorStrategy::KMeansPP, AnchorStrategy::Entropy, AnchorStrategy::Random})
    CHECK(anchor_strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(anchor_strategy_from_string("median"), ConfigError);
}
