#include "anchoral/strategy.hpp"

#include "anchoral/anchor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace anchoral {

double entropy(std::span<const double> p) {
  return entropy(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
}

const char *to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::Entropy: return "entropy";
    case StrategyKind::KMeans: return "kmeans";
    case StrategyKind::Badge: return "badge";
    case StrategyKind::Random: return "random";
  }
  return "unknown";
}

StrategyKind strategy_from_string(const std::string &s) {
  if (s == "entropy") return StrategyKind::Entropy;
  if (s == "kmeans") return StrategyKind::KMeans;
  if (s == "badge") return StrategyKind::Badge;
  if (s == "random") return StrategyKind::Random;
  throw ConfigError(fmt::format("unknown strategy `{}` (expected entropy, kmeans, badge or random)", s));
}

QuerySelection entropy_select(std::span<const Id> ids, const Eigen::MatrixXd &probs, std::size_t b) {
  if (static_cast<std::size_t>(probs.rows()) != ids.size())
    throw ContractError("entropy_select: probabilities and ids differ in length");
  std::vector<std::pair<double, Id>> scored(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    scored[i] = {entropy(probs.row(static_cast<Eigen::Index>(i))), ids[i]};
  const std::size_t want = std::min(b, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(want), scored.end(),
                    [](const auto &x, const auto &y) { return x.first > y.first || (x.first == y.first && x.second < y.second); });
  QuerySelection out;
  for (std::size_t i = 0; i < want; ++i) out.ids.push_back(scored[i].second);
  return out;
}

QuerySelection kmeans_diversity_select(std::span<const Id> ids, const Eigen::MatrixXd &representations,
                                       std::size_t b, Rng &rng) {
  if (static_cast<std::size_t>(representations.rows()) != ids.size())
    throw ContractError("kmeans_diversity_select: representations and ids differ in length");
  const auto m = static_cast<Eigen::Index>(ids.size());
  if (b >= ids.size()) return {std::vector<Id>(ids.begin(), ids.end())};
  const auto k = static_cast<Eigen::Index>(b);

  Eigen::MatrixXd x = representations;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }

  std::vector<Id> rows(static_cast<std::size_t>(m));
  std::iota(rows.begin(), rows.end(), Id{0});
  const auto seeds = kmeanspp_sample(x, rows, b, rng);
  Eigen::MatrixXd centroids(k, x.cols());
  for (Eigen::Index c = 0; c < k; ++c) centroids.row(c) = x.row(seeds[static_cast<std::size_t>(c)]);

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(m), 0);
  auto sq_dist = [&](Eigen::Index i, Eigen::Index c) { return (x.row(i) - centroids.row(c)).squaredNorm(); };

  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-6;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::Index best = 0;
      double best_d = sq_dist(i, 0);
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = sq_dist(i, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      ++sizes[static_cast<std::size_t>(best)];
    }
    // Reseed each empty cluster at the point farthest from its centroid.
    std::vector<std::uint8_t> moved(static_cast<std::size_t>(m), 0);
    for (Eigen::Index c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto owner = assign[static_cast<std::size_t>(i)];
        if (moved[static_cast<std::size_t>(i)] || sizes[static_cast<std::size_t>(owner)] <= 1) continue;
        const double d = sq_dist(i, owner);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) break;
      --sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      moved[static_cast<std::size_t>(far)] = 1;
    }

    Eigen::MatrixXd updated = Eigen::MatrixXd::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < m; ++i) updated.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    double shift = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto count = sizes[static_cast<std::size_t>(c)];
      if (count > 0) updated.row(c) /= static_cast<double>(count);
      else updated.row(c) = centroids.row(c);
      shift = std::max(shift, (updated.row(c) - centroids.row(c)).norm());
    }
    centroids = std::move(updated);
    if (shift < kTolerance) break;
  }

  QuerySelection out;
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(m), 0);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index best = -1;
    double best_d = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double d = sq_dist(i, c);
      if (best < 0 || d < best_d ||
          (d == best_d && ids[static_cast<std::size_t>(i)] < ids[static_cast<std::size_t>(best)])) {
        best = i;
        best_d = d;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    out.ids.push_back(ids[static_cast<std::size_t>(best)]);
  }
  return out;
}

QuerySelection badge_select(std::span<const Id> ids, const Eigen::MatrixXd &gradients, std::size_t b, Rng &rng) {
  if (static_cast<std::size_t>(gradients.rows()) != ids.size())
    throw ContractError("badge_select: gradients and ids differ in length");
  std::vector<Id> rows(ids.size());
  std::iota(rows.begin(), rows.end(), Id{0});
  QuerySelection out;
  for (Id r : kmeanspp_sample(gradients, rows, b, rng)) out.ids.push_back(ids[r]);
  return out;
}

QuerySelection random_select(std::span<const Id> ids, std::size_t b, Rng &rng) {
  std::vector<Id> pool(ids.begin(), ids.end());
  const std::size_t want = std::min(b, pool.size());
  for (std::size_t i = 0; i < want; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  return {std::move(pool)};
}

QuerySelection select_queries(StrategyKind kind, const ProxyClassifier &model, const EmbeddingMatrix &emb,
                              std::span<const Id> subpool, std::size_t b, Rng &rng) {
  if (b < 1) throw ContractError("select_queries: b must be >= 1");
  if (subpool.empty()) return {};
  switch (kind) {
    case StrategyKind::Entropy:
      return entropy_select(subpool, predict_proba(model, emb, subpool), b);
    case StrategyKind::KMeans: {
      Eigen::MatrixXd reps(static_cast<Eigen::Index>(subpool.size()), emb.cols());
      for (std::size_t i = 0; i < subpool.size(); ++i)
        reps.row(static_cast<Eigen::Index>(i)) = emb.row(subpool[i]).cast<double>();
      return kmeans_diversity_select(subpool, reps, b, rng);
    }
    case StrategyKind::Badge:
      return badge_select(subpool, gradient_embeddings(model, emb, subpool), b, rng);
    case StrategyKind::Random:
      return random_select(subpool, b, rng);
  }
  throw ContractError("select_queries: unknown strategy");
}

}  // namespace anchoral
