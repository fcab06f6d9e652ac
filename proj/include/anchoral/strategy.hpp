#pragma once

#include "anchoral/model.hpp"
#include "anchoral/rng.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace anchoral {

/// Predictive entropy in nats; 0 log 0 = 0. Throws DomainError unless `p`
/// is a distribution (non-negative, sums to 1 within 1e-6).
template <typename Derived>
double entropy(const Eigen::MatrixBase<Derived> &p) {
  double sum = 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = static_cast<double>(p.derived().coeff(i));
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("entropy: negative or non-finite probability");
    sum += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(sum - 1.0) > 1e-6) throw DomainError("entropy: probabilities do not sum to 1");
  return std::max(h, 0.0);
}

double entropy(std::span<const double> p);

enum class StrategyKind { Entropy, KMeans, Badge, Random };

const char *to_string(StrategyKind s);
StrategyKind strategy_from_string(const std::string &s);

struct QuerySelection {
  std::vector<Id> ids;
};

/// Top-b rows of `probs` (aligned with `ids`) by entropy, ties by ascending id.
QuerySelection entropy_select(std::span<const Id> ids, const Eigen::MatrixXd &probs, std::size_t b);

/// Lloyd's kmeans (k = b, kmeans++ init) on L2-normalised representations;
/// returns, per cluster, the not-yet-selected point nearest its centroid.
QuerySelection kmeans_diversity_select(std::span<const Id> ids, const Eigen::MatrixXd &representations,
                                       std::size_t b, Rng &rng);

/// kmeans++ draws on gradient embeddings, in draw order.
QuerySelection badge_select(std::span<const Id> ids, const Eigen::MatrixXd &gradients, std::size_t b, Rng &rng);

/// Uniform without replacement, returned ascending.
QuerySelection random_select(std::span<const Id> ids, std::size_t b, Rng &rng);

/// Runs `kind` on the subpool only.
QuerySelection select_queries(StrategyKind kind, const ProxyClassifier &model, const EmbeddingMatrix &emb,
                              std::span<const Id> subpool, std::size_t b, Rng &rng);

}  // namespace anchoral
