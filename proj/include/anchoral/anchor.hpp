#pragma once

#include "anchoral/data.hpp"
#include "anchoral/model.hpp"
#include "anchoral/rng.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <span>
#include <vector>

namespace anchoral {

/// kmeans++ seeding: the first row is drawn uniformly, each later row with
/// probability proportional to its squared Euclidean distance to the nearest
/// row already drawn. Returns min(a, |rows|) distinct entries of `rows` in
/// draw order. If every remaining row sits on a drawn one, the next draw is
/// uniform over the remaining rows.
template <typename Derived>
std::vector<Id> kmeanspp_sample(const Eigen::MatrixBase<Derived> &data, std::span<const Id> rows, std::size_t a,
                                Rng &rng) {
  const std::size_t m = rows.size();
  const std::size_t want = std::min(a, m);
  std::vector<Id> chosen;
  if (want == 0) return chosen;
  chosen.reserve(want);

  std::vector<double> d2(m, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(m, 0);
  std::size_t pick = static_cast<std::size_t>(uniform_index(rng, m));
  while (true) {
    taken[pick] = 1;
    chosen.push_back(rows[pick]);
    if (chosen.size() == want) break;

    const auto center = data.row(rows[pick]).template cast<double>().eval();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (taken[i]) {
        d2[i] = 0.0;
        continue;
      }
      d2[i] = std::min(d2[i], (data.row(rows[i]).template cast<double>() - center).squaredNorm());
      total += d2[i];
    }

    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      std::size_t last_positive = m;
      pick = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (d2[i] <= 0.0) continue;
        last_positive = i;
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (pick == m) pick = last_positive;  // rounding at the upper end
    } else {
      std::size_t remaining = m - chosen.size();
      std::size_t r = static_cast<std::size_t>(uniform_index(rng, remaining));
      for (std::size_t i = 0; i < m; ++i) {
        if (taken[i]) continue;
        if (r-- == 0) {
          pick = i;
          break;
        }
      }
    }
  }
  return chosen;
}

enum class AnchorStrategy { KMeansPP, Entropy, Random };

const char *to_string(AnchorStrategy s);
AnchorStrategy anchor_strategy_from_string(const std::string &s);

struct AnchorConfig {
  std::size_t per_class = 10;  // a
  AnchorStrategy majority = AnchorStrategy::KMeansPP;
  AnchorStrategy minority = AnchorStrategy::KMeansPP;
  /// When false, a x C anchors are drawn uniformly from the whole labelled
  /// set, ignoring class.
  bool class_anchored = true;
};

struct AnchorSet {
  std::map<ClassId, std::vector<Id>> anchors;
  std::size_t per_class = 0;

  std::size_t total() const;
  /// Anchors in class order, then draw order within a class.
  std::vector<Id> flattened() const;
};

/// Picks anchors per class from the labelled set. `model` is required by the
/// entropy strategy. Class c draws from the stream derive_seed(seed, {c}).
AnchorSet select_anchors(const DatasetState &state, const EmbeddingMatrix &emb, const AnchorConfig &cfg,
                         const ProxyClassifier *model, std::uint64_t seed);

}  // namespace anchoral
