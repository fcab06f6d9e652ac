#pragma once

#include "anchoral/anchor.hpp"
#include "anchoral/data.hpp"
#include "anchoral/index.hpp"
#include "anchoral/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace anchoral {

/// Candidate set handed to the acquisition strategy.
struct Subpool {
  std::vector<Id> ids;
  /// Mean anchor similarity per id, aligned with `ids` (AnchorAL only).
  std::vector<double> scores;
  std::optional<std::size_t> capacity;

  std::size_t size() const { return ids.size(); }
};

/// Retrieves K pool neighbours per anchor, averages the similarities of ids
/// found by several anchors, and keeps the min(|union|, max_subpool) best,
/// ranked by mean similarity then ascending id.
Subpool anchoral_filter(const AnchorSet &anchors, const NeighborRetriever &index, const DatasetState &state,
                        std::size_t neighbors_per_anchor, std::size_t max_subpool);

struct SealsState {
  std::vector<Id> candidate_ids;  // sorted ascending
  std::size_t k = 50;
  bool seeded = false;
};

/// Adds the k nearest unlabelled neighbours of each newly labelled id (every
/// labelled id on the first call), drops labelled ids, and returns the whole
/// candidate set as the subpool.
std::pair<SealsState, Subpool> seals_filter(SealsState seals, const NeighborRetriever &index,
                                            const DatasetState &state, std::span<const Id> newly_labeled);

/// min(size, |pool|) pool ids uniformly without replacement, ascending.
Subpool random_subset_filter(const DatasetState &state, std::size_t size, Rng &rng);

/// The entire pool.
Subpool noop_filter(const DatasetState &state);

}  // namespace anchoral
