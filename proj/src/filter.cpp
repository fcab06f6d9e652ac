#include "anchoral/filter.hpp"

#include <algorithm>
#include <unordered_map>

namespace anchoral {

Subpool anchoral_filter(const AnchorSet &anchors, const NeighborRetriever &index, const DatasetState &state,
                        std::size_t neighbors_per_anchor, std::size_t max_subpool) {
  if (neighbors_per_anchor < 1) throw ContractError("anchoral_filter: K must be >= 1");
  if (max_subpool < 1) throw ContractError("anchoral_filter: max subpool size must be >= 1");
  if (index.size() != state.size()) throw ContractError("anchoral_filter: index and dataset sizes differ");
  Subpool out;
  out.capacity = max_subpool;
  if (state.pool_ids().empty()) return out;
  const auto anchor_ids = anchors.flattened();
  if (anchor_ids.empty()) throw ContractError("anchoral_filter: no anchors");

  struct Accum {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::unordered_map<Id, Accum> acc;
  for (Id anchor : anchor_ids) {
    for (const auto &hit : index.knn(anchor, neighbors_per_anchor, state.labeled_mask())) {
      auto &a = acc[hit.id];
      a.sum += hit.similarity;
      ++a.count;
    }
  }

  std::vector<NeighborHit> ranked;
  ranked.reserve(acc.size());
  for (const auto &[id, a] : acc) ranked.push_back({id, a.sum / static_cast<double>(a.count)});
  const std::size_t keep = std::min(ranked.size(), max_subpool);
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), ranks_before);
  ranked.resize(keep);
  for (const auto &h : ranked) {
    out.ids.push_back(h.id);
    out.scores.push_back(h.similarity);
  }
  return out;
}

std::pair<SealsState, Subpool> seals_filter(SealsState seals, const NeighborRetriever &index,
                                            const DatasetState &state, std::span<const Id> newly_labeled) {
  if (seals.k < 1) throw ContractError("seals_filter: k must be >= 1");
  if (index.size() != state.size()) throw ContractError("seals_filter: index and dataset sizes differ");
  std::span<const Id> sources = newly_labeled;
  if (!seals.seeded) {
    sources = state.labeled_ids();
    seals.seeded = true;
  }
  std::vector<Id> added;
  for (Id id : sources)
    for (const auto &hit : index.knn(id, seals.k, state.labeled_mask())) added.push_back(hit.id);
  std::sort(added.begin(), added.end());

  std::vector<Id> merged;
  merged.reserve(seals.candidate_ids.size() + added.size());
  std::set_union(seals.candidate_ids.begin(), seals.candidate_ids.end(), added.begin(), added.end(),
                 std::back_inserter(merged));
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  std::erase_if(merged, [&](Id id) { return state.is_labeled(id); });
  seals.candidate_ids = std::move(merged);

  Subpool sub;
  sub.ids = seals.candidate_ids;
  return {std::move(seals), std::move(sub)};
}

Subpool random_subset_filter(const DatasetState &state, std::size_t size, Rng &rng) {
  if (size < 1) throw ContractError("random_subset_filter: size must be >= 1");
  std::vector<Id> pool = state.pool_ids();
  const std::size_t want = std::min(size, pool.size());
  for (std::size_t i = 0; i < want; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(want);
  std::sort(pool.begin(), pool.end());
  Subpool out;
  out.ids = std::move(pool);
  out.capacity = size;
  return out;
}

Subpool noop_filter(const DatasetState &state) {
  Subpool out;
  out.ids = state.pool_ids();
  return out;
}

}  // namespace anchoral
