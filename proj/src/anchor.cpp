#include "anchoral/anchor.hpp"

#include "anchoral/strategy.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace anchoral {

const char *to_string(AnchorStrategy s) {
  switch (s) {
    case AnchorStrategy::KMeansPP: return "kmeanspp";
    case AnchorStrategy::Entropy: return "entropy";
    case AnchorStrategy::Random: return "random";
  }
  return "unknown";
}

AnchorStrategy anchor_strategy_from_string(const std::string &s) {
  if (s == "kmeanspp") return AnchorStrategy::KMeansPP;
  if (s == "entropy") return AnchorStrategy::Entropy;
  if (s == "random") return AnchorStrategy::Random;
  throw ConfigError(fmt::format("unknown anchor strategy `{}` (expected kmeanspp, entropy or random)", s));
}

std::size_t AnchorSet::total() const {
  std::size_t n = 0;
  for (const auto &[c, ids] : anchors) n += ids.size();
  return n;
}

std::vector<Id> AnchorSet::flattened() const {
  std::vector<Id> out;
  for (const auto &[c, ids] : anchors) out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

namespace {

std::vector<Id> top_entropy(const std::vector<Id> &ids, const ProxyClassifier &model, const EmbeddingMatrix &emb,
                            std::size_t a) {
  const Eigen::MatrixXd p = predict_proba(model, emb, ids);
  return entropy_select(ids, p, a).ids;
}

std::vector<Id> uniform_subset(std::vector<Id> ids, std::size_t a, Rng &rng) {
  const std::size_t want = std::min(a, ids.size());
  for (std::size_t i = 0; i < want; ++i) std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
  ids.resize(want);
  return ids;
}

}  // namespace

AnchorSet select_anchors(const DatasetState &state, const EmbeddingMatrix &emb, const AnchorConfig &cfg,
                         const ProxyClassifier *model, std::uint64_t seed) {
  if (cfg.per_class < 1) throw ConfigError("anchors: per-class count must be >= 1");
  const auto &layout = state.layout();
  AnchorSet set;
  set.per_class = cfg.per_class;

  if (!cfg.class_anchored) {
    Rng rng(derive_seed(seed, {0xA11}));
    const auto total = cfg.per_class * static_cast<std::size_t>(layout.num_classes);
    auto picked = uniform_subset(state.labeled_ids(), total, rng);
    for (Id id : picked) set.anchors[state.revealed_label(id)].push_back(id);
    return set;
  }

  for (ClassId c = 0; c < layout.num_classes; ++c) {
    const auto members = state.labeled_of_class(c);
    if (members.empty()) continue;
    const AnchorStrategy strategy = c == layout.majority ? cfg.majority : cfg.minority;
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    std::vector<Id> picked;
    switch (strategy) {
      case AnchorStrategy::KMeansPP:
        picked = kmeanspp_sample(emb, members, cfg.per_class, rng);
        break;
      case AnchorStrategy::Entropy:
        if (model == nullptr) throw ConfigError("entropy anchor strategy requires a trained model");
        picked = top_entropy(members, *model, emb, cfg.per_class);
        break;
      case AnchorStrategy::Random:
        picked = uniform_subset(members, cfg.per_class, rng);
        break;
    }
    set.anchors[c] = std::move(picked);
  }
  return set;
}

}  // namespace anchoral
