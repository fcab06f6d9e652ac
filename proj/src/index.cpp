#include "anchoral/index.hpp"

#include "anchoral/data.hpp"
#include "anchoral/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <queue>

namespace anchoral {

void IndexParams::validate() const {
  if (max_connections < 2) throw ConfigError("index: max_connections must be >= 2");
  if (ef_construction < max_connections) throw ConfigError("index: ef_construction must be >= max_connections");
  if (ef_search < 1) throw ConfigError("index: ef_search must be >= 1");
}

RowMatrix<float> normalize_rows(const EmbeddingMatrix &emb) {
  RowMatrix<float> out(emb.rows(), emb.cols());
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const Eigen::VectorXd r = emb.row(i).cast<double>().transpose();
    const double norm = r.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError(fmt::format("row {} has zero norm", i));
    out.row(i) = (r / norm).cast<float>().transpose();
  }
  return out;
}

namespace {

std::size_t count_excluded(ExclusionMask exclude) {
  return static_cast<std::size_t>(std::count_if(exclude.begin(), exclude.end(), [](auto x) { return x != 0; }));
}

bool excluded(ExclusionMask exclude, Id id) { return !exclude.empty() && exclude[id] != 0; }

void check_mask(ExclusionMask exclude, std::size_t n) {
  if (!exclude.empty() && exclude.size() != n) throw ContractError("exclusion mask size does not match index size");
}

std::vector<std::uint8_t> mask_from_ids(std::span<const Id> ids, std::size_t n) {
  std::vector<std::uint8_t> mask(n, 0);
  for (auto id : ids) {
    if (id >= n) throw ContractError(fmt::format("excluded id {} out of range", id));
    mask[id] = 1;
  }
  return mask;
}

/// Keeps the k best of `hits` under ranks_before.
void keep_top(std::vector<NeighborHit> &hits, std::size_t k) {
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), ranks_before);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), ranks_before);
  }
}

/// Per-thread visit stamps so concurrent queries never share state.
struct VisitedList {
  std::vector<std::uint32_t> stamp;
  std::uint32_t current = 0;

  void reset(std::size_t n) {
    if (stamp.size() != n) {
      stamp.assign(n, 0);
      current = 0;
    }
    if (++current == 0) {
      std::fill(stamp.begin(), stamp.end(), 0);
      current = 1;
    }
  }
  bool visit(Id id) {
    if (stamp[id] == current) return false;
    stamp[id] = current;
    return true;
  }
};

VisitedList &visited_list() {
  thread_local VisitedList list;
  return list;
}

}  // namespace

std::vector<NeighborHit> exact_knn(const EmbeddingMatrix &emb, Id query, std::size_t k, ExclusionMask exclude) {
  const auto n = static_cast<std::size_t>(emb.rows());
  if (query >= n) throw ContractError(fmt::format("exact_knn: query {} out of range", query));
  if (k < 1) throw ContractError("exact_knn: k must be >= 1");
  check_mask(exclude, n);
  std::vector<NeighborHit> hits;
  hits.reserve(n);
  const auto q = emb.row(query);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<Id>(i);
    if (id == query || excluded(exclude, id)) continue;
    hits.push_back({id, cosine_similarity(q, emb.row(static_cast<Eigen::Index>(i)))});
  }
  keep_top(hits, k);
  return hits;
}

std::vector<NeighborHit> exact_knn(const EmbeddingMatrix &emb, Id query, std::size_t k, std::span<const Id> exclude) {
  const auto mask = mask_from_ids(exclude, static_cast<std::size_t>(emb.rows()));
  return exact_knn(emb, query, k, ExclusionMask(mask));
}

// ---------------------------------------------------------------------------

float VectorIndex::distance(const float *a, const float *b) const {
  const auto d = vectors_.cols();
  return 1.0f - Eigen::Map<const Eigen::VectorXf>(a, d).dot(Eigen::Map<const Eigen::VectorXf>(b, d));
}

VectorIndex VectorIndex::build(const EmbeddingMatrix &emb, const IndexParams &params) {
  validate_embeddings(emb);
  params.validate();
  VectorIndex index;
  index.params_ = params;
  index.vectors_ = normalize_rows(emb);
  const auto n = static_cast<std::size_t>(emb.rows());
  index.links_.resize(n);

  Rng rng(params.seed);
  const double level_mult = 1.0 / std::log(static_cast<double>(params.max_connections));
  for (std::size_t i = 0; i < n; ++i) {
    // 1 - uniform01 lies in (0, 1], so the log is finite.
    const int level = static_cast<int>(std::floor(-std::log(1.0 - uniform01(rng)) * level_mult));
    index.insert(static_cast<Id>(i), level);
  }
  return index;
}

Id VectorIndex::greedy_descend(const float *q, int to_level) const {
  Id cur = entry_;
  float cur_dist = distance(q, row(cur));
  for (int lc = max_level_; lc > to_level; --lc) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (Id nb : links_[cur][static_cast<std::size_t>(lc)]) {
        const float dist = distance(q, row(nb));
        if (dist < cur_dist || (dist == cur_dist && nb < cur)) {
          cur = nb;
          cur_dist = dist;
          changed = true;
        }
      }
    }
  }
  return cur;
}

std::vector<std::pair<float, Id>> VectorIndex::search_layer(const float *q, Id entry, std::size_t ef,
                                                            int level) const {
  using Item = std::pair<float, Id>;
  auto &visited = visited_list();
  visited.reset(size());

  // candidates: closest first; results: farthest on top.
  std::priority_queue<Item, std::vector<Item>, std::greater<>> candidates;
  std::priority_queue<Item> results;
  const Item start{distance(q, row(entry)), entry};
  visited.visit(entry);
  candidates.push(start);
  results.push(start);

  while (!candidates.empty()) {
    const Item c = candidates.top();
    if (c > results.top() && results.size() >= ef) break;
    candidates.pop();
    for (Id nb : links_[c.second][static_cast<std::size_t>(level)]) {
      if (!visited.visit(nb)) continue;
      const Item item{distance(q, row(nb)), nb};
      if (results.size() < ef || item < results.top()) {
        candidates.push(item);
        results.push(item);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Item> out(results.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = results.top();
    results.pop();
  }
  return out;
}

std::vector<Id> VectorIndex::select_neighbors(const std::vector<std::pair<float, Id>> &candidates,
                                              std::size_t m) const {
  // Candidates arrive sorted by distance to the base point. Keep a candidate
  // only if it is closer to the base than to every neighbour kept so far.
  std::vector<Id> kept;
  if (candidates.size() <= m) {
    for (const auto &c : candidates) kept.push_back(c.second);
    return kept;
  }
  for (const auto &[dist, id] : candidates) {
    if (kept.size() >= m) break;
    bool good = true;
    for (Id r : kept) {
      if (distance(row(id), row(r)) < dist) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(id);
  }
  return kept;
}

void VectorIndex::insert(Id id, int level) {
  links_[id].assign(static_cast<std::size_t>(level) + 1, {});
  if (max_level_ < 0) {
    entry_ = id;
    max_level_ = level;
    return;
  }
  const float *q = row(id);
  const std::size_t m = params_.max_connections;
  Id cur = greedy_descend(q, level);
  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    auto candidates = search_layer(q, cur, params_.ef_construction, lc);
    auto selected = select_neighbors(candidates, m);
    const std::size_t m_max = lc == 0 ? 2 * m : m;
    for (Id nb : selected) {
      auto &nb_links = links_[nb][static_cast<std::size_t>(lc)];
      nb_links.push_back(id);
      if (nb_links.size() > m_max) {
        std::vector<std::pair<float, Id>> pool;
        pool.reserve(nb_links.size());
        for (Id x : nb_links) pool.emplace_back(distance(row(nb), row(x)), x);
        std::sort(pool.begin(), pool.end());
        nb_links = select_neighbors(pool, m_max);
      }
    }
    links_[id][static_cast<std::size_t>(lc)] = std::move(selected);
    cur = candidates.front().second;
  }
  if (level > max_level_) {
    entry_ = id;
    max_level_ = level;
  }
}

std::vector<NeighborHit> VectorIndex::search(std::span<const float> unit_query, std::size_t ef) const {
  if (unit_query.size() != static_cast<std::size_t>(vectors_.cols()))
    throw ContractError("search: query dimension mismatch");
  const Id start = greedy_descend(unit_query.data(), 0);
  const auto found = search_layer(unit_query.data(), start, std::max<std::size_t>(ef, 1), 0);
  std::vector<NeighborHit> hits;
  hits.reserve(found.size());
  for (const auto &[dist, id] : found)
    hits.push_back({id, static_cast<double>(Eigen::Map<const Eigen::VectorXf>(unit_query.data(), vectors_.cols())
                                                .dot(Eigen::Map<const Eigen::VectorXf>(row(id), vectors_.cols())))});
  std::sort(hits.begin(), hits.end(), ranks_before);
  return hits;
}

std::vector<NeighborHit> VectorIndex::scan(Id query, std::size_t k, ExclusionMask exclude) const {
  std::vector<NeighborHit> hits;
  const auto d = vectors_.cols();
  const Eigen::Map<const Eigen::VectorXf> q(row(query), d);
  for (std::size_t i = 0; i < size(); ++i) {
    const auto id = static_cast<Id>(i);
    if (id == query || excluded(exclude, id)) continue;
    hits.push_back({id, static_cast<double>(q.dot(Eigen::Map<const Eigen::VectorXf>(row(id), d)))});
  }
  keep_top(hits, k);
  return hits;
}

std::vector<NeighborHit> VectorIndex::knn(Id query, std::size_t k, ExclusionMask exclude) const {
  const std::size_t n = size();
  if (query >= n) throw ContractError(fmt::format("knn: query {} out of range", query));
  if (k < 1) throw ContractError("knn: k must be >= 1");
  check_mask(exclude, n);

  std::size_t n_excluded = count_excluded(exclude);
  if (!excluded(exclude, query)) ++n_excluded;  // the query never counts as a hit
  const std::size_t available = n - n_excluded;
  k = std::min(k, available);
  if (k == 0) return {};

  // Over-fetch by the number of excluded ids expected among the top results
  // under uniform density, then double until k survive the filter.
  const std::size_t expected_overlap = (k * n_excluded + available - 1) / available;
  std::size_t ef = std::max(params_.ef_search, k + expected_overlap);
  constexpr int kMaxDoublings = 4;
  for (int attempt = 0; attempt <= kMaxDoublings; ++attempt) {
    auto hits = search(std::span<const float>(row(query), static_cast<std::size_t>(vectors_.cols())), ef);
    std::erase_if(hits, [&](const NeighborHit &h) { return h.id == query || excluded(exclude, h.id); });
    if (hits.size() >= k) {
      hits.resize(k);
      return hits;
    }
    if (ef >= n) break;
    ef = std::min(2 * ef, n);
  }
  return scan(query, k, exclude);
}

std::vector<NeighborHit> VectorIndex::knn(Id query, std::size_t k, std::span<const Id> exclude) const {
  const auto mask = mask_from_ids(exclude, size());
  return knn(query, k, ExclusionMask(mask));
}

bool VectorIndex::same_graph(const VectorIndex &other) const {
  return params_ == other.params_ && entry_ == other.entry_ && max_level_ == other.max_level_ &&
         links_ == other.links_;
}

// ---------------------------------------------------------------------------
// AIDX: "AIDX", u32 version, u32 ef_construction, u32 ef_search, u32 M,
// u64 seed, u64 n, u32 d, u64 entry, i32 max_level, then per node:
// u32 level count L, and for each of L levels u32 degree + degree u32 ids.

namespace {

constexpr std::uint32_t kAidxVersion = 1;

template <typename T>
void put(std::vector<unsigned char> &out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

struct Reader {
  std::span<const unsigned char> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw ParseError(ParseErrorKind::Truncated, "index file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += sizeof(T);
    return static_cast<T>(v);
  }
};

}  // namespace

void VectorIndex::save(const std::filesystem::path &path) const {
  std::vector<unsigned char> out{'A', 'I', 'D', 'X'};
  put<std::uint32_t>(out, kAidxVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.ef_construction));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.ef_search));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.max_connections));
  put<std::uint64_t>(out, params_.seed);
  put<std::uint64_t>(out, size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vectors_.cols()));
  put<std::uint64_t>(out, entry_);
  put<std::int32_t>(out, max_level_);
  for (const auto &levels : links_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(levels.size()));
    for (const auto &adj : levels) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(adj.size()));
      for (Id id : adj) put<std::uint32_t>(out, id);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", path.string()));
  f.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
}

VectorIndex VectorIndex::load(const std::filesystem::path &path, const EmbeddingMatrix &emb) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(ParseErrorKind::Io, fmt::format("cannot open {}", path.string()));
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "AIDX", 4) != 0)
    throw ParseError(ParseErrorKind::BadMagic, "missing AIDX magic");
  Reader r{bytes, 4};
  if (const auto v = r.get<std::uint32_t>(); v != kAidxVersion)
    throw ParseError(ParseErrorKind::BadVersion, fmt::format("index version {}", v));

  VectorIndex index;
  index.params_.ef_construction = r.get<std::uint32_t>();
  index.params_.ef_search = r.get<std::uint32_t>();
  index.params_.max_connections = r.get<std::uint32_t>();
  index.params_.seed = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  if (n != static_cast<std::uint64_t>(emb.rows()) || d != static_cast<std::uint64_t>(emb.cols()))
    throw ParseError(ParseErrorKind::Mismatch,
                     fmt::format("index built for {}x{}, embeddings are {}x{}", n, d, emb.rows(), emb.cols()));
  index.entry_ = static_cast<Id>(r.get<std::uint64_t>());
  index.max_level_ = r.get<std::int32_t>();
  if (n > 0 && (index.entry_ >= n || index.max_level_ < 0))
    throw ParseError(ParseErrorKind::BadHeader, "entry point out of range");
  index.links_.resize(n);
  for (auto &levels : index.links_) {
    const auto n_levels = r.get<std::uint32_t>();
    if (n_levels == 0 || static_cast<int>(n_levels) > index.max_level_ + 1)
      throw ParseError(ParseErrorKind::BadRow, "node level out of range");
    levels.resize(n_levels);
    for (auto &adj : levels) {
      const auto degree = r.get<std::uint32_t>();
      if (degree > n) throw ParseError(ParseErrorKind::BadRow, "degree exceeds node count");
      adj.resize(degree);
      for (auto &id : adj) {
        id = r.get<std::uint32_t>();
        if (id >= n) throw ParseError(ParseErrorKind::BadRow, "neighbour id out of range");
      }
    }
  }
  if (r.pos != bytes.size()) throw ParseError(ParseErrorKind::TrailingBytes, "bytes after adjacency lists");
  index.vectors_ = normalize_rows(emb);
  return index;
}

}  // namespace anchoral
