#pragma once

#include "anchoral/types.hpp"

#include <algorithm>
#include <filesystem>
#include <span>
#include <vector>

namespace anchoral {

/// Cosine similarity of two equally sized, non-zero vectors, evaluated in double.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA> &u, const Eigen::MatrixBase<DerivedB> &v) {
  if (u.size() != v.size()) throw ContractError("cosine_similarity: length mismatch");
  const auto ud = u.template cast<double>().eval();
  const auto vd = v.template cast<double>().eval();
  const double nu = ud.norm();
  const double nv = vd.norm();
  if (nu == 0.0 || nv == 0.0) throw DomainError("cosine_similarity: zero-norm vector");
  return std::clamp(ud.cwiseProduct(vd).sum() / (nu * nv), -1.0, 1.0);
}

struct IndexParams {
  std::size_t ef_construction = 200;
  std::size_t ef_search = 200;
  std::size_t max_connections = 64;  // M; layer 0 keeps up to 2M
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const IndexParams &) const = default;
};

struct NeighborHit {
  Id id;
  double similarity;

  bool operator==(const NeighborHit &) const = default;
};

/// Non-increasing similarity, ties by ascending id.
inline bool ranks_before(const NeighborHit &a, const NeighborHit &b) {
  return a.similarity > b.similarity || (a.similarity == b.similarity && a.id < b.id);
}

/// Per-instance exclusion flags (nonzero = excluded); an empty span excludes nothing.
using ExclusionMask = std::span<const std::uint8_t>;

/// Source of k nearest neighbours of an indexed instance.
class NeighborRetriever {
public:
  virtual ~NeighborRetriever() = default;
  virtual std::size_t size() const = 0;
  /// Up to k hits, none excluded and never the query itself, ranked by ranks_before.
  virtual std::vector<NeighborHit> knn(Id query, std::size_t k, ExclusionMask exclude) const = 0;
};

/// Exact top-k by cosine similarity over the raw embeddings.
std::vector<NeighborHit> exact_knn(const EmbeddingMatrix &emb, Id query, std::size_t k, ExclusionMask exclude);
std::vector<NeighborHit> exact_knn(const EmbeddingMatrix &emb, Id query, std::size_t k, std::span<const Id> exclude);

/// Brute-force retriever; holds a reference to the embeddings.
class ExactRetriever final : public NeighborRetriever {
public:
  explicit ExactRetriever(const EmbeddingMatrix &emb) : emb_(emb) {}
  std::size_t size() const override { return static_cast<std::size_t>(emb_.rows()); }
  std::vector<NeighborHit> knn(Id query, std::size_t k, ExclusionMask exclude) const override {
    return exact_knn(emb_, query, k, exclude);
  }

private:
  const EmbeddingMatrix &emb_;
};

/// Hierarchical navigable small-world graph over unit-normalised rows.
/// Immutable after build; concurrent queries are safe.
class VectorIndex final : public NeighborRetriever {
public:
  static VectorIndex build(const EmbeddingMatrix &emb, const IndexParams &params);
  /// Reads an AIDX file; `emb` must be the matrix the index was built from.
  static VectorIndex load(const std::filesystem::path &path, const EmbeddingMatrix &emb);
  void save(const std::filesystem::path &path) const;

  std::size_t size() const override { return static_cast<std::size_t>(vectors_.rows()); }
  std::vector<NeighborHit> knn(Id query, std::size_t k, ExclusionMask exclude) const override;
  std::vector<NeighborHit> knn(Id query, std::size_t k, std::span<const Id> exclude) const;

  /// Approximate search for a unit-norm query with beam width ef; no filtering.
  std::vector<NeighborHit> search(std::span<const float> unit_query, std::size_t ef) const;

  const IndexParams &params() const { return params_; }
  Id entry_point() const { return entry_; }
  int max_level() const { return max_level_; }
  int level(Id node) const { return static_cast<int>(links_[node].size()) - 1; }
  std::span<const Id> neighbors(Id node, int level) const { return links_[node][static_cast<std::size_t>(level)]; }
  const RowMatrix<float> &vectors() const { return vectors_; }

  /// Same parameters and identical adjacency lists.
  bool same_graph(const VectorIndex &other) const;

private:
  VectorIndex() = default;

  float distance(const float *a, const float *b) const;
  const float *row(Id id) const { return vectors_.data() + static_cast<std::size_t>(id) * vectors_.cols(); }
  void insert(Id id, int level);
  std::vector<std::pair<float, Id>> search_layer(const float *q, Id entry, std::size_t ef, int level) const;
  std::vector<Id> select_neighbors(const std::vector<std::pair<float, Id>> &candidates, std::size_t m) const;
  Id greedy_descend(const float *q, int to_level) const;
  std::vector<NeighborHit> scan(Id query, std::size_t k, ExclusionMask exclude) const;

  RowMatrix<float> vectors_;
  IndexParams params_;
  std::vector<std::vector<std::vector<Id>>> links_;  // [node][level]
  Id entry_ = 0;
  int max_level_ = -1;
};

/// Rows scaled to unit norm; throws ContractError naming the first zero-norm row.
RowMatrix<float> normalize_rows(const EmbeddingMatrix &emb);

}  // namespace anchoral
