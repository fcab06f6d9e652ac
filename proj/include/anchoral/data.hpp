#pragma once

#include "anchoral/rng.hpp"
#include "anchoral/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace anchoral {

/// Throws ContractError unless the matrix is non-empty with finite entries.
void validate_embeddings(const EmbeddingMatrix &emb);

// AEMB: "AEMB", u32 version = 1, u64 n, u32 d, n*d float32, all little-endian.
EmbeddingMatrix load_embeddings(const std::filesystem::path &path);
void write_embeddings(const EmbeddingMatrix &emb, const std::filesystem::path &path);
EmbeddingMatrix parse_embeddings(std::span<const unsigned char> bytes);
std::vector<unsigned char> serialize_embeddings(const EmbeddingMatrix &emb);

/// Class metadata visible to models and filters; carries no per-instance labels.
struct ClassLayout {
  int num_classes = 2;
  ClassId majority = 0;
  std::vector<ClassId> minority;  // ascending

  static ClassLayout binary() { return {2, 0, {1}}; }
  bool is_minority(ClassId c) const { return c != majority; }
};

/// Ground-truth labels; acts as the oracle.
class LabelStore {
public:
  LabelStore(std::vector<ClassId> labels, int num_classes, ClassId majority);

  std::size_t size() const { return labels_.size(); }
  ClassId operator[](Id id) const { return labels_[id]; }
  const std::vector<ClassId> &labels() const { return labels_; }
  const ClassLayout &layout() const { return layout_; }
  int num_classes() const { return layout_.num_classes; }
  ClassId majority_class() const { return layout_.majority; }
  const std::vector<ClassId> &minority_classes() const { return layout_.minority; }
  bool is_minority(Id id) const { return labels_[id] != layout_.majority; }
  std::vector<std::size_t> class_counts() const;

private:
  std::vector<ClassId> labels_;
  ClassLayout layout_;
};

/// Labels CSV: header `id,label`, ids 0..n-1 each exactly once.
LabelStore load_labels(const std::filesystem::path &path, std::size_t n, std::optional<int> num_classes = {},
                       std::optional<ClassId> majority = {});
void write_labels(const LabelStore &labels, const std::filesystem::path &path);

/// Partition of ids into the unlabelled pool and the labelled set.
class DatasetState {
public:
  DatasetState(std::size_t n, const ClassLayout &layout);

  std::size_t size() const { return revealed_.size(); }
  const ClassLayout &layout() const { return layout_; }
  /// Sorted ascending.
  const std::vector<Id> &pool_ids() const { return pool_; }
  /// Sorted ascending.
  const std::vector<Id> &labeled_ids() const { return labeled_; }
  bool is_labeled(Id id) const { return revealed_[id] >= 0; }
  /// Revealed label, or -1 when unlabelled.
  ClassId revealed_label(Id id) const { return revealed_[id]; }
  /// One byte per instance, nonzero when labelled.
  std::span<const std::uint8_t> labeled_mask() const { return mask_; }
  std::vector<Id> labeled_of_class(ClassId c) const;
  std::vector<std::size_t> labeled_class_counts() const;

  /// Moves ids from the pool into the labelled set with the oracle's labels.
  void reveal(std::span<const Id> ids, const LabelStore &oracle);

private:
  std::vector<Id> pool_;
  std::vector<Id> labeled_;
  std::vector<ClassId> revealed_;
  std::vector<std::uint8_t> mask_;
  ClassLayout layout_;
};

/// Returns a copy of `state` with `ids` revealed.
DatasetState reveal(DatasetState state, const LabelStore &oracle, std::span<const Id> ids);

/// Labels `per_minority` instances from every minority class and fills the
/// rest of `n_init` from the majority, uniformly without replacement. When
/// `minority_cluster_ids` and `allowed_clusters` are given, minority
/// instances are drawn only from those clusters.
DatasetState build_initial_split(const LabelStore &labels, std::size_t n_init, std::size_t per_minority,
                                 std::uint64_t seed,
                                 std::span<const int> cluster_ids = {},
                                 std::span<const int> allowed_clusters = {});

struct SyntheticSpec {
  std::size_t n_total = 100000;
  std::size_t d = 32;
  double minority_fraction = 0.01;
  std::size_t n_minority_classes = 1;
  std::size_t n_minority_clusters = 4;
  std::size_t n_majority_clusters = 100;
  double cluster_sigma = 1.75;
  double cluster_center_scale = 5.0;
  /// Minority centres sit around a shared direction at this fraction of
  /// cluster_center_scale; 0 draws them independently like majority centres.
  double minority_spread = 0.0;
  std::size_t n_test_majority = 5000;
  std::size_t n_test_minority = 500;
  std::uint64_t seed = 0;

  bool operator==(const SyntheticSpec &) const = default;
};

struct LabeledSplit {
  EmbeddingMatrix embeddings;
  LabelStore labels;
  /// Cluster id per instance; minority clusters are 0..n_minority_clusters-1,
  /// majority clusters follow.
  std::vector<int> cluster_ids;
};

struct SyntheticDataset {
  LabeledSplit train;
  LabeledSplit test;
  /// Cluster centres, minority first.
  RowMatrix<double> centers;
};

SyntheticDataset generate_synthetic(const SyntheticSpec &spec);

}  // namespace anchoral
