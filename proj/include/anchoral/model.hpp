#pragma once

#include "anchoral/data.hpp"
#include "anchoral/types.hpp"

#include <span>
#include <vector>

namespace anchoral {

/// Linear softmax head over fixed embeddings: p(x) = softmax(W x + b).
struct ProxyClassifier {
  Eigen::MatrixXd weights;  // C x d
  Eigen::VectorXd bias;     // C

  int num_classes() const { return static_cast<int>(weights.rows()); }
  Eigen::Index dim() const { return weights.cols(); }
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t min_steps = 100;
  double early_stop_delta = 1e-5;
  std::uint64_t seed = 0;          // weight initialisation
  std::uint64_t shuffle_seed = 0;  // per-epoch data order

  void validate() const;
  bool operator==(const TrainConfig &) const = default;
};

struct FitReport {
  ProxyClassifier model;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_minority_f1 = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // at the returned snapshot
};

/// Small uniform weights in [-0.01, 0.01] drawn from `seed`.
ProxyClassifier initial_classifier(int num_classes, Eigen::Index dim, std::uint64_t seed);

/// Row-wise numerically stable softmax.
template <typename Derived>
Eigen::MatrixXd softmax_rows(const Eigen::MatrixBase<Derived> &logits) {
  Eigen::MatrixXd p = logits.template cast<double>();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

/// Trains a freshly initialised model on the labelled part of `state`.
/// Keeps the snapshot with the best training minority macro-F1.
FitReport fit_with_report(const EmbeddingMatrix &emb, const DatasetState &state, const TrainConfig &cfg);
ProxyClassifier fit(const EmbeddingMatrix &emb, const DatasetState &state, const TrainConfig &cfg);

/// |ids| x C class probabilities.
Eigen::MatrixXd predict_proba(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids);
Eigen::MatrixXd predict_proba(const ProxyClassifier &clf, const EmbeddingMatrix &emb);

/// Argmax with ties to the lowest class id.
ClassId argmax_class(const Eigen::Ref<const Eigen::RowVectorXd> &p);
std::vector<ClassId> predict(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids);
std::vector<ClassId> predict(const ProxyClassifier &clf, const EmbeddingMatrix &emb);

/// Closed-form last-layer gradient of the cross-entropy at the predicted
/// label: block c is (p_c - [c == argmax p]) x, blocks in class order.
Eigen::VectorXd gradient_embedding(const ProxyClassifier &clf, const EmbeddingMatrix &emb, Id id);
Eigen::MatrixXd gradient_embeddings(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids);

/// Mean cross-entropy of `clf` on the given ids and labels.
double cross_entropy(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids,
                     std::span<const ClassId> labels);

/// F1 of each class 0..num_classes-1; a class never predicted nor present scores 0.
std::vector<double> per_class_f1(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                                 int num_classes);

/// Unweighted mean of per-class F1 over `classes`.
double macro_f1(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                std::span<const ClassId> classes);

}  // namespace anchoral
