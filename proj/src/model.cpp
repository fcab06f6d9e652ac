#include "anchoral/model.hpp"

#include "anchoral/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace anchoral {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (min_steps < 1) throw ConfigError("train: min_steps must be >= 1");
  if (!(early_stop_delta >= 0.0)) throw ConfigError("train: early_stop_delta must be >= 0");
}

ProxyClassifier initial_classifier(int num_classes, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kInitStream}));
  ProxyClassifier clf{Eigen::MatrixXd(num_classes, dim), Eigen::VectorXd(num_classes)};
  for (Eigen::Index i = 0; i < clf.weights.size(); ++i) clf.weights.data()[i] = 0.02 * uniform01(rng) - 0.01;
  for (Eigen::Index i = 0; i < clf.bias.size(); ++i) clf.bias[i] = 0.02 * uniform01(rng) - 0.01;
  return clf;
}

namespace {

Eigen::MatrixXd gather_rows(const EmbeddingMatrix &emb, std::span<const Id> ids) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), emb.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= static_cast<std::size_t>(emb.rows())) throw ContractError(fmt::format("id {} out of range", ids[i]));
    x.row(static_cast<Eigen::Index>(i)) = emb.row(ids[i]).cast<double>();
  }
  return x;
}

Eigen::MatrixXd probabilities(const ProxyClassifier &clf, const Eigen::MatrixXd &x) {
  Eigen::MatrixXd logits = x * clf.weights.transpose();
  logits.rowwise() += clf.bias.transpose();
  return softmax_rows(logits);
}

std::vector<ClassId> argmax_rows(const Eigen::MatrixXd &p) {
  std::vector<ClassId> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_class(p.row(i));
  return out;
}

double mean_cross_entropy(const Eigen::MatrixXd &p, std::span<const ClassId> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total -= std::log(std::max(p(static_cast<Eigen::Index>(i), labels[i]), std::numeric_limits<double>::min()));
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

}  // namespace

Eigen::MatrixXd predict_proba(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids) {
  if (clf.dim() != emb.cols()) throw ContractError("predict_proba: model and embedding dimensions differ");
  return probabilities(clf, gather_rows(emb, ids));
}

Eigen::MatrixXd predict_proba(const ProxyClassifier &clf, const EmbeddingMatrix &emb) {
  if (clf.dim() != emb.cols()) throw ContractError("predict_proba: model and embedding dimensions differ");
  return probabilities(clf, emb.cast<double>());
}

ClassId argmax_class(const Eigen::Ref<const Eigen::RowVectorXd> &p) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = c;
  return static_cast<ClassId>(best);
}

std::vector<ClassId> predict(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids) {
  return argmax_rows(predict_proba(clf, emb, ids));
}

std::vector<ClassId> predict(const ProxyClassifier &clf, const EmbeddingMatrix &emb) {
  return argmax_rows(predict_proba(clf, emb));
}

Eigen::MatrixXd gradient_embeddings(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids) {
  const Eigen::MatrixXd x = gather_rows(emb, ids);
  const Eigen::MatrixXd p = probabilities(clf, x);
  const Eigen::Index c_count = p.cols();
  const Eigen::Index d = x.cols();
  Eigen::MatrixXd g(x.rows(), c_count * d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const ClassId y_hat = argmax_class(p.row(i));
    for (Eigen::Index c = 0; c < c_count; ++c) {
      const double coef = p(i, c) - (c == y_hat ? 1.0 : 0.0);
      g.row(i).segment(c * d, d) = coef * x.row(i);
    }
  }
  return g;
}

Eigen::VectorXd gradient_embedding(const ProxyClassifier &clf, const EmbeddingMatrix &emb, Id id) {
  const Id ids[] = {id};
  return gradient_embeddings(clf, emb, ids).row(0).transpose();
}

double cross_entropy(const ProxyClassifier &clf, const EmbeddingMatrix &emb, std::span<const Id> ids,
                     std::span<const ClassId> labels) {
  if (ids.size() != labels.size()) throw ContractError("cross_entropy: ids and labels differ in length");
  return mean_cross_entropy(predict_proba(clf, emb, ids), labels);
}

std::vector<double> per_class_f1(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                                 int num_classes) {
  if (predictions.size() != truth.size()) throw ContractError("f1: prediction and truth lengths differ");
  std::vector<double> tp(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> fp(tp), fn(tp);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto p = static_cast<std::size_t>(predictions[i]);
    const auto t = static_cast<std::size_t>(truth[i]);
    if (p == t) {
      tp[p] += 1;
    } else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  std::vector<double> f1(tp.size(), 0.0);
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    f1[c] = denom > 0 ? 2 * tp[c] / denom : 0.0;
  }
  return f1;
}

double macro_f1(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                std::span<const ClassId> classes) {
  if (classes.empty()) throw ContractError("macro_f1: empty class subset");
  ClassId max_class = *std::max_element(classes.begin(), classes.end());
  for (auto y : predictions) max_class = std::max(max_class, y);
  for (auto y : truth) max_class = std::max(max_class, y);
  const auto f1 = per_class_f1(predictions, truth, max_class + 1);
  double sum = 0.0;
  for (auto c : classes) sum += f1[static_cast<std::size_t>(c)];
  return sum / static_cast<double>(classes.size());
}

FitReport fit_with_report(const EmbeddingMatrix &emb, const DatasetState &state, const TrainConfig &cfg) {
  cfg.validate();
  const auto &ids = state.labeled_ids();
  if (ids.empty()) throw ContractError("fit: labelled set is empty");
  const auto &layout = state.layout();

  const Eigen::MatrixXd x = gather_rows(emb, ids);
  std::vector<ClassId> y(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) y[i] = state.revealed_label(ids[i]);
  const auto n = static_cast<Eigen::Index>(ids.size());
  const int num_classes = layout.num_classes;

  FitReport report;
  ProxyClassifier clf = initial_classifier(num_classes, emb.cols(), cfg.seed);
  report.initial_loss = mean_cross_entropy(probabilities(clf, x), y);
  report.model = clf;
  report.best_minority_f1 = -std::numeric_limits<double>::infinity();

  Rng shuffle(derive_seed(cfg.shuffle_seed, {kShuffleStream}));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<Eigen::Index>(cfg.batch_size);

  Eigen::MatrixXd xb, onehot;
  while (true) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      xb.resize(m, x.cols());
      onehot.setZero(m, num_classes);
      for (Eigen::Index r = 0; r < m; ++r) {
        const auto src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x.row(src);
        onehot(r, y[static_cast<std::size_t>(src)]) = 1.0;
      }
      const Eigen::MatrixXd residual = probabilities(clf, xb) - onehot;  // dL/dlogits
      clf.weights.noalias() -= (cfg.learning_rate / static_cast<double>(m)) * (residual.transpose() * xb);
      clf.bias.noalias() -= (cfg.learning_rate / static_cast<double>(m)) * residual.colwise().sum().transpose();
      ++report.steps;
    }
    ++report.epochs;

    const auto pred = argmax_rows(probabilities(clf, x));
    const double f1 = layout.minority.empty() ? 0.0 : macro_f1(pred, y, layout.minority);
    const bool improved = f1 > report.best_minority_f1 + cfg.early_stop_delta;
    if (improved) {
      report.best_minority_f1 = f1;
      report.best_epoch = report.epochs;
      report.model = clf;
    }
    if (report.steps >= cfg.min_steps && (!improved || report.epochs >= cfg.max_epochs)) break;
  }
  report.final_loss = mean_cross_entropy(probabilities(report.model, x), y);
  return report;
}

ProxyClassifier fit(const EmbeddingMatrix &emb, const DatasetState &state, const TrainConfig &cfg) {
  return fit_with_report(emb, state, cfg).model;
}

}  // namespace anchoral
