#pragma once

#include "anchoral/data.hpp"
#include "anchoral/rng.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace anchoral::testing {

inline EmbeddingMatrix random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  EmbeddingMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Binary labels with the first `minority` ids in class 1.
inline LabelStore binary_labels(std::size_t n, std::size_t minority) {
  std::vector<ClassId> labels(n, 0);
  for (std::size_t i = 0; i < minority; ++i) labels[i] = 1;
  return LabelStore(labels, 2, 0);
}

inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("anchoral_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace anchoral::testing
