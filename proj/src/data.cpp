#include "anchoral/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string_view>

namespace anchoral {

const char *to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::Io: return "io";
    case ParseErrorKind::BadMagic: return "bad_magic";
    case ParseErrorKind::BadVersion: return "bad_version";
    case ParseErrorKind::Truncated: return "truncated";
    case ParseErrorKind::TrailingBytes: return "trailing_bytes";
    case ParseErrorKind::NonFinite: return "non_finite";
    case ParseErrorKind::BadHeader: return "bad_header";
    case ParseErrorKind::BadRow: return "bad_row";
    case ParseErrorKind::Mismatch: return "mismatch";
  }
  return "unknown";
}

void validate_embeddings(const EmbeddingMatrix &emb) {
  if (emb.rows() < 1 || emb.cols() < 1) throw ContractError("embedding matrix must have n >= 1 and d >= 1");
  if (!emb.allFinite()) throw ContractError("embedding matrix has non-finite entries");
}

namespace {

constexpr std::uint32_t kAembVersion = 1;
constexpr std::size_t kAembHeader = 4 + 4 + 8 + 4;

template <typename T>
T read_le(const unsigned char *p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void append_le(std::vector<unsigned char> &out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::vector<unsigned char> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::Io, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path &path, const std::vector<unsigned char> &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(ParseErrorKind::Io, fmt::format("short write to {}", path.string()));
}

}  // namespace

EmbeddingMatrix parse_embeddings(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "AEMB", 4) != 0)
    throw ParseError(ParseErrorKind::BadMagic, "missing AEMB magic");
  if (bytes.size() < kAembHeader) throw ParseError(ParseErrorKind::Truncated, "header shorter than 20 bytes");
  const auto version = read_le<std::uint32_t>(bytes.data() + 4);
  if (version != kAembVersion) throw ParseError(ParseErrorKind::BadVersion, fmt::format("version {}", version));
  const auto n = read_le<std::uint64_t>(bytes.data() + 8);
  const auto d = read_le<std::uint32_t>(bytes.data() + 16);
  if (n == 0 || d == 0) throw ParseError(ParseErrorKind::BadHeader, fmt::format("n={} d={}", n, d));
  const std::size_t payload = bytes.size() - kAembHeader;
  if (n > payload / 4 / d || n * d * 4 > payload)
    throw ParseError(ParseErrorKind::Truncated,
                     fmt::format("payload of {} bytes, header declares {}x{} floats", payload, n, d));
  if (payload != n * d * 4)
    throw ParseError(ParseErrorKind::TrailingBytes, fmt::format("{} bytes after payload", payload - n * d * 4));

  EmbeddingMatrix emb(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char *p = bytes.data() + kAembHeader;
  float *dst = emb.data();
  for (std::size_t i = 0; i < n * d; ++i, p += 4) {
    dst[i] = std::bit_cast<float>(read_le<std::uint32_t>(p));
    if (!std::isfinite(dst[i]))
      throw ParseError(ParseErrorKind::NonFinite, fmt::format("row {} col {}", i / d, i % d));
  }
  return emb;
}

std::vector<unsigned char> serialize_embeddings(const EmbeddingMatrix &emb) {
  validate_embeddings(emb);
  std::vector<unsigned char> out;
  out.reserve(kAembHeader + static_cast<std::size_t>(emb.size()) * 4);
  for (char c : {'A', 'E', 'M', 'B'}) out.push_back(static_cast<unsigned char>(c));
  append_le<std::uint32_t>(out, kAembVersion);
  append_le<std::uint64_t>(out, static_cast<std::uint64_t>(emb.rows()));
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(emb.cols()));
  for (Eigen::Index i = 0; i < emb.size(); ++i) append_le(out, std::bit_cast<std::uint32_t>(emb.data()[i]));
  return out;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path &path) {
  const auto bytes = read_file(path);
  return parse_embeddings(bytes);
}

void write_embeddings(const EmbeddingMatrix &emb, const std::filesystem::path &path) {
  write_file(path, serialize_embeddings(emb));
}

// ---------------------------------------------------------------------------

LabelStore::LabelStore(std::vector<ClassId> labels, int num_classes, ClassId majority)
    : labels_(std::move(labels)) {
  if (num_classes < 2) throw ContractError("label store needs at least two classes");
  if (majority < 0 || majority >= num_classes) throw ContractError("majority class out of range");
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] < 0 || labels_[i] >= num_classes)
      throw ContractError(fmt::format("label {} of instance {} outside 0..{}", labels_[i], i, num_classes - 1));
  layout_.num_classes = num_classes;
  layout_.majority = majority;
  for (ClassId c = 0; c < num_classes; ++c)
    if (c != majority) layout_.minority.push_back(c);
}

std::vector<std::size_t> LabelStore::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(layout_.num_classes), 0);
  for (auto y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

LabelStore load_labels(const std::filesystem::path &path, std::size_t n, std::optional<int> num_classes,
                       std::optional<ClassId> majority) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorKind::Io, fmt::format("cannot open {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(ParseErrorKind::BadHeader, "empty labels file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,label") throw ParseError(ParseErrorKind::BadHeader, fmt::format("expected `id,label`, got `{}`", line));

  std::vector<ClassId> labels(n, -1);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::uint64_t id = 0;
    std::uint32_t label = 0;
    const char *b = line.data();
    const char *e = b + line.size();
    if (comma == std::string::npos) throw ParseError(ParseErrorKind::BadRow, fmt::format("row {}: `{}`", row, line));
    auto r1 = std::from_chars(b, b + comma, id);
    auto r2 = std::from_chars(b + comma + 1, e, label);
    if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} || r2.ptr != e)
      throw ParseError(ParseErrorKind::BadRow, fmt::format("row {}: `{}`", row, line));
    if (id >= n) throw ParseError(ParseErrorKind::Mismatch, fmt::format("id {} >= n={}", id, n));
    if (labels[id] != -1) throw ParseError(ParseErrorKind::Mismatch, fmt::format("id {} listed twice", id));
    labels[id] = static_cast<ClassId>(label);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == -1) throw ParseError(ParseErrorKind::Mismatch, fmt::format("id {} missing", i));

  const int c = num_classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  ClassId maj = 0;
  if (majority) {
    maj = *majority;
  } else {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(c, 1)), 0);
    for (auto y : labels)
      if (y < c) ++counts[static_cast<std::size_t>(y)];
    maj = static_cast<ClassId>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  try {
    return LabelStore(std::move(labels), std::max(c, 2), maj);
  } catch (const ContractError &e) {
    throw ParseError(ParseErrorKind::Mismatch, e.what());
  }
}

void write_labels(const LabelStore &labels, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", path.string()));
  out << "id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[static_cast<Id>(i)] << '\n';
}

// ---------------------------------------------------------------------------

DatasetState::DatasetState(std::size_t n, const ClassLayout &layout)
    : pool_(n), revealed_(n, -1), mask_(n, 0), layout_(layout) {
  std::iota(pool_.begin(), pool_.end(), Id{0});
}

std::vector<Id> DatasetState::labeled_of_class(ClassId c) const {
  std::vector<Id> out;
  for (auto id : labeled_)
    if (revealed_[id] == c) out.push_back(id);
  return out;
}

std::vector<std::size_t> DatasetState::labeled_class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(layout_.num_classes), 0);
  for (auto id : labeled_) ++counts[static_cast<std::size_t>(revealed_[id])];
  return counts;
}

void DatasetState::reveal(std::span<const Id> ids, const LabelStore &oracle) {
  if (oracle.size() != revealed_.size()) throw ContractError("oracle size does not match dataset state");
  std::vector<Id> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ContractError("reveal: duplicate id in query");
  for (auto id : sorted) {
    if (id >= revealed_.size()) throw ContractError(fmt::format("reveal: id {} out of range", id));
    if (mask_[id]) throw ContractError(fmt::format("reveal: id {} already labelled", id));
  }
  for (auto id : sorted) {
    revealed_[id] = oracle[id];
    mask_[id] = 1;
  }
  // Both lists stay sorted: drop revealed ids from the pool, merge into labelled.
  std::erase_if(pool_, [this](Id id) { return mask_[id] != 0; });
  std::vector<Id> merged;
  merged.reserve(labeled_.size() + sorted.size());
  std::merge(labeled_.begin(), labeled_.end(), sorted.begin(), sorted.end(), std::back_inserter(merged));
  labeled_ = std::move(merged);
}

DatasetState reveal(DatasetState state, const LabelStore &oracle, std::span<const Id> ids) {
  state.reveal(ids, oracle);
  return state;
}

namespace {

/// Uniform sample of `k` ids without replacement, returned sorted.
std::vector<Id> sample_without_replacement(std::vector<Id> ids, std::size_t k, Rng &rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(rng, ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

DatasetState build_initial_split(const LabelStore &labels, std::size_t n_init, std::size_t per_minority,
                                 std::uint64_t seed, std::span<const int> cluster_ids,
                                 std::span<const int> allowed_clusters) {
  const auto &layout = labels.layout();
  if (!allowed_clusters.empty() && cluster_ids.size() != labels.size())
    throw ConfigError("initial split restricted by cluster but cluster ids do not cover the dataset");

  std::vector<std::vector<Id>> by_class(static_cast<std::size_t>(layout.num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto id = static_cast<Id>(i);
    const ClassId y = labels[id];
    if (y != layout.majority && !allowed_clusters.empty() &&
        std::find(allowed_clusters.begin(), allowed_clusters.end(), cluster_ids[i]) == allowed_clusters.end())
      continue;
    by_class[static_cast<std::size_t>(y)].push_back(id);
  }

  const std::size_t minority_total = per_minority * layout.minority.size();
  if (minority_total > n_init)
    throw ConfigError(fmt::format("n_init={} cannot hold {} per minority class", n_init, per_minority));
  for (auto c : layout.minority)
    if (by_class[static_cast<std::size_t>(c)].size() < per_minority)
      throw ConfigError(fmt::format("class {} has {} eligible instances, {} required", c,
                                    by_class[static_cast<std::size_t>(c)].size(), per_minority));
  const std::size_t n_major = n_init - minority_total;
  if (by_class[static_cast<std::size_t>(layout.majority)].size() < n_major)
    throw ConfigError(fmt::format("class {} has {} instances, {} required", layout.majority,
                                  by_class[static_cast<std::size_t>(layout.majority)].size(), n_major));

  Rng rng(seed);
  std::vector<Id> chosen;
  for (ClassId c = 0; c < layout.num_classes; ++c) {
    const std::size_t want = c == layout.majority ? n_major : per_minority;
    auto picked = sample_without_replacement(by_class[static_cast<std::size_t>(c)], want, rng);
    chosen.insert(chosen.end(), picked.begin(), picked.end());
  }
  DatasetState state(labels.size(), layout);
  state.reveal(chosen, labels);
  return state;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd random_direction(std::size_t d, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

std::vector<std::size_t> split_evenly(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

LabeledSplit sample_split(const RowMatrix<double> &centers, const std::vector<ClassId> &cluster_class,
                          const std::vector<std::size_t> &per_cluster, int num_classes, double sigma, Rng &rng) {
  const std::size_t total = std::accumulate(per_cluster.begin(), per_cluster.end(), std::size_t{0});
  std::vector<int> cluster(total);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < per_cluster.size(); ++k)
    for (std::size_t i = 0; i < per_cluster[k]; ++i) cluster[pos++] = static_cast<int>(k);
  // Shuffle so ids carry no cluster information.
  for (std::size_t i = total; i > 1; --i) std::swap(cluster[i - 1], cluster[uniform_index(rng, i)]);

  std::normal_distribution<double> noise(0.0, sigma);
  EmbeddingMatrix emb(static_cast<Eigen::Index>(total), centers.cols());
  std::vector<ClassId> labels(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto k = static_cast<Eigen::Index>(cluster[i]);
    for (Eigen::Index j = 0; j < centers.cols(); ++j)
      emb(static_cast<Eigen::Index>(i), j) = static_cast<float>(centers(k, j) + noise(rng));
    labels[i] = cluster_class[static_cast<std::size_t>(k)];
  }
  return {std::move(emb), LabelStore(std::move(labels), num_classes, 0), std::move(cluster)};
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec &spec) {
  if (spec.n_total < 2 || spec.d < 1) throw ConfigError("synthetic spec needs n_total >= 2 and d >= 1");
  if (!(spec.minority_fraction > 0.0 && spec.minority_fraction < 1.0))
    throw ConfigError("minority_fraction must lie in (0, 1)");
  if (spec.n_minority_clusters < 1 || spec.n_majority_clusters < 1 || spec.n_minority_classes < 1)
    throw ConfigError("cluster and class counts must be >= 1");
  if (spec.n_minority_clusters < spec.n_minority_classes)
    throw ConfigError("need at least one minority cluster per minority class");
  if (!(spec.cluster_sigma >= 0.0) || !(spec.cluster_center_scale > 0.0) || !(spec.minority_spread >= 0.0))
    throw ConfigError("sigma, centre scale and minority spread must be non-negative (scale positive)");
  const double expected_minority = static_cast<double>(spec.n_total) * spec.minority_fraction;
  if (expected_minority < static_cast<double>(spec.n_minority_clusters))
    throw ConfigError(fmt::format("infeasible spec: {} minority instances for {} minority clusters",
                                  expected_minority, spec.n_minority_clusters));
  const auto n_minority = static_cast<std::size_t>(std::llround(expected_minority));
  if (n_minority >= spec.n_total || spec.n_total - n_minority < spec.n_majority_clusters)
    throw ConfigError("infeasible spec: too few majority instances for the majority clusters");
  if (spec.n_test_minority > 0 && spec.n_test_minority < spec.n_minority_clusters)
    throw ConfigError("n_test_minority must cover every minority cluster");

  Rng rng(spec.seed);
  const std::size_t n_clusters = spec.n_minority_clusters + spec.n_majority_clusters;
  RowMatrix<double> centers(static_cast<Eigen::Index>(n_clusters), static_cast<Eigen::Index>(spec.d));
  const Eigen::VectorXd minority_axis = random_direction(spec.d, rng) * spec.cluster_center_scale;
  std::vector<ClassId> cluster_class(n_clusters, 0);
  for (std::size_t k = 0; k < n_clusters; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    if (k < spec.n_minority_clusters) {
      cluster_class[k] = static_cast<ClassId>(1 + k % spec.n_minority_classes);
      if (spec.minority_spread > 0.0) {
        centers.row(row) =
            (minority_axis + random_direction(spec.d, rng) * spec.minority_spread * spec.cluster_center_scale)
                .transpose();
        continue;
      }
    }
    centers.row(row) = (random_direction(spec.d, rng) * spec.cluster_center_scale).transpose();
  }

  const int num_classes = static_cast<int>(1 + spec.n_minority_classes);
  auto per_cluster = [&](std::size_t minority, std::size_t majority) {
    auto out = split_evenly(minority, spec.n_minority_clusters);
    auto maj = split_evenly(majority, spec.n_majority_clusters);
    out.insert(out.end(), maj.begin(), maj.end());
    return out;
  };

  Rng train_rng(derive_seed(spec.seed, {1}));
  Rng test_rng(derive_seed(spec.seed, {2}));
  auto train = sample_split(centers, cluster_class, per_cluster(n_minority, spec.n_total - n_minority), num_classes,
                            spec.cluster_sigma, train_rng);
  auto test = sample_split(centers, cluster_class, per_cluster(spec.n_test_minority, spec.n_test_majority),
                           num_classes, spec.cluster_sigma, test_rng);
  return {std::move(train), std::move(test), std::move(centers)};
}

}  // namespace anchoral
