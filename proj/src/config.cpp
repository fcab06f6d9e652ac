#include "anchoral/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace anchoral {

using nlohmann::json;

namespace {

class Reader {
public:
  Reader(const json &j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{}: expected object", where_.empty() ? "<root>" : where_));
  }

  void allow(std::initializer_list<const char *> keys) const {
    for (const auto &[key, _] : j_.items()) {
      bool known = false;
      for (const char *k : keys) known = known || key == k;
      if (!known) throw ConfigError(fmt::format("{}: unknown key", path(key)));
    }
  }

  void get(const char *key, std::size_t &out) const {
    if (const auto *v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(fmt::format("{}: expected non-negative integer", path(key)));
      out = v->get<std::size_t>();
    }
  }

  void get(const char *key, std::uint64_t &out, int) const {
    if (const auto *v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(fmt::format("{}: expected non-negative integer", path(key)));
      out = v->get<std::uint64_t>();
    }
  }

  void get(const char *key, double &out) const {
    if (const auto *v = find(key)) {
      if (!v->is_number()) throw ConfigError(fmt::format("{}: expected number", path(key)));
      out = v->get<double>();
    }
  }

  void get(const char *key, bool &out) const {
    if (const auto *v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(fmt::format("{}: expected boolean", path(key)));
      out = v->get<bool>();
    }
  }

  void get(const char *key, std::string &out) const {
    if (const auto *v = find(key)) {
      if (!v->is_string()) throw ConfigError(fmt::format("{}: expected string", path(key)));
      out = v->get<std::string>();
    }
  }

  void get(const char *key, std::optional<double> &out) const {
    if (const auto *v = find(key)) {
      if (v->is_null()) out.reset();
      else if (v->is_number()) out = v->get<double>();
      else throw ConfigError(fmt::format("{}: expected number or null", path(key)));
    }
  }

  void get(const char *key, std::vector<int> &out) const {
    if (const auto *v = find(key)) {
      if (!v->is_array()) throw ConfigError(fmt::format("{}: expected array of integers", path(key)));
      out.clear();
      for (const auto &e : *v) {
        if (!e.is_number_integer()) throw ConfigError(fmt::format("{}: expected array of integers", path(key)));
        out.push_back(e.get<int>());
      }
    }
  }

  template <class Enum, class Parse>
  void get_enum(const char *key, Enum &out, Parse parse) const {
    std::string s;
    if (!find(key)) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const ConfigError &e) {
      throw ConfigError(fmt::format("{}: {}", path(key), e.what()));
    }
  }

  Reader child(const char *key) const {
    static const json empty = json::object();
    const auto *v = find(key);
    return Reader(v ? *v : empty, path(key));
  }

private:
  const json *find(const char *key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string &key) const { return where_.empty() ? key : where_ + "." + key; }

  const json &j_;
  std::string where_;
};

std::string resolve(const std::string &p, const std::filesystem::path &base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig config_from_json(const json &j, const std::filesystem::path &base_dir) {
  ExperimentConfig cfg;
  Reader root(j, "");
  root.allow({"dataset", "index", "filter", "strategy", "train", "loop", "seeds"});

  {
    auto r = root.child("dataset");
    r.allow({"train", "train_labels", "test", "test_labels", "meta", "index", "initial_minority_clusters"});
    auto &d = cfg.dataset;
    r.get("train", d.train);
    r.get("train_labels", d.train_labels);
    r.get("test", d.test);
    r.get("test_labels", d.test_labels);
    r.get("meta", d.meta);
    r.get("index", d.index);
    r.get("initial_minority_clusters", d.initial_minority_clusters);
    for (auto *p : {&d.train, &d.train_labels, &d.test, &d.test_labels, &d.meta, &d.index}) *p = resolve(*p, base_dir);
  }
  {
    auto r = root.child("index");
    r.allow({"ef_construction", "ef_search", "M", "seed"});
    r.get("ef_construction", cfg.index.ef_construction);
    r.get("ef_search", cfg.index.ef_search);
    r.get("M", cfg.index.max_connections);
    r.get("seed", cfg.index.seed, 0);
  }
  {
    auto r = root.child("filter");
    r.allow({"type", "a", "K", "max_subpool", "subset_size", "k", "majority_anchor", "minority_anchor", "anchoring"});
    auto &f = cfg.filter;
    r.get_enum("type", f.type, filter_from_string);
    r.get("a", f.anchors_per_class);
    r.get("K", f.neighbors_per_anchor);
    r.get("max_subpool", f.max_subpool);
    r.get("subset_size", f.subset_size);
    r.get("k", f.seals_neighbors);
    r.get_enum("majority_anchor", f.majority_anchor, anchor_strategy_from_string);
    r.get_enum("minority_anchor", f.minority_anchor, anchor_strategy_from_string);
    r.get("anchoring", f.anchoring);
  }
  root.get_enum("strategy", cfg.strategy, strategy_from_string);
  {
    auto r = root.child("train");
    r.allow({"learning_rate", "batch_size", "max_epochs", "min_steps", "early_stop_delta"});
    r.get("learning_rate", cfg.train.learning_rate);
    r.get("batch_size", cfg.train.batch_size);
    r.get("max_epochs", cfg.train.max_epochs);
    r.get("min_steps", cfg.train.min_steps);
    r.get("early_stop_delta", cfg.train.early_stop_delta);
  }
  {
    auto r = root.child("loop");
    r.allow({"budget", "rounds", "n_init", "per_minority", "time_limit", "record_timing"});
    r.get("budget", cfg.loop.budget);
    r.get("rounds", cfg.loop.rounds);
    r.get("n_init", cfg.loop.n_init);
    r.get("per_minority", cfg.loop.per_minority);
    r.get("time_limit", cfg.loop.time_limit);
    r.get("record_timing", cfg.loop.record_timing);
  }
  {
    auto r = root.child("seeds");
    r.allow({"model_init", "data_order", "initial_set", "selection"});
    r.get("model_init", cfg.seeds.model_init, 0);
    r.get("data_order", cfg.seeds.data_order, 0);
    r.get("initial_set", cfg.seeds.initial_set, 0);
    r.get("selection", cfg.seeds.selection, 0);
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig &cfg) {
  const auto &d = cfg.dataset;
  const auto &f = cfg.filter;
  json j;
  j["dataset"] = {{"train", d.train},         {"train_labels", d.train_labels},
                  {"test", d.test},           {"test_labels", d.test_labels},
                  {"meta", d.meta},           {"index", d.index},
                  {"initial_minority_clusters", d.initial_minority_clusters}};
  j["index"] = {{"ef_construction", cfg.index.ef_construction},
                {"ef_search", cfg.index.ef_search},
                {"M", cfg.index.max_connections},
                {"seed", cfg.index.seed}};
  j["filter"] = {{"type", to_string(f.type)},
                 {"a", f.anchors_per_class},
                 {"K", f.neighbors_per_anchor},
                 {"max_subpool", f.max_subpool},
                 {"subset_size", f.subset_size},
                 {"k", f.seals_neighbors},
                 {"majority_anchor", to_string(f.majority_anchor)},
                 {"minority_anchor", to_string(f.minority_anchor)},
                 {"anchoring", f.anchoring}};
  j["strategy"] = to_string(cfg.strategy);
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"min_steps", cfg.train.min_steps},
                {"early_stop_delta", cfg.train.early_stop_delta}};
  j["loop"] = {{"budget", cfg.loop.budget},
               {"rounds", cfg.loop.rounds},
               {"n_init", cfg.loop.n_init},
               {"per_minority", cfg.loop.per_minority},
               {"time_limit", cfg.loop.time_limit ? json(*cfg.loop.time_limit) : json(nullptr)},
               {"record_timing", cfg.loop.record_timing}};
  j["seeds"] = {{"model_init", cfg.seeds.model_init},
                {"data_order", cfg.seeds.data_order},
                {"initial_set", cfg.seeds.initial_set},
                {"selection", cfg.seeds.selection}};
  return j;
}

ExperimentConfig parse_config_string(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(fmt::format("invalid JSON: {}", e.what()));
  }
  return config_from_json(j);
}

ExperimentConfig parse_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error &e) {
    throw ConfigError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(j, path.parent_path());
}

std::string method_label(const ExperimentConfig &cfg) {
  std::string label = to_string(cfg.filter.type);
  if (cfg.filter.type != FilterKind::AnchorAL) return label;
  if (!cfg.filter.anchoring) return label + "/no-anchoring";
  if (cfg.filter.majority_anchor != AnchorStrategy::KMeansPP || cfg.filter.minority_anchor != AnchorStrategy::KMeansPP)
    label += fmt::format("/{}-{}", to_string(cfg.filter.majority_anchor), to_string(cfg.filter.minority_anchor));
  return label;
}

}  // namespace anchoral
