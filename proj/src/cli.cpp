#include "anchoral/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

namespace anchoral {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorKind::Io, fmt::format("cannot read {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(ParseErrorKind::BadHeader, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const json &j, const fs::path &path) {
  std::ofstream out(path);
  if (!out) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

bool non_empty_dir(const fs::path &p) { return fs::is_directory(p) && !fs::is_empty(p); }

void prepare_output(const fs::path &dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw ConfigError(fmt::format("output {} exists and is not a directory", dir.string()));
  if (non_empty_dir(dir) && !force)
    throw ConfigError(fmt::format("output directory {} is not empty; pass --force to overwrite", dir.string()));
  fs::create_directories(dir);
}

void setup_logging() {
  auto logger = spdlog::get("anchoral");
  if (!logger) logger = spdlog::stderr_color_mt("anchoral");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char *env = std::getenv("ANCHORAL_LOG"); env && *env) {
    level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      throw ConfigError(fmt::format("ANCHORAL_LOG: unknown level `{}` (trace, debug, info, warn, error, off)", env));
  }
  spdlog::set_level(level);
}

json spec_to_json(const SyntheticSpec &s) {
  return {{"n_total", s.n_total},
          {"d", s.d},
          {"minority_fraction", s.minority_fraction},
          {"n_minority_classes", s.n_minority_classes},
          {"n_minority_clusters", s.n_minority_clusters},
          {"n_majority_clusters", s.n_majority_clusters},
          {"cluster_sigma", s.cluster_sigma},
          {"cluster_center_scale", s.cluster_center_scale},
          {"minority_spread", s.minority_spread},
          {"n_test_majority", s.n_test_majority},
          {"n_test_minority", s.n_test_minority},
          {"seed", s.seed}};
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  fs::path out;
  SyntheticSpec spec;
  bool force = false;
};

void cmd_synth(const SynthOptions &o) {
  prepare_output(o.out, o.force);
  const auto ds = generate_synthetic(o.spec);
  write_embeddings(ds.train.embeddings, o.out / "train.aemb");
  write_labels(ds.train.labels, o.out / "train_labels.csv");
  write_embeddings(ds.test.embeddings, o.out / "test.aemb");
  write_labels(ds.test.labels, o.out / "test_labels.csv");
  write_json({{"spec", spec_to_json(o.spec)},
              {"cluster_ids", ds.train.cluster_ids},
              {"test_cluster_ids", ds.test.cluster_ids}},
             o.out / "synth_meta.json");

  ExperimentConfig cfg;
  cfg.dataset = {"train.aemb", "train_labels.csv", "test.aemb", "test_labels.csv", "synth_meta.json", "train.aidx", {}};
  write_json(config_to_json(cfg), o.out / "config.json");
  spdlog::info("wrote {} training and {} test instances to {}", ds.train.embeddings.rows(),
               ds.test.embeddings.rows(), o.out.string());
}

struct IndexOptions {
  fs::path config;
  fs::path embeddings;
  fs::path out;
  std::optional<std::size_t> m, ef_construction, ef_search;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void cmd_index(const IndexOptions &o) {
  IndexParams params;
  fs::path emb_path = o.embeddings, out = o.out;
  if (!o.config.empty()) {
    const auto cfg = parse_config(o.config);
    params = cfg.index;
    if (emb_path.empty()) emb_path = cfg.dataset.train;
    if (out.empty()) out = cfg.dataset.index;
  }
  if (o.m) params.max_connections = *o.m;
  if (o.ef_construction) params.ef_construction = *o.ef_construction;
  if (o.ef_search) params.ef_search = *o.ef_search;
  if (o.seed) params.seed = *o.seed;
  params.validate();
  if (emb_path.empty()) throw ConfigError("index: no embeddings given (--embeddings or --config)");
  if (out.empty()) throw ConfigError("index: no output path given (--out or dataset.index)");
  if (fs::exists(out) && !o.force)
    throw ConfigError(fmt::format("{} exists; pass --force to overwrite", out.string()));
  const auto emb = load_embeddings(emb_path);
  spdlog::info("building index over {} x {}", emb.rows(), emb.cols());
  const auto index = VectorIndex::build(emb, params);
  index.save(out);
  spdlog::info("wrote {}", out.string());
}

struct RunOptions {
  fs::path config;
  fs::path out;
  std::size_t seeds = 1;
  std::size_t jobs = 1;
  bool force = false;
  bool build_index = false;
  std::optional<double> time_limit;
  std::vector<std::string> filters;
  std::optional<std::string> strategy;
};

struct Job {
  ExperimentConfig cfg;
  std::uint64_t run_index;
  fs::path dir;
};

std::string sanitize(std::string s) {
  for (auto &c : s)
    if (c == '/') c = '-';
  return s;
}

void execute_job(const Job &job, const Dataset &data, const NeighborRetriever &retriever, const std::string &hash) {
  fs::create_directories(job.dir);
  write_json(config_to_json(job.cfg), job.dir / "effective-config.json");
  spdlog::info("run {} seed offset {} -> {}", method_label(job.cfg), job.run_index, job.dir.string());
  RunRecord run{method_label(job.cfg), to_string(job.cfg.strategy), job.run_index, hash, job.cfg,
                run_experiment(job.cfg, data, retriever)};
  {
    std::ofstream csv(job.dir / "rounds.csv");
    if (!csv) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", (job.dir / "rounds.csv").string()));
    write_rounds_csv(csv, run.result.rounds);
  }
  write_run(run, job.dir / "result.json");
  spdlog::info("{} run {}: budget {} minority AUC {:.2f} ({})", run.method, job.run_index,
               run.result.completed_budget, run.result.auc_minority, run.result.stop_reason);
}

/// Runs jobs in up to `jobs` forked worker processes.
void execute_parallel(const std::vector<Job> &jobs, std::size_t max_jobs, const Dataset &data,
                      const NeighborRetriever &retriever, const std::string &hash) {
  std::set<pid_t> running;
  std::string failure;
  auto reap = [&] {
    int status = 0;
    const pid_t pid = ::wait(&status);
    if (pid <= 0) return;
    running.erase(pid);
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0) && failure.empty())
      failure = "a worker process failed";
  };
  for (const auto &job : jobs) {
    while (running.size() >= max_jobs) reap();
    std::cout.flush();
    std::cerr.flush();
    const pid_t pid = ::fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      int code = 0;
      try {
        execute_job(job, data, retriever, hash);
      } catch (const std::exception &e) {
        std::cerr << "error: job " << job.dir.string() << ": " << e.what() << '\n';
        code = 2;
      }
      spdlog::shutdown();
      std::_Exit(code);
    }
    running.insert(pid);
  }
  while (!running.empty()) reap();
  if (!failure.empty()) throw std::runtime_error(failure);
}

void cmd_run(const RunOptions &o) {
  if (o.config.empty()) throw ConfigError("run: --config is required");
  if (o.out.empty()) throw ConfigError("run: --out is required");
  if (o.seeds < 1) throw ConfigError("--seeds must be >= 1");
  if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
  ExperimentConfig base = parse_config(o.config);
  if (o.time_limit) base.loop.time_limit = *o.time_limit;
  if (o.strategy) base.strategy = strategy_from_string(*o.strategy);
  std::vector<FilterKind> filters;
  for (const auto &f : o.filters) filters.push_back(filter_from_string(f));
  if (filters.empty()) filters.push_back(base.filter.type);
  base.validate();

  prepare_output(o.out, o.force);
  const Dataset data = load_dataset(base.dataset);
  const std::string hash = dataset_hash(base.dataset);

  bool needs_index = false;
  for (auto f : filters) needs_index = needs_index || f == FilterKind::AnchorAL || f == FilterKind::Seals;
  std::unique_ptr<NeighborRetriever> retriever;
  if (needs_index) {
    const auto &path = base.dataset.index;
    if (!path.empty() && fs::exists(path) && !o.build_index) {
      auto index = VectorIndex::load(path, data.train);
      if (!(index.params() == base.index))
        spdlog::warn("index {} was built with different parameters than the config", path);
      retriever = std::make_unique<VectorIndex>(std::move(index));
    } else if (o.build_index) {
      spdlog::info("building index over {} instances", data.train.rows());
      auto index = VectorIndex::build(data.train, base.index);
      if (!path.empty()) index.save(path);
      retriever = std::make_unique<VectorIndex>(std::move(index));
    } else {
      throw ConfigError(path.empty() ? "dataset.index: not set; pass --build-index"
                                     : fmt::format("dataset.index: {} does not exist; pass --build-index", path));
    }
  } else {
    retriever = std::make_unique<ExactRetriever>(data.train);
  }

  std::vector<Job> jobs;
  for (auto f : filters) {
    for (std::size_t i = 0; i < o.seeds; ++i) {
      ExperimentConfig cfg = base;
      cfg.filter.type = f;
      cfg.seeds = base.seeds.offset(i);
      const auto dir = o.out / fmt::format("{}_{}", sanitize(method_label(cfg)), to_string(cfg.strategy)) /
                       fmt::format("run-{}", i);
      jobs.push_back({cfg, i, dir});
    }
  }
  if (o.jobs == 1 || jobs.size() == 1) {
    for (const auto &job : jobs) execute_job(job, data, *retriever, hash);
  } else {
    execute_parallel(jobs, o.jobs, data, *retriever, hash);
  }

  std::vector<RunRecord> runs;
  for (const auto &job : jobs) runs.push_back(read_run(job.dir / "result.json"));
  write_report_files(runs, o.out / "report");
  std::ifstream summary(o.out / "report" / "summary.txt");
  std::cout << summary.rdbuf();
}

struct ReportOptions {
  std::vector<fs::path> inputs;
  fs::path out;
};

void cmd_report(const ReportOptions &o) {
  std::vector<fs::path> files;
  for (const auto &p : o.inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto &e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "result.json") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("report: no result files found");
  std::vector<RunRecord> runs;
  for (const auto &f : files) runs.push_back(read_run(f));
  const Report report = o.out.empty() ? build_report(runs) : write_report_files(runs, o.out);
  write_report_text(std::cout, report);
}

const char *error_kind(const std::exception &e) {
  if (dynamic_cast<const ConfigError *>(&e)) return "config";
  if (dynamic_cast<const ParseError *>(&e)) return "parse";
  if (dynamic_cast<const ContractError *>(&e)) return "contract";
  if (dynamic_cast<const DomainError *>(&e)) return "domain";
  return "runtime";
}

}  // namespace

Dataset load_dataset(const DatasetConfig &d) {
  for (const auto &[key, value] : {std::pair{"dataset.train", &d.train}, {"dataset.train_labels", &d.train_labels},
                                   {"dataset.test", &d.test}, {"dataset.test_labels", &d.test_labels}})
    if (value->empty()) throw ConfigError(fmt::format("{}: required path is missing", key));
  auto train = load_embeddings(d.train);
  auto train_labels = load_labels(d.train_labels, static_cast<std::size_t>(train.rows()));
  auto test = load_embeddings(d.test);
  auto test_labels = load_labels(d.test_labels, static_cast<std::size_t>(test.rows()), train_labels.num_classes(),
                                 train_labels.majority_class());
  std::vector<int> clusters;
  if (!d.meta.empty()) {
    const auto meta = read_json(d.meta);
    try {
      meta.at("cluster_ids").get_to(clusters);
    } catch (const json::exception &e) {
      throw ParseError(ParseErrorKind::BadHeader, fmt::format("{}: cluster_ids: {}", d.meta, e.what()));
    }
  }
  Dataset data{std::move(train), std::move(train_labels), std::move(test), std::move(test_labels), std::move(clusters)};
  data.validate();
  return data;
}

int run_cli(int argc, char **argv) {
  CLI::App app{"Anchored pool-filtering active-learning simulator"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto *synth_cmd = app.add_subcommand("synth", "Generate a clustered imbalanced dataset");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n", synth.spec.n_total, "Training instances");
  synth_cmd->add_option("--d", synth.spec.d, "Embedding dimension");
  synth_cmd->add_option("--minority-fraction", synth.spec.minority_fraction);
  synth_cmd->add_option("--minority-classes", synth.spec.n_minority_classes);
  synth_cmd->add_option("--minority-clusters", synth.spec.n_minority_clusters);
  synth_cmd->add_option("--majority-clusters", synth.spec.n_majority_clusters);
  synth_cmd->add_option("--sigma", synth.spec.cluster_sigma, "Per-coordinate cluster noise");
  synth_cmd->add_option("--center-scale", synth.spec.cluster_center_scale);
  synth_cmd->add_option("--minority-spread", synth.spec.minority_spread);
  synth_cmd->add_option("--test-majority", synth.spec.n_test_majority);
  synth_cmd->add_option("--test-minority", synth.spec.n_test_minority);
  synth_cmd->add_option("--seed", synth.spec.seed);
  synth_cmd->add_flag("--force", synth.force, "Overwrite a non-empty output directory");

  IndexOptions index;
  auto *index_cmd = app.add_subcommand("index", "Build an HNSW index file");
  index_cmd->add_option("--config", index.config, "Experiment config supplying paths and index parameters");
  index_cmd->add_option("--embeddings", index.embeddings, "AEMB file");
  index_cmd->add_option("--out", index.out, "AIDX output path");
  index_cmd->add_option("--M", index.m, "Max connections per node");
  index_cmd->add_option("--ef-construction", index.ef_construction);
  index_cmd->add_option("--ef-search", index.ef_search);
  index_cmd->add_option("--index-seed", index.seed);
  index_cmd->add_flag("--force", index.force);

  RunOptions run;
  auto *run_cmd = app.add_subcommand("run", "Run experiments and write per-round metrics");
  run_cmd->add_option("--config", run.config, "Experiment config JSON")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--seeds", run.seeds, "Runs per filter; run i adds i to every seed");
  run_cmd->add_option("--jobs", run.jobs, "Parallel worker processes");
  run_cmd->add_option("--filter", run.filters, "Filter to run (repeatable): anchoral, seals, random_subset, noop");
  run_cmd->add_option("--strategy", run.strategy, "entropy, kmeans, badge or random");
  run_cmd->add_option("--time-limit", run.time_limit, "Wall-clock cap per run in seconds");
  run_cmd->add_flag("--build-index", run.build_index, "Build the index (and save it to dataset.index)");
  run_cmd->add_flag("--force", run.force, "Overwrite a non-empty output directory");

  ReportOptions report;
  auto *report_cmd = app.add_subcommand("report", "Summarise result.json files");
  report_cmd->add_option("inputs", report.inputs, "result.json files or directories")->required();
  report_cmd->add_option("--out", report.out, "Directory for summary.txt, summary.csv and curves.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    setup_logging();
    if (*synth_cmd) cmd_synth(synth);
    else if (*index_cmd) cmd_index(index);
    else if (*run_cmd) cmd_run(run);
    else if (*report_cmd) cmd_report(report);
  } catch (const std::exception &e) {
    std::string msg = e.what();
    for (auto &c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << error_kind(e) << ": " << msg << '\n';
    spdlog::shutdown();
    return 2;
  }
  spdlog::shutdown();
  return 0;
}

}  // namespace anchoral
