#include "anchoral/report.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>
#include <set>
#include <sstream>

namespace anchoral {

using nlohmann::json;

std::string git_blob_sha1(std::span<const unsigned char> bytes) {
  const std::string header = fmt::format("blob {}", bytes.size());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || !EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) ||
      !EVP_DigestUpdate(ctx.get(), header.data(), header.size() + 1) ||  // include the NUL
      !EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) || !EVP_DigestFinal_ex(ctx.get(), digest, &len))
    throw std::runtime_error("SHA-1 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string git_blob_sha1_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::Io, fmt::format("cannot read {}", path.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1(bytes);
}

std::string dataset_hash(const DatasetConfig &d) {
  std::string listing;
  const std::pair<const char *, const std::string *> inputs[] = {
      {"train", &d.train}, {"train_labels", &d.train_labels}, {"test", &d.test}, {"test_labels", &d.test_labels}};
  for (const auto &[role, path] : inputs)
    if (!path->empty()) listing += fmt::format("{} {}\n", role, git_blob_sha1_file(*path));
  return git_blob_sha1({reinterpret_cast<const unsigned char *>(listing.data()), listing.size()});
}

namespace {

json round_to_json(const RoundRecord &r) {
  return {{"round", r.round},
          {"labeled_total", r.labeled_total},
          {"labeled_per_class", r.labeled_per_class},
          {"per_class_f1", r.per_class_f1},
          {"minority_f1", r.minority_f1},
          {"majority_f1", r.majority_f1},
          {"selection_time_s", r.selection_time_s},
          {"filter_time_s", r.filter_time_s},
          {"subpool_size", r.subpool_size},
          {"subpool_minority_frac", r.subpool_minority_frac},
          {"new_labels", r.new_labels},
          {"new_minority", r.new_minority},
          {"discovered_clusters", r.discovered_clusters},
          {"short_round", r.short_round}};
}

RoundRecord round_from_json(const json &j) {
  RoundRecord r;
  j.at("round").get_to(r.round);
  j.at("labeled_total").get_to(r.labeled_total);
  j.at("labeled_per_class").get_to(r.labeled_per_class);
  j.at("per_class_f1").get_to(r.per_class_f1);
  j.at("minority_f1").get_to(r.minority_f1);
  j.at("majority_f1").get_to(r.majority_f1);
  j.at("selection_time_s").get_to(r.selection_time_s);
  j.at("filter_time_s").get_to(r.filter_time_s);
  j.at("subpool_size").get_to(r.subpool_size);
  j.at("subpool_minority_frac").get_to(r.subpool_minority_frac);
  j.at("new_labels").get_to(r.new_labels);
  j.at("new_minority").get_to(r.new_minority);
  j.at("discovered_clusters").get_to(r.discovered_clusters);
  j.at("short_round").get_to(r.short_round);
  return r;
}

}  // namespace

json run_to_json(const RunRecord &run) {
  const auto &res = run.result;
  json rounds = json::array();
  for (const auto &r : res.rounds) rounds.push_back(round_to_json(r));
  return {{"format", "anchoral-result"},
          {"version", 1},
          {"method", run.method},
          {"strategy", run.strategy},
          {"run_index", run.run_index},
          {"dataset_hash", run.dataset_hash},
          {"config", config_to_json(run.config)},
          {"stop_reason", res.stop_reason},
          {"majority_class", res.majority_class},
          {"completed_rounds", res.completed_rounds()},
          {"completed_budget", res.completed_budget},
          {"auc_minority", res.auc_minority},
          {"auc_majority", res.auc_majority},
          {"total_selection_time", res.total_selection_time},
          {"labeled_minority", res.labeled_minority()},
          {"rounds", rounds}};
}

RunRecord run_from_json(const json &j) {
  try {
    if (j.at("format") != "anchoral-result" || j.at("version") != 1)
      throw ParseError(ParseErrorKind::BadHeader, "not an anchoral result file");
    RunRecord run;
    j.at("method").get_to(run.method);
    j.at("strategy").get_to(run.strategy);
    j.at("run_index").get_to(run.run_index);
    j.at("dataset_hash").get_to(run.dataset_hash);
    run.config = config_from_json(j.at("config"));
    auto &res = run.result;
    j.at("stop_reason").get_to(res.stop_reason);
    j.at("majority_class").get_to(res.majority_class);
    for (const auto &r : j.at("rounds")) res.rounds.push_back(round_from_json(r));
    j.at("completed_budget").get_to(res.completed_budget);
    j.at("auc_minority").get_to(res.auc_minority);
    j.at("auc_majority").get_to(res.auc_majority);
    j.at("total_selection_time").get_to(res.total_selection_time);
    return run;
  } catch (const json::exception &e) {
    throw ParseError(ParseErrorKind::BadRow, fmt::format("malformed result: {}", e.what()));
  }
}

void write_run(const RunRecord &run, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", path.string()));
  out << run_to_json(run).dump(2) << '\n';
}

RunRecord read_run(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorKind::Io, fmt::format("cannot read {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(ParseErrorKind::BadHeader, fmt::format("{}: {}", path.string(), e.what()));
  }
  return run_from_json(j);
}

namespace {

using GroupKey = std::pair<std::string, std::string>;

std::vector<ReportRow> rows_for(const std::map<GroupKey, std::vector<ExperimentResult>> &groups) {
  std::vector<ReportRow> rows;
  for (const auto &[key, results] : groups) rows.push_back({key.first, key.second, results.size(), aggregate_runs(results)});
  return rows;
}

const char *const kMetrics[] = {"budget", "auc_majority", "auc_minority", "selection_time", "labeled_minority"};

}  // namespace

Report build_report(std::span<const RunRecord> runs) {
  if (runs.empty()) throw ConfigError("report needs at least one result");
  const auto &hash = runs.front().dataset_hash;
  const auto n_init = runs.front().config.loop.n_init;
  for (const auto &r : runs) {
    if (r.dataset_hash != hash)
      throw ConfigError(fmt::format("dataset hash mismatch: {} vs {}", hash, r.dataset_hash));
    if (r.config.loop.n_init != n_init) throw ConfigError("runs use different n_init");
  }

  std::map<GroupKey, std::vector<ExperimentResult>> groups;
  for (const auto &r : runs) groups[{r.method, r.strategy}].push_back(r.result);

  std::map<std::string, std::vector<ExperimentResult>> flat;
  for (const auto &[key, results] : groups) flat[key.first + '\n' + key.second] = results;
  const auto matched_flat = budget_matched(flat, n_init);
  std::map<GroupKey, std::vector<ExperimentResult>> matched;
  for (const auto &[k, results] : matched_flat) {
    const auto cut = k.find('\n');
    matched[{k.substr(0, cut), k.substr(cut + 1)}] = results;
  }

  Report report;
  report.overall = rows_for(groups);
  report.budget_matched = rows_for(matched);
  report.matched_rounds = matched_flat.begin()->second.front().completed_rounds();
  return report;
}

void write_report_text(std::ostream &out, const Report &report) {
  auto cell = [](const Summary &s, int precision) { return fmt::format("{:.{}f} ± {:.{}f}", s.median, precision, s.iqr(), precision); };
  auto section = [&](const char *title, const std::vector<ReportRow> &rows) {
    out << title << '\n';
    out << fmt::format("{:<28} {:<8} {:>4}  {:>18}  {:>20}  {:>20}  {:>16}  {:>16}\n", "method", "strategy", "runs",
                       "Budget", "Majority AUC", "Minority AUC", "Time (s)", "Minority labels");
    for (const auto &r : rows) {
      out << fmt::format("{:<28} {:<8} {:>4}  {:>18}  {:>20}  {:>20}  {:>16}  {:>16}\n", r.method, r.strategy, r.runs,
                         cell(r.stats.at("budget"), 0), cell(r.stats.at("auc_majority"), 2),
                         cell(r.stats.at("auc_minority"), 2), cell(r.stats.at("selection_time"), 2),
                         cell(r.stats.at("labeled_minority"), 0));
    }
  };
  section("Overall (median ± IQR)", report.overall);
  out << '\n';
  section(fmt::format("Budget-Matched at round {} (median ± IQR)", report.matched_rounds).c_str(),
          report.budget_matched);
}

void write_report_csv(std::ostream &out, const Report &report) {
  out << "section,method,strategy,runs";
  for (const char *m : kMetrics) out << ',' << m << "_median," << m << "_iqr";
  out << '\n';
  auto emit = [&](const char *section, const std::vector<ReportRow> &rows) {
    for (const auto &r : rows) {
      out << fmt::format("{},{},{},{}", section, r.method, r.strategy, r.runs);
      for (const char *m : kMetrics) out << fmt::format(",{},{}", r.stats.at(m).median, r.stats.at(m).iqr());
      out << '\n';
    }
  };
  emit("overall", report.overall);
  emit("budget_matched", report.budget_matched);
}

void write_curves_csv(std::ostream &out, std::span<const RunRecord> runs) {
  out << "method,strategy,run,round,labeled_total,labeled_minority_prop,subpool_minority_frac\n";
  for (const auto &run : runs) {
    for (const auto &r : run.result.rounds) {
      std::size_t minority = 0;
      for (std::size_t c = 0; c < r.labeled_per_class.size(); ++c)
        if (static_cast<ClassId>(c) != run.result.majority_class) minority += r.labeled_per_class[c];
      const double prop = r.labeled_total ? static_cast<double>(minority) / static_cast<double>(r.labeled_total) : 0.0;
      out << fmt::format("{},{},{},{},{},{},{}\n", run.method, run.strategy, run.run_index, r.round, r.labeled_total,
                         prop, r.subpool_minority_frac);
    }
  }
}

Report write_report_files(std::span<const RunRecord> runs, const std::filesystem::path &dir) {
  const Report report = build_report(runs);
  std::filesystem::create_directories(dir);
  auto open = [&](const char *name) {
    std::ofstream f(dir / name);
    if (!f) throw ParseError(ParseErrorKind::Io, fmt::format("cannot write {}", (dir / name).string()));
    return f;
  };
  {
    auto f = open("summary.txt");
    write_report_text(f, report);
  }
  {
    auto f = open("summary.csv");
    write_report_csv(f, report);
  }
  {
    auto f = open("curves.csv");
    write_curves_csv(f, runs);
  }
  return report;
}

}  // namespace anchoral
