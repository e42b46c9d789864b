// Command-line driver: cluster, score, evaluate, sweep-lambda,
// worked-example and validate.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "semuq/clustering.hpp"
#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/log.hpp"
#include "semuq/metrics.hpp"
#include "semuq/pipeline.hpp"
#include "semuq/worked_example.hpp"

namespace {

enum ExitCode
{
  kOk = 0,
  kIoError = 1,
  kGoldenMismatch = 2,
  kUndefinedMetric = 3
};

/// Raised for unreadable inputs and unwritable outputs.
struct IoError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct RunOptions
{
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string entailment_path;
  std::string diagnostics_dir;
  bool verbose = false;
};

/// Registers the RunConfig flags; every given flag becomes a config override.
void add_run_flags(CLI::App& cmd, RunOptions& opts)
{
  cmd.add_option("--config", opts.config_path, "flat key = value config file")->check(CLI::ExistingFile);
  const std::pair<const char*, const char*> flags[] = {
    { "lambda", "calibration weight" },
    { "sigma", "kernel bandwidth" },
    { "spins", "spin count L (grid of 2^L points)" },
    { "m-adj", "modes averaged around the KME mode" },
    { "epsilon", "perturbation magnitude" },
    { "base", "log base: 10 or e" },
    { "backend", "entailment backend: exact, precomputed, service, cluster-ids" },
    { "endpoint", "entailment service URL" },
    { "seed", "seed of the random perturbation direction" },
    { "direction", "perturbation direction: uniform, along-weights, random" },
    { "locality", "operator basis coupling radius" },
    { "workers", "worker threads (0 = hardware concurrency)" },
  };
  for (const auto& [name, help] : flags) {
    const std::string key = name;
    cmd.add_option_function<std::string>(
      std::string("--") + name, [&opts, key](const std::string& v) { opts.overrides[key] = v; }, help);
  }
  cmd.add_option("--entailment", opts.entailment_path, "JSONL of {question_id, verdicts} for the precomputed backend")
    ->check(CLI::ExistingFile);
  cmd.add_option("--diagnostics", opts.diagnostics_dir, "directory for per-bundle QTN CSV dumps (with --verbose)");
  cmd.add_flag("--verbose,-v", opts.verbose, "log progress and write diagnostics");
}

semuq::RunConfig build_config(const RunOptions& opts)
{
  semuq::RunConfig config;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in)
      throw IoError("cannot read config file " + opts.config_path);
    semuq::apply_config_file(config, in);
  }
  for (const auto& [key, value] : opts.overrides)
    semuq::apply_setting(config, key, value);
  if (!opts.entailment_path.empty() && !opts.overrides.count("backend"))
    config.backend.kind = semuq::BackendKind::precomputed;
  config.validate();
  return config;
}

std::map<std::string, semuq::VerdictMatrix> load_verdicts(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot read entailment file " + path);
  std::map<std::string, semuq::VerdictMatrix> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      const auto j = nlohmann::json::parse(line);
      semuq::VerdictMatrix m;
      for (const auto& row : j.at("verdicts")) {
        m.emplace_back();
        for (const auto& v : row)
          m.back().push_back(semuq::parse_verdict(v.get<std::string>()));
      }
      out[j.at("question_id").get<std::string>()] = std::move(m);
    } catch (const std::exception& e) {
      throw IoError(path + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::unique_ptr<semuq::Pipeline> make_pipeline(const RunOptions& opts)
{
  auto pipeline = std::make_unique<semuq::Pipeline>(build_config(opts));
  if (!opts.entailment_path.empty())
    pipeline->set_precomputed_verdicts(load_verdicts(opts.entailment_path));
  if (opts.verbose && !opts.diagnostics_dir.empty())
    pipeline->set_diagnostics_dir(opts.diagnostics_dir);
  return pipeline;
}

std::vector<semuq::QuestionBundle> read_input(const std::string& path)
{
  std::vector<semuq::QuestionBundle> bundles;
  try {
    bundles = semuq::load_bundles(path);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  if (bundles.empty())
    throw IoError("input " + path + " contains no bundles");
  return bundles;
}

/// Writes to the file at `path`, or standard output when `path` is empty.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn)
{
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path);
  fn(out);
  if (!out)
    throw IoError("error while writing " + path);
}

std::vector<std::string> split_list(const std::string& text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty())
      out.push_back(item);
  return out;
}

int cmd_cluster(const RunOptions& opts, const std::string& input, const std::string& output)
{
  const auto pipeline = make_pipeline(opts);
  auto bundles = read_input(input);
  std::size_t failed = 0;
  std::vector<semuq::QuestionBundle> done;
  for (auto& b : bundles) {
    try {
      const auto clustering = pipeline->cluster(b);
      const auto labels = clustering.labels();
      for (std::size_t i = 0; i < b.size(); ++i)
        b.generations[i].cluster_id = labels[i] + 1;
      done.push_back(std::move(b));
    } catch (const std::exception& e) {
      ++failed;
      semuq::log_warning("skipping bundle '" + b.question_id + "': " + e.what());
    }
  }
  with_output(output, [&](std::ostream& out) { semuq::write_bundles(out, done); });
  std::cerr << "clustered " << done.size() << " bundles, " << failed << " failed\n";
  return done.empty() ? kIoError : kOk;
}

int cmd_score(const RunOptions& opts, const std::string& input, const std::string& output)
{
  const auto pipeline = make_pipeline(opts);
  const auto bundles = read_input(input);
  std::size_t failed = 0;
  const auto cards = pipeline->score_all(bundles, &failed);
  with_output(output, [&](std::ostream& out) {
    for (const auto& c : cards)
      out << nlohmann::json(c).dump() << '\n';
  });
  std::cerr << "scored " << cards.size() << " of " << bundles.size() << " bundles, " << failed << " failed\n";
  return cards.empty() ? kIoError : kOk;
}

std::vector<semuq::BundleScorecard> read_scorecards(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot read scorecards " + path);
  std::vector<semuq::BundleScorecard> cards;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      cards.push_back(nlohmann::json::parse(line).get<semuq::BundleScorecard>());
    } catch (const std::exception& e) {
      throw IoError(path + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  if (cards.empty())
    throw IoError("scorecard file " + path + " is empty");
  return cards;
}

void print_reports(const semuq::EvaluationSummary& summary)
{
  std::cerr << std::fixed << std::setprecision(5);
  for (const auto& r : summary.reports)
    std::cerr << std::left << std::setw(6) << r.method_name << std::right << "  AUROC " << r.auroc << "  AURAC "
              << r.aurac << "  n=" << r.n_questions << " (skipped " << r.n_skipped_unlabeled << ")\n";
  std::cerr << std::defaultfloat;
}

int cmd_evaluate(const std::string& input,
                 const std::string& output,
                 const std::string& methods_text,
                 const std::string& rac_csv)
{
  const auto cards = read_scorecards(input);
  const auto methods = split_list(methods_text);
  const auto summary = semuq::evaluate_scorecards(cards, methods);
  with_output(output, [&](std::ostream& out) { out << nlohmann::json(summary).dump(2) << '\n'; });
  if (!rac_csv.empty())
    with_output(rac_csv, [&](std::ostream& out) { semuq::write_rac_csv(out, summary.reports); });
  print_reports(summary);
  return kOk;
}

int cmd_sweep(const RunOptions& opts,
              const std::string& input,
              const std::string& output,
              const std::string& lambdas_text,
              const std::string& csv)
{
  std::vector<double> lambdas;
  for (const auto& item : split_list(lambdas_text)) {
    try {
      lambdas.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw semuq::ParameterError("lambda '" + item + "' is not a number");
    }
  }
  const auto pipeline = make_pipeline(opts);
  const auto bundles = read_input(input);
  const auto sweep = pipeline->sweep_lambda(bundles, lambdas);
  with_output(output, [&](std::ostream& out) { out << nlohmann::json(sweep).dump(2) << '\n'; });
  if (!csv.empty())
    with_output(csv, [&](std::ostream& out) { semuq::write_sweep_csv(out, sweep); });
  std::cerr << std::fixed << std::setprecision(5) << "best lambda " << sweep.best_lambda << " AUROC "
            << sweep.best_auroc << ", baseline SE_R AUROC " << sweep.baseline_auroc << '\n';
  return kOk;
}

int cmd_worked_example(const std::string& base_text, bool perturb)
{
  auto fixture = semuq::worked_example_fixture();
  if (perturb)
    fixture.rows.front().raw_prob *= 1.5;
  const auto result = semuq::compute_worked_example(fixture, semuq::parse_log_base(base_text));
  const auto checks = semuq::check_worked_example(result);
  semuq::print_worked_example(std::cout, result, checks);
  for (const auto& c : checks)
    if (!c.ok)
      return kGoldenMismatch;
  return kOk;
}

int cmd_validate(const std::string& input)
{
  const auto bundles = read_input(input);
  std::size_t generations = 0;
  for (const auto& b : bundles)
    generations += b.size();
  std::cout << "ok: " << bundles.size() << " bundles, " << generations << " generations\n";
  return kOk;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Semantic uncertainty scoring with QTN-based calibration" };
  app.require_subcommand(1);
  app.set_version_flag("--version", "semuq 0.1.0");

  RunOptions run;
  std::string input;
  std::string output;
  std::string methods = "NE,SE_S,DSE_S,SE_R,SE_R+";
  std::string lambdas = "0.01,0.1,1,10,100,1e12";
  std::string csv;
  std::string base = "10";
  bool perturb = false;

  auto* cluster = app.add_subcommand("cluster", "assign semantic cluster ids to every generation");
  cluster->add_option("--input,-i", input, "bundle JSONL")->required();
  cluster->add_option("--output,-o", output, "bundle JSONL with cluster_id filled (default stdout)");
  add_run_flags(*cluster, run);

  auto* score = app.add_subcommand("score", "write one scorecard JSON line per bundle");
  score->add_option("--input,-i", input, "bundle JSONL")->required();
  score->add_option("--output,-o", output, "scorecard JSONL (default stdout)");
  add_run_flags(*score, run);

  auto* evaluate = app.add_subcommand("evaluate", "AUROC, RAC, AURAC and win rates from scorecards");
  evaluate->add_option("--input,-i", input, "scorecard JSONL")->required();
  evaluate->add_option("--output,-o", output, "report JSON (default stdout)");
  evaluate->add_option("--methods", methods, "comma-separated subset of NE,SE_S,DSE_S,SE_R,SE_R+");
  evaluate->add_option("--rac-csv", csv, "write the rejection-accuracy curves as CSV");
  evaluate->add_flag("--verbose,-v", run.verbose, "log progress");

  auto* sweep = app.add_subcommand("sweep-lambda", "AUROC of calibrated Renyi entropy across lambda");
  sweep->add_option("--input,-i", input, "labeled bundle JSONL")->required();
  sweep->add_option("--output,-o", output, "sweep JSON (default stdout)");
  sweep->add_option("--lambdas", lambdas, "comma-separated lambda grid");
  sweep->add_option("--csv", csv, "write the sweep curve as CSV");
  add_run_flags(*sweep, run);

  auto* worked = app.add_subcommand("worked-example", "recompute and check the oil-producer example table");
  worked->add_option("--base", base, "log base: 10 or e")->check(CLI::IsMember({ "10", "e" }));
  worked->add_flag("--perturb-fixture", perturb)->group("");

  auto* validate = app.add_subcommand("validate", "check a bundle file against the record invariants");
  validate->add_option("--input,-i", input, "bundle JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoError;
  }
  semuq::set_log_level(run.verbose ? semuq::LogLevel::info : semuq::LogLevel::warning);

  try {
    if (*cluster)
      return cmd_cluster(run, input, output);
    if (*score)
      return cmd_score(run, input, output);
    if (*evaluate)
      return cmd_evaluate(input, output, methods, csv);
    if (*sweep)
      return cmd_sweep(run, input, output, lambdas, csv);
    if (*worked)
      return cmd_worked_example(base, perturb);
    if (*validate)
      return cmd_validate(input);
  } catch (const semuq::UndefinedMetricError& e) {
    std::cerr << "error: undefined metric " << e.metric_name << ": " << e.what() << '\n';
    return kUndefinedMetric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kOk;
}
