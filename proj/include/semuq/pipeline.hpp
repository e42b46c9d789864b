#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "semuq/clustering.hpp"
#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/entropy.hpp"
#include "semuq/kme.hpp"
#include "semuq/metrics.hpp"
#include "semuq/qtn.hpp"

namespace semuq {

/// Names accepted by the method selectors, in canonical order.
inline const std::vector<std::string> kAllMethods = { "NE", "SE_S", "DSE_S", "SE_R", "SE_R+" };

/// Raised when a pipeline stage fails for one bundle.
class StageError : public Error
{
public:
  StageError(std::string stage_name, std::string question, const std::string& what)
    : Error("bundle '" + question + "', stage " + stage_name + ": " + what)
    , stage(std::move(stage_name))
    , question_id(std::move(question))
  {
  }

  std::string stage;
  std::string question_id;
};

/// Everything derived from one bundle's KME before any query is made.
struct QtnModel
{
  WaveFunction kme; ///< L2-normalized
  QcmMatrix qcm;
  NullSpaceFit fit;
  Spectrum spectrum;
  FirstOrderCorrections corrections;
  UqFeatureMatrix features;
};

/// KME -> QCM -> null-space fit -> Hamiltonian -> spectrum -> perturbation
/// features. `seq_probs` are the within-question normalized probabilities.
QtnModel build_qtn_model(const Eigen::Ref<const Eigen::VectorXd>& seq_probs,
                         const OperatorBasis& basis,
                         const RunConfig& config);

/// One UQ score per sequence probability, read off the model's features.
Eigen::VectorXd query_uq_scores(const QtnModel& model, const Eigen::Ref<const Eigen::VectorXd>& seq_probs, int m_adj);

struct QtnDiagnostics
{
  double null_residual = 0.0;
  bool approximate_fit = false;
  double kme_overlap = 0.0;
  Eigen::Index kme_mode_index = 0;
  double imaginary_mass = 0.0;
  Eigen::Index dropped_terms = 0;

  bool operator==(const QtnDiagnostics&) const = default;
};

struct BundleScorecard
{
  std::string question_id;
  std::size_t n_clusters = 0;
  std::vector<std::size_t> cluster_sizes;
  std::vector<std::size_t> cluster_labels; ///< cluster index of every generation
  std::vector<double> uq_scores;
  std::vector<double> adjusted_seq_probs;
  std::vector<double> adjusted_cluster_probs;
  EntropyReport entropy;
  QtnDiagnostics qtn;
  std::optional<bool> label;            ///< correctness of the most probable answer
  std::optional<bool> label_calibrated; ///< same after calibration
  int nonconverged = 0;
  std::map<std::string, std::string> metadata;

  bool operator==(const BundleScorecard&) const = default;
};

void to_json(nlohmann::json& j, const BundleScorecard& s);
void from_json(const nlohmann::json& j, BundleScorecard& s);

/// Uncertainty of a scorecard under one method name from kAllMethods.
double method_score(const BundleScorecard& card, const std::string& method);
/// Label the method is judged against: calibrated for SE_R+, original otherwise.
std::optional<bool> method_label(const BundleScorecard& card, const std::string& method);

/// Scenario key built from dataset/model/quantization/prompt_style metadata.
std::string scenario_key(const std::map<std::string, std::string>& metadata);

struct EvaluationSummary
{
  std::vector<EvaluationReport> reports;
  std::optional<WinRateMatrix> auroc_win_rates;
  std::optional<WinRateMatrix> aurac_win_rates;
  std::size_t n_scenarios_skipped = 0;
};

/// Per-method reports over all scorecards plus scenario win-rate matrices
/// when two or more methods are requested.
EvaluationSummary evaluate_scorecards(const std::vector<BundleScorecard>& cards,
                                      const std::vector<std::string>& methods,
                                      const std::vector<double>& fractions = default_retention_grid());

void to_json(nlohmann::json& j, const EvaluationSummary& s);

struct ExperimentResult
{
  ExperimentRun run;
  std::vector<BundleScorecard> scorecards; ///< input order, failed bundles left out
  EvaluationSummary evaluation;
  std::size_t failed = 0;
  std::vector<std::string> failures;
};

/// A normalized bundle with its clustering and per-generation UQ scores,
/// ready for calibration at any lambda.
struct PreparedBundle
{
  QuestionBundle bundle;
  SemanticClustering clustering;
  Eigen::VectorXd uq_scores;
};

class Pipeline
{
public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }

  /// Verdict matrices for the precomputed backend, keyed by question_id.
  void set_precomputed_verdicts(std::map<std::string, VerdictMatrix> verdicts);
  /// Overrides the backend chosen from the config (useful for tests).
  void set_backend(std::shared_ptr<const EntailmentBackend> backend);
  /// When set, every scored bundle writes QTN diagnostics as CSV files here.
  void set_diagnostics_dir(std::filesystem::path dir);

  /// Operator basis for the configured spin count, built once.
  const OperatorBasis& basis() const;

  SemanticClustering cluster(const QuestionBundle& bundle) const;
  BundleScorecard score_bundle(const QuestionBundle& bundle) const;
  BundleScorecard score_bundle(const QuestionBundle& bundle, const SemanticClustering& clustering) const;

  /// Runs every stage up to the UQ scores.
  PreparedBundle prepare(const QuestionBundle& bundle) const;

  /// Lambda sweep over all bundles that prepare successfully.
  LambdaSweep sweep_lambda(const std::vector<QuestionBundle>& bundles, const std::vector<double>& lambdas) const;

  /// Scores every bundle on a bounded worker pool. Failing bundles are
  /// logged and counted; results keep input order.
  std::vector<BundleScorecard> score_all(const std::vector<QuestionBundle>& bundles,
                                         std::size_t* failed = nullptr,
                                         std::vector<std::string>* failures = nullptr) const;

  ExperimentResult run_experiment(const std::vector<QuestionBundle>& bundles,
                                  const std::vector<std::string>& methods) const;

private:
  struct Prepared
  {
    PreparedBundle prepared;
    QtnModel model;
  };

  Prepared prepare_with_model(const QuestionBundle& bundle, const SemanticClustering& clustering) const;
  /// Runs `fn(i)` for every index on the worker pool; returns per-index errors.
  std::vector<std::string> for_each_parallel(std::size_t count, const std::function<void(std::size_t)>& fn) const;
  void dump_diagnostics(const std::string& question_id, const QtnModel& model) const;

  RunConfig config_;
  std::shared_ptr<const EntailmentBackend> backend_;
  std::map<std::string, VerdictMatrix> precomputed_;
  std::optional<std::filesystem::path> diagnostics_dir_;
  mutable std::mutex basis_mutex_;
  mutable std::shared_ptr<const OperatorBasis> basis_;
};

} // namespace semuq
