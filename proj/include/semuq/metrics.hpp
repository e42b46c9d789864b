#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "semuq/clustering.hpp"
#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/error.hpp"

namespace semuq {

/// Probability that a correct item is more confident (lower uncertainty)
/// than an incorrect one; ties count one half. Midrank Mann-Whitney statistic.
double auroc(const Eigen::Ref<const Eigen::VectorXd>& uncertainty, const std::vector<bool>& is_correct);

struct RacPoint
{
  double fraction = 0.0;
  double accuracy = 0.0;

  bool operator==(const RacPoint&) const = default;
};

/// Retained fractions 1.00, 0.99, ..., 0.80.
std::vector<double> default_retention_grid();

/// Accuracy of the ceil(f n) least uncertain items for each retained fraction
/// f (ties keep input order).
std::vector<RacPoint> rejection_accuracy_curve(const Eigen::Ref<const Eigen::VectorXd>& uncertainty,
                                               const std::vector<bool>& is_correct,
                                               const std::vector<double>& fractions = default_retention_grid());

/// Trapezoidal mean accuracy over the curve's fraction range. A one-point
/// curve returns its accuracy.
double aurac(const std::vector<RacPoint>& curve);

struct EvaluationReport
{
  std::string method_name;
  double auroc = 0.0;
  std::vector<RacPoint> rac;
  double aurac = 0.0;
  std::size_t n_questions = 0;
  std::size_t n_skipped_unlabeled = 0;

  bool operator==(const EvaluationReport&) const = default;
};

/// Evaluates one method; unlabeled questions are skipped and counted.
EvaluationReport evaluate_method(const std::string& method_name,
                                 const Eigen::Ref<const Eigen::VectorXd>& uncertainty,
                                 const std::vector<std::optional<bool>>& labels,
                                 const std::vector<double>& fractions = default_retention_grid());

struct WinRateMatrix
{
  std::vector<std::string> methods;
  Eigen::MatrixXd rates;    ///< rates(i, j): share of scenarios where method i beats method j
  Eigen::MatrixXd tie_mass; ///< mass not attributed to either side (zero: ties are split)
  std::size_t n_scenarios = 0;
};

/// `per_scenario` maps scenario -> method -> metric (higher is better).
/// `methods` fixes the row order; when empty, the methods of the first
/// scenario are used in name order.
WinRateMatrix win_rate_matrix(const std::map<std::string, std::map<std::string, double>>& per_scenario,
                              std::vector<std::string> methods = {});

/// Label of the answer with the highest probability (first on ties), or
/// nothing when that generation carries no label.
std::optional<bool> question_label(const QuestionBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& probs);

struct LambdaPoint
{
  double lambda = 0.0;
  double auroc = 0.0;
};

struct LambdaSweep
{
  std::vector<LambdaPoint> curve;
  double best_lambda = 0.0;
  double best_auroc = 0.0;
  double baseline_auroc = 0.0; ///< uncalibrated Renyi entropy
  std::size_t n_questions = 0;
};

/// Recomputes calibrated Renyi entropy and question labels for every lambda
/// and reports AUROC per lambda against the uncalibrated baseline.
LambdaSweep sweep_lambda(const std::vector<QuestionBundle>& bundles,
                         const std::vector<SemanticClustering>& clusterings,
                         const std::vector<Eigen::VectorXd>& uq_scores,
                         const std::vector<double>& lambdas,
                         const CalibrationConfig& base_config = {},
                         LogBase base = LogBase::base10);

struct NdBin
{
  double lower = 0.0;
  double upper = 0.0;
  double mean = 0.0;           ///< NaN when empty
  double standard_error = 0.0; ///< NaN when empty, 0 for a single item
  std::size_t count = 0;
};

/// Floor on the old entropy in the normalized difference.
inline constexpr double kEntropyFloor = 1e-9;

/// ND = (new - old) / max(old, floor), binned by old entropy. Bins are
/// [e_k, e_{k+1}) except the last, which also includes its upper edge.
std::vector<NdBin> signed_normalized_entropy_difference(const std::vector<double>& old_entropy,
                                                        const std::vector<double>& new_entropy,
                                                        const std::vector<double>& bin_edges);

void to_json(nlohmann::json& j, const RacPoint& p);
void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);
void to_json(nlohmann::json& j, const WinRateMatrix& w);
void to_json(nlohmann::json& j, const LambdaSweep& s);
void to_json(nlohmann::json& j, const NdBin& b);

/// `method,fraction,accuracy` rows.
void write_rac_csv(std::ostream& out, const std::vector<EvaluationReport>& reports);
/// `lambda,auroc` rows followed by the baseline.
void write_sweep_csv(std::ostream& out, const LambdaSweep& sweep);

} // namespace semuq
