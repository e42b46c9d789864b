#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "semuq/clustering.hpp"
#include "semuq/config.hpp"
#include "semuq/data_model.hpp"
#include "semuq/error.hpp"
#include "semuq/log.hpp"

namespace semuq {

/// Lower clip applied to zero probabilities before taking logs.
inline constexpr double kProbabilityClip = 1e-6;

template <typename Scalar>
Scalar log_in_base(Scalar x, LogBase base)
{
  return base == LogBase::base10 ? std::log10(x) : std::log(x);
}

namespace detail {

template <typename Derived>
void check_distribution(const Eigen::MatrixBase<Derived>& p, const char* what)
{
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0)
    throw PreconditionError(std::string(what) + ": empty probability vector");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p(i) >= Scalar(0) && p(i) <= Scalar(1)))
      throw PreconditionError(std::string(what) + ": entry " + std::to_string(i) + " is outside [0, 1]");
  }
  if (std::abs(p.sum() - Scalar(1)) > Scalar(1e-6))
    throw PreconditionError(std::string(what) + ": probabilities sum to " + std::to_string(double(p.sum())) +
                            ", expected 1");
}

} // namespace detail

/// Per-entry -p log p. Zero entries are clipped to kProbabilityClip with a warning.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> shannon_terms(const Eigen::MatrixBase<Derived>& p,
                                                                         LogBase base = LogBase::base10)
{
  using Scalar = typename Derived::Scalar;
  detail::check_distribution(p, "entropy");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Scalar v = p(i);
    if (v == Scalar(0)) {
      log_warning("zero probability at entry " + std::to_string(i) + " clipped to 1e-6");
      v = Scalar(kProbabilityClip);
    }
    out(i) = -v * log_in_base(v, base);
  }
  return out;
}

/// -sum_r p_r log p_r over individual generations.
template <typename Derived>
typename Derived::Scalar naive_entropy(const Eigen::MatrixBase<Derived>& seq_probs, LogBase base = LogBase::base10)
{
  return shannon_terms(seq_probs, base).sum();
}

/// -sum_c p_c log p_c over semantic clusters.
template <typename Derived>
typename Derived::Scalar shannon_semantic_entropy(const Eigen::MatrixBase<Derived>& cluster_probs,
                                                  LogBase base = LogBase::base10)
{
  return shannon_terms(cluster_probs, base).sum();
}

/// Per-cluster squared probabilities, the summands of the collision entropy.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> renyi_terms(const Eigen::MatrixBase<Derived>& p)
{
  detail::check_distribution(p, "Renyi entropy");
  return p.array().square().matrix();
}

/// -log sum_c p_c^2 (quadratic Renyi, or collision, entropy).
template <typename Derived>
typename Derived::Scalar renyi_semantic_entropy(const Eigen::MatrixBase<Derived>& cluster_probs,
                                                LogBase base = LogBase::base10)
{
  using Scalar = typename Derived::Scalar;
  // Clamp the tiny negative that rounding produces for a one-hot vector.
  return std::max(Scalar(0), -log_in_base(renyi_terms(cluster_probs).sum(), base));
}

/// Shannon entropy of cluster sizes over the generation count.
inline double discrete_semantic_entropy(const SemanticClustering& clustering, LogBase base = LogBase::base10)
{
  return shannon_semantic_entropy(discrete_cluster_probabilities(clustering), base);
}

struct EntropyReport
{
  std::string question_id;
  double naive_entropy = 0.0;
  double shannon_semantic = 0.0;
  double discrete_semantic = 0.0;
  double renyi_semantic = 0.0;
  double renyi_semantic_calibrated = 0.0;
  LogBase log_base = LogBase::base10;
  std::vector<double> per_cluster_terms;         ///< calibrated p_c^2, one per cluster
  std::vector<double> shannon_per_cluster_terms; ///< -p_c log p_c, one per cluster

  bool operator==(const EntropyReport&) const = default;
};

void to_json(nlohmann::json& j, const EntropyReport& r);
void from_json(const nlohmann::json& j, EntropyReport& r);

/// Fills every entropy of the report. `calibrated_cluster_probs` feeds the
/// calibrated Renyi entry and the per-cluster terms.
EntropyReport entropy_report(const QuestionBundle& bundle,
                             const SemanticClustering& clustering,
                             const Eigen::Ref<const Eigen::VectorXd>& calibrated_cluster_probs,
                             LogBase base = LogBase::base10);

/// -ln(q^2 + (1 - q)^2) - (lambda / uq) KL(q || p), natural log throughout.
double calibration_objective(double q, double p, double uq, double lambda);

struct CalibrationResult
{
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace; ///< objective at the start point and after every accepted step
};

/// Projected gradient ascent of calibration_objective started at p, with
/// backtracking halving whenever a trial step would lower the objective.
CalibrationResult calibrate_probability(double p, double uq, const CalibrationConfig& config);

struct CalibratedBundle
{
  Eigen::VectorXd adjusted_seq_probs;     ///< renormalized to sum 1
  Eigen::VectorXd adjusted_cluster_probs; ///< aggregated from adjusted_seq_probs
  EntropyReport report;
  int nonconverged = 0;
};

/// Calibrates every normalized sequence probability with its own UQ score,
/// renormalizes, and re-aggregates cluster probabilities.
CalibratedBundle calibrate_bundle(const QuestionBundle& bundle,
                                  const SemanticClustering& clustering,
                                  const Eigen::Ref<const Eigen::VectorXd>& uq_scores,
                                  const CalibrationConfig& config,
                                  LogBase base = LogBase::base10);

} // namespace semuq
