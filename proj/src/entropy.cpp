#include "semuq/entropy.hpp"

#include <algorithm>

namespace semuq {

void to_json(nlohmann::json& j, const EntropyReport& r)
{
  j = nlohmann::json{ { "question_id", r.question_id },
                      { "naive_entropy", r.naive_entropy },
                      { "shannon_semantic", r.shannon_semantic },
                      { "discrete_semantic", r.discrete_semantic },
                      { "renyi_semantic", r.renyi_semantic },
                      { "renyi_semantic_calibrated", r.renyi_semantic_calibrated },
                      { "log_base", to_string(r.log_base) },
                      { "per_cluster_terms", r.per_cluster_terms },
                      { "shannon_per_cluster_terms", r.shannon_per_cluster_terms } };
}

void from_json(const nlohmann::json& j, EntropyReport& r)
{
  j.at("question_id").get_to(r.question_id);
  j.at("naive_entropy").get_to(r.naive_entropy);
  j.at("shannon_semantic").get_to(r.shannon_semantic);
  j.at("discrete_semantic").get_to(r.discrete_semantic);
  j.at("renyi_semantic").get_to(r.renyi_semantic);
  j.at("renyi_semantic_calibrated").get_to(r.renyi_semantic_calibrated);
  r.log_base = parse_log_base(j.at("log_base").get<std::string>());
  j.at("per_cluster_terms").get_to(r.per_cluster_terms);
  r.shannon_per_cluster_terms = j.value("shannon_per_cluster_terms", std::vector<double>{});
}

EntropyReport entropy_report(const QuestionBundle& bundle,
                             const SemanticClustering& clustering,
                             const Eigen::Ref<const Eigen::VectorXd>& calibrated_cluster_probs,
                             LogBase base)
{
  if (static_cast<std::size_t>(calibrated_cluster_probs.size()) != clustering.size())
    throw ParameterError("calibrated cluster probabilities do not match the cluster count");
  const Eigen::VectorXd seq = bundle.normalized_probabilities();
  const Eigen::VectorXd pc = cluster_probabilities(clustering, seq);
  const Eigen::VectorXd shannon = shannon_terms(pc, base);
  const Eigen::VectorXd squared = renyi_terms(calibrated_cluster_probs);

  EntropyReport r;
  r.question_id = bundle.question_id;
  r.log_base = base;
  r.naive_entropy = naive_entropy(seq, base);
  r.shannon_semantic = shannon.sum();
  r.discrete_semantic = discrete_semantic_entropy(clustering, base);
  r.renyi_semantic = renyi_semantic_entropy(pc, base);
  r.renyi_semantic_calibrated = renyi_semantic_entropy(calibrated_cluster_probs, base);
  r.per_cluster_terms.assign(squared.data(), squared.data() + squared.size());
  r.shannon_per_cluster_terms.assign(shannon.data(), shannon.data() + shannon.size());
  return r;
}

namespace {

double bernoulli_kl(double q, double p)
{
  return q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
}

double objective_gradient(double q, double p, double uq, double lambda)
{
  const double s = q * q + (1.0 - q) * (1.0 - q);
  const double dkl = std::log(q / p) - std::log((1.0 - q) / (1.0 - p));
  return -(4.0 * q - 2.0) / s - (lambda / uq) * dkl;
}

} // namespace

double calibration_objective(double q, double p, double uq, double lambda)
{
  return -std::log(q * q + (1.0 - q) * (1.0 - q)) - (lambda / uq) * bernoulli_kl(q, p);
}

CalibrationResult calibrate_probability(double p, double uq, const CalibrationConfig& config)
{
  config.validate();
  if (!(p >= 0.0 && p <= 1.0))
    throw ParameterError("probability to calibrate must lie in [0, 1]");
  if (!(uq > 0.0) || !std::isfinite(uq))
    throw ParameterError("UQ score must be positive and finite");

  const double lo = config.clip_epsilon;
  const double hi = 1.0 - config.clip_epsilon;
  const double anchor = std::clamp(p, lo, hi);
  const double lambda = config.lambda;
  auto objective = [&](double q) { return calibration_objective(q, anchor, uq, lambda); };

  CalibrationResult out;
  double q = anchor;
  double f = objective(q);
  out.objective_trace.push_back(f);

  for (int it = 1; it <= config.max_iters; ++it) {
    out.iterations = it;
    const double g = objective_gradient(q, anchor, uq, lambda);
    double step = config.step_size;
    double trial = q;
    double f_trial = f;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
      trial = std::clamp(q + step * g, lo, hi);
      f_trial = objective(trial);
      if (f_trial >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent direction at any tested step length: q is stationary.
      out.converged = true;
      break;
    }
    const double delta = std::abs(trial - q);
    q = trial;
    f = f_trial;
    out.objective_trace.push_back(f);
    if (delta < config.stop_delta) {
      out.converged = true;
      break;
    }
  }
  out.value = q;
  return out;
}

CalibratedBundle calibrate_bundle(const QuestionBundle& bundle,
                                  const SemanticClustering& clustering,
                                  const Eigen::Ref<const Eigen::VectorXd>& uq_scores,
                                  const CalibrationConfig& config,
                                  LogBase base)
{
  const Eigen::VectorXd seq = bundle.normalized_probabilities();
  if (uq_scores.size() != seq.size())
    throw ParameterError("expected " + std::to_string(seq.size()) + " UQ scores, got " +
                         std::to_string(uq_scores.size()));

  CalibratedBundle out;
  Eigen::VectorXd adjusted(seq.size());
  for (Eigen::Index r = 0; r < seq.size(); ++r) {
    const CalibrationResult c = calibrate_probability(seq[r], uq_scores[r], config);
    if (!c.converged) {
      ++out.nonconverged;
      log_warning("calibration of '" + bundle.question_id + "' generation " + std::to_string(r) +
                  " stopped at max_iters without converging");
    }
    adjusted[r] = c.value;
  }
  out.adjusted_seq_probs = adjusted / adjusted.sum();
  out.adjusted_cluster_probs = cluster_probabilities(clustering, out.adjusted_seq_probs);
  out.report = entropy_report(bundle, clustering, out.adjusted_cluster_probs, base);
  return out;
}

} // namespace semuq
