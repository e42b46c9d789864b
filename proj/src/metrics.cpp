#include "semuq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "semuq/entropy.hpp"
#include "semuq/log.hpp"

namespace semuq {

namespace {

void check_aligned(Eigen::Index scores, std::size_t labels, const char* metric)
{
  if (static_cast<std::size_t>(scores) != labels)
    throw ParameterError(std::string(metric) + ": " + std::to_string(scores) + " scores but " +
                         std::to_string(labels) + " labels");
}

std::vector<std::size_t> stable_order(const Eigen::Ref<const Eigen::VectorXd>& scores)
{
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] < scores[static_cast<Eigen::Index>(b)];
  });
  return order;
}

} // namespace

double auroc(const Eigen::Ref<const Eigen::VectorXd>& uncertainty, const std::vector<bool>& is_correct)
{
  check_aligned(uncertainty.size(), is_correct.size(), "AUROC");
  for (Eigen::Index i = 0; i < uncertainty.size(); ++i)
    if (std::isnan(uncertainty[i]))
      throw ParameterError("AUROC: score " + std::to_string(i) + " is NaN");
  const auto positives = static_cast<std::size_t>(std::count(is_correct.begin(), is_correct.end(), true));
  const std::size_t negatives = is_correct.size() - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedMetricError("AUROC", "labels contain a single class");

  // Rank by confidence = -uncertainty; midranks for ties.
  const Eigen::VectorXd confidence = -uncertainty;
  const auto order = stable_order(confidence);
  const std::size_t n = order.size();
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && confidence[static_cast<Eigen::Index>(order[j + 1])] ==
                          confidence[static_cast<Eigen::Index>(order[i])])
      ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (is_correct[order[k]])
        rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

std::vector<double> default_retention_grid()
{
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k)
    grid.push_back(static_cast<double>(100 - k) / 100.0);
  return grid;
}

std::vector<RacPoint> rejection_accuracy_curve(const Eigen::Ref<const Eigen::VectorXd>& uncertainty,
                                               const std::vector<bool>& is_correct,
                                               const std::vector<double>& fractions)
{
  check_aligned(uncertainty.size(), is_correct.size(), "RAC");
  const auto order = stable_order(uncertainty);
  const std::size_t n = order.size();

  std::vector<RacPoint> curve;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0))
      throw ParameterError("RAC: retained fraction " + std::to_string(f) + " is outside (0, 1]");
    const auto keep = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
    if (keep == 0) {
      log_warning("RAC: retained fraction " + std::to_string(f) + " keeps no items; point skipped");
      continue;
    }
    std::size_t correct = 0;
    for (std::size_t k = 0; k < keep; ++k)
      correct += is_correct[order[k]] ? 1 : 0;
    curve.push_back({ f, static_cast<double>(correct) / static_cast<double>(keep) });
  }
  return curve;
}

double aurac(const std::vector<RacPoint>& curve)
{
  if (curve.empty())
    throw ParameterError("AURAC of an empty curve");
  if (curve.size() == 1)
    return curve.front().accuracy;
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k)
    area += 0.5 * (curve[k - 1].accuracy + curve[k].accuracy) * std::abs(curve[k - 1].fraction - curve[k].fraction);
  const auto [lo, hi] = std::minmax_element(curve.begin(), curve.end(), [](const RacPoint& a, const RacPoint& b) {
    return a.fraction < b.fraction;
  });
  const double range = hi->fraction - lo->fraction;
  if (!(range > 0.0))
    throw ParameterError("AURAC: curve fractions span no range");
  return area / range;
}

EvaluationReport evaluate_method(const std::string& method_name,
                                 const Eigen::Ref<const Eigen::VectorXd>& uncertainty,
                                 const std::vector<std::optional<bool>>& labels,
                                 const std::vector<double>& fractions)
{
  check_aligned(uncertainty.size(), labels.size(), method_name.c_str());
  std::vector<double> kept_scores;
  std::vector<bool> kept_labels;
  EvaluationReport r;
  r.method_name = method_name;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) {
      ++r.n_skipped_unlabeled;
      continue;
    }
    kept_scores.push_back(uncertainty[static_cast<Eigen::Index>(i)]);
    kept_labels.push_back(*labels[i]);
  }
  r.n_questions = kept_scores.size();
  const Eigen::Map<const Eigen::VectorXd> scores(kept_scores.data(), static_cast<Eigen::Index>(kept_scores.size()));
  r.auroc = auroc(scores, kept_labels);
  r.rac = rejection_accuracy_curve(scores, kept_labels, fractions);
  r.aurac = aurac(r.rac);
  return r;
}

WinRateMatrix win_rate_matrix(const std::map<std::string, std::map<std::string, double>>& per_scenario,
                              std::vector<std::string> methods)
{
  if (per_scenario.empty())
    throw ParameterError("win-rate matrix needs at least one scenario");
  if (methods.empty())
    for (const auto& [name, value] : per_scenario.begin()->second)
      methods.push_back(name);

  const auto m = static_cast<Eigen::Index>(methods.size());
  WinRateMatrix w;
  w.methods = methods;
  w.n_scenarios = per_scenario.size();
  w.rates = Eigen::MatrixXd::Zero(m, m);
  w.tie_mass = Eigen::MatrixXd::Zero(m, m);

  for (const auto& [scenario, values] : per_scenario) {
    std::vector<double> v;
    for (const auto& name : methods) {
      auto it = values.find(name);
      if (it == values.end())
        throw ValidationError("scenario '" + scenario + "' has no value for method '" + name + "'");
      v.push_back(it->second);
    }
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) {
        const double a = v[static_cast<std::size_t>(i)];
        const double b = v[static_cast<std::size_t>(j)];
        w.rates(i, j) += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      }
  }
  w.rates /= static_cast<double>(w.n_scenarios);
  w.rates.diagonal().setConstant(0.5);
  return w;
}

std::optional<bool> question_label(const QuestionBundle& bundle, const Eigen::Ref<const Eigen::VectorXd>& probs)
{
  if (probs.size() == 0 || static_cast<std::size_t>(probs.size()) != bundle.size())
    throw ParameterError("question label: probability vector does not match the bundle");
  Eigen::Index best = 0;
  for (Eigen::Index r = 1; r < probs.size(); ++r)
    if (probs[r] > probs[best])
      best = r;
  return bundle.generations[static_cast<std::size_t>(best)].is_correct;
}

LambdaSweep sweep_lambda(const std::vector<QuestionBundle>& bundles,
                         const std::vector<SemanticClustering>& clusterings,
                         const std::vector<Eigen::VectorXd>& uq_scores,
                         const std::vector<double>& lambdas,
                         const CalibrationConfig& base_config,
                         LogBase base)
{
  if (bundles.size() != clusterings.size() || bundles.size() != uq_scores.size())
    throw ParameterError("lambda sweep: bundles, clusterings and UQ scores differ in count");
  if (lambdas.empty())
    throw ParameterError("lambda sweep: empty lambda grid");

  LambdaSweep out;
  {
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t b = 0; b < bundles.size(); ++b) {
      const auto label = question_label(bundles[b], bundles[b].normalized_probabilities());
      if (!label)
        continue;
      scores.push_back(renyi_semantic_entropy(cluster_probabilities(clusterings[b], bundles[b]), base));
      labels.push_back(*label);
    }
    out.n_questions = scores.size();
    out.baseline_auroc =
      auroc(Eigen::Map<const Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size())), labels);
  }

  for (double lambda : lambdas) {
    CalibrationConfig cfg = base_config;
    cfg.lambda = lambda;
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t b = 0; b < bundles.size(); ++b) {
      const auto cal = calibrate_bundle(bundles[b], clusterings[b], uq_scores[b], cfg, base);
      const auto label = question_label(bundles[b], cal.adjusted_seq_probs);
      if (!label)
        continue;
      scores.push_back(cal.report.renyi_semantic_calibrated);
      labels.push_back(*label);
    }
    const double a =
      auroc(Eigen::Map<const Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size())), labels);
    out.curve.push_back({ lambda, a });
    if (out.curve.size() == 1 || a > out.best_auroc) {
      out.best_auroc = a;
      out.best_lambda = lambda;
    }
  }
  return out;
}

std::vector<NdBin> signed_normalized_entropy_difference(const std::vector<double>& old_entropy,
                                                        const std::vector<double>& new_entropy,
                                                        const std::vector<double>& bin_edges)
{
  if (old_entropy.size() != new_entropy.size())
    throw ParameterError("entropy drift: old and new lists differ in length");
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end()) ||
      std::adjacent_find(bin_edges.begin(), bin_edges.end()) != bin_edges.end())
    throw ParameterError("entropy drift: bin edges must be strictly ascending with at least two entries");

  const std::size_t bins = bin_edges.size() - 1;
  std::vector<std::vector<double>> members(bins);
  for (std::size_t i = 0; i < old_entropy.size(); ++i) {
    const double old = old_entropy[i];
    if (old < bin_edges.front() || old > bin_edges.back())
      throw ParameterError("entropy drift: old entropy " + std::to_string(old) + " lies outside the bin edges");
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), old);
    std::size_t k = static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    k = std::min(k, bins - 1);
    members[k].push_back((new_entropy[i] - old) / std::max(old, kEntropyFloor));
  }

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<NdBin> out;
  for (std::size_t k = 0; k < bins; ++k) {
    NdBin b;
    b.lower = bin_edges[k];
    b.upper = bin_edges[k + 1];
    b.count = members[k].size();
    if (b.count == 0) {
      b.mean = nan;
      b.standard_error = nan;
    } else {
      const Eigen::Map<const Eigen::VectorXd> v(members[k].data(), static_cast<Eigen::Index>(b.count));
      b.mean = v.mean();
      if (b.count > 1) {
        const double var = (v.array() - b.mean).square().sum() / static_cast<double>(b.count - 1);
        b.standard_error = std::sqrt(var / static_cast<double>(b.count));
      }
    }
    out.push_back(b);
  }
  return out;
}

void to_json(nlohmann::json& j, const RacPoint& p)
{
  j = nlohmann::json{ { "fraction", p.fraction }, { "accuracy", p.accuracy } };
}

void to_json(nlohmann::json& j, const EvaluationReport& r)
{
  j = nlohmann::json{ { "method_name", r.method_name },     { "auroc", r.auroc },
                      { "rac", r.rac },                     { "aurac", r.aurac },
                      { "n_questions", r.n_questions },     { "n_skipped_unlabeled", r.n_skipped_unlabeled } };
}

void from_json(const nlohmann::json& j, EvaluationReport& r)
{
  j.at("method_name").get_to(r.method_name);
  j.at("auroc").get_to(r.auroc);
  j.at("aurac").get_to(r.aurac);
  j.at("n_questions").get_to(r.n_questions);
  j.at("n_skipped_unlabeled").get_to(r.n_skipped_unlabeled);
  r.rac.clear();
  for (const auto& p : j.at("rac"))
    r.rac.push_back({ p.at("fraction").get<double>(), p.at("accuracy").get<double>() });
}

void to_json(nlohmann::json& j, const WinRateMatrix& w)
{
  auto rows = [](const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(m.cols());
      for (Eigen::Index k = 0; k < m.cols(); ++k)
        row[static_cast<std::size_t>(k)] = m(i, k);
      out.push_back(row);
    }
    return out;
  };
  j = nlohmann::json{ { "methods", w.methods },
                      { "rates", rows(w.rates) },
                      { "tie_mass", rows(w.tie_mass) },
                      { "n_scenarios", w.n_scenarios } };
}

void to_json(nlohmann::json& j, const LambdaSweep& s)
{
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : s.curve)
    curve.push_back({ { "lambda", p.lambda }, { "auroc", p.auroc } });
  j = nlohmann::json{ { "curve", curve },
                      { "best_lambda", s.best_lambda },
                      { "best_auroc", s.best_auroc },
                      { "baseline_auroc", s.baseline_auroc },
                      { "n_questions", s.n_questions } };
}

void to_json(nlohmann::json& j, const NdBin& b)
{
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  j = nlohmann::json{ { "lower", b.lower },
                      { "upper", b.upper },
                      { "mean", num(b.mean) },
                      { "standard_error", num(b.standard_error) },
                      { "count", b.count } };
}

void write_rac_csv(std::ostream& out, const std::vector<EvaluationReport>& reports)
{
  out.precision(17);
  out << "method,fraction,accuracy\n";
  for (const auto& r : reports)
    for (const auto& p : r.rac)
      out << r.method_name << ',' << p.fraction << ',' << p.accuracy << '\n';
}

void write_sweep_csv(std::ostream& out, const LambdaSweep& sweep)
{
  out.precision(17);
  out << "lambda,auroc\n";
  for (const auto& p : sweep.curve)
    out << p.lambda << ',' << p.auroc << '\n';
  out << "baseline," << sweep.baseline_auroc << '\n';
}

} // namespace semuq
