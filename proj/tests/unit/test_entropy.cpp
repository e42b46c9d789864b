#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semuq/entropy.hpp"
#include "test_support.hpp"

using namespace semuq;

namespace {

double oracle_objective(double q, double p, double uq, double lambda)
{
  const double kl = q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
  return -std::log(q * q + (1 - q) * (1 - q)) - lambda / uq * kl;
}

/// Golden-section search; the objective is concave on (0, 1).
double oracle_argmax(double p, double uq, double lambda)
{
  double a = 1e-9, b = 1 - 1e-9;
  const double r = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 200; ++i) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (oracle_objective(c, p, uq, lambda) > oracle_objective(d, p, uq, lambda))
      b = d;
    else
      a = c;
  }
  return 0.5 * (a + b);
}

SemanticClustering table_clustering(const QuestionBundle& b)
{
  return clustering_from_record_ids(b);
}

} // namespace

TEST_CASE("entropies of the worked table")
{
  const auto bundle = test::table_bundle();
  const auto clustering = table_clustering(bundle);
  const Eigen::VectorXd p = bundle.normalized_probabilities();

  double ne = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    ne -= p[i] * std::log10(p[i]);
  CHECK(naive_entropy(p) == doctest::Approx(ne).epsilon(1e-12));
  CHECK(naive_entropy(p) == doctest::Approx(0.84557).epsilon(5e-4 / 0.84557));

  const Eigen::VectorXd pc = cluster_probabilities(clustering, p);
  CHECK(shannon_semantic_entropy(pc) == doctest::Approx(0.22471).epsilon(5e-4 / 0.22471));

  Eigen::VectorXd calibrated(6);
  calibrated << 0.02223, 0.85880, 0.02697, 0.03488, 0.01214, 0.04498;
  const auto report = entropy_report(bundle, clustering, calibrated);
  CHECK(std::abs(report.renyi_semantic_calibrated - 0.12951) <= 5e-4);
  CHECK(std::abs(report.per_cluster_terms[1] - 0.73754) <= 5e-5);
  CHECK(report.naive_entropy == doctest::Approx(ne));
  CHECK(report.discrete_semantic == doctest::Approx(discrete_semantic_entropy(clustering)));
  CHECK(report.shannon_per_cluster_terms.size() == 6);
  // discrete: sizes 1,5,1,1,1,1 over 10
  const double dse = -(0.5 * std::log10(0.5) + 5 * 0.1 * std::log10(0.1));
  CHECK(report.discrete_semantic == doctest::Approx(dse));

  nlohmann::json j = report;
  CHECK(j.get<EntropyReport>() == report);
}

TEST_CASE("trivial distributions")
{
  const Eigen::Vector3d one_hot(0, 1, 0);
  CHECK(renyi_semantic_entropy(Eigen::VectorXd::Ones(1)) == 0.0);
  CHECK(shannon_semantic_entropy(Eigen::VectorXd::Ones(1)) == 0.0);
  CHECK(renyi_semantic_entropy(one_hot) == 0.0);
  CHECK(shannon_semantic_entropy(one_hot) <= 3e-5); // two clipped zeros
  for (int n : { 2, 5, 17 }) {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(n, 1.0 / n);
    CHECK(naive_entropy(u) == doctest::Approx(std::log10(n)));
    CHECK(renyi_semantic_entropy(u) == doctest::Approx(std::log10(n)));
    CHECK(renyi_semantic_entropy(u, LogBase::natural) == doctest::Approx(std::log(n)));
  }
  const Eigen::VectorXf uf = Eigen::VectorXf::Constant(4, 0.25f);
  CHECK(renyi_semantic_entropy(uf) == doctest::Approx(std::log10(4.0)).epsilon(1e-6));
}

TEST_CASE("invalid distributions")
{
  CHECK_THROWS_AS(naive_entropy(Eigen::VectorXd()), PreconditionError);
  CHECK_THROWS_AS(naive_entropy(Eigen::Vector2d(0.5, 0.6)), PreconditionError);
  CHECK_THROWS_AS(renyi_semantic_entropy(Eigen::Vector2d(-0.1, 1.1)), PreconditionError);
  CHECK_THROWS_AS(shannon_semantic_entropy(Eigen::Vector2d(std::nan(""), 1.0)), PreconditionError);
}

TEST_CASE("entropy properties over random distributions")
{
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::VectorXd p = test::random_simplex(rng, size(rng));
    const double s10 = shannon_semantic_entropy(p);
    const double r10 = renyi_semantic_entropy(p);
    CHECK(s10 >= r10 - 1e-12);
    CHECK(r10 >= 0.0);
    CHECK(std::abs(shannon_semantic_entropy(p, LogBase::natural) - s10 * std::numbers::ln10) <= 1e-10);
    CHECK(std::abs(renyi_semantic_entropy(p, LogBase::natural) - r10 * std::numbers::ln10) <= 1e-10);

    Eigen::VectorXd q = p;
    std::shuffle(q.data(), q.data() + q.size(), rng);
    CHECK(std::abs(shannon_semantic_entropy(q) - s10) <= 1e-12);
    CHECK(std::abs(renyi_semantic_entropy(q) - r10) <= 1e-12);
  }
}

TEST_CASE("calibration objective")
{
  CHECK(calibration_objective(0.3, 0.3, 1.0, 5.0) == doctest::Approx(-std::log(0.09 + 0.49)));
  CHECK(calibration_objective(0.2, 0.7, 0.5, 2.0) == doctest::Approx(oracle_objective(0.2, 0.7, 0.5, 2.0)));
}

TEST_CASE("calibration matches a golden-section oracle")
{
  CalibrationConfig cfg;
  cfg.stop_delta = 1e-12;
  cfg.max_iters = 20000;
  for (double p : { 0.05, 0.2, 0.5, 0.7, 0.95 })
    for (double uq : { 0.1, 1.0, 5.0 })
      for (double lambda : { 0.5, 1.0, 4.0 }) {
        cfg.lambda = lambda;
        const auto r = calibrate_probability(p, uq, cfg);
        const double q = oracle_argmax(p, uq, lambda);
        CHECK(std::abs(r.value - q) <= 1e-3);
        CHECK(oracle_objective(r.value, p, uq, lambda) >= oracle_objective(q, p, uq, lambda) - 1e-8);
      }
}

TEST_CASE("calibration ascent properties")
{
  CalibrationConfig cfg;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = u(rng);
    const auto r = calibrate_probability(p, 1.0, cfg);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] >= r.objective_trace[i - 1] - 1e-15);
    // The optimum lies between the anchor and one half.
    CHECK(r.value >= std::min(p, 0.5) - 1e-9);
    CHECK(r.value <= std::max(p, 0.5) + 1e-9);
    CHECK(r.value > 0.0);
    CHECK(r.value < 1.0);

    // A larger UQ score weakens the anchor.
    double last = std::abs(p - 0.5);
    for (double uq : { 0.01, 0.1, 1.0, 10.0, 100.0 }) {
      const double d = std::abs(calibrate_probability(p, uq, cfg).value - 0.5);
      CHECK(d <= last + 1e-6);
      last = d;
    }
  }
}

TEST_CASE("calibration limits and errors")
{
  CalibrationConfig cfg;
  cfg.lambda = 0.0;
  CHECK(calibrate_probability(0.9, 1.0, cfg).value == doctest::Approx(0.5).epsilon(1e-3));
  cfg.lambda = 1e12;
  CHECK(calibrate_probability(0.9, 1.0, cfg).value == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(calibrate_probability(0.5, 1.0, cfg).converged);
  CHECK_THROWS_AS(calibrate_probability(1.2, 1.0, cfg), ParameterError);
  CHECK_THROWS_AS(calibrate_probability(0.2, 0.0, cfg), ParameterError);
  // Extreme anchors are clamped instead of producing infinities.
  const auto edge = calibrate_probability(0.0, 1.0, CalibrationConfig{});
  CHECK(std::isfinite(edge.value));
}

TEST_CASE("calibrate bundle")
{
  const auto bundle = test::table_bundle();
  const auto clustering = table_clustering(bundle);
  const Eigen::VectorXd p = bundle.normalized_probabilities();

  SUBCASE("a huge lambda leaves probabilities in place")
  {
    CalibrationConfig cfg;
    cfg.lambda = 1e12;
    const auto r = calibrate_bundle(bundle, clustering, Eigen::VectorXd::Ones(10), cfg);
    CHECK((r.adjusted_seq_probs - p).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(r.report.renyi_semantic_calibrated ==
          doctest::Approx(r.report.renyi_semantic).epsilon(1e-5));
    CHECK(r.nonconverged == 0);
  }
  SUBCASE("adjusted probabilities are a distribution aggregated by cluster")
  {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(0.01, 3.0);
    Eigen::VectorXd uq(10);
    for (auto& x : uq)
      x = u(rng);
    const auto r = calibrate_bundle(bundle, clustering, uq, CalibrationConfig{});
    CHECK(r.adjusted_seq_probs.sum() == doctest::Approx(1.0));
    CHECK((r.adjusted_seq_probs.array() > 0).all());
    CHECK((r.adjusted_cluster_probs - cluster_probabilities(clustering, r.adjusted_seq_probs)).cwiseAbs().maxCoeff() <=
          1e-12);
    double sq = 0.0;
    for (Eigen::Index c = 0; c < r.adjusted_cluster_probs.size(); ++c)
      sq += r.adjusted_cluster_probs[c] * r.adjusted_cluster_probs[c];
    CHECK(r.report.renyi_semantic_calibrated == doctest::Approx(-std::log10(sq)));
  }
  CHECK_THROWS(calibrate_bundle(bundle, clustering, Eigen::VectorXd::Ones(3), CalibrationConfig{}));
}
