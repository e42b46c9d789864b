// Acceptance checks. Run with a criterion number (1-9) or with no argument
// to run all of them. Each criterion prints one PASS/FAIL line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "semuq/entropy.hpp"
#include "semuq/metrics.hpp"
#include "semuq/pipeline.hpp"
#include "semuq/qtn.hpp"
#include "semuq/worked_example.hpp"

using namespace semuq;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
  bool pass = true;
  std::string detail;
};

Eigen::VectorXd random_simplex(std::mt19937_64& rng, Eigen::Index n)
{
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v)
    x = e(rng) + 1e-12;
  return v / v.sum();
}

Eigen::VectorXcd random_kme(std::mt19937_64& rng, int spins)
{
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_real_distribution<double> bandwidth(0.02, 0.2);
  const Eigen::VectorXd p = random_simplex(rng, count(rng));
  const auto wf = l2_normalize(empirical_kme(p, AmplitudeGrid::make(spins), bandwidth(rng)));
  return wf.values.cast<cplx>();
}

Eigen::VectorXcd random_complex_state(std::mt19937_64& rng, Eigen::Index dim)
{
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(dim);
  for (auto& x : v)
    x = cplx(g(rng), g(rng));
  return v.normalized();
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, Eigen::Index n)
{
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (auto& x : a.reshaped())
    x = g(rng);
  return 0.5 * (a + a.transpose());
}

/// Pauli string as an explicit Kronecker product, scaled by 1/sqrt(D).
Eigen::MatrixXcd kron_string(const std::string& letters)
{
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
  for (char c : letters) {
    Eigen::Matrix2cd p;
    if (c == 'X')
      p << 0, 1, 1, 0;
    else if (c == 'Y')
      p << 0, cplx(0, -1), cplx(0, 1), 0;
    else if (c == 'Z')
      p << 1, 0, 0, -1;
    else
      p.setIdentity();
    Eigen::MatrixXcd next(out.rows() * 2, out.cols() * 2);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        next.block(2 * i, 2 * j, 2, 2) = out(i, j) * p;
    out = std::move(next);
  }
  return out / std::sqrt(static_cast<double>(out.rows()));
}

Eigen::MatrixXcd kron_hamiltonian(const OperatorBasis& basis, const Eigen::VectorXd& w)
{
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(basis.dimension(), basis.dimension());
  for (Eigen::Index k = 0; k < basis.size(); ++k)
    h += w[k] * kron_string(basis.term(k).letters);
  return h;
}

// 1 -------------------------------------------------------------------------
Outcome golden_table()
{
  const auto t0 = Clock::now();
  const auto r = compute_worked_example(worked_example_fixture(), LogBase::base10);
  const auto checks = check_worked_example(r);
  const double elapsed = seconds_since(t0);
  Outcome out;
  std::ostringstream d;
  d.precision(5);
  d << std::fixed;
  for (const auto& c : checks) {
    out.pass = out.pass && c.ok;
    d << c.name << "=" << c.actual << (c.ok ? "" : "(!)") << " ";
  }
  out.pass = out.pass && elapsed < 1.0;
  d << "time=" << elapsed << "s";
  out.detail = d.str();
  return out;
}

// 2 -------------------------------------------------------------------------
Outcome qcm_invariants()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  double worst_sym = 0, worst_imag = 0, min_eig = std::numeric_limits<double>::infinity(), worst_var = 0;
  int n = 0;
  for (int spins : { 2, 4, 8 }) {
    const auto basis = build_operator_basis(spins);
    const int count = spins == 8 ? 66 : 67;
    for (int i = 0; i < count; ++i, ++n) {
      const Eigen::VectorXcd psi = random_kme(rng, spins);
      const auto qcm = quantum_correlation_matrix(basis, psi);
      worst_sym = std::max(worst_sym, (qcm.entries - qcm.entries.transpose()).cwiseAbs().maxCoeff());
      worst_imag = std::max(worst_imag, qcm.imaginary_mass);
      const auto fit = null_space_weights(qcm);
      min_eig = std::min(min_eig, fit.qcm_eigenvalues.minCoeff());
      const Eigen::MatrixXcd h = kron_hamiltonian(basis, fit.weights);
      const Eigen::VectorXcd hpsi = h * psi;
      const double var = hpsi.squaredNorm() - std::norm(psi.dot(hpsi));
      worst_var = std::max(worst_var, std::abs(var - fit.residual));
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome out;
  out.pass = worst_sym <= 1e-10 && worst_imag < 1e-12 && min_eig >= -1e-8 && worst_var <= 1e-8 && elapsed < 120;
  std::ostringstream d;
  d << n << " states: max asym=" << worst_sym << " max imag=" << worst_imag << " min eig=" << min_eig
    << " max |residual-Var(H)|=" << worst_var << " time=" << elapsed << "s";
  out.detail = d.str();
  return out;
}

// 3 -------------------------------------------------------------------------
Outcome eigen_embedding()
{
  std::mt19937_64 rng(3003);
  int exact = 0, generic = 0;
  double worst_overlap = 1.0, worst_rayleigh = 0.0, worst_min_eig = 0.0;
  for (int spins : { 2, 4 }) {
    const auto basis = build_operator_basis(spins);
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXcd psi = random_kme(rng, spins);
      const auto fit = null_space_weights(quantum_correlation_matrix(basis, psi));
      if (fit.residual > 1e-8)
        continue;
      ++exact;
      const Eigen::MatrixXcd h = kron_hamiltonian(basis, fit.weights);
      const auto spectrum = eigendecompose(h, psi);
      worst_overlap = std::min(worst_overlap, spectrum.kme_overlap);
      const cplx e = psi.dot(h * psi);
      worst_rayleigh = std::max(worst_rayleigh, (h * psi - e * psi).norm());
    }
  }
  for (int spins : { 4, 8 }) {
    const auto basis = build_operator_basis(spins);
    for (int i = 0; i < 20; ++i) {
      const auto qcm = quantum_correlation_matrix(basis, random_complex_state(rng, basis.dimension()));
      const auto fit = null_space_weights(qcm);
      if (fit.residual <= 1e-8)
        continue;
      ++generic;
      Eigen::EigenSolver<Eigen::MatrixXd> general(qcm.entries, false);
      worst_min_eig = std::max(worst_min_eig, std::abs(general.eigenvalues().real().minCoeff() - fit.residual));
    }
  }
  Outcome out;
  out.pass = exact > 0 && generic > 0 && worst_overlap >= 0.999 && worst_rayleigh <= 1e-4 && worst_min_eig <= 1e-10;
  std::ostringstream d;
  d << exact << " embedded: min overlap=" << worst_overlap << " max |H psi - E psi|=" << worst_rayleigh << "; "
    << generic << " full-rank: max |residual - min eig|=" << worst_min_eig;
  out.detail = d.str();
  return out;
}

// 4 -------------------------------------------------------------------------
Outcome perturbation_order()
{
  std::mt19937_64 rng(4004);
  std::normal_distribution<double> g;
  const auto basis = build_operator_basis(4);
  const double guard = 1e-8;
  int modes = 0, good = 0;
  double worst_orth = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    Eigen::VectorXd w(basis.size()), dw(basis.size());
    for (auto& x : w)
      x = g(rng);
    for (auto& x : dw)
      x = g(rng);
    dw.normalize();
    const Eigen::MatrixXcd h = assemble_hamiltonian(basis, w);
    const Eigen::MatrixXcd dh = assemble_hamiltonian(basis, dw);
    const auto spectrum = eigendecompose(h, random_complex_state(rng, basis.dimension()));
    const auto corr = first_order_corrections(spectrum, dh, guard);
    for (Eigen::Index m = 0; m < spectrum.modes.cols(); ++m)
      worst_orth = std::max(worst_orth, std::abs(spectrum.modes.col(m).dot(corr.modes1.col(m))));

    Eigen::VectorXd err[2];
    const double eps[2] = { 1e-2, 1e-3 };
    for (int k = 0; k < 2; ++k) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> exact(h + eps[k] * dh, Eigen::EigenvaluesOnly);
      err[k] = (exact.eigenvalues() - spectrum.energies - eps[k] * corr.energies1).cwiseAbs();
    }
    const double scale = spectrum.energies.cwiseAbs().maxCoeff();
    for (Eigen::Index m = 0; m < spectrum.energies.size(); ++m) {
      double gap = std::numeric_limits<double>::infinity();
      for (Eigen::Index n = 0; n < spectrum.energies.size(); ++n)
        if (n != m)
          gap = std::min(gap, std::abs(spectrum.energies[m] - spectrum.energies[n]));
      if (gap < guard * scale)
        continue;
      ++modes;
      if (err[0][m] >= 50.0 * err[1][m])
        ++good;
    }
  }
  Outcome out;
  const double share = modes ? static_cast<double>(good) / modes : 0.0;
  out.pass = share >= 0.9 && worst_orth <= 1e-10;
  std::ostringstream d;
  d << good << "/" << modes << " modes with error ratio >= 50 (" << 100 * share
    << "%), max |<psi_m|psi_m^(1)>|=" << worst_orth;
  out.detail = d.str();
  return out;
}

// 5 -------------------------------------------------------------------------
Outcome nullspace_bound()
{
  std::mt19937_64 rng(5005);
  int held = 0, tested = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  while (tested < 100) {
    const Eigen::MatrixXd a = random_symmetric(rng, 15);
    const Eigen::MatrixXd m = a * a.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues()[1] - es.eigenvalues()[0] < 1e-6)
      continue; // smallest eigenvalue must be simple
    const double scale = std::pow(10.0, -3.0 + 2.5 * (tested % 5) / 4.0);
    const auto r = nullspace_perturbation_bound_check(m, scale * random_symmetric(rng, 15));
    ++tested;
    worst_slack = std::min(worst_slack, r.lhs - r.rhs);
    if (r.lhs >= r.rhs - 1e-10)
      ++held;
  }
  Outcome out;
  out.pass = held == tested;
  std::ostringstream d;
  d << held << "/" << tested << " hold, min lhs-rhs=" << worst_slack;
  out.detail = d.str();
  return out;
}

// 6 -------------------------------------------------------------------------
Outcome calibration_oracle()
{
  auto objective = [](double q, double p, double uq, double lambda) {
    const double kl = q * std::log(q / p) + (1 - q) * std::log((1 - q) / (1 - p));
    return -std::log(q * q + (1 - q) * (1 - q)) - lambda / uq * kl;
  };
  double worst_grid = 0.0, worst_inf = 0.0, worst_zero = 0.0;
  bool monotone = true;
  auto track = [&](const CalibrationResult& r) {
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      monotone = monotone && r.objective_trace[i] >= r.objective_trace[i - 1];
  };
  CalibrationConfig cfg;
  for (double p : { 0.1, 0.5, 0.9 })
    for (double uq : { 0.1, 1.0, 10.0 })
      for (double lambda : { 0.1, 1.0, 10.0 }) {
        double best_q = 0.0, best_f = -std::numeric_limits<double>::infinity();
        for (int k = 1; k < 100000; ++k) {
          const double q = k * 1e-5;
          const double f = objective(q, p, uq, lambda);
          if (f > best_f) {
            best_f = f;
            best_q = q;
          }
        }
        cfg.lambda = lambda;
        const auto r = calibrate_probability(p, uq, cfg);
        track(r);
        worst_grid = std::max(worst_grid, std::abs(r.value - best_q));
      }
  for (double p : { 0.05, 0.3, 0.5, 0.7, 0.95 })
    for (double uq : { 0.1, 1.0, 10.0 }) {
      cfg.lambda = 1e12;
      const auto hi = calibrate_probability(p, uq, cfg);
      track(hi);
      worst_inf = std::max(worst_inf, std::abs(hi.value - p));
      cfg.lambda = 0.0;
      const auto lo = calibrate_probability(p, uq, cfg);
      track(lo);
      worst_zero = std::max(worst_zero, std::abs(lo.value - 0.5));
    }
  Outcome out;
  out.pass = worst_grid <= 1e-3 && worst_inf <= 1e-6 && worst_zero <= 1e-6 && monotone;
  std::ostringstream d;
  d << "max |q - grid argmax|=" << worst_grid << " lambda=1e12 max |q-p|=" << worst_inf
    << " lambda=0 max |q-0.5|=" << worst_zero << " objective nondecreasing=" << (monotone ? "yes" : "no");
  out.detail = d.str();
  return out;
}

// 7 -------------------------------------------------------------------------
Outcome metric_oracles()
{
  std::mt19937_64 rng(7007);
  std::uniform_int_distribution<int> level(0, 9);
  std::bernoulli_distribution coin(0.5);
  int auroc_mismatch = 0, rac_mismatch = 0;
  double worst_aurac = 0.0;
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> u(50);
    std::vector<bool> y(50);
    for (int i = 0; i < 50; ++i) {
      u[i] = level(rng) / 10.0;
      y[i] = coin(rng);
    }
    y[0] = true;
    y[1] = false;
    const Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), 50);

    double wins = 0.0, pairs = 0.0;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j)
        if (y[i] && !y[j]) {
          pairs += 1.0;
          wins += u[i] < u[j] ? 1.0 : (u[i] == u[j] ? 0.5 : 0.0);
        }
    if (auroc(uv, y) != wins / pairs)
      ++auroc_mismatch;

    std::vector<int> idx(50);
    for (int i = 0; i < 50; ++i)
      idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return u[a] < u[b]; });
    const auto curve = rejection_accuracy_curve(uv, y);
    for (const auto& pt : curve) {
      const int keep = static_cast<int>(std::ceil(pt.fraction * 50 - 1e-9));
      int ok = 0;
      for (int k = 0; k < keep; ++k)
        ok += y[idx[k]] ? 1 : 0;
      if (pt.accuracy != static_cast<double>(ok) / keep)
        ++rac_mismatch;
    }
    double area = 0.0;
    for (std::size_t k = 1; k < curve.size(); ++k)
      area += 0.5 * (curve[k - 1].accuracy + curve[k].accuracy) * (curve[k - 1].fraction - curve[k].fraction);
    area /= curve.front().fraction - curve.back().fraction;
    worst_aurac = std::max(worst_aurac, std::abs(aurac(curve) - area));
  }

  std::uniform_real_distribution<double> uu;
  Eigen::VectorXd noise(10000);
  std::vector<bool> labels(10000);
  for (int i = 0; i < 10000; ++i) {
    noise[i] = uu(rng);
    labels[static_cast<std::size_t>(i)] = coin(rng);
  }
  const double null_auroc = auroc(noise, labels);

  Outcome out;
  out.pass = auroc_mismatch == 0 && rac_mismatch == 0 && worst_aurac <= 1e-12 && std::abs(null_auroc - 0.5) <= 0.02;
  std::ostringstream d;
  d << "AUROC mismatches=" << auroc_mismatch << " RAC mismatches=" << rac_mismatch
    << " max AURAC diff=" << worst_aurac << " null AUROC=" << null_auroc;
  out.detail = d.str();
  return out;
}

// 8 -------------------------------------------------------------------------
/// Questions with a latent difficulty: hard questions spread over more
/// distinct answers with flatter probabilities and are more often wrong.
std::vector<QuestionBundle> synthetic_corpus(std::size_t n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  std::vector<QuestionBundle> out;
  for (std::size_t q = 0; q < n; ++q) {
    const double difficulty = u(rng);
    const bool correct = u(rng) > difficulty;
    const int distinct = 1 + static_cast<int>(difficulty * 6.0 * u(rng));
    QuestionBundle b;
    b.question_id = "syn-" + std::to_string(q);
    b.prompt = "synthetic question " + std::to_string(q);
    for (int r = 0; r < 10; ++r) {
      GenerationRecord g;
      const int answer = u(rng) < 1.0 - difficulty ? 0 : static_cast<int>(u(rng) * distinct);
      g.text = "answer " + std::to_string(answer);
      g.raw_seq_prob = std::pow(u(rng), 0.5 + 3.0 * difficulty) * (answer == 0 ? 1.0 : 0.6);
      g.raw_seq_prob = std::max(g.raw_seq_prob, 1e-6);
      g.norm_seq_prob = std::nan("");
      g.is_correct = answer == 0 && correct;
      b.generations.push_back(g);
    }
    out.push_back(std::move(b));
  }
  return out;
}

Outcome lambda_sweep_sanity()
{
  RunConfig cfg;
  Pipeline pipe(cfg);
  const auto corpus = synthetic_corpus(200, 8008);
  const std::vector<double> finite = { 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0 };
  std::vector<double> lambdas = finite;
  lambdas.push_back(1e12);
  const auto sweep = pipe.sweep_lambda(corpus, lambdas);

  double best_finite = -1.0, best_lambda = 0.0;
  for (std::size_t k = 0; k < finite.size(); ++k)
    if (sweep.curve[k].auroc > best_finite) {
      best_finite = sweep.curve[k].auroc;
      best_lambda = finite[k];
    }
  const double infinite_gap = std::abs(sweep.curve.back().auroc - sweep.baseline_auroc);
  Outcome out;
  out.pass = best_finite >= sweep.baseline_auroc && infinite_gap <= 1e-6;
  std::ostringstream d;
  d << sweep.n_questions << " questions: SE_R AUROC=" << sweep.baseline_auroc << ", best finite lambda=" << best_lambda
    << " SE_R+ AUROC=" << best_finite << ", |AUROC(lambda=1e12) - baseline|=" << infinite_gap << "; curve:";
  for (const auto& pt : sweep.curve)
    d << " " << pt.lambda << ":" << pt.auroc;
  out.detail = d.str();
  return out;
}

// 9 -------------------------------------------------------------------------
Outcome performance()
{
  RunConfig cfg; // D = 256
  auto bundle = synthetic_corpus(1, 9009).front();
  validate_and_normalize(bundle);
  const auto clustering = assign_clusters(bundle, ExactMatchBackend{});
  const Eigen::VectorXd seq = bundle.normalized_probabilities();

  auto t0 = Clock::now();
  const auto basis = build_operator_basis(cfg.spins, cfg.locality);
  const auto model = build_qtn_model(seq, basis, cfg);
  const double construction = seconds_since(t0);

  const int repeats = 50;
  t0 = Clock::now();
  double sink = 0.0;
  for (int i = 0; i < repeats; ++i) {
    const Eigen::VectorXd uq = query_uq_scores(model, seq, cfg.m_adj);
    const auto cal = calibrate_bundle(bundle, clustering, uq, cfg.calibration, cfg.log_base);
    sink += cal.report.renyi_semantic_calibrated;
  }
  const double scoring = seconds_since(t0) / repeats;

  Outcome out;
  out.pass = construction <= 60.0 && scoring <= 0.1 && std::isfinite(sink);
  std::ostringstream d;
  d << "D=" << basis.dimension() << " construction=" << construction << "s scoring=" << 1e3 * scoring
    << "ms per bundle";
  out.detail = d.str();
  return out;
}

struct Criterion
{
  int number;
  const char* name;
  std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv)
{
  set_log_level(LogLevel::quiet);
  const std::vector<Criterion> criteria = {
    { 1, "worked table golden values", golden_table },
    { 2, "QCM invariants", qcm_invariants },
    { 3, "eigen-embedding of the KME", eigen_embedding },
    { 4, "first-order perturbation order", perturbation_order },
    { 5, "null-space cosine bound", nullspace_bound },
    { 6, "calibration oracle equivalence", calibration_oracle },
    { 7, "metric oracles", metric_oracles },
    { 8, "lambda sweep sanity", lambda_sweep_sanity },
    { 9, "performance at D = 256", performance },
  };

  int only = 0;
  if (argc > 1)
    only = std::atoi(argv[1]);
  bool all_pass = true;
  for (const auto& c : criteria) {
    if (only && c.number != only)
      continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d %s: %s (%s)\n", c.number, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
