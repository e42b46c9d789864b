#include "semuq/qtn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Householder>
#include <Eigen/QR>

namespace semuq {

namespace {

constexpr char kPauli[] = { 'X', 'Y', 'Z' };
constexpr char kPauliWithIdentity[] = { 'I', 'X', 'Y', 'Z' };

PauliString make_pauli_string(const std::string& letters)
{
  const int spins = static_cast<int>(letters.size());
  const Eigen::Index dim = Eigen::Index{ 1 } << spins;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  PauliString p;
  p.letters = letters;
  for (int s = 0; s < spins; ++s) {
    if (letters[static_cast<std::size_t>(s)] == 'X' || letters[static_cast<std::size_t>(s)] == 'Y')
      p.flip_mask |= std::uint32_t{ 1 } << (spins - 1 - s);
  }
  p.phase.resize(dim);
  for (Eigen::Index x = 0; x < dim; ++x) {
    cplx ph{ scale, 0.0 };
    for (int s = 0; s < spins; ++s) {
      const bool bit = (x >> (spins - 1 - s)) & 1;
      switch (letters[static_cast<std::size_t>(s)]) {
        case 'Y': // Y|0> = i|1>, Y|1> = -i|0>
          ph *= bit ? cplx{ 0.0, -1.0 } : cplx{ 0.0, 1.0 };
          break;
        case 'Z':
          if (bit)
            ph = -ph;
          break;
        default:
          break;
      }
    }
    p.phase[x] = ph;
  }
  return p;
}

// Appends every string on [first, last] whose end sites are non-identity.
void enumerate_span(int spins, int first, int last, std::vector<PauliString>& out)
{
  std::string letters(static_cast<std::size_t>(spins), 'I');
  const int inner = std::max(0, last - first - 1);
  const int inner_combos = 1 << (2 * inner);
  const int end_combos = first == last ? 3 : 9;
  for (int e = 0; e < end_combos; ++e) {
    letters[static_cast<std::size_t>(first)] = kPauli[first == last ? e : e / 3];
    if (first != last)
      letters[static_cast<std::size_t>(last)] = kPauli[e % 3];
    for (int c = 0; c < inner_combos; ++c) {
      int code = c;
      for (int s = last - 1; s > first; --s) {
        letters[static_cast<std::size_t>(s)] = kPauliWithIdentity[code & 3];
        code >>= 2;
      }
      out.push_back(make_pauli_string(letters));
    }
  }
}

void fix_phase(Eigen::Ref<Eigen::VectorXcd> v)
{
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  const double mag = std::abs(v[idx]);
  if (mag > 0.0)
    v *= std::conj(v[idx]) / mag;
}

} // namespace

OperatorBasis OperatorBasis::build(int spins, int locality)
{
  if (spins < 2 || spins > 16)
    throw ParameterError("operator basis needs between 2 and 16 spins");
  if (locality < 0 || locality > spins - 1)
    throw ParameterError("locality " + std::to_string(locality) + " exceeds spins - 1 = " +
                         std::to_string(spins - 1));
  OperatorBasis basis;
  basis.spins_ = spins;
  basis.locality_ = locality;
  for (int span = 0; span <= locality; ++span)
    for (int first = 0; first + span < spins; ++first)
      enumerate_span(spins, first, first + span, basis.terms_);
  return basis;
}

Eigen::MatrixXcd OperatorBasis::dense(Eigen::Index k) const
{
  const auto& t = term(k);
  const Eigen::Index dim = dimension();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index x = 0; x < dim; ++x)
    h(static_cast<Eigen::Index>(x ^ t.flip_mask), x) = t.phase[x];
  return h;
}

Eigen::VectorXcd OperatorBasis::apply(Eigen::Index k, const Eigen::Ref<const Eigen::VectorXcd>& v) const
{
  const auto& t = term(k);
  const Eigen::Index dim = dimension();
  if (v.size() != dim)
    throw ParameterError("vector length does not match the operator dimension");
  Eigen::VectorXcd out(dim);
  for (Eigen::Index x = 0; x < dim; ++x)
    out[static_cast<Eigen::Index>(x ^ t.flip_mask)] = t.phase[x] * v[x];
  return out;
}

QcmMatrix quantum_correlation_matrix(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXcd>& psi)
{
  if (psi.size() != basis.dimension())
    throw ParameterError("state length does not match the operator basis dimension");
  if (std::abs(psi.norm() - 1.0) > 1e-10)
    throw PreconditionError("QCM requires a unit-norm state (norm = " + std::to_string(psi.norm()) + ")");

  const Eigen::Index T = basis.size();
  Eigen::MatrixXcd applied(basis.dimension(), T);
  for (Eigen::Index k = 0; k < T; ++k)
    applied.col(k) = basis.apply(k, psi);

  const Eigen::VectorXcd expectation = applied.adjoint() * psi;
  const Eigen::MatrixXcd gram = applied.adjoint() * applied;
  const Eigen::MatrixXcd full =
    0.5 * (gram + gram.transpose()) - expectation.conjugate() * expectation.adjoint();

  QcmMatrix out;
  out.psi = psi;
  out.imaginary_mass = full.imag().cwiseAbs().maxCoeff();
  out.entries = full.real();
  return out;
}

QcmMatrix quantum_correlation_matrix(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& psi)
{
  const Eigen::VectorXcd c = psi.cast<cplx>();
  return quantum_correlation_matrix(basis, c);
}

NullSpaceFit null_space_weights(const Eigen::Ref<const Eigen::MatrixXd>& qcm, double tol)
{
  if (qcm.rows() != qcm.cols() || qcm.rows() == 0)
    throw ParameterError("QCM must be a nonempty square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(qcm);
  if (solver.info() != Eigen::Success)
    throw NumericalError("QCM eigensolve did not converge");

  NullSpaceFit fit;
  fit.qcm_eigenvalues = solver.eigenvalues();
  fit.weights = solver.eigenvectors().col(0);
  Eigen::Index idx = 0;
  fit.weights.cwiseAbs().maxCoeff(&idx);
  if (fit.weights[idx] < 0.0)
    fit.weights = -fit.weights;
  fit.residual = fit.qcm_eigenvalues[0];
  fit.approximate = fit.residual > tol;
  return fit;
}

NullSpaceFit null_space_weights(const QcmMatrix& qcm, double tol)
{
  return null_space_weights(qcm.entries, tol);
}

Eigen::MatrixXcd assemble_hamiltonian(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& weights)
{
  if (weights.size() != basis.size())
    throw ParameterError("weight vector has " + std::to_string(weights.size()) + " entries, basis has " +
                         std::to_string(basis.size()));
  const Eigen::Index dim = basis.dimension();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index k = 0; k < basis.size(); ++k) {
    if (weights[k] == 0.0)
      continue;
    const auto& t = basis.term(k);
    for (Eigen::Index x = 0; x < dim; ++x)
      h(static_cast<Eigen::Index>(x ^ t.flip_mask), x) += weights[k] * t.phase[x];
  }
  return h;
}

Spectrum eigendecompose(const Eigen::Ref<const Eigen::MatrixXcd>& hamiltonian,
                        const Eigen::Ref<const Eigen::VectorXcd>& psi_hat,
                        double degeneracy_tol)
{
  const Eigen::Index dim = hamiltonian.rows();
  if (hamiltonian.cols() != dim || dim == 0)
    throw ParameterError("Hamiltonian must be a nonempty square matrix");
  if (psi_hat.size() != dim)
    throw ParameterError("reference state length does not match the Hamiltonian");
  const double hmax = std::max(1.0, hamiltonian.cwiseAbs().maxCoeff());
  if ((hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * hmax)
    throw PreconditionError("Hamiltonian is not Hermitian");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(hamiltonian);
  if (solver.info() != Eigen::Success)
    throw NumericalError("Hamiltonian eigensolve did not converge");

  Spectrum s;
  s.hamiltonian = hamiltonian;
  s.energies = solver.eigenvalues();
  s.modes = solver.eigenvectors();
  for (Eigen::Index m = 0; m < dim; ++m)
    fix_phase(s.modes.col(m));

  const double guard = degeneracy_tol * s.energies.cwiseAbs().maxCoeff();
  const Eigen::VectorXcd overlap = s.modes.adjoint() * psi_hat;

  // Find the eigenspace carrying the largest share of psi_hat.
  Eigen::Index best_first = 0;
  Eigen::Index best_count = 1;
  double best_weight = -1.0;
  for (Eigen::Index first = 0; first < dim;) {
    Eigen::Index last = first;
    while (last + 1 < dim && s.energies[last + 1] - s.energies[last] <= guard)
      ++last;
    const Eigen::Index count = last - first + 1;
    const double weight = overlap.segment(first, count).norm();
    if (weight > best_weight) {
      best_weight = weight;
      best_first = first;
      best_count = count;
    }
    first = last + 1;
  }

  if (best_count > 1 && best_weight > 0.0) {
    const Eigen::VectorXcd direction = overlap.segment(best_first, best_count) / best_weight;
    const Eigen::MatrixXcd column = direction;
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(column);
    const Eigen::MatrixXcd rotation = qr.householderQ() * Eigen::MatrixXcd::Identity(best_count, best_count);
    const Eigen::MatrixXcd block = s.modes.middleCols(best_first, best_count) * rotation;
    s.modes.middleCols(best_first, best_count) = block;
    for (Eigen::Index m = best_first; m < best_first + best_count; ++m)
      fix_phase(s.modes.col(m));
  }

  s.kme_mode_index = best_first;
  s.kme_overlap = std::abs(s.modes.col(best_first).dot(psi_hat));
  return s;
}

FirstOrderCorrections first_order_corrections(const Spectrum& spectrum,
                                              const Eigen::Ref<const Eigen::MatrixXcd>& delta_h,
                                              double tau)
{
  const Eigen::Index dim = spectrum.energies.size();
  if (delta_h.rows() != dim || delta_h.cols() != dim)
    throw ParameterError("perturbation size does not match the spectrum");
  const double scale = spectrum.energies.cwiseAbs().maxCoeff();
  const double guard = tau * scale;
  const double range = spectrum.energies[dim - 1] - spectrum.energies[0];
  if (dim > 1 && (!(scale > 0.0) || range < guard))
    throw DegeneracyError("spectrum is fully degenerate: energy range " + std::to_string(range) +
                          " is below the guard " + std::to_string(guard));

  const Eigen::MatrixXcd coupling = spectrum.modes.adjoint() * (delta_h * spectrum.modes);

  FirstOrderCorrections out;
  out.energies1 = coupling.diagonal().real();
  Eigen::MatrixXcd coeff = Eigen::MatrixXcd::Zero(dim, dim);
  for (Eigen::Index m = 0; m < dim; ++m) {
    for (Eigen::Index n = 0; n < dim; ++n) {
      if (n == m)
        continue;
      const double gap = spectrum.energies[m] - spectrum.energies[n];
      if (std::abs(gap) < guard) {
        ++out.dropped_terms;
        continue;
      }
      coeff(n, m) = coupling(n, m) / gap;
    }
  }
  out.modes1 = spectrum.modes * coeff;
  return out;
}

FirstOrderCorrections first_order_corrections(const Spectrum& spectrum,
                                              const OperatorBasis& basis,
                                              const Eigen::Ref<const Eigen::VectorXd>& delta_w,
                                              double tau)
{
  return first_order_corrections(spectrum, assemble_hamiltonian(basis, delta_w), tau);
}

Eigen::VectorXd make_perturbation(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                  double epsilon,
                                  PerturbationDirection direction,
                                  std::uint64_t seed)
{
  const Eigen::Index T = weights.size();
  if (T == 0)
    throw ParameterError("empty weight vector");
  Eigen::VectorXd dir;
  switch (direction) {
    case PerturbationDirection::uniform:
      dir = Eigen::VectorXd::Ones(T);
      break;
    case PerturbationDirection::along_weights:
      dir = weights;
      break;
    case PerturbationDirection::random: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> normal;
      dir.resize(T);
      for (Eigen::Index k = 0; k < T; ++k)
        dir[k] = normal(rng);
      break;
    }
  }
  const double n = dir.norm();
  if (!(n > 0.0))
    throw DegenerateInputError("perturbation direction has zero norm");
  return epsilon * dir / n;
}

Eigen::VectorXd grid_laplacian(const Eigen::Ref<const Eigen::VectorXd>& v, double spacing)
{
  const Eigen::Index n = v.size();
  if (n < 4)
    throw ParameterError("grid Laplacian needs at least four points");
  const double inv_h2 = 1.0 / (spacing * spacing);
  Eigen::VectorXd lap(n);
  lap.segment(1, n - 2) = (v.head(n - 2) - 2.0 * v.segment(1, n - 2) + v.tail(n - 2)) * inv_h2;
  lap[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) * inv_h2;
  lap[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) * inv_h2;
  return lap;
}

Eigen::Index adjacent_window_start(Eigen::Index kme_mode_index, Eigen::Index modes, int m_adj)
{
  if (m_adj < 1 || m_adj > modes)
    throw ParameterError("m_adj must lie in [1, number of modes]");
  const Eigen::Index start = kme_mode_index - m_adj / 2;
  return std::clamp<Eigen::Index>(start, 0, modes - m_adj);
}

double uq_score(const UqFeatureMatrix& features, Eigen::Index kme_mode_index, double x_query, int m_adj)
{
  const Eigen::Index modes = features.features.rows();
  if (kme_mode_index < 0 || kme_mode_index >= modes)
    throw ParameterError("KME mode index out of range");
  const Eigen::Index point = features.grid.nearest_index(x_query);
  const Eigen::Index start = adjacent_window_start(kme_mode_index, modes, m_adj);
  return features.features.col(point).segment(start, m_adj).mean() + kFeatureFloor;
}

double uq_score(const UqFeatureMatrix& features, const Spectrum& spectrum, double x_query, int m_adj)
{
  return uq_score(features, spectrum.kme_mode_index, x_query, m_adj);
}

BoundCheck nullspace_perturbation_bound_check(const Eigen::Ref<const Eigen::MatrixXd>& qcm,
                                              const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                              double gap_tol)
{
  const Eigen::Index T = qcm.rows();
  if (qcm.cols() != T || delta.rows() != T || delta.cols() != T || T < 2)
    throw ParameterError("bound check needs square matrices of equal size (at least 2x2)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(qcm);
  if (solver.info() != Eigen::Success)
    throw NumericalError("QCM eigensolve did not converge");
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  const Eigen::MatrixXd& w = solver.eigenvectors();
  const double guard = gap_tol * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda[1] - lambda[0] <= guard)
    throw DegeneracyError("smallest QCM eigenvalue is not simple (gap " + std::to_string(lambda[1] - lambda[0]) + ")");

  const Eigen::VectorXd coupling = w.transpose() * (delta * w.col(0));
  Eigen::VectorXd correction = Eigen::VectorXd::Zero(T);
  double sum_sq = 0.0;
  for (Eigen::Index m = 1; m < T; ++m) {
    const double c = coupling[m] / (lambda[0] - lambda[m]);
    correction += c * w.col(m);
    sum_sq += c * c;
  }
  const Eigen::VectorXd corrected = (w.col(0) + correction).normalized();

  BoundCheck out;
  out.lhs = w.col(0).dot(corrected);
  out.rhs = 1.0 - 0.5 * sum_sq;
  out.holds = out.lhs >= out.rhs - 1e-10;
  return out;
}

BoundCheck nullspace_perturbation_bound_check(const QcmMatrix& qcm,
                                              const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                              double gap_tol)
{
  return nullspace_perturbation_bound_check(qcm.entries, delta, gap_tol);
}

} // namespace semuq
