#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semuq/config.hpp"
#include "semuq/error.hpp"
#include "semuq/kme.hpp"

namespace semuq {

using cplx = std::complex<double>;

/// Floor protecting divisions by |correction| and keeping UQ scores positive.
inline constexpr double kFeatureFloor = 1e-9;

/// A Pauli string on L spins scaled by 1/sqrt(2^L). Every such operator is a
/// phased permutation: H |x> = phase[x] |x ^ flip_mask>.
struct PauliString
{
  std::string letters; ///< one of I, X, Y, Z per site; site 0 is the leading tensor factor
  std::uint32_t flip_mask = 0;
  Eigen::VectorXcd phase;
};

/// Hilbert-Schmidt orthonormal family of local Hermitian operators.
class OperatorBasis
{
public:
  /// All Pauli strings whose support spans at most `locality + 1` adjacent
  /// sites. With locality 1 this is 3L single-site plus 9(L-1) nearest-neighbor terms.
  static OperatorBasis build(int spins, int locality = 1);

  int spins() const { return spins_; }
  int locality() const { return locality_; }
  Eigen::Index dimension() const { return Eigen::Index{ 1 } << spins_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(terms_.size()); }
  const PauliString& term(Eigen::Index k) const { return terms_.at(static_cast<std::size_t>(k)); }

  Eigen::MatrixXcd dense(Eigen::Index k) const;

  /// H_k v without forming the dense operator.
  Eigen::VectorXcd apply(Eigen::Index k, const Eigen::Ref<const Eigen::VectorXcd>& v) const;

private:
  int spins_ = 0;
  int locality_ = 0;
  std::vector<PauliString> terms_;
};

inline OperatorBasis build_operator_basis(int spins, int locality = 1)
{
  return OperatorBasis::build(spins, locality);
}

/// Quantum correlation matrix of a basis against a unit state.
struct QcmMatrix
{
  Eigen::MatrixXd entries;
  Eigen::VectorXcd psi;
  /// Largest imaginary part seen before the entries were taken real.
  double imaginary_mass = 0.0;
};

/// entries(i, j) = 0.5 <psi|{H_i, H_j}|psi> - <psi|H_i|psi> <psi|H_j|psi>
QcmMatrix quantum_correlation_matrix(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXcd>& psi);
QcmMatrix quantum_correlation_matrix(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& psi);

struct NullSpaceFit
{
  Eigen::VectorXd weights; ///< unit-norm, largest-magnitude entry positive
  double residual = 0.0;   ///< smallest QCM eigenvalue
  bool approximate = false; ///< residual exceeded the tolerance
  Eigen::VectorXd qcm_eigenvalues;
};

/// Eigenvector of the smallest QCM eigenvalue. When that eigenvalue exceeds
/// `tol` the fit is flagged approximate; it is still the best local fit.
NullSpaceFit null_space_weights(const QcmMatrix& qcm, double tol = 1e-8);
NullSpaceFit null_space_weights(const Eigen::Ref<const Eigen::MatrixXd>& qcm, double tol = 1e-8);

/// H = sum_k w_k H_k.
Eigen::MatrixXcd assemble_hamiltonian(const OperatorBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& weights);

struct Spectrum
{
  Eigen::MatrixXcd hamiltonian;
  Eigen::VectorXd energies; ///< ascending
  Eigen::MatrixXcd modes;   ///< orthonormal eigenvectors as columns
  Eigen::Index kme_mode_index = 0;
  double kme_overlap = 0.0; ///< |<psi_{m*}, psi_hat>|
};

/// Hermitian eigendecomposition with ascending energies. Each eigenvector is
/// phased so its largest-magnitude entry is real and positive. Inside the
/// (possibly degenerate) eigenspace that carries most of `psi_hat`, the basis
/// is rotated so one vector is the projection of `psi_hat`; that vector is
/// the KME mode.
Spectrum eigendecompose(const Eigen::Ref<const Eigen::MatrixXcd>& hamiltonian,
                        const Eigen::Ref<const Eigen::VectorXcd>& psi_hat,
                        double degeneracy_tol = 1e-8);

struct FirstOrderCorrections
{
  Eigen::VectorXd energies1; ///< <psi_m|dH|psi_m>
  Eigen::MatrixXcd modes1;   ///< column m is the first-order correction of mode m
  Eigen::Index dropped_terms = 0; ///< near-degenerate pairs left out of the sums
};

/// Nondegenerate first-order perturbation theory. Pairs with
/// |E_m - E_n| < tau * max|E| are left out of the eigenvector sums.
FirstOrderCorrections first_order_corrections(const Spectrum& spectrum,
                                              const Eigen::Ref<const Eigen::MatrixXcd>& delta_h,
                                              double tau = 1e-8);
FirstOrderCorrections first_order_corrections(const Spectrum& spectrum,
                                              const OperatorBasis& basis,
                                              const Eigen::Ref<const Eigen::VectorXd>& delta_w,
                                              double tau = 1e-8);

Eigen::VectorXd make_perturbation(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                  double epsilon,
                                  PerturbationDirection direction,
                                  std::uint64_t seed = 0);

/// Second-order central differences, one-sided second-order stencils at
/// both ends. Needs at least four points.
Eigen::VectorXd grid_laplacian(const Eigen::Ref<const Eigen::VectorXd>& values, double spacing);

struct UqFeatureMatrix
{
  Eigen::MatrixXd features; ///< row = mode, column = grid point
  Eigen::VectorXd energy_offsets;
  Eigen::VectorXd energies1; ///< perturbation-theory energy corrections (diagnostic)
  AmplitudeGrid grid;
  double sigma = 0.0;
  Eigen::VectorXd perturbation;
  std::vector<bool> zero_rows; ///< modes whose correction vanished identically
};

/// Row m: q(x) = (sigma^2 / 2) Lap|c_m|(x) / max(|c_m(x)|, floor), shifted by
/// -min_x q so that every row has minimum zero.
template <typename Derived>
UqFeatureMatrix uncertainty_features(const Eigen::MatrixBase<Derived>& modes1,
                                     double sigma,
                                     const AmplitudeGrid& grid)
{
  if (modes1.rows() != grid.size())
    throw ParameterError("mode corrections and grid disagree in length");
  if (!(sigma > 0.0))
    throw ParameterError("sigma must be positive");
  const Eigen::Index points = grid.size();
  const Eigen::Index modes = modes1.cols();

  UqFeatureMatrix out;
  out.grid = grid;
  out.sigma = sigma;
  out.features.resize(modes, points);
  out.energy_offsets.resize(modes);
  out.zero_rows.assign(static_cast<std::size_t>(modes), false);

  const double scale = 0.5 * sigma * sigma;
  for (Eigen::Index m = 0; m < modes; ++m) {
    const Eigen::VectorXd magnitude = modes1.col(m).cwiseAbs().template cast<double>();
    out.zero_rows[static_cast<std::size_t>(m)] = magnitude.maxCoeff() == 0.0;
    const Eigen::VectorXd lap = grid_laplacian(magnitude, grid.spacing);
    const Eigen::VectorXd q = scale * lap.cwiseQuotient(magnitude.cwiseMax(kFeatureFloor));
    out.energy_offsets[m] = -q.minCoeff();
    out.features.row(m) = (q.array() + out.energy_offsets[m]).matrix().transpose();
  }
  return out;
}

/// Mean feature value at the grid point nearest `x_query` over the `m_adj`
/// modes around `kme_mode_index`, plus the floor.
double uq_score(const UqFeatureMatrix& features, Eigen::Index kme_mode_index, double x_query, int m_adj);
double uq_score(const UqFeatureMatrix& features, const Spectrum& spectrum, double x_query, int m_adj);

/// First mode of the `m_adj`-wide window used by uq_score.
Eigen::Index adjacent_window_start(Eigen::Index kme_mode_index, Eigen::Index modes, int m_adj);

struct BoundCheck
{
  double lhs = 1.0; ///< <w_0 | normalized first-order corrected w_0>
  double rhs = 1.0; ///< 1 - 0.5 * sum_m (<w_m|dM|w_0> / (l_m - l_0))^2
  bool holds = true;
};

/// Cosine-similarity lower bound for the smallest eigenvector of a symmetric
/// PSD matrix under a symmetric perturbation.
BoundCheck nullspace_perturbation_bound_check(const Eigen::Ref<const Eigen::MatrixXd>& qcm,
                                              const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                              double gap_tol = 1e-8);
BoundCheck nullspace_perturbation_bound_check(const QcmMatrix& qcm,
                                              const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                              double gap_tol = 1e-8);

} // namespace semuq
