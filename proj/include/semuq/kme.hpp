#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>

#include <Eigen/Core>

#include "semuq/error.hpp"

namespace semuq {

/// Uniform grid of 2^L points over [0, 1].
template <typename Scalar>
struct BasicAmplitudeGrid
{
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector points;
  int spins = 0;
  Scalar spacing = 0;

  static BasicAmplitudeGrid make(int spins)
  {
    if (spins < 1 || spins > 20)
      throw ParameterError("grid spin count must lie in [1, 20]");
    BasicAmplitudeGrid g;
    g.spins = spins;
    const Eigen::Index n = Eigen::Index{ 1 } << spins;
    g.points = Vector::LinSpaced(n, Scalar(0), Scalar(1));
    g.spacing = Scalar(1) / static_cast<Scalar>(n - 1);
    return g;
  }

  Eigen::Index size() const { return points.size(); }

  /// Index of the grid point closest to x (x must lie in [0, 1]).
  Eigen::Index nearest_index(Scalar x) const
  {
    if (!(x >= Scalar(0) && x <= Scalar(1)))
      throw ParameterError("query point must lie in [0, 1]");
    const auto idx = static_cast<Eigen::Index>(std::lround(x / spacing));
    return std::min(idx, size() - 1);
  }
};

using AmplitudeGrid = BasicAmplitudeGrid<double>;

/// Sampled kernel mean embedding on an amplitude grid.
template <typename Scalar>
struct BasicWaveFunction
{
  BasicAmplitudeGrid<Scalar> grid;
  typename BasicAmplitudeGrid<Scalar>::Vector values;
  Scalar sigma = 0;
  bool l2_normalized = false;
};

using WaveFunction = BasicWaveFunction<double>;

template <typename Scalar>
Scalar gaussian_kernel(Scalar x, Scalar xi, Scalar sigma)
{
  if (!(sigma > Scalar(0)))
    throw ParameterError("kernel bandwidth must be positive");
  const Scalar d = x - xi;
  return std::exp(-d * d / (Scalar(2) * sigma * sigma)) /
         std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * sigma * sigma);
}

enum class KmeWeighting
{
  probability, ///< each kernel weighted by its sample value
  parzen       ///< plain Parzen density estimate
};

/// values[j] = (1/R) sum_r k(samples[r]; points[j]) * w_r with w_r = samples[r]
/// (or 1 for the Parzen variant). The result is not normalized.
template <typename Derived>
BasicWaveFunction<typename Derived::Scalar> empirical_kme(
  const Eigen::MatrixBase<Derived>& samples,
  const BasicAmplitudeGrid<typename Derived::Scalar>& grid,
  typename Derived::Scalar sigma,
  KmeWeighting weighting = KmeWeighting::probability)
{
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::IsVectorAtCompileTime, "samples must be a vector");
  if (samples.size() == 0)
    throw DegenerateInputError("kernel mean embedding of an empty sample set");
  if (!(sigma > Scalar(0)))
    throw ParameterError("kernel bandwidth must be positive");
  for (Eigen::Index r = 0; r < samples.size(); ++r) {
    if (!(samples(r) >= Scalar(0) && samples(r) <= Scalar(1)))
      throw ParameterError("kernel mean embedding samples must lie in [0, 1]");
  }

  const Scalar norm = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * sigma * sigma);
  const Scalar inv_two_var = Scalar(1) / (Scalar(2) * sigma * sigma);

  BasicWaveFunction<Scalar> wf;
  wf.grid = grid;
  wf.sigma = sigma;
  wf.values.setZero(grid.size());
  for (Eigen::Index r = 0; r < samples.size(); ++r) {
    const Scalar s = samples(r);
    const Scalar w = weighting == KmeWeighting::probability ? s : Scalar(1);
    wf.values.array() += w * norm * (-(grid.points.array() - s).square() * inv_two_var).exp();
  }
  wf.values /= static_cast<Scalar>(samples.size());
  return wf;
}

template <typename Scalar>
BasicWaveFunction<Scalar> l2_normalize(BasicWaveFunction<Scalar> wf)
{
  const Scalar n = wf.values.norm();
  if (!(n > Scalar(0)))
    throw DegenerateInputError("cannot L2-normalize an all-zero wave function");
  wf.values /= n;
  wf.l2_normalized = true;
  return wf;
}

/// Writes `grid_point,value` rows.
template <typename Scalar>
void write_csv(std::ostream& out, const BasicWaveFunction<Scalar>& wf)
{
  out << "x,value\n";
  out.precision(17);
  for (Eigen::Index j = 0; j < wf.values.size(); ++j)
    out << wf.grid.points(j) << ',' << wf.values(j) << '\n';
}

} // namespace semuq
