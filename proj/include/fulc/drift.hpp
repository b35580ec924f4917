#pragma once

#include <cmath>
#include <optional>

#include "fulc/cells.hpp"

namespace fulc {

// Scalar FastGRNN with no input or recurrent weights, a saturated update gate (z = logistic(b_z))
// and a candidate pinned at tanh(b_h). With nu = 1 each step adds ~tanh(b_h) to the state, so the
// state ramps up until the slow z^t decay catches it.
struct AdversarialCell {
  double gate_bias = 10.0;
  double candidate_bias = 3.0;
  double zeta_raw = -40.0;  // zeta ~ 0
  double nu_raw = 40.0;     // nu == 1 in double precision

  template <typename Scalar = double>
  FastGrnnParams<Scalar> fastgrnn() const {
    auto p = FastGrnnParams<Scalar>::zeros(1, 1);
    p.b_z(0) = Scalar(gate_bias);
    p.b_h(0) = Scalar(candidate_bias);
    p.zeta_raw = Scalar(zeta_raw);
    p.nu_raw = Scalar(nu_raw);
    return p;
  }

  template <typename Scalar = double>
  ComfiParams<Scalar> comfi(double gamma, double lambda = 0.0) const {
    return {fastgrnn<Scalar>(), Scalar(gamma), Scalar(lambda)};
  }

  double z() const { return logistic(gate_bias); }
  double nu() const { return logistic(nu_raw); }
  double candidate() const { return std::tanh(candidate_bias); }

  // Exact unfiltered state after `steps` steps from h0: nu tanh(b_h) (1 - z^T)/(1 - z) + z^T h0.
  double fastgrnn_state(long steps, double h0 = 0.0) const {
    const double c = logistic(zeta_raw) * (1.0 - z()) + nu();
    const double zt = std::pow(z(), double(steps));
    return c * candidate() * (1.0 - zt) / (1.0 - z()) + zt * h0;
  }

  // (gamma nu |tanh(b_h)| + (1 - gamma)|lambda|) / (1 - gamma) + |h0|, valid for gamma in (0, 1).
  double comfi_bound(double gamma, double lambda = 0.0, double h0 = 0.0) const {
    return (gamma * nu() * std::abs(candidate()) + (1.0 - gamma) * std::abs(lambda)) / (1.0 - gamma) + std::abs(h0);
  }
};

// Bound on sup_t |h_comfi,t| for any Comfi cell with |gamma| < 1, from |tanh| <= 1 and z in [0, 1]:
// (|gamma| (zeta + nu) + |1 - gamma| |lambda|) / (1 - |gamma|) + max|h0|. Empty when |gamma| >= 1.
template <typename Scalar>
std::optional<double> comfi_state_bound(const ComfiParams<Scalar>& p, double h0_max_abs = 0.0) {
  const double g = std::abs(double(p.gamma));
  if (g >= 1.0) return std::nullopt;
  const double gain = double(p.base.zeta()) + double(p.base.nu());
  return (g * gain + std::abs(1.0 - double(p.gamma)) * std::abs(double(p.lambda))) / (1.0 - g) + h0_max_abs;
}

// Least-squares slope of `values` against their index.
inline double trend_slope(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean_t = (n - 1) / 2.0;
  double mean_v = 0.0;
  for (double v : values) mean_v += v;
  mean_v /= double(n);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    num += (double(t) - mean_t) * (values[t] - mean_v);
    den += (double(t) - mean_t) * (double(t) - mean_t);
  }
  return num / den;
}

inline double max_abs(const std::vector<double>& values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace fulc
