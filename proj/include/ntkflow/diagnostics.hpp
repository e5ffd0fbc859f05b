#pragma once

#include <span>

#include "ntkflow/network.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

/// sqrt(lambda0 / 2): the friction/decay scale of the heavy-ball monitor.
/// Deliberately distinct from rate_alpha, the polynomial exponent of the
/// time-weighted nag monitor; the two are never interchangeable.
double friction_half(double lambda0);

/// V = 0.5 d^T K d + 0.5 | sqrt(lambda0/2) d + d' |^2.
/// Along a heavy-ball error flow with friction sqrt(2 lambda0) and
/// lambda_min(K) >= lambda0, V decays at least like exp(-sqrt(lambda0/2) t).
double hb_lyapunov(const Vector& delta, const Vector& delta_dot, const Matrix& K, double lambda0);

/// V(t) = t^alpha Lhat + ((2 gamma - alpha)^2 t^(alpha-2) / 8) | d + 2t/(2 gamma - alpha) d' |^2.
double nag_lyapunov(double lhat, const Vector& delta, const Vector& delta_dot, double t,
                    double rate_alpha, double gamma);
double nag_lyapunov(const Vector& delta, const Vector& delta_dot, const Matrix& K, double t,
                    double rate_alpha, double gamma);

/// E = loss + 0.5 |velocity|^2; non-increasing along the damped flows.
double polyak_energy(double loss, const Matrix& w_dot);
double polyak_energy(double loss, const Vector& delta_dot);

struct RadiusBounds {
  double kernel_radius = 0;  // weight ball inside which the kernel stays close
  double drift_bound = 0;    // guaranteed bound on max_r |w_r(t) - w_r(0)|
  bool scaling_only = true;  // absolute constants are placeholders; trust the scaling
};

/// Heavy-ball flavor: kernel_radius = c delta lambda0 / n^2,
/// drift_bound = sqrt(256 n lhat0 / (9 m lambda0^3)).
RadiusBounds radius_bounds(Index n, double delta, double lambda0, Index m, double lhat0,
                           double c = 1.0);

/// nag flavor (requires rate_alpha > 4, eps > 0):
/// drift_bound(eps) = (2 eps^(2 - alpha/2) / (alpha - 4))
///                    * sqrt(n L0 / (m (lambda0/2)^(alpha/2) (gamma - alpha/2 + 1)^2))
///                    + sqrt(2 L0) eps,  with the front constant set to 1.
RadiusBounds radius_bounds_nag(Index n, double delta, double lambda0, Index m, double L0,
                               double rate_alpha, double gamma, double eps, double c = 1.0);

enum class WidthVariant { gd, heavy_ball, nag_sc, nag };

/// Scaling-only width requirement (constant 1):
///   gd / heavy_ball / nag_sc: n^6 / (delta^3 lambda0^4)
///   nag: n^(5 alpha/2 - 4) / (delta^(3 alpha/2 - 3) lambda0^(3 alpha/2 - 2)),
///        rate_alpha > 4 required; continuous with the gd expression as alpha -> 4.
double width_requirement(WidthVariant variant, Index n, double delta, double lambda0,
                         double rate_alpha = 0.0);

/// H_newton = sum_r J_r (J_r^T J_r + ridge I)^{-1} J_r^T (n x n). With the
/// ridge -> 0 it is a sum of projectors and lambda_min(H_newton) >=
/// (m/n) lambda_min(H).
Matrix newton_kernel(const NetworkState& net, const Dataset& data, double ridge = 0.0);

enum class FitMode { linear_time, log_time };

struct RateFit {
  double slope = 0;
  double intercept = 0;
  double window = 0;    // fraction of the trace the fit used
  double residual = 0;  // RMS residual of the least-squares fit
  std::size_t used = 0;
  bool clipped = false;  // some L == 0 were clipped to 1e-300
};

/// Least-squares slope of ln L against t (linear_time) or ln t (log_time)
/// over the trailing `window` fraction of the trace. With envelope = true the
/// fit uses only local maxima (strict max of a centered 5-sample window), for
/// oscillatory traces. log_time drops records with t <= 0. Throws
/// std::invalid_argument when fewer than 10 usable samples remain.
RateFit fit_rate(std::span<const double> t, std::span<const double> L, FitMode mode,
                 double window = 0.5, bool envelope = false);

}  // namespace ntkflow
