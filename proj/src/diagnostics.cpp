#include "ntkflow/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ntkflow/kernel.hpp"

namespace ntkflow {

double friction_half(double lambda0) {
  if (lambda0 < 0) throw std::invalid_argument("friction_half: lambda0 must be nonnegative");
  return std::sqrt(lambda0 / 2.0);
}

double hb_lyapunov(const Vector& delta, const Vector& delta_dot, const Matrix& K,
                   double lambda0) {
  if (delta.size() != delta_dot.size())
    throw std::invalid_argument("hb_lyapunov: dimension mismatch");
  const Vector mix = friction_half(lambda0) * delta + delta_dot;
  return pseudo_loss(delta, K) + 0.5 * mix.squaredNorm();
}

double nag_lyapunov(double lhat, const Vector& delta, const Vector& delta_dot, double t,
                    double rate_alpha, double gamma) {
  if (delta.size() != delta_dot.size())
    throw std::invalid_argument("nag_lyapunov: dimension mismatch");
  if (t <= 0) throw std::invalid_argument("nag_lyapunov: t must be positive");
  const double spread = 2.0 * gamma - rate_alpha;
  if (spread == 0) throw std::invalid_argument("nag_lyapunov: alpha = 2 gamma is singular");
  const Vector mix = delta + (2.0 * t / spread) * delta_dot;
  return std::pow(t, rate_alpha) * lhat +
         (spread * spread * std::pow(t, rate_alpha - 2.0) / 8.0) * mix.squaredNorm();
}

double nag_lyapunov(const Vector& delta, const Vector& delta_dot, const Matrix& K, double t,
                    double rate_alpha, double gamma) {
  return nag_lyapunov(pseudo_loss(delta, K), delta, delta_dot, t, rate_alpha, gamma);
}

double polyak_energy(double loss, const Matrix& w_dot) {
  return loss + 0.5 * w_dot.squaredNorm();
}

double polyak_energy(double loss, const Vector& delta_dot) {
  return loss + 0.5 * delta_dot.squaredNorm();
}

RadiusBounds radius_bounds(Index n, double delta, double lambda0, Index m, double lhat0,
                           double c) {
  if (n < 1 || m < 1 || !(delta > 0) || !(lambda0 > 0) || lhat0 < 0)
    throw std::invalid_argument("radius_bounds: invalid inputs");
  RadiusBounds b;
  b.kernel_radius = c * delta * lambda0 / (static_cast<double>(n) * static_cast<double>(n));
  b.drift_bound = std::sqrt(256.0 * static_cast<double>(n) * lhat0 /
                            (9.0 * static_cast<double>(m) * std::pow(lambda0, 3)));
  b.scaling_only = true;
  return b;
}

RadiusBounds radius_bounds_nag(Index n, double delta, double lambda0, Index m, double L0,
                               double rate_alpha, double gamma, double eps, double c) {
  if (n < 1 || m < 1 || !(delta > 0) || !(lambda0 > 0) || L0 < 0)
    throw std::invalid_argument("radius_bounds_nag: invalid inputs");
  if (!(rate_alpha > 4)) throw std::invalid_argument("radius_bounds_nag: needs rate_alpha > 4");
  if (!(eps > 0)) throw std::invalid_argument("radius_bounds_nag: needs eps > 0");
  RadiusBounds b;
  b.kernel_radius = c * delta * lambda0 / (static_cast<double>(n) * static_cast<double>(n));
  const double tail_gamma = gamma - rate_alpha / 2.0 + 1.0;
  // Front constant C(alpha, gamma) is a placeholder 1: scaling claims only.
  b.drift_bound = (2.0 * std::pow(eps, 2.0 - rate_alpha / 2.0) / (rate_alpha - 4.0)) *
                      std::sqrt(static_cast<double>(n) * L0 /
                                (static_cast<double>(m) * std::pow(lambda0 / 2.0, rate_alpha / 2.0) *
                                 tail_gamma * tail_gamma)) +
                  std::sqrt(2.0 * L0) * eps;
  b.scaling_only = true;
  return b;
}

double width_requirement(WidthVariant variant, Index n, double delta, double lambda0,
                         double rate_alpha) {
  if (n < 1 || !(delta > 0) || delta > 1 || !(lambda0 > 0))
    throw std::invalid_argument("width_requirement: invalid inputs");
  const double nn = static_cast<double>(n);
  switch (variant) {
    case WidthVariant::gd:
    case WidthVariant::heavy_ball:
    case WidthVariant::nag_sc:
      return std::pow(nn, 6) / (std::pow(delta, 3) * std::pow(lambda0, 4));
    case WidthVariant::nag: {
      if (!(rate_alpha > 4))
        throw std::invalid_argument("width_requirement: nag needs rate_alpha > 4");
      return std::pow(nn, 2.5 * rate_alpha - 4.0) /
             (std::pow(delta, 1.5 * rate_alpha - 3.0) * std::pow(lambda0, 1.5 * rate_alpha - 2.0));
    }
  }
  throw std::invalid_argument("width_requirement: unknown variant");
}

Matrix newton_kernel(const NetworkState& net, const Dataset& data, double ridge) {
  const Index n = data.n(), p = data.p(), m = net.m();
  if (ridge < 0) throw std::invalid_argument("newton_kernel: ridge must be nonnegative");
  Matrix H = Matrix::Zero(n, n);
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<Index> active;
  active.reserve(n);
  // Sequential over neurons: the accumulation order is fixed.
  for (Index r = 0; r < m; ++r) {
    active.clear();
    for (Index i = 0; i < n; ++i)
      if (data.X.row(i).dot(net.W.row(r)) >= 0.0) active.push_back(i);
    if (active.empty()) continue;
    const Index k = static_cast<Index>(active.size());
    Matrix B(k, p);
    for (Index s = 0; s < k; ++s) B.row(s) = data.X.row(active[s]);
    Matrix M = inv_m * (B.transpose() * B);
    M.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    const double lmax = es.eigenvalues().maxCoeff();
    const double cut = std::max(lmax, 1.0) * 1e-14;  // pseudo-inverse at ridge -> 0
    Vector inv = es.eigenvalues();
    for (Index j = 0; j < p; ++j) inv[j] = inv[j] > cut ? 1.0 / inv[j] : 0.0;
    const Matrix E =
        B * (es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose()) * B.transpose();
    for (Index s = 0; s < k; ++s)
      for (Index u = 0; u < k; ++u) H(active[s], active[u]) += inv_m * E(s, u);
  }
  return H;
}

RateFit fit_rate(std::span<const double> t, std::span<const double> L, FitMode mode,
                 double window, bool envelope) {
  if (t.size() != L.size()) throw std::invalid_argument("fit_rate: length mismatch");
  if (!(window > 0) || window > 1) throw std::invalid_argument("fit_rate: window in (0, 1]");

  // Usable samples first (log_time needs t > 0), then the trailing window.
  std::vector<std::size_t> usable;
  usable.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (L[i] < 0 || !std::isfinite(L[i]) || !std::isfinite(t[i]))
      throw std::invalid_argument("fit_rate: invalid sample");
    if (mode == FitMode::log_time && !(t[i] > 0)) continue;
    usable.push_back(i);
  }
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(window * static_cast<double>(usable.size()))));
  std::vector<std::size_t> idx(usable.end() - static_cast<std::ptrdiff_t>(
                                                  std::min(keep, usable.size())),
                               usable.end());

  if (envelope) {
    std::vector<std::size_t> peaks;
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const double v = L[idx[s]];
      bool is_max = true;
      const std::size_t lo = s >= 2 ? s - 2 : 0;
      const std::size_t hi = std::min(idx.size() - 1, s + 2);
      for (std::size_t u = lo; u <= hi && is_max; ++u)
        if (u != s && L[idx[u]] > v) is_max = false;
      if (is_max) peaks.push_back(idx[s]);
    }
    idx = std::move(peaks);
  }

  if (idx.size() < 10)
    throw std::invalid_argument("fit_rate: fewer than 10 usable samples");

  RateFit fit;
  fit.window = window;
  fit.used = idx.size();
  std::vector<double> xs(idx.size()), ys(idx.size());
  for (std::size_t s = 0; s < idx.size(); ++s) {
    xs[s] = mode == FitMode::log_time ? std::log(t[idx[s]]) : t[idx[s]];
    double v = L[idx[s]];
    if (v == 0) {
      v = 1e-300;
      fit.clipped = true;
    }
    ys[s] = std::log(v);
  }
  double sx = 0, sy = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    sx += xs[s];
    sy += ys[s];
  }
  const double mx = sx / static_cast<double>(xs.size());
  const double my = sy / static_cast<double>(xs.size());
  double sxx = 0, sxy = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    sxx += (xs[s] - mx) * (xs[s] - mx);
    sxy += (xs[s] - mx) * (ys[s] - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_rate: degenerate time axis");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const double e = ys[s] - (fit.intercept + fit.slope * xs[s]);
    rss += e * e;
  }
  fit.residual = std::sqrt(rss / static_cast<double>(xs.size()));
  return fit;
}

}  // namespace ntkflow
