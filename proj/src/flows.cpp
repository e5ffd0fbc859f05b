#include "ntkflow/flows.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

#include "ntkflow/diagnostics.hpp"
#include "ntkflow/optimizers.hpp"

namespace ntkflow {

namespace {

constexpr double kDivergenceNorm = 1e12;

std::size_t block_count(const FlowConfig& cfg) {
  switch (cfg.variant) {
    case FlowVariant::gd:
    case FlowVariant::newton:
      return 1;
    case FlowVariant::hbf:
    case FlowVariant::nag:
      return 2;
    case FlowVariant::hm:
      return cfg.frictions.size() + 1;
  }
  throw std::invalid_argument("flow: unknown variant");
}

double effective_t_start(const FlowConfig& cfg) {
  if (cfg.variant == FlowVariant::nag) {
    const double ts = cfg.t_start > 0 ? cfg.t_start : cfg.dt;
    if (!(ts > 0)) throw std::invalid_argument("flow: nag needs t_start > 0");
    return ts;
  }
  if (cfg.t_start < 0) throw std::invalid_argument("flow: t_start must be nonnegative");
  return cfg.t_start;
}

void validate(const FlowConfig& cfg) {
  if (!(cfg.dt > 0)) throw std::invalid_argument("flow: dt must be positive");
  if (cfg.stride < 1) throw std::invalid_argument("flow: stride must be >= 1");
  if (cfg.variant == FlowVariant::hbf && cfg.friction < 0)
    throw std::invalid_argument("flow: hbf friction must be nonnegative");
  if (cfg.variant == FlowVariant::nag && !(cfg.gamma > 0))
    throw std::invalid_argument("flow: nag needs gamma > 0");
}

long step_count(const FlowConfig& cfg, double t0) {
  const long n = std::lround((cfg.t_end - t0) / cfg.dt);
  if (n < 0) throw std::invalid_argument("flow: t_end precedes t_start");
  return n;  // n == 0: initial record only
}

using Rhs = std::function<void(double, const Vector&, Vector&)>;

struct Rk4Work {
  Vector k1, k2, k3, k4, tmp;
  explicit Rk4Work(Eigen::Index n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
};

void rk4_step(const Rhs& f, double t, double dt, Vector& y, Rk4Work& w) {
  f(t, y, w.k1);
  w.tmp = y + (0.5 * dt) * w.k1;
  f(t + 0.5 * dt, w.tmp, w.k2);
  w.tmp = y + (0.5 * dt) * w.k2;
  f(t + 0.5 * dt, w.tmp, w.k3);
  w.tmp = y + dt * w.k3;
  f(t + dt, w.tmp, w.k4);
  y += (dt / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
}

std::string divergence_message(double t, double norm) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "flow diverged at t = %.6g (state norm %.3g)", t, norm);
  return buf;
}

/// delta_dot_i = sum_r [Z_ir >= 0] a_r <x_i, wdot_r> / sqrt(m): the chain rule
/// through the frozen activation pattern.
Vector jacobian_velocity(const NetworkState& net, const Dataset& data, const Matrix& Z,
                         const Matrix& Wdot) {
  const Index n = data.n(), m = net.m();
  const Matrix P = data.X * Wdot.transpose();  // n x m
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    double acc = 0;
    for (Index r = 0; r < m; ++r)
      if (Z(i, r) >= 0.0) acc += net.a[r] * P(i, r);
    out[i] = inv_sqrt_m * acc;
  }
  return out;
}

}  // namespace

double hbf_theorem_friction(double lambda0) {
  if (!(lambda0 > 0)) throw std::invalid_argument("hbf_theorem_friction: lambda0 > 0 required");
  return std::sqrt(2.0 * lambda0);
}

FlowResult integrate_weight_flow(const NetworkState& net0, const Dataset& data,
                                 const FlowConfig& cfg) {
  validate(cfg);
  if (data.p() != net0.p()) throw std::invalid_argument("flow: dataset/network width mismatch");
  const Index m = net0.m(), p = net0.p();
  const Index bs = m * p;
  const std::size_t blocks = block_count(cfg);
  const double t0 = effective_t_start(cfg);
  const long steps = step_count(cfg, t0);

  NetworkState scratch = net0;
  NewtonOptions nopt;
  nopt.ridge = cfg.newton_ridge;

  Rhs rhs = [&](double t, const Vector& y, Vector& dy) {
    scratch.W = Eigen::Map<const Matrix>(y.data(), m, p);
    if (blocks == 1) {
      Eigen::Map<Matrix> d0(dy.data(), m, p);
      if (cfg.variant == FlowVariant::newton) {
        const Matrix Z = activations(scratch, data);
        const Prediction pred = forward(scratch, data, Z);
        d0 = -newton_directions(scratch, data, Z, pred.delta, nopt);
      } else {
        d0 = -loss_gradient(scratch, data);
      }
      return;
    }
    const Matrix grad = loss_gradient(scratch, data);
    for (std::size_t j = 0; j + 1 < blocks; ++j)
      dy.segment(static_cast<Index>(j) * bs, bs) =
          y.segment(static_cast<Index>(j + 1) * bs, bs);
    auto top = dy.segment(static_cast<Index>(blocks - 1) * bs, bs);
    top = -Eigen::Map<const Vector>(grad.data(), bs);
    if (cfg.variant == FlowVariant::hbf) {
      top -= cfg.friction * y.segment(bs, bs);
    } else if (cfg.variant == FlowVariant::nag) {
      top -= (cfg.gamma / t) * y.segment(bs, bs);
    } else {
      for (std::size_t j = 1; j < blocks; ++j)
        top -= cfg.frictions[j - 1] * y.segment(static_cast<Index>(j) * bs, bs);
    }
  };

  FlowResult res;
  Matrix H0;
  bool have_h0 = false;

  auto record = [&](long step, double t, const Vector& y) {
    scratch.W = Eigen::Map<const Matrix>(y.data(), m, p);
    const Matrix Z = activations(scratch, data);
    const Prediction pred = forward(scratch, data, Z);
    TraceRecord rec;
    rec.step = step;
    rec.t = t;
    rec.loss = mse_loss(pred);
    Matrix Ht;
    if (!have_h0) {
      H0 = empirical_ntk(scratch, data, Z);
      have_h0 = true;
      Ht = H0;
    } else if (cfg.refresh_kernel) {
      Ht = empirical_ntk(scratch, data, Z);
    } else {
      Ht = H0;
    }
    rec.pseudo_loss = pseudo_loss(pred.delta, Ht);
    rec.lambda_min = min_eigenvalue(Ht);
    rec.kernel_drift = cfg.refresh_kernel ? kernel_drift(Ht, H0) : 0.0;
    double md = 0;
    for (Index r = 0; r < m; ++r)
      md = std::max(md, (scratch.W.row(r) - net0.W.row(r)).norm());
    rec.max_drift = md;
    res.max_drift = std::max(res.max_drift, md);
    if (blocks >= 2) {
      rec.e_polyak = polyak_energy(rec.loss, Vector(y.segment(bs, bs)));
      const bool want_hb = cfg.variant == FlowVariant::hbf && cfg.lambda0 > 0;
      const bool want_nag = cfg.variant == FlowVariant::nag && cfg.rate_alpha > 0 && t > 0;
      if (want_hb || want_nag) {
        const Matrix Wdot = Eigen::Map<const Matrix>(y.data() + bs, m, p);
        const Vector ddot = jacobian_velocity(scratch, data, Z, Wdot);
        if (want_hb) rec.v_hb = hb_lyapunov(pred.delta, ddot, Ht, cfg.lambda0);
        if (want_nag)
          rec.v_nag = nag_lyapunov(pred.delta, ddot, Ht, t, cfg.rate_alpha, cfg.gamma);
      }
    }
    res.records.push_back(rec);
  };

  Vector y = Vector::Zero(static_cast<Index>(blocks) * bs);
  Eigen::Map<Matrix>(y.data(), m, p) = net0.W;
  Vector y_good = y;
  double t = t0;
  double t_good = t;
  record(0, t, y);
  Rk4Work work(y.size());
  for (long s = 1; s <= steps; ++s) {
    rk4_step(rhs, t, cfg.dt, y, work);
    t = t0 + static_cast<double>(s) * cfg.dt;
    const bool finite = y.allFinite();
    const double norm = finite ? y.norm() : std::numeric_limits<double>::infinity();
    if (!finite || norm > kDivergenceNorm) {
      res.diverged = true;
      res.message = divergence_message(t, norm);
      break;
    }
    y_good = y;
    t_good = t;
    if (s % cfg.stride == 0 || s == steps) record(s, t, y);
  }
  res.W_final = Eigen::Map<const Matrix>(y_good.data(), m, p);
  res.t_final = t_good;
  return res;
}

FlowResult integrate_error_flow(const KernelMatrix& K, const Vector& delta0,
                                const FlowConfig& cfg) {
  validate(cfg);
  const Index n = delta0.size();
  if (K.H.rows() != n || K.H.cols() != n)
    throw std::invalid_argument("flow: kernel/delta dimension mismatch");
  const std::size_t blocks = block_count(cfg);
  const double t0 = effective_t_start(cfg);
  const long steps = step_count(cfg, t0);

  Rhs rhs = [&](double t, const Vector& y, Vector& dy) {
    if (blocks == 1) {
      dy.noalias() = -(K.H * y);
      return;
    }
    for (std::size_t j = 0; j + 1 < blocks; ++j)
      dy.segment(static_cast<Index>(j) * n, n) = y.segment(static_cast<Index>(j + 1) * n, n);
    auto top = dy.segment(static_cast<Index>(blocks - 1) * n, n);
    top.noalias() = -(K.H * y.head(n));
    if (cfg.variant == FlowVariant::hbf) {
      top -= cfg.friction * y.segment(n, n);
    } else if (cfg.variant == FlowVariant::nag) {
      top -= (cfg.gamma / t) * y.segment(n, n);
    } else {
      for (std::size_t j = 1; j < blocks; ++j)
        top -= cfg.frictions[j - 1] * y.segment(static_cast<Index>(j) * n, n);
    }
  };

  FlowResult res;
  auto record = [&](long step, double t, const Vector& y) {
    TraceRecord rec;
    rec.step = step;
    rec.t = t;
    const Vector delta = y.head(n);
    rec.loss = 0.5 * delta.squaredNorm();
    rec.pseudo_loss = pseudo_loss(delta, K.H);
    rec.lambda_min = K.lambda_min;
    if (blocks >= 2) {
      const Vector ddot = y.segment(n, n);
      rec.e_polyak = polyak_energy(rec.loss, ddot);
      if (cfg.variant == FlowVariant::hbf && cfg.lambda0 > 0)
        rec.v_hb = hb_lyapunov(delta, ddot, K.H, cfg.lambda0);
      if (cfg.variant == FlowVariant::nag && cfg.rate_alpha > 0 && t > 0)
        rec.v_nag = nag_lyapunov(delta, ddot, K.H, t, cfg.rate_alpha, cfg.gamma);
    }
    res.records.push_back(rec);
  };

  Vector y = Vector::Zero(static_cast<Index>(blocks) * n);
  y.head(n) = delta0;
  Vector y_good = y;
  double t = t0;
  double t_good = t;
  record(0, t, y);
  Rk4Work work(y.size());
  for (long s = 1; s <= steps; ++s) {
    rk4_step(rhs, t, cfg.dt, y, work);
    t = t0 + static_cast<double>(s) * cfg.dt;
    const bool finite = y.allFinite();
    const double norm = finite ? y.norm() : std::numeric_limits<double>::infinity();
    if (!finite || norm > kDivergenceNorm) {
      res.diverged = true;
      res.message = divergence_message(t, norm);
      break;
    }
    y_good = y;
    t_good = t;
    if (s % cfg.stride == 0 || s == steps) record(s, t, y);
  }
  res.delta_final = y_good.head(n);
  res.t_final = t_good;
  return res;
}

double closed_form_scalar(FlowVariant variant, double lambda, double coef, double x0,
                          double v0, double t) {
  if (!(lambda > 0)) throw std::invalid_argument("closed_form_scalar: lambda > 0 required");
  if (variant == FlowVariant::gd) return x0 * std::exp(-lambda * t);
  if (variant != FlowVariant::hbf)
    throw std::invalid_argument("closed_form_scalar: only gd and hbf have elementary forms");
  const double b = coef;
  const double disc = b * b - 4.0 * lambda;
  if (std::abs(disc) < 1e-12) {
    return (x0 + (v0 + 0.5 * b * x0) * t) * std::exp(-0.5 * b * t);
  }
  if (disc > 0) {
    const double root = std::sqrt(disc);
    const double rp = 0.5 * (-b + root);
    const double rm = 0.5 * (-b - root);
    const double c1 = (v0 - rm * x0) / (rp - rm);
    const double c2 = x0 - c1;
    return c1 * std::exp(rp * t) + c2 * std::exp(rm * t);
  }
  const double omega = 0.5 * std::sqrt(-disc);
  const double amp_cos = x0;
  const double amp_sin = (v0 + 0.5 * b * x0) / omega;
  return std::exp(-0.5 * b * t) * (amp_cos * std::cos(omega * t) + amp_sin * std::sin(omega * t));
}

}  // namespace ntkflow
