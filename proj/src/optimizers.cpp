#include "ntkflow/optimizers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ntkflow/compute.hpp"

namespace ntkflow {

OptimizerState make_optimizer_state(Optimizer kind) {
  OptimizerState st;
  st.k = (kind == Optimizer::nag) ? 1 : 0;
  return st;
}

void gd_step(Matrix& W, const Matrix& grad, double eta, OptimizerState& st) {
  if (grad.rows() != W.rows() || grad.cols() != W.cols())
    throw std::invalid_argument("gd_step: gradient shape mismatch");
  W = W - eta * grad;
  ++st.k;
}

void hb_step(Matrix& W, const Matrix& grad, double eta, double beta, OptimizerState& st) {
  if (grad.rows() != W.rows() || grad.cols() != W.cols())
    throw std::invalid_argument("hb_step: gradient shape mismatch");
  if (!st.primed) {
    st.w_prev = W;  // w(-1) = w(0): the first step is plain gradient descent
    st.primed = true;
  }
  Matrix next = W - eta * grad;
  next += beta * (W - st.w_prev);
  st.w_prev = std::move(W);
  W = std::move(next);
  ++st.k;
}

void nag_step(Matrix& W, const Matrix& grad, double eta, double gamma, OptimizerState& st) {
  if (grad.rows() != W.rows() || grad.cols() != W.cols())
    throw std::invalid_argument("nag_step: gradient shape mismatch");
  if (gamma <= 0) throw std::invalid_argument("nag_step: gamma must be positive");
  if (st.k < 1) throw std::invalid_argument("nag_step: counter must start at 1");
  if (!st.primed) {
    st.v_prev = W;  // multiplies a zero coefficient at k = 1
    st.primed = true;
  }
  Matrix v_next = W - eta * grad;
  const double coef =
      (static_cast<double>(st.k) - 1.0) / (static_cast<double>(st.k) + gamma - 1.0);
  W = v_next + coef * (v_next - st.v_prev);
  st.v_prev = std::move(v_next);
  ++st.k;
}

double nagsc_coefficient(double lambda0, double eta) {
  if (lambda0 < 0 || eta < 0) throw std::invalid_argument("nagsc_coefficient: negative input");
  const double s = std::sqrt(lambda0 * eta / 2.0);
  return (1.0 - s) / (1.0 + s);
}

void nagsc_step(Matrix& W, const Matrix& grad, double eta, double lambda0, OptimizerState& st) {
  if (grad.rows() != W.rows() || grad.cols() != W.cols())
    throw std::invalid_argument("nagsc_step: gradient shape mismatch");
  if (!st.primed) {
    st.w_prev = W;     // w(-1) = w(0)
    st.g_prev = grad;  // grad(-1) = grad(0): correction vanishes on step one
    st.primed = true;
  }
  const double c = nagsc_coefficient(lambda0, eta);
  Matrix next = W - eta * grad;
  next += c * (W - st.w_prev);
  next -= (c * eta) * (grad - st.g_prev);
  st.w_prev = std::move(W);
  st.g_prev = grad;
  W = std::move(next);
  ++st.k;
}

void hm_step(Matrix& W, const Matrix& grad, double eta, const std::vector<double>& betas,
             OptimizerState& st) {
  if (grad.rows() != W.rows() || grad.cols() != W.cols())
    throw std::invalid_argument("hm_step: gradient shape mismatch");
  const std::size_t J = betas.size();
  if (!st.primed) {
    st.prev.assign(J, W);  // flat history: all past iterates equal w(0)
    st.primed = true;
  }
  if (st.prev.size() != J) throw std::invalid_argument("hm_step: history/betas size mismatch");
  Matrix next = W - eta * grad;
  if (J >= 1) next += betas[0] * (W - st.prev[0]);
  for (std::size_t j = 2; j <= J; ++j) next += betas[j - 1] * (st.prev[j - 2] - st.prev[j - 1]);
  if (J >= 1) {
    std::rotate(st.prev.rbegin(), st.prev.rbegin() + 1, st.prev.rend());
    st.prev[0] = W;
  }
  W = std::move(next);
  ++st.k;
}

std::pair<double, double> hm_coefficients(double beta1, double beta2) {
  const double disc = beta1 * beta1 + 4.0 * beta2;
  if (disc < 0)
    throw std::invalid_argument("hm_coefficients: beta1^2 + 4 beta2 < 0 (complex roots)");
  const double root = std::sqrt(disc);
  return {(beta1 + root) / 2.0, (beta1 - root) / 2.0};
}

void hm2_fast_step(Matrix& W, const Matrix& grad, double eta, double beta1, double beta2,
                   Hm2State& st) {
  const auto [A, B] = hm_coefficients(beta1, beta2);
  if (!st.primed) {
    st.v = Matrix::Zero(W.rows(), W.cols());
    st.q = Matrix::Zero(W.rows(), W.cols());
    st.primed = true;
  }
  st.q = B * st.q + grad;
  st.v = A * st.v + st.q;
  W -= eta * st.v;
}

Matrix newton_directions(const NetworkState& net, const Dataset& data, const Matrix& Z,
                         const Vector& delta, const NewtonOptions& opt) {
  const Index n = data.n(), p = data.p(), m = net.m();
  if (n <= p) throw std::invalid_argument("newton: requires n > p");
  if (Z.rows() != n || Z.cols() != m || delta.size() != n)
    throw std::invalid_argument("newton: shape mismatch");
  Matrix D(m, p);
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  long bad_r = -1;
#pragma omp parallel for schedule(static) num_threads(compute::thread_limit())
  for (Index r = 0; r < m; ++r) {
    Matrix gramr = Matrix::Zero(p, p);
    Vector rhs = Vector::Zero(p);
    for (Index i = 0; i < n; ++i) {
      if (Z(i, r) >= 0.0) {
        gramr.selfadjointView<Eigen::Lower>().rankUpdate(data.X.row(i).transpose(), inv_m);
        rhs += (delta[i] * inv_sqrt_m * net.a[r]) * data.X.row(i).transpose();
      }
    }
    gramr = Matrix(gramr.selfadjointView<Eigen::Lower>());
    const double tr = gramr.trace();
    if (tr == 0.0) {  // neuron inactive everywhere: zero Jacobian, zero step
      D.row(r).setZero();
      continue;
    }
    const double ridge =
        opt.ridge >= 0 ? opt.ridge : 1e-8 * tr / static_cast<double>(p);
    gramr.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gramr);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > opt.cond_limit) {
#pragma omp critical
      bad_r = r;
      D.row(r).setZero();
      continue;
    }
    const Vector step =
        es.eigenvectors() *
        (es.eigenvalues().array().inverse() * (es.eigenvectors().transpose() * rhs).array())
            .matrix();
    D.row(r) = step.transpose();
  }
  if (bad_r >= 0)
    throw std::runtime_error("newton: per-neuron system " + std::to_string(bad_r) +
                             " conditioned beyond the limit despite the ridge");
  return D;
}

void newton_step(NetworkState& net, const Dataset& data, const Matrix& Z, const Vector& delta,
                 const NewtonOptions& opt, OptimizerState& st) {
  const Matrix D = newton_directions(net, data, Z, delta, opt);
  net.W -= opt.eta * D;
  ++st.k;
}

}  // namespace ntkflow
