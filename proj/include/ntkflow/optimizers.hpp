#pragma once

#include <utility>
#include <vector>

#include "ntkflow/network.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

enum class Optimizer { gd, heavy_ball, nag, nag_sc, higher_momentum, newton };

/// Mutable optimizer buffers. The step ops treat the weight matrix as opaque
/// state: the trainer reuses them on reduced coordinates unchanged.
/// k counts issued steps; the nag counter starts at 1.
struct OptimizerState {
  long k = 0;
  bool primed = false;
  Matrix w_prev;              // heavy_ball, nag_sc: previous iterate (first step: w(-1) = w(0))
  Matrix v_prev;              // nag: previous interpolation point
  Matrix g_prev;              // nag_sc: gradient at the previous iterate
  std::vector<Matrix> prev;   // higher_momentum: w(k), w(k-1), ..., w(k-J)
};

OptimizerState make_optimizer_state(Optimizer kind);

/// W <- W - eta * grad.
void gd_step(Matrix& W, const Matrix& grad, double eta, OptimizerState& st);

/// W <- W - eta * grad + beta (W - W_prev); the first step sees W_prev = W.
void hb_step(Matrix& W, const Matrix& grad, double eta, double beta, OptimizerState& st);

/// v(k+1) = W(k) - eta grad(W(k));  W(k+1) = v(k+1) + (k-1)/(k+gamma-1) (v(k+1) - v(k)).
/// The gradient is taken at W(k), exactly as written. Requires k >= 1.
void nag_step(Matrix& W, const Matrix& grad, double eta, double gamma, OptimizerState& st);

/// Momentum coefficient c = (1 - sqrt(lambda0 eta / 2)) / (1 + sqrt(lambda0 eta / 2)).
double nagsc_coefficient(double lambda0, double eta);

/// Single-sequence strongly-convex form with the gradient-difference correction:
/// W(k+1) = W(k) + c (W(k) - W(k-1)) - eta grad(k) - c eta (grad(k) - grad(k-1)).
/// First step: W(-1) = W(0), grad(-1) = grad(0), i.e. a plain gd step.
void nagsc_step(Matrix& W, const Matrix& grad, double eta, double lambda0, OptimizerState& st);

/// W(k+1) = W(k) - eta grad + sum_j betas[j-1] (W(k-j+1) - W(k-j)), j = 1..J.
/// J = 0 reduces to gd, J = 1 to heavy_ball, entrywise exactly.
void hm_step(Matrix& W, const Matrix& grad, double eta, const std::vector<double>& betas,
             OptimizerState& st);

/// Roots (A, B) of x^2 - beta1 x - beta2 = 0, so A + B = beta1 and A B = -beta2.
/// Requires beta1^2 + 4 beta2 >= 0. (beta1, 0) -> (beta1, 0); (0, b2) -> (sqrt(b2), -sqrt(b2)).
std::pair<double, double> hm_coefficients(double beta1, double beta2);

/// Memory-efficient J = 2 recursion (three sequences w, v, q) built on
/// hm_coefficients; produces the same iterates as hm_step with {beta1, beta2}.
struct Hm2State {
  Matrix v, q;
  bool primed = false;
};
void hm2_fast_step(Matrix& W, const Matrix& grad, double eta, double beta1, double beta2,
                   Hm2State& st);

struct NewtonOptions {
  double eta = 1.0;
  double ridge = -1.0;       // < 0: per-neuron default 1e-8 * trace(Gram_r) / p
  double cond_limit = 1e14;  // reject instances the ridge cannot rescue
};

/// Per-neuron damped least-squares step:
///   w_r <- w_r - eta (Jr^T Jr + ridge I)^{-1} Jr^T delta,  Jr = d f / d w_r.
/// Requires n > p. Throws std::runtime_error when a regularized per-neuron
/// system is still conditioned worse than cond_limit.
void newton_step(NetworkState& net, const Dataset& data, const Matrix& Z, const Vector& delta,
                 const NewtonOptions& opt, OptimizerState& st);

/// The step directions D (m x p): newton_step subtracts eta * D.
Matrix newton_directions(const NetworkState& net, const Dataset& data, const Matrix& Z,
                         const Vector& delta, const NewtonOptions& opt);

}  // namespace ntkflow
