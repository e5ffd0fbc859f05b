#pragma once

#include <cstdint>

#include "ntkflow/types.hpp"

namespace ntkflow {

/// Inputs on the unit sphere, targets bounded by y_bound.
struct Dataset {
  Matrix X;              // n x p, unit rows, no two rows near-parallel
  Vector y;              // n
  double y_bound = 1.0;  // |y_i| <= y_bound

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
};

/// Throws std::invalid_argument when a row strays off the unit sphere (1e-12),
/// a pair of rows is near-parallel (|x_i . x_j| > 1 - parallel_tol), or a
/// target exceeds the stored bound.
void validate_dataset(const Dataset& data, double parallel_tol = 1e-9);

/// Two-layer ReLU network f(x) = m^{-1/2} sum_r a_r max(w_r . x, 0).
/// Only W trains; the sign head a is frozen at initialization.
struct NetworkState {
  Matrix W;                 // m x p, rows are neurons
  Vector a;                 // m, entries in {-1, +1}
  std::uint64_t seed = 0;

  Index m() const { return W.rows(); }
  Index p() const { return W.cols(); }
};

struct Prediction {
  Vector f;      // n
  Vector delta;  // f - y
};

/// W entries ~ N(0,1) drawn row-major via Rng::normal (Box-Muller pairs carry
/// across row boundaries), then a_r = Rng::sign, all from one seeded stream.
NetworkState init_network(Index p, Index m, std::uint64_t seed);

/// Pre-activations Z_ir = x_i . w_r. Every other operation masks on
/// Z_ir >= 0: the kink is active at zero throughout this project.
Matrix activations(const NetworkState& net, const Dataset& data);

Prediction forward(const NetworkState& net, const Dataset& data);
Prediction forward(const NetworkState& net, const Dataset& data, const Matrix& Z);

/// d f / d w_r as an n x p block: row i = m^{-1/2} a_r [Z_ir >= 0] x_i.
/// Second derivatives are treated as exactly zero.
Matrix neuron_jacobian(const NetworkState& net, const Dataset& data, Index r);

/// L = 0.5 |f - y|^2 (sum over samples, no 1/n).
double mse_loss(const Prediction& pred);

Matrix loss_gradient(const NetworkState& net, const Dataset& data);
Matrix loss_gradient(const NetworkState& net, const Dataset& data, const Matrix& Z,
                     const Vector& delta);

}  // namespace ntkflow
