#include "ntkflow/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ntkflow/compute.hpp"
#include "ntkflow/rng.hpp"

namespace ntkflow {

void validate_dataset(const Dataset& data, double parallel_tol) {
  const Index n = data.n();
  if (data.y.size() != n) throw std::invalid_argument("dataset: |y| != n");
  for (Index i = 0; i < n; ++i) {
    if (std::abs(data.X.row(i).norm() - 1.0) > 1e-12)
      throw std::invalid_argument("dataset: row " + std::to_string(i) + " is not unit norm");
    if (!(std::abs(data.y[i]) <= data.y_bound))
      throw std::invalid_argument("dataset: target " + std::to_string(i) + " exceeds bound");
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (std::abs(data.X.row(i).dot(data.X.row(j))) > 1.0 - parallel_tol)
        throw std::invalid_argument("dataset: rows " + std::to_string(i) + " and " +
                                    std::to_string(j) + " are near-parallel");
}

NetworkState init_network(Index p, Index m, std::uint64_t seed) {
  if (p < 1 || m < 1) throw std::invalid_argument("init_network: p and m must be positive");
  NetworkState net;
  net.seed = seed;
  net.W.resize(m, p);
  net.a.resize(m);
  Rng rng(seed);
  for (Index r = 0; r < m; ++r)
    for (Index j = 0; j < p; ++j) net.W(r, j) = rng.normal();
  for (Index r = 0; r < m; ++r) net.a[r] = rng.sign();
  return net;
}

Matrix activations(const NetworkState& net, const Dataset& data) {
  Matrix Z;
  compute::activations(data.X, net.W, Z);
  return Z;
}

Prediction forward(const NetworkState& net, const Dataset& data, const Matrix& Z) {
  Prediction pred;
  compute::forward_from(Z, net.a, 1.0 / std::sqrt(static_cast<double>(net.m())), pred.f);
  pred.delta = pred.f - data.y;
  return pred;
}

Prediction forward(const NetworkState& net, const Dataset& data) {
  return forward(net, data, activations(net, data));
}

Matrix neuron_jacobian(const NetworkState& net, const Dataset& data, Index r) {
  if (r < 0 || r >= net.m()) throw std::invalid_argument("neuron_jacobian: neuron out of range");
  const Index n = data.n(), p = data.p();
  const double c = net.a[r] / std::sqrt(static_cast<double>(net.m()));
  Matrix J(n, p);
  for (Index i = 0; i < n; ++i) {
    const double z = data.X.row(i).dot(net.W.row(r));
    if (z >= 0.0)
      J.row(i) = c * data.X.row(i);
    else
      J.row(i).setZero();
  }
  return J;
}

double mse_loss(const Prediction& pred) { return 0.5 * pred.delta.squaredNorm(); }

Matrix loss_gradient(const NetworkState& net, const Dataset& data, const Matrix& Z,
                     const Vector& delta) {
  Matrix G;
  compute::gradient_from(Z, data.X, net.a, delta, 1.0 / std::sqrt(static_cast<double>(net.m())),
                         G);
  return G;
}

Matrix loss_gradient(const NetworkState& net, const Dataset& data) {
  const Matrix Z = activations(net, data);
  const Prediction pred = forward(net, data, Z);
  return loss_gradient(net, data, Z, pred.delta);
}

}  // namespace ntkflow
