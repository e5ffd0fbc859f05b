#include "ntkflow/kernel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ntkflow/compute.hpp"

namespace ntkflow {

namespace {

Vector sym_eigenvalues(const Matrix& sym) {
  if (sym.rows() != sym.cols()) throw std::invalid_argument("eigenvalues: matrix not square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigenvalues: solver failed");
  return es.eigenvalues();
}

}  // namespace

KernelMatrix make_kernel(Matrix H) {
  if (H.rows() != H.cols()) throw std::invalid_argument("make_kernel: matrix not square");
  const double asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) throw std::invalid_argument("make_kernel: asymmetry exceeds 1e-10");
  KernelMatrix k;
  k.H = 0.5 * (H + Matrix(H.transpose()));
  const Vector ev = sym_eigenvalues(k.H);
  k.lambda_min = ev.minCoeff();
  k.lambda_max = ev.maxCoeff();
  k.trace = k.H.trace();
  return k;
}

Matrix empirical_ntk(const NetworkState& net, const Dataset& data, const Matrix& Z) {
  const Index n = data.n();
  if (Z.rows() != n || Z.cols() != net.m())
    throw std::invalid_argument("empirical_ntk: activation shape mismatch");
  IMatrix counts;
  compute::coactivation_counts(Z, counts);
  const Matrix G = compute::gram(data.X);
  Matrix H(n, n);
  const double inv_m = 1.0 / static_cast<double>(net.m());
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      H(i, j) = inv_m * G(i, j) * static_cast<double>(counts(i, j));
      H(j, i) = H(i, j);
    }
  }
  return H;
}

Matrix empirical_ntk(const NetworkState& net, const Dataset& data) {
  return empirical_ntk(net, data, activations(net, data));
}

Matrix analytic_ntk(const Dataset& data) {
  const Index n = data.n();
  const Matrix G = compute::gram(data.X);
  Matrix H(n, n);
  for (Index i = 0; i < n; ++i) {
    H(i, i) = 0.5;  // rho_ii = 1 for the unit rows the dataset contract guarantees
    for (Index j = i + 1; j < n; ++j) {
      const double rho = std::clamp(G(i, j), -1.0, 1.0);
      H(i, j) = rho * (0.5 - std::acos(rho) / (2.0 * std::numbers::pi));
      H(j, i) = H(i, j);
    }
  }
  return H;
}

double min_eigenvalue(const Matrix& sym) { return sym_eigenvalues(sym).minCoeff(); }

double max_eigenvalue(const Matrix& sym) { return sym_eigenvalues(sym).maxCoeff(); }

double pseudo_loss(const Vector& delta, const Matrix& K) {
  if (K.rows() != delta.size() || K.cols() != delta.size())
    throw std::invalid_argument("pseudo_loss: dimension mismatch");
  return 0.5 * delta.dot(K * delta);
}

double kernel_drift(const Matrix& Ht, const Matrix& H0) {
  if (Ht.rows() != H0.rows() || Ht.cols() != H0.cols())
    throw std::invalid_argument("kernel_drift: shape mismatch");
  const Vector ev = sym_eigenvalues(Ht - H0);
  return std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
}

double kernel_drift_frobenius(const Matrix& Ht, const Matrix& H0) {
  if (Ht.rows() != H0.rows() || Ht.cols() != H0.cols())
    throw std::invalid_argument("kernel_drift: shape mismatch");
  return (Ht - H0).norm();
}

}  // namespace ntkflow
