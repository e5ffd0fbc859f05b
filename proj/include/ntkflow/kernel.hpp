#pragma once

#include "ntkflow/network.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

/// Symmetric PSD kernel with its spectral summary (full symmetric
/// eigendecomposition; the min eigenvalue is the quantity everything else
/// keys on, so no iterative shortcut is taken).
struct KernelMatrix {
  Matrix H;
  double lambda_min = 0;
  double lambda_max = 0;
  double trace = 0;
};

/// Requires symmetry within 1e-10; the stored matrix is the symmetrized copy.
KernelMatrix make_kernel(Matrix H);

/// H_ij = (1/m) x_i . x_j #{r : Z_ir >= 0 and Z_jr >= 0}
///      = sum_r (J_r J_r^T)_ij with J_r the per-neuron Jacobian block.
Matrix empirical_ntk(const NetworkState& net, const Dataset& data);
Matrix empirical_ntk(const NetworkState& net, const Dataset& data, const Matrix& Z);

/// Infinite-width limit: H_ij = x_i . x_j (1/2 - arccos(x_i . x_j) / (2 pi)),
/// inner products clamped to [-1, 1] before arccos. Diagonal is exactly 1/2.
Matrix analytic_ntk(const Dataset& data);

/// Smallest / largest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);
double max_eigenvalue(const Matrix& sym);

/// 0.5 delta^T K delta: the kernel-weighted (pseudo) loss.
double pseudo_loss(const Vector& delta, const Matrix& K);

/// Spectral norm of Ht - H0 (largest |eigenvalue| of the difference).
double kernel_drift(const Matrix& Ht, const Matrix& H0);
double kernel_drift_frobenius(const Matrix& Ht, const Matrix& H0);

}  // namespace ntkflow
