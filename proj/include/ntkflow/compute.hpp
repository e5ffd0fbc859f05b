#pragma once

#include <cstdint>

#include "ntkflow/types.hpp"

namespace ntkflow::compute {

/// Thread budget for the parallel kernels (thread-local; 0 restores the
/// OpenMP default). Sweep workers set this to 1 so concurrent cells do not
/// oversubscribe the machine.
void set_thread_limit(int n);
int thread_limit();

// The parallel kernels below split work across disjoint output elements only;
// every floating-point reduction runs sequentially inside one thread, in a
// fixed order, so results are bit-identical for any thread count.

/// Z_ir = x_i . w_r  (n x m pre-activations).
void activations(const Matrix& X, const Matrix& W, Matrix& Z);

/// f_i = inv_sqrt_m * sum_r a_r max(Z_ir, 0); the neuron sum stays sequential.
void forward_from(const Matrix& Z, const Vector& a, double inv_sqrt_m, Vector& f);

/// G_r = inv_sqrt_m * a_r * sum_i delta_i [Z_ir >= 0] x_i  (m x p).
void gradient_from(const Matrix& Z, const Matrix& X, const Vector& a, const Vector& delta,
                   double inv_sqrt_m, Matrix& G);

/// counts_ij = #{r : Z_ir >= 0 and Z_jr >= 0}. Exact integer arithmetic
/// (packed activation bits + popcount), so the result is order-independent.
void coactivation_counts(const Matrix& Z, IMatrix& counts);

/// X X^T.
Matrix gram(const Matrix& X);

namespace serial {
// Naive single-thread reference implementations, kept for testing the
// parallel kernels and for the benchmark target.
void activations(const Matrix& X, const Matrix& W, Matrix& Z);
void forward_from(const Matrix& Z, const Vector& a, double inv_sqrt_m, Vector& f);
void gradient_from(const Matrix& Z, const Matrix& X, const Vector& a, const Vector& delta,
                   double inv_sqrt_m, Matrix& G);
void coactivation_counts(const Matrix& Z, IMatrix& counts);
}  // namespace serial

}  // namespace ntkflow::compute
