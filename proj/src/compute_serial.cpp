#include <stdexcept>

#include "ntkflow/compute.hpp"

// Textbook reference implementations: plain loops, one thread, no blocking.
// The test suite checks the parallel kernels against these, and the benchmark
// target reports the speedup.

namespace ntkflow::compute::serial {

void activations(const Matrix& X, const Matrix& W, Matrix& Z) {
  if (X.cols() != W.cols()) throw std::invalid_argument("activations: dimension mismatch");
  const Index n = X.rows(), m = W.rows(), p = X.cols();
  Z.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index r = 0; r < m; ++r) {
      double acc = 0;
      for (Index j = 0; j < p; ++j) acc += X(i, j) * W(r, j);
      Z(i, r) = acc;
    }
}

void forward_from(const Matrix& Z, const Vector& a, double inv_sqrt_m, Vector& f) {
  const Index n = Z.rows(), m = Z.cols();
  if (a.size() != m) throw std::invalid_argument("forward_from: head size mismatch");
  f.resize(n);
  for (Index i = 0; i < n; ++i) {
    double acc = 0;
    for (Index r = 0; r < m; ++r)
      if (Z(i, r) >= 0.0) acc += a[r] * Z(i, r);
    f[i] = inv_sqrt_m * acc;
  }
}

void gradient_from(const Matrix& Z, const Matrix& X, const Vector& a, const Vector& delta,
                   double inv_sqrt_m, Matrix& G) {
  const Index n = X.rows(), p = X.cols(), m = Z.cols();
  if (Z.rows() != n || a.size() != m || delta.size() != n)
    throw std::invalid_argument("gradient_from: dimension mismatch");
  G.resize(m, p);
  G.setZero();
  for (Index r = 0; r < m; ++r) {
    for (Index i = 0; i < n; ++i)
      if (Z(i, r) >= 0.0)
        for (Index j = 0; j < p; ++j) G(r, j) += delta[i] * X(i, j);
    for (Index j = 0; j < p; ++j) G(r, j) *= inv_sqrt_m * a[r];
  }
}

void coactivation_counts(const Matrix& Z, IMatrix& counts) {
  const Index n = Z.rows(), m = Z.cols();
  counts.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      std::int64_t c = 0;
      for (Index r = 0; r < m; ++r)
        if (Z(i, r) >= 0.0 && Z(j, r) >= 0.0) ++c;
      counts(i, j) = c;
    }
}

}  // namespace ntkflow::compute::serial
