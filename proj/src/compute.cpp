#include "ntkflow/compute.hpp"

#include <omp.h>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ntkflow::compute {

namespace {

thread_local int g_thread_limit = 0;

int threads() {
  return g_thread_limit > 0 ? g_thread_limit : omp_get_max_threads();
}

// Fixed-lane dot product: eight independent partial sums folded in a fixed
// order. Vectorizes well and keeps one arithmetic order per output element
// regardless of the thread count.
double dot8(const double* a, const double* b, Index n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  Index k = 0;
  for (; k + 8 <= n; k += 8) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
    s4 += a[k + 4] * b[k + 4];
    s5 += a[k + 5] * b[k + 5];
    s6 += a[k + 6] * b[k + 6];
    s7 += a[k + 7] * b[k + 7];
  }
  double tail = 0;
  for (; k < n; ++k) tail += a[k] * b[k];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

void pack_activation_bits(const Matrix& Z, std::vector<std::uint64_t>& bits, Index& words) {
  const Index n = Z.rows(), m = Z.cols();
  words = (m + 63) / 64;
  bits.assign(static_cast<std::size_t>(n * words), 0);
#pragma omp parallel for schedule(static) num_threads(threads())
  for (Index i = 0; i < n; ++i) {
    const double* zi = Z.data() + i * m;
    std::uint64_t* row = bits.data() + i * words;
    for (Index r = 0; r < m; ++r)
      if (zi[r] >= 0.0) row[r >> 6] |= std::uint64_t(1) << (r & 63);
  }
}

}  // namespace

void set_thread_limit(int n) { g_thread_limit = n > 0 ? n : 0; }

int thread_limit() { return threads(); }

void activations(const Matrix& X, const Matrix& W, Matrix& Z) {
  if (X.cols() != W.cols()) throw std::invalid_argument("activations: dimension mismatch");
  const Index n = X.rows(), m = W.rows(), p = X.cols();
  Z.resize(n, m);
#pragma omp parallel for schedule(static) num_threads(threads())
  for (Index i = 0; i < n; ++i) {
    const double* xi = X.data() + i * p;
    double* zi = Z.data() + i * m;
    for (Index r = 0; r < m; ++r) zi[r] = dot8(xi, W.data() + r * p, p);
  }
}

void forward_from(const Matrix& Z, const Vector& a, double inv_sqrt_m, Vector& f) {
  const Index n = Z.rows(), m = Z.cols();
  if (a.size() != m) throw std::invalid_argument("forward_from: head size mismatch");
  f.resize(n);
#pragma omp parallel for schedule(static) num_threads(threads())
  for (Index i = 0; i < n; ++i) {
    const double* zi = Z.data() + i * m;
    double acc = 0;  // sequential over neurons: reproducible reduction
    for (Index r = 0; r < m; ++r)
      if (zi[r] >= 0.0) acc += a[r] * zi[r];
    f[i] = inv_sqrt_m * acc;
  }
}

void gradient_from(const Matrix& Z, const Matrix& X, const Vector& a, const Vector& delta,
                   double inv_sqrt_m, Matrix& G) {
  const Index n = X.rows(), p = X.cols(), m = Z.cols();
  if (Z.rows() != n || a.size() != m || delta.size() != n)
    throw std::invalid_argument("gradient_from: dimension mismatch");
  G.resize(m, p);
#pragma omp parallel for schedule(static) num_threads(threads())
  for (Index r = 0; r < m; ++r) {
    double* gr = G.data() + r * p;
    for (Index j = 0; j < p; ++j) gr[j] = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (Z(i, r) >= 0.0) {
        const double c = delta[i];
        const double* xi = X.data() + i * p;
        for (Index j = 0; j < p; ++j) gr[j] += c * xi[j];
      }
    }
    const double s = inv_sqrt_m * a[r];
    for (Index j = 0; j < p; ++j) gr[j] *= s;
  }
}

void coactivation_counts(const Matrix& Z, IMatrix& counts) {
  const Index n = Z.rows();
  std::vector<std::uint64_t> bits;
  Index words = 0;
  pack_activation_bits(Z, bits, words);
  counts.resize(n, n);
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads())
  for (Index i = 0; i < n; ++i) {
    const std::uint64_t* bi = bits.data() + i * words;
    for (Index j = i; j < n; ++j) {
      const std::uint64_t* bj = bits.data() + j * words;
      std::int64_t c = 0;
      for (Index w = 0; w < words; ++w) c += std::popcount(bi[w] & bj[w]);
      counts(i, j) = c;
    }
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < i; ++j) counts(i, j) = counts(j, i);
}

Matrix gram(const Matrix& X) {
  const Index n = X.rows();
  Matrix G(n, n);
  G.setZero();
  G.selfadjointView<Eigen::Lower>().rankUpdate(X);
  G = Matrix(G.selfadjointView<Eigen::Lower>());
  return G;
}

}  // namespace ntkflow::compute
