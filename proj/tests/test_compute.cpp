#include "ntkflow/compute.hpp"

#include <cmath>

#include "ntkflow/rng.hpp"
#include "testing.hpp"

using namespace ntkflow;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) M(i, j) = rng.normal();
  return M;
}

double max_abs_diff(const Matrix& A, const Matrix& B) {
  return (A - B).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(thread_limit_roundtrip) {
  compute::set_thread_limit(3);
  CHECK(compute::thread_limit() == 3);
  compute::set_thread_limit(0);  // back to the OpenMP default
  CHECK(compute::thread_limit() >= 1);
}

TEST(activations_matches_serial_reference) {
  const Matrix X = random_matrix(17, 5, 1);
  const Matrix W = random_matrix(33, 5, 2);
  Matrix Zp(17, 33), Zs(17, 33);
  compute::activations(X, W, Zp);
  compute::serial::activations(X, W, Zs);
  // Same sums in a different association order: only rounding may differ.
  CHECK(max_abs_diff(Zp, Zs) <= 1e-13);
}

TEST(activations_thread_count_invariant) {
  const Matrix X = random_matrix(23, 7, 3);
  const Matrix W = random_matrix(41, 7, 4);
  Matrix Z1(23, 41), Z4(23, 41);
  compute::set_thread_limit(1);
  compute::activations(X, W, Z1);
  compute::set_thread_limit(4);
  compute::activations(X, W, Z4);
  compute::set_thread_limit(0);
  bool identical = true;
  for (Index i = 0; i < Z1.rows() && identical; ++i)
    for (Index j = 0; j < Z1.cols(); ++j)
      if (Z1(i, j) != Z4(i, j)) {
        identical = false;
        break;
      }
  CHECK(identical);  // bit-identical, not merely close
}

TEST(forward_from_matches_serial_reference) {
  const Matrix Z = random_matrix(19, 37, 5);
  Rng rng(6);
  Vector a(37);
  for (Index r = 0; r < 37; ++r) a[r] = rng.sign();
  const double inv_sqrt_m = 1.0 / std::sqrt(37.0);
  Vector fp(19), fs(19);
  compute::forward_from(Z, a, inv_sqrt_m, fp);
  compute::serial::forward_from(Z, a, inv_sqrt_m, fs);
  CHECK((fp - fs).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST(forward_from_hand_case) {
  // f_i = inv_sqrt_m * sum_r a_r max(z_ir, 0); z == 0 contributes nothing
  // either way, negative z is cut.
  Matrix Z(1, 3);
  Z << 2.0, -5.0, 3.0;
  Vector a(3);
  a << 1.0, 1.0, -1.0;
  Vector f(1);
  compute::forward_from(Z, a, 0.5, f);
  CHECK_NEAR(f[0], 0.5 * (2.0 - 3.0), 1e-15);
  compute::serial::forward_from(Z, a, 0.5, f);
  CHECK_NEAR(f[0], 0.5 * (2.0 - 3.0), 1e-15);
}

TEST(gradient_from_matches_serial_reference) {
  const Index n = 13, p = 6, m = 29;
  const Matrix X = random_matrix(n, p, 7);
  const Matrix W = random_matrix(m, p, 8);
  Matrix Z(n, m);
  compute::activations(X, W, Z);
  Rng rng(9);
  Vector a(m), delta(n);
  for (Index r = 0; r < m; ++r) a[r] = rng.sign();
  for (Index i = 0; i < n; ++i) delta[i] = rng.normal();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix Gp(m, p), Gs(m, p);
  compute::gradient_from(Z, X, a, delta, inv_sqrt_m, Gp);
  compute::serial::gradient_from(Z, X, a, delta, inv_sqrt_m, Gs);
  CHECK(max_abs_diff(Gp, Gs) <= 1e-13);
}

TEST(gradient_from_thread_count_invariant) {
  const Index n = 11, p = 5, m = 27;
  const Matrix X = random_matrix(n, p, 10);
  const Matrix W = random_matrix(m, p, 11);
  Matrix Z(n, m);
  compute::activations(X, W, Z);
  Rng rng(12);
  Vector a(m), delta(n);
  for (Index r = 0; r < m; ++r) a[r] = rng.sign();
  for (Index i = 0; i < n; ++i) delta[i] = rng.normal();
  Matrix G1(m, p), G4(m, p);
  compute::set_thread_limit(1);
  compute::gradient_from(Z, X, a, delta, 0.25, G1);
  compute::set_thread_limit(4);
  compute::gradient_from(Z, X, a, delta, 0.25, G4);
  compute::set_thread_limit(0);
  CHECK(max_abs_diff(G1, G4) == 0.0);
}

TEST(coactivation_counts_hand_case) {
  // Active means z >= 0, so exact zeros count.
  Matrix Z(3, 5);
  Z << 1, -1, 0, 2, -3,
      -1, 1, 1, -1, 0,
       0, 0, -1, -1, -1;
  IMatrix C(3, 3);
  compute::coactivation_counts(Z, C);
  CHECK(C(0, 0) == 3);
  CHECK(C(1, 1) == 3);
  CHECK(C(2, 2) == 2);
  CHECK(C(0, 1) == 1);
  CHECK(C(0, 2) == 1);
  CHECK(C(1, 2) == 1);
  CHECK(C(1, 0) == C(0, 1));
  CHECK(C(2, 0) == C(0, 2));
  CHECK(C(2, 1) == C(1, 2));
}

TEST(coactivation_counts_matches_serial_reference) {
  // m = 133 exercises a partial final 64-bit word in the packed path.
  const Matrix Z = random_matrix(21, 133, 13);
  IMatrix Cp(21, 21), Cs(21, 21);
  compute::coactivation_counts(Z, Cp);
  compute::serial::coactivation_counts(Z, Cs);
  bool equal = true;
  for (Index i = 0; i < 21 && equal; ++i)
    for (Index j = 0; j < 21; ++j)
      if (Cp(i, j) != Cs(i, j)) {
        equal = false;
        break;
      }
  CHECK(equal);
}

TEST(coactivation_counts_thread_count_invariant) {
  const Matrix Z = random_matrix(18, 97, 14);
  IMatrix C1(18, 18), C4(18, 18);
  compute::set_thread_limit(1);
  compute::coactivation_counts(Z, C1);
  compute::set_thread_limit(4);
  compute::coactivation_counts(Z, C4);
  compute::set_thread_limit(0);
  bool equal = true;
  for (Index i = 0; i < 18 && equal; ++i)
    for (Index j = 0; j < 18; ++j)
      if (C1(i, j) != C4(i, j)) {
        equal = false;
        break;
      }
  CHECK(equal);
}

TEST(gram_matches_reference_product) {
  const Matrix X = random_matrix(15, 9, 15);
  const Matrix G = compute::gram(X);
  const Matrix ref = X * X.transpose();
  CHECK(max_abs_diff(G, ref) <= 1e-13);
  CHECK(max_abs_diff(G, G.transpose()) == 0.0);  // exact symmetry by construction
  for (Index i = 0; i < 15; ++i) CHECK_NEAR(G(i, i), X.row(i).squaredNorm(), 1e-13);
}

TEST_MAIN()
