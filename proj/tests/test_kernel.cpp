#include "ntkflow/kernel.hpp"

#include <cmath>
#include <numbers>

#include "ntkflow/rng.hpp"
#include "testing.hpp"

using namespace ntkflow;

namespace {

Dataset tiny_dataset(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.X.resize(n, p);
  data.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < p; ++c) data.X(i, c) = rng.normal();
    data.X.row(i).normalize();
  }
  for (Index i = 0; i < n; ++i) data.y[i] = rng.uniform(-0.5, 0.5);
  return data;
}

}  // namespace

TEST(empirical_ntk_matches_definition) {
  // Rebuild H from scratch: H_ij = (1/m) (x_i . x_j) #{r active on i and j}.
  const Dataset data = tiny_dataset(7, 4, 1);
  const NetworkState net = init_network(4, 25, 2);
  const Matrix H = empirical_ntk(net, data);
  const Matrix Z = activations(net, data);
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.n(); ++j) {
      double count = 0;
      for (Index r = 0; r < net.m(); ++r)
        if (Z(i, r) >= 0.0 && Z(j, r) >= 0.0) count += 1.0;
      const double expect = data.X.row(i).dot(data.X.row(j)) * count / 25.0;
      CHECK_NEAR(H(i, j), expect, 1e-13);
    }
  }
}

TEST(empirical_ntk_is_sum_of_jacobian_products) {
  // H = sum_r J_r J_r^T with J_r the per-neuron Jacobian block.
  const Dataset data = tiny_dataset(6, 3, 3);
  const NetworkState net = init_network(3, 18, 4);
  const Matrix H = empirical_ntk(net, data);
  Matrix ref = Matrix::Zero(data.n(), data.n());
  for (Index r = 0; r < net.m(); ++r) {
    const Matrix J = neuron_jacobian(net, data, r);
    ref += J * J.transpose();
  }
  CHECK((H - ref).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST(empirical_ntk_with_and_without_z) {
  const Dataset data = tiny_dataset(5, 4, 5);
  const NetworkState net = init_network(4, 12, 6);
  const Matrix Z = activations(net, data);
  const Matrix H1 = empirical_ntk(net, data);
  const Matrix H2 = empirical_ntk(net, data, Z);
  CHECK((H1 - H2).cwiseAbs().maxCoeff() == 0.0);
}

TEST(empirical_ntk_is_positive_semidefinite) {
  const Dataset data = tiny_dataset(8, 5, 7);
  const NetworkState net = init_network(5, 30, 8);
  const Matrix H = empirical_ntk(net, data);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(min_eigenvalue(H) >= -1e-12);
}

TEST(analytic_ntk_exact_diagonal_and_trace) {
  const Dataset data = tiny_dataset(9, 4, 9);
  const Matrix H = analytic_ntk(data);
  for (Index i = 0; i < data.n(); ++i) CHECK(H(i, i) == 0.5);
  CHECK(H.trace() == 0.5 * static_cast<double>(data.n()));
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const double lam = min_eigenvalue(H);
  CHECK(lam > 0.0);
  CHECK(lam < 0.5);  // trace/n = 1/2 with off-diagonal mass forces lambda_min below 1/2
}

TEST(analytic_ntk_entry_closed_form) {
  // Two p = 2 inputs at angle 60 degrees: rho = 1/2 and
  // H = rho (1/2 - acos(rho) / 2 pi) = (1/2)(1/2 - 1/6) = 1/6.
  Dataset data;
  data.X.resize(2, 2);
  data.X << 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0;
  data.y = Vector::Zero(2);
  const Matrix H = analytic_ntk(data);
  CHECK_NEAR(H(0, 1), 1.0 / 6.0, 1e-15);
  // Opposite inputs: rho = -1, acos = pi, entry = -1 (1/2 - 1/2) = 0.
  data.X << 1.0, 0.0, -1.0, 0.0;
  const Matrix H2 = analytic_ntk(data);
  CHECK_NEAR(H2(0, 1), 0.0, 1e-15);
}

TEST(analytic_ntk_entry_monte_carlo) {
  // Independent check of the coactivation probability: w ~ N(0, I_2),
  // P(w.x >= 0 and w.x' >= 0) for inputs at angle 60 degrees must match
  // 1/2 - acos(rho)/(2 pi) = 1/3; the kernel entry is rho times that.
  const double rho = 0.5;
  const Vector x1 = (Vector(2) << 1.0, 0.0).finished();
  const Vector x2 = (Vector(2) << rho, std::sqrt(1.0 - rho * rho)).finished();
  Rng rng(12345);
  const long trials = 10000000;
  long both = 0;
  for (long t = 0; t < trials; ++t) {
    const double w0 = rng.normal(), w1 = rng.normal();
    const bool a1 = w0 * x1[0] + w1 * x1[1] >= 0.0;
    const bool a2 = w0 * x2[0] + w1 * x2[1] >= 0.0;
    if (a1 && a2) ++both;
  }
  const double mc = rho * static_cast<double>(both) / static_cast<double>(trials);
  // SE of the probability is sqrt(p(1-p)/N) ~ 1.5e-4; 4.5 sigma with rho = 0.5.
  CHECK_NEAR(mc, 1.0 / 6.0, 3.3e-4);
}

TEST(empirical_converges_to_analytic_with_width) {
  const Dataset data = tiny_dataset(6, 5, 11);
  const Matrix Hinf = analytic_ntk(data);
  const NetworkState net = init_network(5, 40000, 12);
  const Matrix H = empirical_ntk(net, data);
  // Entry SD <= 1/(2 sqrt(m)) = 2.5e-3; 0.02 is an 8 sigma envelope.
  CHECK((H - Hinf).cwiseAbs().maxCoeff() <= 0.02);
}

TEST(make_kernel_eigen_oracle) {
  Matrix H(2, 2);
  H << 2.0, 1.0, 1.0, 2.0;
  const KernelMatrix K = make_kernel(H);
  CHECK_NEAR(K.lambda_min, 1.0, 1e-12);
  CHECK_NEAR(K.lambda_max, 3.0, 1e-12);
  CHECK_NEAR(K.trace, 4.0, 1e-15);
  CHECK_NEAR(min_eigenvalue(H), 1.0, 1e-12);
  CHECK_NEAR(max_eigenvalue(H), 3.0, 1e-12);
}

TEST(make_kernel_rejects_asymmetry) {
  Matrix H(2, 2);
  H << 1.0, 0.5, 0.5 + 1e-6, 1.0;
  CHECK_THROWS(make_kernel(H), std::invalid_argument);
}

TEST(pseudo_loss_hand_case) {
  Matrix K(2, 2);
  K << 2.0, 1.0, 1.0, 2.0;
  Vector delta(2);
  delta << 1.0, 0.0;
  CHECK_NEAR(pseudo_loss(delta, K), 1.0, 1e-15);  // 0.5 * d^T K d
  Vector wrong(3);
  CHECK_THROWS(pseudo_loss(wrong, K), std::invalid_argument);
}

TEST(kernel_drift_norms) {
  const Dataset data = tiny_dataset(5, 3, 13);
  const Matrix H0 = analytic_ntk(data);
  Matrix Ht = H0;
  CHECK(kernel_drift(Ht, H0) == 0.0);
  CHECK(kernel_drift_frobenius(Ht, H0) == 0.0);
  const double eps = 1e-3;
  Ht += eps * Matrix::Identity(5, 5);
  CHECK_NEAR(kernel_drift(Ht, H0), eps, 1e-12);  // spectral norm of eps I
  CHECK_NEAR(kernel_drift_frobenius(Ht, H0), eps * std::sqrt(5.0), 1e-12);
}

TEST_MAIN()
