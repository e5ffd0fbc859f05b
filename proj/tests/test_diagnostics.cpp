#include "ntkflow/diagnostics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

#include "ntkflow/kernel.hpp"
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

Vector eigenvalues_of(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  return es.eigenvalues();
}

}  // namespace

TEST(friction_half_values) {
  CHECK_NEAR(friction_half(2.0), 1.0, 1e-15);
  CHECK_NEAR(friction_half(0.5), 0.5, 1e-15);
  CHECK(friction_half(0.0) == 0.0);
  CHECK_THROWS(friction_half(-1.0), std::invalid_argument);
}

TEST(hb_lyapunov_hand_case) {
  // d = (1,0), d' = (0,1), K = [[2,1],[1,2]], lambda0 = 1:
  //   0.5 d^T K d = 1;  vec = sqrt(1/2) d + d' = (sqrt(.5), 1), |vec|^2 = 1.5
  //   V = 1 + 0.75 = 1.75.
  Matrix K(2, 2);
  K << 2.0, 1.0, 1.0, 2.0;
  Vector d(2), dd(2);
  d << 1.0, 0.0;
  dd << 0.0, 1.0;
  CHECK_NEAR(hb_lyapunov(d, dd, K, 1.0), 1.75, 1e-14);
  // lambda0 = 0 reduces to 0.5 d^T K d + 0.5 |d'|^2.
  CHECK_NEAR(hb_lyapunov(d, dd, K, 0.0), 1.5, 1e-14);
  Vector wrong(3);
  wrong.setZero();
  CHECK_THROWS(hb_lyapunov(wrong, dd, K, 1.0), std::invalid_argument);
}

TEST(nag_lyapunov_hand_case) {
  // d = (1), d' = (1), K = (1), gamma = 3, alpha = 2, t = 1:
  //   Lhat = 0.5;  t^alpha Lhat = 0.5
  //   (2g - a)^2 t^(a-2) / 8 = 16/8 = 2;  vec = d + (2t/4) d' = 1.5
  //   V = 0.5 + 2 * 2.25 = 5.0.
  Matrix K(1, 1);
  K << 1.0;
  Vector d(1), dd(1);
  d << 1.0;
  dd << 1.0;
  CHECK_NEAR(nag_lyapunov(d, dd, K, 1.0, 2.0, 3.0), 5.0, 1e-14);
  CHECK_NEAR(nag_lyapunov(0.5, d, dd, 1.0, 2.0, 3.0), 5.0, 1e-14);
  CHECK_THROWS(nag_lyapunov(d, dd, K, 0.0, 2.0, 3.0), std::invalid_argument);
  CHECK_THROWS(nag_lyapunov(d, dd, K, 1.0, 6.0, 3.0), std::invalid_argument);  // alpha = 2 gamma
}

TEST(nag_lyapunov_overloads_agree) {
  Matrix K(2, 2);
  K << 2.0, 1.0, 1.0, 2.0;
  Vector d(2), dd(2);
  d << 0.3, -0.2;
  dd << 0.1, 0.4;
  const double lhat = 0.5 * d.dot(K * d);
  CHECK_NEAR(nag_lyapunov(lhat, d, dd, 1.7, 5.0, 4.0), nag_lyapunov(d, dd, K, 1.7, 5.0, 4.0),
             1e-15);
}

TEST(polyak_energy_hand_case) {
  Vector dd(2);
  dd << 3.0, 4.0;
  CHECK_NEAR(polyak_energy(0.5, dd), 13.0, 1e-15);
  Matrix wd(2, 2);
  wd << 1.0, 2.0, 3.0, 4.0;
  CHECK_NEAR(polyak_energy(1.0, wd), 16.0, 1e-15);  // 1 + 0.5 * 30
}

TEST(radius_bounds_hand_case) {
  // n=4, delta=0.1, lambda0=0.5, m=1000, lhat0=0.2:
  //   kernel_radius = 0.1 * 0.5 / 16 = 3.125e-3
  //   drift_bound = sqrt(256 * 4 * 0.2 / (9 * 1000 * 0.125)) = sqrt(204.8 / 1125)
  const RadiusBounds b = radius_bounds(4, 0.1, 0.5, 1000, 0.2);
  CHECK_NEAR(b.kernel_radius, 3.125e-3, 1e-18);
  CHECK_NEAR(b.drift_bound, std::sqrt(204.8 / 1125.0), 1e-15);
  CHECK(b.scaling_only);
  // c scales only the kernel radius.
  const RadiusBounds b2 = radius_bounds(4, 0.1, 0.5, 1000, 0.2, 2.0);
  CHECK_NEAR(b2.kernel_radius, 6.25e-3, 1e-18);
  CHECK_NEAR(b2.drift_bound, b.drift_bound, 0.0);
  CHECK_THROWS(radius_bounds(4, -0.1, 0.5, 1000, 0.2), std::invalid_argument);
  CHECK_THROWS(radius_bounds(4, 0.1, 0.0, 1000, 0.2), std::invalid_argument);
}

TEST(radius_bounds_nag_hand_case) {
  // n=2, delta=0.1, lambda0=2, m=100, L0=0.3, alpha=6, gamma=4, eps=0.5:
  //   eps^(2 - 3) = 2; front = 2*2/(6-4) = 2
  //   (lambda0/2)^3 = 1; (gamma - 3 + 1)^2 = 4
  //   drift = 2 sqrt(2*0.3 / (100*1*4)) + sqrt(0.6)*0.5
  const RadiusBounds b = radius_bounds_nag(2, 0.1, 2.0, 100, 0.3, 6.0, 4.0, 0.5);
  CHECK_NEAR(b.drift_bound, 2.0 * std::sqrt(0.6 / 400.0) + std::sqrt(0.6) * 0.5, 1e-15);
  CHECK_NEAR(b.kernel_radius, 0.1 * 2.0 / 4.0, 1e-15);
  CHECK(b.scaling_only);
  CHECK_THROWS(radius_bounds_nag(2, 0.1, 2.0, 100, 0.3, 4.0, 4.0, 0.5), std::invalid_argument);
  CHECK_THROWS(radius_bounds_nag(2, 0.1, 2.0, 100, 0.3, 6.0, 4.0, 0.0), std::invalid_argument);
}

TEST(width_requirement_formulas) {
  // gd flavor: n=2, delta=0.5, lambda0=0.5 -> 64 / (0.125 * 0.0625) = 8192.
  CHECK_NEAR(width_requirement(WidthVariant::gd, 2, 0.5, 0.5), 8192.0, 1e-9);
  CHECK_NEAR(width_requirement(WidthVariant::heavy_ball, 2, 0.5, 0.5), 8192.0, 1e-9);
  CHECK_NEAR(width_requirement(WidthVariant::nag_sc, 2, 0.5, 0.5), 8192.0, 1e-9);
  // nag at alpha = 6: n^11 / (delta^6 lambda0^7).
  const double w6 = width_requirement(WidthVariant::nag, 3, 0.2, 0.4, 6.0);
  CHECK_NEAR(w6, std::pow(3.0, 11) / (std::pow(0.2, 6) * std::pow(0.4, 7)), 1e-6 * w6);
  CHECK_THROWS(width_requirement(WidthVariant::nag, 3, 0.2, 0.4, 4.0), std::invalid_argument);
  CHECK_THROWS(width_requirement(WidthVariant::gd, 3, 0.0, 0.4), std::invalid_argument);
  CHECK_THROWS(width_requirement(WidthVariant::gd, 3, 0.2, 0.0), std::invalid_argument);
  CHECK_THROWS(width_requirement(WidthVariant::gd, 3, 1.5, 0.4), std::invalid_argument);
}

TEST(width_requirement_nag_limits_to_gd) {
  const double gd = width_requirement(WidthVariant::gd, 5, 0.1, 0.3);
  const double nag = width_requirement(WidthVariant::nag, 5, 0.1, 0.3, 4.0 + 1e-12);
  CHECK_NEAR(nag, gd, 1e-9 * gd);
}

TEST(width_requirement_nag_grows_with_alpha) {
  double prev = 0.0;
  for (const double alpha : {4.5, 5.0, 6.0, 8.0}) {
    const double w = width_requirement(WidthVariant::nag, 4, 0.1, 0.5, alpha);
    CHECK(w > prev);
    prev = w;
  }
}

TEST(newton_kernel_single_neuron_identity) {
  // One neuron active on both axis samples: the per-neuron normalizations
  // cancel and the kernel is the exact projector onto span{x1, x2} = R^2.
  Dataset data;
  data.X.resize(2, 2);
  data.X << 1.0, 0.0, 0.0, 1.0;
  data.y.resize(2);
  data.y << 0.1, -0.1;
  NetworkState net;
  net.W.resize(1, 2);
  net.W << 1.0, 1.0;
  net.a.resize(1);
  net.a << -1.0;  // the sign must cancel
  const Matrix H = newton_kernel(net, data, 0.0);
  CHECK_NEAR(H(0, 0), 1.0, 1e-12);
  CHECK_NEAR(H(1, 1), 1.0, 1e-12);
  CHECK_NEAR(H(0, 1), 0.0, 1e-12);
  CHECK_NEAR(H(1, 0), 0.0, 1e-12);
  CHECK_THROWS(newton_kernel(net, data, -1.0), std::invalid_argument);
}

TEST(newton_kernel_is_a_projector_per_neuron) {
  // Three active samples, p = 2: rank-2 projector with eigenvalues {0, 1, 1}.
  Dataset data;
  data.X.resize(3, 2);
  const double s = std::sqrt(0.5);
  data.X << 1.0, 0.0, 0.0, 1.0, s, s;
  data.y.resize(3);
  data.y << 0.1, 0.2, 0.3;
  NetworkState net;
  net.W.resize(1, 2);
  net.W << 1.0, 1.0;
  net.a.resize(1);
  net.a << 1.0;
  const Matrix H = newton_kernel(net, data, 0.0);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((H * H - H).cwiseAbs().maxCoeff() <= 1e-10);
  const Vector ev = eigenvalues_of(H);
  CHECK_NEAR(ev[0], 0.0, 1e-10);
  CHECK_NEAR(ev[1], 1.0, 1e-10);
  CHECK_NEAR(ev[2], 1.0, 1e-10);
}

TEST(newton_kernel_dominates_scaled_empirical) {
  // Sum of projectors P_r >= (m/n) J_r J_r^T neuron by neuron, so
  // H_newton - (m/n) H_empirical is positive semidefinite.
  const Dataset data = tiny_dataset(12, 3, 21);
  const NetworkState net = init_network(3, 8, 22);
  const Matrix Hn = newton_kernel(net, data, 0.0);
  const Matrix He = empirical_ntk(net, data);
  const double ratio = static_cast<double>(net.m()) / static_cast<double>(data.n());
  const Matrix D = Hn - ratio * He;
  CHECK(eigenvalues_of(D).minCoeff() >= -1e-9);
  CHECK(eigenvalues_of(Hn).minCoeff() >= -1e-10);
  // A positive ridge only shrinks the kernel.
  const Matrix Hr = newton_kernel(net, data, 1e-3);
  CHECK(eigenvalues_of(Hn - Hr).minCoeff() >= -1e-10);
}

TEST(fit_rate_exact_linear) {
  std::vector<double> t(50), L(50);
  for (int i = 0; i < 50; ++i) {
    t[i] = 0.1 * i;
    L[i] = std::exp(2.0 - 3.0 * t[i]);
  }
  const RateFit fit = fit_rate(t, L, FitMode::linear_time, 1.0);
  CHECK_NEAR(fit.slope, -3.0, 1e-12);
  CHECK_NEAR(fit.intercept, 2.0, 1e-12);
  CHECK(fit.used == 50);
  CHECK(fit.residual <= 1e-10);
  CHECK(!fit.clipped);
  CHECK(fit.window == 1.0);
}

TEST(fit_rate_window_takes_the_tail) {
  // Slope -1 for the first 36 samples, then -5: a 0.4 window sees only the
  // second regime.
  std::vector<double> t(60), L(60);
  const double t_kink = 3.6;
  for (int i = 0; i < 60; ++i) {
    t[i] = 0.1 * i;
    const double lnl = t[i] <= t_kink ? -t[i] : -t_kink - 5.0 * (t[i] - t_kink);
    L[i] = std::exp(lnl);
  }
  const RateFit fit = fit_rate(t, L, FitMode::linear_time, 0.4);
  CHECK(fit.used == 24);
  CHECK_NEAR(fit.slope, -5.0, 1e-12);
}

TEST(fit_rate_log_mode) {
  std::vector<double> t, L;
  t.push_back(0.0);  // log_time must drop t <= 0
  L.push_back(7.0);
  for (int i = 1; i <= 40; ++i) {
    t.push_back(static_cast<double>(i));
    L.push_back(std::pow(static_cast<double>(i), -2.5));
  }
  const RateFit fit = fit_rate(t, L, FitMode::log_time, 1.0);
  CHECK(fit.used == 40);
  CHECK_NEAR(fit.slope, -2.5, 1e-12);
  CHECK_NEAR(fit.intercept, 0.0, 1e-12);
}

TEST(fit_rate_envelope_keeps_local_maxima) {
  // Every fifth sample sits on exp(-2t); the rest are damped by 0.1 and must
  // be discarded, leaving the exact envelope slope.
  std::vector<double> t(60), L(60);
  for (int i = 0; i < 60; ++i) {
    t[i] = 0.1 * i;
    L[i] = std::exp(-2.0 * t[i]) * (i % 5 == 0 ? 1.0 : 0.1);
  }
  const RateFit fit = fit_rate(t, L, FitMode::linear_time, 1.0, true);
  CHECK(fit.used == 12);
  CHECK_NEAR(fit.slope, -2.0, 1e-12);
  CHECK_NEAR(fit.intercept, 0.0, 1e-12);
}

TEST(fit_rate_clips_zero_losses) {
  std::vector<double> t(20), L(20);
  for (int i = 0; i < 20; ++i) {
    t[i] = 0.1 * i;
    L[i] = std::exp(-t[i]);
  }
  L[19] = 0.0;
  const RateFit fit = fit_rate(t, L, FitMode::linear_time, 1.0);
  CHECK(fit.clipped);
  CHECK(std::isfinite(fit.slope));
}

TEST(fit_rate_validation) {
  std::vector<double> t(9), L(9);
  for (int i = 0; i < 9; ++i) {
    t[i] = i;
    L[i] = 1.0;
  }
  CHECK_THROWS(fit_rate(t, L, FitMode::linear_time, 1.0), std::invalid_argument);
  std::vector<double> t2(20), L2(20);
  for (int i = 0; i < 20; ++i) {
    t2[i] = i;
    L2[i] = 1.0;
  }
  CHECK_THROWS(fit_rate(t2, L2, FitMode::linear_time, 0.2), std::invalid_argument);  // keep = 4
  CHECK_THROWS(fit_rate(t2, L2, FitMode::linear_time, 0.0), std::invalid_argument);
  CHECK_THROWS(fit_rate(t2, L2, FitMode::linear_time, 1.5), std::invalid_argument);
  std::vector<double> bad = L2;
  bad[3] = -1.0;
  CHECK_THROWS(fit_rate(t2, bad, FitMode::linear_time, 1.0), std::invalid_argument);
  std::vector<double> flat_t(12, 1.0), flat_L(12, 0.5);
  CHECK_THROWS(fit_rate(flat_t, flat_L, FitMode::linear_time, 1.0), std::invalid_argument);
  std::vector<double> t3(12), L3(13);
  CHECK_THROWS(fit_rate(t3, L3, FitMode::linear_time, 1.0), std::invalid_argument);
}

TEST(fit_rate_is_shift_invariant) {
  std::vector<double> t(40), L(40);
  for (int i = 0; i < 40; ++i) {
    t[i] = 100.0 + 0.25 * i;
    L[i] = std::exp(2.0 - 3.0 * t[i]);
  }
  const RateFit fit = fit_rate(t, L, FitMode::linear_time, 1.0);
  CHECK_NEAR(fit.slope, -3.0, 1e-8);
  CHECK_NEAR(fit.intercept, 2.0, 1e-5);
}

TEST_MAIN()
