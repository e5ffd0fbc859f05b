// Times the OpenMP kernels against their serial reference implementations and
// checks that both produce the same numbers. Sizes can be overridden:
//   ntkflow_bench [n] [p] [m] [reps]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "ntkflow/compute.hpp"
#include "ntkflow/network.hpp"
#include "ntkflow/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double best_seconds(int reps, F&& body) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    body();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s, double macs, double diff) {
  std::printf("%-20s %10.4f ms %10.4f ms %7.2fx", name, serial_s * 1e3, parallel_s * 1e3,
              serial_s / parallel_s);
  if (macs > 0) {
    std::printf(" %8.2f GMAC/s", macs / parallel_s * 1e-9);
  } else {
    std::printf("  %14s", "-");
  }
  std::printf("   max|diff| %.3g\n", diff);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ntkflow;
  Index n = 600, p = 50, m = 3000;
  int reps = 5;
  if (argc > 1) n = std::atol(argv[1]);
  if (argc > 2) p = std::atol(argv[2]);
  if (argc > 3) m = std::atol(argv[3]);
  if (argc > 4) reps = std::atoi(argv[4]);

  Rng rng(7);
  Matrix X(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < p; ++c) X(i, c) = rng.normal();
    X.row(i).normalize();
  }
  NetworkState net = init_network(p, m, 11);
  Vector delta(n);
  for (Index i = 0; i < n; ++i) delta[i] = rng.normal();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));

  std::printf("n=%ld p=%ld m=%ld reps=%d (best-of timing)\n", static_cast<long>(n),
              static_cast<long>(p), static_cast<long>(m), reps);
  std::printf("%-20s %13s %13s %8s %15s\n", "kernel", "serial", "parallel", "speedup",
              "throughput");

  Matrix Zs(n, m), Zp(n, m);
  double ts = best_seconds(reps, [&] { compute::serial::activations(X, net.W, Zs); });
  double tp = best_seconds(reps, [&] { compute::activations(X, net.W, Zp); });
  report("activations", ts, tp, double(n) * double(p) * double(m),
         (Zs - Zp).cwiseAbs().maxCoeff());

  Vector fs(n), fp(n);
  ts = best_seconds(reps, [&] { compute::serial::forward_from(Zs, net.a, inv_sqrt_m, fs); });
  tp = best_seconds(reps, [&] { compute::forward_from(Zp, net.a, inv_sqrt_m, fp); });
  report("forward_from", ts, tp, double(n) * double(m), (fs - fp).cwiseAbs().maxCoeff());

  Matrix Gs(m, p), Gp(m, p);
  ts = best_seconds(reps,
                    [&] { compute::serial::gradient_from(Zs, X, net.a, delta, inv_sqrt_m, Gs); });
  tp = best_seconds(reps, [&] { compute::gradient_from(Zp, X, net.a, delta, inv_sqrt_m, Gp); });
  report("gradient_from", ts, tp, double(n) * double(p) * double(m),
         (Gs - Gp).cwiseAbs().maxCoeff());

  IMatrix Cs(n, n), Cp(n, n);
  ts = best_seconds(reps, [&] { compute::serial::coactivation_counts(Zs, Cs); });
  tp = best_seconds(reps, [&] { compute::coactivation_counts(Zp, Cp); });
  double cdiff = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      cdiff = std::max(cdiff, double(std::llabs(Cs(i, j) - Cp(i, j))));
  report("coactivation_counts", ts, tp, double(n) * double(n) * double(m) / 64.0, cdiff);

  return 0;
}
