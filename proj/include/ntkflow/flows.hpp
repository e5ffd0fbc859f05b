#pragma once

#include <string>
#include <vector>

#include "ntkflow/kernel.hpp"
#include "ntkflow/network.hpp"
#include "ntkflow/trace.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

/// Continuous-time counterparts of the discrete optimizers. `hm` is the
/// order-(J+1) ODE w^(J+1) + sum_j b_j w^(j) + grad L = 0 with J =
/// frictions.size(); J = 1 coincides with hbf, J = 0 with gd. `newton` as a
/// weight flow follows the per-neuron damped least-squares direction; as an
/// error flow it is the first-order form with the caller's kernel (pass the
/// Newton kernel) and integrates exactly like gd.
enum class FlowVariant { gd, hbf, nag, hm, newton };

struct FlowConfig {
  FlowVariant variant = FlowVariant::gd;
  double dt = 1e-3;
  double t_end = 1.0;   // snapped to the step grid: N = round((t_end - t_start)/dt)
  double t_start = 0;   // nag: must be positive; defaults to dt when unset
  Index stride = 1;     // record every `stride` integrator steps (plus first and last)
  double friction = 0;  // hbf: b
  double gamma = 3.0;   // nag: gamma / t friction
  std::vector<double> frictions;  // hm: b_1 .. b_J
  double lambda0 = 0;      // > 0 enables the heavy-ball Lyapunov monitor (hbf runs)
  double rate_alpha = 0;   // > 0 enables the time-weighted Lyapunov monitor (nag runs)
  bool refresh_kernel = true;  // weight flows: resample H at records, else freeze H(0)
  double newton_ridge = -1.0;  // newton flow: < 0 picks the per-neuron default
};

/// dt heuristic keeping RK4 far from its stability edge.
inline double default_flow_dt(double lambda_max) { return 1e-3 / lambda_max; }

/// The friction the exponential-envelope theorem uses: b = sqrt(2 lambda0),
/// twice the strong-convexity constant lambda0 / 2 under the square root.
double hbf_theorem_friction(double lambda0);

struct FlowResult {
  std::vector<TraceRecord> records;
  Matrix W_final;      // weight flows: last finite iterate
  Vector delta_final;  // error flows: last finite iterate
  double t_final = 0;
  double max_drift = 0;  // weight flows: max_r |w_r(t) - w_r(0)| over the run
  bool diverged = false;
  std::string message;
};

/// Classical fixed-step 4th-order Runge-Kutta on the stacked first-order
/// system, starting from net.W with all derivatives zero. Divergence (any
/// state norm above 1e12, or a non-finite entry) stops integration and flags
/// the result; the partial trace is kept.
FlowResult integrate_weight_flow(const NetworkState& net, const Dataset& data,
                                 const FlowConfig& cfg);

/// Same integrator for the error dynamics with the kernel frozen at K:
/// first-order variants follow delta' = -K delta, second-order ones
/// delta'' + (friction) delta' + K delta = 0, starting at delta0 with zero
/// initial derivatives.
FlowResult integrate_error_flow(const KernelMatrix& K, const Vector& delta0,
                                const FlowConfig& cfg);

/// Analytic oracle for the scalar ODEs. gd: x0 exp(-lambda t) (coef and v0
/// ignored). hbf: solution of x'' + coef x' + lambda x = 0 with x(0) = x0,
/// x'(0) = v0, via characteristic roots; |coef^2 - 4 lambda| < 1e-12 takes
/// the critically damped branch. Other variants throw.
double closed_form_scalar(FlowVariant variant, double lambda, double coef, double x0,
                          double v0, double t);

}  // namespace ntkflow
