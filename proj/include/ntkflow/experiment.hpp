#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntkflow/diagnostics.hpp"
#include "ntkflow/flows.hpp"
#include "ntkflow/network.hpp"
#include "ntkflow/optimizers.hpp"
#include "ntkflow/trace.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

struct DatasetSpec {
  enum class Kind { synthetic, mnist };
  Kind kind = Kind::synthetic;
  // synthetic
  Index n = 8;
  Index p = 4;
  double target_scale = 0.5;
  // mnist
  std::string images;
  std::string labels;
  Index n_sub = 600;
  // Unset: derived from the run seed, so each seed sees its own instance.
  std::optional<std::uint64_t> seed;
};

struct NetworkSpec {
  Index m = 64;
};

struct OptimizerSpec {
  Optimizer kind = Optimizer::gd;
  double eta = 1e-3;
  double beta = 0.0;          // heavy_ball
  double gamma = 3.0;         // nag
  std::vector<double> betas;  // higher_momentum
  double lambda0 = 0.0;       // nag_sc; <= 0 resolves to lambda_min of the analytic kernel
  double ridge = -1.0;        // newton
  double cond_limit = 1e14;   // newton
};

struct FlowSpec {
  FlowVariant variant = FlowVariant::gd;
  bool error_mode = false;  // false: weight flow; true: error flow on a frozen kernel
  enum class KernelSource { analytic, empirical, file };
  KernelSource kernel_source = KernelSource::analytic;  // error mode only
  std::string kernel_path;                              // kernel_source == file
  double friction = -1.0;  // hbf; < 0 resolves to sqrt(2 lambda0)
  double gamma = 3.0;      // nag
  std::vector<double> frictions;  // hm
  double lambda0 = 0.0;     // monitors; <= 0 resolves to the run kernel's lambda_min
  double rate_alpha = 0.0;  // > 0 enables the nag Lyapunov monitor
  bool refresh_kernel = true;
  double newton_ridge = -1.0;
};

struct ScheduleSpec {
  long steps = 100;         // train
  double t_end = 1.0;       // flow
  double dt = 0.0;          // flow; <= 0 resolves to 1e-3 / lambda_max of the run kernel
  double t_start = 0.0;     // flow; nag defaults to dt
  Index stride = 1;         // record every stride steps (first and last always)
  Index kernel_stride = 0;  // train: kernel monitors every kernel_stride steps; 0 = never
};

/// auto_pick uses the span representation whenever the input dimension
/// exceeds the sample count (every gradient-span update then costs one
/// n x n x m product instead of two n x m x p ones) and the optimizer is not
/// newton; direct is the textbook loop on W itself.
enum class Engine { auto_pick, direct, subspace };

struct ExperimentConfig {
  std::string label = "run";
  DatasetSpec dataset;
  NetworkSpec network;
  std::optional<OptimizerSpec> optimizer;  // train runs
  std::optional<FlowSpec> flow;            // flow runs
  ScheduleSpec schedule;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;  // empty: artifacts are returned but not written
  Engine engine = Engine::auto_pick;
  bool dump_kernels = false;     // kernel study: also write the matrices
  nlohmann::json sweep;          // grid {"dotted.key": [values...]}
};

/// Default dataset seed for a run seed (splitmix-style offset keeps the data
/// and network streams unrelated while staying reproducible).
std::uint64_t derive_data_seed(std::uint64_t run_seed);

ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "dotted.path=value" override on the raw config JSON; the value is parsed
/// as JSON, falling back to a bare string.
void apply_override(nlohmann::json& j, const std::string& key_eq_value);

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t run_seed);

/// Plain CSV matrix round-trip (one row per line, %.17g cells).
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// One discrete-optimizer run / one integrated flow for one seed. Divergence
/// does not throw: it flags the summary and truncates the trace.
RunArtifact train_single(const ExperimentConfig& cfg, std::uint64_t seed);
RunArtifact flow_single(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOutcome {
  RunArtifact artifact;
  std::filesystem::path base;  // artifact files base path; empty if not written
};

std::vector<RunOutcome> run_train(const ExperimentConfig& cfg);
std::vector<RunOutcome> run_flow(const ExperimentConfig& cfg);

/// Empirical-vs-analytic kernel comparison, one JSON row per seed; writes
/// kernel_summary.csv (and the matrices with dump_kernels) under out_dir.
nlohmann::json run_kernel_study(const ExperimentConfig& cfg);

struct SweepResult {
  nlohmann::json rows;  // one object per grid cell x seed, in grid order
  bool all_completed = true;
};

/// Cartesian product of the sweep grid over the base config; cells run
/// concurrently up to `jobs` threads, each cell internally sequential.
/// Per-cell errors are recorded in the row and do not stop the sweep.
SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1);

struct RateRow {
  std::string path;
  bool ok = false;
  std::string error;
  RateFit fit;
};

std::vector<RateRow> run_rates(const std::vector<std::filesystem::path>& bases, FitMode mode,
                               double window, bool envelope);

}  // namespace ntkflow
