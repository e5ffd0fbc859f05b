#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ntkflow {

inline constexpr int trace_schema_version = 1;

/// One sampled instant of a run. Monitors that do not apply to the run kind
/// stay unset and serialize as empty CSV cells.
struct TraceRecord {
  long step = 0;
  double t = 0;
  double loss = 0;
  std::optional<double> pseudo_loss;   // 0.5 d^T H d at the sampled kernel
  std::optional<double> lambda_min;    // min eigenvalue of the sampled kernel
  std::optional<double> kernel_drift;  // |H(t) - H(0)|_2
  std::optional<double> max_drift;     // max_r |w_r(t) - w_r(0)|
  std::optional<double> v_hb;          // heavy-ball Lyapunov value
  std::optional<double> v_nag;         // time-weighted nag Lyapunov value
  std::optional<double> e_polyak;      // loss + kinetic energy
};

struct RunSummary {
  double final_loss = 0;
  std::optional<double> rate_linear;    // d ln L / d t (trailing window)
  std::optional<double> rate_loglog;    // d ln L / d ln t (trailing window)
  std::optional<double> max_drift;
  std::optional<double> min_lambda;
  std::optional<double> kernel_drift_final;
  std::optional<double> kernel_drift_frobenius;
  bool diverged = false;
  std::string message;
  long steps = 0;
  double wall_seconds = 0;  // in-memory only: never serialized, artifacts stay byte-stable
};

/// A completed run: resolved config snapshot, seed, sampled trace, summary.
/// Re-running the snapshot with the same seed reproduces the files byte for byte.
struct RunArtifact {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  RunSummary summary;
};

/// Writes base.csv (one row per TraceRecord, header
/// step,t,loss,pseudo_loss,lambda_min,kernel_drift,max_drift,v_hb,v_nag,e_polyak)
/// and base.json (schema version, seed, config snapshot, summary). Floats are
/// printed with %.17g, which round-trips doubles losslessly.
void write_trace(const RunArtifact& artifact, const std::filesystem::path& base);

/// Reads base.csv + base.json back. Throws std::runtime_error on a missing or
/// malformed file, a schema version newer than this build, a non-monotone time
/// column, or a negative/NaN loss.
RunArtifact read_trace(const std::filesystem::path& base);

/// %.17g formatting used by every artifact writer.
std::string format_double(double v);

}  // namespace ntkflow
