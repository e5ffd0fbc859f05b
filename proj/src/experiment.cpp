#include "ntkflow/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ntkflow/compute.hpp"
#include "ntkflow/data.hpp"
#include "ntkflow/kernel.hpp"

namespace ntkflow {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kWeightGuard = 1e12;

double elapsed_seconds(Clock::time_point from) {
  return std::chrono::duration<double>(Clock::now() - from).count();
}

// ---- enum <-> string -------------------------------------------------------

const char* optimizer_name(Optimizer k) {
  switch (k) {
    case Optimizer::gd: return "gd";
    case Optimizer::heavy_ball: return "heavy_ball";
    case Optimizer::nag: return "nag";
    case Optimizer::nag_sc: return "nag_sc";
    case Optimizer::higher_momentum: return "higher_momentum";
    case Optimizer::newton: return "newton";
  }
  return "?";
}

Optimizer optimizer_from(const std::string& s) {
  if (s == "gd") return Optimizer::gd;
  if (s == "heavy_ball") return Optimizer::heavy_ball;
  if (s == "nag") return Optimizer::nag;
  if (s == "nag_sc") return Optimizer::nag_sc;
  if (s == "higher_momentum") return Optimizer::higher_momentum;
  if (s == "newton") return Optimizer::newton;
  throw std::invalid_argument("config: unknown optimizer kind '" + s + "'");
}

const char* variant_name(FlowVariant v) {
  switch (v) {
    case FlowVariant::gd: return "gd";
    case FlowVariant::hbf: return "hbf";
    case FlowVariant::nag: return "nag";
    case FlowVariant::hm: return "hm";
    case FlowVariant::newton: return "newton";
  }
  return "?";
}

FlowVariant variant_from(const std::string& s) {
  if (s == "gd") return FlowVariant::gd;
  if (s == "hbf") return FlowVariant::hbf;
  if (s == "nag") return FlowVariant::nag;
  if (s == "hm") return FlowVariant::hm;
  if (s == "newton") return FlowVariant::newton;
  throw std::invalid_argument("config: unknown flow variant '" + s + "'");
}

const char* kernel_source_name(FlowSpec::KernelSource k) {
  switch (k) {
    case FlowSpec::KernelSource::analytic: return "analytic";
    case FlowSpec::KernelSource::empirical: return "empirical";
    case FlowSpec::KernelSource::file: return "file";
  }
  return "?";
}

FlowSpec::KernelSource kernel_source_from(const std::string& s) {
  if (s == "analytic") return FlowSpec::KernelSource::analytic;
  if (s == "empirical") return FlowSpec::KernelSource::empirical;
  if (s == "file") return FlowSpec::KernelSource::file;
  throw std::invalid_argument("config: unknown kernel source '" + s + "'");
}

const char* engine_name(Engine e) {
  switch (e) {
    case Engine::auto_pick: return "auto";
    case Engine::direct: return "direct";
    case Engine::subspace: return "subspace";
  }
  return "?";
}

Engine engine_from(const std::string& s) {
  if (s == "auto") return Engine::auto_pick;
  if (s == "direct") return Engine::direct;
  if (s == "subspace") return Engine::subspace;
  throw std::invalid_argument("config: unknown engine '" + s + "'");
}

// ---- json helpers -----------------------------------------------------------

void expect_keys(const json& j, const char* where,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw std::invalid_argument(std::string("config: ") + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T dflt) {
  if (!j.contains(key)) return dflt;
  return j.at(key).get<T>();
}

void set_path(json& j, const std::string& path, json value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key =
        dot == std::string::npos ? path.substr(start) : path.substr(start, dot - start);
    if (key.empty()) throw std::invalid_argument("override: empty path segment in '" + path + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(value);
      return;
    }
    cur = &((*cur)[key]);
    start = dot + 1;
  }
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void write_rows_csv(const std::filesystem::path& path, const std::vector<std::string>& cols,
                    const json& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      out << (i ? "," : "");
      if (row.contains(cols[i])) out << csv_cell(row.at(cols[i]));
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---- shared run plumbing ----------------------------------------------------

void apply_step(Matrix& W, const Matrix& grad, const OptimizerSpec& o, OptimizerState& st) {
  switch (o.kind) {
    case Optimizer::gd:
      gd_step(W, grad, o.eta, st);
      return;
    case Optimizer::heavy_ball:
      hb_step(W, grad, o.eta, o.beta, st);
      return;
    case Optimizer::nag:
      nag_step(W, grad, o.eta, o.gamma, st);
      return;
    case Optimizer::nag_sc:
      nagsc_step(W, grad, o.eta, o.lambda0, st);
      return;
    case Optimizer::higher_momentum:
      hm_step(W, grad, o.eta, o.betas, st);
      return;
    case Optimizer::newton:
      throw std::logic_error("apply_step: newton is handled by its own path");
  }
}

/// Collects TraceRecords and the running summary pieces shared by both
/// training engines. Kernel monitors run only when a Z is handed in.
class Recorder {
 public:
  Recorder(const ScheduleSpec& sched, const NetworkState& net, const Dataset& data)
      : sched_(sched), net_(net), data_(data) {}

  bool due(long k, long steps) const { return k % sched_.stride == 0 || k == steps; }
  bool kernel_due(long k, long steps) const {
    return sched_.kernel_stride > 0 && (k % sched_.kernel_stride == 0 || k == steps);
  }

  void add(long k, double t, double loss, double max_drift, const Vector& delta,
           const Matrix* Z) {
    TraceRecord rec;
    rec.step = k;
    rec.t = t;
    rec.loss = loss;
    rec.max_drift = max_drift;
    max_drift_ = std::max(max_drift_, max_drift);
    if (Z != nullptr) {
      const Matrix H = empirical_ntk(net_, data_, *Z);
      if (!have_h0_) {
        H0_ = H;
        have_h0_ = true;
      }
      rec.pseudo_loss = pseudo_loss(delta, H);
      rec.lambda_min = min_eigenvalue(H);
      rec.kernel_drift = kernel_drift(H, H0_);
      drift_spectral_ = *rec.kernel_drift;
      drift_frobenius_ = kernel_drift_frobenius(H, H0_);
      min_lambda_ = std::min(min_lambda_, *rec.lambda_min);
    }
    records_.push_back(std::move(rec));
  }

  RunSummary finish(bool diverged, std::string message, long steps_done, double wall) const {
    RunSummary s;
    s.final_loss = records_.empty() ? 0.0 : records_.back().loss;
    s.diverged = diverged;
    s.message = std::move(message);
    s.steps = steps_done;
    s.wall_seconds = wall;
    if (!records_.empty()) s.max_drift = max_drift_;
    if (have_h0_) {
      s.min_lambda = min_lambda_;
      s.kernel_drift_final = drift_spectral_;
      s.kernel_drift_frobenius = drift_frobenius_;
    }
    std::vector<double> t, L;
    t.reserve(records_.size());
    L.reserve(records_.size());
    for (const auto& r : records_) {
      t.push_back(r.t);
      L.push_back(r.loss);
    }
    try {
      s.rate_linear = fit_rate(t, L, FitMode::linear_time).slope;
    } catch (const std::exception&) {
    }
    try {
      s.rate_loglog = fit_rate(t, L, FitMode::log_time).slope;
    } catch (const std::exception&) {
    }
    return s;
  }

  std::vector<TraceRecord> take_records() { return std::move(records_); }

 private:
  const ScheduleSpec& sched_;
  const NetworkState& net_;
  const Dataset& data_;
  std::vector<TraceRecord> records_;
  Matrix H0_;
  bool have_h0_ = false;
  double max_drift_ = 0;
  double min_lambda_ = std::numeric_limits<double>::infinity();
  double drift_spectral_ = 0;
  double drift_frobenius_ = 0;
};

std::string guard_message(long k, double norm) {
  std::ostringstream os;
  os << "run diverged at step " << k << " (weight norm " << norm << ")";
  return os.str();
}

Engine resolve_engine(const ExperimentConfig& cfg, const Dataset& data, Optimizer kind) {
  if (cfg.engine == Engine::direct) return Engine::direct;
  if (cfg.engine == Engine::subspace) {
    if (kind == Optimizer::newton)
      throw std::invalid_argument("engine: newton steps leave the data row span; use direct");
    return Engine::subspace;
  }
  return (kind != Optimizer::newton && data.p() > data.n()) ? Engine::subspace : Engine::direct;
}

OptimizerSpec resolve_optimizer(const OptimizerSpec& in, const Dataset& data) {
  OptimizerSpec o = in;
  if (o.kind == Optimizer::nag_sc && o.lambda0 <= 0) {
    o.lambda0 = min_eigenvalue(analytic_ntk(data));
    if (o.lambda0 <= 0)
      throw std::invalid_argument("nag_sc: analytic kernel has no positive lambda_min");
  }
  return o;
}

RunArtifact train_direct(const ExperimentConfig& cfg, const OptimizerSpec& opt,
                         const Dataset& data, NetworkState net) {
  const auto t_begin = Clock::now();
  const ScheduleSpec& sched = cfg.schedule;
  const Matrix W0 = net.W;
  OptimizerState st = make_optimizer_state(opt.kind);
  NewtonOptions nopt;
  nopt.eta = opt.eta;
  nopt.ridge = opt.ridge;
  nopt.cond_limit = opt.cond_limit;
  Recorder rec(sched, net, data);
  bool diverged = false;
  std::string message;
  long done = 0;
  for (long k = 0;; ++k) {
    const double wnorm = net.W.allFinite() ? net.W.norm()
                                           : std::numeric_limits<double>::infinity();
    if (!(wnorm <= kWeightGuard)) {
      diverged = true;
      message = guard_message(k, wnorm);
      break;
    }
    const Matrix Z = activations(net, data);
    const Prediction pred = forward(net, data, Z);
    const double loss = mse_loss(pred);
    if (!std::isfinite(loss)) {
      diverged = true;
      message = guard_message(k, wnorm);
      break;
    }
    if (rec.due(k, sched.steps)) {
      double drift = 0;
      for (Index r = 0; r < net.m(); ++r)
        drift = std::max(drift, (net.W.row(r) - W0.row(r)).norm());
      rec.add(k, opt.eta * static_cast<double>(k), loss, drift, pred.delta,
              rec.kernel_due(k, sched.steps) ? &Z : nullptr);
    }
    if (k == sched.steps) break;
    try {
      if (opt.kind == Optimizer::newton) {
        newton_step(net, data, Z, pred.delta, nopt, st);
      } else {
        const Matrix grad = loss_gradient(net, data, Z, pred.delta);
        apply_step(net.W, grad, opt, st);
      }
    } catch (const std::runtime_error& e) {
      diverged = true;
      message = e.what();
      break;
    }
    done = k + 1;
  }
  RunArtifact art;
  art.summary = rec.finish(diverged, std::move(message), done, elapsed_seconds(t_begin));
  art.records = rec.take_records();
  return art;
}

/// Gradient-span engine: every non-Newton update direction is a combination
/// of data rows, so the run is carried as W = W0 + U X with U (m x n). The
/// step recurrences act on U with the span-coordinate gradient C, and the
/// pre-activations follow from Z = Z0 + (X X^T) U^T at one n x n x m product
/// per step.
RunArtifact train_subspace(const ExperimentConfig& cfg, const OptimizerSpec& opt,
                           const Dataset& data, const NetworkState& net) {
  const auto t_begin = Clock::now();
  const ScheduleSpec& sched = cfg.schedule;
  const Index n = data.n(), m = net.m();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  const Matrix G = compute::gram(data.X);
  const Matrix Z0 = activations(net, data);
  Matrix U = Matrix::Zero(m, n);
  Matrix Z(n, m), C(m, n);
  OptimizerState st = make_optimizer_state(opt.kind);
  Recorder rec(sched, net, data);
  bool diverged = false;
  std::string message;
  long done = 0;
  for (long k = 0;; ++k) {
    const double unorm = U.allFinite() ? U.norm() : std::numeric_limits<double>::infinity();
    if (!(unorm <= kWeightGuard)) {
      diverged = true;
      message = guard_message(k, unorm);
      break;
    }
    Z.noalias() = G * U.transpose();
    Z += Z0;
    Vector f(n);
    for (Index i = 0; i < n; ++i) {
      double acc = 0;
      const double* zi = Z.row(i).data();
      for (Index r = 0; r < m; ++r)
        if (zi[r] >= 0.0) acc += net.a[r] * zi[r];
      f[i] = inv_sqrt_m * acc;
    }
    const Vector delta = f - data.y;
    const double loss = 0.5 * delta.squaredNorm();
    if (!std::isfinite(loss)) {
      diverged = true;
      message = guard_message(k, unorm);
      break;
    }
    if (rec.due(k, sched.steps)) {
      // |w_r - w0_r| = sqrt(u_r^T G u_r) without materializing W.
      const Matrix UG = U * G;
      double drift = 0;
      for (Index r = 0; r < m; ++r)
        drift = std::max(drift, std::sqrt(std::max(0.0, UG.row(r).dot(U.row(r)))));
      rec.add(k, opt.eta * static_cast<double>(k), loss, drift, delta,
              rec.kernel_due(k, sched.steps) ? &Z : nullptr);
    }
    if (k == sched.steps) break;
    for (Index r = 0; r < m; ++r) {
      const double ar = inv_sqrt_m * net.a[r];
      double* cr = C.row(r).data();
      for (Index i = 0; i < n; ++i) cr[i] = Z(i, r) >= 0.0 ? ar * delta[i] : 0.0;
    }
    apply_step(U, C, opt, st);
    done = k + 1;
  }
  RunArtifact art;
  art.summary = rec.finish(diverged, std::move(message), done, elapsed_seconds(t_begin));
  art.records = rec.take_records();
  return art;
}

}  // namespace

std::uint64_t derive_data_seed(std::uint64_t run_seed) {
  return run_seed ^ 0x9e3779b97f4a7c15ull;
}

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t run_seed) {
  const std::uint64_t seed = spec.seed ? *spec.seed : derive_data_seed(run_seed);
  if (spec.kind == DatasetSpec::Kind::synthetic)
    return synthetic_dataset(spec.n, spec.p, seed, spec.target_scale);
  return load_mnist(spec.images, spec.labels, spec.n_sub, seed);
}

ExperimentConfig parse_config(const json& j) {
  expect_keys(j, "root",
              {"label", "dataset", "network", "optimizer", "flow", "schedule", "seeds",
               "out_dir", "engine", "dump_kernels", "sweep", "resolved"});
  ExperimentConfig cfg;
  cfg.label = get_or<std::string>(j, "label", cfg.label);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    expect_keys(d, "dataset",
                {"kind", "n", "p", "target_scale", "seed", "images", "labels", "n_sub"});
    const std::string kind = get_or<std::string>(d, "kind", "synthetic");
    if (kind == "synthetic") {
      cfg.dataset.kind = DatasetSpec::Kind::synthetic;
    } else if (kind == "mnist") {
      cfg.dataset.kind = DatasetSpec::Kind::mnist;
    } else {
      throw std::invalid_argument("config: unknown dataset kind '" + kind + "'");
    }
    cfg.dataset.n = get_or<Index>(d, "n", cfg.dataset.n);
    cfg.dataset.p = get_or<Index>(d, "p", cfg.dataset.p);
    cfg.dataset.target_scale = get_or<double>(d, "target_scale", cfg.dataset.target_scale);
    cfg.dataset.images = get_or<std::string>(d, "images", "");
    cfg.dataset.labels = get_or<std::string>(d, "labels", "");
    cfg.dataset.n_sub = get_or<Index>(d, "n_sub", cfg.dataset.n_sub);
    if (d.contains("seed")) cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
    if (cfg.dataset.kind == DatasetSpec::Kind::mnist &&
        (cfg.dataset.images.empty() || cfg.dataset.labels.empty()))
      throw std::invalid_argument("config: mnist dataset needs images and labels paths");
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    expect_keys(n, "network", {"m"});
    cfg.network.m = get_or<Index>(n, "m", cfg.network.m);
  }
  if (cfg.network.m < 1) throw std::invalid_argument("config: network.m must be >= 1");
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    expect_keys(o, "optimizer",
                {"kind", "eta", "beta", "gamma", "betas", "lambda0", "ridge", "cond_limit"});
    OptimizerSpec spec;
    spec.kind = optimizer_from(get_or<std::string>(o, "kind", "gd"));
    spec.eta = get_or<double>(o, "eta", spec.eta);
    spec.beta = get_or<double>(o, "beta", spec.beta);
    spec.gamma = get_or<double>(o, "gamma", spec.gamma);
    spec.betas = get_or<std::vector<double>>(o, "betas", spec.betas);
    spec.lambda0 = get_or<double>(o, "lambda0", spec.lambda0);
    spec.ridge = get_or<double>(o, "ridge", spec.ridge);
    spec.cond_limit = get_or<double>(o, "cond_limit", spec.cond_limit);
    if (!(spec.eta > 0)) throw std::invalid_argument("config: optimizer.eta must be positive");
    if (spec.beta < 0) throw std::invalid_argument("config: optimizer.beta must be >= 0");
    if (spec.kind == Optimizer::nag && !(spec.gamma > 0))
      throw std::invalid_argument("config: nag needs gamma > 0");
    cfg.optimizer = std::move(spec);
  }
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    expect_keys(f, "flow",
                {"variant", "mode", "kernel", "kernel_path", "friction", "gamma", "frictions",
                 "lambda0", "rate_alpha", "refresh_kernel", "newton_ridge"});
    FlowSpec spec;
    spec.variant = variant_from(get_or<std::string>(f, "variant", "gd"));
    const std::string mode = get_or<std::string>(f, "mode", "weight");
    if (mode == "weight") {
      spec.error_mode = false;
    } else if (mode == "error") {
      spec.error_mode = true;
    } else {
      throw std::invalid_argument("config: flow.mode must be 'weight' or 'error'");
    }
    spec.kernel_source = kernel_source_from(get_or<std::string>(f, "kernel", "analytic"));
    spec.kernel_path = get_or<std::string>(f, "kernel_path", "");
    spec.friction = get_or<double>(f, "friction", spec.friction);
    spec.gamma = get_or<double>(f, "gamma", spec.gamma);
    spec.frictions = get_or<std::vector<double>>(f, "frictions", spec.frictions);
    spec.lambda0 = get_or<double>(f, "lambda0", spec.lambda0);
    spec.rate_alpha = get_or<double>(f, "rate_alpha", spec.rate_alpha);
    spec.refresh_kernel = get_or<bool>(f, "refresh_kernel", spec.refresh_kernel);
    spec.newton_ridge = get_or<double>(f, "newton_ridge", spec.newton_ridge);
    if (spec.kernel_source == FlowSpec::KernelSource::file && spec.kernel_path.empty())
      throw std::invalid_argument("config: flow.kernel = file needs kernel_path");
    cfg.flow = std::move(spec);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    expect_keys(s, "schedule", {"steps", "t_end", "dt", "t_start", "stride", "kernel_stride"});
    cfg.schedule.steps = get_or<long>(s, "steps", cfg.schedule.steps);
    cfg.schedule.t_end = get_or<double>(s, "t_end", cfg.schedule.t_end);
    cfg.schedule.dt = get_or<double>(s, "dt", cfg.schedule.dt);
    cfg.schedule.t_start = get_or<double>(s, "t_start", cfg.schedule.t_start);
    cfg.schedule.stride = get_or<Index>(s, "stride", cfg.schedule.stride);
    cfg.schedule.kernel_stride = get_or<Index>(s, "kernel_stride", cfg.schedule.kernel_stride);
  }
  if (cfg.schedule.steps < 0) throw std::invalid_argument("config: schedule.steps must be >= 0");
  if (cfg.schedule.stride < 1) throw std::invalid_argument("config: schedule.stride must be >= 1");
  if (cfg.schedule.kernel_stride < 0)
    throw std::invalid_argument("config: schedule.kernel_stride must be >= 0");
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
  cfg.engine = engine_from(get_or<std::string>(j, "engine", "auto"));
  cfg.dump_kernels = get_or<bool>(j, "dump_kernels", cfg.dump_kernels);
  if (j.contains("sweep")) cfg.sweep = j.at("sweep");
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["label"] = cfg.label;
  json d;
  d["kind"] = cfg.dataset.kind == DatasetSpec::Kind::synthetic ? "synthetic" : "mnist";
  d["n"] = cfg.dataset.n;
  d["p"] = cfg.dataset.p;
  d["target_scale"] = cfg.dataset.target_scale;
  if (cfg.dataset.kind == DatasetSpec::Kind::mnist) {
    d["images"] = cfg.dataset.images;
    d["labels"] = cfg.dataset.labels;
    d["n_sub"] = cfg.dataset.n_sub;
  }
  if (cfg.dataset.seed) d["seed"] = *cfg.dataset.seed;
  j["dataset"] = std::move(d);
  j["network"] = json{{"m", cfg.network.m}};
  if (cfg.optimizer) {
    const OptimizerSpec& o = *cfg.optimizer;
    json oj;
    oj["kind"] = optimizer_name(o.kind);
    oj["eta"] = o.eta;
    oj["beta"] = o.beta;
    oj["gamma"] = o.gamma;
    oj["betas"] = o.betas;
    oj["lambda0"] = o.lambda0;
    oj["ridge"] = o.ridge;
    oj["cond_limit"] = o.cond_limit;
    j["optimizer"] = std::move(oj);
  }
  if (cfg.flow) {
    const FlowSpec& f = *cfg.flow;
    json fj;
    fj["variant"] = variant_name(f.variant);
    fj["mode"] = f.error_mode ? "error" : "weight";
    fj["kernel"] = kernel_source_name(f.kernel_source);
    if (!f.kernel_path.empty()) fj["kernel_path"] = f.kernel_path;
    fj["friction"] = f.friction;
    fj["gamma"] = f.gamma;
    fj["frictions"] = f.frictions;
    fj["lambda0"] = f.lambda0;
    fj["rate_alpha"] = f.rate_alpha;
    fj["refresh_kernel"] = f.refresh_kernel;
    fj["newton_ridge"] = f.newton_ridge;
    j["flow"] = std::move(fj);
  }
  json s;
  s["steps"] = cfg.schedule.steps;
  s["t_end"] = cfg.schedule.t_end;
  s["dt"] = cfg.schedule.dt;
  s["t_start"] = cfg.schedule.t_start;
  s["stride"] = cfg.schedule.stride;
  s["kernel_stride"] = cfg.schedule.kernel_stride;
  j["schedule"] = std::move(s);
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["engine"] = engine_name(cfg.engine);
  j["dump_kernels"] = cfg.dump_kernels;
  if (!cfg.sweep.is_null()) j["sweep"] = cfg.sweep;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  in >> j;
  return parse_config(j);
}

void apply_override(json& j, const std::string& key_eq_value) {
  const std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like key.path=value: " + key_eq_value);
  const std::string path = key_eq_value.substr(0, eq);
  const std::string raw = key_eq_value.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare string
  }
  set_path(j, path, std::move(value));
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_double(M(i, c));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = line.find(',', start);
      const std::string cell =
          comma == std::string::npos ? line.substr(start) : line.substr(start, comma - start);
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::runtime_error("bad matrix cell '" + cell + "'");
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged matrix csv " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix csv " + path.string());
  Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < M.rows(); ++i)
    for (Index c = 0; c < M.cols(); ++c)
      M(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  return M;
}

RunArtifact train_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.optimizer) throw std::invalid_argument("train: config has no optimizer section");
  const Dataset data = make_dataset(cfg.dataset, seed);
  NetworkState net = init_network(data.p(), cfg.network.m, seed);
  const OptimizerSpec opt = resolve_optimizer(*cfg.optimizer, data);
  const Engine engine = resolve_engine(cfg, data, opt.kind);
  RunArtifact art = engine == Engine::subspace ? train_subspace(cfg, opt, data, net)
                                               : train_direct(cfg, opt, data, std::move(net));
  art.seed = seed;
  art.config = config_to_json(cfg);
  art.config["resolved"] = json{{"seed", seed},
                                {"data_seed", cfg.dataset.seed ? *cfg.dataset.seed
                                                               : derive_data_seed(seed)},
                                {"engine", engine_name(engine)},
                                {"lambda0", opt.lambda0}};
  return art;
}

RunArtifact flow_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.flow) throw std::invalid_argument("flow: config has no flow section");
  const auto t_begin = Clock::now();
  const Dataset data = make_dataset(cfg.dataset, seed);
  const NetworkState net = init_network(data.p(), cfg.network.m, seed);
  const FlowSpec& fs = *cfg.flow;
  const ScheduleSpec& sched = cfg.schedule;

  FlowConfig fc;
  fc.variant = fs.variant;
  fc.t_end = sched.t_end;
  fc.t_start = sched.t_start;
  fc.stride = sched.stride;
  fc.gamma = fs.gamma;
  fc.frictions = fs.frictions;
  fc.rate_alpha = fs.rate_alpha;
  fc.refresh_kernel = fs.refresh_kernel;
  fc.newton_ridge = fs.newton_ridge;

  FlowResult res;
  KernelMatrix K;
  if (fs.error_mode) {
    Matrix H;
    switch (fs.kernel_source) {
      case FlowSpec::KernelSource::analytic:
        H = analytic_ntk(data);
        break;
      case FlowSpec::KernelSource::empirical:
        H = empirical_ntk(net, data);
        break;
      case FlowSpec::KernelSource::file:
        H = read_matrix_csv(fs.kernel_path);
        break;
    }
    K = make_kernel(std::move(H));
  } else {
    K = make_kernel(empirical_ntk(net, data));
  }
  fc.dt = sched.dt > 0 ? sched.dt : default_flow_dt(K.lambda_max);
  fc.lambda0 = fs.lambda0 > 0 ? fs.lambda0 : std::max(K.lambda_min, 0.0);
  if (fs.friction >= 0) {
    fc.friction = fs.friction;
  } else if (fc.variant == FlowVariant::hbf) {
    if (!(fc.lambda0 > 0))
      throw std::invalid_argument("flow: cannot derive the hbf friction without lambda0 > 0");
    fc.friction = hbf_theorem_friction(fc.lambda0);
  } else {
    fc.friction = 0;
  }
  if (fs.error_mode) {
    const Vector delta0 = forward(net, data).delta;
    res = integrate_error_flow(K, delta0, fc);
  } else {
    res = integrate_weight_flow(net, data, fc);
  }

  RunArtifact art;
  art.records = std::move(res.records);
  art.seed = seed;
  RunSummary& s = art.summary;
  s.final_loss = art.records.empty() ? 0.0 : art.records.back().loss;
  s.diverged = res.diverged;
  s.message = res.message;
  s.steps = art.records.empty() ? 0 : art.records.back().step;
  s.wall_seconds = elapsed_seconds(t_begin);
  if (!fs.error_mode) s.max_drift = res.max_drift;
  double min_lambda = std::numeric_limits<double>::infinity();
  bool any_lambda = false;
  double drift_final = 0;
  bool any_drift = false;
  for (const auto& r : art.records) {
    if (r.lambda_min) {
      min_lambda = std::min(min_lambda, *r.lambda_min);
      any_lambda = true;
    }
    if (r.kernel_drift) {
      drift_final = *r.kernel_drift;
      any_drift = true;
    }
  }
  if (any_lambda) s.min_lambda = min_lambda;
  if (any_drift) s.kernel_drift_final = drift_final;
  {
    std::vector<double> t, L;
    t.reserve(art.records.size());
    L.reserve(art.records.size());
    for (const auto& r : art.records) {
      t.push_back(r.t);
      L.push_back(r.loss);
    }
    try {
      s.rate_linear = fit_rate(t, L, FitMode::linear_time).slope;
    } catch (const std::exception&) {
    }
    try {
      s.rate_loglog = fit_rate(t, L, FitMode::log_time).slope;
    } catch (const std::exception&) {
    }
  }
  art.config = config_to_json(cfg);
  art.config["resolved"] =
      json{{"seed", seed},
           {"data_seed", cfg.dataset.seed ? *cfg.dataset.seed : derive_data_seed(seed)},
           {"dt", fc.dt},
           {"friction", fc.friction},
           {"lambda0", fc.lambda0}};
  return art;
}

namespace {

std::filesystem::path artifact_base(const ExperimentConfig& cfg, std::uint64_t seed) {
  return std::filesystem::path(cfg.out_dir) / (cfg.label + "_seed" + std::to_string(seed));
}

std::vector<RunOutcome> run_many(const ExperimentConfig& cfg,
                                 RunArtifact (*single)(const ExperimentConfig&, std::uint64_t)) {
  std::vector<RunOutcome> out;
  out.reserve(cfg.seeds.size());
  for (const std::uint64_t seed : cfg.seeds) {
    RunOutcome o;
    o.artifact = single(cfg, seed);
    if (!cfg.out_dir.empty()) {
      o.base = artifact_base(cfg, seed);
      write_trace(o.artifact, o.base);
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace

std::vector<RunOutcome> run_train(const ExperimentConfig& cfg) {
  return run_many(cfg, &train_single);
}

std::vector<RunOutcome> run_flow(const ExperimentConfig& cfg) {
  return run_many(cfg, &flow_single);
}

json run_kernel_study(const ExperimentConfig& cfg) {
  json rows = json::array();
  for (const std::uint64_t seed : cfg.seeds) {
    const Dataset data = make_dataset(cfg.dataset, seed);
    const NetworkState net = init_network(data.p(), cfg.network.m, seed);
    const Matrix H0 = empirical_ntk(net, data);
    const Matrix Hinf = analytic_ntk(data);
    const KernelMatrix k0 = make_kernel(H0);
    const KernelMatrix kinf = make_kernel(Hinf);
    json row;
    row["seed"] = seed;
    row["n"] = data.n();
    row["p"] = data.p();
    row["m"] = cfg.network.m;
    row["lambda_min_empirical"] = k0.lambda_min;
    row["lambda_max_empirical"] = k0.lambda_max;
    row["trace_empirical"] = k0.trace;
    row["lambda_min_analytic"] = kinf.lambda_min;
    row["lambda_max_analytic"] = kinf.lambda_max;
    row["trace_analytic"] = kinf.trace;
    row["dist_frobenius"] = kernel_drift_frobenius(H0, Hinf);
    row["dist_spectral"] = kernel_drift(H0, Hinf);
    rows.push_back(std::move(row));
    if (!cfg.out_dir.empty() && cfg.dump_kernels) {
      std::filesystem::create_directories(cfg.out_dir);
      const std::string tag = "_seed" + std::to_string(seed) + ".csv";
      write_matrix_csv(std::filesystem::path(cfg.out_dir) / (cfg.label + "_H_empirical" + tag),
                       H0);
      write_matrix_csv(std::filesystem::path(cfg.out_dir) / (cfg.label + "_H_analytic" + tag),
                       Hinf);
    }
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_rows_csv(std::filesystem::path(cfg.out_dir) / (cfg.label + "_kernel_summary.csv"),
                   {"seed", "n", "p", "m", "lambda_min_empirical", "lambda_max_empirical",
                    "trace_empirical", "lambda_min_analytic", "lambda_max_analytic",
                    "trace_analytic", "dist_frobenius", "dist_spectral"},
                   rows);
  }
  return rows;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs) {
  if (jobs < 1) throw std::invalid_argument("sweep: jobs must be >= 1");
  json grid = cfg.sweep.is_object() && cfg.sweep.contains("grid") ? cfg.sweep.at("grid")
                                                                  : cfg.sweep;
  if (grid.is_null()) grid = json::object();
  if (!grid.is_object()) throw std::invalid_argument("sweep: grid must be an object");
  std::vector<std::string> keys;
  std::vector<json> values;
  std::size_t cells = 1;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    keys.push_back(it.key());
    values.push_back(it.value().is_array() ? it.value() : json::array({it.value()}));
    if (values.back().empty()) throw std::invalid_argument("sweep: empty value list for " + it.key());
    cells *= values.back().size();
  }
  json base = config_to_json(cfg);
  base.erase("sweep");

  const bool flow_mode = cfg.flow.has_value() && !cfg.optimizer.has_value();
  struct Cell {
    json rows;  // one per seed
    bool completed = true;
  };
  std::vector<Cell> results(cells);

  auto run_cell = [&](std::size_t c) {
    Cell& cell = results[c];
    cell.rows = json::array();
    json picks = json::object();
    try {
      json jc = base;
      std::size_t rest = c;
      for (std::size_t k = 0; k < keys.size(); ++k) {
        // odometer order: the last grid key varies fastest
        const std::size_t radix = values[keys.size() - 1 - k].size();
        const std::size_t digit = rest % radix;
        rest /= radix;
        const std::string& key = keys[keys.size() - 1 - k];
        set_path(jc, key, values[keys.size() - 1 - k][digit]);
        picks[key] = values[keys.size() - 1 - k][digit];
      }
      jc["label"] = cfg.label + "_c" + std::to_string(c);
      const ExperimentConfig ccfg = parse_config(jc);
      for (const std::uint64_t seed : ccfg.seeds) {
        json row;
        row["cell"] = c;
        for (auto it = picks.begin(); it != picks.end(); ++it) row[it.key()] = it.value();
        row["seed"] = seed;
        try {
          RunArtifact art = flow_mode ? flow_single(ccfg, seed) : train_single(ccfg, seed);
          if (!ccfg.out_dir.empty()) {
            std::filesystem::create_directories(ccfg.out_dir);
            write_trace(art, artifact_base(ccfg, seed));
          }
          const RunSummary& s = art.summary;
          row["final_loss"] = s.final_loss;
          if (s.rate_linear) row["rate_linear"] = *s.rate_linear;
          if (s.rate_loglog) row["rate_loglog"] = *s.rate_loglog;
          if (s.max_drift) row["max_drift"] = *s.max_drift;
          if (s.min_lambda) row["min_lambda"] = *s.min_lambda;
          row["diverged"] = s.diverged;
          row["steps"] = s.steps;
          row["status"] = "ok";
        } catch (const std::exception& e) {
          row["status"] = std::string("error: ") + e.what();
          cell.completed = false;
        }
        cell.rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      json row;
      row["cell"] = c;
      for (auto it = picks.begin(); it != picks.end(); ++it) row[it.key()] = it.value();
      row["status"] = std::string("error: ") + e.what();
      cell.rows.push_back(std::move(row));
      cell.completed = false;
    }
  };

  if (jobs == 1 || cells <= 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      compute::set_thread_limit(1);  // cells own the concurrency budget
      for (std::size_t c = next.fetch_add(1); c < cells; c = next.fetch_add(1)) run_cell(c);
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells);
    pool.reserve(count);
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepResult out;
  out.rows = json::array();
  for (const Cell& cell : results) {
    out.all_completed = out.all_completed && cell.completed;
    for (const auto& row : cell.rows) out.rows.push_back(row);
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::string> cols{"cell"};
    for (const auto& k : keys) cols.push_back(k);
    for (const char* c : {"seed", "final_loss", "rate_linear", "rate_loglog", "max_drift",
                          "min_lambda", "diverged", "steps", "status"})
      cols.emplace_back(c);
    write_rows_csv(std::filesystem::path(cfg.out_dir) / (cfg.label + "_sweep_summary.csv"),
                   cols, out.rows);
  }
  return out;
}

std::vector<RateRow> run_rates(const std::vector<std::filesystem::path>& bases, FitMode mode,
                               double window, bool envelope) {
  std::vector<RateRow> rows;
  rows.reserve(bases.size());
  for (const auto& given : bases) {
    RateRow row;
    row.path = given.string();
    std::filesystem::path base = given;
    if (base.extension() == ".csv" || base.extension() == ".json") base.replace_extension();
    try {
      const RunArtifact art = read_trace(base);
      std::vector<double> t, L;
      t.reserve(art.records.size());
      L.reserve(art.records.size());
      for (const auto& r : art.records) {
        t.push_back(r.t);
        L.push_back(r.loss);
      }
      row.fit = fit_rate(t, L, mode, window, envelope);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ntkflow
