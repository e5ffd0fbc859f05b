#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntkflow/experiment.hpp"

namespace {

using nlohmann::json;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::string seed_list;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "JSON config file");
  cmd->add_option("--set", args.sets, "override, dotted.path=value (repeatable)")
      ->take_all();
  cmd->add_option("-o,--out", args.out, "output directory for artifacts");
  cmd->add_option("--seed-list", args.seed_list, "comma-separated run seeds");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string cell =
        comma == std::string::npos ? s.substr(start) : s.substr(start, comma - start);
    if (!cell.empty()) seeds.push_back(std::stoull(cell));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (seeds.empty()) throw std::invalid_argument("--seed-list has no seeds");
  return seeds;
}

// --out beats config.out_dir beats NTKFLOW_OUT beats "runs".
ntkflow::ExperimentConfig build_config(const CommonArgs& args) {
  json j = json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw std::runtime_error("cannot open config " + args.config_path);
    in >> j;
  }
  for (const std::string& kv : args.sets) ntkflow::apply_override(j, kv);
  if (!args.out.empty()) {
    j["out_dir"] = args.out;
  } else if (!j.contains("out_dir") || j["out_dir"].get<std::string>().empty()) {
    const char* env = std::getenv("NTKFLOW_OUT");
    j["out_dir"] = env != nullptr && env[0] != '\0' ? env : "runs";
  }
  if (!args.seed_list.empty()) j["seeds"] = parse_seed_list(args.seed_list);
  return ntkflow::parse_config(j);
}

void print_outcome(const char* verb, const ntkflow::RunOutcome& o) {
  const ntkflow::RunSummary& s = o.artifact.summary;
  std::fprintf(stderr, "[%s] seed %llu: %ld steps in %.2fs%s\n", verb,
               static_cast<unsigned long long>(o.artifact.seed), s.steps, s.wall_seconds,
               s.diverged ? " (diverged)" : "");
  std::printf("%s seed=%llu final_loss=%.17g steps=%ld diverged=%d", verb,
              static_cast<unsigned long long>(o.artifact.seed), s.final_loss, s.steps,
              s.diverged ? 1 : 0);
  if (s.rate_linear) std::printf(" rate_linear=%.6g", *s.rate_linear);
  if (s.rate_loglog) std::printf(" rate_loglog=%.6g", *s.rate_loglog);
  if (s.max_drift) std::printf(" max_drift=%.6g", *s.max_drift);
  if (s.min_lambda) std::printf(" min_lambda=%.6g", *s.min_lambda);
  if (!o.base.empty()) std::printf(" trace=%s", o.base.string().c_str());
  if (s.diverged) std::printf(" message=\"%s\"", s.message.c_str());
  std::printf("\n");
}

int run_train_cmd(const CommonArgs& args) {
  const auto cfg = build_config(args);
  std::fprintf(stderr, "[train] %s: %zu seed(s) -> %s\n", cfg.label.c_str(), cfg.seeds.size(),
               cfg.out_dir.c_str());
  for (const auto& o : ntkflow::run_train(cfg)) print_outcome("train", o);
  return 0;
}

int run_flow_cmd(const CommonArgs& args) {
  const auto cfg = build_config(args);
  std::fprintf(stderr, "[flow] %s: %zu seed(s) -> %s\n", cfg.label.c_str(), cfg.seeds.size(),
               cfg.out_dir.c_str());
  for (const auto& o : ntkflow::run_flow(cfg)) print_outcome("flow", o);
  return 0;
}

int run_kernel_cmd(const CommonArgs& args) {
  const auto cfg = build_config(args);
  std::fprintf(stderr, "[kernel] %s: %zu seed(s) -> %s\n", cfg.label.c_str(), cfg.seeds.size(),
               cfg.out_dir.c_str());
  const json rows = ntkflow::run_kernel_study(cfg);
  std::printf("%s\n", rows.dump(2).c_str());
  return 0;
}

int run_sweep_cmd(const CommonArgs& args, int jobs) {
  const auto cfg = build_config(args);
  std::fprintf(stderr, "[sweep] %s: jobs=%d -> %s\n", cfg.label.c_str(), jobs,
               cfg.out_dir.c_str());
  const ntkflow::SweepResult res = ntkflow::run_sweep(cfg, jobs);
  int errors = 0;
  for (const auto& row : res.rows) {
    const std::string status = row.at("status").get<std::string>();
    if (status != "ok") {
      ++errors;
      std::fprintf(stderr, "[sweep] cell %lld: %s\n", row.at("cell").get<long long>(),
                   status.c_str());
    }
  }
  std::printf("sweep rows=%zu errors=%d csv=%s\n", res.rows.size(), errors,
              cfg.out_dir.empty()
                  ? "-"
                  : (std::filesystem::path(cfg.out_dir) / (cfg.label + "_sweep_summary.csv"))
                        .string()
                        .c_str());
  return res.all_completed ? 0 : 1;
}

int run_rates_cmd(const std::vector<std::string>& paths, const std::string& mode, double window,
                  bool envelope) {
  ntkflow::FitMode fit_mode;
  if (mode == "linear") {
    fit_mode = ntkflow::FitMode::linear_time;
  } else if (mode == "log") {
    fit_mode = ntkflow::FitMode::log_time;
  } else {
    throw std::invalid_argument("--mode must be linear or log");
  }
  std::vector<std::filesystem::path> bases(paths.begin(), paths.end());
  int failures = 0;
  for (const auto& row : ntkflow::run_rates(bases, fit_mode, window, envelope)) {
    if (row.ok) {
      std::printf("%s slope=%.17g intercept=%.17g residual=%.6g used=%zu window=%g clipped=%d\n",
                  row.path.c_str(), row.fit.slope, row.fit.intercept, row.fit.residual,
                  row.fit.used, row.fit.window, row.fit.clipped ? 1 : 0);
    } else {
      ++failures;
      std::printf("%s error=\"%s\"\n", row.path.c_str(), row.error.c_str());
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-layer relu training laboratory"};
  app.require_subcommand(1);

  CommonArgs train_args, flow_args, kernel_args, sweep_args;
  int jobs = 1;
  std::vector<std::string> rate_paths;
  std::string rate_mode = "linear";
  double rate_window = 0.5;
  bool rate_envelope = false;

  CLI::App* train = app.add_subcommand("train", "discrete optimizer run(s)");
  add_common(train, train_args);
  CLI::App* flow = app.add_subcommand("flow", "limiting-ODE run(s)");
  add_common(flow, flow_args);
  CLI::App* kernel = app.add_subcommand("kernel", "empirical vs analytic kernel study");
  add_common(kernel, kernel_args);
  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs from config.sweep");
  add_common(sweep, sweep_args);
  sweep->add_option("-j,--jobs", jobs, "concurrent grid cells");
  CLI::App* rates = app.add_subcommand("rates", "fit convergence rates on saved traces");
  rates->add_option("paths", rate_paths, "trace base paths (or .csv files)")->required();
  rates->add_option("--mode", rate_mode, "linear|log (default linear)");
  rates->add_option("--window", rate_window, "trailing fraction of the trace to fit");
  rates->add_flag("--envelope", rate_envelope, "fit local maxima only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train_cmd(train_args);
    if (flow->parsed()) return run_flow_cmd(flow_args);
    if (kernel->parsed()) return run_kernel_cmd(kernel_args);
    if (sweep->parsed()) return run_sweep_cmd(sweep_args, jobs);
    if (rates->parsed()) return run_rates_cmd(rate_paths, rate_mode, rate_window, rate_envelope);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
