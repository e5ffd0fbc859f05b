#include "ntkflow/trace.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ntkflow {

namespace {

constexpr const char* kHeader =
    "step,t,loss,pseudo_loss,lambda_min,kernel_drift,max_drift,v_hb,v_nag,e_polyak";

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_cell(const std::string& s, const char* what) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error(std::string("trace: bad ") + what + " cell '" + s + "'");
  return v;
}

nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j;
  j["final_loss"] = s.final_loss;
  j["diverged"] = s.diverged;
  j["message"] = s.message;
  j["steps"] = s.steps;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("rate_linear", s.rate_linear);
  put("rate_loglog", s.rate_loglog);
  put("max_drift", s.max_drift);
  put("min_lambda", s.min_lambda);
  put("kernel_drift_final", s.kernel_drift_final);
  put("kernel_drift_frobenius", s.kernel_drift_frobenius);
  return j;
}

RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.final_loss = j.at("final_loss").get<double>();
  s.diverged = j.at("diverged").get<bool>();
  s.message = j.at("message").get<std::string>();
  s.steps = j.at("steps").get<long>();
  auto get = [&j](const char* key) -> std::optional<double> {
    if (j.contains(key)) return j.at(key).get<double>();
    return std::nullopt;
  };
  s.rate_linear = get("rate_linear");
  s.rate_loglog = get("rate_loglog");
  s.max_drift = get("max_drift");
  s.min_lambda = get("min_lambda");
  s.kernel_drift_final = get("kernel_drift_final");
  s.kernel_drift_frobenius = get("kernel_drift_frobenius");
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace(const RunArtifact& artifact, const std::filesystem::path& base) {
  std::filesystem::path csv = base;
  csv += ".csv";
  std::filesystem::path json = base;
  json += ".json";
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());

  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace: cannot open " + csv.string());
  out << kHeader << '\n';
  for (const TraceRecord& r : artifact.records) {
    out << r.step << ',' << format_double(r.t) << ',' << format_double(r.loss) << ','
        << cell(r.pseudo_loss) << ',' << cell(r.lambda_min) << ',' << cell(r.kernel_drift) << ','
        << cell(r.max_drift) << ',' << cell(r.v_hb) << ',' << cell(r.v_nag) << ','
        << cell(r.e_polyak) << '\n';
  }
  if (!out) throw std::runtime_error("write_trace: failed writing " + csv.string());
  out.close();

  nlohmann::json side;
  side["schema_version"] = trace_schema_version;
  side["seed"] = artifact.seed;
  side["config"] = artifact.config;
  side["summary"] = summary_to_json(artifact.summary);
  std::ofstream jout(json, std::ios::binary);
  if (!jout) throw std::runtime_error("write_trace: cannot open " + json.string());
  jout << side.dump(2) << '\n';
  if (!jout) throw std::runtime_error("write_trace: failed writing " + json.string());
}

RunArtifact read_trace(const std::filesystem::path& base) {
  std::filesystem::path csv = base;
  csv += ".csv";
  std::filesystem::path json = base;
  json += ".json";

  std::ifstream jin(json, std::ios::binary);
  if (!jin) throw std::runtime_error("read_trace: cannot open " + json.string());
  nlohmann::json side = nlohmann::json::parse(jin, nullptr, true);
  const int version = side.at("schema_version").get<int>();
  if (version > trace_schema_version)
    throw std::runtime_error("read_trace: schema version " + std::to_string(version) +
                             " is newer than this build supports");
  RunArtifact artifact;
  artifact.seed = side.at("seed").get<std::uint64_t>();
  artifact.config = side.at("config");
  artifact.summary = summary_from_json(side.at("summary"));

  std::ifstream in(csv, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace: cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw std::runtime_error("read_trace: unexpected header in " + csv.string());
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    while (cells.size() < 10) cells.emplace_back();  // trailing empties
    if (cells.size() != 10) throw std::runtime_error("read_trace: bad column count");
    TraceRecord r;
    r.step = std::stol(cells[0]);
    r.t = *parse_cell(cells[1], "t");
    r.loss = *parse_cell(cells[2], "loss");
    if (!(r.loss >= 0) || !std::isfinite(r.t))
      throw std::runtime_error("read_trace: invalid loss or time");
    if (!(r.t > prev_t)) throw std::runtime_error("read_trace: time not strictly increasing");
    prev_t = r.t;
    r.pseudo_loss = parse_cell(cells[3], "pseudo_loss");
    r.lambda_min = parse_cell(cells[4], "lambda_min");
    r.kernel_drift = parse_cell(cells[5], "kernel_drift");
    r.max_drift = parse_cell(cells[6], "max_drift");
    r.v_hb = parse_cell(cells[7], "v_hb");
    r.v_nag = parse_cell(cells[8], "v_nag");
    r.e_polyak = parse_cell(cells[9], "e_polyak");
    artifact.records.push_back(std::move(r));
  }
  return artifact;
}

}  // namespace ntkflow
