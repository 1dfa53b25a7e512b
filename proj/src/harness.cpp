#include "curvebound/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "curvebound/errors.hpp"
#include "curvebound/rng.hpp"

namespace curvebound {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------- schema ---

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) throw ConfigError(where + ": unknown field '" + k + "'");
  }
}

double get_number(const json& j, const std::string& key, const std::string& where,
                  std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(where + ": missing field '" + key + "'");
  }
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + "." + key + ": not finite");
  return v;
}

int get_int(const json& j, const std::string& key, const std::string& where, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return j.at(key).get<int>();
}

std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

CostKind parse_cost(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  const auto s = j.get<std::string>();
  if (s == "hamming") return CostKind::hamming;
  if (s == "euclidean") return CostKind::euclidean;
  throw ConfigError(where + ": unknown cost '" + s + "'");
}

const std::set<std::string> kTasks{"spectral", "bounds", "simulate", "validate", "sweep"};

struct KindSchema {
  std::set<std::string> params;
  std::set<std::string> required;
};

const std::map<std::string, KindSchema>& kind_schemas() {
  static const std::map<std::string, KindSchema> m{
      {"gaussian", {{"rho", "dim"}, {}}},
      {"product_gaussian", {{"rho"}, {"rho"}}},
      {"quartic", {{"dim"}, {}}},
      {"radial_power", {{"beta", "dim"}, {"beta"}}},
      {"cosine_perturbed_gaussian", {{"a", "k"}, {"a"}}},
      {"custom_polynomial", {{"coeffs"}, {"coeffs"}}},
      {"mixed_quadratic_quartic", {{}, {}}},
      {"flat", {{"dim"}, {}}},
  };
  return m;
}

int spec_dim(const PotentialSpec& s) {
  if (s.kind == "product_gaussian") return static_cast<int>(s.params.at("rho").size());
  if (s.kind == "mixed_quadratic_quartic") return 2;
  if (s.kind == "cosine_perturbed_gaussian" || s.kind == "custom_polynomial") return 1;
  return s.params.value("dim", 1);
}

PotentialSpec parse_potential(const json& j) {
  reject_unknown(j, {"kind", "params", "domain_box", "resolution", "analytic_lip"}, "potential");
  PotentialSpec s;
  if (!j.contains("kind") || !j.at("kind").is_string()) {
    throw ConfigError("potential.kind: expected a string");
  }
  s.kind = j.at("kind").get<std::string>();
  const auto it = kind_schemas().find(s.kind);
  if (it == kind_schemas().end()) throw ConfigError("potential.kind: unknown kind '" + s.kind + "'");
  if (j.contains("params")) s.params = j.at("params");
  reject_unknown(s.params, it->second.params, "potential.params");
  for (const auto& r : it->second.required) {
    if (!s.params.contains(r)) throw ConfigError("potential.params: missing field '" + r + "'");
  }
  for (const auto& [k, v] : s.params.items()) {
    if (k == "rho" && s.kind == "product_gaussian") {
      get_numbers(v, "potential.params.rho");
    } else if (k == "coeffs") {
      get_numbers(v, "potential.params.coeffs");
    } else if (k == "dim") {
      if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > 2) {
        throw ConfigError("potential.params.dim: expected 1 or 2");
      }
    } else if (!v.is_number()) {
      throw ConfigError("potential.params." + k + ": expected a number");
    }
  }
  s.resolution = get_int(j, "resolution", "potential", 1024);
  if (s.resolution < 16) throw ConfigError("potential.resolution: must be at least 16");
  if (j.contains("analytic_lip")) s.analytic_lip = get_number(j, "analytic_lip", "potential");

  if (!j.contains("domain_box") || !j.at("domain_box").is_array()) {
    throw ConfigError("potential.domain_box: expected an array of [lo, hi] pairs");
  }
  const int dim = spec_dim(s);
  if (dim < 1 || dim > 2) throw ConfigError("potential: dimension must be 1 or 2");
  for (const auto& iv : j.at("domain_box")) {
    const auto v = get_numbers(iv, "potential.domain_box");
    if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError("potential.domain_box: bad interval");
    s.box.push_back({v[0], v[1]});
  }
  if (s.box.size() == 1 && dim > 1) s.box.resize(static_cast<std::size_t>(dim), s.box[0]);
  if (static_cast<int>(s.box.size()) != dim) {
    throw ConfigError("potential.domain_box: expected " + std::to_string(dim) + " intervals");
  }
  return s;
}

CertificateSpec parse_certificate(const json& j, std::size_t i) {
  const std::string where = "certificates[" + std::to_string(i) + "]";
  reject_unknown(j, {"source", "constant", "cost"}, where);
  CertificateSpec c;
  if (!j.contains("source") || !j.at("source").is_string()) {
    throw ConfigError(where + ".source: expected a string");
  }
  c.source = j.at("source").get<std::string>();
  static const std::set<std::string> sources{"poincare", "logsobolev", "user", "spectral_oracle",
                                             "bakry_emery"};
  if (!sources.contains(c.source)) throw ConfigError(where + ".source: unknown '" + c.source + "'");
  if (j.contains("constant")) {
    c.constant = get_number(j, "constant", where);
    if (!(*c.constant > 0.0)) throw ConfigError(where + ".constant: must be positive");
  }
  const bool needs_constant = c.source == "poincare" || c.source == "logsobolev" || c.source == "user";
  if (needs_constant && !c.constant) throw ConfigError(where + ": missing field 'constant'");
  if (!needs_constant && c.constant) {
    throw ConfigError(where + ": source '" + c.source + "' takes no constant");
  }
  if (c.source == "logsobolev") c.cost = CostKind::euclidean;
  if (j.contains("cost")) {
    c.cost = parse_cost(j.at("cost"), where + ".cost");
    if (c.source == "poincare" && c.cost != CostKind::hamming) {
      throw ConfigError(where + ": a Poincare certificate has Hamming cost");
    }
    if (c.source == "logsobolev" && c.cost != CostKind::euclidean) {
      throw ConfigError(where + ": a log-Sobolev certificate has Euclidean cost");
    }
    if (c.source == "spectral_oracle" && c.cost != CostKind::hamming) {
      throw ConfigError(where + ": the spectral oracle yields a Hamming certificate");
    }
  }
  return c;
}

// Non-negative integer; values built in code arrive as signed integers.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

SimConfig parse_sim(const json& j, std::vector<double>& x0, std::vector<double>& times,
                    bool& dump) {
  reject_unknown(j,
                 {"dt", "T", "n_paths", "seed", "scheme", "richardson", "x0", "times",
                  "gl_order", "contraction_c1", "dump_ensemble"},
                 "sim");
  SimConfig c;
  c.dt = get_number(j, "dt", "sim", c.dt);
  c.T = get_number(j, "T", "sim", c.T);
  if (!(c.dt > 0.0) || !(c.T > 0.0) || c.dt > c.T) throw ConfigError("sim: need 0 < dt <= T");
  if (j.contains("n_paths")) {
    if (!is_count(j.at("n_paths"))) throw ConfigError("sim.n_paths: expected a count");
    c.n_paths = j.at("n_paths").get<std::size_t>();
  }
  if (c.n_paths < 20) throw ConfigError("sim.n_paths: need at least 20 paths");
  if (j.contains("seed")) {
    if (!is_count(j.at("seed"))) throw ConfigError("sim.seed: expected an unsigned integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("scheme")) {
    if (j.at("scheme") != "euler_maruyama") {
      throw ConfigError("sim.scheme: only euler_maruyama is supported");
    }
  }
  if (j.contains("richardson")) {
    if (!j.at("richardson").is_boolean()) throw ConfigError("sim.richardson: expected a boolean");
    c.richardson = j.at("richardson").get<bool>();
  }
  if (j.contains("dump_ensemble")) {
    if (!j.at("dump_ensemble").is_boolean()) {
      throw ConfigError("sim.dump_ensemble: expected a boolean");
    }
    dump = j.at("dump_ensemble").get<bool>();
  }
  c.gl_order = get_int(j, "gl_order", "sim", c.gl_order);
  if (c.gl_order < 1 || c.gl_order > 64) throw ConfigError("sim.gl_order: expected 1..64");
  c.contraction_c1 = get_number(j, "contraction_c1", "sim", c.contraction_c1);
  if (j.contains("x0")) x0 = get_numbers(j.at("x0"), "sim.x0");
  if (j.contains("times")) {
    times = get_numbers(j.at("times"), "sim.times");
    if (times.empty() || !std::is_sorted(times.begin(), times.end()) || !(times.front() > 0.0) ||
        times.back() > c.T * (1.0 + 1e-12)) {
      throw ConfigError("sim.times: expected increasing positive times within T");
    }
  }
  return c;
}

// Path a.b.c into a JSON object; nullptr when absent.
const json* lookup(const json& root, const std::string& path) {
  const json* cur = &root;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &cur->at(part);
  }
  return cur;
}

void assign(json& root, const std::string& path, double v) {
  json* cur = &root;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) cur = &(*cur)[part];
  *cur = v;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  reject_unknown(j,
                 {"schema_version", "potential", "certificates", "sim", "tasks", "sweep",
                  "output_dir", "quantile"},
                 "config");
  ExperimentConfig cfg;
  cfg.raw = j;
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer()) {
    throw ConfigError("config: missing integer schema_version");
  }
  cfg.schema_version = j.at("schema_version").get<int>();
  if (cfg.schema_version != kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(cfg.schema_version));
  }
  if (!j.contains("potential")) throw ConfigError("config: missing field 'potential'");
  cfg.potential = parse_potential(j.at("potential"));
  if (j.contains("certificates")) {
    if (!j.at("certificates").is_array()) throw ConfigError("certificates: expected an array");
    std::size_t i = 0;
    for (const auto& c : j.at("certificates")) cfg.certificates.push_back(parse_certificate(c, i++));
  }
  if (j.contains("sim")) {
    bool dump = false;
    cfg.sim = parse_sim(j.at("sim"), cfg.x0, cfg.times, dump);
    if (!cfg.x0.empty() && static_cast<int>(cfg.x0.size()) != spec_dim(cfg.potential)) {
      throw ConfigError("sim.x0: dimension mismatch");
    }
  }
  if (!j.contains("tasks") || !j.at("tasks").is_array()) {
    throw ConfigError("config: missing array 'tasks'");
  }
  for (const auto& t : j.at("tasks")) {
    if (!t.is_string() || !kTasks.contains(t.get<std::string>())) {
      throw ConfigError("tasks: unknown task " + t.dump());
    }
    const auto name = t.get<std::string>();
    if (std::find(cfg.tasks.begin(), cfg.tasks.end(), name) == cfg.tasks.end()) {
      cfg.tasks.push_back(name);
    }
  }
  if (cfg.tasks.empty()) throw ConfigError("tasks: at least one task is required");
  const auto has = [&](const char* t) {
    return std::find(cfg.tasks.begin(), cfg.tasks.end(), t) != cfg.tasks.end();
  };
  if ((has("simulate") || has("validate")) && !cfg.sim) {
    throw ConfigError("tasks simulate/validate need a 'sim' section");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown(s, {"parameter", "values"}, "sweep");
    SweepSpec sw;
    if (!s.contains("parameter") || !s.at("parameter").is_string()) {
      throw ConfigError("sweep.parameter: expected a string");
    }
    sw.parameter = s.at("parameter").get<std::string>();
    if (!s.contains("values")) throw ConfigError("sweep: missing field 'values'");
    sw.values = get_numbers(s.at("values"), "sweep.values");
    if (sw.values.empty()) throw ConfigError("sweep.values: empty");
    const json* target = lookup(j, sw.parameter);
    if (target == nullptr || !target->is_number()) {
      throw ConfigError("sweep.parameter: '" + sw.parameter + "' does not name a numeric field");
    }
    cfg.sweep = sw;
  }
  if (has("sweep") && !cfg.sweep) throw ConfigError("task sweep needs a 'sweep' section");
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir: expected a string");
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }
  cfg.quantile = get_number(j, "quantile", "config", 0.5);
  if (!(cfg.quantile > 0.0 && cfg.quantile < 1.0)) throw ConfigError("quantile: must lie in (0,1)");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

Potential build_potential(const PotentialSpec& s) {
  const auto& q = s.params;
  Potential p;
  if (s.kind == "gaussian") {
    p = make_gaussian(q.value("rho", 1.0), q.value("dim", 1), s.box);
  } else if (s.kind == "product_gaussian") {
    p = make_product_gaussian(q.at("rho").get<std::vector<double>>(), s.box);
  } else if (s.kind == "quartic") {
    p = make_quartic(q.value("dim", 1), s.box);
  } else if (s.kind == "radial_power") {
    p = make_radial_power(q.at("beta").get<double>(), q.value("dim", 1), s.box);
  } else if (s.kind == "cosine_perturbed_gaussian") {
    p = make_cosine_perturbed_gaussian(q.at("a").get<double>(), q.value("k", 2.0), s.box);
  } else if (s.kind == "custom_polynomial") {
    p = make_polynomial(q.at("coeffs").get<std::vector<double>>(), s.box);
  } else if (s.kind == "mixed_quadratic_quartic") {
    p = make_mixed_quadratic_quartic(s.box);
  } else if (s.kind == "flat") {
    p = make_flat(q.value("dim", 1), s.box);
  } else {
    throw ConfigError("unknown potential kind '" + s.kind + "'");
  }
  if (s.analytic_lip) p.analytic_lip = s.analytic_lip;
  return p;
}

// --------------------------------------------------------- serialization ---

namespace {
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? num(*v) : json(nullptr);
}
}  // namespace

json to_json(const CurvatureStats& s) {
  return {{"rho0", num(s.rho0)},
          {"mean", num(s.mean)},
          {"osc", num(s.osc)},
          {"lip", num(s.lip)},
          {"median", num(s.median)},
          {"quantile_level", s.quantile_level},
          {"cost", to_string(s.cost)},
          {"norm_c", num(s.norm_c)},
          {"provenance",
           {{"rho0", to_string(s.rho0_src)},
            {"mean", to_string(s.mean_src)},
            {"osc", to_string(s.osc_src)},
            {"lip", to_string(s.lip_src)},
            {"median", to_string(s.median_src)}}}};
}

json to_json(const WICertificate& c) {
  return {{"source", to_string(c.source)},
          {"cost", to_string(c.cost)},
          {"C", num(c.C)},
          {"input_constant", num(c.input_constant)}};
}

json to_json(const BoundReport& r) {
  json factors = json::array();
  for (const auto& [k, v] : r.prefactor.factors) factors.push_back({{"name", k}, {"value", num(v)}});
  json knobs = json::object();
  for (const auto& [k, v] : r.knobs) knobs[k] = num(v);
  return {{"kind", to_string(r.kind)},
          {"branch", to_string(r.branch)},
          {"value", num(r.value)},
          {"valid", r.valid},
          {"reason", r.reason},
          {"epsilon", opt(r.epsilon)},
          {"r", opt(r.r)},
          {"p", opt(r.p)},
          {"prefactor",
           {{"symbolic", r.prefactor.symbolic},
            {"wasserstein_order", opt(r.prefactor.wasserstein_order)},
            {"factors", factors},
            {"value", opt(r.prefactor.value)}}},
          {"stats", r.stats ? to_json(*r.stats) : json(nullptr)},
          {"certificate", r.cert ? to_json(*r.cert) : json(nullptr)},
          {"knobs", knobs},
          {"notes", r.notes}};
}

json to_json(const SpectralResult& r) {
  return {{"lambda1", num(r.lambda1)},
          {"cp_true", num(r.cp_true)},
          {"resolution", r.resolution},
          {"coarse_lambda1", num(r.coarse_lambda1)},
          {"richardson_estimate", num(r.richardson_estimate)},
          {"converged", r.converged},
          {"orthogonality_residual", num(r.orthogonality_residual)}};
}

json to_json(const EstimateCI& e) {
  return {{"mean", num(e.mean)}, {"stderr", num(e.se)}, {"n", e.n}, {"lo", num(e.lo)},
          {"hi", num(e.hi)}};
}

// ------------------------------------------------------------- exporters ---

namespace {
std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string cert_label(const BoundReport& r) {
  if (!r.cert) return "";
  return to_string(r.cert->source) + ":" + fmt_short(r.cert->input_constant);
}
}  // namespace

std::string bounds_csv(const std::vector<BoundReport>& bounds) {
  std::string out = "kind,branch,certificate,valid,theta_or_cp,epsilon,r,reason\n";
  for (const auto& b : bounds) {
    out += to_string(b.kind) + "," + to_string(b.branch) + "," + csv_field(cert_label(b)) + "," +
           (b.valid ? "true" : "false") + "," + fmt(b.value) + "," +
           (b.epsilon ? fmt(*b.epsilon) : "") + "," + (b.r ? fmt(*b.r) : "") + "," +
           csv_field(b.reason) + "\n";
  }
  return out;
}

namespace {
constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 50;

struct Range {
  double lo = 0, hi = 1;
  void fit() {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"15\">"
    << xml_escape(title) << "</text>\n"
    << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
    << kH - kB << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << xml_escape(xlabel) << "</text>\n"
    << "<text x=\"16\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 16 " << kH / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
    << xml_escape(ylabel) << "</text>\n";
  return o.str();
}

std::string tick(double px, double py, const std::string& label, bool xaxis) {
  std::ostringstream o;
  if (xaxis) {
    o << "<line x1=\"" << px << "\" y1=\"" << py << "\" x2=\"" << px << "\" y2=\"" << py + 5
      << "\" stroke=\"black\"/><text x=\"" << px << "\" y=\"" << py + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << label
      << "</text>\n";
  } else {
    o << "<line x1=\"" << px - 5 << "\" y1=\"" << py << "\" x2=\"" << px << "\" y2=\"" << py
      << "\" stroke=\"black\"/><text x=\"" << px - 8 << "\" y=\"" << py + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << label
      << "</text>\n";
  }
  return o.str();
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<Series>& series,
                          bool log_y) {
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  Range xr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  Range yr = xr;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xr.lo = std::min(xr.lo, s.x[i]);
      xr.hi = std::max(xr.hi, s.x[i]);
      yr.lo = std::min(yr.lo, ty(s.y[i]));
      yr.hi = std::max(yr.hi, ty(s.y[i]));
    }
  }
  if (!std::isfinite(xr.lo)) xr = {0, 1};
  if (!std::isfinite(yr.lo)) yr = {0, 1};
  xr.fit();
  yr.fit();
  auto px = [&](double x) { return kL + (x - xr.lo) / (xr.hi - xr.lo) * (kW - kL - kR); };
  auto py = [&](double y) { return kH - kB - (y - yr.lo) / (yr.hi - yr.lo) * (kH - kT - kB); };

  std::string out = frame(title, xlabel, log_y ? "log10 " + ylabel : ylabel);
  for (int k = 0; k <= 4; ++k) {
    const double x = xr.lo + (xr.hi - xr.lo) * k / 4.0;
    const double y = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    out += tick(px(x), kH - kB, fmt_short(x), true);
    out += tick(kL, py(y), fmt_short(y), false);
  }
  std::size_t idx = 0;
  for (const auto& s : series) {
    const char* color = kColors[idx % std::size(kColors)];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(ty(s.y[i])));
      pts << buf;
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + pts.str() + "\"/>\n";
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "fill=\"%s\">",
                  kW - kR - 200, kT + 14 + 14.0 * static_cast<double>(idx), color);
    out += buf + xml_escape(s.label) + "</text>\n";
    ++idx;
  }
  return out + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, std::optional<double> reference,
                          const std::string& reference_label) {
  double hi = reference.value_or(0.0);
  for (double v : values) {
    if (std::isfinite(v)) hi = std::max(hi, v);
  }
  if (!(hi > 0.0)) hi = 1.0;
  hi *= 1.1;
  auto py = [&](double y) { return kH - kB - y / hi * (kH - kT - kB); };
  std::string out = frame(title, "branch", "C_P bound");
  for (int k = 0; k <= 4; ++k) out += tick(kL, py(hi * k / 4.0), fmt_short(hi * k / 4.0), false);
  const double slot = (kW - kL - kR) / static_cast<double>(std::max<std::size_t>(1, values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = kL + slot * (static_cast<double>(i) + 0.15);
    const double v = std::isfinite(values[i]) ? values[i] : 0.0;
    char buf[300];
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", x,
                  py(v), slot * 0.7, kH - kB - py(v), kColors[0]);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                  "font-size=\"9\">",
                  x + slot * 0.35, kH - kB + 14.0 + 10.0 * static_cast<double>(i % 2));
    out += buf + xml_escape(labels.at(i)) + "</text>\n";
  }
  if (reference) {
    char buf[300];
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                  "stroke-width=\"2\" stroke-dasharray=\"6,4\"/>\n"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "fill=\"%s\">",
                  kL, py(*reference), kW - kR, py(*reference), kColors[1], kW - kR - 200,
                  py(*reference) - 6, kColors[1]);
    out += buf + xml_escape(reference_label) + "</text>\n";
  }
  return out + "</svg>\n";
}

// ---------------------------------------------------------------- runner ---

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

std::string curve_csv(const std::vector<double>& t, const std::vector<double>& est,
                      const std::vector<double>& se) {
  std::string out = "t,estimate,stderr\n";
  for (std::size_t i = 0; i < t.size(); ++i) out += fmt(t[i]) + "," + fmt(est[i]) + "," + fmt(se[i]) + "\n";
  return out;
}

// Uniform point in the central half of the box, a pure function of (seed, path, slot).
void box_point(const Box& box, std::uint64_t seed, std::uint64_t path, std::uint32_t slot,
               std::span<double> out) {
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed),
                                         static_cast<std::uint32_t>(seed >> 32)};
  for (std::size_t a = 0; a < out.size(); ++a) {
    const auto w = philox4x32({static_cast<std::uint32_t>(a), 0xB0C5u ^ slot,
                               static_cast<std::uint32_t>(path),
                               static_cast<std::uint32_t>(path >> 32)},
                              key);
    const double u = uniform_open(w[0], w[1]);
    out[a] = box[a].center() + (u - 0.5) * 0.5 * box[a].width();
  }
}

struct Context {
  Context(const ExperimentConfig& c, const RunOptions& o)
      : cfg(c), opts(o), out(c.output_dir), write(o.write_files) {}

  const ExperimentConfig& cfg;
  const RunOptions& opts;
  json report = json::object();
  std::filesystem::path out;
  bool write = false;

  Potential pot;
  std::optional<GridMeasure> grid;
  std::optional<SpectralResult> spectral;
  std::vector<WICertificate> certs;
  std::vector<BoundReport> w1_bounds;
  std::optional<PoincareTournament> tournament;
  std::optional<CurvatureStats> hamming, euclidean;
  std::optional<DecayCurve> decay;
  std::vector<double> equilibrium;

  bool has_task(const char* t) const {
    return std::find(cfg.tasks.begin(), cfg.tasks.end(), t) != cfg.tasks.end();
  }

  void emit(const std::string& name, const std::string& content) {
    if (write) write_file(out / name, content);
  }

  const GridMeasure& measure() {
    if (!grid) {
      grid = build_grid_measure(pot, cfg.potential.resolution);
      report["grid"] = {{"resolution", cfg.potential.resolution},
                        {"nodes", grid->size()},
                        {"log_norm", num(grid->log_norm)},
                        {"tail_mass_bound", num(grid->tail_mass_bound)}};
    }
    return *grid;
  }

  const SpectralResult& oracle() {
    if (!spectral) {
      if (pot.dim != 1) throw PreconditionError("spectral oracle is one-dimensional");
      spectral = spectral_gap_1d(measure(), pot);
      report["spectral"] = to_json(*spectral);
    }
    return *spectral;
  }

  std::vector<double> start_point() const {
    if (!cfg.x0.empty()) return cfg.x0;
    std::vector<double> x(static_cast<std::size_t>(pot.dim));
    for (std::size_t a = 0; a < x.size(); ++a) {
      x[a] = pot.domain_box[a].center() + (a == 0 ? 0.125 * pot.domain_box[a].width() : 0.0);
    }
    return x;
  }

  const std::vector<double>& equilibrium_points() {
    if (equilibrium.empty()) {
      const SimConfig& sc = *cfg.sim;
      const std::size_t n = std::min<std::size_t>(std::max<std::size_t>(4 * sc.n_paths, 1000), 20000);
      if (pot.dim == 1) {
        equilibrium = equilibrium_quantiles(measure(), n);
      } else {
        SimConfig c = sc;
        c.n_paths = n;
        c.seed = sc.seed ^ 0x5EEDULL;
        std::vector<double> center;
        for (const auto& iv : pot.domain_box) center.push_back(iv.center());
        equilibrium = equilibrium_by_burn_in(pot, c, center, std::max(10.0, 5.0 * sc.T));
      }
    }
    return equilibrium;
  }
};

void resolve_certificates(Context& cx) {
  json arr = json::array();
  for (const auto& cs : cx.cfg.certificates) {
    json entry = {{"source", cs.source}, {"cost", to_string(cs.cost)}};
    std::optional<WICertificate> c;
    if (cs.source == "poincare") {
      c = from_poincare(*cs.constant);
    } else if (cs.source == "logsobolev") {
      c = from_logsobolev(*cs.constant);
    } else if (cs.source == "user") {
      c = user_certificate(*cs.constant, cs.cost);
    } else if (cs.source == "spectral_oracle") {
      c = from_poincare(cx.oracle().cp_true);
    } else if (cs.source == "bakry_emery") {
      const double rho0 = cx.hamming->rho0;
      if (rho0 > 0.0) {
        c = cs.cost == CostKind::hamming ? from_poincare(1.0 / rho0) : from_logsobolev(2.0 / rho0);
      } else {
        entry["skipped"] = "rho0 not positive";
      }
    }
    if (c) {
      cx.certs.push_back(*c);
      entry["certificate"] = to_json(*c);
    }
    arr.push_back(entry);
  }
  cx.report["certificates"] = arr;
}

void task_bounds(Context& cx) {
  const GridMeasure& m = cx.measure();
  cx.hamming = curvature_stats(m, cx.pot, CostKind::hamming, cx.cfg.quantile);
  cx.euclidean = curvature_stats(m, cx.pot, CostKind::euclidean, cx.cfg.quantile);
  resolve_certificates(cx);

  json stats = {{"hamming", to_json(*cx.hamming)}, {"euclidean", to_json(*cx.euclidean)}};
  const bool radial = cx.pot.kind == PotentialKind::radial_convex || cx.pot.kind == PotentialKind::quadratic;
  std::optional<KappaField> kh, ke;
  if (radial) {
    kh = kappa_stats_for_radial(m, cx.pot, CostKind::hamming);
    ke = kappa_stats_for_radial(m, cx.pot, CostKind::euclidean);
    stats["kappa_hamming"] = to_json(kh->stats);
    stats["kappa_euclidean"] = to_json(ke->stats);
  }
  cx.report["stats"] = stats;

  std::vector<BoundReport> w1;
  for (const auto& c : cx.certs) {
    const auto& s = c.cost == CostKind::hamming ? *cx.hamming : *cx.euclidean;
    for (auto strategy : {Strategy::alpha_star, Strategy::alpha_optimal}) {
      w1.push_back(w1_rate_rho(s, c, strategy));
    }
    if (radial) {
      const auto& k = c.cost == CostKind::hamming ? kh->stats : ke->stats;
      for (auto strategy : {Strategy::alpha_star, Strategy::alpha_optimal}) {
        auto r = w1_rate_kappa(k, c, strategy, {.r = std::nullopt, .eps = std::nullopt, .N = 1.0,
                                                .horizon = cx.cfg.sim ? cx.cfg.sim->T : 1.0});
        r.notes.emplace_back("kappa branch: needs an initial law with L2 density");
        w1.push_back(std::move(r));
      }
    }
    if (cx.hamming->rho0 >= 0.0) {
      const auto floored = floor_to_zero(s);
      if (c.cost == CostKind::euclidean) {
        w1.push_back(w1_rate_logconcave(floored, c, LogConcaveWhich::lsi_lip));
      } else {
        w1.push_back(w1_rate_logconcave(floored, c, LogConcaveWhich::poincare_osc));
        w1.push_back(w1_rate_logconcave(floored, c, LogConcaveWhich::universal_min));
      }
    }
  }
  w1.push_back(w1_rate_positive_curvature(*cx.hamming, PositiveWhich::osc));
  w1.push_back(w1_rate_positive_curvature(*cx.euclidean, PositiveWhich::lip));

  TournamentOptions to;
  to.measure = &m;
  to.potential = &cx.pot;
  cx.tournament = best_poincare(*cx.hamming, cx.certs, to);

  json beta = json::array();
  for (const auto& c : cx.certs) {
    const auto bc = compare_beta_branches(*cx.hamming, c, 2);
    beta.push_back({{"certificate", to_json(c)},
                    {"case", bc.case_id},
                    {"winner", to_string(bc.winner)},
                    {"beta_star", num(bc.beta_star)},
                    {"h0", num(bc.h0)},
                    {"crossover", num(bc.crossover)}});
  }

  auto keep = [&](const BoundReport& r) {
    return !cx.opts.branch || to_string(r.branch) == *cx.opts.branch;
  };
  std::vector<BoundReport> all;
  json w1j = json::array(), cpj = json::array();
  for (const auto& r : w1) {
    if (!keep(r)) continue;
    w1j.push_back(to_json(r));
    all.push_back(r);
  }
  for (const auto& r : cx.tournament->candidates) {
    if (!keep(r)) continue;
    cpj.push_back(to_json(r));
    all.push_back(r);
  }
  cx.w1_bounds = w1;
  cx.report["bounds"] = {{"w1_rates", w1j},
                         {"poincare_candidates", cpj},
                         {"poincare_winner", to_json(cx.tournament->winner)},
                         {"beta_comparison", beta}};
  cx.emit("bounds.csv", bounds_csv(all));

  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& r : cx.tournament->candidates) {
    if (!r.valid || !keep(r)) continue;
    labels.push_back(to_string(r.branch) + (r.cert ? " " + cert_label(r) : ""));
    values.push_back(r.value);
  }
  std::optional<double> ref;
  if (cx.spectral) ref = cx.spectral->cp_true;
  cx.emit("bounds.svg", svg_bar_chart("Poincare constant bounds", labels, values, ref, "cp_true"));
}

// Largest valid W1 rate usable from a point mass; kappa branches need an L2 density.
std::optional<BoundReport> best_point_rate(const Context& cx) {
  std::optional<BoundReport> best;
  for (const auto& r : cx.w1_bounds) {
    if (!r.valid || r.knobs.contains("N")) continue;
    if (!best || r.value > best->value) best = r;
  }
  return best;
}

std::vector<double> decay_times(const ExperimentConfig& cfg) {
  if (!cfg.times.empty()) return cfg.times;
  std::vector<double> t;
  for (int i = 1; i <= 10; ++i) t.push_back(cfg.sim->T * i / 10.0);
  return t;
}

void task_simulate(Context& cx) {
  const SimConfig& sc = *cx.cfg.sim;
  const auto times = decay_times(cx.cfg);
  const auto x0 = cx.start_point();
  const auto& eq = cx.equilibrium_points();
  cx.decay = w1_decay_curve(cx.pot, sc, point_sampler(x0), times, eq);
  json sim = {{"x0", x0},
              {"times", cx.decay->times},
              {"w1", cx.decay->estimate},
              {"stderr", cx.decay->se},
              {"fitted_rate", num(cx.decay->fitted_rate)},
              {"fitted_rate_stderr", num(cx.decay->fitted_rate_se)},
              {"n_paths", sc.n_paths},
              {"dt", sc.dt},
              {"seed", sc.seed}};
  if (sc.richardson) {
    const auto fine = w1_decay_curve(cx.pot, sc.halved(), point_sampler(x0), times, eq);
    std::vector<double> extrap;
    for (std::size_t i = 0; i < fine.estimate.size(); ++i) {
      extrap.push_back(2.0 * fine.estimate[i] - cx.decay->estimate[i]);
    }
    sim["w1_richardson"] = extrap;
  }
  cx.emit("w1_decay.csv", curve_csv(cx.decay->times, cx.decay->estimate, cx.decay->se));

  std::vector<Series> series{{"empirical W1", cx.decay->times, cx.decay->estimate, false}};
  if (const auto best = cx.w1_bounds.empty() ? std::nullopt : best_point_rate(cx)) {
    Series th{"rate " + to_string(best->branch) + " (theta=" + fmt_short(best->value) + ")",
              cx.decay->times, {}, true};
    const double y0 = cx.decay->estimate.front() * std::exp(best->value * cx.decay->times.front());
    for (double t : cx.decay->times) th.y.push_back(y0 * std::exp(-best->value * t));
    series.push_back(th);
    sim["theory_branch"] = to_string(best->branch);
    sim["theory_rate"] = num(best->value);
  }
  cx.emit("w1_decay.svg", svg_line_plot("W1 decay from a point mass", "t", "W1", series, true));

  const json* dump = lookup(cx.cfg.raw, "sim.dump_ensemble");
  if (dump != nullptr && dump->get<bool>() && cx.write) {
    SimConfig c = sc;
    c.save_times = {sc.T};
    const auto ens = simulate(cx.pot, c, point_sampler(x0));
    std::ofstream bin(cx.out / "ensemble.bin", std::ios::binary);
    bin.write(reinterpret_cast<const char*>(ens.states[0].data()),
              static_cast<std::streamsize>(ens.states[0].size() * sizeof(double)));
    json header = {{"n_paths", ens.n_paths}, {"n_steps", c.n_steps()}, {"dt", c.dt},
                   {"seed", c.seed}, {"dim", ens.dim}, {"time", sc.T}};
    write_file(cx.out / "ensemble.json", header.dump(2) + "\n");
  }
  cx.report["simulation"] = sim;
}

// ------------------------------------------------------------ validation ---

struct Check {
  std::string name;
  Verdict verdict = Verdict::pass;
  json evidence = json::object();
};

json to_json(const Check& c) {
  return {{"name", c.name}, {"verdict", to_string(c.verdict)}, {"evidence", c.evidence}};
}

double rel_tol(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

Check check_grid(Context& cx) {
  Check c{"grid_normalization"};
  const auto& m = cx.measure();
  double total = 0.0;
  for (double w : m.weights) total += w;
  c.evidence = {{"weight_sum", total}, {"tail_mass_bound", num(m.tail_mass_bound)}, {"tolerance", 1e-12}};
  if (std::abs(total - 1.0) > 1e-12) c.verdict = Verdict::fail;
  return c;
}

Check check_ibp(Context& cx) {
  // mu(V'') = mu(V'^2) for a density exp(-V) that vanishes at the box ends.
  Check c{"integration_by_parts"};
  const auto& m = cx.measure();
  double lhs = 0.0, rhs = 0.0;
  std::vector<double> g(1), h(1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    cx.pot.gradient(m.node(i), g);
    cx.pot.hessian(m.node(i), h);
    lhs += m.weights[i] * h[0];
    rhs += m.weights[i] * g[0] * g[0];
  }
  const double tol = 1e-6 * std::max(1.0, std::abs(lhs)) + m.tail_mass_bound;
  c.evidence = {{"mu_Vpp", lhs}, {"mu_Vp2", rhs}, {"tolerance", tol}};
  if (std::abs(lhs - rhs) > tol) c.verdict = Verdict::fail;
  return c;
}

Check check_oracle(Context& cx) {
  Check c{"bound_vs_oracle"};
  const auto& sr = cx.oracle();
  const double cp = sr.cp_true;
  const double tol = 1e-3 * cp;
  json viol = json::array();
  for (const auto& cert : cx.certs) {
    // A Hamming certificate claims C_P = input_constant; a log-Sobolev one implies C_P <= C_LS/2.
    const double implied = cert.source == CertSource::logsobolev ? 0.5 * cert.input_constant
                           : cert.cost == CostKind::hamming    ? cert.input_constant
                                                               : std::numeric_limits<double>::infinity();
    if (implied < cp - tol) {
      viol.push_back({{"what", "certificate"}, {"certificate", to_json(cert)}, {"implied_cp", implied}});
    }
  }
  for (const auto& r : cx.tournament->candidates) {
    if (r.valid && r.value < cp - tol) {
      viol.push_back({{"what", "bound"}, {"branch", to_string(r.branch)}, {"value", r.value}});
    }
  }
  c.evidence = {{"cp_true", cp}, {"tolerance", tol}, {"violations", viol},
                {"winner", num(cx.tournament->winner.value)}};
  if (!viol.empty()) c.verdict = Verdict::fail;
  if (!sr.converged && c.verdict == Verdict::pass) c.verdict = Verdict::inconclusive;
  return c;
}

Check check_fixed_point(Context& cx) {
  Check c{"not_self_improving"};
  const auto& w = cx.tournament->winner;
  if (!w.valid) {
    c.verdict = Verdict::inconclusive;
    c.evidence = {{"reason", "no valid Poincare bound"}};
    return c;
  }
  auto certs = cx.certs;
  certs.push_back(from_poincare(w.value));
  const auto again = best_poincare(*cx.hamming, certs);
  const double tol = rel_tol(w.value);
  c.evidence = {{"winner", w.value}, {"refed", again.winner.value}, {"tolerance", tol}};
  if (again.winner.value < w.value - tol) c.verdict = Verdict::fail;
  return c;
}

PairSampler box_pairs(const Context& cx) {
  const Box box = cx.pot.domain_box;
  const std::uint64_t seed = cx.cfg.sim->seed;
  return [box, seed](std::uint64_t path, std::span<double> x, std::span<double> y) {
    box_point(box, seed, path, 1, x);
    box_point(box, seed, path, 2, y);
  };
}

json contraction_evidence(const TwoStepContraction& t) {
  auto one = [](const ContractionReport& r) {
    return json{{"checked", r.checked}, {"violations", r.violations},
                {"max_ratio", num(r.max_ratio)}, {"tolerance", num(r.tolerance)}};
  };
  return {{"dt", one(t.coarse)}, {"dt_half", one(t.fine)}};
}

std::vector<Check> check_coupling(Context& cx) {
  std::vector<Check> out;
  const SimConfig& sc = *cx.cfg.sim;
  const auto pairs = box_pairs(cx);
  Check rho{"pathwise_contraction_rho"};
  const auto t = contraction_two_step(cx.pot, sc, pairs, ContractionMode::rho_interpolated);
  rho.verdict = t.verdict;
  rho.evidence = contraction_evidence(t);
  out.push_back(rho);
  if (cx.pot.kind == PotentialKind::radial_convex || cx.pot.kind == PotentialKind::quadratic) {
    Check kap{"pathwise_contraction_kappa"};
    const auto tk = contraction_two_step(cx.pot, sc, pairs, ContractionMode::kappa_sum);
    kap.verdict = tk.verdict;
    kap.evidence = contraction_evidence(tk);
    out.push_back(kap);
  }
  if (cx.pot.dim == 1) {
    Check mono{"monotone_coupling"};
    const auto e = simulate_coupled(cx.pot, sc, pairs);
    mono.evidence = {{"pairs", e.n_paths}, {"order_violations", e.order_violations}};
    if (e.order_violations != 0) mono.verdict = Verdict::fail;
    out.push_back(mono);
  }
  return out;
}

// Inequality est <= bound, holding when bound >= est - 2 se; fails only if
// violated at both dt and dt/2.
template <class F>
Verdict two_step_inequality(F&& at, const SimConfig& sc, json& evidence) {
  const auto [est, bound] = at(sc);
  evidence["dt"] = {{"estimate", to_json(est)}, {"bound", num(bound)}};
  if (bound >= est.mean - 2.0 * est.se - rel_tol(bound)) return Verdict::pass;
  const auto [est2, bound2] = at(sc.halved());
  evidence["dt_half"] = {{"estimate", to_json(est2)}, {"bound", num(bound2)}};
  if (bound2 >= est2.mean - 2.0 * est2.se - rel_tol(bound2)) return Verdict::inconclusive;
  return Verdict::fail;
}

std::vector<Check> check_laplace(Context& cx) {
  std::vector<Check> out;
  const SimConfig& sc = *cx.cfg.sim;
  const double t = std::min(1.0, sc.T);
  const double lambda = 1.0;
  const auto& eq = cx.equilibrium_points();
  const std::size_t d = static_cast<std::size_t>(cx.pot.dim);
  std::vector<double> init(eq.begin(), eq.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(eq.size(), sc.n_paths * d)));
  const Potential& pot = cx.pot;
  ExpFunctionalSpec spec{[&pot](std::span<const double> x) { return pot.rho(x); }, lambda, t,
                         std::nullopt, std::nullopt};
  std::size_t idx = 0;
  for (const auto& cert : cx.certs) {
    const auto& s = cert.cost == CostKind::hamming ? *cx.hamming : *cx.euclidean;
    const auto fs = FunctionalStats::from_curvature(s, 1.0);
    const std::string tag = std::to_string(idx++);
    auto estimate = [&](const SimConfig& c) {
      SimConfig cc = c;
      cc.n_paths = init.size() / d;
      return estimate_exp_functional(pot, cc, list_sampler(init, pot.dim), spec);
    };
    Check mom{"laplace_moment_dominance_" + tag};
    mom.evidence["certificate"] = to_json(cert);
    mom.verdict = two_step_inequality(
        [&](const SimConfig& c) {
          return std::pair{estimate(c), laplace_moment_bound(cert, fs, lambda, t)};
        },
        sc, mom.evidence);
    out.push_back(mom);
    if (s.mean > 0.0 && s.norm_c > 0.0) {
      Check split{"laplace_split_dominance_" + tag};
      split.evidence["certificate"] = to_json(cert);
      split.evidence["epsilon"] = 0.5;
      split.verdict = two_step_inequality(
          [&](const SimConfig& c) {
            return std::pair{estimate(c), laplace_split_bound(cert, fs, lambda, t, 0.5)};
          },
          sc, split.evidence);
      out.push_back(split);
    }
  }
  return out;
}

Check check_w1_rate(Context& cx) {
  Check c{"w1_rate"};
  const auto best = best_point_rate(cx);
  if (!best) {
    c.verdict = Verdict::inconclusive;
    c.evidence = {{"reason", "no valid W1 rate"}};
    return c;
  }
  const double theta = best->value;
  const auto& d = *cx.decay;
  c.evidence = {{"branch", to_string(best->branch)}, {"theta", theta},
                {"fitted_rate", num(d.fitted_rate)}, {"fitted_rate_stderr", num(d.fitted_rate_se)}};
  if (d.fitted_rate >= theta - 2.0 * d.fitted_rate_se) return c;
  const auto fine = w1_decay_curve(cx.pot, cx.cfg.sim->halved(), point_sampler(cx.start_point()),
                                   d.times, cx.equilibrium_points());
  c.evidence["fitted_rate_dt_half"] = num(fine.fitted_rate);
  c.verdict = fine.fitted_rate >= theta - 2.0 * fine.fitted_rate_se ? Verdict::inconclusive
                                                                     : Verdict::fail;
  return c;
}

Check check_commutation(Context& cx) {
  Check c{"gradient_commutation"};
  const SimConfig& sc = *cx.cfg.sim;
  const double t = std::min(1.0, sc.T);
  SmoothFunction f{[](std::span<const double> x) { return std::sin(x[0]); },
                   [](std::span<const double> x, std::span<double> g) {
                     std::fill(g.begin(), g.end(), 0.0);
                     g[0] = std::cos(x[0]);
                   }};
  const auto r = check_gradient_commutation(cx.pot, sc, f, cx.start_point(), t);
  c.verdict = r.verdict;
  c.evidence = {{"t", t}, {"lhs", to_json(r.lhs)}, {"rhs", to_json(r.rhs)}, {"h", r.h},
                {"slack", r.slack}};
  return c;
}

Check check_variance(Context& cx) {
  Check c{"variance_decay"};
  const auto& w = cx.tournament->winner;
  if (!w.valid) {
    c.verdict = Verdict::inconclusive;
    c.evidence = {{"reason", "no valid Poincare bound"}};
    return c;
  }
  const SimConfig& sc = *cx.cfg.sim;
  const auto cov = covariance(cx.measure());
  const double var0 = cov[0];
  const std::vector<double> times{0.5 * sc.T, sc.T};
  const std::size_t d = static_cast<std::size_t>(cx.pot.dim);
  const auto& eq = cx.equilibrium_points();
  const std::size_t n_outer = std::min<std::size_t>(std::max<std::size_t>(sc.n_paths / 4, 20), 400);
  // Evenly thinned so the outer points stay spread over mu.
  std::vector<double> outer;
  const std::size_t n_eq = eq.size() / d;
  for (std::size_t i = 0; i < n_outer; ++i) {
    const std::size_t k = (2 * i + 1) * n_eq / (2 * n_outer);
    for (std::size_t a = 0; a < d; ++a) outer.push_back(eq[k * d + a]);
  }
  PointFn f = [](std::span<const double> x) { return x[0]; };
  auto run = [&](const SimConfig& s) { return variance_decay(cx.pot, s, f, times, outer, 32); };
  const auto vd = run(sc);
  json rows = json::array();
  bool violated = false;
  for (std::size_t i = 0; i < vd.times.size(); ++i) {
    const double bound = std::exp(-vd.times[i] / w.value) * var0;
    rows.push_back({{"t", vd.times[i]}, {"variance", vd.variance[i]}, {"stderr", vd.se[i]},
                    {"bound", bound}});
    if (vd.variance[i] - 2.0 * vd.se[i] > bound + rel_tol(bound)) violated = true;
  }
  c.evidence = {{"cp_bound", w.value}, {"var_mu_f", var0}, {"rows", rows}};
  if (!violated) return c;
  const auto fine = run(sc.halved());
  bool violated_fine = false;
  for (std::size_t i = 0; i < fine.times.size(); ++i) {
    const double bound = std::exp(-fine.times[i] / w.value) * var0;
    if (fine.variance[i] - 2.0 * fine.se[i] > bound + rel_tol(bound)) violated_fine = true;
  }
  c.verdict = violated_fine ? Verdict::fail : Verdict::inconclusive;
  return c;
}

void task_validate(Context& cx) {
  std::vector<Check> checks;
  json skipped = json::array();
  checks.push_back(check_grid(cx));
  if (cx.pot.dim == 1 && !cx.pot.confined) checks.push_back(check_ibp(cx));
  if (cx.pot.dim == 1) {
    checks.push_back(check_oracle(cx));
  } else {
    skipped.push_back({{"name", "bound_vs_oracle"}, {"reason", "spectral oracle is one-dimensional"}});
  }
  checks.push_back(check_fixed_point(cx));
  for (auto& c : check_coupling(cx)) checks.push_back(std::move(c));
  for (auto& c : check_laplace(cx)) checks.push_back(std::move(c));
  if (cx.decay) {
    checks.push_back(check_w1_rate(cx));
  } else {
    skipped.push_back({{"name", "w1_rate"}, {"reason", "task simulate not requested"}});
  }
  checks.push_back(check_commutation(cx));
  checks.push_back(check_variance(cx));

  json arr = json::array();
  for (const auto& c : checks) arr.push_back(to_json(c));
  cx.report["validation"] = {{"checks", arr}, {"skipped", skipped}};
}

int exit_code_of(const json& report) {
  if (report.contains("failure") && !report.at("failure").is_null()) return 1;
  bool inconclusive = false;
  if (report.contains("validation")) {
    for (const auto& c : report.at("validation").at("checks")) {
      if (c.at("verdict") == "fail") return 1;
      if (c.at("verdict") == "inconclusive") inconclusive = true;
    }
  }
  return inconclusive ? 3 : 0;
}

json sweep_row(const ExperimentConfig& sub, double v) {
  json row = {{"value", v}};
  RunOptions o;
  o.write_files = false;
  const auto res = run_experiment(sub, o);
  const auto& r = res.report;
  row["exit_code"] = res.exit_code;
  if (r.contains("spectral")) row["cp_true"] = r["spectral"]["cp_true"];
  if (r.contains("bounds")) {
    row["winner_branch"] = r["bounds"]["poincare_winner"]["branch"];
    row["winner_cp"] = r["bounds"]["poincare_winner"]["value"];
    row["rho0"] = r["stats"]["hamming"]["rho0"];
    row["mean"] = r["stats"]["hamming"]["mean"];
    row["osc"] = r["stats"]["hamming"]["osc"];
  }
  if (r.contains("failure")) row["failure"] = r["failure"];
  return row;
}

void task_sweep(Context& cx) {
  const auto& sw = *cx.cfg.sweep;
  json rows = json::array();
  std::string csv = "value,cp_true,winner_branch,winner_cp,rho0,mean,osc\n";
  for (double v : sw.values) {
    json raw = cx.cfg.raw;
    assign(raw, sw.parameter, v);
    raw.erase("sweep");
    json tasks = json::array();
    for (const auto& t : cx.cfg.tasks) {
      if (t != "sweep" && t != "validate" && t != "simulate") tasks.push_back(t);
    }
    if (tasks.empty()) tasks = {"spectral", "bounds"};
    raw["tasks"] = tasks;
    const auto row = sweep_row(parse_config(raw), v);
    rows.push_back(row);
    auto cell = [&](const char* k) {
      if (!row.contains(k)) return std::string();
      const auto& x = row.at(k);
      return x.is_number() ? fmt(x.get<double>()) : x.get<std::string>();
    };
    csv += fmt(v) + "," + cell("cp_true") + "," + cell("winner_branch") + "," + cell("winner_cp") +
           "," + cell("rho0") + "," + cell("mean") + "," + cell("osc") + "\n";
  }
  cx.report["sweep"] = {{"parameter", sw.parameter}, {"rows", rows}};
  cx.emit("sweep.csv", csv);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  Context cx(cfg, opts);
  cx.report["schema_version"] = kSchemaVersion;
  cx.report["config"] = cfg.raw;
  cx.report["failure"] = nullptr;
  if (cx.write) std::filesystem::create_directories(cx.out);

  std::vector<std::string> tasks = cfg.tasks;
  if (opts.force_validate) {
    for (const char* t : {"bounds", "validate"}) {
      if (std::find(tasks.begin(), tasks.end(), t) == tasks.end()) tasks.push_back(t);
    }
    if (cfg.sim && std::find(tasks.begin(), tasks.end(), "simulate") == tasks.end()) {
      tasks.push_back("simulate");
    }
  }
  auto want = [&](const char* t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };
  std::string stage = "potential";
  try {
    if (opts.branch) {
      bool known = false;
      for (int b = 0; b <= static_cast<int>(Branch::ultrabounded); ++b) {
        known = known || to_string(static_cast<Branch>(b)) == *opts.branch;
      }
      if (!known) throw ConfigError("unknown branch '" + *opts.branch + "'");
    }
    cx.pot = build_potential(cfg.potential);
    cx.report["potential"] = {{"name", cx.pot.name}, {"dim", cx.pot.dim},
                              {"kind", cfg.potential.kind}};
    stage = "spectral";
    if (want("spectral")) {
      if (cx.pot.dim == 1) {
        cx.oracle();
      } else {
        cx.report["spectral"] = {{"skipped", "spectral oracle is one-dimensional"}};
      }
    }
    // Validation needs the bounds and the oracle even when not requested.
    stage = "bounds";
    if (want("bounds") || want("validate")) task_bounds(cx);
    stage = "simulate";
    if (want("simulate")) task_simulate(cx);
    stage = "validate";
    if (want("validate")) {
      if (!cfg.sim) throw ConfigError("validation needs a 'sim' section");
      task_validate(cx);
    }
    stage = "sweep";
    if (want("sweep")) task_sweep(cx);
  } catch (const ConfigError& e) {
    cx.report["failure"] = {{"stage", stage}, {"type", "config"}, {"message", e.what()}};
  } catch (const std::exception& e) {
    cx.report["failure"] = {{"stage", stage}, {"type", "hard"}, {"message", e.what()}};
  }
  RunOutcome out;
  out.report = cx.report;
  const auto& f = out.report.at("failure");
  out.exit_code = !f.is_null() && f.at("type") == "config" ? 2 : exit_code_of(out.report);
  out.report["exit_code"] = out.exit_code;
  if (cx.write) write_file(cx.out / "report.json", out.report.dump(2) + "\n");
  return out;
}

}  // namespace curvebound
