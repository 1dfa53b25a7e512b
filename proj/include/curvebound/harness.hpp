#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvebound/bound_engine.hpp"
#include "curvebound/potential.hpp"
#include "curvebound/sde.hpp"
#include "curvebound/spectral.hpp"

namespace curvebound {

inline constexpr int kSchemaVersion = 1;

struct PotentialSpec {
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
  Box box;
  int resolution = 1024;
  std::optional<double> analytic_lip;
};

struct CertificateSpec {
  std::string source;  // poincare | logsobolev | user | spectral_oracle | bakry_emery
  std::optional<double> constant;
  CostKind cost = CostKind::hamming;
};

struct SweepSpec {
  std::string parameter;  // dotted path into the config, e.g. potential.params.a
  std::vector<double> values;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  PotentialSpec potential;
  std::vector<CertificateSpec> certificates;
  std::optional<SimConfig> sim;
  std::vector<double> x0;     // start of the simulated W1 decay (defaults inside the box)
  std::vector<double> times;  // W1 decay sample times
  std::vector<std::string> tasks;
  std::optional<SweepSpec> sweep;
  std::string output_dir = "curvebound_out";
  double quantile = 0.5;
  nlohmann::json raw;
};

/// Validates against the versioned schema; unknown fields are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

Potential build_potential(const PotentialSpec& spec);

nlohmann::json to_json(const CurvatureStats& s);
nlohmann::json to_json(const WICertificate& c);
nlohmann::json to_json(const BoundReport& r);
nlohmann::json to_json(const SpectralResult& r);
nlohmann::json to_json(const EstimateCI& e);

struct RunOptions {
  bool write_files = true;
  std::optional<std::string> branch;  // keep only bounds of this branch
  bool force_validate = false;
};

struct RunOutcome {
  nlohmann::json report;
  int exit_code = 0;  // 0 pass, 1 hard failure, 2 config error, 3 inconclusive only
};

RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// One CSV row per bound: kind, branch, certificate, valid, theta_or_cp, epsilon, r, reason.
std::string bounds_csv(const std::vector<BoundReport>& bounds);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

/// Standalone SVG line plot; log_y plots log10 of positive values.
std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<Series>& series,
                          bool log_y);

/// Standalone SVG bar chart with an optional horizontal reference line.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, std::optional<double> reference,
                          const std::string& reference_label);

}  // namespace curvebound
