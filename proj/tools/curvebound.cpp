#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "curvebound/errors.hpp"
#include "curvebound/harness.hpp"

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> branch;
};

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("config", a.config, "experiment config (JSON)")->required();
  sub->add_option("--seed", a.seed, "override sim.seed");
  sub->add_option("--out", a.out, "override output_dir");
}

int run(const Args& a, const std::string& mode) {
  using namespace curvebound;
  try {
    auto raw = [&] {
      auto cfg = load_config(a.config);
      return cfg.raw;
    }();
    if (a.seed) {
      if (!raw.contains("sim")) throw ConfigError("--seed given but the config has no 'sim' section");
      raw["sim"]["seed"] = *a.seed;
    }
    if (a.out) raw["output_dir"] = *a.out;
    if (mode == "bounds") {
      auto tasks = nlohmann::json::array({"bounds"});
      raw["tasks"] = tasks;
      raw.erase("sweep");
    }
    const auto cfg = parse_config(raw);
    RunOptions opts;
    opts.branch = a.branch;
    opts.force_validate = mode == "validate";
    const auto res = run_experiment(cfg, opts);

    const auto& rep = res.report;
    if (rep.contains("spectral") && rep["spectral"].contains("cp_true")) {
      std::cout << "cp_true " << rep["spectral"]["cp_true"] << "\n";
    }
    if (rep.contains("bounds")) {
      const auto& w = rep["bounds"]["poincare_winner"];
      std::cout << "poincare winner " << w["branch"].get<std::string>() << " " << w["value"] << "\n";
      if (a.branch) {
        for (const auto* group : {"w1_rates", "poincare_candidates"}) {
          for (const auto& b : rep["bounds"][group]) {
            std::cout << b["kind"].get<std::string>() << " " << b["branch"].get<std::string>()
                      << " valid=" << b["valid"] << " value=" << b["value"];
            if (!b["reason"].get<std::string>().empty()) std::cout << " (" << b["reason"].get<std::string>() << ")";
            std::cout << "\n";
          }
        }
      }
    }
    if (rep.contains("validation")) {
      for (const auto& c : rep["validation"]["checks"]) {
        std::cout << c["verdict"].get<std::string>() << "  " << c["name"].get<std::string>() << "\n";
      }
    }
    if (!rep["failure"].is_null()) {
      std::cerr << "failure (" << rep["failure"]["stage"].get<std::string>()
                << "): " << rep["failure"]["message"].get<std::string>() << "\n";
    }
    std::cout << "report: " << cfg.output_dir << "/report.json\n";
    return res.exit_code;
  } catch (const curvebound::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvebound: curvature-based functional inequality bounds and checks"};
  app.require_subcommand(1);
  Args a;
  auto* run_cmd = app.add_subcommand("run", "execute the tasks listed in the config");
  auto* val_cmd = app.add_subcommand("validate", "run every applicable validation check");
  auto* bnd_cmd = app.add_subcommand("bounds", "compute bounds only");
  add_common(run_cmd, a);
  add_common(val_cmd, a);
  add_common(bnd_cmd, a);
  bnd_cmd->add_option("--branch", a.branch, "keep only this branch");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (run_cmd->parsed()) return run(a, "run");
  if (val_cmd->parsed()) return run(a, "validate");
  return run(a, "bounds");
}
