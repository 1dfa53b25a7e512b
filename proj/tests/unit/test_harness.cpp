#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "curvebound/errors.hpp"
#include "curvebound/harness.hpp"

using namespace curvebound;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = CURVEBOUND_SOURCE_DIR;

json gaussian_config() {
  return json::parse(R"({
    "schema_version": 1,
    "potential": {"kind": "gaussian", "params": {"rho": 1.0, "dim": 1},
                  "domain_box": [[-10, 10]], "resolution": 2048},
    "certificates": [{"source": "spectral_oracle"}],
    "tasks": ["spectral", "bounds"]
  })");
}

json small_validation_config(std::uint64_t seed) {
  auto j = gaussian_config();
  j["potential"]["resolution"] = 1024;
  j["sim"] = {{"dt", 0.002}, {"T", 1.0}, {"n_paths", 400}, {"seed", seed}, {"x0", {2.0}}};
  j["tasks"] = {"spectral", "bounds", "simulate", "validate"};
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Same structure, equal strings and booleans, numbers within 1e-9 relative.
void compare_json(const json& got, const json& want, const std::string& path) {
  INFO("at " << path);
  if (want.is_number() && got.is_number()) {
    const double a = got.get<double>(), b = want.get<double>();
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)));
    return;
  }
  REQUIRE(got.type() == want.type());
  if (want.is_object()) {
    CHECK(got.size() == want.size());
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE(got.contains(it.key()));
      compare_json(got.at(it.key()), it.value(), path + "." + it.key());
    }
  } else if (want.is_array()) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      compare_json(got[i], want[i], path + "[" + std::to_string(i) + "]");
    }
  } else {
    CHECK(got == want);
  }
}

std::vector<std::pair<std::string, std::string>> verdicts(const json& report) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& c : report.at("validation").at("checks")) {
    out.emplace_back(c.at("name"), c.at("verdict"));
  }
  return out;
}

}  // namespace

TEST_CASE("config schema errors") {
  SUBCASE("empty task list") {
    auto j = gaussian_config();
    j["tasks"] = json::array();
    CHECK_THROWS_AS(parse_config(j), ConfigError);
    CHECK_THROWS_AS(load_config(kSource / "tests/golden/bad_tasks.json"), ConfigError);
  }
  SUBCASE("unknown field") {
    auto j = gaussian_config();
    j["potential"]["colour"] = "blue";
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("wrong schema version") {
    auto j = gaussian_config();
    j["schema_version"] = 2;
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("unknown task") {
    auto j = gaussian_config();
    j["tasks"] = {"bounds", "dance"};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("simulate without sim") {
    auto j = gaussian_config();
    j["tasks"] = {"simulate"};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("poincare certificate without a constant") {
    auto j = gaussian_config();
    j["certificates"] = {{{"source", "poincare"}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("sweep over a missing field") {
    auto j = gaussian_config();
    j["tasks"] = {"sweep"};
    j["sweep"] = {{"parameter", "potential.params.nope"}, {"values", {1.0}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);
  }
  SUBCASE("unknown branch filter") {
    RunOptions o;
    o.write_files = false;
    o.branch = "no_such_branch";
    const auto res = run_experiment(parse_config(gaussian_config()), o);
    CHECK(res.exit_code == 2);
    CHECK(res.report.at("failure").at("type") == "config");
  }
  SUBCASE("every shipped config parses") {
    for (const auto& e : fs::directory_iterator(kSource / "configs")) {
      INFO(e.path().string());
      CHECK_NOTHROW(load_config(e.path()));
    }
  }
}

TEST_CASE("gaussian spectral and bounds") {
  RunOptions o;
  o.write_files = false;
  const auto res = run_experiment(parse_config(gaussian_config()), o);
  CHECK(res.exit_code == 0);
  const auto& r = res.report;
  CHECK(r.at("spectral").at("cp_true").get<double>() == doctest::Approx(1.0).epsilon(1e-3));
  const auto& w = r.at("bounds").at("poincare_winner");
  CHECK(w.at("branch") == "be_baseline");
  CHECK(w.at("value").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sweep row at a = 0 reproduces the gaussian") {
  auto j = gaussian_config();
  j["potential"] = json::parse(R"({"kind": "cosine_perturbed_gaussian", "params": {"a": 0.1, "k": 2},
                                   "domain_box": [[-10, 10]], "resolution": 2048})");
  j["tasks"] = {"sweep"};
  j["sweep"] = {{"parameter", "potential.params.a"}, {"values", {0.0, 0.1}}};
  RunOptions o;
  o.write_files = false;
  const auto sweep = run_experiment(parse_config(j), o);
  REQUIRE(sweep.exit_code == 0);
  const auto gauss = run_experiment(parse_config(gaussian_config()), o);
  const auto& row = sweep.report.at("sweep").at("rows").at(0);
  CHECK(row.at("winner_branch") == "be_baseline");
  CHECK(row.at("winner_cp").get<double>() ==
        doctest::Approx(gauss.report["bounds"]["poincare_winner"]["value"].get<double>())
            .epsilon(1e-12));
  CHECK(row.at("cp_true").get<double>() ==
        doctest::Approx(gauss.report["spectral"]["cp_true"].get<double>()).epsilon(1e-12));
  const auto& row1 = sweep.report.at("sweep").at("rows").at(1);
  CHECK(row1.at("winner_cp").get<double>() < 1.0 / 0.6);
}

TEST_CASE("golden report") {
  auto cfg = load_config(kSource / "tests/golden/cosine_bounds.config.json");
  RunOptions o;
  o.write_files = false;
  auto res = run_experiment(cfg, o);
  REQUIRE(res.exit_code == 0);
  const fs::path golden = kSource / "tests/golden/cosine_bounds.report.json";
  if (std::getenv("CURVEBOUND_REGEN_GOLDEN") != nullptr) {
    std::ofstream(golden) << res.report.dump(2) << "\n";
  }
  REQUIRE(fs::exists(golden));
  compare_json(res.report, json::parse(slurp(golden)), "report");
}

TEST_CASE("reruns are byte identical") {
  const fs::path dir = fs::temp_directory_path() / "curvebound_rerun";
  fs::remove_all(dir);
  auto j = gaussian_config();
  j["potential"]["resolution"] = 512;
  j["sim"] = {{"dt", 0.005}, {"T", 0.5}, {"n_paths", 200}, {"seed", 1}, {"x0", {1.0}}};
  j["tasks"] = {"spectral", "bounds", "simulate"};
  for (const char* run : {"a", "b"}) {
    j["output_dir"] = (dir / run).string();
    REQUIRE(run_experiment(parse_config(j)).exit_code == 0);
  }
  for (const char* f : {"report.json", "bounds.csv", "bounds.svg", "w1_decay.csv", "w1_decay.svg"}) {
    INFO(f);
    const auto a = slurp(dir / "a" / f);
    CHECK_FALSE(a.empty());
    // The reports embed their own output_dir; compare everything else.
    if (std::string(f) == "report.json") {
      auto ja = json::parse(a), jb = json::parse(slurp(dir / "b" / f));
      ja["config"].erase("output_dir");
      jb["config"].erase("output_dir");
      CHECK(ja.dump() == jb.dump());
    } else {
      CHECK(a == slurp(dir / "b" / f));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("validation verdicts") {
  RunOptions o;
  o.write_files = false;
  SUBCASE("gaussian passes every check and the verdicts do not depend on the seed") {
    const auto a = run_experiment(parse_config(small_validation_config(1)), o);
    const auto b = run_experiment(parse_config(small_validation_config(99)), o);
    CHECK(a.exit_code == 0);
    for (const auto& [name, verdict] : verdicts(a.report)) {
      INFO(name);
      CHECK(verdict == "pass");
    }
    CHECK(verdicts(a.report) == verdicts(b.report));
  }
  SUBCASE("a certificate below the true constant fails bound_vs_oracle") {
    auto j = small_validation_config(3);
    j["certificates"] = {{{"source", "poincare"}, {"constant", 0.1}}};
    const auto res = run_experiment(parse_config(j), o);
    CHECK(res.exit_code == 1);
    bool found = false;
    for (const auto& [name, verdict] : verdicts(res.report)) {
      if (name == "bound_vs_oracle") {
        found = true;
        CHECK(verdict == "fail");
      }
    }
    CHECK(found);
  }
}

TEST_CASE("hard failure keeps partial output") {
  const fs::path dir = fs::temp_directory_path() / "curvebound_partial";
  fs::remove_all(dir);
  auto j = gaussian_config();
  j["potential"]["domain_box"] = {{-1, 1}};  // too much tail mass
  j["output_dir"] = dir.string();
  const auto res = run_experiment(parse_config(j));
  CHECK(res.exit_code == 1);
  const auto rep = json::parse(slurp(dir / "report.json"));
  CHECK(rep.at("failure").at("type") == "hard");
  CHECK(rep.at("exit_code") == 1);
  fs::remove_all(dir);
}

TEST_CASE("csv and svg writers") {
  const auto rep = be_baseline(2.0).first;
  const auto csv = bounds_csv({rep});
  CHECK(csv.rfind("kind,branch,certificate,valid,theta_or_cp,epsilon,r,reason\n", 0) == 0);
  CHECK(csv.find("be_baseline") != std::string::npos);
  const auto line = svg_line_plot("t", "x", "y", {{"a", {0, 1, 2}, {1, 0.5, 0.25}, false}}, true);
  CHECK(line.rfind("<svg", 0) == 0);
  CHECK(line.find("</svg>") != std::string::npos);
  const auto bars = svg_bar_chart("b", {"one", "two"}, {1.0, 2.0}, 1.5, "truth");
  CHECK(bars.find("truth") != std::string::npos);
}
