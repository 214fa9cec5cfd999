#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dms/cli.hpp"

using namespace dms;
namespace fs = std::filesystem;

namespace {

const json kBaseline = {{"family", "b"}, {"s", 0}, {"p", 2}, {"q", 2}, {"n", 1}};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("dms_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_exe(const std::string& args) {
  const char* exe = std::getenv("DMS_EXE");
  REQUIRE(exe != nullptr);
  int rc = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool mentions(const std::vector<cli::Diagnostic>& d, const std::string& s) {
  for (const auto& x : d)
    if (x.message.find(s) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("norm of the single-coefficient baseline") {
  json spec = {{"kind", "norm"}, {"space", kBaseline}, {"coefficients", {{{"j", 0}, {"k", {0}}, {"v", 1}}}}};
  auto o = cli::run("norm", spec);
  CHECK(o.exit_code == 0);
  CHECK(o.report["result"]["norm"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(o.tables.count("per_P"));
  CHECK(o.report["spec"] == spec);
}

TEST_CASE("adtest with the identity operator") {
  json spec = {{"kind", "adtest"},
               {"seed", 1},
               {"space", kBaseline},
               {"window", {{"n", 1}, {"j_min", 0}, {"j_max", 2}, {"box", 2}}},
               {"ensemble", {{"N", 5}}}};
  auto o = cli::run("adtest", spec);
  CHECK(o.exit_code == 0);
  for (const auto& row : o.tables.at("ratios").rows) {
    CHECK(row[1].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row[2].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto w = cli::run("adtest", spec, std::string("0:1:1"));
  CHECK(w.exit_code == 0);
  CHECK(w.report["result"]["window"]["j_max"] == 1);
  CHECK(w.report["window_override"] == "0:1:1");
}

TEST_CASE("trace pipeline with identity weights") {
  json spec = {{"kind", "trace"},
               {"seed", 3},
               {"space", {{"family", "b"}, {"s", 0.75}, {"p", 2}, {"q", 2}, {"n", 2}}},
               {"gamma", 1},
               {"wavelet", {{"k", 1}, {"levels", 6}}},
               {"window", {{"n", 1}, {"j_min", 0}, {"j_max", 2}, {"box", 2}}},
               {"ensemble", {{"N", 5}}}};
  auto o = cli::run("trace", spec);
  CHECK(o.exit_code == 0);
  const auto& r = o.report["result"];
  CHECK(r["compat_trace"]["C"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r["compat_ext"]["C"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r["roundtrip"]["max_residual"].get<double>() <= 1e-6);

  json low = spec;
  low["space"]["s"] = 0.25;
  auto w = cli::run("trace", low);
  CHECK(w.exit_code == 2);
  CHECK_FALSE(w.warnings.empty());
}

TEST_CASE("validation") {
  json norm = {{"space", kBaseline}, {"coefficients", json::array()}};
  CHECK(cli::validate("norm", norm).empty());

  json bad_growth = norm;
  bad_growth["space"]["growth"] = {{"kind", "constant"}, {"class", {{"delta1", 0}, {"delta2", 0.5}, {"omega", 2}}}};
  auto d = cli::validate("norm", bad_growth);
  REQUIRE_FALSE(d.empty());
  CHECK(d.front().level == cli::Diagnostic::error);
  CHECK(mentions(d, "admissible"));

  json tr = {{"seed", 1},
             {"space", {{"family", "b"}, {"s", 1}, {"p", 2}, {"q", 2}, {"n", 2}}},
             {"wavelet", {{"k", 1}}}};
  auto dk = cli::validate("trace", tr);
  REQUIRE(dk.size() == 1);
  CHECK(dk.front().level == cli::Diagnostic::error);
  CHECK(mentions(dk, "minimal admissible order 2"));
  tr["wavelet"]["force"] = true;
  auto df = cli::validate("trace", tr);
  REQUIRE(df.size() == 1);
  CHECK(df.front().level == cli::Diagnostic::warning);

  CHECK(mentions(cli::validate("adtest", json{{"space", kBaseline}}), "seed is mandatory"));
  CHECK(mentions(cli::validate("adtest", json{{"space", kBaseline}, {"seed", -1}}), "nonnegative"));
  CHECK(mentions(cli::validate("psido", json::object()), "'symbol'"));
  CHECK(mentions(cli::validate("norm", json{{"kind", "psido"}, {"space", kBaseline}, {"coefficients", json::array()}}),
                 "differs"));
  CHECK(mentions(cli::validate("norm", json::array()), "object"));
  json cz = {{"kernel", {{"kind", "hilbert"}}}, {"space", kBaseline}, {"F", 0}};
  auto dc = cli::validate("czo", cz);
  REQUIRE(dc.size() == 1);
  CHECK(dc.front().level == cli::Diagnostic::warning);

  json before = bad_growth;
  cli::validate("norm", bad_growth);
  CHECK(before == bad_growth);
}

TEST_CASE("minimal wavelet order") {
  auto thr = thresholds(make_params(Family::B, 0, 2, 2, 1, 1), 0, 0);
  CHECK(cli::minimal_wavelet_order(thr) == 1);
  auto t1 = thresholds(make_params(Family::B, 1, 2, 2, 2, 1), 0, 0);
  CHECK(cli::minimal_wavelet_order(t1) == 2);
  auto t2 = thresholds(make_params(Family::B, 0.75, 2, 2, 2, 1), 0, 0);
  CHECK(cli::minimal_wavelet_order(t2) == 1);
}

TEST_CASE("csv output") {
  cli::Table t{{"a", "b"}, {{1, 2.5}, {json(), "x"}}};
  CHECK(cli::to_csv(t) == "a,b\n1,2.5\n,x\n");
}

TEST_CASE("executable exit codes and byte-identical reports") {
  auto dir = scratch("exe");
  json norm = {{"kind", "norm"}, {"space", kBaseline}, {"coefficients", {{{"j", 0}, {"k", {0}}, {"v", 1}}}}};
  json ad = {{"kind", "adtest"},
             {"seed", 9},
             {"space", kBaseline},
             {"operator", {{"kind", "udef"}}},
             {"window", {{"n", 1}, {"j_min", 0}, {"j_max", 2}, {"box", 2}}},
             {"ensemble", {{"N", 5}}}};
  json warn = ad;
  warn["operator"]["envelope"] = {{"D", 0.5}, {"E", 0.1}, {"F", 0.1}};
  json bad = {{"kind", "adtest"}, {"space", kBaseline}};
  for (auto& [name, j] : std::vector<std::pair<std::string, json>>{{"norm", norm}, {"ad", ad}, {"warn", warn}, {"bad", bad}})
    std::ofstream(dir / (name + ".json")) << j.dump();

  CHECK(run_exe("norm --spec " + (dir / "norm.json").string() + " --out " + (dir / "n").string()) == 0);
  CHECK(fs::exists(dir / "n" / "report.json"));
  CHECK(run_exe("adtest --spec " + (dir / "ad.json").string() + " --out " + (dir / "a1").string()) == 0);
  CHECK(run_exe("adtest --spec " + (dir / "ad.json").string() + " --out " + (dir / "a2").string()) == 0);
  for (const auto& e : fs::directory_iterator(dir / "a1")) {
    CAPTURE(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(dir / "a2" / e.path().filename()));
  }
  CHECK(run_exe("adtest --spec " + (dir / "warn.json").string() + " --out " + (dir / "w").string()) == 2);
  CHECK(run_exe("adtest --spec " + (dir / "bad.json").string() + " --out " + (dir / "b").string()) == 1);
  CHECK(run_exe("adtest --spec " + (dir / "missing.json").string() + " --out " + (dir / "m").string()) == 1);
  CHECK(run_exe("validate norm --spec " + (dir / "norm.json").string()) == 0);
  CHECK(run_exe("validate adtest --spec " + (dir / "bad.json").string()) == 1);
  CHECK(run_exe("adtest --spec " + (dir / "ad.json").string() + " --out " + (dir / "o").string() +
                " --window 0:1:1") == 0);
  auto rep = json::parse(slurp(dir / "o" / "report.json"));
  CHECK(rep["result"]["window"]["j_max"] == 1);
  fs::remove_all(dir);
}
