#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "ppm/cli.hpp"
#include "support.hpp"

using namespace ppm;
using namespace ppm::testing_support;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ppm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Scenario directory shared by the tests in this file.
class CliScenario : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = run_cli({"simulate", "--seed", "31", "--out", (dir_->path() / "scn").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path scn() { return dir_->path() / "scn"; }
  static fs::path config() { return scn() / "config.json"; }
  static fs::path scratch(const std::string& name) { return dir_->path() / name; }

  static TempDir* dir_;
};

TempDir* CliScenario::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* cmd : {"calibrate-baseplane", "calibrate-projector", "register", "extract-labels", "run",
                          "simulate", "serve"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
  const auto sub = run_cli({"run", "--help"});
  EXPECT_EQ(sub.code, 0);
  EXPECT_NE(sub.out.find("--config"), std::string::npos);
}

TEST(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"run"}).code, 2);
  EXPECT_EQ(run_cli({"simulate", "--seed", "abc", "--out", "x"}).code, 2);
  const auto r = run_cli({"calibrate-projector", "--correspondences", "x.json", "--solver", "guess"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--solver"), std::string::npos);
}

TEST(Cli, MissingConfigFileExitsOneAndNamesIt) {
  const auto r = run_cli({"run", "--config", "/nonexistent/where/config.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/where/config.json"), std::string::npos);
}

TEST_F(CliScenario, RunWritesLabels) {
  const auto out = scratch("run");
  const auto r = run_cli({"run", "--config", config().string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rmse "), std::string::npos);
  EXPECT_NE(r.out.find("poi 1"), std::string::npos);
  const auto labels = io::read_json(out / "labels.json");
  EXPECT_EQ(labels.size(), io::read_json(scn() / "truth" / "pois.json")["centers"].size());
}

TEST_F(CliScenario, StagewiseEqualsRun) {
  const auto whole = scratch("whole"), parts = scratch("parts");
  ASSERT_EQ(run_cli({"run", "--config", config().string(), "--out", whole.string()}).code, 0);
  ASSERT_EQ(run_cli({"register", "--config", config().string(), "--out", parts.string()}).code, 0);
  const auto r = run_cli({"extract-labels", "--config", config().string(), "--out", parts.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_text(whole / "labels.json"), io::read_text(parts / "labels.json"));
  EXPECT_EQ(io::read_text(whole / "ddf.f32"), io::read_text(parts / "ddf.f32"));
}

TEST_F(CliScenario, MissingInputFileExitsOneAndNamesIt) {
  json cfg = io::read_json(config());
  cfg["inputs"]["histology"] = "phantom/nothing_here.png";
  const auto path = scn() / "missing_input.json";
  io::write_json(path, cfg);
  const auto r = run_cli({"register", "--config", path.string(), "--out", scratch("missing").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nothing_here.png"), std::string::npos);
  EXPECT_NE(r.err.find("register"), std::string::npos);
}

TEST_F(CliScenario, MalformedConfigExitsTwoAndNamesField) {
  json cfg = io::read_json(config());
  cfg["registration"]["mi_bins"] = "lots";
  const auto path = scn() / "malformed.json";
  io::write_json(path, cfg);
  const auto r = run_cli({"run", "--config", path.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("registration.mi_bins"), std::string::npos);

  json no_ann = io::read_json(config());
  no_ann["inputs"].erase("annotation");
  io::write_json(scn() / "no_annotation.json", no_ann);
  const auto r2 = run_cli({"extract-labels", "--config", (scn() / "no_annotation.json").string()});
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("inputs.annotation"), std::string::npos);

  io::write_text(scn() / "broken.json", "{\"seed\": ");
  EXPECT_EQ(run_cli({"run", "--config", (scn() / "broken.json").string()}).code, 2);
}

TEST_F(CliScenario, CalibrateProjectorPrintsRmse) {
  for (const char* solver : {"procrustes", "nelder-mead"}) {
    const auto out = scratch(std::string("proj-") + solver);
    const auto r = run_cli({"calibrate-projector", "--correspondences", (scn() / "correspondences.json").string(),
                            "--solver", solver, "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_EQ(r.out.rfind("rmse ", 0), 0u) << r.out;
    EXPECT_LT(std::stod(r.out.substr(5)), 1e-6);
    const auto t = io::read_json(out / "transform.json");
    EXPECT_EQ(t["solver"], solver);
    EXPECT_FALSE(t["not_rigid"].get<bool>());
    const auto truth = io::transform_from_json(io::read_json(scn() / "truth" / "transform.json"), "truth");
    const auto est = io::transform_from_json(t, "transform");
    EXPECT_TRUE(est.rotation.isApprox(truth.rotation, 1e-6));
  }
}

TEST_F(CliScenario, CalibrateBaseplaneFromFrames) {
  std::vector<std::string> args{"calibrate-baseplane", "--out", scratch("plane").string(), "--samples", "500"};
  for (const auto& e : fs::directory_iterator(scn() / "depth")) {
    if (e.path().extension() == ".json") args.push_back(e.path().string());
  }
  const auto r = run_cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plane = io::read_json(scratch("plane") / "plane.json");
  const auto truth = io::read_json(scn() / "truth" / "plane.json");
  EXPECT_NEAR(plane["a"].get<double>(), truth["a"].get<double>(), 1e-3);
  EXPECT_NEAR(plane["b"].get<double>(), truth["b"].get<double>(), 1e-3);
  EXPECT_EQ(plane["sample_count"], 500);
  EXPECT_EQ(run_cli({"calibrate-baseplane"}).code, 2);
}

TEST_F(CliScenario, SimulateIsDeterministic) {
  const auto a = scratch("sim-a"), b = scratch("sim-b");
  ASSERT_EQ(run_cli({"simulate", "--seed", "5", "--out", a.string()}).code, 0);
  ASSERT_EQ(run_cli({"simulate", "--seed", "5", "--out", b.string()}).code, 0);
  for (const char* f : {"correspondences.json", "phantom/specimen.png", "phantom/histology.png", "truth/ddf.f32",
                        "depth/frame_000.f32", "config.json"}) {
    EXPECT_EQ(io::read_text(a / f), io::read_text(b / f)) << f;
  }
  io::write_json(scratch("overrides.json"), {{"phantom", {{"noise_sigma", -1.0}}}});
  const auto bad = run_cli({"simulate", "--out", scratch("sim-c").string(), "--config", scratch("overrides.json").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("noise"), std::string::npos);
}

TEST(CliBinary, RealExecutableRuns) {
  EXPECT_EQ(std::system((std::string("\"") + PPM_CLI_PATH + "\" --help > /dev/null").c_str()), 0);
  const int status = std::system((std::string("\"") + PPM_CLI_PATH + "\" run > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
