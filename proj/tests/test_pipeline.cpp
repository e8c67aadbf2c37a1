#include <gtest/gtest.h>

#include <functional>

#include "ppm/pipeline.hpp"
#include "support.hpp"

using namespace ppm;
using namespace ppm::testing_support;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

ScenarioFiles make_scenario(const fs::path& dir, std::uint64_t seed, const json& overrides = json::object()) {
  return write_scenario(scenario_from_json(overrides, seed), dir);
}

double pct(const PoiLabels& p, TissueClass c) {
  const auto it = p.percentages.find(std::string(tissue_class_name(c)));
  return it == p.percentages.end() ? 0.0 : it->second;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_text(e.path());
  }
  return out;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(PipelineConfig, ParsesAndResolvesRelativePaths) {
  const json j = {{"seed", 5},
                  {"inputs", {{"specimen", "a/s.png"}, {"histology", "/abs/h.png"}, {"depth_frames", {"d/0.json"}}}},
                  {"output_dir", "results"},
                  {"fixed_image_role", "specimen"},
                  {"registration", {{"mi_bins", 16}}}};
  const auto c = pipeline_config_from_json(j, "/base");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.inputs.specimen, fs::path("/base/a/s.png"));
  EXPECT_EQ(c.inputs.histology, fs::path("/abs/h.png"));
  EXPECT_EQ(c.inputs.depth_frames.at(0), fs::path("/base/d/0.json"));
  EXPECT_EQ(c.output_dir, fs::path("/base/results"));
  EXPECT_EQ(c.fixed_role, FixedRole::specimen);
  EXPECT_EQ(c.registration.mi_bins, 16);
  EXPECT_EQ(c.registration.seed, 5u);
  EXPECT_EQ(c.poi_radius_px, 8.0);

  const auto again = pipeline_config_from_json(to_json(c, "/base"), "/base");
  EXPECT_EQ(again.inputs.specimen, c.inputs.specimen);
  EXPECT_EQ(again.output_dir, c.output_dir);
  EXPECT_EQ(again.registration.mi_bins, 16);
  EXPECT_FALSE(again.registration_seed_explicit);
}

TEST(PipelineConfig, RegistrationSeedPinnedOrFollowing) {
  auto c = pipeline_config_from_json({{"seed", 3}, {"registration", {{"seed", 11}}}}, ".");
  EXPECT_EQ(c.registration.seed, 11u);
  c.set_seed(4);
  EXPECT_EQ(c.registration.seed, 11u);
  auto d = pipeline_config_from_json({{"seed", 3}}, ".");
  d.set_seed(4);
  EXPECT_EQ(d.registration.seed, 4u);
}

TEST(PipelineConfig, ProbeDiameterSetsRadius) {
  const auto c = pipeline_config_from_json({{"mm_per_pixel", 0.1}, {"probe_diameter_mm", 1.2}}, ".");
  EXPECT_NEAR(c.poi_radius_px, 6.0, 1e-12);
}

TEST(PipelineConfig, ErrorsNameTheField) {
  auto message = [](const json& j) { return error_of([&] { pipeline_config_from_json(j, "."); }); };
  EXPECT_NE(message({{"seed", "x"}}).find("'seed'"), std::string::npos);
  EXPECT_NE(message({{"poi_radius_px", -2}}).find("poi_radius_px"), std::string::npos);
  EXPECT_NE(message({{"fixed_image_role", "both"}}).find("fixed_image_role"), std::string::npos);
  EXPECT_NE(message({{"solver", "magic"}}).find("solver"), std::string::npos);
  EXPECT_NE(message({{"inputs", {{"specimen", 3}}}}).find("inputs.specimen"), std::string::npos);
  EXPECT_NE(message({{"inputs", {{"specimen_poi", "a"}, {"pois", "b"}}}}).find("inputs.pois"), std::string::npos);
  EXPECT_NE(message({{"registration", {{"pyramid_levels", 0}}}}).find("pyramid_levels"), std::string::npos);
  EXPECT_NE(message({{"schema_version", 2}}).find("schema_version"), std::string::npos);
  EXPECT_THROW(pipeline_config_from_json(json::array(), "."), io::FormatError);
  EXPECT_THROW(load_pipeline_config("/nonexistent/config.json"), IoError);
}

TEST(Pipeline, ScenarioRunsAllStages) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 7);
  const auto c = load_pipeline_config(files.config);
  const auto r = run_pipeline(c);
  ASSERT_TRUE(r.baseplane.has_value());
  ASSERT_TRUE(r.projector.has_value());
  EXPECT_LT(r.projector->rmse, 1e-6);
  EXPECT_GE(r.registration.dice_final, r.registration.dice_initial);
  EXPECT_GE(r.registration.mi_final, r.registration.mi_initial);
  EXPECT_EQ(r.report.pois.size(), files.pois.size());
  for (const char* f : {"plane.json", "corrected_depth.json", "corrected_depth.f32", "transform.json", "fixed.png",
                        "moving.png", "warped.png", "ddf.json", "ddf.f32", "registration.json", "pois.json",
                        "disks.png", "disks_registered.png", "labels.json"}) {
    EXPECT_TRUE(fs::exists(c.output_dir / f)) << f;
  }
  const auto plane = io::read_json(c.output_dir / "plane.json");
  const auto truth = io::read_json(dir.path() / "truth" / "plane.json");
  EXPECT_NEAR(plane["a"].get<double>(), truth["a"].get<double>(), 1e-3);
  EXPECT_NEAR(plane["c"].get<double>(), truth["c"].get<double>(), 0.5);
  EXPECT_EQ(io::read_json(c.output_dir / "registration.json")["ddf_source"], "estimated");
  EXPECT_EQ(io::read_text(c.output_dir / "labels.json"), report_text(r.report));
}

TEST(Pipeline, RerunIsByteIdentical) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 8);
  auto c = load_pipeline_config(files.config);
  c.output_dir = dir.path() / "run1";
  run_pipeline(c);
  c.output_dir = dir.path() / "run2";
  run_pipeline(c);
  const auto a = read_tree(dir.path() / "run1");
  const auto b = read_tree(dir.path() / "run2");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST(Pipeline, ZeroDeformationWithZeroFieldMatchesDirectLookup) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 9, {{"phantom", {{"max_displacement", 0.0}}}});
  auto c = load_pipeline_config(files.config);
  io::save_ddf(DisplacementField(c.registration.working_dims), dir.path() / "zero.json");
  c.inputs.ddf = dir.path() / "zero.json";
  const auto r = run_pipeline(c);
  const auto direct = lookup_labels(files.phantom.annotation, files.pois, c.poi_radius_px);
  ASSERT_EQ(r.report.pois.size(), direct.pois.size());
  for (std::size_t k = 0; k < direct.pois.size(); ++k) {
    EXPECT_EQ(r.report.pois[k].percentages, direct.pois[k].percentages) << k;
    EXPECT_EQ(r.report.pois[k].counts, direct.pois[k].counts) << k;
  }
  EXPECT_EQ(io::read_json(c.output_dir / "registration.json")["ddf_source"], "provided");
  EXPECT_EQ(r.registration.mi_final, r.registration.mi_initial);
}

TEST(Pipeline, TruthFieldLabelsMatchSpecimenTruth) {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    TempDir dir("pipe");
    const auto files = make_scenario(dir.path(), seed);
    auto c = load_pipeline_config(files.config);
    c.inputs.ddf = dir.path() / "truth" / "ddf.json";
    const auto r = run_pipeline(c);
    const auto truth = lookup_labels(files.phantom.specimen_labels, files.pois, c.poi_radius_px);
    ASSERT_EQ(r.report.pois.size(), truth.pois.size());
    for (std::size_t k = 0; k < truth.pois.size(); ++k) {
      for (auto cls : kAllTissueClasses) {
        if (cls == TissueClass::background) continue;
        EXPECT_NEAR(pct(r.report.pois[k], cls), pct(truth.pois[k], cls), 5.0) << "seed " << seed << " poi " << k;
      }
    }
  }
}

TEST(Pipeline, SpecimenFixedRoleWithZeroField) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 13, {{"phantom", {{"max_displacement", 0.0}}}});
  auto c = load_pipeline_config(files.config);
  c.fixed_role = FixedRole::specimen;
  io::save_ddf(DisplacementField(c.registration.working_dims), dir.path() / "zero.json");
  c.inputs.ddf = dir.path() / "zero.json";
  const auto r = run_pipeline(c);
  const auto direct = lookup_labels(files.phantom.annotation, files.pois, c.poi_radius_px);
  for (std::size_t k = 0; k < direct.pois.size(); ++k) {
    EXPECT_EQ(r.report.pois[k].percentages, direct.pois[k].percentages) << k;
  }
  EXPECT_EQ(io::read_json(c.output_dir / "registration.json")["fixed_image_role"], "specimen");
}

TEST(Pipeline, SpecimenFixedRoleEstimates) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 14);
  auto c = load_pipeline_config(files.config);
  c.fixed_role = FixedRole::specimen;
  const auto r = run_pipeline(c);
  EXPECT_GE(r.registration.dice_final, r.registration.dice_initial);
  EXPECT_EQ(r.report.pois.size(), files.pois.size());
}

TEST(Pipeline, PoiListInsteadOfPoiImage) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 15, {{"phantom", {{"max_displacement", 0.0}}}});
  auto c = load_pipeline_config(files.config);
  io::write_json(dir.path() / "pois.json", io::pois_to_json(files.pois, c.poi_radius_px));
  c.inputs.specimen_poi.clear();
  c.inputs.pois = dir.path() / "pois.json";
  io::save_ddf(DisplacementField(c.registration.working_dims), dir.path() / "zero.json");
  c.inputs.ddf = dir.path() / "zero.json";
  const auto r = run_pipeline(c);
  const auto direct = lookup_labels(files.phantom.annotation, files.pois, c.poi_radius_px);
  for (std::size_t k = 0; k < direct.pois.size(); ++k) {
    EXPECT_EQ(r.report.pois[k].percentages, direct.pois[k].percentages) << k;
  }
}

TEST(Pipeline, LabelStageReusesWrittenField) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 16);
  const auto c = load_pipeline_config(files.config);
  const auto reg = run_registration_stage(c);
  const auto a = run_label_stage(c);
  const auto b = run_label_stage(c, &reg.result.ddf);
  EXPECT_EQ(report_text(a.report), report_text(b.report));
}

TEST(Pipeline, StageErrorsNameTheStage) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 17);
  auto c = load_pipeline_config(files.config);

  auto bad = c;
  bad.inputs.histology = dir.path() / "missing.png";
  try {
    run_pipeline(bad);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "register");
    EXPECT_NE(std::string(e.what()).find("missing.png"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(bad.output_dir / "transform.json"));

  auto broken = c;
  io::write_text(dir.path() / "bad_pairs.json", "{\"pairs\": 3}");
  broken.inputs.correspondences = dir.path() / "bad_pairs.json";
  try {
    run_pipeline(broken);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "calibrate-projector");
    EXPECT_NE(e.cause().find("correspondences.pairs"), std::string::npos);
  }

  auto no_ann = c;
  no_ann.inputs.annotation.clear();
  no_ann.inputs.depth_frames.clear();
  no_ann.inputs.correspondences.clear();
  EXPECT_NE(error_of([&] { run_pipeline(no_ann); }).find("inputs.annotation"), std::string::npos);

  auto no_field = c;
  no_field.inputs.ddf = dir.path() / "none.json";
  EXPECT_THROW(run_label_stage(no_field), PipelineError);

  auto mismatch = c;
  io::save_ddf(DisplacementField(10, 10), dir.path() / "small.json");
  mismatch.inputs.ddf = dir.path() / "small.json";
  mismatch.inputs.depth_frames.clear();
  mismatch.inputs.correspondences.clear();
  try {
    run_pipeline(mismatch);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "register");
  }
}

TEST(Pipeline, BlankPoiImageFailsLabelStage) {
  TempDir dir("pipe");
  const auto files = make_scenario(dir.path(), 18);
  auto c = load_pipeline_config(files.config);
  c.inputs.specimen_poi = c.inputs.specimen;
  c.inputs.depth_frames.clear();
  c.inputs.correspondences.clear();
  try {
    run_pipeline(c);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "extract-labels");
  }
}

TEST(Scenario, OverridesAndErrors) {
  const auto s = scenario_from_json({{"poi_count", 3}, {"phantom", {{"image_dims", {128, 96}}, {"holes", 2}}}}, 4);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_EQ(s.poi_count, 3);
  EXPECT_EQ(s.phantom.image_dims, (Dims{128, 96}));
  EXPECT_EQ(s.phantom.holes.count, 2);
  const auto again = scenario_from_json(to_json(s), 99);
  EXPECT_EQ(again.seed, 4u);
  EXPECT_TRUE(again.transform_truth.rotation.isApprox(s.transform_truth.rotation, 1e-15));
  EXPECT_THROW(scenario_from_json({{"frame_count", 0}}, 1), io::FormatError);
  EXPECT_NE(error_of([] { scenario_from_json({{"phantom", {{"noise_sigma", "loud"}}}}, 1); })
                .find("scenario.phantom.noise_sigma"),
            std::string::npos);
}

TEST(Scenario, DeterministicFiles) {
  TempDir a("scn"), b("scn");
  make_scenario(a.path(), 21);
  make_scenario(b.path(), 21);
  EXPECT_EQ(read_tree(a.path()), read_tree(b.path()));
  EXPECT_TRUE(fs::exists(a.path() / "depth" / "frame_000.json"));
  EXPECT_TRUE(fs::exists(a.path() / "phantom" / "annotation.json"));
}
