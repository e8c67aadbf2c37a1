#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "ppm/io.hpp"
#include "ppm/simulator.hpp"
#include "support.hpp"

using namespace ppm;
using namespace ppm::testing_support;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(IoDepth, RoundTripKeepsInvalidPixels) {
  TempDir dir("io");
  DepthFrame f(7, 5, 0.25);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-30, 30);
  for (auto& v : f.depths.storage()) v = static_cast<float>(u(rng));
  f.depths(3, 2) = kInvalidDepth;
  io::save_depth_frame(f, dir.path() / "frame.json");
  EXPECT_TRUE(fs::exists(dir.path() / "frame.f32"));
  EXPECT_EQ(fs::file_size(dir.path() / "frame.f32"), 7u * 5u * 4u);
  const auto g = io::load_depth_frame(dir.path() / "frame.json");
  EXPECT_TRUE(g == f);
  EXPECT_TRUE(std::isnan(g.depths(3, 2)));
}

TEST(IoDepth, TruncatedDataAndBadHeader) {
  TempDir dir("io");
  io::save_depth_frame(DepthFrame(4, 4, 1.0), dir.path() / "f.json");
  io::write_text(dir.path() / "f.f32", "abc");
  EXPECT_THROW(io::load_depth_frame(dir.path() / "f.json"), io::FormatError);
  io::write_json(dir.path() / "g.json", {{"width", 4}, {"height", 4}, {"data", "f.f32"}});
  EXPECT_NE(error_of([&] { io::load_depth_frame(dir.path() / "g.json"); }).find("pixel_pitch_mm"), std::string::npos);
  io::write_json(dir.path() / "h.json", {{"schema_version", 9}});
  EXPECT_THROW(io::load_depth_frame(dir.path() / "h.json"), io::FormatError);
}

TEST(IoDdf, RoundTripIsExactForFloatValues) {
  TempDir dir("io");
  DisplacementField d(9, 6);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 4.0f);
  for (auto& v : d.storage()) {
    const float x = n(rng), y = n(rng);
    v = {x, y};
  }
  io::save_ddf(d, dir.path() / "ddf.json");
  const auto h = io::read_json(dir.path() / "ddf.json");
  EXPECT_EQ(h["units"], "pixels");
  EXPECT_EQ(h["layout"], "dxdy_interleaved");
  EXPECT_TRUE(io::load_ddf(dir.path() / "ddf.json") == d);
}

TEST(IoPng, GrayRoundTrips) {
  std::mt19937_64 rng(3);
  GrayImage g = random_gray(31, 17, rng);
  for (int depth : {8, 16}) {
    const double q = depth == 8 ? 255.0 : 65535.0;
    GrayImage quant = g;
    for (auto& v : quant.storage()) v = std::round(v * q) / q;
    const auto back = io::decode_gray(io::encode_gray(g, depth));
    ASSERT_EQ(back.dims(), g.dims());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(back.storage()[i], quant.storage()[i]);
    EXPECT_TRUE(io::decode_gray(io::encode_gray(back, depth)) == back);
  }
  EXPECT_THROW(io::encode_gray(g, 4), InvalidArgument);
}

TEST(IoPng, RgbRoundTripAndGrayFromRgb) {
  RgbImage img(5, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) img(x, y) = {x / 255.0, y / 255.0, (x + y) / 255.0};
  EXPECT_TRUE(io::decode_rgb(io::encode_rgb(img)) == img);
  const auto gray = io::decode_gray(io::encode_rgb(img));
  EXPECT_EQ(gray.dims(), img.dims());
}

TEST(IoPng, MaskRoundTrip) {
  std::mt19937_64 rng(4);
  const auto m = random_mask(20, 11, 0.3, rng);
  TempDir dir("io");
  io::save_mask(m, dir.path() / "m.png");
  const auto g = io::load_gray(dir.path() / "m.png");
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(g.storage()[i], m.storage()[i] ? 1.0 : 0.0);
}

TEST(IoPng, RejectsGarbage) {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_THROW(io::decode_rgb(junk), IoError);
  EXPECT_THROW(io::load_rgb("/nonexistent/x.png"), IoError);
}

TEST(IoAnnotation, RoundTripWithAndWithoutSidecar) {
  const auto pair = generate_phantom_pair(default_phantom({64, 48}, 5), 5);
  TempDir dir("io");
  const fs::path p = dir.path() / "ann.png";
  io::save_annotation(pair.annotation, p);
  EXPECT_TRUE(fs::exists(dir.path() / "ann.json"));
  EXPECT_TRUE(io::load_annotation(p) == pair.annotation);
  fs::remove(dir.path() / "ann.json");
  EXPECT_TRUE(io::load_annotation(p) == pair.annotation);
}

TEST(IoAnnotation, SidecarRemapsIndices) {
  AnnotationImage a(3, 1, TissueClass::background);
  a(1, 0) = TissueClass::invasive_carcinoma;
  a(2, 0) = TissueClass::dcis;
  const auto bytes = io::encode_annotation(a);
  const json swapped = {{"palette", {{"0", "fat"}, {"1", "connective"}, {"2", "background"}}}};
  const auto r = io::decode_annotation(bytes, &swapped);
  EXPECT_EQ(r(0, 0), TissueClass::fat);
  EXPECT_EQ(r(1, 0), TissueClass::connective);
  EXPECT_EQ(r(2, 0), TissueClass::background);
  const json bad = {{"palette", {{"0", "bone"}}}};
  EXPECT_THROW(io::decode_annotation(bytes, &bad), io::FormatError);
  EXPECT_THROW(io::decode_annotation(io::encode_gray(GrayImage(3, 1), 16)), io::FormatError);
}

TEST(IoAnnotation, SidecarListsCanonicalPalette) {
  const auto s = io::annotation_sidecar();
  EXPECT_EQ(s["palette"]["0"], "background");
  EXPECT_EQ(s["palette"]["1"], "invasive_carcinoma");
  EXPECT_EQ(s["palette"]["2"], "DCIS");
  EXPECT_EQ(s["palette"]["3"], "connective");
  EXPECT_EQ(s["palette"]["4"], "fat");
}

TEST(IoJson, PlaneAndTransportDocuments) {
  const PlaneModel p{0.01, -0.02, 3.5};
  EXPECT_EQ(io::plane_from_json(io::to_json(p), "plane"), p);
  std::mt19937_64 rng(6);
  const auto t = random_rigid_transform(rng);
  const auto back = io::transform_from_json(io::to_json(t), "transform");
  EXPECT_TRUE(back.rotation == t.rotation);
  EXPECT_TRUE(back.translation == t.translation);
  json skew = io::to_json(t);
  skew["rotation"][0][0] = 2.0;
  EXPECT_NE(error_of([&] { io::transform_from_json(skew, "transform"); }).find("transform.rotation"),
            std::string::npos);
}

TEST(IoJson, CorrespondencesRoundTripAndFieldErrors) {
  const CorrespondenceSet set{{{1, 2, 3}, {4, 5, 6}}, {{-1, 0.5, 2}, {0, 0, 0}}};
  const auto j = io::to_json(set);
  EXPECT_EQ(j["units"], "mm");
  const auto back = io::correspondences_from_json(j);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].camera, set[1].camera);
  EXPECT_EQ(back[0].projector, set[0].projector);
  json broken = j;
  broken["pairs"][1]["camera"] = {1, 2};
  EXPECT_NE(error_of([&] { io::correspondences_from_json(broken); }).find("correspondences.pairs[1].camera"),
            std::string::npos);
  EXPECT_NE(error_of([&] { io::correspondences_from_json(json::object()); }).find("correspondences.pairs"),
            std::string::npos);
}

TEST(IoJson, PoiListRoundTrip) {
  const std::vector<MeasurementPoint> pts{{1, {10.5, 20}, 0}, {2, {3, 4}, 0}};
  const auto back = io::pois_from_json(io::pois_to_json(pts, 6.0));
  ASSERT_EQ(back.points.size(), 2u);
  EXPECT_EQ(back.points[0].center, pts[0].center);
  EXPECT_EQ(back.points[1].id, 2);
  EXPECT_EQ(back.radius, 6.0);
  EXPECT_FALSE(io::pois_from_json({{"centers", json::array()}}).radius.has_value());
  EXPECT_NE(error_of([] { io::pois_from_json({{"centers", {{1, 2, 3}}}}); }).find("pois.centers[0]"),
            std::string::npos);
  EXPECT_NE(error_of([] { io::pois_from_json({{"centers", {{1, 2}}}, {"radius", -1}}); }).find("pois.radius"),
            std::string::npos);
}

TEST(IoJson, LabelReportShape) {
  AnnotationImage ann(30, 30, TissueClass::fat);
  const std::vector<MeasurementPoint> pts{{1, {15, 15}, 0}};
  const auto rep = lookup_labels(ann, pts, 3.0);
  const auto j = io::to_json(rep);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["poi_id"], 1);
  EXPECT_EQ(j[0]["percentages"]["fat"], 100.0);
  EXPECT_EQ(j[0]["pixel_count"], 29);
  EXPECT_EQ(j[0]["class_counts"]["fat"], 29);
  EXPECT_EQ(j[0]["class_counts"]["background"], 0);
  EXPECT_TRUE(j[0]["flags"].empty());
}

TEST(IoJson, RegistrationConfigFieldErrors) {
  RegistrationConfig c;
  c.mi_bins = 16;
  c.working_dims = {128, 96};
  const auto back = io::registration_config_from_json(io::to_json(c), "registration");
  EXPECT_EQ(back.mi_bins, 16);
  EXPECT_EQ(back.working_dims, (Dims{128, 96}));
  EXPECT_NE(error_of([] { io::registration_config_from_json({{"mi_bins", "many"}}, "registration"); })
                .find("registration.mi_bins"),
            std::string::npos);
  EXPECT_THROW(io::registration_config_from_json({{"mi_bins", 1}}, "registration"), io::FormatError);
  EXPECT_THROW(io::registration_config_from_json({{"working_dims", {1}}}, "registration"), io::FormatError);
}

TEST(IoText, WriteCreatesParentsAndReadMissingThrows) {
  TempDir dir("io");
  io::write_text(dir.path() / "a" / "b" / "c.txt", "hi");
  EXPECT_EQ(io::read_text(dir.path() / "a" / "b" / "c.txt"), "hi");
  EXPECT_NE(error_of([&] { io::read_text(dir.path() / "missing.txt"); }).find("missing.txt"), std::string::npos);
  io::write_text(dir.path() / "bad.json", "{nope");
  EXPECT_THROW(io::read_json(dir.path() / "bad.json"), io::FormatError);
}

TEST(IoPng, LoadSaveLoadIsLossless) {
  const auto pair = generate_phantom_pair(default_phantom({48, 40}, 7), 7);
  TempDir dir("io");
  io::save_rgb(pair.specimen, dir.path() / "s.png");
  const auto once = io::load_rgb(dir.path() / "s.png");
  io::save_rgb(once, dir.path() / "s2.png");
  EXPECT_EQ(io::read_text(dir.path() / "s.png"), io::read_text(dir.path() / "s2.png"));
  io::save_gray(pair.histology, dir.path() / "h.png", 16);
  const auto h = io::load_gray(dir.path() / "h.png");
  io::save_gray(h, dir.path() / "h2.png", 16);
  EXPECT_EQ(io::read_text(dir.path() / "h.png"), io::read_text(dir.path() / "h2.png"));
}
