#pragma once

// File formats: PNG images, f32 raster + JSON header pairs (depth frames,
// displacement fields), and JSON documents for calibration results,
// correspondences, POIs and label reports.

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ppm/core.hpp"
#include "ppm/geometry.hpp"
#include "ppm/labeling.hpp"
#include "ppm/png.hpp"
#include "ppm/registration.hpp"

namespace ppm::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

// Malformed configuration or document; the message names the field.
class FormatError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// --------------------------------------------------------------------------
// Text and JSON files
// --------------------------------------------------------------------------

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

inline json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

// Pretty-printed, trailing newline. Doubles print in shortest round-trip form.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_json(const fs::path& path, const json& j) { write_text(path, dump(j)); }

// Typed field access that reports the offending field by name.
template <typename T>
T field(const json& j, const std::string& key, const std::string& where) {
  const std::string name = where.empty() ? key : where + "." + key;
  if (!j.is_object() || !j.contains(key)) throw FormatError("missing field '" + name + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError("field '" + name + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, where);
}

inline void check_schema(const json& j, const std::string& where) {
  if (j.is_object() && j.contains("schema_version")) {
    const int v = field<int>(j, "schema_version", where);
    if (v != kSchemaVersion) throw FormatError(where + ": unsupported schema_version " + std::to_string(v));
  }
}

// --------------------------------------------------------------------------
// Raw little-endian f32 rasters
// --------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_f32(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return bytes;
}

inline std::vector<double> decode_f32(std::span<const std::uint8_t> bytes, std::size_t expected,
                                      const std::string& what) {
  if (bytes.size() != expected * 4) {
    throw FormatError(what + ": expected " + std::to_string(expected * 4) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

// --------------------------------------------------------------------------
// Depth frames
// --------------------------------------------------------------------------

// Writes `<stem>.json` and `<stem>.f32` next to each other.
inline void save_depth_frame(const DepthFrame& frame, const fs::path& header_path) {
  fs::path data_path = header_path;
  data_path.replace_extension(".f32");
  json h = {{"schema_version", kSchemaVersion},
            {"width", frame.width()},
            {"height", frame.height()},
            {"pixel_pitch_mm", frame.pixel_pitch},
            {"data", data_path.filename().string()}};
  png::write_file(data_path, encode_f32(frame.depths.storage()));
  write_json(header_path, h);
}

inline DepthFrame load_depth_frame(const fs::path& header_path) {
  const json h = read_json(header_path);
  const std::string where = header_path.filename().string();
  check_schema(h, where);
  const int w = field<int>(h, "width", where), ht = field<int>(h, "height", where);
  const double pitch = field<double>(h, "pixel_pitch_mm", where);
  if (w <= 0 || ht <= 0) throw FormatError(where + ": width and height must be positive");
  if (!(pitch > 0)) throw FormatError("field '" + where + ".pixel_pitch_mm' must be positive");
  const fs::path data = header_path.parent_path() / field<std::string>(h, "data", where);
  DepthFrame frame(w, ht, pitch);
  const auto values = decode_f32(png::read_file(data), frame.depths.size(), data.string());
  frame.depths.storage() = values;
  return frame;
}

// --------------------------------------------------------------------------
// Displacement fields
// --------------------------------------------------------------------------

inline void save_ddf(const DisplacementField& ddf, const fs::path& header_path) {
  fs::path data_path = header_path;
  data_path.replace_extension(".f32");
  std::vector<double> flat;
  flat.reserve(ddf.size() * 2);
  for (const auto& v : ddf.storage()) {
    flat.push_back(v.x);
    flat.push_back(v.y);
  }
  json h = {{"schema_version", kSchemaVersion},
            {"width", ddf.width()},
            {"height", ddf.height()},
            {"units", "pixels"},
            {"layout", "dxdy_interleaved"},
            {"data", data_path.filename().string()}};
  png::write_file(data_path, encode_f32(flat));
  write_json(header_path, h);
}

inline DisplacementField load_ddf(const fs::path& header_path) {
  const json h = read_json(header_path);
  const std::string where = header_path.filename().string();
  check_schema(h, where);
  const int w = field<int>(h, "width", where), ht = field<int>(h, "height", where);
  if (w <= 0 || ht <= 0) throw FormatError(where + ": width and height must be positive");
  if (field<std::string>(h, "layout", where) != "dxdy_interleaved") {
    throw FormatError("field '" + where + ".layout' must be \"dxdy_interleaved\"");
  }
  const fs::path data = header_path.parent_path() / field<std::string>(h, "data", where);
  DisplacementField ddf(w, ht);
  const auto flat = decode_f32(png::read_file(data), ddf.size() * 2, data.string());
  for (std::size_t i = 0; i < ddf.size(); ++i) ddf.storage()[i] = {flat[2 * i], flat[2 * i + 1]};
  return ddf;
}

// --------------------------------------------------------------------------
// Images
// --------------------------------------------------------------------------

inline double sample_to_unit(std::uint16_t s, int bit_depth) {
  return static_cast<double>(s) / (bit_depth == 16 ? 65535.0 : 255.0);
}

inline std::uint16_t unit_to_sample(double v, int bit_depth) {
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * maxv));
}

inline RgbImage rgb_from_png(const png::Image& img) {
  if (img.layout == png::Layout::palette) {
    RgbImage out(img.width, img.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto idx = img.samples[i];
      const auto c = idx < img.palette.size() ? img.palette[idx] : std::array<std::uint8_t, 3>{0, 0, 0};
      out.storage()[i] = {c[0] / 255.0, c[1] / 255.0, c[2] / 255.0};
    }
    return out;
  }
  RgbImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (img.layout == png::Layout::rgb) {
      out.storage()[i] = {sample_to_unit(img.samples[3 * i], img.bit_depth),
                          sample_to_unit(img.samples[3 * i + 1], img.bit_depth),
                          sample_to_unit(img.samples[3 * i + 2], img.bit_depth)};
    } else {
      const double v = sample_to_unit(img.samples[i], img.bit_depth);
      out.storage()[i] = {v, v, v};
    }
  }
  return out;
}

// Gray PNGs load directly; color PNGs go through luminance.
inline GrayImage gray_from_png(const png::Image& img) {
  if (img.layout != png::Layout::gray) return to_grayscale(rgb_from_png(img));
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] = sample_to_unit(img.samples[i], img.bit_depth);
  return out;
}

inline RgbImage decode_rgb(std::span<const std::uint8_t> bytes) { return rgb_from_png(png::decode(bytes)); }
inline GrayImage decode_gray(std::span<const std::uint8_t> bytes) { return gray_from_png(png::decode(bytes)); }
inline RgbImage load_rgb(const fs::path& path) { return decode_rgb(png::read_file(path)); }
inline GrayImage load_gray(const fs::path& path) { return decode_gray(png::read_file(path)); }

inline std::vector<std::uint8_t> encode_gray(const GrayImage& image, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("gray PNG bit depth must be 8 or 16");
  png::Image img{image.width(), image.height(), png::Layout::gray, bit_depth, {}, {}};
  img.samples.reserve(image.size());
  for (double v : image.storage()) img.samples.push_back(unit_to_sample(v, bit_depth));
  return png::encode(img);
}

inline std::vector<std::uint8_t> encode_rgb(const RgbImage& image) {
  png::Image img{image.width(), image.height(), png::Layout::rgb, 8, {}, {}};
  img.samples.reserve(image.size() * 3);
  for (const auto& p : image.storage()) {
    img.samples.push_back(unit_to_sample(p.r, 8));
    img.samples.push_back(unit_to_sample(p.g, 8));
    img.samples.push_back(unit_to_sample(p.b, 8));
  }
  return png::encode(img);
}

inline std::vector<std::uint8_t> encode_mask(const BinaryMask& mask) {
  GrayImage g(mask.dims());
  for (std::size_t i = 0; i < mask.size(); ++i) g.storage()[i] = mask.storage()[i] ? 1.0 : 0.0;
  return encode_gray(g);
}

inline void save_gray(const GrayImage& image, const fs::path& path, int bit_depth = 8) {
  png::write_file(path, encode_gray(image, bit_depth));
}
inline void save_rgb(const RgbImage& image, const fs::path& path) { png::write_file(path, encode_rgb(image)); }
inline void save_mask(const BinaryMask& mask, const fs::path& path) { png::write_file(path, encode_mask(mask)); }

// --------------------------------------------------------------------------
// Annotations: indexed PNG, palette index = class code unless a sidecar
// JSON maps indices to class names.
// --------------------------------------------------------------------------

inline constexpr std::array<std::array<std::uint8_t, 3>, kTissueClassCount> kAnnotationPalette{{
    {255, 255, 255},  // background
    {200, 30, 40},    // invasive carcinoma
    {240, 150, 30},   // DCIS
    {90, 160, 220},   // connective
    {250, 230, 120},  // fat
}};

inline json annotation_sidecar() {
  json palette = json::object();
  for (auto c : kAllTissueClasses) {
    palette[std::to_string(static_cast<int>(c))] = std::string(tissue_class_name(c));
  }
  return {{"schema_version", kSchemaVersion}, {"palette", palette}};
}

inline std::vector<std::uint8_t> encode_annotation(const AnnotationImage& labels) {
  png::Image img{labels.width(), labels.height(), png::Layout::palette, 8, {}, {}};
  img.palette.assign(kAnnotationPalette.begin(), kAnnotationPalette.end());
  img.samples.reserve(labels.size());
  for (auto c : labels.storage()) img.samples.push_back(static_cast<std::uint16_t>(c));
  return png::encode(img);
}

inline std::array<TissueClass, 256> palette_mapping(const json* sidecar) {
  std::array<TissueClass, 256> map{};
  map.fill(TissueClass::background);
  for (auto c : kAllTissueClasses) map[static_cast<std::size_t>(c)] = c;
  if (sidecar == nullptr) return map;
  check_schema(*sidecar, "annotation sidecar");
  const json& palette = sidecar->contains("palette") ? sidecar->at("palette") : json();
  if (!palette.is_object()) throw FormatError("missing field 'palette' in annotation sidecar");
  map.fill(TissueClass::background);
  for (const auto& [key, value] : palette.items()) {
    int idx = -1;
    try {
      idx = std::stoi(key);
    } catch (const std::exception&) {
    }
    if (idx < 0 || idx > 255) throw FormatError("annotation sidecar: palette index '" + key + "' out of range");
    const auto cls = value.is_string() ? parse_tissue_class(value.get<std::string>()) : std::nullopt;
    if (!cls) throw FormatError("annotation sidecar: unknown class for palette index " + key);
    map[static_cast<std::size_t>(idx)] = *cls;
  }
  return map;
}

inline AnnotationImage decode_annotation(std::span<const std::uint8_t> bytes, const json* sidecar = nullptr) {
  const png::Image img = png::decode(bytes);
  if (img.layout != png::Layout::palette && img.layout != png::Layout::gray) {
    throw FormatError("annotation image must be an indexed (palette) or gray PNG");
  }
  if (img.bit_depth != 8) throw FormatError("annotation image must use 8-bit indices");
  const auto map = palette_mapping(sidecar);
  AnnotationImage out(img.width, img.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] = map[img.samples[i] & 0xff];
  return out;
}

inline fs::path sidecar_path(const fs::path& png_path) {
  fs::path p = png_path;
  p.replace_extension(".json");
  return p;
}

inline void save_annotation(const AnnotationImage& labels, const fs::path& path) {
  png::write_file(path, encode_annotation(labels));
  write_json(sidecar_path(path), annotation_sidecar());
}

inline AnnotationImage load_annotation(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  if (fs::exists(side)) {
    const json j = read_json(side);
    return decode_annotation(png::read_file(path), &j);
  }
  return decode_annotation(png::read_file(path));
}

// --------------------------------------------------------------------------
// JSON documents
// --------------------------------------------------------------------------

inline json to_json(const PlaneModel& p) { return {{"a", p.a}, {"b", p.b}, {"c", p.c}}; }

inline PlaneModel plane_from_json(const json& j, const std::string& where) {
  return {field<double>(j, "a", where), field<double>(j, "b", where), field<double>(j, "c", where)};
}

inline json to_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  return {{"rotation", rot}, {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

inline RigidTransform transform_from_json(const json& j, const std::string& where) {
  const auto rot = field<std::vector<std::vector<double>>>(j, "rotation", where);
  const auto tr = field<std::vector<double>>(j, "translation", where);
  if (rot.size() != 3 || tr.size() != 3) throw FormatError("field '" + where + ".rotation' must be 3x3, translation 3");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    if (rot[static_cast<std::size_t>(r)].size() != 3) throw FormatError("field '" + where + ".rotation' must be 3x3");
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  t.translation = Eigen::Vector3d(tr[0], tr[1], tr[2]);
  if (!t.is_valid(1e-6)) throw FormatError("field '" + where + ".rotation' is not a proper rotation");
  return t;
}

inline json point_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }

inline Point3 point_from_json(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw FormatError("field '" + where + "' must be [x, y, z]");
  }
  if (v.size() != 3) throw FormatError("field '" + where + "' must be [x, y, z]");
  return {v[0], v[1], v[2]};
}

inline json to_json(const CorrespondenceSet& set) {
  json pairs = json::array();
  for (const auto& c : set) pairs.push_back({{"camera", point_json(c.camera)}, {"projector", point_json(c.projector)}});
  return {{"schema_version", kSchemaVersion}, {"units", "mm"}, {"pairs", pairs}};
}

inline CorrespondenceSet correspondences_from_json(const json& j) {
  check_schema(j, "correspondences");
  const json pairs = field<json>(j, "pairs", "correspondences");
  if (!pairs.is_array()) throw FormatError("field 'correspondences.pairs' must be an array");
  CorrespondenceSet out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string where = "correspondences.pairs[" + std::to_string(i) + "]";
    out.push_back({point_from_json(field<json>(pairs[i], "camera", where), where + ".camera"),
                   point_from_json(field<json>(pairs[i], "projector", where), where + ".projector")});
  }
  return out;
}

// POI lists are stored in working-resolution pixel coordinates.
inline json pois_to_json(std::span<const MeasurementPoint> pois, double radius) {
  json centers = json::array();
  for (const auto& p : pois) centers.push_back({p.center.x, p.center.y});
  return {{"schema_version", kSchemaVersion}, {"radius", radius}, {"centers", centers}};
}

struct PoiList {
  std::vector<MeasurementPoint> points;
  std::optional<double> radius;
};

inline PoiList pois_from_json(const json& j) {
  check_schema(j, "pois");
  PoiList out;
  const json centers = field<json>(j, "centers", "pois");
  if (!centers.is_array()) throw FormatError("field 'pois.centers' must be an array");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    std::vector<double> c;
    try {
      c = centers[i].get<std::vector<double>>();
    } catch (const json::exception&) {
    }
    if (c.size() != 2 || !std::isfinite(c[0]) || !std::isfinite(c[1])) {
      throw FormatError("field 'pois.centers[" + std::to_string(i) + "]' must be [x, y]");
    }
    out.points.push_back({static_cast<int>(i) + 1, {c[0], c[1]}, 0.0});
  }
  if (j.contains("radius") && !j.at("radius").is_null()) {
    const double r = field<double>(j, "radius", "pois");
    if (!(r > 0)) throw FormatError("field 'pois.radius' must be positive");
    out.radius = r;
  }
  return out;
}

inline json to_json(const LabelReport& report) {
  json arr = json::array();
  for (const auto& p : report.pois) {
    json pct = json::object();
    for (const auto& [name, v] : p.percentages) pct[name] = v;
    json counts = json::object();
    for (auto c : kAllTissueClasses) counts[std::string(tissue_class_name(c))] = p.counts[static_cast<std::size_t>(c)];
    arr.push_back({{"poi_id", p.poi_id},
                   {"center_registered", {p.center_registered.x, p.center_registered.y}},
                   {"percentages", pct},
                   {"background_fraction", p.background_fraction},
                   {"pixel_count", p.pixel_count},
                   {"class_counts", counts},
                   {"flags", p.flags}});
  }
  return arr;
}

inline json to_json(const RegistrationConfig& c) {
  return {{"pyramid_levels", c.pyramid_levels},
          {"iterations_per_level", c.iterations_per_level},
          {"mi_bins", c.mi_bins},
          {"smoothness_weight", c.smoothness_weight},
          {"step_size", c.step_size},
          {"seed", c.seed},
          {"working_dims", {c.working_dims.width, c.working_dims.height}},
          {"control_spacing", c.control_spacing}};
}

inline RegistrationConfig registration_config_from_json(const json& j, const std::string& where) {
  RegistrationConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw FormatError("field '" + where + "' must be an object");
  c.pyramid_levels = field_or<int>(j, "pyramid_levels", c.pyramid_levels, where);
  c.iterations_per_level = field_or<int>(j, "iterations_per_level", c.iterations_per_level, where);
  c.mi_bins = field_or<int>(j, "mi_bins", c.mi_bins, where);
  c.smoothness_weight = field_or<double>(j, "smoothness_weight", c.smoothness_weight, where);
  c.step_size = field_or<double>(j, "step_size", c.step_size, where);
  c.seed = field_or<std::uint64_t>(j, "seed", c.seed, where);
  c.control_spacing = field_or<int>(j, "control_spacing", c.control_spacing, where);
  if (j.contains("working_dims")) {
    const auto d = field<std::vector<int>>(j, "working_dims", where);
    if (d.size() != 2) throw FormatError("field '" + where + ".working_dims' must be [width, height]");
    c.working_dims = {d[0], d[1]};
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return c;
}

inline json registration_metrics(const RegistrationResult& r) {
  return {{"mi_initial", r.mi_initial},       {"mi_final", r.mi_final},
          {"dice_initial", r.dice_initial},   {"dice_final", r.dice_final},
          {"gradient_energy", r.gradient_energy}, {"iterations_run", r.iterations_run},
          {"accepted_moves", r.accepted_moves}};
}

}  // namespace ppm::io
