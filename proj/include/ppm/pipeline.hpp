#pragma once

// Measurement pipeline: configuration, calibration and correlation stages,
// artifact writing, and the synthetic scenario writer.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppm/core.hpp"
#include "ppm/geometry.hpp"
#include "ppm/io.hpp"
#include "ppm/labeling.hpp"
#include "ppm/registration.hpp"
#include "ppm/simulator.hpp"

namespace ppm {

namespace fs = std::filesystem;
using io::json;

// A stage failed; completed stages keep their artifacts.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), cause_(cause) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }
  [[nodiscard]] const std::string& cause() const { return cause_; }

 private:
  std::string stage_;
  std::string cause_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

enum class FixedRole { histology, specimen };

inline std::string_view fixed_role_name(FixedRole r) { return r == FixedRole::histology ? "histology" : "specimen"; }

inline std::string_view solver_name(RigidSolver s) {
  return s == RigidSolver::procrustes ? "procrustes" : "nelder-mead";
}

inline std::optional<RigidSolver> parse_solver(std::string_view s) {
  if (s == "procrustes") return RigidSolver::procrustes;
  if (s == "nelder-mead" || s == "nelder_mead") return RigidSolver::nelder_mead;
  return std::nullopt;
}

// --------------------------------------------------------------------------
// Configuration
// --------------------------------------------------------------------------

struct PipelineInputs {
  fs::path specimen;      // S_O, RGB PNG
  fs::path specimen_poi;  // S_POI, RGB PNG with projected dots
  fs::path pois;          // alternative to S_POI: centers in working coordinates
  fs::path histology;     // H_O
  fs::path annotation;    // H_A, indexed PNG (+ sidecar)
  fs::path ddf;           // precomputed field; skips estimation
  std::vector<fs::path> depth_frames;
  fs::path correspondences;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PipelineInputs inputs;
  fs::path output_dir = "out";
  double poi_radius_px = 8.0;
  std::optional<double> mm_per_pixel;
  FixedRole fixed_role = FixedRole::histology;
  RegistrationConfig registration;
  bool registration_seed_explicit = false;
  std::size_t plane_samples = 2000;
  RigidSolver solver = RigidSolver::procrustes;
  double poi_threshold = 0.1;

  // Overrides the run seed; the registration seed follows unless pinned.
  void set_seed(std::uint64_t s) {
    seed = s;
    if (!registration_seed_explicit) registration.seed = s;
  }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::string relative_string(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  return fs::path(p).lexically_relative(base).generic_string();
}

}  // namespace detail

// Relative paths resolve against `base_dir` (the config file's directory).
inline PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  using io::field;
  using io::field_or;
  using io::FormatError;
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  io::check_schema(j, "config");
  PipelineConfig c;
  c.seed = field_or<std::uint64_t>(j, "seed", 0, "");
  c.output_dir = detail::resolve(base_dir, field_or<std::string>(j, "output_dir", "out", ""));

  const json inputs = field_or<json>(j, "inputs", json::object(), "");
  if (!inputs.is_object()) throw FormatError("field 'inputs' must be an object");
  auto path_of = [&](const char* key) {
    return detail::resolve(base_dir, field_or<std::string>(inputs, key, "", "inputs"));
  };
  c.inputs.specimen = path_of("specimen");
  c.inputs.specimen_poi = path_of("specimen_poi");
  c.inputs.pois = path_of("pois");
  c.inputs.histology = path_of("histology");
  c.inputs.annotation = path_of("annotation");
  c.inputs.ddf = path_of("ddf");
  c.inputs.correspondences = path_of("correspondences");
  for (const auto& f : field_or<std::vector<std::string>>(inputs, "depth_frames", {}, "inputs")) {
    c.inputs.depth_frames.push_back(detail::resolve(base_dir, f));
  }
  if (!c.inputs.specimen_poi.empty() && !c.inputs.pois.empty()) {
    throw FormatError("fields 'inputs.specimen_poi' and 'inputs.pois' are mutually exclusive");
  }

  c.poi_radius_px = field_or<double>(j, "poi_radius_px", c.poi_radius_px, "");
  if (j.contains("mm_per_pixel")) {
    c.mm_per_pixel = field<double>(j, "mm_per_pixel", "");
    if (!(*c.mm_per_pixel > 0)) throw FormatError("field 'mm_per_pixel' must be > 0");
    if (j.contains("probe_diameter_mm") && !j.contains("poi_radius_px")) {
      const double d = field<double>(j, "probe_diameter_mm", "");
      if (!(d > 0)) throw FormatError("field 'probe_diameter_mm' must be > 0");
      c.poi_radius_px = d / 2.0 / *c.mm_per_pixel;
    }
  }
  if (!(c.poi_radius_px > 0)) throw FormatError("field 'poi_radius_px' must be > 0");

  const auto role = field_or<std::string>(j, "fixed_image_role", "histology", "");
  if (role == "histology") {
    c.fixed_role = FixedRole::histology;
  } else if (role == "specimen") {
    c.fixed_role = FixedRole::specimen;
  } else {
    throw FormatError("field 'fixed_image_role' must be \"histology\" or \"specimen\"");
  }

  const json reg = field_or<json>(j, "registration", json(), "");
  c.registration = io::registration_config_from_json(reg, "registration");
  c.registration_seed_explicit = reg.is_object() && reg.contains("seed");
  if (!c.registration_seed_explicit) c.registration.seed = c.seed;

  const auto samples = field_or<long long>(j, "plane_samples", 2000, "");
  if (samples < 3) throw FormatError("field 'plane_samples' must be >= 3");
  c.plane_samples = static_cast<std::size_t>(samples);
  const auto solver = parse_solver(field_or<std::string>(j, "solver", "procrustes", ""));
  if (!solver) throw FormatError("field 'solver' must be \"procrustes\" or \"nelder-mead\"");
  c.solver = *solver;
  c.poi_threshold = field_or<double>(j, "poi_threshold", c.poi_threshold, "");
  if (!(c.poi_threshold > 0 && c.poi_threshold < 1)) throw FormatError("field 'poi_threshold' must be in (0, 1)");
  return c;
}

inline PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  return pipeline_config_from_json(io::read_json(path), path.parent_path());
}

// Paths are written relative to `base_dir`.
inline json to_json(const PipelineConfig& c, const fs::path& base_dir) {
  json inputs = json::object();
  auto put = [&](const char* key, const fs::path& p) {
    if (!p.empty()) inputs[key] = detail::relative_string(p, base_dir);
  };
  put("specimen", c.inputs.specimen);
  put("specimen_poi", c.inputs.specimen_poi);
  put("pois", c.inputs.pois);
  put("histology", c.inputs.histology);
  put("annotation", c.inputs.annotation);
  put("ddf", c.inputs.ddf);
  put("correspondences", c.inputs.correspondences);
  if (!c.inputs.depth_frames.empty()) {
    json frames = json::array();
    for (const auto& f : c.inputs.depth_frames) frames.push_back(detail::relative_string(f, base_dir));
    inputs["depth_frames"] = frames;
  }
  json out = {{"schema_version", io::kSchemaVersion},
              {"seed", c.seed},
              {"inputs", inputs},
              {"output_dir", detail::relative_string(c.output_dir, base_dir)},
              {"poi_radius_px", c.poi_radius_px},
              {"fixed_image_role", fixed_role_name(c.fixed_role)},
              {"registration", io::to_json(c.registration)},
              {"plane_samples", c.plane_samples},
              {"solver", solver_name(c.solver)}};
  if (!c.registration_seed_explicit) out["registration"].erase("seed");
  if (c.mm_per_pixel) out["mm_per_pixel"] = *c.mm_per_pixel;
  return out;
}

// --------------------------------------------------------------------------
// Calibration stages
// --------------------------------------------------------------------------

struct BaseplaneCalibration {
  PlaneFit fit;
  std::size_t sample_count = 0;
  DepthFrame averaged;
  DepthFrame corrected;
};

inline BaseplaneCalibration calibrate_baseplane(std::span<const DepthFrame> frames, std::size_t samples,
                                                std::uint64_t seed) {
  BaseplaneCalibration out;
  out.averaged = average_depth_frames(frames);
  const auto points = sample_plane_points(out.averaged, samples, seed);
  out.sample_count = points.size();
  out.fit = fit_base_plane(points);
  out.corrected = correct_depth(out.averaged, out.fit.plane);
  return out;
}

inline json plane_document(const BaseplaneCalibration& c) {
  json j = io::to_json(c.fit.plane);
  j["schema_version"] = io::kSchemaVersion;
  j["residual"] = c.fit.residual;
  j["sample_count"] = c.sample_count;
  return j;
}

inline json transform_document(const ProjectorCalibration& c, RigidSolver solver, std::size_t pairs) {
  json j = io::to_json(c.transform);
  j["schema_version"] = io::kSchemaVersion;
  j["rmse_mm"] = c.rmse;
  j["not_rigid"] = c.not_rigid;
  j["solver"] = solver_name(solver);
  j["pair_count"] = pairs;
  return j;
}

// --------------------------------------------------------------------------
// Correlation stages (in memory; shared by the CLI and the HTTP service)
// --------------------------------------------------------------------------

struct RegistrationImages {
  GrayImage fixed;
  GrayImage moving;
};

// Specimen -> saturation channel, histology stays gray; both resized to the
// working resolution.
inline RegistrationImages registration_images(const RgbImage& specimen, const GrayImage& histology,
                                              FixedRole role, Dims working) {
  GrayImage spec = resize(saturation_channel(specimen), working);
  GrayImage hist = resize(histology, working);
  if (role == FixedRole::histology) return {std::move(hist), std::move(spec)};
  return {std::move(spec), std::move(hist)};
}

// Metrics for a given field, as if estimate_ddf had returned it.
inline RegistrationResult evaluate_ddf(const GrayImage& fixed, const GrayImage& moving, const DisplacementField& ddf,
                                       const RegistrationConfig& cfg) {
  require_same_dims(fixed.dims(), moving.dims(), "fixed vs moving image");
  require_same_dims(ddf.dims(), fixed.dims(), "displacement field vs working images");
  RegistrationResult r;
  r.ddf = ddf;
  r.warped = warp_image(moving, ddf);
  r.mi_initial = mutual_information(fixed, moving, cfg.mi_bins);
  r.mi_final = mutual_information(fixed, r.warped, cfg.mi_bins);
  const BinaryMask fixed_mask = foreground_mask(fixed);
  r.dice_initial = dice_score(fixed_mask, foreground_mask(moving));
  r.dice_final = dice_score(fixed_mask, foreground_mask(r.warped));
  r.gradient_energy = gradient_energy(ddf);
  return r;
}

// POI centers in working coordinates, from the S_O / S_POI pair.
inline std::vector<MeasurementPoint> working_pois(const RgbImage& specimen, const RgbImage& specimen_poi,
                                                  Dims working, double threshold = 0.1) {
  auto points = extract_poi_centers(specimen_poi, specimen, threshold);
  for (auto& p : points) p.center = rescale_point(p.center, specimen.dims(), working);
  return points;
}

struct LabelStage {
  std::vector<MeasurementPoint> points;  // working coordinates, specimen space
  BinaryMask disks;                      // specimen space
  BinaryMask registered_disks;           // mask used for attribution
  LabelReport report;
};

// Histology fixed: disks are pushed into histology space through the field.
// Specimen fixed: the annotation is pulled back into specimen space.
inline LabelStage extract_labels(const DisplacementField& ddf, std::span<const MeasurementPoint> points,
                                 const AnnotationImage& annotation, double radius, FixedRole role) {
  const Dims dims = ddf.dims();
  LabelStage out;
  out.points.assign(points.begin(), points.end());
  for (auto& p : out.points) p.radius = radius;
  out.disks = rasterize_disks(out.points, dims, radius).mask;
  const AnnotationImage labels = resample_annotation(annotation, dims);
  if (role == FixedRole::histology) {
    out.registered_disks = warp_mask(out.disks, ddf);
    std::vector<MeasurementPoint> moved = out.points;
    for (auto& p : moved) p.center = transport_point(ddf, p.center);
    out.report = compute_label_percentages(out.registered_disks, labels, moved);
  } else {
    out.registered_disks = out.disks;
    out.report = compute_label_percentages(out.disks, warp_annotation(labels, ddf), out.points);
  }
  return out;
}

// --------------------------------------------------------------------------
// Artifact writers
// --------------------------------------------------------------------------

inline json registration_document(const RegistrationResult& r, const RegistrationConfig& cfg, FixedRole role,
                                  bool estimated) {
  json j = io::registration_metrics(r);
  j["schema_version"] = io::kSchemaVersion;
  j["fixed_image_role"] = fixed_role_name(role);
  j["ddf_source"] = estimated ? "estimated" : "provided";
  j["config"] = io::to_json(cfg);
  j["ddf"] = "ddf.json";
  j["warped"] = "warped.png";
  return j;
}

inline void write_registration_artifacts(const fs::path& dir, const RegistrationImages& images,
                                         const RegistrationResult& r, const json& document) {
  io::save_gray(images.fixed, dir / "fixed.png", 16);
  io::save_gray(images.moving, dir / "moving.png", 16);
  io::save_gray(r.warped, dir / "warped.png", 16);
  io::save_ddf(r.ddf, dir / "ddf.json");
  io::write_json(dir / "registration.json", document);
}

inline std::string report_text(const LabelReport& report) { return io::dump(io::to_json(report)); }

inline void write_label_artifacts(const fs::path& dir, const LabelStage& s, double radius) {
  io::write_json(dir / "pois.json", io::pois_to_json(s.points, radius));
  io::save_mask(s.disks, dir / "disks.png");
  io::save_mask(s.registered_disks, dir / "disks_registered.png");
  io::write_text(dir / "labels.json", report_text(s.report));
}

// --------------------------------------------------------------------------
// File-driven stages
// --------------------------------------------------------------------------

inline void require_input(const fs::path& p, const std::string& field) {
  if (p.empty()) throw io::FormatError("missing field 'inputs." + field + "'");
}

inline void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw IoError("input file not found: " + p.string());
}

inline BaseplaneCalibration run_baseplane_stage(const PipelineConfig& c) {
  return run_stage("calibrate-baseplane", [&] {
    std::vector<DepthFrame> frames;
    for (const auto& f : c.inputs.depth_frames) {
      require_file(f);
      frames.push_back(io::load_depth_frame(f));
    }
    auto cal = calibrate_baseplane(frames, c.plane_samples, c.seed);
    io::write_json(c.output_dir / "plane.json", plane_document(cal));
    io::save_depth_frame(cal.corrected, c.output_dir / "corrected_depth.json");
    return cal;
  });
}

inline ProjectorCalibration run_projector_stage(const PipelineConfig& c) {
  return run_stage("calibrate-projector", [&] {
    require_file(c.inputs.correspondences);
    const auto pairs = io::correspondences_from_json(io::read_json(c.inputs.correspondences));
    ProjectorCalibrationOptions opts;
    opts.solver = c.solver;
    auto cal = estimate_projector_transform(pairs, opts);
    io::write_json(c.output_dir / "transform.json", transform_document(cal, c.solver, pairs.size()));
    return cal;
  });
}

struct RegistrationStage {
  RegistrationImages images;
  RegistrationResult result;
};

inline RegistrationStage run_registration_stage(const PipelineConfig& c) {
  require_input(c.inputs.specimen, "specimen");
  require_input(c.inputs.histology, "histology");
  return run_stage("register", [&] {
    require_file(c.inputs.specimen);
    require_file(c.inputs.histology);
    RegistrationStage s;
    s.images = registration_images(io::load_rgb(c.inputs.specimen), io::load_gray(c.inputs.histology), c.fixed_role,
                                   c.registration.working_dims);
    const bool estimate = c.inputs.ddf.empty();
    if (estimate) {
      s.result = estimate_ddf(s.images.fixed, s.images.moving, c.registration);
    } else {
      require_file(c.inputs.ddf);
      s.result = evaluate_ddf(s.images.fixed, s.images.moving, io::load_ddf(c.inputs.ddf), c.registration);
    }
    write_registration_artifacts(c.output_dir, s.images, s.result,
                                 registration_document(s.result, c.registration, c.fixed_role, estimate));
    return s;
  });
}

inline std::vector<MeasurementPoint> load_working_pois(const PipelineConfig& c) {
  if (!c.inputs.pois.empty()) {
    require_file(c.inputs.pois);
    return io::pois_from_json(io::read_json(c.inputs.pois)).points;
  }
  require_file(c.inputs.specimen);
  require_file(c.inputs.specimen_poi);
  return working_pois(io::load_rgb(c.inputs.specimen), io::load_rgb(c.inputs.specimen_poi),
                      c.registration.working_dims, c.poi_threshold);
}

// `ddf` defaults to the field written by a previous register stage.
inline LabelStage run_label_stage(const PipelineConfig& c, const DisplacementField* ddf = nullptr) {
  require_input(c.inputs.annotation, "annotation");
  if (c.inputs.pois.empty()) {
    require_input(c.inputs.specimen, "specimen");
    require_input(c.inputs.specimen_poi, "specimen_poi");
  }
  return run_stage("extract-labels", [&] {
    DisplacementField loaded;
    if (ddf == nullptr) {
      const fs::path path = c.inputs.ddf.empty() ? c.output_dir / "ddf.json" : c.inputs.ddf;
      require_file(path);
      loaded = io::load_ddf(path);
      ddf = &loaded;
    }
    const auto points = load_working_pois(c);
    require_file(c.inputs.annotation);
    auto s = extract_labels(*ddf, points, io::load_annotation(c.inputs.annotation), c.poi_radius_px, c.fixed_role);
    write_label_artifacts(c.output_dir, s, c.poi_radius_px);
    return s;
  });
}

struct PipelineResult {
  std::optional<BaseplaneCalibration> baseplane;
  std::optional<ProjectorCalibration> projector;
  RegistrationResult registration;
  LabelReport report;
};

// Calibration stages run when their inputs are configured; registration
// and label extraction always run.
inline PipelineResult run_pipeline(const PipelineConfig& c) {
  PipelineResult out;
  run_stage("prepare", [&] { fs::create_directories(c.output_dir); });
  if (!c.inputs.depth_frames.empty()) out.baseplane = run_baseplane_stage(c);
  if (!c.inputs.correspondences.empty()) out.projector = run_projector_stage(c);
  auto reg = run_registration_stage(c);
  out.registration = reg.result;
  out.report = run_label_stage(c, &reg.result.ddf).report;
  return out;
}

// --------------------------------------------------------------------------
// Synthetic scenario directory
// --------------------------------------------------------------------------

inline json to_json(const ScenarioConfig& s) {
  return {{"schema_version", io::kSchemaVersion},
          {"seed", s.seed},
          {"plane_truth", io::to_json(s.plane_truth)},
          {"depth_noise_sigma", s.depth_noise_sigma},
          {"frame_dims", {s.frame_dims.width, s.frame_dims.height}},
          {"frame_count", s.frame_count},
          {"pixel_pitch_mm", s.pixel_pitch},
          {"dropout_fraction", s.dropout_fraction},
          {"board_heights", s.board_heights},
          {"board_square_mm", s.board_square_mm},
          {"board_tilt_deg", s.board_tilt_deg},
          {"corner_noise_sigma", s.corner_noise_sigma},
          {"transform_truth", io::to_json(s.transform_truth)},
          {"phantom",
           {{"image_dims", {s.phantom.image_dims.width, s.phantom.image_dims.height}},
            {"control_spacing", s.phantom.deformation.control_spacing},
            {"max_displacement", s.phantom.deformation.max_displacement},
            {"noise_sigma", s.phantom.noise_sigma},
            {"holes", s.phantom.holes.count},
            {"hole_radius", s.phantom.holes.radius}}},
          {"poi_count", s.poi_count},
          {"poi_dot_radius", s.poi_dot_radius}};
}

// Seed-derived defaults (random transform, random phantom layout), then any
// fields present in `j` override them.
inline ScenarioConfig scenario_from_json(const json& j, std::uint64_t seed) {
  using io::field;
  using io::field_or;
  using io::FormatError;
  ScenarioConfig s;
  s.seed = j.is_object() ? field_or<std::uint64_t>(j, "seed", seed, "scenario") : seed;
  std::mt19937_64 rng(s.seed ^ 0x2545f4914f6cdd1dULL);
  s.transform_truth = random_rigid_transform(rng);
  Dims dims{256, 192};
  double max_disp = 8.0;
  if (j.is_object()) {
    io::check_schema(j, "scenario");
    if (j.contains("plane_truth")) s.plane_truth = io::plane_from_json(j.at("plane_truth"), "scenario.plane_truth");
    s.depth_noise_sigma = field_or<double>(j, "depth_noise_sigma", s.depth_noise_sigma, "scenario");
    if (j.contains("frame_dims")) {
      const auto d = field<std::vector<int>>(j, "frame_dims", "scenario");
      if (d.size() != 2) throw FormatError("field 'scenario.frame_dims' must be [width, height]");
      s.frame_dims = {d[0], d[1]};
    }
    s.frame_count = field_or<int>(j, "frame_count", s.frame_count, "scenario");
    s.pixel_pitch = field_or<double>(j, "pixel_pitch_mm", s.pixel_pitch, "scenario");
    s.dropout_fraction = field_or<double>(j, "dropout_fraction", s.dropout_fraction, "scenario");
    s.board_heights = field_or<std::vector<double>>(j, "board_heights", s.board_heights, "scenario");
    s.board_square_mm = field_or<double>(j, "board_square_mm", s.board_square_mm, "scenario");
    s.board_tilt_deg = field_or<double>(j, "board_tilt_deg", s.board_tilt_deg, "scenario");
    s.corner_noise_sigma = field_or<double>(j, "corner_noise_sigma", s.corner_noise_sigma, "scenario");
    if (j.contains("transform_truth")) {
      s.transform_truth = io::transform_from_json(j.at("transform_truth"), "scenario.transform_truth");
    }
    s.poi_count = field_or<int>(j, "poi_count", s.poi_count, "scenario");
    s.poi_dot_radius = field_or<double>(j, "poi_dot_radius", s.poi_dot_radius, "scenario");
    const json ph = field_or<json>(j, "phantom", json::object(), "scenario");
    if (ph.contains("image_dims")) {
      const auto d = field<std::vector<int>>(ph, "image_dims", "scenario.phantom");
      if (d.size() != 2) throw FormatError("field 'scenario.phantom.image_dims' must be [width, height]");
      dims = {d[0], d[1]};
    }
    if (dims.width < 16 || dims.height < 16) throw FormatError("field 'scenario.phantom.image_dims' must be >= 16x16");
    max_disp = field_or<double>(ph, "max_displacement", max_disp, "scenario.phantom");
    s.phantom = default_phantom(dims, s.seed, max_disp);
    s.phantom.deformation.control_spacing =
        field_or<int>(ph, "control_spacing", s.phantom.deformation.control_spacing, "scenario.phantom");
    s.phantom.noise_sigma = field_or<double>(ph, "noise_sigma", s.phantom.noise_sigma, "scenario.phantom");
    s.phantom.holes.count = field_or<int>(ph, "holes", s.phantom.holes.count, "scenario.phantom");
    s.phantom.holes.radius = field_or<double>(ph, "hole_radius", s.phantom.holes.radius, "scenario.phantom");
  } else {
    s.phantom = default_phantom(dims, s.seed, max_disp);
  }
  if (s.poi_count < 1) throw FormatError("field 'scenario.poi_count' must be >= 1");
  if (!(s.poi_dot_radius >= 1)) throw FormatError("field 'scenario.poi_dot_radius' must be >= 1");
  try {
    s.validate();
    s.phantom.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("scenario: ") + e.what());
  }
  return s;
}

struct ScenarioFiles {
  fs::path config;  // pipeline config referencing every input below
  CheckerboardScene checkerboard;
  PhantomPair phantom;
  std::vector<MeasurementPoint> pois;  // specimen space, phantom resolution
};

// Writes depth frames, correspondences, phantom images, truth field and
// truth transforms under `dir`, plus a ready-to-run config.json.
inline ScenarioFiles write_scenario(const ScenarioConfig& s, const fs::path& dir, double poi_radius_px = 8.0) {
  ScenarioFiles out;
  fs::create_directories(dir);
  io::write_json(dir / "scenario.json", to_json(s));

  PipelineConfig cfg;
  cfg.set_seed(s.seed);
  cfg.poi_radius_px = poi_radius_px;
  cfg.output_dir = dir / "out";

  const auto depth = generate_depth_scene(s);
  for (std::size_t i = 0; i < depth.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.json", i);
    io::save_depth_frame(depth.frames[i], dir / "depth" / name);
    cfg.inputs.depth_frames.push_back(dir / "depth" / name);
  }
  json plane = io::to_json(depth.truth);
  plane["schema_version"] = io::kSchemaVersion;
  io::write_json(dir / "truth" / "plane.json", plane);

  out.checkerboard = generate_checkerboard_correspondences(s);
  io::write_json(dir / "correspondences.json", io::to_json(out.checkerboard.pairs));
  json tr = io::to_json(out.checkerboard.truth);
  tr["schema_version"] = io::kSchemaVersion;
  io::write_json(dir / "truth" / "transform.json", tr);
  cfg.inputs.correspondences = dir / "correspondences.json";

  out.phantom = generate_phantom_pair(s.phantom, s.seed);
  const Dims working = cfg.registration.working_dims;
  const Dims pd = s.phantom.image_dims;
  // POIs must carry a full probe disk at working resolution.
  const double scale = std::max(static_cast<double>(pd.width) / working.width,
                                static_cast<double>(pd.height) / working.height);
  const double keep_out = std::max(s.poi_dot_radius, poi_radius_px * scale);
  out.pois = choose_tissue_pois(out.phantom.specimen_labels, s.poi_count, keep_out, 3.0 * keep_out, s.seed);
  if (out.pois.empty()) throw InvalidArgument("phantom has no room for POIs");
  std::vector<MeasurementPoint> dots = out.pois;
  for (auto& p : dots) p.radius = s.poi_dot_radius;

  const fs::path ph = dir / "phantom";
  io::save_rgb(out.phantom.specimen, ph / "specimen.png");
  io::save_rgb(render_poi_image(out.phantom.specimen, dots), ph / "specimen_poi.png");
  io::save_gray(out.phantom.histology, ph / "histology.png");
  io::save_annotation(out.phantom.annotation, ph / "annotation.png");
  io::save_annotation(out.phantom.specimen_labels, dir / "truth" / "specimen_labels.png");
  io::save_ddf(out.phantom.truth_ddf, dir / "truth" / "ddf.json");
  io::write_json(dir / "truth" / "pois.json", io::pois_to_json(out.pois, s.poi_dot_radius));

  cfg.inputs.specimen = ph / "specimen.png";
  cfg.inputs.specimen_poi = ph / "specimen_poi.png";
  cfg.inputs.histology = ph / "histology.png";
  cfg.inputs.annotation = ph / "annotation.png";
  out.config = dir / "config.json";
  io::write_json(out.config, to_json(cfg, dir));
  return out;
}

}  // namespace ppm
