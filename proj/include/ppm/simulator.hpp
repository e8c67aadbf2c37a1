#pragma once

// Deterministic synthetic scenes with known ground truth: tilted noisy
// depth planes, checkerboard correspondences under a known rigid
// transform, and specimen/histology phantom pairs under a known smooth
// deformation.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ppm/core.hpp"
#include "ppm/geometry.hpp"
#include "ppm/labeling.hpp"
#include "ppm/registration.hpp"

namespace ppm {

// --------------------------------------------------------------------------
// Phantom description
// --------------------------------------------------------------------------

struct TissueRegion {
  TissueClass label = TissueClass::connective;
  std::vector<Vec2> polygon;  // closed implicitly, pixel coordinates
};

struct Hsv {
  double h = 0.0;  // [0, 1)
  double s = 0.0;
  double v = 0.0;
};

inline Rgb hsv_to_rgb(Hsv c) {
  const double h6 = (c.h - std::floor(c.h)) * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = c.v * (1.0 - c.s), q = c.v * (1.0 - c.s * f), t = c.v * (1.0 - c.s * (1.0 - f));
  switch (sector) {
    case 0: return {c.v, t, p};
    case 1: return {q, c.v, p};
    case 2: return {p, c.v, t};
    case 3: return {p, q, c.v};
    case 4: return {t, p, c.v};
    default: return {c.v, p, q};
  }
}

struct DeformationConfig {
  int control_spacing = 64;       // pixels
  double max_displacement = 8.0;  // pixels, must stay below control_spacing
  // Explicit row-major control displacements; random when empty.
  std::vector<Vec2> control_displacements;
};

struct HoleConfig {
  int count = 0;
  double radius = 6.0;
};

struct PhantomConfig {
  Dims image_dims{256, 192};
  std::vector<TissueRegion> tissue_regions;  // later regions paint over earlier ones
  DeformationConfig deformation;
  // Indexed by TissueClass.
  std::array<Hsv, kTissueClassCount> specimen_colors{{
      {0.60, 0.03, 0.35},  // background tray
      {0.02, 0.80, 0.60},  // invasive carcinoma
      {0.08, 0.65, 0.70},  // DCIS
      {0.95, 0.35, 0.80},  // connective
      {0.14, 0.55, 0.85},  // fat
  }};
  std::array<double, kTissueClassCount> histology_gray{{0.95, 0.35, 0.45, 0.62, 0.80}};
  double noise_sigma = 0.02;
  HoleConfig holes;

  [[nodiscard]] int control_nx() const {
    return (image_dims.width - 1 + deformation.control_spacing - 1) / deformation.control_spacing + 1;
  }
  [[nodiscard]] int control_ny() const {
    return (image_dims.height - 1 + deformation.control_spacing - 1) / deformation.control_spacing + 1;
  }

  void validate() const {
    if (image_dims.width < 16 || image_dims.height < 16) throw InvalidArgument("phantom.image_dims must be >= 16x16");
    if (deformation.control_spacing < 1) throw InvalidArgument("phantom.deformation.control_spacing must be >= 1");
    if (!(deformation.max_displacement >= 0.0) ||
        !(deformation.max_displacement < deformation.control_spacing)) {
      throw InvalidArgument("phantom.deformation.max_displacement must be in [0, control_spacing)");
    }
    if (!deformation.control_displacements.empty() &&
        deformation.control_displacements.size() != static_cast<std::size_t>(control_nx() * control_ny())) {
      throw InvalidArgument("phantom.deformation.control_displacements must have " +
                            std::to_string(control_nx() * control_ny()) + " entries");
    }
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("phantom.noise_sigma must be >= 0");
    for (const auto& r : tissue_regions) {
      if (r.polygon.size() < 3) throw InvalidArgument("phantom.tissue_regions: polygon needs >= 3 vertices");
      for (const auto& v : r.polygon) {
        if (v.x < 0 || v.y < 0 || v.x > image_dims.width - 1 || v.y > image_dims.height - 1) {
          throw InvalidArgument("phantom.tissue_regions: polygon vertex outside the image");
        }
      }
    }
  }
};

namespace detail {

inline std::vector<Vec2> wobbly_polygon(Vec2 center, double radius, double wobble, int vertices,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.3, 1.0);
  const double p2 = phase(rng), p3 = phase(rng), a2 = amp(rng), a3 = amp(rng);
  std::vector<Vec2> poly;
  for (int k = 0; k < vertices; ++k) {
    const double t = 2.0 * std::numbers::pi * k / vertices;
    const double r = radius * (1.0 + wobble * (a2 * std::sin(2 * t + p2) + a3 * 0.5 * std::sin(3 * t + p3)));
    poly.push_back({center.x + r * std::cos(t), center.y + r * std::sin(t)});
  }
  return poly;
}

}  // namespace detail

// A specimen blob of connective tissue holding fat, invasive carcinoma and
// DCIS islands, scaled to the image size.
inline std::vector<TissueRegion> default_tissue_layout(Dims dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x7f4a7c159e3779b9ULL);
  const double m = std::min(dims.width, dims.height);
  const Vec2 c{(dims.width - 1) / 2.0, (dims.height - 1) / 2.0};
  std::uniform_real_distribution<double> spin(0.0, 2.0 * std::numbers::pi);
  const double base_angle = spin(rng);

  std::vector<TissueRegion> regions;
  regions.push_back({TissueClass::connective, detail::wobbly_polygon({c.x, c.y}, 0.40 * m, 0.08, 64, rng)});
  const std::array<std::pair<TissueClass, double>, 3> islands{{
      {TissueClass::fat, 0.15}, {TissueClass::invasive_carcinoma, 0.14}, {TissueClass::dcis, 0.12}}};
  for (std::size_t k = 0; k < islands.size(); ++k) {
    const double a = base_angle + 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
    const Vec2 at{c.x + 0.16 * dims.width * std::cos(a), c.y + 0.19 * dims.height * std::sin(a)};
    regions.push_back({islands[k].first, detail::wobbly_polygon(at, islands[k].second * m, 0.06, 40, rng)});
  }
  return regions;
}

inline PhantomConfig default_phantom(Dims dims, std::uint64_t seed, double max_displacement = 8.0) {
  PhantomConfig cfg;
  cfg.image_dims = dims;
  cfg.tissue_regions = default_tissue_layout(dims, seed);
  cfg.deformation.max_displacement = max_displacement;
  cfg.deformation.control_spacing = std::max(16, std::min(dims.width, dims.height) / 3);
  return cfg;
}

inline bool point_in_polygon(std::span<const Vec2> poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

inline TissueClass classify(std::span<const TissueRegion> regions, Vec2 p) {
  TissueClass label = TissueClass::background;
  for (const auto& r : regions) {
    if (point_in_polygon(r.polygon, p)) label = r.label;
  }
  return label;
}

// Control displacements (explicit or drawn uniformly from the disc of
// radius max_displacement) interpolated bilinearly to every pixel.
inline DisplacementField deformation_field(const PhantomConfig& cfg, std::mt19937_64& rng) {
  const int nx = cfg.control_nx(), ny = cfg.control_ny(), s = cfg.deformation.control_spacing;
  std::vector<Vec2> nodes = cfg.deformation.control_displacements;
  if (nodes.empty()) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    nodes.resize(static_cast<std::size_t>(nx * ny));
    for (auto& n : nodes) {
      Vec2 v;
      do {
        v = {unit(rng), unit(rng)};
      } while (v.x * v.x + v.y * v.y > 1.0);
      n = cfg.deformation.max_displacement * v;
    }
  }
  auto node = [&](int i, int j) -> const Vec2& {
    return nodes[static_cast<std::size_t>(std::min(j, ny - 1) * nx + std::min(i, nx - 1))];
  };
  DisplacementField ddf(cfg.image_dims);
  for (int y = 0; y < ddf.height(); ++y) {
    const int j = y / s;
    const double ty = static_cast<double>(y - j * s) / s;
    for (int x = 0; x < ddf.width(); ++x) {
      const int i = x / s;
      const double tx = static_cast<double>(x - i * s) / s;
      ddf(x, y) = detail::lerp_value(detail::lerp_value(node(i, j), node(i + 1, j), tx),
                                     detail::lerp_value(node(i, j + 1), node(i + 1, j + 1), tx), ty);
    }
  }
  return ddf;
}

struct PhantomPair {
  RgbImage specimen;              // moving side, S_O
  GrayImage histology;            // fixed side, H_O
  AnnotationImage annotation;     // aligned with histology, H_A
  AnnotationImage specimen_labels;  // tissue classes in specimen space
  DisplacementField truth_ddf;    // histology(p) shows specimen content at p + truth_ddf(p)
};

// Renders the phantom. The annotation at p is the class of the specimen
// geometry at p + truth_ddf(p), evaluated exactly on the polygons.
inline PhantomPair generate_phantom_pair(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  PhantomPair out;
  out.truth_ddf = deformation_field(cfg, rng);
  const Dims d = cfg.image_dims;
  out.specimen_labels = AnnotationImage(d, TissueClass::background);
  out.annotation = AnnotationImage(d, TissueClass::background);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      out.specimen_labels(x, y) = classify(cfg.tissue_regions, p);
      out.annotation(x, y) = classify(cfg.tissue_regions, p + out.truth_ddf(x, y));
    }
  }

  if (cfg.holes.count > 0) {
    std::uniform_real_distribution<double> ux(0.0, d.width - 1.0), uy(0.0, d.height - 1.0);
    for (int k = 0; k < cfg.holes.count; ++k) {
      const Vec2 c{ux(rng), uy(rng)};
      for_each_disk_pixel(c, cfg.holes.radius, d,
                          [&](int x, int y) { out.annotation(x, y) = TissueClass::background; });
    }
  }

  const double sigma = cfg.noise_sigma;
  std::normal_distribution<double> noise(0.0, sigma > 0 ? sigma : 1.0);
  auto jitter = [&]() { return sigma > 0 ? noise(rng) : 0.0; };

  out.specimen = RgbImage(d);
  for (std::size_t i = 0; i < out.specimen.size(); ++i) {
    Hsv c = cfg.specimen_colors[static_cast<std::size_t>(out.specimen_labels.storage()[i])];
    c.s = clamp01(c.s + jitter());
    c.v = clamp01(c.v + jitter());
    out.specimen.storage()[i] = hsv_to_rgb(c);
  }
  out.histology = GrayImage(d);
  for (std::size_t i = 0; i < out.histology.size(); ++i) {
    const double g = cfg.histology_gray[static_cast<std::size_t>(out.annotation.storage()[i])];
    out.histology.storage()[i] = clamp01(g + jitter());
  }
  return out;
}

// Bright filled disks (projected dots) over the specimen snapshot.
inline RgbImage render_poi_image(const RgbImage& specimen, std::span<const MeasurementPoint> pois) {
  RgbImage out = specimen;
  for (const auto& p : pois) {
    if (!(p.center.x >= 0 && p.center.y >= 0 && p.center.x <= specimen.width() - 1 &&
          p.center.y <= specimen.height() - 1)) {
      throw PoiOutOfBounds("POI " + std::to_string(p.id) + " outside the specimen image");
    }
    for_each_disk_pixel(p.center, p.radius, specimen.dims(), [&](int x, int y) { out(x, y) = {1.0, 1.0, 1.0}; });
  }
  return out;
}

// Well-separated integer-centered points on tissue (specimen space), kept
// `margin` pixels away from the border.
inline std::vector<MeasurementPoint> choose_tissue_pois(const AnnotationImage& specimen_labels, int count,
                                                        double radius, double min_separation,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Dims d = specimen_labels.dims();
  const int margin = static_cast<int>(std::ceil(radius)) + 2;
  std::uniform_int_distribution<int> ux(margin, d.width - 1 - margin), uy(margin, d.height - 1 - margin);
  std::vector<MeasurementPoint> pois;
  for (int attempt = 0; attempt < 20000 && static_cast<int>(pois.size()) < count; ++attempt) {
    const Vec2 c{static_cast<double>(ux(rng)), static_cast<double>(uy(rng))};
    bool on_tissue = true;
    for_each_disk_pixel(c, radius, d, [&](int x, int y) {
      if (specimen_labels(x, y) == TissueClass::background) on_tissue = false;
    });
    if (!on_tissue) continue;
    const bool separated = std::all_of(pois.begin(), pois.end(), [&](const MeasurementPoint& p) {
      return norm(p.center - c) >= min_separation;
    });
    if (!separated) continue;
    pois.push_back({0, c, radius});
  }
  std::sort(pois.begin(), pois.end(), [](const MeasurementPoint& a, const MeasurementPoint& b) {
    if (a.center.y != b.center.y) return a.center.y < b.center.y;
    return a.center.x < b.center.x;
  });
  for (std::size_t i = 0; i < pois.size(); ++i) pois[i].id = static_cast<int>(i) + 1;
  return pois;
}

// --------------------------------------------------------------------------
// Calibration scenes
// --------------------------------------------------------------------------

struct ScenarioConfig {
  std::uint64_t seed = 1;
  PlaneModel plane_truth{0.01, -0.02, -500.0};
  double depth_noise_sigma = 1.0;
  Dims frame_dims{128, 96};
  int frame_count = 10;
  double pixel_pitch = 1.0;
  double dropout_fraction = 0.0;
  std::vector<double> board_heights{20.0, 40.0, 60.0, 80.0, 100.0};
  double board_square_mm = 25.0;
  double board_tilt_deg = 10.0;
  double corner_noise_sigma = 0.0;
  RigidTransform transform_truth{rotation_z(deg_to_rad(10.0)), Eigen::Vector3d(5.0, -3.0, 2.0)};
  PhantomConfig phantom;
  int poi_count = 6;
  double poi_dot_radius = 3.0;

  void validate() const {
    if (!(depth_noise_sigma >= 0.0) || !(corner_noise_sigma >= 0.0)) throw InvalidArgument("noise sigmas must be >= 0");
    if (board_heights.empty()) throw InvalidArgument("board_heights needs at least one height");
    if (frame_dims.width < 16 || frame_dims.height < 16) throw InvalidArgument("frame_dims must be >= 16x16");
    if (frame_count < 1) throw InvalidArgument("frame_count must be >= 1");
    if (!(pixel_pitch > 0.0)) throw InvalidArgument("pixel_pitch must be > 0");
    if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0)) throw InvalidArgument("dropout_fraction must be in [0, 1)");
    if (!plane_truth.finite()) throw InvalidArgument("plane_truth must be finite");
    if (!transform_truth.is_valid(1e-9)) throw InvalidArgument("transform_truth is not a rigid transform");
  }
};

struct DepthScene {
  std::vector<DepthFrame> frames;
  PlaneModel truth;
};

// Frames sampling z = -(a*x + b*y + c) plus Gaussian noise; optional dropouts.
inline DepthScene generate_depth_scene(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.depth_noise_sigma > 0 ? cfg.depth_noise_sigma : 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  DepthScene scene{{}, cfg.plane_truth};
  for (int f = 0; f < cfg.frame_count; ++f) {
    DepthFrame frame(cfg.frame_dims.width, cfg.frame_dims.height, cfg.pixel_pitch);
    for (int row = 0; row < frame.height(); ++row) {
      for (int col = 0; col < frame.width(); ++col) {
        double z = cfg.plane_truth.depth_at(frame.lateral_x(col), frame.lateral_y(row));
        if (cfg.depth_noise_sigma > 0) z += noise(rng);
        if (cfg.dropout_fraction > 0 && coin(rng) < cfg.dropout_fraction) z = kInvalidDepth;
        frame.depths(col, row) = z;
      }
    }
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

// Uniformly distributed rotation, translation uniform in [-max, max]^3.
inline RigidTransform random_rigid_transform(std::mt19937_64& rng, double max_translation = 50.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  std::uniform_real_distribution<double> u(-max_translation, max_translation);
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return t;
}

inline constexpr int kBoardCornerRows = 3;  // interior corners of a 4x5 board
inline constexpr int kBoardCornerCols = 4;
inline constexpr int kCornersPerBoard = kBoardCornerRows * kBoardCornerCols;

struct CheckerboardScene {
  CorrespondenceSet pairs;
  RigidTransform truth;
};

// 12 interior corners per board, one board per height above the base
// plane, each with a random lateral offset and orientation.
inline CheckerboardScene generate_checkerboard_correspondences(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> offset(-20.0, 20.0);
  std::uniform_real_distribution<double> tilt(-deg_to_rad(cfg.board_tilt_deg), deg_to_rad(cfg.board_tilt_deg));
  std::uniform_real_distribution<double> yaw(-deg_to_rad(30.0), deg_to_rad(30.0));
  std::normal_distribution<double> noise(0.0, cfg.corner_noise_sigma > 0 ? cfg.corner_noise_sigma : 1.0);

  CheckerboardScene scene{{}, cfg.transform_truth};
  const double cx0 = cfg.frame_dims.width * cfg.pixel_pitch / 2.0;
  const double cy0 = cfg.frame_dims.height * cfg.pixel_pitch / 2.0;
  for (double height : cfg.board_heights) {
    const double cx = cx0 + offset(rng), cy = cy0 + offset(rng);
    const Eigen::Vector3d center(cx, cy, cfg.plane_truth.depth_at(cx, cy) - height);
    const Eigen::Matrix3d orient = rotation_from_euler(tilt(rng), tilt(rng), yaw(rng));
    for (int r = 0; r < kBoardCornerRows; ++r) {
      for (int c = 0; c < kBoardCornerCols; ++c) {
        const Eigen::Vector3d local((c - 1.5) * cfg.board_square_mm, (r - 1.0) * cfg.board_square_mm, 0.0);
        const Point3 cam = Point3::from(center + orient * local);
        Point3 proj = map_point(cfg.transform_truth, cam);
        if (cfg.corner_noise_sigma > 0) {
          proj.x += noise(rng);
          proj.y += noise(rng);
          proj.z += noise(rng);
        }
        scene.pairs.push_back({cam, proj});
      }
    }
  }
  return scene;
}

}  // namespace ppm
