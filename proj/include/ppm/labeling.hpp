#pragma once

// Measurement-location tracking into the annotated histology image and
// per-location tissue-class percentages.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ppm/components.hpp"
#include "ppm/core.hpp"
#include "ppm/registration.hpp"

namespace ppm {

struct MeasurementPoint {
  int id = 0;
  Vec2 center;
  double radius = 0.0;  // pixels; probe footprint
};

// Visits every pixel p of `dims` with |p - center| <= radius. Returns true
// when part of the disk fell outside the raster.
template <typename F>
bool for_each_disk_pixel(Vec2 center, double radius, Dims dims, F&& visit) {
  bool clipped = false;
  const int x_lo = static_cast<int>(std::ceil(center.x - radius));
  const int x_hi = static_cast<int>(std::floor(center.x + radius));
  const int y_lo = static_cast<int>(std::ceil(center.y - radius));
  const int y_hi = static_cast<int>(std::floor(center.y + radius));
  const double r2 = radius * radius;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = x - center.x, dy = y - center.y;
      if (dx * dx + dy * dy > r2) continue;
      if (!dims.contains(x, y)) {
        clipped = true;
        continue;
      }
      visit(x, y);
    }
  }
  return clipped;
}

// Locates projected dots as components of the thresholded difference
// between the POI snapshot and the plain snapshot. Centers are ordered by
// (y, x) and numbered from 1.
inline std::vector<MeasurementPoint> extract_poi_centers(const RgbImage& poi_image,
                                                         const RgbImage& base_image,
                                                         double threshold = 0.1) {
  require_same_dims(poi_image.dims(), base_image.dims(), "extract_poi_centers");
  BinaryMask diff(poi_image.dims(), 0);
  for (std::size_t i = 0; i < poi_image.size(); ++i) {
    const Rgb& a = poi_image.storage()[i];
    const Rgb& b = base_image.storage()[i];
    const double d = std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
    diff.storage()[i] = d > threshold ? 1 : 0;
  }
  const auto cc = label_components(diff, Connectivity::eight);
  if (cc.components.empty()) throw NoPoisFound("no projected points found in the POI image");

  std::vector<MeasurementPoint> points;
  for (const auto& c : cc.components) {
    if (c.touches_border) {
      throw AmbiguousPois("projected point near (" + std::to_string(c.centroid_x) + ", " +
                          std::to_string(c.centroid_y) + ") touches the image border");
    }
    points.push_back({0, {c.centroid_x, c.centroid_y}, 0.0});
  }
  std::sort(points.begin(), points.end(), [](const MeasurementPoint& a, const MeasurementPoint& b) {
    if (a.center.y != b.center.y) return a.center.y < b.center.y;
    return a.center.x < b.center.x;
  });
  for (std::size_t i = 0; i < points.size(); ++i) points[i].id = static_cast<int>(i) + 1;
  return points;
}

struct DiskRaster {
  BinaryMask mask;
  bool clipped = false;  // some disk extended past the raster
};

// Union of disks of `radius` around every point.
inline DiskRaster rasterize_disks(std::span<const MeasurementPoint> points, Dims dims, double radius) {
  if (!(radius >= 0.0)) throw InvalidArgument("disk radius must be >= 0");
  DiskRaster out{BinaryMask(dims, 0), false};
  for (const auto& p : points) {
    if (!(p.center.x >= 0 && p.center.y >= 0 && p.center.x <= dims.width - 1 &&
          p.center.y <= dims.height - 1)) {
      throw PoiOutOfBounds("POI " + std::to_string(p.id) + " lies outside the " + to_string(dims) + " raster");
    }
    out.clipped |= for_each_disk_pixel(p.center, radius, dims, [&](int x, int y) { out.mask.set(x, y); });
  }
  return out;
}

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Nearest-neighbor pull-back: out(p) = mask(round(p + ddf(p))); samples
// outside the raster read as unset.
inline BinaryMask warp_mask(const BinaryMask& mask, const DisplacementField& ddf) {
  require_same_dims(mask.dims(), ddf.dims(), "warp_mask: mask vs displacement field");
  BinaryMask out(mask.dims(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      const Vec2 d = ddf(x, y);
      const int sx = round_half_up(x + d.x), sy = round_half_up(y + d.y);
      if (mask.dims().contains(sx, sy) && mask.test(sx, sy)) out.set(x, y);
    }
  }
  return out;
}

// Nearest-neighbor pull-back of a label image; outside reads background.
inline AnnotationImage warp_annotation(const AnnotationImage& labels, const DisplacementField& ddf) {
  require_same_dims(labels.dims(), ddf.dims(), "warp_annotation: labels vs displacement field");
  AnnotationImage out(labels.dims(), TissueClass::background);
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const Vec2 d = ddf(x, y);
      const int sx = round_half_up(x + d.x), sy = round_half_up(y + d.y);
      if (labels.dims().contains(sx, sy)) out(x, y) = labels(sx, sy);
    }
  }
  return out;
}

// Where a moving-space point lands in the warped (fixed) space: solves
// q + ddf(q) = p by fixed-point iteration.
inline Vec2 transport_point(const DisplacementField& ddf, Vec2 p, int iterations = 50) {
  Vec2 q = p;
  for (int k = 0; k < iterations; ++k) {
    const Vec2 next = p - sample_bilinear(ddf, q.x, q.y);
    const bool settled = norm(next - q) < 1e-10;
    q = next;
    if (settled) break;
  }
  return q;
}

// Majority vote over the source pixels whose centers fall in each target
// pixel; ties go to the lower class code. Upsampling picks the nearest pixel.
inline AnnotationImage resample_annotation(const AnnotationImage& labels, Dims dims) {
  if (labels.dims() == dims) return labels;
  AnnotationImage out(dims, TissueClass::background);
  const double sx = static_cast<double>(labels.width()) / dims.width;
  const double sy = static_cast<double>(labels.height()) / dims.height;
  for (int y = 0; y < dims.height; ++y) {
    int y0 = static_cast<int>(std::ceil(y * sy - 0.5));
    int y1 = static_cast<int>(std::ceil((y + 1) * sy - 0.5));
    for (int x = 0; x < dims.width; ++x) {
      int x0 = static_cast<int>(std::ceil(x * sx - 0.5));
      int x1 = static_cast<int>(std::ceil((x + 1) * sx - 0.5));
      std::array<int, kTissueClassCount> votes{};
      int total = 0;
      for (int v = y0; v < y1; ++v) {
        for (int u = x0; u < x1; ++u) {
          if (!labels.dims().contains(u, v)) continue;
          ++votes[static_cast<std::size_t>(labels(u, v))];
          ++total;
        }
      }
      if (total == 0) {
        const Vec2 src = rescale_point({static_cast<double>(x), static_cast<double>(y)}, dims, labels.dims());
        out(x, y) = labels.clamped(round_half_up(src.x), round_half_up(src.y));
        continue;
      }
      const auto best = std::max_element(votes.begin(), votes.end());
      out(x, y) = static_cast<TissueClass>(best - votes.begin());
    }
  }
  return out;
}

inline constexpr double kOffTissueFraction = 0.5;

struct PoiLabels {
  int poi_id = 0;
  Vec2 center_registered;
  std::array<std::size_t, kTissueClassCount> counts{};  // indexed by TissueClass
  std::size_t pixel_count = 0;
  double background_fraction = 0.0;
  std::map<std::string, double> percentages;  // non-background classes present
  std::vector<std::string> flags;             // "poi_lost", "off_tissue", "clipped"

  [[nodiscard]] bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

struct LabelReport {
  std::vector<PoiLabels> pois;
};

// Attributes every set mask pixel to the nearest point (within 2r + 2
// pixels; ties to the earlier point) and tallies annotation classes per
// point. Percentages are over non-background pixels. `points` carry their
// centers in mask/annotation space.
inline LabelReport compute_label_percentages(const BinaryMask& mask, const AnnotationImage& annotation,
                                             std::span<const MeasurementPoint> points) {
  require_same_dims(mask.dims(), annotation.dims(), "compute_label_percentages: mask vs annotation");
  LabelReport report;
  report.pois.resize(points.size());
  std::vector<Vec2> centroid_sum(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) report.pois[k].poi_id = points[k].id;

  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.test(x, y)) continue;
      std::size_t owner = points.size();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < points.size(); ++k) {
        const double d = norm(Vec2{static_cast<double>(x), static_cast<double>(y)} - points[k].center);
        if (d > 2.0 * points[k].radius + 2.0) continue;
        if (d < best) {
          best = d;
          owner = k;
        }
      }
      if (owner == points.size()) continue;
      auto& poi = report.pois[owner];
      ++poi.counts[static_cast<std::size_t>(annotation(x, y))];
      ++poi.pixel_count;
      centroid_sum[owner] = centroid_sum[owner] + Vec2{static_cast<double>(x), static_cast<double>(y)};
    }
  }

  for (std::size_t k = 0; k < points.size(); ++k) {
    auto& poi = report.pois[k];
    if (poi.pixel_count == 0) {
      poi.center_registered = points[k].center;
      poi.flags.emplace_back("poi_lost");
      continue;
    }
    const double n = static_cast<double>(poi.pixel_count);
    poi.center_registered = (1.0 / n) * centroid_sum[k];
    const std::size_t background = poi.counts[static_cast<std::size_t>(TissueClass::background)];
    poi.background_fraction = static_cast<double>(background) / n;
    const std::size_t tissue = poi.pixel_count - background;
    for (auto c : kAllTissueClasses) {
      if (c == TissueClass::background) continue;
      const auto count = poi.counts[static_cast<std::size_t>(c)];
      if (count == 0) continue;
      poi.percentages[std::string(tissue_class_name(c))] =
          100.0 * static_cast<double>(count) / static_cast<double>(tissue);
    }
    if (poi.background_fraction > kOffTissueFraction) poi.flags.emplace_back("off_tissue");
  }
  return report;
}

// Direct lookup: tallies the annotation under each point's own disk in the
// annotation's frame, with no transport.
inline LabelReport lookup_labels(const AnnotationImage& annotation, std::span<const MeasurementPoint> points,
                                 double radius) {
  const auto disks = rasterize_disks(points, annotation.dims(), radius);
  std::vector<MeasurementPoint> sized(points.begin(), points.end());
  for (auto& p : sized) p.radius = radius;
  return compute_label_percentages(disks.mask, annotation, sized);
}

}  // namespace ppm
