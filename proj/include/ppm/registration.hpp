#pragma once

// Multi-modal deformable registration: image conversions, mutual
// information, Dice overlap, displacement-field warping and a
// coarse-to-fine MI maximizer that produces a dense displacement field.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "ppm/components.hpp"
#include "ppm/core.hpp"

namespace ppm {

// --------------------------------------------------------------------------
// Conversions and resampling
// --------------------------------------------------------------------------

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline GrayImage to_grayscale(const RgbImage& image) {
  GrayImage out(image.dims());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Rgb& p = image.storage()[i];
    out.storage()[i] = clamp01(0.299 * p.r + 0.587 * p.g + 0.114 * p.b);
  }
  return out;
}

// HSV saturation (max - min) / max; 0 for black pixels.
inline GrayImage saturation_channel(const RgbImage& image) {
  GrayImage out(image.dims());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const Rgb& p = image.storage()[i];
    const double hi = std::max({p.r, p.g, p.b});
    const double lo = std::min({p.r, p.g, p.b});
    out.storage()[i] = hi > 0.0 ? clamp01((hi - lo) / hi) : 0.0;
  }
  return out;
}

inline RgbImage gray_to_rgb(const GrayImage& image) {
  RgbImage out(image.dims());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image.storage()[i];
    out.storage()[i] = {v, v, v};
  }
  return out;
}

namespace detail {

template <typename T>
T lerp_value(const T& a, const T& b, double t) {
  if constexpr (std::is_same_v<T, double>) {
    return a + t * (b - a);
  } else if constexpr (std::is_same_v<T, Vec2>) {
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  } else {
    return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
  }
}

}  // namespace detail

// Bilinear sample at continuous pixel coordinates; out-of-range samples
// clamp to the nearest edge pixel. Integer coordinates return the pixel
// value exactly.
template <typename T>
T sample_bilinear(const Raster<T>& img, double x, double y) {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double tx = x - fx0, ty = y - fy0;
  const T& p00 = img.clamped(x0, y0);
  if (tx == 0.0 && ty == 0.0) return p00;
  const T& p10 = img.clamped(x0 + 1, y0);
  const T& p01 = img.clamped(x0, y0 + 1);
  const T& p11 = img.clamped(x0 + 1, y0 + 1);
  return detail::lerp_value(detail::lerp_value(p00, p10, tx), detail::lerp_value(p01, p11, tx), ty);
}

// Pixel-center aligned bilinear resampling.
template <typename T>
Raster<T> resize_raster(const Raster<T>& image, Dims dims) {
  if (dims.width < 1 || dims.height < 1) throw InvalidArgument("resize target must be positive");
  if (dims == image.dims()) return image;
  Raster<T> out(dims);
  const double sx = static_cast<double>(image.width()) / dims.width;
  const double sy = static_cast<double>(image.height()) / dims.height;
  for (int y = 0; y < dims.height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < dims.width; ++x) {
      out(x, y) = sample_bilinear(image, (x + 0.5) * sx - 0.5, src_y);
    }
  }
  return out;
}

inline GrayImage resize(const GrayImage& image, Dims dims) {
  if (dims.width < 2 || dims.height < 2) {
    throw InvalidArgument("resize target must be at least 2x2, got " + to_string(dims));
  }
  GrayImage out = resize_raster(image, dims);
  for (auto& v : out.storage()) v = clamp01(v);
  return out;
}

inline RgbImage resize(const RgbImage& image, Dims dims) {
  if (dims.width < 2 || dims.height < 2) {
    throw InvalidArgument("resize target must be at least 2x2, got " + to_string(dims));
  }
  return resize_raster(image, dims);
}

// Maps a point between pixel grids with the same pixel-center convention
// as resize_raster.
inline Vec2 rescale_point(Vec2 p, Dims from, Dims to) {
  return {(p.x + 0.5) * to.width / from.width - 0.5, (p.y + 0.5) * to.height / from.height - 0.5};
}

// --------------------------------------------------------------------------
// Mutual information
// --------------------------------------------------------------------------

inline int intensity_bin(double v, int bins) {
  const int b = static_cast<int>(v * bins);
  return std::clamp(b, 0, bins - 1);
}

namespace detail {

// Sum in a canonical order so that permuted term lists give identical sums.
inline double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace detail

// Entropy (nats) of the equal-width histogram of `image` on [0, 1].
inline double histogram_entropy(const GrayImage& image, int bins) {
  if (bins < 2) throw InvalidArgument("histogram needs at least 2 bins");
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : image.storage()) ++counts[static_cast<std::size_t>(intensity_bin(v, bins))];
  const double n = static_cast<double>(image.size());
  std::vector<double> terms;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    terms.push_back(-p * std::log(p));
  }
  return detail::canonical_sum(terms);
}

// MI (nats) of the joint equal-width histogram. Symmetric bit-for-bit.
inline double mutual_information(const GrayImage& a, const GrayImage& b, int bins) {
  require_same_dims(a.dims(), b.dims(), "mutual_information");
  if (bins < 2) throw InvalidArgument("mutual_information needs at least 2 bins");
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::size_t> joint(nb * nb, 0), ha(nb, 0), hb(nb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ia = static_cast<std::size_t>(intensity_bin(a.storage()[i], bins));
    const auto ib = static_cast<std::size_t>(intensity_bin(b.storage()[i], bins));
    ++joint[ia * nb + ib];
    ++ha[ia];
    ++hb[ib];
  }
  const double n = static_cast<double>(a.size());
  std::vector<double> terms;
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const auto c = joint[i * nb + j];
      if (c == 0) continue;
      const double pij = static_cast<double>(c) / n;
      const double pi = static_cast<double>(ha[i]) / n;
      const double pj = static_cast<double>(hb[j]) / n;
      terms.push_back(pij * std::log(pij / (pi * pj)));
    }
  }
  return std::max(0.0, detail::canonical_sum(terms));
}

// --------------------------------------------------------------------------
// Dice
// --------------------------------------------------------------------------

// 2|A and B| / (|A| + |B|); 1 when both masks are empty.
inline double dice_score(const BinaryMask& a, const BinaryMask& b) {
  require_same_dims(a.dims(), b.dims(), "dice_score");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool pa = a.storage()[i] != 0, pb = b.storage()[i] != 0;
    na += pa;
    nb += pb;
    inter += pa && pb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

inline constexpr double kForegroundThreshold = 0.05;

// Median of the outermost pixel ring; used as the background level.
inline double border_median(const GrayImage& image) {
  std::vector<double> ring;
  const int w = image.width(), h = image.height();
  for (int x = 0; x < w; ++x) {
    ring.push_back(image(x, 0));
    if (h > 1) ring.push_back(image(x, h - 1));
  }
  for (int y = 1; y + 1 < h; ++y) {
    ring.push_back(image(0, y));
    if (w > 1) ring.push_back(image(w - 1, y));
  }
  const auto mid = ring.begin() + static_cast<std::ptrdiff_t>(ring.size() / 2);
  std::nth_element(ring.begin(), mid, ring.end());
  return *mid;
}

// Tissue foreground: |I - background| > 0.05 with the background taken as
// the border median, reduced to the largest component with holes filled.
inline BinaryMask foreground_mask(const GrayImage& image,
                                  double threshold = kForegroundThreshold) {
  const double bg = border_median(image);
  BinaryMask raw(image.dims(), 0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    raw.storage()[i] = std::abs(image.storage()[i] - bg) > threshold ? 1 : 0;
  }
  return fill_holes(keep_largest_component(raw));
}

inline double foreground_dice(const GrayImage& a, const GrayImage& b) {
  return dice_score(foreground_mask(a), foreground_mask(b));
}

// --------------------------------------------------------------------------
// Warping
// --------------------------------------------------------------------------

// output(p) = moving(p + ddf(p)), bilinear with edge clamping.
template <typename T>
Raster<T> warp_raster(const Raster<T>& moving, const DisplacementField& ddf) {
  require_same_dims(moving.dims(), ddf.dims(), "warp: image vs displacement field");
  Raster<T> out(moving.dims());
  for (int y = 0; y < moving.height(); ++y) {
    for (int x = 0; x < moving.width(); ++x) {
      const Vec2 d = ddf(x, y);
      out(x, y) = sample_bilinear(moving, x + d.x, y + d.y);
    }
  }
  return out;
}

inline GrayImage warp_image(const GrayImage& moving, const DisplacementField& ddf) {
  return warp_raster(moving, ddf);
}

inline RgbImage warp_image(const RgbImage& moving, const DisplacementField& ddf) {
  return warp_raster(moving, ddf);
}

// Mean over pixels of |d(phi)/dx|^2 + |d(phi)/dy|^2 (forward differences,
// both displacement components).
inline double gradient_energy(const DisplacementField& ddf) {
  const int w = ddf.width(), h = ddf.height();
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 p = ddf(x, y);
      if (x + 1 < w) {
        const Vec2 d = ddf(x + 1, y) - p;
        sum += d.x * d.x + d.y * d.y;
      }
      if (y + 1 < h) {
        const Vec2 d = ddf(x, y + 1) - p;
        sum += d.x * d.x + d.y * d.y;
      }
    }
  }
  return sum / static_cast<double>(ddf.size());
}

inline double mean_magnitude(const DisplacementField& ddf) {
  double s = 0.0;
  for (const auto& v : ddf.storage()) s += norm(v);
  return s / static_cast<double>(ddf.size());
}

// --------------------------------------------------------------------------
// Displacement-field estimation
// --------------------------------------------------------------------------

struct RegistrationConfig {
  int pyramid_levels = 4;
  int iterations_per_level = 200;
  int mi_bins = 32;
  double smoothness_weight = 1.0;
  double step_size = 0.5;  // proposal scale, coarsest-level pixels
  std::uint64_t seed = 0;
  Dims working_dims{256, 192};
  int control_spacing = 8;  // control-grid spacing in pixels of each level

  void validate() const {
    if (mi_bins < 2) throw InvalidArgument("registration.mi_bins must be >= 2");
    if (pyramid_levels < 1) throw InvalidArgument("registration.pyramid_levels must be >= 1");
    if (iterations_per_level < 0) throw InvalidArgument("registration.iterations_per_level must be >= 0");
    if (!(smoothness_weight >= 0.0)) throw InvalidArgument("registration.smoothness_weight must be >= 0");
    if (!(step_size > 0.0)) throw InvalidArgument("registration.step_size must be > 0");
    if (control_spacing < 2) throw InvalidArgument("registration.control_spacing must be >= 2");
    if (working_dims.width < 2 || working_dims.height < 2) {
      throw InvalidArgument("registration.working_dims must be at least 2x2");
    }
  }
};

struct RegistrationResult {
  DisplacementField ddf;
  GrayImage warped;
  double mi_initial = 0.0;
  double mi_final = 0.0;
  double dice_initial = 0.0;
  double dice_final = 0.0;
  double gradient_energy = 0.0;
  int iterations_run = 0;
  int accepted_moves = 0;
};

namespace detail {

// Control-point displacement grid with bilinear interpolation to pixels.
class ControlGrid {
 public:
  ControlGrid(Dims image, int spacing)
      : image_(image),
        spacing_(spacing),
        nx_((image.width - 1 + spacing - 1) / spacing + 1),
        ny_((image.height - 1 + spacing - 1) / spacing + 1),
        nodes_(static_cast<std::size_t>(nx_ * ny_)) {}

  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] int spacing() const { return spacing_; }
  Vec2& node(int i, int j) { return nodes_[static_cast<std::size_t>(j * nx_ + i)]; }
  [[nodiscard]] const Vec2& node(int i, int j) const {
    return nodes_[static_cast<std::size_t>(j * nx_ + i)];
  }

  // Hat-function weight of node (i, j) at pixel (x, y).
  [[nodiscard]] double weight(int i, int j, int x, int y) const {
    const double wx = 1.0 - std::abs(static_cast<double>(x - i * spacing_)) / spacing_;
    const double wy = 1.0 - std::abs(static_cast<double>(y - j * spacing_)) / spacing_;
    return wx > 0.0 && wy > 0.0 ? wx * wy : 0.0;
  }

  [[nodiscard]] DisplacementField dense() const {
    DisplacementField out(image_);
    for (int y = 0; y < image_.height; ++y) {
      const int j = y / spacing_;
      const double ty = static_cast<double>(y - j * spacing_) / spacing_;
      for (int x = 0; x < image_.width; ++x) {
        const int i = x / spacing_;
        const double tx = static_cast<double>(x - i * spacing_) / spacing_;
        const Vec2& a = node(i, j);
        const Vec2& b = node(std::min(i + 1, nx_ - 1), j);
        const Vec2& c = node(i, std::min(j + 1, ny_ - 1));
        const Vec2& d = node(std::min(i + 1, nx_ - 1), std::min(j + 1, ny_ - 1));
        out(x, y) = lerp_value(lerp_value(a, b, tx), lerp_value(c, d, tx), ty);
      }
    }
    return out;
  }

  // Sum of squared neighbor differences over spacing^2, per node.
  [[nodiscard]] double energy() const {
    double s = 0.0;
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) {
        if (i + 1 < nx_) s += sq(node(i + 1, j) - node(i, j));
        if (j + 1 < ny_) s += sq(node(i, j + 1) - node(i, j));
      }
    }
    return s / (static_cast<double>(spacing_) * spacing_ * static_cast<double>(nodes_.size()));
  }

  // Energy change from moving node (i, j) by delta.
  [[nodiscard]] double energy_delta(int i, int j, Vec2 delta) const {
    const Vec2 cur = node(i, j);
    const Vec2 moved = cur + delta;
    double d = 0.0;
    const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int ni = i + di[k], nj = j + dj[k];
      if (ni < 0 || nj < 0 || ni >= nx_ || nj >= ny_) continue;
      const Vec2& other = node(ni, nj);
      d += sq(moved - other) - sq(cur - other);
    }
    return d / (static_cast<double>(spacing_) * spacing_ * static_cast<double>(nodes_.size()));
  }

 private:
  static double sq(Vec2 v) { return v.x * v.x + v.y * v.y; }

  Dims image_;
  int spacing_;
  int nx_, ny_;
  std::vector<Vec2> nodes_;
};

// Joint histogram with running sums of n*ln(n) for O(1) MI updates.
class JointHistogram {
 public:
  JointHistogram(int bins, std::size_t samples)
      : bins_(bins),
        n_(static_cast<double>(samples)),
        joint_(static_cast<std::size_t>(bins * bins), 0),
        fixed_(static_cast<std::size_t>(bins), 0),
        moving_(static_cast<std::size_t>(bins), 0),
        nlogn_(samples + 1, 0.0) {
    for (std::size_t k = 1; k <= samples; ++k) {
      nlogn_[k] = static_cast<double>(k) * std::log(static_cast<double>(k));
    }
  }

  void add(int fixed_bin, int moving_bin) { update(fixed_bin, moving_bin, +1); }
  void remove(int fixed_bin, int moving_bin) { update(fixed_bin, moving_bin, -1); }

  void recompute_sums() {
    sum_joint_ = sum_fixed_ = sum_moving_ = 0.0;
    for (auto c : joint_) sum_joint_ += nlogn_[c];
    for (auto c : fixed_) sum_fixed_ += nlogn_[c];
    for (auto c : moving_) sum_moving_ += nlogn_[c];
  }

  [[nodiscard]] double mi() const {
    return (sum_joint_ - sum_fixed_ - sum_moving_ + nlogn_.back()) / n_;
  }

 private:
  void update(int f, int m, int sign) {
    auto& j = joint_[static_cast<std::size_t>(f * bins_ + m)];
    auto& fm = fixed_[static_cast<std::size_t>(f)];
    auto& mm = moving_[static_cast<std::size_t>(m)];
    sum_joint_ -= nlogn_[j];
    sum_fixed_ -= nlogn_[fm];
    sum_moving_ -= nlogn_[mm];
    j = static_cast<std::size_t>(static_cast<long long>(j) + sign);
    fm = static_cast<std::size_t>(static_cast<long long>(fm) + sign);
    mm = static_cast<std::size_t>(static_cast<long long>(mm) + sign);
    sum_joint_ += nlogn_[j];
    sum_fixed_ += nlogn_[fm];
    sum_moving_ += nlogn_[mm];
  }

  int bins_;
  double n_;
  std::vector<std::size_t> joint_, fixed_, moving_;
  std::vector<double> nlogn_;
  double sum_joint_ = 0.0, sum_fixed_ = 0.0, sum_moving_ = 0.0;
};

// Upsamples a coarser level's field onto a finer grid, scaling the vectors.
inline DisplacementField upsample_field(const DisplacementField& coarse, Dims fine) {
  DisplacementField out(fine);
  const double sx = static_cast<double>(fine.width) / coarse.width();
  const double sy = static_cast<double>(fine.height) / coarse.height();
  for (int y = 0; y < fine.height; ++y) {
    for (int x = 0; x < fine.width; ++x) {
      const Vec2 q = rescale_point({static_cast<double>(x), static_cast<double>(y)}, fine, coarse.dims());
      const Vec2 d = sample_bilinear(coarse, q.x, q.y);
      out(x, y) = {d.x * sx, d.y * sy};
    }
  }
  return out;
}

struct LevelOutcome {
  DisplacementField field;
  int iterations = 0;
  int accepted = 0;
};

// Stochastic accept-if-better search over control-point displacements,
// maximizing MI(fixed, warped) - lambda * grid energy.
inline LevelOutcome optimize_level(const GrayImage& fixed, const GrayImage& moving,
                                   const DisplacementField& init, const RegistrationConfig& cfg,
                                   double step, std::mt19937_64& rng) {
  const Dims dims = fixed.dims();
  const int s = cfg.control_spacing;
  ControlGrid grid(dims, s);
  for (int j = 0; j < grid.ny(); ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      grid.node(i, j) = sample_bilinear(init, i * s, j * s);
    }
  }
  DisplacementField field = grid.dense();

  const int bins = cfg.mi_bins;
  std::vector<int> fixed_bin(dims.area()), warped_bin(dims.area());
  JointHistogram hist(bins, dims.area());
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(dims.width) + static_cast<std::size_t>(x);
      const Vec2 d = field(x, y);
      fixed_bin[idx] = intensity_bin(fixed(x, y), bins);
      warped_bin[idx] = intensity_bin(sample_bilinear(moving, x + d.x, y + d.y), bins);
      hist.add(fixed_bin[idx], warped_bin[idx]);
    }
  }
  hist.recompute_sums();

  struct Change {
    std::size_t idx;
    int old_bin;
    int new_bin;
  };
  std::vector<Change> changes;
  std::vector<int> order(static_cast<std::size_t>(grid.nx() * grid.ny()));
  std::iota(order.begin(), order.end(), 0);
  std::normal_distribution<double> gauss(0.0, step);

  LevelOutcome outcome;
  const double lambda = cfg.smoothness_weight;
  for (int it = 0; it < cfg.iterations_per_level; ++it) {
    std::shuffle(order.begin(), order.end(), rng);
    int accepted_this_sweep = 0;
    for (int node_index : order) {
      const int i = node_index % grid.nx(), j = node_index / grid.nx();
      const Vec2 delta{gauss(rng), gauss(rng)};

      const int x_lo = std::max(0, (i - 1) * s + 1), x_hi = std::min(dims.width - 1, (i + 1) * s - 1);
      const int y_lo = std::max(0, (j - 1) * s + 1), y_hi = std::min(dims.height - 1, (j + 1) * s - 1);
      const double mi_before = hist.mi();
      changes.clear();
      for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
          const double w = grid.weight(i, j, x, y);
          if (w == 0.0) continue;
          const Vec2 d = field(x, y) + w * delta;
          const auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(dims.width) + static_cast<std::size_t>(x);
          const int nb = intensity_bin(sample_bilinear(moving, x + d.x, y + d.y), bins);
          if (nb == warped_bin[idx]) continue;
          hist.remove(fixed_bin[idx], warped_bin[idx]);
          hist.add(fixed_bin[idx], nb);
          changes.push_back({idx, warped_bin[idx], nb});
        }
      }
      const double gain = (hist.mi() - mi_before) - lambda * grid.energy_delta(i, j, delta);
      if (gain > 0.0) {
        grid.node(i, j) = grid.node(i, j) + delta;
        for (int y = y_lo; y <= y_hi; ++y) {
          for (int x = x_lo; x <= x_hi; ++x) {
            const double w = grid.weight(i, j, x, y);
            if (w != 0.0) field(x, y) = field(x, y) + w * delta;
          }
        }
        for (const auto& c : changes) warped_bin[c.idx] = c.new_bin;
        ++accepted_this_sweep;
      } else {
        for (auto it_c = changes.rbegin(); it_c != changes.rend(); ++it_c) {
          hist.remove(fixed_bin[it_c->idx], it_c->new_bin);
          hist.add(fixed_bin[it_c->idx], it_c->old_bin);
        }
      }
    }
    hist.recompute_sums();
    outcome.accepted += accepted_this_sweep;
    ++outcome.iterations;
  }
  outcome.field = grid.dense();
  return outcome;
}

// Components become float32-representable so a field saved as f32 reloads
// exactly.
inline void round_to_float(DisplacementField& ddf) {
  for (auto& v : ddf.storage()) {
    v = {static_cast<double>(static_cast<float>(v.x)), static_cast<double>(static_cast<float>(v.y))};
  }
}

inline std::vector<GrayImage> build_pyramid(const GrayImage& image, int levels) {
  std::vector<GrayImage> pyramid{image};
  for (int k = 1; k < levels; ++k) {
    const GrayImage& prev = pyramid.back();
    pyramid.push_back(resize_raster(prev, {(prev.width() + 1) / 2, (prev.height() + 1) / 2}));
  }
  return pyramid;
}

// Number of usable pyramid levels: every level keeps at least 2 control cells
// per axis.
inline int usable_levels(Dims dims, const RegistrationConfig& cfg) {
  int levels = 1;
  Dims d = dims;
  while (levels < cfg.pyramid_levels) {
    const Dims next{(d.width + 1) / 2, (d.height + 1) / 2};
    if (next.width < 2 * cfg.control_spacing || next.height < 2 * cfg.control_spacing) break;
    d = next;
    ++levels;
  }
  return levels;
}

}  // namespace detail

// Dense displacement field aligning `moving` to `fixed`. Both images must
// already be at cfg.working_dims. The returned field never lowers MI
// relative to the identity field: the best full-resolution iterate (by MI)
// among the identity and every pyramid level is returned. Field components
// are rounded to float32.
inline RegistrationResult estimate_ddf(const GrayImage& fixed, const GrayImage& moving,
                                       const RegistrationConfig& cfg) {
  cfg.validate();
  require_same_dims(fixed.dims(), cfg.working_dims, "fixed image vs working_dims");
  require_same_dims(moving.dims(), cfg.working_dims, "moving image vs working_dims");

  RegistrationResult result;
  const Dims full = fixed.dims();
  result.mi_initial = mutual_information(fixed, moving, cfg.mi_bins);
  const BinaryMask fixed_mask = foreground_mask(fixed);
  result.dice_initial = dice_score(fixed_mask, foreground_mask(moving));

  const int levels = detail::usable_levels(full, cfg);
  const auto fixed_pyr = detail::build_pyramid(fixed, levels);
  const auto moving_pyr = detail::build_pyramid(moving, levels);

  std::mt19937_64 rng(cfg.seed);
  DisplacementField best(full, Vec2{});
  double best_mi = result.mi_initial;
  DisplacementField current(fixed_pyr.back().dims(), Vec2{});
  double step = cfg.step_size;

  for (int level = levels - 1; level >= 0; --level) {
    const auto& f = fixed_pyr[static_cast<std::size_t>(level)];
    const auto& m = moving_pyr[static_cast<std::size_t>(level)];
    if (current.dims() != f.dims()) current = detail::upsample_field(current, f.dims());
    auto outcome = detail::optimize_level(f, m, current, cfg, step, rng);
    current = std::move(outcome.field);
    result.iterations_run += outcome.iterations;
    result.accepted_moves += outcome.accepted;

    DisplacementField at_full = level == 0 ? current : detail::upsample_field(current, full);
    detail::round_to_float(at_full);
    const double mi = mutual_information(fixed, warp_image(moving, at_full), cfg.mi_bins);
    if (mi >= best_mi) {
      best_mi = mi;
      best = std::move(at_full);
    }
    step *= 0.5;
  }

  result.ddf = std::move(best);
  result.warped = warp_image(moving, result.ddf);
  result.mi_final = mutual_information(fixed, result.warped, cfg.mi_bins);
  result.dice_final = dice_score(fixed_mask, foreground_mask(result.warped));
  result.gradient_energy = gradient_energy(result.ddf);
  return result;
}

}  // namespace ppm
