#pragma once

// Shared raster types and error hierarchy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ppm {

// --------------------------------------------------------------------------
// Errors
// --------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PPM_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

PPM_DEFINE_ERROR(DegenerateSamples)
PPM_DEFINE_ERROR(DegenerateConfiguration)
PPM_DEFINE_ERROR(DimensionMismatch)
PPM_DEFINE_ERROR(EmptyInput)
PPM_DEFINE_ERROR(InvalidArgument)
PPM_DEFINE_ERROR(PoiOutOfBounds)
PPM_DEFINE_ERROR(NoPoisFound)
PPM_DEFINE_ERROR(AmbiguousPois)
PPM_DEFINE_ERROR(IoError)

#undef PPM_DEFINE_ERROR

// --------------------------------------------------------------------------
// Raster
// --------------------------------------------------------------------------

struct Dims {
  int width = 0;
  int height = 0;

  [[nodiscard]] std::size_t area() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  [[nodiscard]] bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(Dims d) {
  return std::to_string(d.width) + "x" + std::to_string(d.height);
}

// Row-major 2D buffer.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{}) : dims_{width, height} {
    if (width <= 0 || height <= 0) {
      throw InvalidArgument("raster dimensions must be positive, got " + to_string(dims_));
    }
    data_.assign(dims_.area(), fill);
  }
  explicit Raster(Dims d, T fill = T{}) : Raster(d.width, d.height, fill) {}

  [[nodiscard]] int width() const { return dims_.width; }
  [[nodiscard]] int height() const { return dims_.height; }
  [[nodiscard]] Dims dims() const { return dims_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  // Clamped read: out-of-range coordinates snap to the nearest edge pixel.
  const T& clamped(int x, int y) const {
    x = std::clamp(x, 0, dims_.width - 1);
    y = std::clamp(y, 0, dims_.height - 1);
    return data_[index(x, y)];
  }

  [[nodiscard]] std::span<T> pixels() { return data_; }
  [[nodiscard]] std::span<const T> pixels() const { return data_; }
  [[nodiscard]] std::vector<T>& storage() { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  [[nodiscard]] std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) +
           static_cast<std::size_t>(x);
  }

  Dims dims_{};
  std::vector<T> data_;
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

/// Intensities in [0, 1].
using GrayImage = Raster<double>;
/// Channels in [0, 1].
using RgbImage = Raster<Rgb>;
/// Per-pixel (dx, dy) in pixels. Pull-back convention: the warped image at
/// p samples the moving image at p + ddf(p).
using DisplacementField = Raster<Vec2>;

class BinaryMask : public Raster<std::uint8_t> {
 public:
  using Raster<std::uint8_t>::Raster;

  [[nodiscard]] bool test(int x, int y) const { return (*this)(x, y) != 0; }
  void set(int x, int y, bool v = true) { (*this)(x, y) = v ? 1 : 0; }
  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(
        std::count_if(pixels().begin(), pixels().end(), [](std::uint8_t b) { return b != 0; }));
  }
};

// --------------------------------------------------------------------------
// Tissue classes
// --------------------------------------------------------------------------

enum class TissueClass : std::uint8_t {
  background = 0,
  invasive_carcinoma = 1,
  dcis = 2,
  connective = 3,
  fat = 4,
};

inline constexpr std::array<TissueClass, 5> kAllTissueClasses = {
    TissueClass::background, TissueClass::invasive_carcinoma, TissueClass::dcis,
    TissueClass::connective, TissueClass::fat};

inline constexpr std::size_t kTissueClassCount = kAllTissueClasses.size();

inline std::string_view tissue_class_name(TissueClass c) {
  switch (c) {
    case TissueClass::background: return "background";
    case TissueClass::invasive_carcinoma: return "invasive_carcinoma";
    case TissueClass::dcis: return "DCIS";
    case TissueClass::connective: return "connective";
    case TissueClass::fat: return "fat";
  }
  return "background";
}

inline std::optional<TissueClass> parse_tissue_class(std::string_view name) {
  for (auto c : kAllTissueClasses) {
    if (tissue_class_name(c) == name) return c;
  }
  if (name == "dcis") return TissueClass::dcis;
  return std::nullopt;
}

using AnnotationImage = Raster<TissueClass>;

inline void require_same_dims(Dims a, Dims b, std::string_view what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace ppm
