#pragma once

// Independent reference implementations and fixtures shared by the tests.

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ppm/core.hpp"

namespace ppm::testing_support {

// Straightforward MI: joint counts in a std::map keyed by bin pair.
inline double brute_force_mi(const GrayImage& a, const GrayImage& b, int bins) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    int ia = static_cast<int>(std::floor(a.storage()[i] * bins));
    int ib = static_cast<int>(std::floor(b.storage()[i] * bins));
    if (ia >= bins) ia = bins - 1;
    if (ib >= bins) ib = bins - 1;
    joint[{ia, ib}] += 1.0;
    pa[ia] += 1.0;
    pb[ib] += 1.0;
  }
  double mi = 0.0;
  for (const auto& [k, c] : joint) {
    const double pij = c / n;
    mi += pij * std::log(pij / ((pa[k.first] / n) * (pb[k.second] / n)));
  }
  return mi;
}

inline double brute_force_entropy(const GrayImage& a, int bins) {
  std::map<int, double> p;
  for (double v : a.storage()) {
    int i = static_cast<int>(std::floor(v * bins));
    if (i >= bins) i = bins - 1;
    p[i] += 1.0;
  }
  double h = 0.0;
  for (const auto& [k, c] : p) {
    const double q = c / static_cast<double>(a.size());
    h -= q * std::log(q);
  }
  return h;
}

// Dice through explicit coordinate sets.
inline double brute_force_dice(const BinaryMask& a, const BinaryMask& b) {
  std::set<std::pair<int, int>> sa, sb, both;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a(x, y)) sa.insert({x, y});
      if (b(x, y)) sb.insert({x, y});
      if (a(x, y) && b(x, y)) both.insert({x, y});
    }
  }
  if (sa.empty() && sb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

// Lattice points within `r` of `c`, by scanning a generous box.
inline std::set<std::pair<int, int>> lattice_disk(double cx, double cy, double r) {
  std::set<std::pair<int, int>> out;
  const int lo_x = static_cast<int>(cx - r) - 2, hi_x = static_cast<int>(cx + r) + 2;
  const int lo_y = static_cast<int>(cy - r) - 2, hi_y = static_cast<int>(cy + r) + 2;
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) out.insert({x, y});
    }
  }
  return out;
}

inline GrayImage random_gray(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage g(w, h);
  for (auto& v : g.storage()) v = u(rng);
  return g;
}

inline BinaryMask random_mask(int w, int h, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  BinaryMask m(Dims{w, h}, 0);
  for (auto& v : m.storage()) v = coin(rng) ? 1 : 0;
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("ppm-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ppm::testing_support
