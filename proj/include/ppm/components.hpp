#pragma once

// Connected-component labelling on binary masks.

#include <cstdint>
#include <vector>

#include "ppm/core.hpp"

namespace ppm {

enum class Connectivity { four = 4, eight = 8 };

struct Component {
  int label = 0;  // 1-based
  std::size_t area = 0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  bool touches_border = false;
};

struct ComponentLabels {
  Raster<int> labels;  // 0 = unset pixel
  std::vector<Component> components;  // components[k].label == k + 1
};

// Labels are assigned in raster-scan order of each component's first pixel.
inline ComponentLabels label_components(const BinaryMask& mask,
                                        Connectivity conn = Connectivity::eight) {
  const int w = mask.width(), h = mask.height();
  ComponentLabels out{Raster<int>(w, h, 0), {}};
  std::vector<std::pair<int, int>> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.test(x, y) || out.labels(x, y) != 0) continue;
      Component c;
      c.label = static_cast<int>(out.components.size()) + 1;
      c.min_x = c.max_x = x;
      c.min_y = c.max_y = y;
      double sx = 0, sy = 0;
      out.labels(x, y) = c.label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        ++c.area;
        sx += px;
        sy += py;
        c.min_x = std::min(c.min_x, px);
        c.max_x = std::max(c.max_x, px);
        c.min_y = std::min(c.min_y, py);
        c.max_y = std::max(c.max_y, py);
        if (px == 0 || py == 0 || px == w - 1 || py == h - 1) c.touches_border = true;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (conn == Connectivity::four && dx != 0 && dy != 0) continue;
            const int nx = px + dx, ny = py + dy;
            if (!mask.dims().contains(nx, ny)) continue;
            if (!mask.test(nx, ny) || out.labels(nx, ny) != 0) continue;
            out.labels(nx, ny) = c.label;
            stack.emplace_back(nx, ny);
          }
        }
      }
      c.centroid_x = sx / static_cast<double>(c.area);
      c.centroid_y = sy / static_cast<double>(c.area);
      out.components.push_back(c);
    }
  }
  return out;
}

// Keeps only the largest 8-connected component (first in scan order on ties).
inline BinaryMask keep_largest_component(const BinaryMask& mask) {
  const auto cc = label_components(mask, Connectivity::eight);
  BinaryMask out(mask.dims(), 0);
  if (cc.components.empty()) return out;
  int best = 0;
  for (const auto& c : cc.components) {
    if (best == 0 || c.area > cc.components[static_cast<std::size_t>(best - 1)].area) best = c.label;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.storage()[i] = cc.labels.storage()[i] == best ? 1 : 0;
  }
  return out;
}

// Sets every unset pixel not 4-connected to the image border.
inline BinaryMask fill_holes(const BinaryMask& mask) {
  BinaryMask inverse(mask.dims(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) inverse.storage()[i] = mask.storage()[i] ? 0 : 1;
  const auto cc = label_components(inverse, Connectivity::four);
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int l = cc.labels.storage()[i];
    if (l != 0 && !cc.components[static_cast<std::size_t>(l - 1)].touches_border) out.storage()[i] = 1;
  }
  return out;
}

}  // namespace ppm
