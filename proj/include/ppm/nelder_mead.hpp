#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>

namespace ppm {

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double f_tolerance = 1e-16;  // absolute spread of simplex values
  double x_tolerance = 1e-12;  // max vertex distance from the best vertex
  double initial_step = 0.1;
  int restarts = 3;            // re-seed the simplex around the best point
};

template <std::size_t N>
struct NelderMeadResult {
  std::array<double, N> x{};
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Derivative-free downhill simplex (standard reflection/expansion/contraction/
// shrink coefficients 1, 2, 0.5, 0.5). `steps` gives the per-coordinate
// initial simplex offsets.
template <std::size_t N, typename F>
NelderMeadResult<N> nelder_mead(F&& objective, std::array<double, N> start,
                                std::array<double, N> steps,
                                const NelderMeadOptions& opts = {}) {
  using Point = std::array<double, N>;
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  NelderMeadResult<N> result;
  result.x = start;
  result.value = objective(start);
  result.evaluations = 1;

  auto eval = [&](const Point& p) {
    ++result.evaluations;
    return objective(p);
  };

  for (int round = 0; round <= opts.restarts; ++round) {
    std::array<Point, N + 1> simplex;
    std::array<double, N + 1> values;
    simplex[0] = result.x;
    values[0] = result.value;
    for (std::size_t i = 0; i < N; ++i) {
      simplex[i + 1] = result.x;
      simplex[i + 1][i] += steps[i];
      values[i + 1] = eval(simplex[i + 1]);
    }

    std::array<std::size_t, N + 1> order;
    bool converged = false;
    while (result.evaluations < opts.max_evaluations) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      const std::size_t best = order.front(), worst = order.back(),
                        second_worst = order[N - 1];

      double x_spread = 0.0;
      for (std::size_t i = 0; i <= N; ++i) {
        for (std::size_t k = 0; k < N; ++k) {
          x_spread = std::max(x_spread, std::abs(simplex[i][k] - simplex[best][k]));
        }
      }
      if (values[worst] - values[best] <= opts.f_tolerance || x_spread <= opts.x_tolerance) {
        converged = true;
        break;
      }

      Point centroid{};
      for (std::size_t i = 0; i <= N; ++i) {
        if (i == worst) continue;
        for (std::size_t k = 0; k < N; ++k) centroid[k] += simplex[i][k] / static_cast<double>(N);
      }
      auto along = [&](double t) {
        Point p;
        for (std::size_t k = 0; k < N; ++k) p[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
        return p;
      };

      const Point reflected = along(-kReflect);
      const double f_reflected = eval(reflected);
      if (f_reflected < values[best]) {
        const Point expanded = along(-kExpand);
        const double f_expanded = eval(expanded);
        if (f_expanded < f_reflected) {
          simplex[worst] = expanded;
          values[worst] = f_expanded;
        } else {
          simplex[worst] = reflected;
          values[worst] = f_reflected;
        }
        continue;
      }
      if (f_reflected < values[second_worst]) {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
        continue;
      }
      const bool outside = f_reflected < values[worst];
      const Point contracted = along(outside ? -kContract : kContract);
      const double f_contracted = eval(contracted);
      if (f_contracted < (outside ? f_reflected : values[worst])) {
        simplex[worst] = contracted;
        values[worst] = f_contracted;
        continue;
      }
      for (std::size_t i = 0; i <= N; ++i) {
        if (i == best) continue;
        for (std::size_t k = 0; k < N; ++k) {
          simplex[i][k] = simplex[best][k] + kShrink * (simplex[i][k] - simplex[best][k]);
        }
        values[i] = eval(simplex[i]);
      }
    }

    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best_idx = static_cast<std::size_t>(best_it - values.begin());
    const bool improved = values[best_idx] < result.value;
    if (values[best_idx] <= result.value) {
      result.x = simplex[best_idx];
      result.value = values[best_idx];
    }
    result.converged = converged;
    if (!improved && converged) break;
    if (result.evaluations >= opts.max_evaluations) break;
    for (auto& s : steps) s *= 0.5;
  }
  return result;
}

}  // namespace ppm
