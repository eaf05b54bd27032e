#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace npflow {

/// Running trapezoid integral; out[i] = integral from times[0] to times[i].
inline std::vector<double> cumulative_trapezoid(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw std::invalid_argument("cumulative_trapezoid: size mismatch");
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t i = 1; i < t.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return out;
}

namespace detail {

// Integral over [t[i], t[i+1]] of the quadratic through samples a, b, c.
inline double quadratic_piece(std::span<const double> t, std::span<const double> y, std::size_t i,
                              std::size_t a, std::size_t b, std::size_t c) {
  const double t0 = t[a], t1 = t[b], t2 = t[c];
  const double d01 = (y[b] - y[a]) / (t1 - t0);
  const double d12 = (y[c] - y[b]) / (t2 - t1);
  const double d012 = (d12 - d01) / (t2 - t0);
  // P(t) = y_a + d01 (t - t0) + d012 (t - t0)(t - t1), with u = t - t[i]
  const double h = t[i + 1] - t[i];
  const double alpha = t[i] - t0;
  const double beta = t[i] - t1;
  const double lin = h * h / 2.0 + alpha * h;
  const double quad = h * h * h / 3.0 + (alpha + beta) * h * h / 2.0 + alpha * beta * h;
  return y[a] * h + d01 * lin + d012 * quad;
}

}  // namespace detail

/// Running integral from piecewise quadratic interpolation. Each interval averages
/// the two three-point stencils that contain it (one at the ends), so smooth data
/// integrate to roughly fourth order on uniform grids. Falls back to trapezoid for
/// two samples.
inline std::vector<double> cumulative_quadratic(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size()) throw std::invalid_argument("cumulative_quadratic: size mismatch");
  const std::size_t n = t.size();
  if (n < 3) return cumulative_trapezoid(t, y);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double piece;
    const bool left = i >= 1 && std::isfinite(y[i - 1]);
    const bool right = i + 2 < n && std::isfinite(y[i + 2]);
    if (!std::isfinite(y[i]) || !std::isfinite(y[i + 1])) {
      piece = 0.5 * (t[i + 1] - t[i]) * (y[i] + y[i + 1]);
    } else if (left && right) {
      piece = 0.5 * (detail::quadratic_piece(t, y, i, i - 1, i, i + 1) +
                     detail::quadratic_piece(t, y, i, i, i + 1, i + 2));
    } else if (right) {
      piece = detail::quadratic_piece(t, y, i, i, i + 1, i + 2);
    } else if (left) {
      piece = detail::quadratic_piece(t, y, i, i - 1, i, i + 1);
    } else {
      piece = 0.5 * (t[i + 1] - t[i]) * (y[i] + y[i + 1]);
    }
    out[i + 1] = out[i] + piece;
  }
  return out;
}

}  // namespace npflow
