#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

#include "leafid/imaging.hpp"

namespace leafid {

struct HullFeatures {
  double solidity = 0.0;
  double convexity = 0.0;
  std::vector<PixelPoint> hull_vertices;
};

/// Contour-roughness moments of the radial signature. mf = f3 - f1.
struct ShenFeatures {
  double f1 = 0.0;
  double f2 = 0.0;
  double f3 = 0.0;
  double mf = 0.0;
};

struct AuxShapeFeatures {
  double eccentricity = 0.0;
  double roundness = 0.0;
  double dispersion = 0.0;
};

namespace detail {

template <typename T>
using wide_t = std::conditional_t<std::is_integral_v<T>, long long, double>;

template <typename T>
wide_t<T> cross(const Point2<T>& o, const Point2<T>& a, const Point2<T>& b) {
  using W = wide_t<T>;
  return (W(a.x) - W(o.x)) * (W(b.y) - W(o.y)) - (W(a.y) - W(o.y)) * (W(b.x) - W(o.x));
}

template <typename T>
wide_t<T> squared_distance(const Point2<T>& a, const Point2<T>& b) {
  using W = wide_t<T>;
  const W dx = W(a.x) - W(b.x);
  const W dy = W(a.y) - W(b.y);
  return dx * dx + dy * dy;
}

}  // namespace detail

/// Sum of values in ascending order, so the result does not depend on the
/// order in which the terms were produced.
inline double order_free_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

/// Graham scan. Returns the strictly convex hull (collinear points dropped)
/// in positive-area order starting from the lowest-y, then lowest-x point.
/// The result does not depend on the order of the input points.
template <typename T>
std::vector<Point2<T>> convex_hull(std::span<const Point2<T>> input) {
  std::vector<Point2<T>> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw Error(Errc::degenerate_hull, "fewer than 3 distinct points");

  const Point2<T> pivot = pts.front();
  std::sort(pts.begin() + 1, pts.end(), [&](const auto& a, const auto& b) {
    const auto c = detail::cross(pivot, a, b);
    if (c != 0) return c > 0;
    return detail::squared_distance(pivot, a) < detail::squared_distance(pivot, b);
  });

  std::vector<Point2<T>> hull;
  hull.reserve(pts.size());
  for (const auto& p : pts) {
    while (hull.size() >= 2 && detail::cross(hull[hull.size() - 2], hull.back(), p) <= 0) hull.pop_back();
    hull.push_back(p);
  }
  if (hull.size() < 3) throw Error(Errc::degenerate_hull, "all points are collinear");
  return hull;
}

template <typename T>
std::vector<Point2<T>> convex_hull(const std::vector<Point2<T>>& input) {
  return convex_hull(std::span<const Point2<T>>(input));
}

/// Shoelace area of a closed polygon (absolute value).
template <typename T>
double polygon_area(std::span<const Point2<T>> poly) {
  detail::wide_t<T> twice = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    twice += detail::wide_t<T>(a.x) * b.y - detail::wide_t<T>(b.x) * a.y;
  }
  return std::abs(static_cast<double>(twice)) / 2.0;
}

template <typename T>
double polygon_perimeter(std::span<const Point2<T>> poly) {
  std::vector<double> lengths(poly.size());
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    lengths[i] = std::hypot(static_cast<double>(b.x) - a.x, static_cast<double>(b.y) - a.y);
  }
  return order_free_sum(std::move(lengths));
}

/// Boundary length of a traced contour: the closed polygon through a
/// circular moving average of the contour points, with a half-window of
/// 1% of the contour length (at least 1 point).
///
/// Raw chain-code length (1 or sqrt 2 per step) measures the pixel
/// staircase rather than the outline; it overestimates a digital circle by
/// about 5% and changes by ~20% when the mask is upscaled. Averaging over a
/// window proportional to the contour length removes the staircase at any
/// scale.
inline double contour_perimeter(const Contour& contour) {
  const auto& pts = contour.points;
  const auto n = static_cast<long long>(pts.size());
  if (n < 2) return 0.0;
  const long long half = std::max(1LL, std::llround(0.01 * static_cast<double>(n)));
  const double window = static_cast<double>(2 * half + 1);
  const auto at = [&](long long i) { return pts[static_cast<std::size_t>(((i % n) + n) % n)]; };

  // Consecutive window sums differ by one point entering and one leaving,
  // so each smoothed step is an integer vector divided by the window.
  std::vector<double> lengths(pts.size());
  for (long long i = 0; i < n; ++i) {
    const PixelPoint in = at(i + 1 + half);
    const PixelPoint out = at(i - half);
    lengths[static_cast<std::size_t>(i)] = std::hypot(double(in.x - out.x), double(in.y - out.y)) / window;
  }
  return order_free_sum(std::move(lengths));
}

/// Solidity is leaf area over hull area; convexity is hull perimeter over
/// leaf perimeter. Leaf area is the foreground pixel count.
inline HullFeatures hull_features(const BinaryMask& mask, const Contour& contour) {
  HullFeatures out;
  out.hull_vertices = convex_hull(contour.points);
  const std::span<const PixelPoint> hull(out.hull_vertices);
  const double hull_area = polygon_area(hull);
  const double leaf_area = static_cast<double>(foreground_count(mask));
  const double perimeter = contour_perimeter(contour);
  if (!(hull_area > 0.0) || !(perimeter > 0.0)) throw Error(Errc::degenerate_hull, "hull has zero area");
  out.solidity = leaf_area / hull_area;
  out.convexity = polygon_perimeter(hull) / perimeter;
  return out;
}

/// Central moments of d(n) normalised by the mean distance. The moments are
/// taken of d / m1 - 1 over the sorted values, so reordering d, or scaling
/// it by a power of two, yields bit-identical results.
inline ShenFeatures shen_features(std::span<const double> d) {
  if (d.size() < 2) throw Error(Errc::invalid_argument, "signature too short");
  std::vector<double> sorted(d.begin(), d.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double m1 = sum / n;
  if (!(m1 > 0.0)) throw Error(Errc::empty_shape, "mean radial distance is zero");

  double s2 = 0.0;
  double s3 = 0.0;
  double s4 = 0.0;
  for (double v : sorted) {
    const double e = v / m1 - 1.0;
    const double e2 = e * e;
    s2 += e2;
    s3 += e2 * e;
    s4 += e2 * e2;
  }
  ShenFeatures f;
  f.f1 = std::sqrt(s2 / n);
  f.f2 = std::cbrt(s3 / n);
  f.f3 = std::pow(s4 / n, 0.25);
  f.mf = f.f3 - f.f1;
  return f;
}

inline ShenFeatures shen_features(const RadialSignature& sig) { return shen_features(std::span<const double>(sig.d)); }

/// Moment eccentricity, isoperimetric roundness and radial dispersion.
inline AuxShapeFeatures aux_shape_features(const BinaryMask& mask, const Contour& contour,
                                           const RadialSignature& sig) {
  const Centroid c = centroid(mask);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double dx = (x - c.anchor.x) - c.offset.x;
      const double dy = (y - c.anchor.y) - c.offset.y;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
      ++n;
    }
  }
  sxx /= static_cast<double>(n);
  syy /= static_cast<double>(n);
  sxy /= static_cast<double>(n);
  const double half_trace = 0.5 * (sxx + syy);
  const double root = std::hypot(0.5 * (sxx - syy), sxy);
  const double lmax = half_trace + root;
  const double lmin = std::max(0.0, half_trace - root);

  AuxShapeFeatures f;
  f.eccentricity = lmax > 0.0 ? std::sqrt(std::max(0.0, 1.0 - lmin / lmax)) : 0.0;

  const double perimeter = contour_perimeter(contour);
  if (!(perimeter > 0.0)) throw Error(Errc::degenerate_contour, "zero perimeter");
  f.roundness = 4.0 * std::numbers::pi * static_cast<double>(n) / (perimeter * perimeter);

  const auto [lo, hi] = std::minmax_element(sig.d.begin(), sig.d.end());
  if (lo == sig.d.end() || !(*lo > 0.0)) throw Error(Errc::empty_shape, "minimum radial distance is zero");
  f.dispersion = *hi / *lo;
  return f;
}

}  // namespace leafid
