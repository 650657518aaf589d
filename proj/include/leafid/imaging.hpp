#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "leafid/image.hpp"

namespace leafid {

/// Ordered boundary pixels of one foreground region. Consecutive points are
/// 8-neighbours and the last point is adjacent to the first.
struct Contour {
  std::vector<PixelPoint> points;

  std::size_t size() const noexcept { return points.size(); }
};

/// Centroid stored as an integer anchor (bounding-box corner of the region)
/// plus a real offset. Everything downstream measures positions relative to
/// the anchor, so integer translations of the input leave the results
/// bit-identical.
struct Centroid {
  PixelPoint anchor;
  RealPoint offset;

  double x() const noexcept { return anchor.x + offset.x; }
  double y() const noexcept { return anchor.y + offset.y; }
};

/// Centroid-distance signature d(n) of a resampled boundary.
struct RadialSignature {
  std::vector<double> d;
  RealPoint centroid;
  double m1 = 0.0;

  std::size_t size() const noexcept { return d.size(); }
};

inline constexpr int kDefaultSignaturePoints = 128;

inline GrayImage to_grayscale(const ImageRGB& img) {
  GrayImage gray(img.width(), img.height());
  auto out = gray.begin();
  for (const Rgb& p : img) {
    const double luma = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
    *out++ = static_cast<std::uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
  }
  return gray;
}

using Histogram = std::array<std::uint64_t, 256>;

template <typename Range>
Histogram histogram_of(const Range& values) {
  Histogram h{};
  for (auto v : values) ++h[static_cast<std::uint8_t>(v)];
  return h;
}

/// Otsu's threshold t maximising the between-class variance of the split
/// {v <= t} / {v > t}. Returns -1 when every value is equal, since no split
/// leaves both classes populated.
inline int otsu_threshold(const Histogram& hist) {
  std::uint64_t total = 0;
  double weighted_total = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += hist[v];
    weighted_total += static_cast<double>(v) * static_cast<double>(hist[v]);
  }
  if (total == 0) return -1;

  std::uint64_t below = 0;
  double weighted_below = 0.0;
  double best = -1.0;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    below += hist[t];
    weighted_below += static_cast<double>(t) * static_cast<double>(hist[t]);
    const std::uint64_t above = total - below;
    if (below == 0 || above == 0) continue;
    const double w0 = static_cast<double>(below);
    const double w1 = static_cast<double>(above);
    const double mean0 = weighted_below / w0;
    const double mean1 = (weighted_total - weighted_below) / w1;
    const double between = w0 * w1 * (mean0 - mean1) * (mean0 - mean1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace detail {

inline constexpr std::array<PixelPoint, 8> kNeighbours8 = {
    PixelPoint{-1, 0}, PixelPoint{-1, -1}, PixelPoint{0, -1}, PixelPoint{1, -1},
    PixelPoint{1, 0},  PixelPoint{1, 1},   PixelPoint{0, 1},  PixelPoint{-1, 1}};

inline constexpr std::array<PixelPoint, 4> kNeighbours4 = {
    PixelPoint{-1, 0}, PixelPoint{0, -1}, PixelPoint{1, 0}, PixelPoint{0, 1}};

inline bool is_foreground(const BinaryMask& mask, int x, int y) {
  return mask.contains(x, y) && mask(x, y) != 0;
}

/// Labels 8-connected foreground components; returns the pixels of the
/// largest one (first found in raster order on ties).
inline std::vector<PixelPoint> largest_component(const BinaryMask& fg) {
  std::vector<std::uint8_t> seen(fg.size(), 0);
  std::vector<PixelPoint> best;
  std::vector<PixelPoint> current;
  std::vector<PixelPoint> stack;
  const auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * fg.width() + x; };

  for (int y = 0; y < fg.height(); ++y) {
    for (int x = 0; x < fg.width(); ++x) {
      if (!fg(x, y) || seen[idx(x, y)]) continue;
      current.clear();
      stack.push_back({x, y});
      seen[idx(x, y)] = 1;
      while (!stack.empty()) {
        const PixelPoint p = stack.back();
        stack.pop_back();
        current.push_back(p);
        for (const auto& n : kNeighbours8) {
          const int nx = p.x + n.x;
          const int ny = p.y + n.y;
          if (is_foreground(fg, nx, ny) && !seen[idx(nx, ny)]) {
            seen[idx(nx, ny)] = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      if (current.size() > best.size()) best = current;
    }
  }
  return best;
}

}  // namespace detail

/// Sets every background pixel that is not 4-connected to the image border
/// to foreground.
inline BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  BinaryMask outside(w, h, 0);
  std::vector<PixelPoint> stack;
  const auto seed = [&](int x, int y) {
    if (!mask(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const PixelPoint p = stack.back();
    stack.pop_back();
    for (const auto& n : detail::kNeighbours4) {
      const int nx = p.x + n.x;
      const int ny = p.y + n.y;
      if (mask.contains(nx, ny)) seed(nx, ny);
    }
  }
  BinaryMask filled(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) filled(x, y) = outside(x, y) ? 0 : 1;
  }
  return filled;
}

/// Separates a single leaf from a near-uniform background.
///
/// Otsu splits the gray levels into a dark and a light class. The leaf is
/// taken to be the dark class unless most border pixels are dark, in which
/// case the polarity flips. Only the largest 8-connected component is kept
/// and its holes are filled.
inline BinaryMask segment_leaf(const GrayImage& gray) {
  const int t = otsu_threshold(histogram_of(gray));
  if (t < 0) throw Error(Errc::segmentation, "image has a single gray level; no foreground");

  std::uint64_t border = 0;
  std::uint64_t border_dark = 0;
  const auto count_border = [&](int x, int y) {
    ++border;
    border_dark += gray(x, y) <= t;
  };
  for (int x = 0; x < gray.width(); ++x) {
    count_border(x, 0);
    if (gray.height() > 1) count_border(x, gray.height() - 1);
  }
  for (int y = 1; y + 1 < gray.height(); ++y) {
    count_border(0, y);
    if (gray.width() > 1) count_border(gray.width() - 1, y);
  }
  const bool leaf_is_dark = 2 * border_dark <= border;

  BinaryMask fg(gray.width(), gray.height(), 0);
  auto out = fg.begin();
  for (auto v : gray) *out++ = leaf_is_dark ? (v <= t) : (v > t);

  const auto component = detail::largest_component(fg);
  if (component.empty()) throw Error(Errc::segmentation, "empty foreground after thresholding");

  BinaryMask largest(gray.width(), gray.height(), 0);
  for (const auto& p : component) largest(p.x, p.y) = 1;
  return fill_holes(largest);
}

/// Moore-neighbour boundary trace of the region containing the topmost,
/// then leftmost, foreground pixel.
///
/// Points are emitted in positive-area orientation of the raster (x right,
/// y down) coordinate frame, i.e. counter-clockwise in that frame, which is
/// clockwise as displayed on screen. Tracing stops when the walk would
/// repeat its first move, so one-pixel-wide parts are walked on both sides.
inline Contour extract_contour(const BinaryMask& mask) {
  PixelPoint start{-1, -1};
  for (int y = 0; y < mask.height() && start.x < 0; ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        start = {x, y};
        break;
      }
    }
  }
  if (start.x < 0) throw Error(Errc::degenerate_contour, "mask has no foreground");

  const auto direction_of = [](PixelPoint delta) {
    for (int d = 0; d < 8; ++d) {
      if (detail::kNeighbours8[d] == delta) return d;
    }
    return -1;
  };

  // Returns the next boundary pixel and updates the backtrack direction.
  const auto step = [&](PixelPoint current, int& backtrack) -> std::optional<PixelPoint> {
    for (int k = 1; k <= 8; ++k) {
      const int d = (backtrack + k) % 8;
      const PixelPoint p{current.x + detail::kNeighbours8[d].x, current.y + detail::kNeighbours8[d].y};
      if (detail::is_foreground(mask, p.x, p.y)) {
        const int prev = (backtrack + k - 1) % 8;
        const PixelPoint q{current.x + detail::kNeighbours8[prev].x, current.y + detail::kNeighbours8[prev].y};
        backtrack = direction_of({q.x - p.x, q.y - p.y});
        return p;
      }
    }
    return std::nullopt;
  };

  Contour contour;
  contour.points.push_back(start);
  int backtrack = 0;  // west of the start pixel is background
  const auto first = step(start, backtrack);
  if (!first) throw Error(Errc::degenerate_contour, "single-pixel foreground");

  PixelPoint current = *first;
  const std::size_t limit = 4 * mask.size() + 8;
  while (contour.points.size() < limit) {
    const auto next = step(current, backtrack);
    if (current == start && next && *next == *first) break;
    contour.points.push_back(current);
    current = *next;
  }
  if (contour.size() < 4) {
    throw Error(Errc::degenerate_contour, "contour has fewer than 4 points");
  }
  return contour;
}

inline Centroid centroid(const BinaryMask& mask) {
  int min_x = mask.width();
  int min_y = mask.height();
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) {
        min_x = std::min(min_x, x);
        min_y = std::min(min_y, y);
      }
    }
  }
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x - min_x;
      sy += y - min_y;
      ++n;
    }
  }
  if (n == 0) throw Error(Errc::empty_shape, "centroid of an empty mask");
  return Centroid{{min_x, min_y}, {sx / static_cast<double>(n), sy / static_cast<double>(n)}};
}

/// Length-weighted polygon through the points with an explicit closing edge.
template <typename P>
std::vector<double> cumulative_arc_length(std::span<const P> points) {
  std::vector<double> cum(points.size() + 1, 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const P& a = points[i];
    const P& b = points[(i + 1) % points.size()];
    cum[i + 1] = cum[i] + std::hypot(static_cast<double>(b.x) - a.x, static_cast<double>(b.y) - a.y);
  }
  return cum;
}

/// Resamples the closed contour to `samples` points equally spaced by arc
/// length, starting at the first contour point, and measures each point's
/// distance to the centroid.
inline RadialSignature radial_signature(const Contour& contour, const Centroid& c,
                                        int samples = kDefaultSignaturePoints) {
  if (samples < 4) throw Error(Errc::invalid_argument, "signature needs at least 4 samples");
  if (contour.size() < 4) throw Error(Errc::degenerate_contour, "contour has fewer than 4 points");

  // Work relative to the centroid anchor.
  std::vector<RealPoint> pts;
  pts.reserve(contour.size());
  for (const auto& p : contour.points) {
    pts.push_back({static_cast<double>(p.x - c.anchor.x), static_cast<double>(p.y - c.anchor.y)});
  }
  const auto cum = cumulative_arc_length<RealPoint>(pts);
  const double total = cum.back();
  if (!(total > 0.0)) throw Error(Errc::degenerate_contour, "contour has zero length");

  RadialSignature sig;
  sig.centroid = {c.x(), c.y()};
  sig.d.reserve(static_cast<std::size_t>(samples));
  std::size_t seg = 0;
  for (int n = 0; n < samples; ++n) {
    const double s = static_cast<double>(n) * total / samples;
    while (seg + 1 < pts.size() && cum[seg + 1] <= s) ++seg;
    const RealPoint& a = pts[seg];
    const RealPoint& b = pts[(seg + 1) % pts.size()];
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (s - cum[seg]) / len : 0.0;
    const double px = a.x + t * (b.x - a.x);
    const double py = a.y + t * (b.y - a.y);
    sig.d.push_back(std::hypot(px - c.offset.x, py - c.offset.y));
  }
  sig.m1 = std::accumulate(sig.d.begin(), sig.d.end(), 0.0) / static_cast<double>(sig.d.size());
  return sig;
}

}  // namespace leafid
