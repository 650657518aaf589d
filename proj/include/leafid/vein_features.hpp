#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "leafid/imaging.hpp"

namespace leafid {

enum class VeinPolarity { bright, dark };

inline constexpr int kVeinRadii = 4;

struct VeinFeatures {
  std::array<double, kVeinRadii> v{};
  std::array<std::size_t, kVeinRadii> a{};
  std::size_t area = 0;
};

/// Offsets of a flat disk: (dx, dy) with dx^2 + dy^2 <= radius^2.
inline std::vector<PixelPoint> disk_offsets(int radius) {
  std::vector<PixelPoint> out;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) out.push_back({dx, dy});
    }
  }
  return out;
}

namespace detail {

/// Flat-disk rank filter. With a domain mask, only domain pixels are
/// filtered and only domain pixels are read; other pixels are copied.
/// Without one, pixels outside the raster are ignored.
template <typename Pick>
GrayImage disk_filter(const GrayImage& src, int radius, const BinaryMask* domain, Pick pick) {
  if (radius < 0) throw Error(Errc::invalid_argument, "negative structuring element radius");
  if (domain && !same_shape(src, *domain)) throw Error(Errc::invalid_argument, "domain mask size differs");
  const auto offsets = disk_offsets(radius);
  GrayImage out = src;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (domain && !(*domain)(x, y)) continue;
      std::uint8_t acc = src(x, y);
      for (const auto& o : offsets) {
        const int nx = x + o.x;
        const int ny = y + o.y;
        if (!src.contains(nx, ny) || (domain && !(*domain)(nx, ny))) continue;
        acc = pick(acc, src(nx, ny));
      }
      out(x, y) = acc;
    }
  }
  return out;
}

}  // namespace detail

inline GrayImage gray_erode(const GrayImage& src, int radius, const BinaryMask* domain = nullptr) {
  return detail::disk_filter(src, radius, domain, [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

inline GrayImage gray_dilate(const GrayImage& src, int radius, const BinaryMask* domain = nullptr) {
  return detail::disk_filter(src, radius, domain, [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

/// Erosion followed by dilation with a flat disk of the given radius.
inline GrayImage gray_opening(const GrayImage& src, int radius, const BinaryMask* domain = nullptr) {
  return gray_dilate(gray_erode(src, radius, domain), radius, domain);
}

/// Binary erosion by a disk; pixels beyond the raster count as background.
inline BinaryMask erode_mask(const BinaryMask& mask, int radius) {
  const auto offsets = disk_offsets(radius);
  BinaryMask out(mask.width(), mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      bool keep = true;
      for (const auto& o : offsets) {
        if (!detail::is_foreground(mask, x + o.x, y + o.y)) {
          keep = false;
          break;
        }
      }
      out(x, y) = keep;
    }
  }
  return out;
}

namespace detail {

struct Crop {
  int x0 = 0;
  int y0 = 0;
  GrayImage gray;
  BinaryMask mask;
};

inline Crop crop_to_mask(const GrayImage& gray, const BinaryMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw Error(Errc::empty_shape, "vein extraction on an empty mask");
  // One pixel of background around the leaf keeps the margin erosion honest.
  x0 = std::max(0, x0 - 1);
  y0 = std::max(0, y0 - 1);
  x1 = std::min(mask.width() - 1, x1 + 1);
  y1 = std::min(mask.height() - 1, y1 + 1);
  Crop c{x0, y0, GrayImage(x1 - x0 + 1, y1 - y0 + 1), BinaryMask(x1 - x0 + 1, y1 - y0 + 1)};
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      c.gray(x - x0, y - y0) = gray(x, y);
      c.mask(x - x0, y - y0) = mask(x, y);
    }
  }
  return c;
}

}  // namespace detail

/// Binary vein maps for disk radii 1..4, at the size of the input.
///
/// For each radius the top-hat residual (gray minus its opening, computed
/// inside the leaf only) is thresholded with Otsu over the leaf's residual
/// values; pixels on the one-pixel leaf margin are discarded.
inline std::array<BinaryMask, kVeinRadii> vein_maps(const GrayImage& gray, const BinaryMask& mask,
                                                    VeinPolarity polarity = VeinPolarity::bright) {
  if (!same_shape(gray, mask)) throw Error(Errc::invalid_argument, "gray and mask dimensions differ");
  detail::Crop crop = detail::crop_to_mask(gray, mask);
  if (polarity == VeinPolarity::dark) {
    for (auto& v : crop.gray) v = static_cast<std::uint8_t>(255 - v);
  }
  const BinaryMask interior = erode_mask(crop.mask, 1);
  if (foreground_count(interior) == 0) throw Error(Errc::empty_shape, "leaf has no interior after margin removal");

  std::array<BinaryMask, kVeinRadii> maps;
  for (int k = 0; k < kVeinRadii; ++k) {
    const GrayImage opened = gray_opening(crop.gray, k + 1, &crop.mask);
    GrayImage residual(crop.gray.width(), crop.gray.height(), 0);
    Histogram hist{};
    for (int y = 0; y < residual.height(); ++y) {
      for (int x = 0; x < residual.width(); ++x) {
        if (!crop.mask(x, y)) continue;
        residual(x, y) = static_cast<std::uint8_t>(crop.gray(x, y) - opened(x, y));
        ++hist[residual(x, y)];
      }
    }
    const int t = otsu_threshold(hist);
    BinaryMask full(mask.width(), mask.height(), 0);
    if (t >= 0) {
      for (int y = 0; y < residual.height(); ++y) {
        for (int x = 0; x < residual.width(); ++x) {
          if (interior(x, y) && residual(x, y) > t) full(x + crop.x0, y + crop.y0) = 1;
        }
      }
    }
    maps[static_cast<std::size_t>(k)] = std::move(full);
  }
  return maps;
}

inline VeinFeatures vein_features(const std::array<BinaryMask, kVeinRadii>& maps, const BinaryMask& mask) {
  VeinFeatures f;
  f.area = foreground_count(mask);
  if (f.area == 0) throw Error(Errc::empty_shape, "vein features of an empty mask");
  for (std::size_t k = 0; k < maps.size(); ++k) {
    f.a[k] = foreground_count(maps[k]);
    f.v[k] = static_cast<double>(f.a[k]) / static_cast<double>(f.area);
  }
  return f;
}

inline VeinFeatures vein_features(const GrayImage& gray, const BinaryMask& mask,
                                  VeinPolarity polarity = VeinPolarity::bright) {
  return vein_features(vein_maps(gray, mask, polarity), mask);
}

}  // namespace leafid
