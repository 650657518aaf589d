#pragma once

#include <cstdint>
#include <vector>

#include "leafid/error.hpp"

namespace leafid {

template <typename T>
struct Point2 {
  T x{};
  T y{};

  friend bool operator==(const Point2&, const Point2&) = default;
  friend auto operator<=>(const Point2&, const Point2&) = default;
};

using PixelPoint = Point2<int>;
using RealPoint = Point2<double>;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Dense row-major raster. The tag keeps gray images and masks from being
/// mixed up even though both store one byte per pixel.
template <typename T, typename Tag>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(Errc::invalid_argument, "raster dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct RgbTag;
struct GrayTag;
struct MaskTag;

using ImageRGB = Raster<Rgb, RgbTag>;
using GrayImage = Raster<std::uint8_t, GrayTag>;
/// Foreground pixels hold 1, background 0.
using BinaryMask = Raster<std::uint8_t, MaskTag>;

template <typename A, typename B>
bool same_shape(const A& a, const B& b) noexcept {
  return a.width() == b.width() && a.height() == b.height();
}

inline std::size_t foreground_count(const BinaryMask& mask) {
  std::size_t n = 0;
  for (auto v : mask) n += v != 0;
  return n;
}

}  // namespace leafid
