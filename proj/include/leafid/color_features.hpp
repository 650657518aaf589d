#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "leafid/image.hpp"

namespace leafid {

enum class Channel { red, green, blue, gray };

inline constexpr std::array<Channel, 4> kChannels = {Channel::red, Channel::green, Channel::blue, Channel::gray};

struct ChannelMoments {
  double mean = 0.0;
  double stddev = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess
};

struct ColorMoments {
  std::array<ChannelMoments, 4> channels;  // R, G, B, gray

  /// mean, std, skew, kurt for R, then G, B and gray.
  std::array<double, 16> values() const {
    std::array<double, 16> v{};
    for (std::size_t c = 0; c < 4; ++c) {
      v[4 * c + 0] = channels[c].mean;
      v[4 * c + 1] = channels[c].stddev;
      v[4 * c + 2] = channels[c].skewness;
      v[4 * c + 3] = channels[c].kurtosis;
    }
    return v;
  }
};

/// Foreground samples of one channel, in raster order.
inline std::vector<double> channel_samples(const ImageRGB& img, const GrayImage& gray, const BinaryMask& mask,
                                           Channel channel) {
  if (!same_shape(img, mask) || !same_shape(gray, mask)) {
    throw Error(Errc::invalid_argument, "image, gray and mask dimensions differ");
  }
  std::vector<double> out;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      switch (channel) {
        case Channel::red: out.push_back(img(x, y).r); break;
        case Channel::green: out.push_back(img(x, y).g); break;
        case Channel::blue: out.push_back(img(x, y).b); break;
        case Channel::gray: out.push_back(gray(x, y)); break;
      }
    }
  }
  return out;
}

/// Population moments. A zero-variance channel reports skew = kurt = 0.
inline ChannelMoments moments_of(const std::vector<double>& samples) {
  if (samples.empty()) throw Error(Errc::empty_shape, "moments of an empty region");
  const double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  ChannelMoments m;
  m.mean = sum / n;
  double s2 = 0.0;
  double s3 = 0.0;
  double s4 = 0.0;
  for (double v : samples) {
    const double e = v - m.mean;
    s2 += e * e;
    s3 += e * e * e;
    s4 += e * e * e * e;
  }
  const double var = s2 / n;
  m.stddev = std::sqrt(var);
  if (var > 0.0) {
    m.skewness = s3 / (n * var * m.stddev);
    m.kurtosis = s4 / (n * var * var) - 3.0;
  }
  return m;
}

inline ColorMoments color_moments(const ImageRGB& img, const GrayImage& gray, const BinaryMask& mask) {
  ColorMoments out;
  for (std::size_t c = 0; c < kChannels.size(); ++c) {
    out.channels[c] = moments_of(channel_samples(img, gray, mask, kChannels[c]));
  }
  return out;
}

}  // namespace leafid
