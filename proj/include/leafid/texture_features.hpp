#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "leafid/color_features.hpp"

namespace leafid {

inline constexpr int kDefaultGlcmLevels = 8;

enum class GlcmDirection { deg0, deg45, deg90, deg135 };

inline constexpr std::array<GlcmDirection, 4> kGlcmDirections = {GlcmDirection::deg0, GlcmDirection::deg45,
                                                                 GlcmDirection::deg90, GlcmDirection::deg135};

/// Pixel offset for each direction at distance 1 (image y axis points down).
inline constexpr PixelPoint offset_of(GlcmDirection dir) {
  switch (dir) {
    case GlcmDirection::deg0: return {1, 0};
    case GlcmDirection::deg45: return {1, -1};
    case GlcmDirection::deg90: return {0, -1};
    case GlcmDirection::deg135: return {-1, -1};
  }
  return {1, 0};
}

/// Normalised symmetric co-occurrence matrix, levels x levels.
class Glcm {
 public:
  Glcm(int levels, std::vector<double> p) : levels_(levels), p_(std::move(p)) {
    if (levels < 1 || p_.size() != static_cast<std::size_t>(levels) * levels) {
      throw Error(Errc::invalid_argument, "GLCM size does not match its level count");
    }
  }

  int levels() const noexcept { return levels_; }
  double operator()(int i, int j) const { return p_[static_cast<std::size_t>(i) * levels_ + j]; }
  const std::vector<double>& values() const noexcept { return p_; }

 private:
  int levels_;
  std::vector<double> p_;
};

struct HaralickFeatures {
  double asm_ = 0.0;
  double contrast = 0.0;
  double idm = 0.0;
  double entropy = 0.0;
  double correlation = 0.0;

  std::array<double, 5> values() const { return {asm_, contrast, idm, entropy, correlation}; }
};

/// Pairs are counted only when both pixels are foreground, in both orders.
inline Glcm compute_glcm(const GrayImage& gray, const BinaryMask& mask, int levels, GlcmDirection dir) {
  if (levels < 2 || levels > 256) throw Error(Errc::invalid_argument, "GLCM levels must be in [2, 256]");
  if (!same_shape(gray, mask)) throw Error(Errc::invalid_argument, "gray and mask dimensions differ");

  const PixelPoint off = offset_of(dir);
  std::vector<unsigned long long> counts(static_cast<std::size_t>(levels) * levels, 0);
  unsigned long long pairs = 0;
  const auto bin = [levels](std::uint8_t v) { return static_cast<int>(v) * levels / 256; };
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) {
      const int nx = x + off.x;
      const int ny = y + off.y;
      if (!mask(x, y) || !mask.contains(nx, ny) || !mask(nx, ny)) continue;
      const int a = bin(gray(x, y));
      const int b = bin(gray(nx, ny));
      ++counts[static_cast<std::size_t>(a) * levels + b];
      ++counts[static_cast<std::size_t>(b) * levels + a];
      pairs += 2;
    }
  }
  if (pairs == 0) throw Error(Errc::no_pairs, "no foreground pixel pairs for the GLCM");

  std::vector<double> p(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) p[k] = static_cast<double>(counts[k]) / static_cast<double>(pairs);
  return Glcm(levels, std::move(p));
}

/// ASM, contrast, inverse difference moment (homogeneity, 1 + (i-j)^2),
/// entropy (-sum p ln p) and correlation. Indices are 1-based. Correlation
/// is 0 when either marginal has zero variance.
inline HaralickFeatures haralick_features(const Glcm& glcm) {
  const int L = glcm.levels();
  HaralickFeatures f;
  double sum_ij = 0.0;
  double mu_i = 0.0;
  double mu_j = 0.0;
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      const double p = glcm(a, b);
      if (p == 0.0) continue;
      const double i = a + 1;
      const double j = b + 1;
      const double diff = i - j;
      f.asm_ += p * p;
      f.contrast += diff * diff * p;
      f.idm += p / (1.0 + diff * diff);
      f.entropy -= p * std::log(p);
      sum_ij += i * j * p;
      mu_i += i * p;
      mu_j += j * p;
    }
  }
  double var_i = 0.0;
  double var_j = 0.0;
  for (int a = 0; a < L; ++a) {
    for (int b = 0; b < L; ++b) {
      const double p = glcm(a, b);
      var_i += p * (a + 1 - mu_i) * (a + 1 - mu_i);
      var_j += p * (b + 1 - mu_j) * (b + 1 - mu_j);
    }
  }
  if (var_i > 0.0 && var_j > 0.0) f.correlation = (sum_ij - mu_i * mu_j) / std::sqrt(var_i * var_j);
  return f;
}

/// The five Haralick statistics averaged over the 0, 45, 90 and 135 degree GLCMs.
inline std::array<double, 5> glcm_feature_vector(const GrayImage& gray, const BinaryMask& mask,
                                                 int levels = kDefaultGlcmLevels) {
  std::array<double, 5> mean{};
  for (const auto dir : kGlcmDirections) {
    const auto v = haralick_features(compute_glcm(gray, mask, levels, dir)).values();
    for (std::size_t k = 0; k < v.size(); ++k) mean[k] += v[k];
  }
  for (double& v : mean) v /= static_cast<double>(kGlcmDirections.size());
  return mean;
}

struct Lacunarity {
  double ls = 0.0;
  double la = 0.0;
  double l2 = 0.0;
  double l4 = 0.0;
  double l6 = 0.0;
};

/// Global lacunarity statistics of one channel's samples. A channel with
/// zero mean reports all zeros.
inline Lacunarity lacunarity_of(const std::vector<double>& samples) {
  if (samples.empty()) throw Error(Errc::empty_shape, "lacunarity of an empty region");
  const double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  Lacunarity out;
  const double mean = sum / n;
  if (!(mean > 0.0)) return out;

  double abs_dev = 0.0;
  double p2 = 0.0;
  double p4 = 0.0;
  double p6 = 0.0;
  for (double v : samples) {
    const double e = v / mean - 1.0;
    const double e2 = e * e;
    abs_dev += std::abs(e);
    p2 += e2;
    p4 += e2 * e2;
    p6 += e2 * e2 * e2;
  }
  out.ls = p2 / n;
  out.la = abs_dev / n;
  out.l2 = std::sqrt(p2 / n);
  out.l4 = std::pow(p4 / n, 1.0 / 4.0);
  out.l6 = std::pow(p6 / n, 1.0 / 6.0);
  return out;
}

/// Ls, La, L2, L4, L6 for R, then G, B and gray (20 values).
inline std::array<double, 20> lacunarity_features(const ImageRGB& img, const GrayImage& gray,
                                                  const BinaryMask& mask) {
  std::array<double, 20> out{};
  for (std::size_t c = 0; c < kChannels.size(); ++c) {
    const Lacunarity l = lacunarity_of(channel_samples(img, gray, mask, kChannels[c]));
    out[5 * c + 0] = l.ls;
    out[5 * c + 1] = l.la;
    out[5 * c + 2] = l.l2;
    out[5 * c + 3] = l.l4;
    out[5 * c + 4] = l.l6;
  }
  return out;
}

}  // namespace leafid
