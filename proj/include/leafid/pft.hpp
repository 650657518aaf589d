#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "leafid/imaging.hpp"

namespace leafid {

inline constexpr int kDefaultPolarRadial = 64;
inline constexpr int kDefaultPolarAngular = 128;
inline constexpr int kPftRadialFrequencies = 4;
inline constexpr int kPftAngularFrequencies = 6;
inline constexpr int kPftDescriptorCount = (kPftRadialFrequencies + 1) * (kPftAngularFrequencies + 1);

/// Silhouette sampled on a polar grid centred on the shape centroid.
/// Row k holds radius (k + 0.5) * r_max / radial, column i angle i * 2pi / angular.
///
/// Pixels are unit squares: r_max is the distance to the farthest pixel
/// corner and each sample reads the pixel containing it. Under this model a
/// nearest-neighbour upscale is an exact scaling of the shape, so the grid
/// does not change.
struct PolarGrid {
  int radial = 0;
  int angular = 0;
  double r_max = 0.0;
  std::vector<double> samples;

  double operator()(int k, int i) const { return samples[static_cast<std::size_t>(k) * angular + i]; }
  double& operator()(int k, int i) { return samples[static_cast<std::size_t>(k) * angular + i]; }
};

namespace detail {

/// Mask value at a real position relative to `anchor`, treating each pixel
/// as the unit square centred on its coordinates. Outside the raster reads 0.
inline double pixel_area_lookup(const BinaryMask& mask, PixelPoint anchor, double rx, double ry) {
  const int x = anchor.x + static_cast<int>(std::floor(rx + 0.5));
  const int y = anchor.y + static_cast<int>(std::floor(ry + 0.5));
  return is_foreground(mask, x, y) ? 1.0 : 0.0;
}

}  // namespace detail

inline PolarGrid polar_resample(const BinaryMask& mask, const Centroid& c, int radial = kDefaultPolarRadial,
                                int angular = kDefaultPolarAngular) {
  if (radial < 8 || angular < 8) throw Error(Errc::invalid_argument, "polar grid needs at least 8x8 bins");

  double r2_max = 0.0;
  bool any = false;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      any = true;
      const double dx = std::abs((x - c.anchor.x) - c.offset.x) + 0.5;
      const double dy = std::abs((y - c.anchor.y) - c.offset.y) + 0.5;
      r2_max = std::max(r2_max, dx * dx + dy * dy);
    }
  }
  if (!any) throw Error(Errc::empty_shape, "polar resampling of an empty mask");

  PolarGrid grid;
  grid.radial = radial;
  grid.angular = angular;
  grid.r_max = std::sqrt(r2_max);
  grid.samples.assign(static_cast<std::size_t>(radial) * angular, 0.0);

  std::vector<double> cosines(angular);
  std::vector<double> sines(angular);
  for (int i = 0; i < angular; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / angular;
    cosines[i] = std::cos(theta);
    sines[i] = std::sin(theta);
  }
  for (int k = 0; k < radial; ++k) {
    const double r = (k + 0.5) * grid.r_max / radial;
    for (int i = 0; i < angular; ++i) {
      grid(k, i) = detail::pixel_area_lookup(mask, c.anchor, c.offset.x + r * cosines[i], c.offset.y + r * sines[i]);
    }
  }
  return grid;
}

/// Polar Fourier magnitudes for radial frequencies 0..4 and angular
/// frequencies 0..6, laid out radial-major (35 values).
///
/// Each sample is weighted by its polar area element r dr dtheta, so the
/// transform approximates the Cartesian sum over the silhouette and the DC
/// term is the shape area in pixels. Entry 0 is |PF(0,0)| / (2 pi r_max^2);
/// the rest are divided by |PF(0,0)|.
inline std::vector<double> pft_descriptors(const PolarGrid& grid, int radial_freqs = kPftRadialFrequencies,
                                           int angular_freqs = kPftAngularFrequencies) {
  const int R = grid.radial;
  const int T = grid.angular;
  const double dr = grid.r_max / R;
  const double dtheta = 2.0 * std::numbers::pi / T;

  // Angular DFT per radius, then the radial transform.
  std::vector<std::complex<double>> angular_dft(static_cast<std::size_t>(R) * (angular_freqs + 1));
  for (int phi = 0; phi <= angular_freqs; ++phi) {
    std::vector<std::complex<double>> twiddle(T);
    for (int i = 0; i < T; ++i) twiddle[i] = std::polar(1.0, -2.0 * std::numbers::pi * ((static_cast<long long>(i) * phi) % T) / T);
    for (int k = 0; k < R; ++k) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < T; ++i) acc += grid(k, i) * twiddle[i];
      angular_dft[static_cast<std::size_t>(k) * (angular_freqs + 1) + phi] = acc;
    }
  }

  std::vector<double> magnitudes;
  magnitudes.reserve(static_cast<std::size_t>(radial_freqs + 1) * (angular_freqs + 1));
  for (int rho = 0; rho <= radial_freqs; ++rho) {
    for (int phi = 0; phi <= angular_freqs; ++phi) {
      std::complex<double> acc = 0.0;
      for (int k = 0; k < R; ++k) {
        const double weight = (k + 0.5) * dr * dr * dtheta;
        const auto rot = std::polar(1.0, -2.0 * std::numbers::pi * ((static_cast<long long>(k) * rho) % R) / R);
        acc += weight * angular_dft[static_cast<std::size_t>(k) * (angular_freqs + 1) + phi] * rot;
      }
      magnitudes.push_back(std::abs(acc));
    }
  }

  const double dc = magnitudes.front();
  if (!(dc > 0.0)) throw Error(Errc::empty_shape, "PF(0,0) is zero");
  std::vector<double> descriptors(magnitudes.size());
  descriptors[0] = dc / (2.0 * std::numbers::pi * grid.r_max * grid.r_max);
  for (std::size_t j = 1; j < magnitudes.size(); ++j) descriptors[j] = magnitudes[j] / dc;
  return descriptors;
}

}  // namespace leafid
