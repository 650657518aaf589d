#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "leafid/image.hpp"

namespace leafid {

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::io, "cannot read '" + path.string() + "'");
  return bytes;
}

inline bool has_image_signature(const std::vector<unsigned char>& bytes) {
  static constexpr unsigned char png[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= sizeof(png) && std::equal(std::begin(png), std::end(png), bytes.begin())) return true;
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

inline void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  std::vector<unsigned char> buffer;
  if (!cv::imencode(".png", mat, buffer)) throw Error(Errc::io, "PNG encoding failed for '" + path.string() + "'");
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
}

}  // namespace detail

/// Decodes a PNG or JPEG file into 8-bit RGB.
inline ImageRGB load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  if (!detail::has_image_signature(bytes)) {
    throw Error(Errc::format, "'" + path.string() + "' is not a PNG or JPEG file");
  }
  cv::Mat decoded;
  try {
    decoded = cv::imdecode(bytes, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw Error(Errc::format, "cannot decode '" + path.string() + "': " + e.what());
  }
  if (decoded.empty() || decoded.type() != CV_8UC3) {
    throw Error(Errc::format, "cannot decode '" + path.string() + "'");
  }
  ImageRGB img(decoded.cols, decoded.rows);
  for (int y = 0; y < decoded.rows; ++y) {
    const auto* row = decoded.ptr<cv::Vec3b>(y);
    for (int x = 0; x < decoded.cols; ++x) img(x, y) = Rgb{row[x][2], row[x][1], row[x][0]};
  }
  return img;
}

inline void save_png(const std::filesystem::path& path, const ImageRGB& img) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      const Rgb p = img(x, y);
      row[x] = cv::Vec3b(p.b, p.g, p.r);
    }
  }
  detail::write_mat(path, mat);
}

inline void save_png(const std::filesystem::path& path, const GrayImage& img) {
  cv::Mat mat(img.height(), img.width(), CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) row[x] = img(x, y);
  }
  detail::write_mat(path, mat);
}

/// Masks are written with foreground = 255.
inline void save_png(const std::filesystem::path& path, const BinaryMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width(); ++x) row[x] = mask(x, y) ? 255 : 0;
  }
  detail::write_mat(path, mat);
}

}  // namespace leafid
