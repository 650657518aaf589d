#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace leafid {

enum class Errc {
  io,
  format,
  segmentation,
  degenerate_contour,
  degenerate_hull,
  empty_shape,
  invalid_argument,
  no_pairs,
  cache,
  model,
  dimension,
  manifest,
  split,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::segmentation: return "segmentation";
    case Errc::degenerate_contour: return "degenerate-contour";
    case Errc::degenerate_hull: return "degenerate-hull";
    case Errc::empty_shape: return "empty-shape";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::no_pairs: return "no-pairs";
    case Errc::cache: return "cache";
    case Errc::model: return "model";
    case Errc::dimension: return "dimension";
    case Errc::manifest: return "manifest";
    case Errc::split: return "split";
  }
  return "unknown";
}

/// Every failure in the library is reported as an Error carrying a category
/// so callers (and tests) can tell segmentation failures from I/O failures.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace leafid
