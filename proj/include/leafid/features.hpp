#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "leafid/color_features.hpp"
#include "leafid/imaging.hpp"
#include "leafid/pft.hpp"
#include "leafid/shape_features.hpp"
#include "leafid/texture_features.hpp"
#include "leafid/vein_features.hpp"

namespace leafid {

enum class FeatureGroup { pft, hull, color, vein, glcm, lacunarity, shen, aux_shape };

inline constexpr std::array<FeatureGroup, 8> kAllGroups = {
    FeatureGroup::pft,  FeatureGroup::hull,       FeatureGroup::color, FeatureGroup::vein,
    FeatureGroup::glcm, FeatureGroup::lacunarity, FeatureGroup::shen,  FeatureGroup::aux_shape};

inline constexpr std::size_t group_size(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::pft: return kPftDescriptorCount;
    case FeatureGroup::hull: return 2;
    case FeatureGroup::color: return 16;
    case FeatureGroup::vein: return kVeinRadii;
    case FeatureGroup::glcm: return 5;
    case FeatureGroup::lacunarity: return 20;
    case FeatureGroup::shen: return 3;
    case FeatureGroup::aux_shape: return 3;
  }
  return 0;
}

inline constexpr std::string_view group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::pft: return "pft";
    case FeatureGroup::hull: return "hull";
    case FeatureGroup::color: return "color";
    case FeatureGroup::vein: return "vein";
    case FeatureGroup::glcm: return "glcm";
    case FeatureGroup::lacunarity: return "lacunarity";
    case FeatureGroup::shen: return "shen";
    case FeatureGroup::aux_shape: return "aux_shape";
  }
  return "";
}

inline FeatureGroup parse_group(std::string_view name) {
  for (const auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw Error(Errc::invalid_argument, "unknown feature group '" + std::string(name) + "'");
}

inline constexpr std::size_t kFullFeatureLength = 88;

/// Offset of a group inside the full 88-value layout.
inline constexpr std::size_t group_offset(FeatureGroup g) {
  std::size_t off = 0;
  for (const auto h : kAllGroups) {
    if (h == g) return off;
    off += group_size(h);
  }
  return off;
}

/// A selection of feature groups. Groups are always kept in canonical
/// order. `shen_mf` = false drops mf from the Shen group (F2', F3' only).
class FeatureSetSpec {
 public:
  FeatureSetSpec() = default;
  FeatureSetSpec(std::initializer_list<FeatureGroup> groups, bool shen_mf = true)
      : FeatureSetSpec(std::vector<FeatureGroup>(groups), shen_mf) {}
  FeatureSetSpec(std::vector<FeatureGroup> groups, bool shen_mf = true) : shen_mf_(shen_mf) {
    for (const auto g : kAllGroups) {
      if (std::find(groups.begin(), groups.end(), g) != groups.end()) groups_.push_back(g);
    }
    if (groups_.empty()) throw Error(Errc::invalid_argument, "feature set is empty");
  }

  static FeatureSetSpec full_layout() { return FeatureSetSpec(std::vector(kAllGroups.begin(), kAllGroups.end())); }

  /// Every group of the proposed system: everything except aux_shape.
  static FeatureSetSpec proposed() {
    return {FeatureGroup::pft,  FeatureGroup::hull,       FeatureGroup::color, FeatureGroup::vein,
            FeatureGroup::glcm, FeatureGroup::lacunarity, FeatureGroup::shen};
  }

  /// Parses "pft+hull+color"; the token "shen2" selects Shen without mf.
  static FeatureSetSpec parse(std::string_view text) {
    std::vector<FeatureGroup> groups;
    bool mf = true;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t plus = text.find('+', pos);
      std::string token(text.substr(pos, plus == std::string_view::npos ? std::string_view::npos : plus - pos));
      token.erase(0, token.find_first_not_of(" \t"));
      token.erase(token.find_last_not_of(" \t") + 1);
      if (token == "shen2") {
        groups.push_back(FeatureGroup::shen);
        mf = false;
      } else if (!token.empty()) {
        groups.push_back(parse_group(token));
      }
      if (plus == std::string_view::npos) break;
      pos = plus + 1;
    }
    return FeatureSetSpec(std::move(groups), mf);
  }

  const std::vector<FeatureGroup>& groups() const noexcept { return groups_; }
  bool shen_mf() const noexcept { return shen_mf_; }

  bool contains(FeatureGroup g) const { return std::find(groups_.begin(), groups_.end(), g) != groups_.end(); }

  std::size_t size_of(FeatureGroup g) const {
    return (g == FeatureGroup::shen && !shen_mf_) ? 2 : group_size(g);
  }

  std::size_t dimension() const {
    std::size_t d = 0;
    for (const auto g : groups_) d += size_of(g);
    return d;
  }

  std::string name() const {
    std::string out;
    for (const auto g : groups_) {
      if (!out.empty()) out += '+';
      out += (g == FeatureGroup::shen && !shen_mf_) ? std::string("shen2") : std::string(group_name(g));
    }
    return out;
  }

  friend bool operator==(const FeatureSetSpec&, const FeatureSetSpec&) = default;

 private:
  std::vector<FeatureGroup> groups_;
  bool shen_mf_ = true;
};

struct ExtractionParams {
  int glcm_levels = kDefaultGlcmLevels;
  int signature_points = kDefaultSignaturePoints;
  int polar_radial = kDefaultPolarRadial;
  int polar_angular = kDefaultPolarAngular;
  VeinPolarity vein_polarity = VeinPolarity::bright;

  void validate() const {
    if (glcm_levels < 2 || glcm_levels > 256) throw Error(Errc::invalid_argument, "glcm levels must be in [2, 256]");
    if (signature_points < 4) throw Error(Errc::invalid_argument, "signature points must be >= 4");
    if (polar_radial < 8 || polar_angular < 8) throw Error(Errc::invalid_argument, "polar grid must be >= 8x8");
  }

  friend bool operator==(const ExtractionParams&, const ExtractionParams&) = default;
};

inline nlohmann::ordered_json to_json(const ExtractionParams& p) {
  return {{"glcm_levels", p.glcm_levels},
          {"signature_points", p.signature_points},
          {"polar_radial", p.polar_radial},
          {"polar_angular", p.polar_angular},
          {"vein_polarity", p.vein_polarity == VeinPolarity::bright ? "bright" : "dark"}};
}

inline ExtractionParams extraction_params_from_json(const nlohmann::json& j) {
  ExtractionParams p;
  p.glcm_levels = j.at("glcm_levels").get<int>();
  p.signature_points = j.at("signature_points").get<int>();
  p.polar_radial = j.at("polar_radial").get<int>();
  p.polar_angular = j.at("polar_angular").get<int>();
  const auto polarity = j.at("vein_polarity").get<std::string>();
  if (polarity != "bright" && polarity != "dark") throw Error(Errc::invalid_argument, "bad vein polarity");
  p.vein_polarity = polarity == "bright" ? VeinPolarity::bright : VeinPolarity::dark;
  return p;
}

struct FeatureVector {
  FeatureSetSpec layout = FeatureSetSpec::full_layout();
  std::vector<double> values;
  std::optional<int> label;
  std::string source;

  /// Values of one group; the group must be part of the layout.
  std::span<const double> group(FeatureGroup g) const {
    std::size_t off = 0;
    for (const auto h : layout.groups()) {
      if (h == g) return std::span<const double>(values).subspan(off, layout.size_of(g));
      off += layout.size_of(h);
    }
    throw Error(Errc::dimension, "feature group '" + std::string(group_name(g)) + "' not in layout");
  }
};

/// Intermediate products of the imaging stage, shared by every extractor.
struct LeafAnalysis {
  GrayImage gray;
  BinaryMask mask;
  Contour contour;
  Centroid center;
  RadialSignature signature;
};

namespace detail {

template <typename F>
auto run_stage(std::string_view stage, const std::string& source, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), "stage '" + std::string(stage) + "' failed for '" + source + "': " + e.what());
  }
}

}  // namespace detail

inline LeafAnalysis analyze_leaf(const ImageRGB& img, const ExtractionParams& params, const std::string& source = {}) {
  LeafAnalysis a;
  a.gray = to_grayscale(img);
  a.mask = detail::run_stage("segment", source, [&] { return segment_leaf(a.gray); });
  a.contour = detail::run_stage("contour", source, [&] { return extract_contour(a.mask); });
  a.center = centroid(a.mask);
  a.signature = detail::run_stage("signature", source,
                                  [&] { return radial_signature(a.contour, a.center, params.signature_points); });
  return a;
}

/// Runs the imaging pipeline once and every group extractor on its output.
/// The result uses the full 88-value layout.
inline FeatureVector extract_all(const ImageRGB& img, const ExtractionParams& params = {},
                                 const std::string& source = {}) {
  params.validate();
  const LeafAnalysis a = analyze_leaf(img, params, source);

  FeatureVector fv;
  fv.source = source;
  fv.values.reserve(kFullFeatureLength);
  const auto append = [&fv](const auto& range) { fv.values.insert(fv.values.end(), range.begin(), range.end()); };

  append(detail::run_stage("pft", source, [&] {
    return pft_descriptors(polar_resample(a.mask, a.center, params.polar_radial, params.polar_angular));
  }));
  const HullFeatures hull = detail::run_stage("hull", source, [&] { return hull_features(a.mask, a.contour); });
  append(std::array{hull.solidity, hull.convexity});
  append(detail::run_stage("color", source, [&] { return color_moments(img, a.gray, a.mask).values(); }));
  append(detail::run_stage("vein", source, [&] { return vein_features(a.gray, a.mask, params.vein_polarity).v; }));
  append(detail::run_stage("glcm", source, [&] { return glcm_feature_vector(a.gray, a.mask, params.glcm_levels); }));
  append(detail::run_stage("lacunarity", source, [&] { return lacunarity_features(img, a.gray, a.mask); }));
  const ShenFeatures shen = detail::run_stage("shen", source, [&] { return shen_features(a.signature); });
  append(std::array{shen.f2, shen.f3, shen.mf});
  const AuxShapeFeatures aux =
      detail::run_stage("aux_shape", source, [&] { return aux_shape_features(a.mask, a.contour, a.signature); });
  append(std::array{aux.eccentricity, aux.roundness, aux.dispersion});

  for (double v : fv.values) {
    if (!std::isfinite(v)) throw Error(Errc::invalid_argument, "non-finite feature value for '" + source + "'");
  }
  return fv;
}

/// Concatenates the groups selected by `spec`, in canonical order.
inline FeatureVector project(const FeatureVector& v, const FeatureSetSpec& spec) {
  FeatureVector out;
  out.layout = spec;
  out.label = v.label;
  out.source = v.source;
  out.values.reserve(spec.dimension());
  for (const auto g : spec.groups()) {
    if (!v.layout.contains(g)) {
      throw Error(Errc::dimension, "feature group '" + std::string(group_name(g)) + "' missing from vector");
    }
    const auto values = v.group(g);
    if (spec.size_of(g) > values.size()) throw Error(Errc::dimension, "shen group lacks mf");
    out.values.insert(out.values.end(), values.begin(), values.begin() + static_cast<std::ptrdiff_t>(spec.size_of(g)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache: one JSON header line, then one line per leaf:
//   <path> TAB <label or -1> TAB <v0>,<v1>,...
// Values use the shortest decimal form that round-trips exactly.

inline constexpr int kCacheFormatVersion = 1;

struct FeatureCache {
  FeatureSetSpec layout = FeatureSetSpec::full_layout();
  ExtractionParams params;
  std::vector<std::string> class_names;
  std::vector<FeatureVector> rows;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(Errc::format, "bad number '" + std::string(text) + "'");
  }
  return v;
}

inline nlohmann::ordered_json layout_json(const FeatureSetSpec& layout) {
  auto groups = nlohmann::ordered_json::array();
  for (const auto g : layout.groups()) groups.push_back({{"group", group_name(g)}, {"size", layout.size_of(g)}});
  return groups;
}

inline FeatureSetSpec layout_from_json(const nlohmann::json& j) {
  std::vector<FeatureGroup> groups;
  bool mf = true;
  for (const auto& entry : j) {
    const auto g = parse_group(entry.at("group").get<std::string>());
    const auto size = entry.at("size").get<std::size_t>();
    if (g == FeatureGroup::shen && size == 2) {
      mf = false;
    } else if (size != group_size(g)) {
      throw Error(Errc::format, "group '" + std::string(group_name(g)) + "' has unexpected size");
    }
    groups.push_back(g);
  }
  FeatureSetSpec spec(groups, mf);
  if (spec.groups() != groups) throw Error(Errc::format, "layout groups are not in canonical order");
  return spec;
}

inline void save_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  nlohmann::ordered_json header;
  header["format"] = "leafid-features";
  header["version"] = kCacheFormatVersion;
  header["layout"] = layout_json(cache.layout);
  header["dimension"] = cache.layout.dimension();
  header["params"] = to_json(cache.params);
  header["classes"] = cache.class_names;
  header["rows"] = cache.rows.size();
  header["config"] = cache.config;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
  out << header.dump() << '\n';
  for (const auto& row : cache.rows) {
    if (row.values.size() != cache.layout.dimension() || !(row.layout == cache.layout)) {
      throw Error(Errc::cache, "row '" + row.source + "' does not match the cache layout");
    }
    if (row.source.find_first_of("\t\n") != std::string::npos) {
      throw Error(Errc::cache, "source path contains a tab or newline: '" + row.source + "'");
    }
    out << row.source << '\t' << row.label.value_or(-1) << '\t';
    for (std::size_t k = 0; k < row.values.size(); ++k) {
      if (k) out << ',';
      out << format_double(row.values[k]);
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::io, "failed writing '" + path.string() + "'");
}

inline FeatureCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::cache, "'" + path.string() + "' is empty");

  FeatureCache cache;
  std::size_t expected_rows = 0;
  try {
    const auto header = nlohmann::ordered_json::parse(line);
    if (header.at("format").get<std::string>() != "leafid-features") throw Error(Errc::cache, "not a feature cache");
    if (header.at("version").get<int>() != kCacheFormatVersion) throw Error(Errc::cache, "unsupported cache version");
    cache.layout = layout_from_json(header.at("layout"));
    if (header.at("dimension").get<std::size_t>() != cache.layout.dimension()) {
      throw Error(Errc::cache, "dimension does not match layout");
    }
    cache.params = extraction_params_from_json(header.at("params"));
    cache.class_names = header.at("classes").get<std::vector<std::string>>();
    expected_rows = header.at("rows").get<std::size_t>();
    if (header.contains("config")) cache.config = header.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::cache, "bad header in '" + path.string() + "': " + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::cache) throw;
    throw Error(Errc::cache, "bad header in '" + path.string() + "': " + e.what());
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw Error(Errc::cache, path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    FeatureVector row;
    row.layout = cache.layout;
    row.source = line.substr(0, tab1);
    try {
      const int label = static_cast<int>(parse_double(std::string_view(line).substr(tab1 + 1, tab2 - tab1 - 1)));
      if (label >= 0) row.label = label;
      std::string_view rest = std::string_view(line).substr(tab2 + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        row.values.push_back(parse_double(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    } catch (const Error& e) {
      throw Error(Errc::cache, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (row.values.size() != cache.layout.dimension()) {
      throw Error(Errc::cache, path.string() + ":" + std::to_string(line_no) + ": wrong value count");
    }
    if (row.label && *row.label >= static_cast<int>(cache.class_names.size()) && !cache.class_names.empty()) {
      throw Error(Errc::cache, path.string() + ":" + std::to_string(line_no) + ": label out of range");
    }
    cache.rows.push_back(std::move(row));
  }
  if (cache.rows.size() != expected_rows) throw Error(Errc::cache, "row count does not match header");
  return cache;
}

/// Loads a cache and rejects it unless it was built with `expected` params.
inline FeatureCache load_cache(const std::filesystem::path& path, const ExtractionParams& expected) {
  FeatureCache cache = load_cache(path);
  if (!(cache.params == expected)) {
    throw Error(Errc::cache, "'" + path.string() + "' was extracted with different parameters: " +
                                 to_json(cache.params).dump() + " vs " + to_json(expected).dump());
  }
  return cache;
}

}  // namespace leafid
