#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "leafid/classifier.hpp"
#include "leafid/features.hpp"
#include "leafid/io.hpp"

namespace leafid {

enum class DatasetLayout { class_subdirs, flavia_ranges, manifest_file };

inline DatasetLayout parse_layout(std::string_view name) {
  if (name == "class-subdirs") return DatasetLayout::class_subdirs;
  if (name == "flavia-ranges") return DatasetLayout::flavia_ranges;
  if (name == "manifest-file") return DatasetLayout::manifest_file;
  throw Error(Errc::invalid_argument, "unknown dataset layout '" + std::string(name) + "'");
}

struct ManifestEntry {
  std::string path;
  int label = 0;
  std::string species;
};

struct DatasetManifest {
  std::string dataset_id = "custom";
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;

  int classes() const noexcept { return static_cast<int>(class_names.size()); }
};

/// Inclusive filename-number range of one Flavia species.
struct SpeciesRange {
  int first = 0;
  int last = 0;
  std::string species;
};

/// Filename ranges of the 32 Flavia species, as published with the dataset.
/// Also shipped as data/flavia_ranges.csv for editing.
inline std::vector<SpeciesRange> default_flavia_ranges() {
  return {
      {1001, 1059, "pubescent bamboo"},        {1060, 1122, "Chinese horse chestnut"},
      {1552, 1616, "Anhui Barberry"},          {1123, 1194, "Chinese redbud"},
      {1195, 1267, "true indigo"},             {1268, 1323, "Japanese maple"},
      {1324, 1385, "Nanmu"},                   {1386, 1437, "castor aralia"},
      {1497, 1551, "Chinese cinnamon"},        {1438, 1496, "goldenrain tree"},
      {2001, 2050, "Big-fruited Holly"},       {2051, 2113, "Japanese cheesewood"},
      {2114, 2165, "wintersweet"},             {2166, 2230, "camphortree"},
      {2231, 2290, "Japan Arrowwood"},         {2291, 2346, "sweet osmanthus"},
      {2347, 2423, "deodar"},                  {2424, 2485, "ginkgo, maidenhair tree"},
      {2486, 2546, "Crape myrtle, Crepe myrtle"}, {2547, 2612, "oleander"},
      {2616, 2675, "yew plum pine"},           {3001, 3055, "Japanese Flowering Cherry"},
      {3056, 3110, "Glossy Privet"},           {3111, 3175, "Chinese Toon"},
      {3176, 3229, "peach"},                   {3230, 3281, "Ford Woodlotus"},
      {3282, 3334, "trident maple"},           {3335, 3389, "Beale's barberry"},
      {3390, 3446, "southern magnolia"},       {3447, 3510, "Canadian poplar"},
      {3511, 3563, "Chinese tulip tree"},      {3566, 3621, "tangerine"},
  };
}

/// Reads "first,last,species" lines ('#' comments allowed).
inline std::vector<SpeciesRange> load_species_ranges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::vector<SpeciesRange> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw Error(Errc::manifest, "bad range line '" + line + "'");
    try {
      out.push_back({std::stoi(line.substr(0, c1)), std::stoi(line.substr(c1 + 1, c2 - c1 - 1)), line.substr(c2 + 1)});
    } catch (const std::exception&) {
      throw Error(Errc::manifest, "bad range line '" + line + "'");
    }
  }
  return out;
}

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

namespace detail {

inline void check_manifest(const DatasetManifest& m) {
  if (m.classes() < 2) throw Error(Errc::manifest, "dataset needs at least 2 classes");
  std::set<std::string> seen;
  std::vector<int> per_class(static_cast<std::size_t>(m.classes()), 0);
  for (const auto& e : m.entries) {
    if (!seen.insert(e.path).second) throw Error(Errc::manifest, "duplicate path '" + e.path + "'");
    if (e.label < 0 || e.label >= m.classes()) throw Error(Errc::manifest, "label out of range for '" + e.path + "'");
    ++per_class[static_cast<std::size_t>(e.label)];
  }
  for (int i = 0; i < m.classes(); ++i) {
    if (per_class[static_cast<std::size_t>(i)] == 0) {
      throw Error(Errc::manifest, "class '" + m.class_names[static_cast<std::size_t>(i)] + "' has no images");
    }
  }
}

inline std::vector<std::filesystem::path> sorted_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline DatasetManifest manifest_from_subdirs(const std::filesystem::path& root) {
  DatasetManifest m;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto images = sorted_images(dir);
    if (images.empty()) continue;
    const int label = m.classes();
    m.class_names.push_back(dir.filename().string());
    for (const auto& img : images) m.entries.push_back({img.string(), label, m.class_names.back()});
  }
  return m;
}

inline DatasetManifest manifest_from_ranges(const std::filesystem::path& root, std::vector<SpeciesRange> ranges) {
  DatasetManifest m;
  m.dataset_id = "flavia";
  std::sort(ranges.begin(), ranges.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& r : ranges) m.class_names.push_back(r.species);

  std::vector<std::string> offenders;
  for (const auto& img : sorted_images(root)) {
    const std::string stem = img.stem().string();
    int number = -1;
    if (!stem.empty() && std::all_of(stem.begin(), stem.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
      number = std::stoi(stem);
    }
    int label = -1;
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      if (number >= ranges[i].first && number <= ranges[i].last) label = static_cast<int>(i);
    }
    if (label < 0) {
      offenders.push_back(img.filename().string());
      continue;
    }
    m.entries.push_back({img.string(), label, ranges[static_cast<std::size_t>(label)].species});
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw Error(Errc::manifest, "files outside every species range: " + list);
  }
  return m;
}

}  // namespace detail

/// Manifest file: a header line, then one "path,label,species" line per
/// image. Relative paths resolve against the manifest's directory.
inline DatasetManifest load_manifest_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::io, "cannot open '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,label,species", 0) != 0) {
    throw Error(Errc::manifest, "'" + file.string() + "' lacks the 'path,label,species' header");
  }
  DatasetManifest m;
  const auto base = file.parent_path();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos || c2 == 0 ? std::string::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) {
      throw Error(Errc::manifest, file.string() + ":" + std::to_string(line_no) + ": expected path,label,species");
    }
    ManifestEntry e;
    std::filesystem::path p = line.substr(0, c1);
    e.path = (p.is_relative() ? base / p : p).lexically_normal().string();
    try {
      e.label = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
      throw Error(Errc::manifest, file.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    e.species = line.substr(c2 + 1);
    if (e.label < 0) throw Error(Errc::manifest, file.string() + ":" + std::to_string(line_no) + ": negative label");
    if (static_cast<std::size_t>(e.label) >= m.class_names.size()) m.class_names.resize(static_cast<std::size_t>(e.label) + 1);
    auto& name = m.class_names[static_cast<std::size_t>(e.label)];
    if (name.empty()) {
      name = e.species;
    } else if (name != e.species) {
      throw Error(Errc::manifest, file.string() + ":" + std::to_string(line_no) + ": label " +
                                      std::to_string(e.label) + " used for two species");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest_file(const std::filesystem::path& file, const DatasetManifest& m) {
  std::ofstream out(file);
  if (!out) throw Error(Errc::io, "cannot write '" + file.string() + "'");
  out << "path,label,species\n";
  for (const auto& e : m.entries) out << e.path << ',' << e.label << ',' << e.species << '\n';
}

inline DatasetManifest build_manifest(const std::filesystem::path& root, DatasetLayout layout,
                                      const std::vector<SpeciesRange>& ranges = default_flavia_ranges()) {
  if (!std::filesystem::exists(root)) throw Error(Errc::manifest, "'" + root.string() + "' does not exist");
  DatasetManifest m;
  switch (layout) {
    case DatasetLayout::class_subdirs: m = detail::manifest_from_subdirs(root); break;
    case DatasetLayout::flavia_ranges: m = detail::manifest_from_ranges(root, ranges); break;
    case DatasetLayout::manifest_file: m = load_manifest_file(root); break;
  }
  if (m.entries.empty()) throw Error(Errc::manifest, "no images found under '" + root.string() + "'");
  detail::check_manifest(m);
  return m;
}

// ---------------------------------------------------------------------------
// Splits

enum class SplitRule { sorted_by_name, seeded_random };

struct SplitPlan {
  int reference = 30;
  int test = 10;
  SplitRule rule = SplitRule::sorted_by_name;
  std::uint64_t seed = 0;

  static SplitPlan flavia() { return {30, 10, SplitRule::sorted_by_name, 0}; }
  static SplitPlan foliage() { return {90, 20, SplitRule::sorted_by_name, 0}; }
};

inline nlohmann::ordered_json to_json(const SplitPlan& plan) {
  return {{"reference", plan.reference},
          {"test", plan.test},
          {"rule", plan.rule == SplitRule::sorted_by_name ? "sorted" : "random"},
          {"seed", plan.seed}};
}

struct SplitIndices {
  std::vector<std::size_t> reference;
  std::vector<std::size_t> test;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Unbiased draw in [0, bound) from the engine's raw output. Avoids
/// std::uniform_int_distribution, whose algorithm differs across libraries.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

}  // namespace detail

/// Per-class reference/test selection over items identified by (name, label).
/// Surplus items beyond reference + test are left out.
inline SplitIndices split_items(const std::vector<std::string>& names, const std::vector<int>& labels,
                                const std::vector<std::string>& class_names, const SplitPlan& plan) {
  if (plan.reference <= 0 || plan.test <= 0) throw Error(Errc::split, "split counts must be positive");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  SplitIndices out;
  for (auto& [label, members] : by_class) {
    const std::size_t need = static_cast<std::size_t>(plan.reference) + static_cast<std::size_t>(plan.test);
    if (members.size() < need) {
      const std::string name = label >= 0 && static_cast<std::size_t>(label) < class_names.size()
                                   ? class_names[static_cast<std::size_t>(label)]
                                   : std::to_string(label);
      throw Error(Errc::split, "class '" + name + "' has " + std::to_string(members.size()) + " images, needs " +
                                   std::to_string(need));
    }
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return names[a] < names[b]; });
    if (plan.rule == SplitRule::seeded_random) {
      std::mt19937_64 rng(detail::splitmix64(plan.seed ^ detail::splitmix64(static_cast<std::uint64_t>(label))));
      for (std::size_t i = members.size() - 1; i > 0; --i) {
        std::swap(members[i], members[detail::bounded(rng, i + 1)]);
      }
    }
    out.reference.insert(out.reference.end(), members.begin(), members.begin() + plan.reference);
    out.test.insert(out.test.end(), members.begin() + plan.reference, members.begin() + static_cast<std::ptrdiff_t>(need));
  }
  return out;
}

struct ManifestSplit {
  std::vector<ManifestEntry> reference;
  std::vector<ManifestEntry> test;
};

inline ManifestSplit split(const DatasetManifest& manifest, const SplitPlan& plan) {
  std::vector<std::string> names;
  std::vector<int> labels;
  for (const auto& e : manifest.entries) {
    names.push_back(std::filesystem::path(e.path).filename().string() + '\n' + e.path);
    labels.push_back(e.label);
  }
  const auto idx = split_items(names, labels, manifest.class_names, plan);
  ManifestSplit out;
  for (auto i : idx.reference) out.reference.push_back(manifest.entries[i]);
  for (auto i : idx.test) out.test.push_back(manifest.entries[i]);
  return out;
}

/// Splits cache rows by label using each row's source path as its name.
inline std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> split(const std::vector<FeatureVector>& rows,
                                                                               const std::vector<std::string>& class_names,
                                                                               const SplitPlan& plan) {
  std::vector<std::string> names;
  std::vector<int> labels;
  for (const auto& r : rows) {
    if (!r.label) throw Error(Errc::split, "row '" + r.source + "' has no label");
    names.push_back(std::filesystem::path(r.source).filename().string() + '\n' + r.source);
    labels.push_back(*r.label);
  }
  const auto idx = split_items(names, labels, class_names, plan);
  std::pair<std::vector<FeatureVector>, std::vector<FeatureVector>> out;
  for (auto i : idx.reference) out.first.push_back(rows[i]);
  for (auto i : idx.test) out.second.push_back(rows[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Extraction

inline unsigned default_jobs() {
  if (const char* env = std::getenv("LEAFID_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Extracts full-layout features for every entry, using up to `jobs`
/// threads. Output order follows the input; the first failure (in input
/// order) is rethrown.
inline std::vector<FeatureVector> extract_entries(const std::vector<ManifestEntry>& entries,
                                                  const ExtractionParams& params, unsigned jobs = default_jobs()) {
  std::vector<FeatureVector> rows(entries.size());
  std::vector<std::exception_ptr> errors(entries.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        const auto img = load_image(entries[i].path);
        rows[i] = extract_all(img, params, entries[i].path);
        rows[i].label = entries[i].label;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(entries.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationReport {
  std::string spec;
  std::size_t dimension = 0;
  std::size_t n_r = 0;
  std::size_t n_t = 0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> per_class_accuracy;
  std::vector<std::string> class_names;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
};

inline EvaluationReport evaluate(const ClassModel& model, const std::vector<FeatureVector>& tests) {
  if (tests.empty()) throw Error(Errc::invalid_argument, "empty test set");
  const auto c = static_cast<std::size_t>(model.classes());
  EvaluationReport r;
  r.spec = model.layout.name();
  r.dimension = static_cast<std::size_t>(model.dimension());
  r.class_names = model.class_names;
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (const auto& x : tests) {
    if (!x.label || *x.label < 0 || static_cast<std::size_t>(*x.label) >= c) {
      throw Error(Errc::invalid_argument, "test row '" + x.source + "' has no valid label");
    }
    const auto predicted = static_cast<std::size_t>(classify(model, x));
    ++r.confusion[static_cast<std::size_t>(*x.label)][predicted];
    r.n_r += predicted == static_cast<std::size_t>(*x.label);
    ++r.n_t;
  }
  r.accuracy = static_cast<double>(r.n_r) / static_cast<double>(r.n_t);
  r.per_class_accuracy.assign(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    std::size_t row = 0;
    for (auto v : r.confusion[i]) row += v;
    r.per_class_accuracy[i] = row ? static_cast<double>(r.confusion[i][i]) / static_cast<double>(row) : 0.0;
  }
  return r;
}

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["spec"] = r.spec;
  j["dimension"] = r.dimension;
  j["accuracy"] = r.accuracy;
  j["n_r"] = r.n_r;
  j["n_t"] = r.n_t;
  j["classes"] = r.class_names;
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["confusion"] = r.confusion;
  j["parameters"] = r.parameters;
  return j;
}

// ---------------------------------------------------------------------------
// Ablation

struct NamedSpec {
  std::string name;
  FeatureSetSpec spec;
};

/// Spec list file: "name: group+group+..." per line, '#' comments.
inline std::vector<NamedSpec> load_spec_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::vector<NamedSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw Error(Errc::invalid_argument, "spec line lacks 'name:' prefix: " + line);
    std::string name = line.substr(first, colon - first);
    name.erase(name.find_last_not_of(" \t") + 1);
    std::string groups = line.substr(colon + 1);
    groups.erase(groups.find_last_not_of(" \t\r") + 1);
    out.push_back({name, FeatureSetSpec::parse(groups)});
  }
  if (out.empty()) throw Error(Errc::invalid_argument, "'" + path.string() + "' lists no specs");
  return out;
}

/// The ten feature combinations of the reference ablation.
inline std::vector<NamedSpec> ablation_specs() {
  using G = FeatureGroup;
  const std::vector<G> base = {G::pft, G::hull, G::color};
  const auto with = [&](std::initializer_list<G> extra) {
    std::vector<G> g = base;
    g.insert(g.end(), extra);
    return FeatureSetSpec(g);
  };
  return {
      {"row1", FeatureSetSpec{G::pft}},
      {"row2", FeatureSetSpec{G::pft, G::hull}},
      {"row3", with({})},
      {"row4", with({G::vein})},
      {"row5", with({G::glcm})},
      {"row6", with({G::vein, G::glcm})},
      {"row7", with({G::vein, G::lacunarity})},
      {"row8", with({G::vein, G::glcm, G::lacunarity})},
      {"row9", with({G::vein, G::glcm, G::lacunarity, G::aux_shape})},
      {"row10", with({G::vein, G::glcm, G::lacunarity, G::shen})},
  };
}

struct AblationRow {
  std::string name;
  EvaluationReport report;
};

/// Fits and evaluates one model per spec on features extracted once.
inline std::vector<AblationRow> run_ablation(const std::vector<FeatureVector>& references,
                                             const std::vector<FeatureVector>& tests,
                                             const std::vector<std::string>& class_names,
                                             const std::vector<NamedSpec>& specs, const FitOptions& options = {}) {
  std::vector<AblationRow> out;
  for (const auto& s : specs) {
    try {
      std::vector<FeatureVector> ref;
      std::vector<FeatureVector> tst;
      ref.reserve(references.size());
      tst.reserve(tests.size());
      for (const auto& r : references) ref.push_back(project(r, s.spec));
      for (const auto& t : tests) tst.push_back(project(t, s.spec));
      ClassModel model = fit(ref, options);
      model.class_names = class_names;
      out.push_back({s.name, evaluate(model, tst)});
    } catch (const Error& e) {
      throw Error(e.code(), "spec '" + s.name + "' (" + s.spec.name() + "): " + e.what());
    }
  }
  return out;
}

inline nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows,
                                            const nlohmann::ordered_json& config_echo) {
  nlohmann::ordered_json j;
  j["format"] = "leafid-ablation";
  j["version"] = 1;
  j["config"] = config_echo;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    auto r = to_json(row.report);
    r["name"] = row.name;
    arr.push_back(std::move(r));
  }
  j["rows"] = std::move(arr);
  return j;
}

/// Aligned text table: name, feature groups, dimension, accuracy.
inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t name_w = 4;
  std::size_t spec_w = 8;
  for (const auto& r : rows) {
    name_w = std::max(name_w, r.name.size());
    spec_w = std::max(spec_w, r.report.spec.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "name" << "  " << std::setw(static_cast<int>(spec_w))
      << "features" << "  " << std::right << std::setw(5) << "dim" << "  " << std::setw(9) << "accuracy" << "  "
      << "correct\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_w)) << r.name << "  " << std::setw(static_cast<int>(spec_w))
        << r.report.spec << "  " << std::right << std::setw(5) << r.report.dimension << "  " << std::setw(8)
        << std::fixed << std::setprecision(2) << 100.0 * r.report.accuracy << "%  " << r.report.n_r << '/'
        << r.report.n_t << '\n';
  }
  return out.str();
}

}  // namespace leafid
