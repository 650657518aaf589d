// leafid: extract, train, classify, evaluate and ablate from the command line.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leafid/leafid.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
  std::string layout = "class-subdirs";
  std::string ranges;
  int reference = 30;
  int test = 10;
  std::string split_rule = "sorted";
  std::uint64_t seed = 0;
  std::string spec = "pft+hull+color+vein+glcm+lacunarity+shen";
  int glcm_levels = leafid::kDefaultGlcmLevels;
  int signature_points = leafid::kDefaultSignaturePoints;
  int polar_radial = leafid::kDefaultPolarRadial;
  int polar_angular = leafid::kDefaultPolarAngular;
  std::string vein_polarity = "bright";
  double ridge_factor = 1e-6;
  unsigned jobs = 0;
  int verbose = 0;

  leafid::ExtractionParams params() const {
    leafid::ExtractionParams p;
    p.glcm_levels = glcm_levels;
    p.signature_points = signature_points;
    p.polar_radial = polar_radial;
    p.polar_angular = polar_angular;
    p.vein_polarity = vein_polarity == "dark" ? leafid::VeinPolarity::dark : leafid::VeinPolarity::bright;
    p.validate();
    return p;
  }

  leafid::SplitPlan plan() const {
    leafid::SplitPlan p;
    p.reference = reference;
    p.test = test;
    p.rule = split_rule == "seeded" ? leafid::SplitRule::seeded_random : leafid::SplitRule::sorted_by_name;
    p.seed = seed;
    return p;
  }

  leafid::FitOptions fit_options() const { return {ridge_factor}; }

  // Everything that influences results; jobs and verbosity do not.
  ordered_json echo() const {
    ordered_json j;
    j["layout"] = layout;
    j["ranges"] = ranges.empty() ? "builtin" : ranges;
    j["split"] = leafid::to_json(plan());
    j["spec"] = spec;
    j["params"] = leafid::to_json(params());
    j["ridge_factor"] = ridge_factor;
    return j;
  }
};

void log(const RunConfig& cfg, const std::string& msg) {
  if (cfg.verbose > 0) std::cerr << msg << '\n';
}

bool is_cache_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) return false;
  std::ifstream in(p, std::ios::binary);
  return in.peek() == '{';
}

leafid::DatasetManifest manifest_for(const fs::path& root, const RunConfig& cfg) {
  const auto ranges = cfg.ranges.empty() ? leafid::default_flavia_ranges() : leafid::load_species_ranges(cfg.ranges);
  return leafid::build_manifest(root, leafid::parse_layout(cfg.layout), ranges);
}

void export_debug(const fs::path& dir, const std::vector<leafid::ManifestEntry>& entries,
                  const leafid::ExtractionParams& params) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto img = leafid::load_image(entries[i].path);
    const auto a = leafid::analyze_leaf(img, params, entries[i].path);
    std::ostringstream stem;
    stem << std::setw(5) << std::setfill('0') << i << '_' << fs::path(entries[i].path).stem().string();
    leafid::save_png(dir / (stem.str() + "_mask.png"), a.mask);
    const auto maps = leafid::vein_maps(a.gray, a.mask, params.vein_polarity);
    for (std::size_t r = 0; r < maps.size(); ++r) {
      leafid::save_png(dir / (stem.str() + "_vein_r" + std::to_string(r + 1) + ".png"), maps[r]);
    }
  }
}

/// Features for every image under `input`, or the rows of a cache file.
leafid::FeatureCache gather(const fs::path& input, const RunConfig& cfg, const leafid::ExtractionParams& params,
                            const std::string& debug_dir = {}) {
  if (is_cache_file(input)) {
    log(cfg, "reading cache " + input.string());
    return leafid::load_cache(input, params);
  }
  const auto manifest = manifest_for(input, cfg);
  log(cfg, "extracting " + std::to_string(manifest.entries.size()) + " images from " + input.string());
  leafid::FeatureCache cache;
  cache.params = params;
  cache.class_names = manifest.class_names;
  cache.rows = leafid::extract_entries(manifest.entries, params, cfg.jobs ? cfg.jobs : leafid::default_jobs());
  if (!debug_dir.empty()) export_debug(debug_dir, manifest.entries, params);
  return cache;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw leafid::Error(leafid::Errc::io, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw leafid::Error(leafid::Errc::io, "cannot write '" + path.string() + "'");
  out << text;
}

std::vector<leafid::FeatureVector> project_all(const std::vector<leafid::FeatureVector>& rows,
                                               const leafid::FeatureSetSpec& spec) {
  std::vector<leafid::FeatureVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(leafid::project(r, spec));
  return out;
}

std::string summary(const leafid::EvaluationReport& r) {
  std::ostringstream out;
  out << "accuracy " << std::fixed << std::setprecision(4) << r.accuracy << " (" << r.n_r << '/' << r.n_t << ")\n";
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Leaf species identification from shape, colour, texture and vein features"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat key=value file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);

  app.add_option("--layout", cfg.layout, "Dataset layout")
      ->check(CLI::IsMember({"class-subdirs", "flavia-ranges", "manifest-file"}));
  app.add_option("--ranges", cfg.ranges, "Filename-number range table for flavia-ranges");
  app.add_option("--reference", cfg.reference, "Reference images per class")->check(CLI::PositiveNumber);
  app.add_option("--test", cfg.test, "Test images per class")->check(CLI::PositiveNumber);
  app.add_option("--split", cfg.split_rule, "Split rule")->check(CLI::IsMember({"sorted", "seeded"}));
  app.add_option("--seed", cfg.seed, "Seed for the seeded split");
  app.add_option("--spec", cfg.spec, "Feature groups joined by '+'");
  app.add_option("--glcm-levels", cfg.glcm_levels, "Gray levels of the co-occurrence matrix")->check(CLI::Range(2, 256));
  app.add_option("--signature-points", cfg.signature_points, "Radial signature length")->check(CLI::Range(4, 1 << 20));
  app.add_option("--polar-radial", cfg.polar_radial, "Polar grid radii")->check(CLI::Range(8, 4096));
  app.add_option("--polar-angular", cfg.polar_angular, "Polar grid angles")->check(CLI::Range(8, 4096));
  app.add_option("--vein-polarity", cfg.vein_polarity, "Vein contrast")->check(CLI::IsMember({"bright", "dark"}));
  app.add_option("--ridge", cfg.ridge_factor, "Covariance ridge factor")->check(CLI::NonNegativeNumber);
  app.add_option("--jobs", cfg.jobs, "Concurrent extraction jobs (default: LEAFID_JOBS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", cfg.verbose, "Progress messages on stderr");

  std::string input;
  std::string out_path;
  std::string debug_dir;
  std::string table_path;
  std::string specs_path = std::string(LEAFID_DATA_DIR) + "/ablation_specs.txt";
  std::string model_path;
  std::vector<std::string> images;
  int top = 1;
  bool use_all = false;

  auto* extract = app.add_subcommand("extract", "Extract features of a dataset into a cache");
  extract->add_option("root", input, "Dataset root")->required();
  extract->add_option("--out", out_path, "Cache file")->required();
  extract->add_option("--debug-dir", debug_dir, "Write masks and vein maps here");

  auto* train = app.add_subcommand("train", "Fit a classifier on the reference split");
  train->add_option("input", input, "Cache file or dataset root")->required();
  train->add_option("--out", out_path, "Model file")->required();
  train->add_flag("--all", use_all, "Fit on every row instead of the reference split");

  auto* classify = app.add_subcommand("classify", "Predict the species of leaf images");
  classify->add_option("model", model_path, "Model file")->required();
  classify->add_option("images", images, "Leaf images")->required();
  classify->add_option("--top", top, "Species listed per image")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Accuracy and confusion on the test split");
  evaluate->add_option("model", model_path, "Model file")->required();
  evaluate->add_option("input", input, "Cache file or dataset root")->required();
  evaluate->add_option("--out", out_path, "Report JSON");
  evaluate->add_flag("--all", use_all, "Evaluate every row instead of the test split");

  auto* ablate = app.add_subcommand("ablate", "Evaluate a list of feature combinations");
  ablate->add_option("input", input, "Cache file or dataset root")->required();
  ablate->add_option("--specs", specs_path, "Spec list, one 'name: groups' per line");
  ablate->add_option("--out", out_path, "Report JSON");
  ablate->add_option("--table", table_path, "Text table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto params = cfg.params();
    const auto echo = cfg.echo();

    if (extract->parsed()) {
      auto cache = gather(input, cfg, params, debug_dir);
      cache.config = echo;
      leafid::save_cache(out_path, cache);
      std::cout << "extracted " << cache.rows.size() << " leaves, " << cache.class_names.size() << " classes\n";
    } else if (train->parsed()) {
      const auto spec = leafid::FeatureSetSpec::parse(cfg.spec);
      const auto cache = gather(input, cfg, params);
      const auto rows = use_all ? cache.rows : leafid::split(cache.rows, cache.class_names, cfg.plan()).first;
      auto model = leafid::fit(project_all(rows, spec), cfg.fit_options());
      model.layout = spec;
      model.params = params;
      model.class_names = cache.class_names;
      leafid::save_model(out_path, model, echo);
      std::cout << "trained on " << rows.size() << " leaves, " << model.classes() << " classes, "
                << model.dimension() << " features\n";
    } else if (classify->parsed()) {
      const auto model = leafid::load_model(model_path);
      for (const auto& image : images) {
        const auto fv = leafid::project(leafid::extract_all(leafid::load_image(image), model.params, image), model.layout);
        const auto post = leafid::posterior(model, fv);
        std::vector<std::size_t> order(post.probs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return post.probs[a] > post.probs[b]; });
        std::cout << image;
        for (int k = 0; k < std::min<int>(top, static_cast<int>(order.size())); ++k) {
          const auto c = order[static_cast<std::size_t>(k)];
          const auto name = c < model.class_names.size() ? model.class_names[c] : std::to_string(c);
          std::cout << '\t' << name << '\t' << std::fixed << std::setprecision(6) << post.probs[c];
        }
        std::cout << '\n';
      }
    } else if (evaluate->parsed()) {
      const auto model = leafid::load_model(model_path);
      const auto cache = gather(input, cfg, model.params);
      if (!model.class_names.empty() && cache.class_names != model.class_names) {
        throw leafid::Error(leafid::Errc::dimension, "dataset classes differ from the model's classes");
      }
      const auto rows = use_all ? cache.rows : leafid::split(cache.rows, cache.class_names, cfg.plan()).second;
      auto report = leafid::evaluate(model, project_all(rows, model.layout));
      report.parameters = echo;
      if (!out_path.empty()) write_json(out_path, leafid::to_json(report));
      std::cout << summary(report);
    } else if (ablate->parsed()) {
      const auto specs = leafid::load_spec_list(specs_path);
      const auto cache = gather(input, cfg, params);
      const auto [refs, tests] = leafid::split(cache.rows, cache.class_names, cfg.plan());
      auto rows = leafid::run_ablation(refs, tests, cache.class_names, specs, cfg.fit_options());
      for (auto& r : rows) r.report.parameters = echo;
      const auto table = leafid::ablation_table(rows);
      if (!out_path.empty()) write_json(out_path, leafid::ablation_json(rows, echo));
      if (!table_path.empty()) write_text(table_path, table);
      std::cout << table;
    }
  } catch (const leafid::Error& e) {
    std::cerr << "leafid: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "leafid: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
