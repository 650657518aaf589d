// Acceptance run: one PASS/FAIL/SKIP line per criterion. Exits non-zero if
// any criterion fails. Dataset criteria read LEAFID_FLAVIA_ROOT and
// LEAFID_FOLIAGE_ROOT (layouts: LEAFID_FLAVIA_LAYOUT, LEAFID_FOLIAGE_LAYOUT).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "leafid/leafid.hpp"
#include "support/dataset.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace leafid;
using namespace leafid::testing;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::pass;
  std::string detail;
};

/// Collects the first few violated expectations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (++failures_ <= 3) notes_ += (notes_.empty() ? "" : "; ") + what;
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(17);
    s << what << " = " << got << ", expected " << want << " +- " << tol;
    expect(std::abs(got - want) <= tol, s.str());
  }
  Outcome done(const std::string& summary) const {
    if (failures_ == 0) return {Verdict::pass, summary};
    return {Verdict::fail, std::to_string(failures_) + " violation(s): " + notes_};
  }

 private:
  int failures_ = 0;
  std::string notes_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Dataset criteria

struct DatasetRun {
  std::vector<FeatureVector> reference;
  std::vector<FeatureVector> test;
  std::vector<std::string> classes;
  double extract_seconds = 0.0;
};

std::optional<DatasetRun> load_dataset(const char* root_var, const char* layout_var, const char* default_layout) {
  const char* root = std::getenv(root_var);
  if (!root || !*root || !fs::exists(root)) return std::nullopt;
  const char* layout = std::getenv(layout_var);
  const auto manifest = build_manifest(root, parse_layout(layout && *layout ? layout : default_layout));
  const auto start = std::chrono::steady_clock::now();
  const auto rows = extract_entries(manifest.entries, {}, 1);
  DatasetRun run;
  run.extract_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.classes = manifest.class_names;
  std::tie(run.reference, run.test) = split(rows, manifest.class_names, SplitPlan{});
  return run;
}

std::vector<AblationRow> rows_of(const DatasetRun& run, std::initializer_list<int> table_rows) {
  const auto all = ablation_specs();
  std::vector<NamedSpec> specs;
  for (int r : table_rows) specs.push_back(all[static_cast<std::size_t>(r - 1)]);
  return run_ablation(run.reference, run.test, run.classes, specs);
}

std::optional<DatasetRun>& flavia() {
  static std::optional<DatasetRun> run = load_dataset("LEAFID_FLAVIA_ROOT", "LEAFID_FLAVIA_LAYOUT", "flavia-ranges");
  return run;
}

Outcome criterion_1() {
  if (!flavia()) return {Verdict::skip, "Flavia dataset absent, set LEAFID_FLAVIA_ROOT"};
  const auto start = std::chrono::steady_clock::now();
  const auto rows = rows_of(*flavia(), {10});
  const double seconds =
      flavia()->extract_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Check c;
  c.expect(rows[0].report.accuracy >= 0.90, "row-10 accuracy " + fmt(rows[0].report.accuracy) + " < 0.90");
  c.expect(seconds <= 1800.0, "runtime " + fmt(seconds, 0) + " s > 1800 s");
  return c.done("row-10 accuracy " + fmt(rows[0].report.accuracy) + ", " + fmt(seconds, 0) + " s");
}

Outcome criterion_2() {
  if (!flavia()) return {Verdict::skip, "Flavia dataset absent, set LEAFID_FLAVIA_ROOT"};
  const auto rows = rows_of(*flavia(), {1, 3, 10});
  const double a1 = rows[0].report.accuracy;
  const double a3 = rows[1].report.accuracy;
  const double a10 = rows[2].report.accuracy;
  Check c;
  c.expect(a3 - a1 > 0.02, "row 3 does not beat row 1 by 2 points");
  c.expect(a10 - a3 > 0.02, "row 10 does not beat row 3 by 2 points");
  return c.done("rows 1/3/10: " + fmt(a1) + " < " + fmt(a3) + " < " + fmt(a10));
}

Outcome criterion_3() {
  const auto run = load_dataset("LEAFID_FOLIAGE_ROOT", "LEAFID_FOLIAGE_LAYOUT", "class-subdirs");
  if (!run) return {Verdict::skip, "Foliage dataset absent, set LEAFID_FOLIAGE_ROOT"};
  const auto rows = rows_of(*run, {10});
  Check c;
  c.expect(rows[0].report.accuracy >= 0.88, "row-10 accuracy " + fmt(rows[0].report.accuracy) + " < 0.88");
  return c.done("row-10 accuracy " + fmt(rows[0].report.accuracy));
}

// ---------------------------------------------------------------------------
// Property criteria

Outcome criterion_4() {
  GrayImage g(2, 2, 0);
  g(0, 1) = 255;
  g(1, 1) = 255;
  const auto f = haralick_features(compute_glcm(g, BinaryMask(2, 2, 1), 2, GlcmDirection::deg0));
  Check c;
  c.near(f.asm_, 0.5, 1e-12, "ASM");
  c.near(f.contrast, 0.0, 1e-12, "contrast");
  c.near(f.idm, 1.0, 1e-12, "IDM");
  c.near(f.entropy, std::log(2.0), 1e-12, "entropy");
  c.near(f.correlation, 1.0, 1e-12, "correlation");
  return c.done("2x2 two-level example exact to 1e-12");
}

Outcome criterion_5() {
  Check c;
  const auto zero = lacunarity_of(std::vector<double>(64, 93.0));
  for (double v : {zero.ls, zero.la, zero.l2, zero.l4, zero.l6}) c.expect(v == 0.0, "constant channel nonzero");
  std::mt19937_64 rng(505);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(256);
    for (double& v : s) v = uniform_int(rng, 0, 255);
    const auto l = lacunarity_of(s);
    c.near(l.l2 * l.l2, l.ls, 1e-9, "L2^2 - Ls");
    const double k = 0.05 + 20.0 * unit(rng);
    for (double& v : s) v *= k;
    const auto m = lacunarity_of(s);
    c.near(m.ls, l.ls, 1e-9, "scaled Ls");
    c.near(m.la, l.la, 1e-9, "scaled La");
    c.near(m.l2, l.l2, 1e-9, "scaled L2");
    c.near(m.l4, l.l4, 1e-9, "scaled L4");
    c.near(m.l6, l.l6, 1e-9, "scaled L6");
  }
  return c.done("constant channel zero; identity and scale invariance on 200 random channels");
}

Outcome criterion_6() {
  Check c;
  const std::vector<double> d{1, 1, 4};
  const auto f = shen_features(d);
  c.near(f.f1, std::sqrt(2.0) / 2.0, 1e-9, "F1'");
  c.near(f.f2, std::cbrt(2.0) / 2.0, 1e-9, "F2'");
  c.near(f.f3, std::pow(6.0, 0.25) / 2.0, 1e-9, "F3'");
  c.near(f.mf, std::pow(6.0, 0.25) / 2.0 - std::sqrt(2.0) / 2.0, 1e-9, "mf");
  std::mt19937_64 rng(606);
  const auto same = [](const ShenFeatures& a, const ShenFeatures& b) {
    return a.f1 == b.f1 && a.f2 == b.f2 && a.f3 == b.f3 && a.mf == b.mf;
  };
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> sig(128);
    for (double& v : sig) v = 2.0 + 100.0 * unit(rng);
    const auto base = shen_features(sig);
    for (double s : {0.125, 0.5, 2.0, 4.0, 1024.0}) {
      auto scaled = sig;
      for (double& v : scaled) v *= s;
      c.expect(same(shen_features(scaled), base), "scaling by " + fmt(s, 3) + " changed a value");
    }
    const double s = 0.3 + 7.0 * unit(rng);
    auto scaled = sig;
    for (double& v : scaled) v *= s;
    const auto g = shen_features(scaled);
    c.near(g.f1, base.f1, 1e-12, "F1' under scaling");
    c.near(g.f2, base.f2, 1e-12, "F2' under scaling");
    c.near(g.f3, base.f3, 1e-12, "F3' under scaling");
    auto shifted = sig;
    std::rotate(shifted.begin(), shifted.begin() + uniform_int(rng, 1, 127), shifted.end());
    c.expect(same(shen_features(shifted), base), "circular shift changed a value");
  }
  return c.done("[1,1,4] example; bit-exact under circular shift and power-of-two scaling, "
                "arbitrary scaling within 1e-12");
}

std::vector<double> pft_of(const BinaryMask& m) { return pft_descriptors(polar_resample(m, centroid(m))); }

double worst_relative(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(b[k] - a[k]) / std::abs(a[k]));
  return worst;
}

Outcome criterion_7() {
  Check c;
  double worst_rot = 0.0;
  double worst_up = 0.0;
  std::mt19937_64 rng(707);
  for (int trial = 0; trial < 12; ++trial) {
    const double scale = 30.0 + 50.0 * unit(rng);
    const int size = static_cast<int>(4 * scale);
    const auto blob = blob_mask(size, size, size / 2.0 + 6.0 * unit(rng) - 3.0, size / 2.0 + 6.0 * unit(rng) - 3.0, scale);
    const auto base = pft_of(blob);
    c.expect(pft_of(translate(blob, uniform_int(rng, -9, 9), uniform_int(rng, -9, 9))) == base,
             "translation changed a descriptor");
    worst_rot = std::max(worst_rot, worst_relative(base, pft_of(rotate90(blob))));
    worst_up = std::max(worst_up, worst_relative(base, pft_of(upscale2(blob))));
  }
  c.expect(worst_rot <= 0.02, "quarter turn changed a descriptor by " + fmt(100 * worst_rot, 2) + "%");
  c.expect(worst_up <= 0.05, "2x upscale changed a descriptor by " + fmt(100 * worst_up, 2) + "%");

  double worst_shift = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    PolarGrid g;
    g.radial = kDefaultPolarRadial;
    g.angular = kDefaultPolarAngular;
    g.r_max = 30.0;
    g.samples.resize(static_cast<std::size_t>(g.radial) * g.angular);
    for (double& v : g.samples) v = unit(rng);
    const auto base = pft_descriptors(g);
    PolarGrid s = g;
    const int shift = uniform_int(rng, 1, g.angular - 1);
    for (int k = 0; k < g.radial; ++k) {
      for (int i = 0; i < g.angular; ++i) s(k, (i + shift) % g.angular) = g(k, i);
    }
    const auto moved = pft_descriptors(s);
    for (std::size_t j = 0; j < base.size(); ++j) worst_shift = std::max(worst_shift, std::abs(moved[j] - base[j]));
  }
  c.expect(worst_shift <= 1e-9, "angular shift error " + std::to_string(worst_shift));
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << "translation exact; worst relative change: angular shift " << worst_shift
    << ", quarter turn " << worst_rot << ", 2x upscale " << worst_up;
  return c.done(s.str());
}

Outcome criterion_8() {
  Check c;
  std::mt19937_64 rng(808);
  int degenerate = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto pts = random_points(rng, uniform_int(rng, 3, 30), trial % 2 ? 10 : 500);
    const auto expected = brute_force_hull(pts);
    if (expected.empty()) {
      ++degenerate;
      bool threw = false;
      try {
        convex_hull(pts);
      } catch (const Error&) {
        threw = true;
      }
      c.expect(threw, "degenerate set " + std::to_string(trial) + " produced a hull");
      continue;
    }
    c.expect(convex_hull(pts) == expected, "hull mismatch on set " + std::to_string(trial));
  }
  return c.done("500 random sets of 3..30 points match the O(n^3) hull, " + std::to_string(degenerate) +
                " of them degenerate");
}

Outcome criterion_9() {
  Check c;
  std::mt19937_64 rng(909);
  {
    Eigen::MatrixXd means(2, 1);
    means << -1, 1;
    const ClassModel m(means, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(2, 0.5), Eigen::VectorXd::Zero(1),
                       Eigen::VectorXd::Ones(1), 0.0);
    const std::array<double, 1> x{0.2};
    c.near(posterior(m, std::span<const double>(x)).probs[1], 0.5987, 1e-4, "1-D example posterior");
  }
  for (int trial = 0; trial < 50; ++trial) {
    const int k = uniform_int(rng, 2, 4);
    std::vector<std::array<double, 2>> mu(static_cast<std::size_t>(k));
    Eigen::MatrixXd means(k, 2);
    for (int i = 0; i < k; ++i) {
      mu[static_cast<std::size_t>(i)] = {2.0 * normal(rng), 2.0 * normal(rng)};
      means.row(i) << mu[static_cast<std::size_t>(i)][0], mu[static_cast<std::size_t>(i)][1];
    }
    const double rho = 1.6 * unit(rng) - 0.8;
    const std::array<double, 4> cov{1.0, rho, rho, 1.5};
    Eigen::MatrixXd s(2, 2);
    s << cov[0], cov[1], cov[2], cov[3];
    const Eigen::VectorXd priors = Eigen::VectorXd::Constant(k, 1.0 / k);
    const ClassModel m(means, s, priors, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), 0.0);
    const std::array<double, 2> x{3.0 * normal(rng), 3.0 * normal(rng)};
    const auto got = posterior(m, std::span<const double>(x)).probs;
    const auto want = direct_posterior_2d(mu, cov, std::vector<double>(static_cast<std::size_t>(k), 1.0 / k), x);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      c.near(got[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-9, "2-D posterior");
      total += got[static_cast<std::size_t>(i)];
    }
    c.near(total, 1.0, 1e-9, "posterior sum");
  }

  // Affine invariance at zero ridge.
  std::vector<FeatureVector> data;
  for (int cls = 0; cls < 3; ++cls) {
    for (int i = 0; i < 20; ++i) data.push_back(labelled({normal(rng) + cls, normal(rng) - 2.0 * cls, normal(rng)}, cls));
  }
  Eigen::Matrix3d a;
  for (int r = 0; r < 3; ++r) {
    for (int q = 0; q < 3; ++q) a(r, q) = normal(rng) + (r == q ? 3.0 : 0.0);
  }
  const Eigen::Vector3d b(-7.0, 2.5, 100.0);
  const auto move = [&](const std::vector<double>& v) {
    const Eigen::Vector3d y = a * Eigen::Vector3d(v[0], v[1], v[2]) + b;
    return std::vector<double>{y[0], y[1], y[2]};
  };
  auto moved = data;
  for (auto& s : moved) s.values = move(s.values);
  const auto m0 = fit(data, FitOptions{0.0});
  const auto m1 = fit(moved, FitOptions{0.0});
  for (int q = 0; q < 100; ++q) {
    const std::vector<double> x{2.0 * normal(rng), 2.0 * normal(rng), 2.0 * normal(rng)};
    const auto p0 = posterior(m0, std::span<const double>(x)).probs;
    const auto p1 = posterior(m1, std::span<const double>(move(x))).probs;
    for (std::size_t i = 0; i < 3; ++i) c.near(p1[i], p0[i], 1e-8, "affine posterior");
  }

  const auto train = gaussian_blobs(rng, 3, 60, 35, 10.0);
  const auto test = gaussian_blobs(rng, 3, 60, 35, 10.0);
  const auto r = evaluate(fit(train), test);
  c.expect(r.n_r == r.n_t, "10-sigma blobs accuracy " + fmt(r.accuracy));
  return c.done("1-D example, 2-D brute force, affine invariance, 10-sigma blobs accuracy " + fmt(r.accuracy, 2));
}

Outcome criterion_10() {
  Check c;
  std::mt19937_64 rng(1010);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = random_gray(rng, 16, 16);
    GrayImage g = f;
    for (auto& v : g) v = static_cast<std::uint8_t>(std::min(255, v + uniform_int(rng, 0, 40)));
    const int r = 1 + trial % 4;
    const auto of = gray_opening(f, r);
    c.expect(pointwise_le(of, f), "not anti-extensive on image " + std::to_string(trial));
    c.expect(pointwise_le(of, gray_opening(g, r)), "not increasing on image " + std::to_string(trial));
    c.expect(gray_opening(of, r) == of, "not idempotent on image " + std::to_string(trial));
  }
  return c.done("1000 random 16x16 images, radii 1..4");
}

// ---------------------------------------------------------------------------
// End-to-end determinism through the command-line tool

int shell(const std::string& command) {
  const int raw = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome criterion_11() {
  const auto root = scratch_dir("acceptance_e2e");
  write_synthetic_dataset(root / "ds", 8);
  const std::string cli = std::string("'") + LEAFID_CLI + "' --reference 5 --test 3 --jobs 2 ";
  const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  const std::vector<std::string> files{"features.jsonl", "model.txt", "report.json", "ablation.json"};
  for (const char* run : {"a", "b"}) {
    const auto out = root / run;
    fs::create_directories(out);
    const std::vector<std::string> steps{
        cli + "extract " + q(root / "ds") + " --out " + q(out / "features.jsonl"),
        cli + "train " + q(out / "features.jsonl") + " --out " + q(out / "model.txt"),
        cli + "evaluate " + q(out / "model.txt") + " " + q(out / "features.jsonl") + " --out " + q(out / "report.json"),
        cli + "ablate " + q(out / "features.jsonl") + " --out " + q(out / "ablation.json"),
    };
    for (const auto& step : steps) {
      if (shell(step) != 0) return {Verdict::fail, "command failed: " + step};
    }
  }
  Check c;
  for (const auto& f : files) {
    const auto a = slurp(root / "a" / f);
    c.expect(!a.empty(), f + " is empty");
    c.expect(a == slurp(root / "b" / f), f + " differs between runs");
  }
  return c.done("cache, model, report and ablation byte-identical across two runs");
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                       criterion_5, criterion_6, criterion_7, criterion_8,
                                                       criterion_9, criterion_10, criterion_11};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
    failed += o.verdict == Verdict::fail;
    std::cout << "criterion " << (i + 1) << ": " << tag << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
