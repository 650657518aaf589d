#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "leafid/harness.hpp"
#include "support/dataset.hpp"

using namespace leafid;
using namespace leafid::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

/// Runs the CLI with `args`; stderr is folded into the captured output.
Run cli(const std::string& args) {
  Run r;
  const std::string command = std::string("'") + LEAFID_CLI + "' " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (const std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch_dir("cli");
    write_synthetic_dataset(dir_ / "ds", 6);
    const auto r = cli("--jobs 1 extract " + q(dir_ / "ds") + " --out " + q(dir_ / "features.jsonl"));
    ASSERT_EQ(r.status, 0) << r.out;
  }

  static fs::path dir_;
  static constexpr const char* kSplit = "--reference 4 --test 2 ";
};

fs::path CliTest::dir_;

}  // namespace

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli("frobnicate").status, 2);
  EXPECT_EQ(cli("--no-such-flag train x --out y").status, 2);
  EXPECT_EQ(cli("train").status, 2);
  EXPECT_EQ(cli("--split shuffled train x --out y").status, 2);
  EXPECT_EQ(cli("--reference -3 train x --out y").status, 2);
  EXPECT_EQ(cli("").status, 2);
  EXPECT_EQ(cli("--help").status, 0);
}

TEST_F(CliTest, TrainClassifyEvaluate) {
  const auto model = dir_ / "model.txt";
  const auto train = cli(std::string(kSplit) + "train " + q(dir_ / "features.jsonl") + " --out " + q(model));
  ASSERT_EQ(train.status, 0) << train.out;

  const auto leaf = dir_ / "ds" / "species_2" / "leaf_005.png";
  const auto one = cli("classify " + q(model) + " " + q(leaf));
  ASSERT_EQ(one.status, 0) << one.out;
  const auto lines = lines_of(one.out);
  ASSERT_EQ(lines.size(), 1u);
  const auto fields = lines[0].substr(lines[0].find('\t') + 1);
  EXPECT_EQ(fields.substr(0, fields.find('\t')), "species_2");
  const double p = std::stod(fields.substr(fields.find('\t') + 1));
  EXPECT_GT(p, 0.5);
  EXPECT_LE(p, 1.0);

  const auto top = cli("classify --top 3 " + q(model) + " " + q(leaf) + " " + q(dir_ / "ds" / "species_0" / "leaf_004.png"));
  ASSERT_EQ(top.status, 0) << top.out;
  for (const auto& line : lines_of(top.out)) EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 6);

  const auto eval = cli(std::string(kSplit) + "evaluate " + q(model) + " " + q(dir_ / "features.jsonl") + " --out " +
                        q(dir_ / "report.json"));
  ASSERT_EQ(eval.status, 0) << eval.out;
  EXPECT_NE(eval.out.find("accuracy"), std::string::npos);
  EXPECT_NE(eval.out.find("/8)"), std::string::npos);
  std::ifstream report(dir_ / "report.json");
  const auto j = nlohmann::json::parse(report);
  EXPECT_EQ(j.at("n_t"), 8);
  EXPECT_EQ(j.at("confusion").size(), 4u);
}

TEST_F(CliTest, TrainingOnImagesMatchesTrainingOnTheCache) {
  const auto a = dir_ / "from_cache.txt";
  const auto b = dir_ / "from_images.txt";
  ASSERT_EQ(cli(std::string(kSplit) + "train " + q(dir_ / "features.jsonl") + " --out " + q(a)).status, 0);
  ASSERT_EQ(cli(std::string(kSplit) + "--jobs 2 train " + q(dir_ / "ds") + " --out " + q(b)).status, 0);
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto without_header = [](const std::string& s) { return s.substr(s.find('\n')); };
  EXPECT_EQ(without_header(slurp(a)), without_header(slurp(b)));
}

TEST_F(CliTest, AblatePrintsTheTable) {
  const auto r = cli(std::string(kSplit) + "ablate " + q(dir_ / "features.jsonl") + " --out " + q(dir_ / "abl.json"));
  ASSERT_EQ(r.status, 0) << r.out;
  for (int row = 1; row <= 10; ++row) EXPECT_NE(r.out.find("row" + std::to_string(row) + " "), std::string::npos);
  std::ifstream in(dir_ / "abl.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("rows").size(), 10u);
  EXPECT_EQ(j.at("config").at("split").at("reference"), 4);
}

TEST_F(CliTest, BadInputsExitWithOneAndExplain) {
  const auto model = dir_ / "m_bad.txt";
  ASSERT_EQ(cli(std::string(kSplit) + "train " + q(dir_ / "features.jsonl") + " --out " + q(model)).status, 0);

  const auto missing = cli("classify " + q(model) + " " + q(dir_ / "nope.png"));
  EXPECT_EQ(missing.status, 1);
  EXPECT_NE(missing.out.find("nope.png"), std::string::npos);

  std::ofstream(dir_ / "garbage.png") << "not a png";
  const auto garbage = cli("classify " + q(model) + " " + q(dir_ / "garbage.png"));
  EXPECT_EQ(garbage.status, 1);
  EXPECT_NE(garbage.out.find("garbage.png"), std::string::npos);

  const auto no_model = cli("classify " + q(dir_ / "absent_model") + " " + q(dir_ / "garbage.png"));
  EXPECT_EQ(no_model.status, 1);

  const auto too_few = cli("train " + q(dir_ / "features.jsonl") + " --out " + q(dir_ / "x.txt"));
  EXPECT_EQ(too_few.status, 1);
  EXPECT_NE(too_few.out.find("species_0"), std::string::npos);

  const auto other_params = cli("--glcm-levels 16 " + std::string(kSplit) + "train " + q(dir_ / "features.jsonl") +
                                " --out " + q(dir_ / "y.txt"));
  EXPECT_EQ(other_params.status, 1);
}

TEST_F(CliTest, ConfigFileWithCommandLineOverride) {
  std::ofstream(dir_ / "ok.conf") << "reference=4\ntest=2\n";
  std::ofstream(dir_ / "big.conf") << "reference=40\ntest=2\n";
  std::ofstream(dir_ / "typo.conf") << "refrence=4\n";
  const auto cache = q(dir_ / "features.jsonl");
  const auto out = " --out " + q(dir_ / "conf_model.txt");
  EXPECT_EQ(cli("--config " + q(dir_ / "ok.conf") + " train " + cache + out).status, 0);
  EXPECT_EQ(cli("--config " + q(dir_ / "big.conf") + " train " + cache + out).status, 1);
  EXPECT_EQ(cli("--config " + q(dir_ / "big.conf") + " --reference 4 train " + cache + out).status, 0);
  EXPECT_EQ(cli("--config " + q(dir_ / "typo.conf") + " train " + cache + out).status, 2);
}

TEST_F(CliTest, DebugImagesAreWritten) {
  const auto root = dir_ / "small";
  write_synthetic_dataset(root, 1, 2);
  const auto r = cli("--jobs 1 extract " + q(root) + " --out " + q(dir_ / "small.jsonl") + " --debug-dir " +
                     q(dir_ / "debug"));
  ASSERT_EQ(r.status, 0) << r.out;
  int masks = 0;
  int veins = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "debug")) {
    const auto name = e.path().filename().string();
    masks += name.find("_mask.png") != std::string::npos;
    veins += name.find("_vein_r") != std::string::npos;
  }
  EXPECT_EQ(masks, 2);
  EXPECT_EQ(veins, 8);
}
