#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support/fixtures.hpp"

using namespace garlic;
using garlic::testing::TempDir;

namespace {

struct Run {
  int status;
  std::string output;
};

Run cli(const std::string& args, const TempDir& dir) {
  const std::string log = dir.file("cli_output.txt");
  const std::string cmd = std::string(GARLIC_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = cli("synth --n 2000 --d 16 --components 8 --n-queries 100 --seed 3 --out " + dir_->file("base.fvecs"),
                       *dir_);
    ASSERT_EQ(r.status, 0) << r.output;
    const auto g = cli("gt --data " + base() + " --queries " + queries() + " --k 10 --out " + gt(), *dir_);
    ASSERT_EQ(g.status, 0) << g.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string base() { return dir_->file("base.fvecs"); }
  static std::string queries() { return dir_->file("base.queries.fvecs"); }
  static std::string gt() { return dir_->file("gt.ivecs"); }
  static TempDir* dir_;
};
TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, SynthWritesAllOutputs) {
  EXPECT_EQ(load_fvecs(base()).size(), 2000u);
  EXPECT_EQ(load_fvecs(queries()).size(), 100u);
  EXPECT_EQ(load_labels(dir_->file("base.labels")).size(), 2000u);
  EXPECT_EQ(load_labels(dir_->file("base.queries.labels")).size(), 100u);
  EXPECT_EQ(load_ivecs(gt()).cols, 10u);
}

TEST_F(Cli, BuildEvalQueryClassifyPipeline) {
  const auto idx = dir_->file("p.grlc");
  auto r = cli("build --quiet --deterministic --epochs 8 --K_init 16 --data " + base() + " --out " + idx, *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(check_index(load_index(idx)), "");
  EXPECT_EQ(slurp(dir_->file("p.train.csv")).rfind(kTrainLogHeader, 0), 0u);

  r = cli("eval --deterministic --index " + idx + " --queries " + queries() + " --gt " + gt() +
              " --budgets argmin@0.3,topk:1000@1 --out " + dir_->file("eval.csv"),
          *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto csv = slurp(dir_->file("eval.csv"));
  EXPECT_EQ(csv.rfind(kEvalCsvHeader, 0), 0u);
  const auto full = csv.find("\ntopk:1000@1,");
  ASSERT_NE(full, std::string::npos) << csv;
  EXPECT_NE(csv.find(",1,1,2000,", full), std::string::npos) << csv;  // exact recall, every point examined

  r = cli("query --index " + idx + " --queries " + queries() + " --k 5 --out " + dir_->file("q.csv"), *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  std::istringstream q(slurp(dir_->file("q.csv")));
  std::string line;
  std::getline(q, line);
  EXPECT_EQ(line, "query,rank,id,distance,candidates_examined,bins_probed,buckets_probed");
  std::size_t rows = 0;
  while (std::getline(q, line)) ++rows;
  EXPECT_EQ(rows, 500u);

  r = cli("classify --index " + idx + " --labels " + dir_->file("base.labels") + " --queries " + queries() + " --query-labels " +
              dir_->file("base.queries.labels") + " --variant 3 --topk 2 --out " + dir_->file("c.csv"),
          *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("accuracy"), std::string::npos);

  r = cli("inspect --index " + idx, *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("n=2000 d=16"), std::string::npos) << r.output;
}

TEST_F(Cli, OneEpochIndexIsQueryable) {
  const auto idx = dir_->file("one.grlc");
  auto r = cli("build --quiet --epochs 1 --data " + base() + " --out " + idx, *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  r = cli("query --index " + idx + " --queries " + queries() + " --k 3 --out " + dir_->file("one.csv"), *dir_);
  EXPECT_EQ(r.status, 0) << r.output;
}

TEST_F(Cli, DumpedConfigReproducesTheBuild) {
  const auto a = dir_->file("a.grlc");
  const auto b = dir_->file("b.grlc");
  const auto cfg = dir_->file("run.cfg");
  auto r = cli("build --quiet --deterministic --seed 9 --epochs 5 --tau 2.5 --data " + base() + " --out " + a +
                   " --dump-config " + cfg,
               *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  const auto parsed = parse_config(slurp(cfg));
  EXPECT_EQ(parsed.hp.tau, 2.5);
  EXPECT_EQ(parsed.hp.seed, 9u);
  r = cli("build --quiet --config " + cfg + " --out " + b, *dir_);
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(Cli, ErrorsAreReportedWithKind) {
  auto r = cli("build --no-such-flag", *dir_);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("error kind=usage"), std::string::npos) << r.output;

  r = cli("query --index " + dir_->file("missing.grlc") + " --queries " + queries(), *dir_);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error kind="), std::string::npos) << r.output;

  std::ofstream(dir_->file("junk.grlc")) << "not an index";
  r = cli("inspect --index " + dir_->file("junk.grlc"), *dir_);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error kind=format"), std::string::npos) << r.output;

  r = cli("build --quiet --data " + base() + " --out " + dir_->file("x.grlc") + " --tau -1", *dir_);
  EXPECT_NE(r.status, 0);
}

}  // namespace
