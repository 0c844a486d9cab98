#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "nbqf/commands.hpp"
#include "nbqf/errors.hpp"
#include "nbqf/io.hpp"

using namespace nbqf;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "nbqf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("nbqf_cli_" + std::to_string(::getpid())) / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // Simulates a small S1 data set into sim/ and returns the first replicate directory.
  fs::path simulate(int groups = 12) {
    put(path("sim.json"), R"({"scenario": {"id": "S1", "groups": )" + std::to_string(groups) +
                              R"(, "individuals": 30, "replicates": 1}, "seed": 4})");
    const auto r = run({"simulate", "--config", path("sim.json"), "--out", path("sim")});
    EXPECT_EQ(r.code, 0) << r.err;
    return path("sim") / "replicate_001";
  }

  fs::path dir_;
};

int csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = -1;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_F(Cli, SimulateWritesTruthAndIsReproducible) {
  const auto rep = simulate();
  const auto truth = io::read_json(rep / "truth.json");
  EXPECT_NEAR(truth.at("integral_beta").get<double>(), 0.5, 1e-12);
  EXPECT_EQ(csv_rows(rep / "counts.csv"), 12);
  EXPECT_EQ(csv_rows(rep / "exposures.csv"), 12 * 30);

  const auto again = run({"simulate", "--config", path("sim.json"), "--out", path("sim2")});
  ASSERT_EQ(again.code, 0);
  for (const char* f : {"exposures.csv", "counts.csv", "truth.json", "theta.csv", "means.csv"}) {
    EXPECT_EQ(slurp(rep / f), slurp(path("sim2") / "replicate_001" / f)) << f;
  }
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  simulate();
  const auto r = run({"simulate", "--config", path("sim.json"), "--seed", "99", "--out", path("other")});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(slurp(path("sim") / "replicate_001" / "counts.csv"), slurp(path("other") / "replicate_001" / "counts.csv"));
}

TEST_F(Cli, ChainShorthandBuildsPathGraph) {
  const auto g = io::read_adjacency("chain:5", {10, 11, 12, 13, 14});
  EXPECT_EQ(g.degree(0), 1.0);
  EXPECT_EQ(g.degree(2), 2.0);
  EXPECT_EQ(g.degree(4), 1.0);
  EXPECT_THROW(io::read_adjacency("chain:4", {1, 2, 3, 4, 5}), ConfigError);
}

TEST_F(Cli, EdgeListAdjacencyUsesGroupIds) {
  put(path("edges.csv"), "from,to\n10,12\n12,11\n");
  const auto g = io::read_adjacency(path("edges.csv").string(), {10, 11, 12});
  EXPECT_EQ(g.degree(2), 2.0);
  EXPECT_EQ(g.degree(0), 1.0);
}

TEST_F(Cli, FitQuantileWritesSummaryAndReproduces) {
  const auto rep = simulate();
  put(path("fq.json"), R"({"exposures": ")" + (rep / "exposures.csv").string() +
                           R"(", "adjacency": "chain:12", "quantile": {"iterations": 300, "burn_in": 150}, "seed": 2})");
  const auto a = run({"fit-quantile", "--config", path("fq.json"), "--out", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("acceptance"), std::string::npos);
  const auto s = io::read_json(path("a") / "quantile_summary.json");
  EXPECT_EQ(s.at("groups").size(), 12u);
  const auto b = run({"fit-quantile", "--config", path("fq.json"), "--out", path("b")});
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(slurp(path("a") / "quantile_chain.csv"), slurp(path("b") / "quantile_chain.csv"));
  EXPECT_EQ(slurp(path("a") / "quantile_summary.json"), slurp(path("b") / "quantile_summary.json"));
}

TEST_F(Cli, FitHealthMeanModeOutputs) {
  const auto rep = simulate();
  put(path("fh.json"), R"({"counts": ")" + (rep / "counts.csv").string() + R"(", "mode": "mean", "means": ")" +
                           (rep / "means.csv").string() + R"(", "health": {"iterations": 300, "burn_in": 100}, "seed": 8})");
  const auto r = run({"fit-health", "--config", path("fh.json"), "--out", path("fit")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("alpha"), std::string::npos);
  EXPECT_EQ(csv_rows(path("fit") / "beta_curve.csv"), 101);
  const auto w = io::read_json(path("fit") / "waic.json");
  EXPECT_TRUE(std::isfinite(w.at("lppd").get<double>()));
  EXPECT_TRUE(std::isfinite(w.at("p_waic").get<double>()));
  const auto e = io::read_json(path("fit") / "effects.json");
  EXPECT_TRUE(e.contains("attributable_events"));
}

TEST_F(Cli, ChainFileRoundTripReproducesWaic) {
  const auto rep = simulate();
  put(path("fh.json"), R"({"counts": ")" + (rep / "counts.csv").string() + R"(", "mode": "known_qf", "theta": ")" +
                           (rep / "theta.csv").string() + R"(", "health": {"iterations": 200, "burn_in": 100}, "seed": 8})");
  ASSERT_EQ(run({"fit-health", "--config", path("fh.json"), "--out", path("fit")}).code, 0);
  std::vector<std::int64_t> ids;
  const auto chain = io::read_health_chain(path("fit") / "health_chain.csv", &ids);
  EXPECT_EQ(ids.size(), 12u);
  EXPECT_EQ(chain.degree, 2);
  const auto w = waic(chain.loglik);
  const auto saved = io::read_json(path("fit") / "waic.json");
  EXPECT_NEAR(w.waic, saved.at("waic").get<double>(), 1e-12);
  EXPECT_NEAR(w.p_waic, saved.at("p_waic").get<double>(), 1e-12);

  put(path("ef.json"), R"({"chain": ")" + (path("fit") / "health_chain.csv").string() + R"("})");
  const auto e = run({"effects", "--config", path("ef.json"), "--out", path("eff")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(slurp(path("fit") / "beta_curve.csv"), slurp(path("eff") / "beta_curve.csv"));
}

TEST_F(Cli, EstimatedModeUsesStageOneSummary) {
  const auto rep = simulate();
  put(path("fq.json"), R"({"exposures": ")" + (rep / "exposures.csv").string() +
                           R"(", "quantile": {"mode": "independent", "iterations": 200, "burn_in": 100}, "seed": 2})");
  ASSERT_EQ(run({"fit-quantile", "--config", path("fq.json"), "--out", path("q")}).code, 0);
  put(path("fh.json"), R"({"counts": ")" + (rep / "counts.csv").string() +
                           R"(", "mode": "estimated_qf", "summary": ")" + (path("q") / "quantile_summary.json").string() +
                           R"(", "degrees": [2, 3], "health": {"iterations": 200, "burn_in": 100}, "seed": 8})");
  const auto r = run({"fit-health", "--config", path("fh.json"), "--out", path("fit")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto w = io::read_json(path("fit") / "waic.json");
  EXPECT_EQ(w.at("candidates").size(), 2u);
}

TEST_F(Cli, StudyWritesTableRows) {
  put(path("study.json"), R"({"scenario": {"id": "S3", "groups": 10, "individuals": 20, "replicates": 2},
      "modes": ["mean", "known_qf", "estimated_qf"], "health": {"iterations": 150, "burn_in": 50},
      "quantile": {"iterations": 200, "burn_in": 100}, "seed": 1})");
  const auto r = run({"study", "--config", path("study.json"), "--out", path("st")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string table = slurp(path("st") / "table1.csv");
  EXPECT_NE(table.find("S3,mean,"), std::string::npos);
  EXPECT_NE(table.find("S3,quantile,"), std::string::npos);
  EXPECT_NE(table.find("S3,quantile with errors,"), std::string::npos);
  const auto m = io::read_json(path("st") / "metrics.json");
  for (const auto& mode : m.at("modes")) {
    for (const char* target : {"integral_beta", "predictive", "attributable"}) {
      const double cp = mode.at(target).at("coverage_95").get<double>();
      EXPECT_GE(cp, 0.0);
      EXPECT_LE(cp, 100.0);
    }
  }
}

TEST_F(Cli, MalformedCsvReportsLineNumber) {
  put(path("x.csv"), "group_id,x\n1,2.5\n1,abc\n");
  put(path("fq.json"), R"({"exposures": ")" + path("x.csv").string() + R"(", "quantile": {"mode": "independent"}, "seed": 1})");
  const auto r = run({"fit-quantile", "--config", path("fq.json"), "--out", path("o")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("x.csv:3"), std::string::npos) << r.err;
}

TEST_F(Cli, ConfigurationErrorsFailBeforeSampling) {
  put(path("a.json"), R"({"scenario": {"id": "S1", "colour": 3}, "seed": 1})");
  EXPECT_EQ(run({"simulate", "--config", path("a.json"), "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"simulate", "--out", path("o")}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  const auto rep = simulate();
  put(path("b.json"), R"({"counts": ")" + (rep / "counts.csv").string() + R"(", "mode": "mean", "theta": ")" +
                          (rep / "theta.csv").string() + R"(", "means": ")" + (rep / "means.csv").string() +
                          R"(", "seed": 1})");
  const auto r = run({"fit-health", "--config", path("b.json"), "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(path("o") / "health_chain.csv"));
}

TEST_F(Cli, UnwritableOutputIsDataError) {
  simulate();
  put(path("blocker"), "file");
  const auto r = run({"simulate", "--config", path("sim.json"), "--out", (path("blocker") / "sub").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("blocker"), std::string::npos);
}

TEST_F(Cli, TooFewDrawsIsNumericalFailure) {
  const auto rep = simulate();
  put(path("fq.json"), R"({"exposures": ")" + (rep / "exposures.csv").string() +
                           R"(", "quantile": {"mode": "independent", "iterations": 4, "burn_in": 0}, "seed": 1})");
  EXPECT_EQ(run({"fit-quantile", "--config", path("fq.json"), "--out", path("o")}).code, 4);
}

TEST(Io, DoublesRoundTripExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 7.2}) {
    const std::string s = io::format_double(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
}
