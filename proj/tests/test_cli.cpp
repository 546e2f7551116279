#include <gtest/gtest.h>

#include "ridemix/cli.hpp"

using namespace ridemix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::dispatch_command(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ridemix_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  cli::json manifest(const std::string& sub) const { return cli::json::parse(read_file(path(sub + "/manifest.json"))); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, NoArgumentsIsAUsageError) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
}

TEST_F(Cli, UnknownCommandIsAUsageError) {
  auto r = run({"teleport", "--out", path("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown command"), std::string::npos);
}

TEST_F(Cli, MissingOutAndUnknownFlag) {
  EXPECT_EQ(run({"exact"}).code, 2);
  EXPECT_EQ(run({"exact", "--out", path("e"), "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"exact", "--out", path("e"), "--format", "xml"}).code, 2);
}

TEST_F(Cli, HelpAndVersion) {
  EXPECT_EQ(run({"--version"}).out, std::string("ridemix ") + cli::kVersion + "\n");
  auto h = run({"simulate", "--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("--policy"), std::string::npos);
}

TEST_F(Cli, LibraryErrorsExitOneWithCategory) {
  auto r = run({"exact", "--grid", "0x2", "--out", path("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("[invalid-argument]"), std::string::npos);
  auto c = run({"couple", "--capacity", "3", "--drivers", "3", "--out", path("c")});
  EXPECT_EQ(c.code, 1);
  EXPECT_NE(c.err.find("[out-of-theorem-scope]"), std::string::npos);
  auto m = run({"exact", "--drivers", "9", "--out", path("m")});
  EXPECT_NE(m.err.find("[infeasible-instance]"), std::string::npos);
}

TEST_F(Cli, ExactOnTheUniformExample) {
  auto r = run({"exact", "--policy", "nadap:1", "--weights", "unit", "--out", path("ex"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = cli::json::parse(read_file(path("ex/report.json")));
  EXPECT_EQ(report["states"], 10);
  EXPECT_NEAR(report["limiting_objective"].get<double>(), 0.4, 1e-12);
  EXPECT_TRUE(report["irreducible"].get<bool>());
  auto summary = cli::json::parse(r.out);
  EXPECT_NEAR(summary["limiting_objective"].get<double>(), 0.4, 1e-12);

  auto strict = run({"exact", "--policy", "nadap:1", "--weights", "unit", "--self-trip", "strict", "--out",
                     path("strict")});
  ASSERT_EQ(strict.code, 0) << strict.err;
  auto sr = cli::json::parse(read_file(path("strict/report.json")));
  EXPECT_NEAR(sr["limiting_objective"].get<double>(), 0.375, 1e-12);
}

TEST_F(Cli, FixtureIsDeterministic) {
  ASSERT_EQ(run({"fixture", "--trips", "300", "--seed", "9", "--out", path("a/trips.csv")}).code, 0);
  ASSERT_EQ(run({"fixture", "--trips", "300", "--seed", "9", "--out", path("b/trips.csv")}).code, 0);
  EXPECT_EQ(read_file(path("a/trips.csv")), read_file(path("b/trips.csv")));
  EXPECT_EQ(read_file(path("a/trips.csv")), generate_fixture(300, 9));
}

TEST_F(Cli, OmittedSeedIsDrawnAndRecorded) {
  ASSERT_EQ(run({"simulate", "--rounds", "10", "--runs", "2", "--out", path("s")}).code, 0);
  auto m = manifest("s");
  EXPECT_FALSE(m["seed"].get<std::string>().empty());
  EXPECT_EQ(m["seed"], m["config"]["seed"]);
}

TEST_F(Cli, ManifestRerunIsByteIdenticalAcrossThreads) {
  ASSERT_EQ(run({"simulate", "--rounds", "200", "--runs", "300", "--policy", "greedy", "--threads", "1", "--out",
                 path("one")})
                .code,
            0);
  ASSERT_EQ(run({"simulate", "--config", path("one/manifest.json"), "--threads", "4", "--out", path("four")}).code, 0);
  for (auto f : {"wt.csv", "obj.csv", "error.csv", "fit.json", "manifest.json"})
    EXPECT_EQ(read_file(path(std::string("one/") + f)), read_file(path(std::string("four/") + f))) << f;
}

TEST_F(Cli, ConfigPrecedence) {
  {
    auto f = open_output(path("cfg.txt"));
    f << "# overrides\nrounds = 30\nruns=4\nseed=5\n";
  }
  ASSERT_EQ(run({"simulate", "--config", path("cfg.txt"), "--rounds", "20", "--out", path("p")}).code, 0);
  auto cfg = manifest("p")["config"];
  EXPECT_EQ(cfg["rounds"], "20");   // flag beats file
  EXPECT_EQ(cfg["runs"], "4");      // file beats default
  EXPECT_EQ(cfg["policy"], "nadap:0.8");  // default
  {
    auto f = open_output(path("bad.txt"));
    f << "warp=9\n";
  }
  EXPECT_EQ(run({"simulate", "--config", path("bad.txt"), "--out", path("q")}).code, 2);
  EXPECT_EQ(run({"exact", "--config", path("p/manifest.json"), "--out", path("r")}).code, 2);
}

TEST_F(Cli, IngestModelAndReplay) {
  ASSERT_EQ(run({"fixture", "--trips", "500", "--seed", "4", "--out", path("fx/trips.csv")}).code, 0);
  auto m = run({"ingest", "--input", path("fx/trips.csv"), "--grid", "2x2", "--segment", "afternoon", "--seed", "1",
                "--out", path("model/model.csv")});
  ASSERT_EQ(m.code, 0) << m.err;
  std::ifstream in(path("model/model.csv"));
  auto model = load_request_model(Grid(2, 2), in);
  EXPECT_LE(model.total_mass(), 1.0);
  auto digest = manifest("model")["inputs"][0]["sha256"].get<std::string>();
  EXPECT_EQ(digest, cli::sha256_hex(read_file(path("fx/trips.csv"))));

  auto r = run({"ingest", "--input", path("fx/trips.csv"), "--grid", "2x2", "--emit", "replay", "--subsample", "20",
                "--dates", "2013-01-02", "--seed", "1", "--out", path("replay/replay.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream rin(path("replay/replay.csv"));
  auto trace = load_replay(rin);
  EXPECT_EQ(trace.rounds, kSegmentLength);
  EXPECT_NO_THROW(trace.validate(Grid(2, 2)));

  auto sim = run({"simulate", "--arrivals", "replay:" + path("replay/replay.csv"), "--policy", "greedy", "--rounds",
                  "14400", "--runs", "1", "--drivers", "3", "--capacity", "2", "--seed", "1", "--out", path("rs")});
  EXPECT_EQ(sim.code, 0) << sim.err;
  EXPECT_EQ(run({"ingest", "--out", path("x.csv")}).code, 2);  // --input is required
}

TEST_F(Cli, FitReadsAColumn) {
  {
    auto f = open_output(path("curve.csv"));
    f << "t,delta\n";
    for (int t = 0; t < 30; ++t) f << t << ',' << fmt_real(2.0 * std::exp(-0.5 * t)) << '\n';
  }
  auto r = run({"fit", "--input", path("curve.csv"), "--out", path("fit"), "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto s = cli::json::parse(r.out);
  EXPECT_NEAR(s["b"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(s["goodness"].get<double>(), 1.0, 1e-9);
}

TEST_F(Cli, ConfigParsing) {
  EXPECT_DOUBLE_EQ(cli::Context::parse_real("1/16", "x"), 0.0625);
  EXPECT_THROW(cli::Context::parse_real("1/0", "x"), InvalidArgument);
  EXPECT_THROW(cli::Context::parse_real("abc", "x"), InvalidArgument);
}
