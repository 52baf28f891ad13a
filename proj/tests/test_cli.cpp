#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "msvar/csv.hpp"
#include "msvar/model_io.hpp"

using namespace msvar;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("msvar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ModelSpec spec;
    spec.n_channels = 2;
    spec.n_regimes = 2;
    spec.lags = 1;
    auto p = ModelParams::zeros(spec);
    p.intercepts << 0.2, 0.0, -0.5, 0.3;
    p.coeffs[0][0] << 0.5, 0.0, 0.1, 0.4;
    p.coeffs[1][0] << -0.2, 0.1, 0.0, 0.1;
    p.covariances[0] << 0.2, 0.02, 0.02, 0.1;
    p.covariances[1] << 1.5, 0.1, 0.1, 1.0;
    p.transition << 0.95, 0.05, 0.1, 0.9;
    p.initial_dist << 0.5, 0.5;
    save_model(dir_ / "truth.json", p, {"user", std::nullopt, "", {"a", "dv"}});
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void simulate_series(int length = 400) {
    const auto r = run_cli({"simulate", "-m", path("truth.json"), "-n", std::to_string(length), "--seed", "3",
                            "-o", path("sim")});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesSeriesStatesAndManifest) {
  simulate_series();
  EXPECT_TRUE(fs::exists(path("sim/series.csv")));
  EXPECT_TRUE(fs::exists(path("sim/states.csv")));
  const auto m = read_json(path("sim/manifest.json"));
  EXPECT_EQ(m["manifest_version"], 1);
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["config"]["seed"], 3);
  EXPECT_EQ(m["outputs"]["series.csv"], sha256_file(path("sim/series.csv")));
  EXPECT_EQ(m["inputs"][path("truth.json")], sha256_file(path("truth.json")));
  const auto header = read_text_file(path("sim/series.csv")).substr(0, 7);
  EXPECT_EQ(header, "t,a,dv\n");
}

TEST_F(CliTest, FitClassifyReportForecastPipeline) {
  simulate_series();
  auto r = run_cli({"fit", path("sim/series.csv"), "-p", "1", "-M", "2", "--seed", "1", "-o", path("fit")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = read_json(path("fit/model.json"));
  EXPECT_EQ(model["metadata"]["fit_method"], "em");
  EXPECT_TRUE(model["em"]["converged"].get<bool>());
  EXPECT_EQ(model["transition_convention"], "row");
  EXPECT_TRUE(fs::exists(path("fit/probabilities.csv")));
  EXPECT_EQ(read_text_file(path("fit/report.csv")).substr(0, 7), "regime,");

  r = run_cli({"classify", "-m", path("fit/model.json"), path("sim/series.csv"), "-o", path("cls")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text_file(path("cls/probabilities.csv")), read_text_file(path("fit/probabilities.csv")));

  r = run_cli({"report", "-m", path("truth.json"), "--dt", "0.1", "-o", path("rep")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dur = read_json(path("rep/durations.json"));
  EXPECT_NEAR(dur["regimes"][0]["expected_duration_steps"].get<double>(), 20.0, 1e-9);
  EXPECT_NEAR(dur["regimes"][0]["expected_duration_seconds"].get<double>(), 2.0, 1e-9);

  r = run_cli({"forecast", "-m", path("fit/model.json"), path("sim/series.csv"), "-n", "4", "--emit-plot-data",
               "-o", path("fc")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text_file(path("fc/forecast.csv")).substr(0, 21), "h,channel,point,lo,hi");
  EXPECT_TRUE(fs::exists(path("fc/plot_data.csv")));

  r = run_cli({"forecast", "-m", path("fit/model.json"), path("sim/series.csv"), "-n", "5", "--compare",
               path("truth.json"), "-o", path("cmp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cmp = read_json(path("cmp/comparison.json"));
  EXPECT_EQ(cmp["models"].size(), 2u);
  EXPECT_EQ(cmp["horizon"], 5);
}

TEST_F(CliTest, GibbsFitWritesChainAndSummary) {
  simulate_series(200);
  const auto r = run_cli({"fit", path("sim/series.csv"), "--method", "gibbs", "--samples", "120", "--burn-in", "20",
                          "--thin", "1", "--chains", "2", "-o", path("gibbs")});
  ASSERT_TRUE(r.code == 0 || r.code == 3) << r.err;
  const auto model = read_json(path("gibbs/model.json"));
  EXPECT_EQ(model["gibbs"]["kept_draws"], 200);
  const auto chain = read_text_file(path("gibbs/chain.csv"));
  EXPECT_EQ(std::count(chain.begin(), chain.end(), '\n'), 201);
  EXPECT_TRUE(read_json(path("gibbs/summary.json")).contains("P.1.1"));
}

TEST_F(CliTest, SameSeedGivesIdenticalOutputs) {
  simulate_series();
  for (const char* out : {"a", "b"}) {
    const auto r = run_cli({"fit", path("sim/series.csv"), "--restarts", "3", "--seed", "9", "-o", path(out)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(sha256_file(path("a/model.json")), sha256_file(path("b/model.json")));
  EXPECT_EQ(sha256_file(path("a/probabilities.csv")), sha256_file(path("b/probabilities.csv")));
}

TEST_F(CliTest, ManifestRerunReproducesOutputs) {
  simulate_series();
  auto r = run_cli({"fit", path("sim/series.csv"), "--restarts", "2", "-o", path("first")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli({"fit", "--config", path("first/manifest.json"), "-o", path("second")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto a = read_json(path("first/manifest.json"));
  const auto b = read_json(path("second/manifest.json"));
  EXPECT_EQ(a["outputs"], b["outputs"]);
  r = run_cli({"classify", "--config", path("first/manifest.json"), "-o", path("third")});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, ConfigFileLayersUnderFlags) {
  simulate_series();
  std::ofstream(path("run.toml")) << "seed = 4\n[fit]\nlags = 2\nregimes = 2\nrestarts = 1\n";
  auto r = run_cli({"fit", path("sim/series.csv"), "--config", path("run.toml"), "-o", path("cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = read_json(path("cfg/manifest.json"));
  EXPECT_EQ(m["config"]["lags"], 2);
  EXPECT_EQ(m["config"]["seed"], 4);
  r = run_cli({"fit", path("sim/series.csv"), "--config", path("run.toml"), "-p", "1", "-o", path("cfg2")});
  ASSERT_EQ(r.code, 0) << r.err;
  m = read_json(path("cfg2/manifest.json"));
  EXPECT_EQ(m["config"]["lags"], 1);
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  simulate_series(100);
  ::setenv("REGIME_SWITCH_SEED", "77", 1);
  const auto r = run_cli({"fit", path("sim/series.csv"), "--restarts", "1", "-o", path("env")});
  ::unsetenv("REGIME_SWITCH_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(path("env/manifest.json"))["config"]["seed"], 77);
}

TEST_F(CliTest, SelectWritesGridAndBest) {
  simulate_series(300);
  const auto r = run_cli({"select", path("sim/series.csv"), "-p", "1..2", "-M", "1..2", "--restarts", "2", "-o",
                          path("sel")});
  ASSERT_TRUE(r.code == 0 || r.code == 3) << r.err;
  EXPECT_EQ(read_text_file(path("sel/grid.csv")).substr(0, 32), "p,M,loglik,aic,bic,hqc,k,status\n");
  EXPECT_TRUE(fs::exists(path("sel/lag_curve_M2.csv")));
  EXPECT_TRUE(fs::exists(path("sel/loglik_table.csv")));
  const auto best = read_json(path("sel/best.json"));
  EXPECT_EQ(best["criterion"], "bic");
  EXPECT_EQ(best["best"]["M"], 2);
  EXPECT_TRUE(fs::exists(path("sel/best_model.json")));
}

TEST_F(CliTest, IngestFcd) {
  std::ofstream(path("fcd.csv")) << "time,v,dv,h\n0,10,0.5,20\n0.5,10.5,0.4,20.2\n1.0,10.8,0.3,20.3\n";
  auto r = run_cli({"ingest", path("fcd.csv"), "-o", path("ing")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text_file(path("ing/series.csv")).substr(0, 12), "t,v,a,dv,h\n0");
  std::ofstream(path("bad.csv")) << "time,v,dv,h\n0,10,0.5,20\n0.5,10.5,0.4,-1\n";
  r = run_cli({"ingest", path("bad.csv"), "-o", path("ing2")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 3"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({"fit", path("missing.csv"), "-o", path("x")}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--lags"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  simulate_series(200);
  auto r = run_cli({"fit", path("sim/series.csv"), "--max-iters", "1", "--restarts", "1", "-o", path("nc")});
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(fs::exists(path("nc/model.json")));
  r = run_cli({"fit", path("sim/series.csv"), "--method", "bayes", "-o", path("bad")});
  EXPECT_EQ(r.code, 2);

  auto explosive = read_json(path("truth.json"));
  explosive["coeffs"][0][0] = {{3.0, 0.0}, {0.0, 3.0}};
  std::ofstream(path("explosive.json")) << explosive.dump();
  r = run_cli({"simulate", "-m", path("explosive.json"), "-n", "200", "-o", path("boom")});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("spectral radius"), std::string::npos);
}
