#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "msvar/error.hpp"
#include "msvar/model_io.hpp"
#include "oracles.hpp"

using namespace msvar;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "msvar_model_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Fingerprint, DependsOnValues) {
  Eigen::MatrixXd d(2, 1);
  d << 1.0, 2.0;
  const auto a = data_fingerprint(make_series(d));
  EXPECT_EQ(a, data_fingerprint(make_series(d)));
  d(1, 0) = 2.0000000001;
  EXPECT_NE(a, data_fingerprint(make_series(d)));
}

TEST(ModelJson, RoundTripIsExact) {
  std::mt19937_64 rng(61);
  const auto params = oracle::random_params(3, 2, 2, rng);
  ModelMetadata meta{"em", -123.456, "abc", {"v", "a", "dv"}};
  const auto path = temp_file("roundtrip.json");
  save_model(path, params, meta, {{"extra_field", 7}});
  ModelMetadata back_meta;
  const auto back = load_model(path, &back_meta);
  EXPECT_EQ(back.intercepts, params.intercepts);
  EXPECT_EQ(back.coeffs[1][1], params.coeffs[1][1]);
  EXPECT_EQ(back.covariances[0], params.covariances[0]);
  EXPECT_EQ(back.transition, params.transition);
  EXPECT_EQ(back.initial_dist, params.initial_dist);
  EXPECT_EQ(back_meta.fit_method, "em");
  EXPECT_EQ(*back_meta.log_likelihood, -123.456);
  EXPECT_EQ(back_meta.channels, meta.channels);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["extra_field"], 7);
  EXPECT_EQ(j["transition_convention"], "row");
}

TEST(ModelJson, RegressionSpecRoundTrip) {
  ModelSpec spec;
  spec.n_channels = 4;
  spec.n_regimes = 3;
  spec.lags = 1;
  spec.regression = RegressionMode{0, {1, 2, 3}, false};
  const auto back = spec_from_json(spec_to_json(spec));
  ASSERT_TRUE(back.regression.has_value());
  EXPECT_EQ(back.regression->regressors, (std::vector<Eigen::Index>{1, 2, 3}));
  EXPECT_FALSE(back.regression->intercept);
  EXPECT_TRUE(spec_to_json(ModelSpec{})["regression"].is_null());
}

TEST(ModelJson, ColumnConventionAndDefaultInitialDistribution) {
  ModelSpec spec;
  spec.n_regimes = 2;
  auto j = model_to_json(ModelParams::zeros(spec), {});
  j["transition"] = {{0.94, 0.3}, {0.06, 0.7}};
  j["transition_convention"] = "column";
  j.erase("initial_dist");
  const auto p = model_from_json(j);
  EXPECT_DOUBLE_EQ(p.transition(0, 1), 0.06);
  EXPECT_NEAR(p.initial_dist(0), 0.3 / 0.36, 1e-12);
  j["transition_convention"] = "diagonal";
  EXPECT_THROW(model_from_json(j), InputError);
}

TEST(ModelJson, InvalidDocumentsListEveryProblem) {
  ModelSpec spec;
  spec.n_channels = 2;
  spec.n_regimes = 2;
  auto j = model_to_json(ModelParams::zeros(spec), {});
  j["transition"] = {{0.5, 0.6}, {0.5, 0.5}};
  j["covariances"][1] = {{1.0, 2.0}, {2.0, 1.0}};
  try {
    model_from_json(j);
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("transition row 1"), std::string::npos);
    EXPECT_NE(msg.find("covariance of regime 2"), std::string::npos);
  }
  j.erase("intercepts");
  EXPECT_THROW(model_from_json(j), InputError);
  EXPECT_THROW(model_from_json(nlohmann::json::array()), InputError);
  EXPECT_THROW(load_model(temp_file("missing.json")), InputError);
  const auto bad = temp_file("bad.json");
  std::ofstream(bad) << "{ not json";
  EXPECT_THROW(load_model(bad), InputError);
}
