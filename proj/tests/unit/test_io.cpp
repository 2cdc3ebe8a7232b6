#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "earlystop/io.hpp"

using namespace earlystop;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "kernel": {"kind": "polynomial", "degree": 3},
    "filter": {"family": "gd", "eta": "auto", "t_max": "auto"},
    "target": "piecewise_linear",
    "design": "equidistant",
    "sigma": "known:0.15",
    "n_grid": [20, 40],
    "n_trials": 2,
    "rules": [{"name": "mdp"}, {"name": "smoothed_mdp", "alpha": "auto"}, {"name": "theoretical_mdp", "alpha": 0.5},
              {"name": "vfold"}],
    "master_seed": 5
  })");
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("earlystop_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesAllFields) {
  const auto c = config_from_json(small_config());
  EXPECT_EQ(std::get<Polynomial>(c.kernel).degree, 3);
  EXPECT_FALSE(c.filter.eta.has_value());
  EXPECT_DOUBLE_EQ(c.sigma, 0.15);
  EXPECT_EQ(c.noise, NoiseSource::Known);
  ASSERT_EQ(c.rules.size(), 4u);
  EXPECT_EQ(c.rules[0].rule, StopRule::MDP);
  EXPECT_FALSE(c.rules[1].alpha.has_value());
  EXPECT_EQ(*c.rules[2].alpha, 0.5);
  EXPECT_EQ(c.master_seed, 5u);
}

TEST(Config, EchoRoundTrips) {
  const auto c = config_from_json(small_config());
  const auto echo = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(echo)).dump(), echo.dump());
}

TEST(Config, EstimatedNoiseNeedsGenerationLevel) {
  auto j = small_config();
  j["sigma"] = "estimate:finite_rank";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["noise_sigma"] = 0.2;
  const auto c = config_from_json(j);
  EXPECT_EQ(c.noise, NoiseSource::FiniteRank);
  EXPECT_DOUBLE_EQ(c.sigma, 0.2);
}

TEST(Config, Rejections) {
  for (const char* bad : {R"({"kernel": {"kind": "cosine"}})", R"({"rules": ["mdp"], "n_grid": [40, 20]})",
                          R"({"rules": ["nope"]})", R"({"rules": ["mdp"], "sigma": "guess"})",
                          R"({"rules": ["mdp"], "filter": {"eta": "fast"}})", R"({"rules": ["mdp"], "n_trials": "x"})",
                          R"({"n_grid": [40]})"})
    EXPECT_THROW(config_from_json(json::parse(bad)), ConfigError) << bad;
}

TEST(Report, DeterministicFiles) {
  const auto c = config_from_json(small_config());
  const auto a = temp_dir("a"), b = temp_dir("b");
  write_report(a, run_experiment(c));
  write_report(b, run_experiment(c));
  for (const char* f : {"report.json", "errors.csv", "stopping_times.csv"}) {
    EXPECT_TRUE(fs::exists(a / f));
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto rep = json::parse(slurp(a / "report.json"));
  EXPECT_EQ(rep["generator"], kGeneratorName);
  EXPECT_EQ(rep["trials"].size(), 4u);
  EXPECT_EQ(rep["summary"].size(), 8u);
  EXPECT_EQ(slurp(a / "errors.csv").substr(0, 9), "rule,n,co");
}

TEST(Csv, SeventeenDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
  std::ostringstream os;
  write_curves_csv(os, {CurveRow{1.0, 0.5, 0.25, 0.75, 0.1, 0.05}});
  EXPECT_EQ(os.str(), "t,bias2,variance,risk,empirical_risk,reduced_risk\n1,0.5,0.25,0.75,0.10000000000000001,0.050000000000000003\n");
}

TEST(Dataset, LoadsWithAndWithoutHeader) {
  const auto d = temp_dir("data");
  {
    std::ofstream f(d / "a.csv");
    f << "x,y\n0.1,1.0\n0.2,2.0\n0.3,3.5\n";
  }
  {
    std::ofstream f(d / "b.csv");
    f << "0.1,1.0,0.9\n0.2,2.0,2.1\n";
  }
  {
    std::ofstream f(d / "c.csv");
    f << "0.1,1.0\n0.2,abc\n";
  }
  const auto a = load_dataset_csv(d / "a.csv");
  EXPECT_EQ(a.sample.size(), 3u);
  EXPECT_FALSE(a.f_star.has_value());
  EXPECT_EQ(a.sample.ys[2], 3.5);
  const auto b = load_dataset_csv(d / "b.csv");
  ASSERT_TRUE(b.f_star.has_value());
  EXPECT_EQ((*b.f_star)(1), 2.1);
  EXPECT_THROW(load_dataset_csv(d / "c.csv"), InputError);
  EXPECT_THROW(load_dataset_csv(d / "missing.csv"), InputError);
}

TEST(Json, EigenDump) {
  Vector mu(3);
  mu << 0.5, 0.2, 0.0;
  const auto j = to_json(EigenSystem::from_spectrum(mu));
  EXPECT_EQ(j["rank"], 2);
  EXPECT_EQ(j["n"], 3);
  EXPECT_EQ(j["eigenvalues"].size(), 3u);
}
