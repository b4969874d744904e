#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "loopforge/harness.hpp"

namespace {

namespace fs = std::filesystem;
using loopforge::DriftSpec;
using loopforge::drifted_plant;
using loopforge::GainVector;
using loopforge::make_target;
using loopforge::make_tf;
using loopforge::NormalStream;
using loopforge::parse_scenario;
using loopforge::SamplingGrid;
using loopforge::Scenario;

fs::path scenario_dir() { return fs::path(LOOPFORGE_SCENARIO_DIR); }

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("loopforge_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small scenario used by the run/artifact tests: first-order plant, PI loop.
Scenario small_scenario() {
    Scenario sc;
    sc.plant = make_tf({1.0}, {1.0, 1.0});
    sc.controller_order = 2;
    sc.sample_dt = 0.3;
    sc.horizon = 9.9;
    sc.dt_sim = 0.01;
    sc.target_spec = GainVector::pi(2.0, 1.0);
    sc.init_spec = GainVector::pi(0.5, 0.2);
    sc.tuner.alpha = 0.02;
    sc.tuner.sigma = 0.02;
    sc.tuner.num_directions = 2;
    sc.tuner.episodes = 5;
    sc.tuner.seed = 9;
    return sc;
}

TEST(Drift, NominalAtEpisodeZero) {
    NormalStream rng(1);
    const auto nominal = make_tf({-0.02}, {1.0, 1.0}, 1.0);
    const DriftSpec spec{1.3, 400, 0.0};
    const auto plant = drifted_plant(nominal, spec, 0, rng);
    EXPECT_DOUBLE_EQ(plant.num()[0], -0.02);
    EXPECT_DOUBLE_EQ(plant.delay(), 1.0);
}

TEST(Drift, LinearMidpoint) {
    NormalStream rng(1);
    const auto nominal = make_tf({-0.02}, {1.0, 1.0}, 1.0);
    const DriftSpec spec{1.3, 400, 0.0};
    EXPECT_NEAR(drifted_plant(nominal, spec, 200, rng).num()[0], -0.023, 1e-15);
}

TEST(Drift, EndpointExactAndConstantAfter) {
    NormalStream rng(1);
    const auto nominal = make_tf({-0.02}, {1.0, 1.0}, 1.0);
    const DriftSpec spec{1.3, 400, 0.0};
    const double at_end = drifted_plant(nominal, spec, 400, rng).num()[0];
    EXPECT_EQ(at_end, -0.02 * 1.3);
    EXPECT_NEAR(at_end, -0.026, 1e-12);
    EXPECT_EQ(drifted_plant(nominal, spec, 450, rng).num()[0], at_end);
    EXPECT_EQ(drifted_plant(nominal, spec, 10000, rng).num()[0], at_end);
}

TEST(Drift, DelayNoiseClampsAtZero) {
    NormalStream rng(3);
    const auto nominal = make_tf({1.0}, {1.0, 1.0}, 0.02);
    const DriftSpec spec{1.0, 10, 5.0};  // huge noise forces negative draws
    bool saw_clamp = false;
    for (int e = 1; e <= 50; ++e) {
        const double delay = drifted_plant(nominal, spec, e, rng).delay();
        EXPECT_GE(delay, 0.0);
        if (delay == 0.0) saw_clamp = true;
    }
    EXPECT_TRUE(saw_clamp);
}

TEST(Drift, NoNoiseKeepsDelayUntouched) {
    NormalStream rng(4);
    const auto nominal = make_tf({1.0}, {1.0, 1.0}, 1.0);
    const DriftSpec spec{1.3, 400, 0.0};
    EXPECT_DOUBLE_EQ(drifted_plant(nominal, spec, 123, rng).delay(), 1.0);
}

TEST(MakeTarget, CubicPlantTargetReachesSetPoint) {
    const auto target =
        make_target(make_tf({1.0}, {1.0, 3.0, 3.0, 1.0}), GainVector::pid(2.5, 1.5, 1.0),
                    SamplingGrid(0.3, 101), 0.01);
    EXPECT_FALSE(target.diverged);
    EXPECT_NEAR(target.samples(100), 1.0, 0.01);
}

TEST(MakeTarget, RejectsZeroGainTarget) {
    EXPECT_THROW(make_target(make_tf({1.0}, {1.0, 3.0, 3.0, 1.0}), GainVector::pid(0.0, 0.0, 0.0),
                             SamplingGrid(0.3, 101), 0.01),
                 loopforge::InvalidTarget);
}

TEST(MakeTarget, RejectsDivergentTarget) {
    EXPECT_THROW(make_target(make_tf({1.0}, {1.0, 3.0, 3.0, 1.0}), GainVector::pid(30.0, 0.0, 0.0),
                             SamplingGrid(0.3, 101), 0.01),
                 loopforge::InvalidTarget);
}

TEST(MakeTarget, Deterministic) {
    const auto grid = SamplingGrid(0.3, 101);
    const auto plant = make_tf({1.0}, {1.0, 3.0, 3.0, 1.0});
    const auto gains = GainVector::pid(2.5, 1.5, 1.0);
    const auto a = make_target(plant, gains, grid, 0.01);
    const auto b = make_target(plant, gains, grid, 0.01);
    EXPECT_EQ(a.samples, b.samples);
}

TEST(ScenarioParse, BundledExampleOne) {
    const auto sc = loopforge::load_scenario(scenario_dir() / "ex1.json");
    EXPECT_EQ(sc.controller_order, 3);
    EXPECT_EQ(sc.plant.order(), 3);
    EXPECT_DOUBLE_EQ(sc.sample_dt, 0.3);
    EXPECT_DOUBLE_EQ(sc.horizon, 30.0);
    EXPECT_EQ(sc.grid().n(), 101);
    EXPECT_EQ(sc.tuner.num_directions, 10);
    EXPECT_DOUBLE_EQ(sc.tuner.alpha, 0.005);
    EXPECT_DOUBLE_EQ(sc.tuner.sigma, 0.005);
    EXPECT_EQ(sc.tuner.episodes, 3000);
    EXPECT_FALSE(sc.drift_spec.has_value());
    ASSERT_TRUE(std::holds_alternative<GainVector>(sc.target_spec));
    EXPECT_DOUBLE_EQ(std::get<GainVector>(sc.target_spec).kp(), 2.5);
    ASSERT_TRUE(std::holds_alternative<loopforge::RandomInit>(sc.init_spec));
    EXPECT_DOUBLE_EQ(std::get<loopforge::RandomInit>(sc.init_spec).half_width, 0.1);
}

TEST(ScenarioParse, BundledExampleTwo) {
    const auto sc = loopforge::load_scenario(scenario_dir() / "ex2.json");
    EXPECT_EQ(sc.controller_order, 2);
    EXPECT_DOUBLE_EQ(sc.plant.num()[0], -0.02);
    EXPECT_DOUBLE_EQ(sc.plant.delay(), 1.0);
    EXPECT_EQ(sc.grid().n(), 71);
    EXPECT_EQ(sc.tuner.num_directions, 1);
    ASSERT_TRUE(sc.drift_spec.has_value());
    EXPECT_DOUBLE_EQ(sc.drift_spec->final_gain_scale, 1.3);
    EXPECT_EQ(sc.drift_spec->end_episode, 400);
    EXPECT_DOUBLE_EQ(sc.drift_spec->delay_noise_std, 0.05);
    ASSERT_TRUE(std::holds_alternative<loopforge::SimcInit>(sc.init_spec));
    const auto k0 = loopforge::resolve_initial_gains(sc);
    EXPECT_DOUBLE_EQ(k0.kp(), -25.0);
    EXPECT_DOUBLE_EQ(k0.ki(), -25.0);
}

TEST(ScenarioParse, DiagnosesBadInput) {
    using nlohmann::json;
    EXPECT_THROW(parse_scenario(json::parse("[]")), loopforge::ConfigError);
    EXPECT_THROW(parse_scenario(json::parse("{}")), loopforge::ConfigError);

    json base = json::parse(R"({
      "plant": {"num": [1.0], "den": [1.0, 1.0], "delay": 0.0},
      "controller_order": 2,
      "grid": {"sample_dt": 0.3, "horizon": 9.9},
      "target_spec": {"gains": [2.0, 1.0]},
      "init_spec": {"gains": [0.5, 0.2]},
      "tuner": {"alpha": 0.01, "sigma": 0.01, "N": 2, "episodes": 10, "seed": 1}
    })");
    EXPECT_NO_THROW(parse_scenario(base));

    auto bad = base;
    bad["controller_order"] = 4;
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);

    bad = base;
    bad["grid"]["horizon"] = 1.0;  // not a multiple of sample_dt
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);

    bad = base;
    bad["target_spec"] = {{"nonsense", 1}};
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);

    bad = base;
    bad["tuner"].erase("alpha");
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);

    bad = base;
    bad["drift_spec"] = {{"final_gain_scale", 1.3}, {"end_episode", 50}};
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);  // end beyond episodes

    bad = base;
    bad["plant"]["den"] = std::vector<double>{};
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);

    bad = base;
    bad["init_spec"] = {{"gains", std::vector<double>{1.0, 2.0, 3.0, 4.0}}};
    EXPECT_THROW(parse_scenario(bad), loopforge::ConfigError);
}

TEST(ScenarioParse, ExplicitTargetDataLengthChecked) {
    using nlohmann::json;
    json j = json::parse(R"({
      "plant": {"num": [1.0], "den": [1.0, 1.0]},
      "controller_order": 2,
      "grid": {"sample_dt": 0.3, "horizon": 0.9},
      "target_spec": {"data": [0.0, 0.5, 0.8, 1.0]},
      "init_spec": {"gains": [0.5, 0.2]},
      "tuner": {"alpha": 0.01, "sigma": 0.01, "N": 1, "episodes": 2, "seed": 1}
    })");
    EXPECT_NO_THROW(loopforge::run(parse_scenario(j)));
    j["target_spec"]["data"] = std::vector<double>{0.0, 1.0};
    EXPECT_THROW(loopforge::run(parse_scenario(j)), loopforge::ConfigError);
}

TEST(SeedResolution, PriorityOrder) {
    Scenario sc = small_scenario();
    sc.tuner.seed = 42;
    sc.seed_in_file = true;

    loopforge::RunOverrides overrides;
    overrides.seed = 7;
    EXPECT_EQ(loopforge::resolve_seed(sc, overrides), 7u);
    EXPECT_EQ(loopforge::resolve_seed(sc, {}), 42u);

    sc.seed_in_file = false;
    ASSERT_EQ(setenv("LOOPFORGE_SEED", "123", 1), 0);
    EXPECT_EQ(loopforge::resolve_seed(sc, {}), 123u);
    ASSERT_EQ(setenv("LOOPFORGE_SEED", "not-a-number", 1), 0);
    EXPECT_THROW(loopforge::resolve_seed(sc, {}), loopforge::ConfigError);
    ASSERT_EQ(unsetenv("LOOPFORGE_SEED"), 0);
    EXPECT_EQ(loopforge::resolve_seed(sc, {}), 0u);
}

TEST(InitialGains, RandomDrawsStayInsideBoxAndAreSeeded) {
    Scenario sc = small_scenario();
    sc.controller_order = 3;
    sc.init_spec = loopforge::RandomInit{0.1, std::nullopt};
    sc.tuner.seed = 17;
    const auto a = loopforge::resolve_initial_gains(sc);
    const auto b = loopforge::resolve_initial_gains(sc);
    EXPECT_EQ(a.vec(), b.vec());
    for (int i = 0; i < 3; ++i) EXPECT_LE(std::abs(a.vec()(i)), 0.1);

    sc.tuner.seed = 18;
    const auto c = loopforge::resolve_initial_gains(sc);
    EXPECT_NE(a.vec(), c.vec());
}

TEST(InitialGains, ValidatesAgainstControllerOrder) {
    Scenario sc = small_scenario();
    sc.init_spec = GainVector::pid(1.0, 1.0, 1.0);  // order 3 vs PI scenario
    EXPECT_THROW(loopforge::resolve_initial_gains(sc), loopforge::ConfigError);

    sc.controller_order = 3;
    sc.init_spec = loopforge::SimcInit{loopforge::make_fopdt(1.0, 1.0, 1.0), std::nullopt};
    EXPECT_THROW(loopforge::resolve_initial_gains(sc), loopforge::ConfigError);
}

TEST(Run, ProducesRecordsAndResponses) {
    const auto out = loopforge::run(small_scenario());
    EXPECT_EQ(out.records.size(), 5u);
    EXPECT_EQ(out.target.samples.size(), 34);
    EXPECT_EQ(out.first_response.samples.size(), 34);
    EXPECT_EQ(out.last_response.samples.size(), 34);
    EXPECT_EQ(out.final_gains, out.records.back().gains_updated);
    EXPECT_DOUBLE_EQ(out.initial_mae, out.records.front().mae_nominal);
    EXPECT_DOUBLE_EQ(out.final_mae, out.records.back().mae_nominal);
}

TEST(Run, SummaryJsonCarriesConfigAndResults) {
    const auto out = loopforge::run(small_scenario());
    const auto j = loopforge::summary_json(out);
    for (const char* key : {"alpha", "sigma", "N", "q", "episodes", "seed", "sigma_r_floor",
                            "controller_order", "sample_dt", "horizon", "dt_sim", "initial_gains",
                            "final_gains", "initial_mae", "final_mae"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["episodes"], 5);
    EXPECT_EQ(j["final_gains"].size(), 2u);
}

TEST(RunScenario, WritesArtifactsAndEpisodeLogRoundTrips) {
    const auto dir = temp_dir("artifacts");
    const auto scenario_path = dir / "scenario.json";
    {
        std::ofstream out(scenario_path);
        out << R"({
          "plant": {"num": [1.0], "den": [1.0, 1.0], "delay": 0.0},
          "controller_order": 2,
          "grid": {"sample_dt": 0.3, "horizon": 9.9},
          "target_spec": {"gains": [2.0, 1.0]},
          "init_spec": {"gains": [0.5, 0.2]},
          "tuner": {"alpha": 0.02, "sigma": 0.02, "N": 2, "episodes": 6, "seed": 11}
        })";
    }
    const auto out_dir = dir / "out";
    const auto result = loopforge::run_scenario(scenario_path, out_dir);

    ASSERT_TRUE(fs::exists(out_dir / "episodes.csv"));
    ASSERT_TRUE(fs::exists(out_dir / "response_first.csv"));
    ASSERT_TRUE(fs::exists(out_dir / "response_last.csv"));
    ASSERT_TRUE(fs::exists(out_dir / "summary.json"));

    // Parse the log back; %.17g serialization must reproduce every double bit-for-bit.
    std::ifstream log(out_dir / "episodes.csv");
    std::string header;
    std::getline(log, header);
    EXPECT_EQ(header, "episode,reward,mae,kp,ki,kd,sigma_r,diverged_count");
    std::string line;
    std::size_t row = 0;
    while (std::getline(log, line)) {
        ASSERT_LT(row, result.records.size());
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        ASSERT_EQ(fields.size(), 8u);
        const auto& rec = result.records[row];
        EXPECT_EQ(std::stoi(fields[0]), rec.episode);
        EXPECT_EQ(std::stod(fields[1]), rec.reward_nominal);
        EXPECT_EQ(std::stod(fields[2]), rec.mae_nominal);
        EXPECT_EQ(std::stod(fields[3]), rec.gains_updated(0));
        EXPECT_EQ(std::stod(fields[4]), rec.gains_updated(1));
        EXPECT_EQ(std::stod(fields[6]), rec.sigma_r);
        EXPECT_EQ(std::stoi(fields[7]), rec.diverged_count());
        ++row;
    }
    EXPECT_EQ(row, result.records.size());

    // summary.json must be valid JSON with the run results.
    std::ifstream summary(out_dir / "summary.json");
    const auto j = nlohmann::json::parse(summary);
    EXPECT_EQ(j["episodes"], 6);
    EXPECT_EQ(j["seed"], 11);
}

TEST(RunScenario, BundledExampleTwoFillsGainTrajectories) {
    const auto dir = temp_dir("ex2_bundled");
    const auto result = loopforge::run_scenario(scenario_dir() / "ex2.json", dir / "out");
    ASSERT_EQ(result.records.size(), 500u);

    std::ifstream log(dir / "out" / "episodes.csv");
    std::string line;
    std::getline(log, line);  // header
    int rows = 0;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        ASSERT_EQ(fields.size(), 8u);
        const double kp = std::stod(fields[3]);
        const double ki = std::stod(fields[4]);
        ASSERT_TRUE(std::isfinite(kp) && kp < 0.0);
        ASSERT_TRUE(std::isfinite(ki) && ki < 0.0);
        ++rows;
    }
    EXPECT_EQ(rows, 500);
}

TEST(RunScenario, MissingFileIsConfigError) {
    const auto dir = temp_dir("missing");
    EXPECT_THROW(loopforge::run_scenario(dir / "nope.json", dir / "out"), loopforge::ConfigError);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(RunScenario, OverridesApply) {
    const auto dir = temp_dir("overrides");
    const auto scenario_path = dir / "scenario.json";
    {
        std::ofstream out(scenario_path);
        out << R"({
          "plant": {"num": [1.0], "den": [1.0, 1.0]},
          "controller_order": 2,
          "grid": {"sample_dt": 0.3, "horizon": 9.9},
          "target_spec": {"gains": [2.0, 1.0]},
          "init_spec": {"gains": [0.5, 0.2]},
          "tuner": {"alpha": 0.02, "sigma": 0.02, "N": 2, "episodes": 50, "seed": 11}
        })";
    }
    loopforge::RunOverrides overrides;
    overrides.episodes = 3;
    overrides.seed = 21;
    const auto result = loopforge::run_scenario(scenario_path, dir / "out", overrides);
    EXPECT_EQ(result.records.size(), 3u);
    EXPECT_EQ(result.scenario.tuner.seed, 21u);
}

TEST(RunScenario, EpisodeOverrideBelowDriftWindowIsRejected) {
    const auto dir = temp_dir("override_conflict");
    loopforge::RunOverrides overrides;
    overrides.episodes = 100;  // drift in ex2.json ends at episode 400
    EXPECT_THROW(loopforge::run_scenario(scenario_dir() / "ex2.json", dir / "out", overrides),
                 loopforge::ConfigError);
}

}  // namespace
