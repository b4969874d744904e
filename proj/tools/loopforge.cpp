// loopforge command-line front end: step-response PID tuning runs, one-off
// closed-loop simulations, and SIMC gain synthesis.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "loopforge/loopforge.hpp"

namespace {

loopforge::GainVector parse_gains(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            values.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw loopforge::ConfigError("--gains: '" + item + "' is not a number");
        }
    }
    if (values.size() == 2) return loopforge::GainVector::pi(values[0], values[1]);
    if (values.size() == 3) return loopforge::GainVector::pid(values[0], values[1], values[2]);
    throw loopforge::ConfigError("--gains expects kp,ki or kp,ki,kd");
}

loopforge::TransferFunction load_plant(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw loopforge::ConfigError("cannot open plant file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        return loopforge::make_tf(j.at("num").get<std::vector<double>>(),
                                  j.at("den").get<std::vector<double>>(), j.value("delay", 0.0));
    } catch (const nlohmann::json::exception& e) {
        throw loopforge::ConfigError("plant file: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
        throw loopforge::ConfigError("plant file: " + std::string(e.what()));
    }
}

int run_command(const std::string& scenario, const std::string& out_dir,
                const std::optional<std::uint64_t>& seed, const std::optional<int>& episodes) {
    loopforge::RunOverrides overrides;
    overrides.seed = seed;
    overrides.episodes = episodes;
    const auto out = loopforge::run_scenario(scenario, out_dir, overrides);
    std::cout << "episodes: " << out.records.size() << "\n"
              << "initial mae: " << out.initial_mae << "\n"
              << "final mae: " << out.final_mae << "\n"
              << "artifacts: " << out_dir << "\n";
    return 0;
}

int simulate_command(const std::string& plant_file, const std::string& gains_text, double horizon,
                     double sample_dt, double dt_sim, const std::string& out_path) {
    const auto plant = load_plant(plant_file);
    const auto gains = parse_gains(gains_text);
    const long n = std::lround(horizon / sample_dt) + 1;
    if (n < 2) throw loopforge::ConfigError("--horizon must cover at least one sample step");
    const loopforge::SamplingGrid grid(sample_dt, static_cast<int>(n));
    const auto response = loopforge::simulate_closed_loop(loopforge::discretize(plant, dt_sim), gains, grid);
    loopforge::write_response_csv(out_path, grid, response);
    if (response.diverged) std::cerr << "warning: response hit the output clamp\n";
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int simc_command(double gain, double tau, double theta, const std::optional<double>& tau_c) {
    const auto model = loopforge::make_fopdt(gain, tau, theta);
    const auto gains = tau_c ? loopforge::simc_pi(model, *tau_c) : loopforge::simc_pi(model);
    nlohmann::json j{{"kp", gains.kp()}, {"ki", gains.ki()}, {"kd", 0.0}};
    std::cout << j.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Model-free PID tuning by random-search tracking of a target closed-loop step response"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a tuning scenario and write episode artifacts");
    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    run->add_option("--seed", seed, "RNG seed (overrides the scenario file)");
    run->add_option("--episodes", episodes, "Episode count (overrides the scenario file)");
    run->add_option("--out-dir", out_dir, "Output directory for episodes.csv etc.");

    auto* simulate = app.add_subcommand("simulate", "Closed-loop unit-step response to CSV");
    std::string plant_path;
    std::string gains_text;
    std::string csv_path;
    double horizon = 10.0;
    double sample_dt = 0.3;
    double dt_sim = 0.01;
    simulate->add_option("--plant", plant_path, "Plant JSON file with num/den/delay")->required();
    simulate->add_option("--gains", gains_text, "Controller gains kp,ki[,kd]")->required();
    simulate->add_option("--horizon", horizon, "Response horizon in seconds");
    simulate->add_option("--sample-dt", sample_dt, "Reporting interval in seconds");
    simulate->add_option("--dt-sim", dt_sim, "Internal simulation step in seconds");
    simulate->add_option("--out", csv_path, "Output CSV path")->required();

    auto* simc = app.add_subcommand("simc", "SIMC PI gains for a FOPDT model, printed as JSON");
    double model_gain = 0.0;
    double model_tau = 0.0;
    double model_theta = 0.0;
    std::optional<double> tau_c;
    simc->add_option("--gain", model_gain, "Process gain")->required();
    simc->add_option("--tau", model_tau, "Time constant in seconds")->required();
    simc->add_option("--theta", model_theta, "Dead time in seconds")->required();
    simc->add_option("--tau-c", tau_c, "Closed-loop time constant (default: theta, or tau/10 if theta=0)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return run_command(scenario_path, out_dir, seed, episodes);
        if (simulate->parsed()) return simulate_command(plant_path, gains_text, horizon, sample_dt, dt_sim, csv_path);
        return simc_command(model_gain, model_tau, model_theta, tau_c);
    } catch (const loopforge::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
