#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "loopforge/closedloop.hpp"
#include "loopforge/errors.hpp"
#include "loopforge/lti.hpp"
#include "loopforge/objective.hpp"
#include "loopforge/rng.hpp"
#include "loopforge/simc.hpp"
#include "loopforge/tuner.hpp"

namespace loopforge {

// Sub-stream ids (see derive_stream_seed); kExplorationStream = 0 lives in tuner.hpp.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kDriftStream = 2;

/// Per-episode plant mutation: the numerator gain ramps linearly to
/// final_gain_scale at end_episode and stays there; the dead time gets
/// fresh zero-mean Gaussian noise each episode, clamped at zero.
struct DriftSpec {
    double final_gain_scale = 1.0;
    int end_episode = 1;
    double delay_noise_std = 0.0;
};

/// Initial gains computed from a user-supplied FOPDT model via SIMC.
struct SimcInit {
    FopdtModel model;
    std::optional<double> tau_c;
};

/// Initial gains drawn uniformly from [-half_width, half_width] per entry.
struct RandomInit {
    double half_width = 0.1;
    std::optional<std::uint64_t> seed;  // defaults to a stream derived from the run seed
};

using InitSpec = std::variant<GainVector, SimcInit, RandomInit>;

/// Target data: explicit samples, or gains to simulate on the nominal plant.
using TargetSpec = std::variant<GainVector, Eigen::VectorXd>;

struct Scenario {
    TransferFunction plant = make_tf({1.0}, {1.0, 1.0});
    int controller_order = 3;
    double sample_dt = 0.3;
    double horizon = 30.0;
    double dt_sim = 0.01;
    TargetSpec target_spec = GainVector::pid(1.0, 1.0, 0.0);
    InitSpec init_spec = RandomInit{};
    std::optional<DriftSpec> drift_spec;
    TunerConfig tuner;
    bool seed_in_file = false;

    SamplingGrid grid() const {
        const long n = std::lround(horizon / sample_dt) + 1;
        if (n < 2 || std::abs((static_cast<double>(n) - 1.0) * sample_dt - horizon) > 1e-9) {
            throw ConfigError("horizon must be a positive multiple of sample_dt");
        }
        return SamplingGrid(sample_dt, static_cast<int>(n));
    }
};

/// Closed-loop rollout of `plant` under `gains`, validated as a usable
/// tracking target: it must stay inside the output clamp and end at the
/// set-point (within 0.1), so e.g. an all-zero response is rejected.
inline ResponseVector make_target(const TransferFunction& plant, const GainVector& gains,
                                  const SamplingGrid& grid, double dt_sim = 0.01) {
    const ResponseVector response = simulate_closed_loop(discretize(plant, dt_sim), gains, grid);
    if (response.diverged) throw InvalidTarget("target response diverged");
    if (std::abs(response.samples(grid.n() - 1) - 1.0) > 0.1) {
        throw InvalidTarget("target response does not settle at the set-point");
    }
    return response;
}

/// Plant for a given 1-based episode under the drift schedule.
inline TransferFunction drifted_plant(const TransferFunction& nominal, const DriftSpec& spec,
                                      int episode, NormalStream& rng) {
    if (spec.end_episode < 1) throw ConfigError("drift: end_episode must be >= 1");
    if (episode < 0) throw std::invalid_argument("drift: episode index must be >= 0");
    const double progress =
        static_cast<double>(std::min(episode, spec.end_episode)) / static_cast<double>(spec.end_episode);
    const double scale = 1.0 + (spec.final_gain_scale - 1.0) * progress;

    std::vector<double> num = nominal.num();
    for (double& c : num) c *= scale;

    double delay = nominal.delay();
    if (spec.delay_noise_std > 0.0) {
        delay = std::max(0.0, delay + spec.delay_noise_std * rng.next());
    }
    return make_tf(std::move(num), nominal.den(), delay);
}

// --- scenario file parsing ---------------------------------------------------

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj, const std::string& key,
                                         const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("scenario: missing key '" + key + "' in " + where);
    return obj.at(key);
}

inline std::vector<double> as_double_vector(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError("scenario: '" + where + "' must be a nonempty array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError("scenario: '" + where + "' must contain numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline GainVector gains_from_array(const std::vector<double>& values, const std::string& where) {
    if (values.size() == 2) return GainVector::pi(values[0], values[1]);
    if (values.size() == 3) return GainVector::pid(values[0], values[1], values[2]);
    throw ConfigError("scenario: '" + where + "' must hold 2 or 3 gains");
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    using detail::as_double_vector;
    using detail::gains_from_array;
    using detail::require_key;

    if (!j.is_object()) throw ConfigError("scenario: top level must be a JSON object");
    Scenario sc;

    try {
        const auto& plant = require_key(j, "plant", "scenario");
        sc.plant = make_tf(as_double_vector(require_key(plant, "num", "plant"), "plant.num"),
                           as_double_vector(require_key(plant, "den", "plant"), "plant.den"),
                           plant.value("delay", 0.0));

        sc.controller_order = require_key(j, "controller_order", "scenario").get<int>();
        if (sc.controller_order != 2 && sc.controller_order != 3) {
            throw ConfigError("scenario: controller_order must be 2 (PI) or 3 (PID)");
        }

        const auto& grid = require_key(j, "grid", "scenario");
        sc.sample_dt = require_key(grid, "sample_dt", "grid").get<double>();
        sc.horizon = require_key(grid, "horizon", "grid").get<double>();
        sc.dt_sim = j.value("dt_sim", 0.01);
        if (!(sc.dt_sim > 0.0)) throw ConfigError("scenario: dt_sim must be positive");

        const auto& target = require_key(j, "target_spec", "scenario");
        if (target.contains("gains")) {
            sc.target_spec = gains_from_array(as_double_vector(target.at("gains"), "target_spec.gains"),
                                              "target_spec.gains");
        } else if (target.contains("data")) {
            const auto data = as_double_vector(target.at("data"), "target_spec.data");
            sc.target_spec = Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<long>(data.size()))
                                 .eval();
        } else {
            throw ConfigError("scenario: target_spec needs either 'gains' or 'data'");
        }

        const auto& init = require_key(j, "init_spec", "scenario");
        if (init.contains("gains")) {
            sc.init_spec = gains_from_array(as_double_vector(init.at("gains"), "init_spec.gains"),
                                            "init_spec.gains");
        } else if (init.contains("simc")) {
            const auto& m = init.at("simc");
            SimcInit si;
            si.model = make_fopdt(require_key(m, "K", "init_spec.simc").get<double>(),
                                  require_key(m, "tau1", "init_spec.simc").get<double>(),
                                  require_key(m, "theta", "init_spec.simc").get<double>());
            if (m.contains("tau_c")) si.tau_c = m.at("tau_c").get<double>();
            sc.init_spec = si;
        } else if (init.contains("random")) {
            const auto& r = init.at("random");
            RandomInit ri;
            ri.half_width = require_key(r, "half_width", "init_spec.random").get<double>();
            if (!(ri.half_width > 0.0)) throw ConfigError("scenario: init half_width must be positive");
            if (r.contains("seed")) ri.seed = r.at("seed").get<std::uint64_t>();
            sc.init_spec = ri;
        } else {
            throw ConfigError("scenario: init_spec needs 'gains', 'simc' or 'random'");
        }

        const auto& tuner = require_key(j, "tuner", "scenario");
        sc.tuner.alpha = require_key(tuner, "alpha", "tuner").get<double>();
        sc.tuner.sigma = require_key(tuner, "sigma", "tuner").get<double>();
        sc.tuner.num_directions = require_key(tuner, "N", "tuner").get<int>();
        sc.tuner.episodes = require_key(tuner, "episodes", "tuner").get<int>();
        sc.tuner.q = tuner.value("q", 1);
        sc.tuner.sigma_r_floor = tuner.value("sigma_r_floor", 1e-12);
        if (tuner.contains("seed")) {
            sc.tuner.seed = tuner.at("seed").get<std::uint64_t>();
            sc.seed_in_file = true;
        }
        if (sc.tuner.episodes < 1) throw ConfigError("scenario: episodes must be >= 1");
        validate(sc.tuner);

        if (j.contains("drift_spec") && !j.at("drift_spec").is_null()) {
            const auto& d = j.at("drift_spec");
            DriftSpec spec;
            spec.final_gain_scale = require_key(d, "final_gain_scale", "drift_spec").get<double>();
            spec.end_episode = require_key(d, "end_episode", "drift_spec").get<int>();
            spec.delay_noise_std = d.value("delay_noise_std", 0.0);
            if (spec.end_episode < 1 || spec.end_episode > sc.tuner.episodes) {
                throw ConfigError("scenario: drift end_episode must be in [1, episodes]");
            }
            if (spec.delay_noise_std < 0.0) throw ConfigError("scenario: delay_noise_std must be >= 0");
            sc.drift_spec = spec;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: malformed value: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }

    sc.grid();  // validates horizon/sample_dt consistency
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario: invalid JSON in " + path.string() + ": " + e.what());
    }
    return parse_scenario(j);
}

// --- run pipeline ------------------------------------------------------------

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
};

/// Seed priority: CLI flag, then scenario file, then LOOPFORGE_SEED, then 0.
inline std::uint64_t resolve_seed(const Scenario& sc, const RunOverrides& overrides) {
    if (overrides.seed) return *overrides.seed;
    if (sc.seed_in_file) return sc.tuner.seed;
    if (const char* env = std::getenv("LOOPFORGE_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("LOOPFORGE_SEED must be a nonnegative integer");
        }
    }
    return 0;
}

inline GainVector resolve_initial_gains(const Scenario& sc) {
    if (const auto* given = std::get_if<GainVector>(&sc.init_spec)) {
        if (given->order() != sc.controller_order) {
            throw ConfigError("scenario: init gains length differs from controller_order");
        }
        return *given;
    }
    if (const auto* simc = std::get_if<SimcInit>(&sc.init_spec)) {
        if (sc.controller_order != 2) {
            throw ConfigError("scenario: SIMC initialization yields PI gains; controller_order must be 2");
        }
        return simc->tau_c ? simc_pi(simc->model, *simc->tau_c) : simc_pi(simc->model);
    }
    const auto& random = std::get<RandomInit>(sc.init_spec);
    NormalStream rng(random.seed ? *random.seed : derive_stream_seed(sc.tuner.seed, kInitStream));
    Eigen::VectorXd g(sc.controller_order);
    for (int i = 0; i < sc.controller_order; ++i) {
        g(i) = rng.uniform(-random.half_width, random.half_width);
    }
    return GainVector(std::move(g));
}

struct RunOutput {
    Scenario scenario;  // with resolved seed/episodes
    std::vector<EpisodeRecord> records;
    ResponseVector target;
    ResponseVector first_response;
    ResponseVector last_response;
    GainVector initial_gains = GainVector::pi(0.0, 0.0);
    Eigen::VectorXd final_gains;
    double initial_mae = 0.0;
    double final_mae = 0.0;
};

/// Executes a fully resolved scenario in memory (no files touched).
inline RunOutput run(const Scenario& sc) {
    const SamplingGrid grid = sc.grid();

    RunOutput out;
    out.scenario = sc;

    if (const auto* data = std::get_if<Eigen::VectorXd>(&sc.target_spec)) {
        if (data->size() != grid.n()) {
            throw ConfigError("scenario: explicit target data length differs from the grid");
        }
        out.target = ResponseVector{*data, false};
    } else {
        out.target = make_target(sc.plant, std::get<GainVector>(sc.target_spec), grid, sc.dt_sim);
    }

    out.initial_gains = resolve_initial_gains(sc);
    Policy policy = Policy::zero(grid.n(), out.initial_gains);

    PlantProvider plant_for;
    const DiscretePlant nominal = discretize(sc.plant, sc.dt_sim);
    if (sc.drift_spec) {
        plant_for = [&sc, drift_rng = NormalStream(derive_stream_seed(sc.tuner.seed, kDriftStream))](
                        int episode) mutable {
            return discretize(drifted_plant(sc.plant, *sc.drift_spec, episode, drift_rng), sc.dt_sim);
        };
    } else {
        plant_for = [&nominal](int) { return nominal; };
    }

    const int last = sc.tuner.episodes;
    auto observer = [&out, last](const EpisodeRecord& rec, const ResponseVector& nominal_response) {
        if (rec.episode == 1) out.first_response = nominal_response;
        if (rec.episode == last) out.last_response = nominal_response;
    };

    out.records = train(policy, plant_for, out.target, grid, sc.tuner, observer);

    out.final_gains = out.records.empty() ? out.initial_gains.vec() : out.records.back().gains_updated;
    out.initial_mae = out.records.empty() ? 0.0 : out.records.front().mae_nominal;
    out.final_mae = out.records.empty() ? 0.0 : out.records.back().mae_nominal;
    return out;
}

// --- artifacts ---------------------------------------------------------------

namespace detail {

/// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// Episode log, one row per episode:
/// episode,reward,mae,kp,ki,kd,sigma_r,diverged_count
inline void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "episode,reward,mae,kp,ki,kd,sigma_r,diverged_count\n";
    for (const auto& rec : records) {
        const double kd = rec.gains_updated.size() > 2 ? rec.gains_updated(2) : 0.0;
        out << rec.episode << ',' << detail::format_double(rec.reward_nominal) << ','
            << detail::format_double(rec.mae_nominal) << ',' << detail::format_double(rec.gains_updated(0))
            << ',' << detail::format_double(rec.gains_updated(1)) << ',' << detail::format_double(kd) << ','
            << detail::format_double(rec.sigma_r) << ',' << rec.diverged_count() << '\n';
    }
    if (!out) throw std::runtime_error("failed while writing " + path.string());
}

inline void write_response_csv(const std::filesystem::path& path, const SamplingGrid& grid,
                               const ResponseVector& response) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t,y\n";
    for (int i = 0; i < grid.n() && i < response.samples.size(); ++i) {
        out << detail::format_double(grid.time(i)) << ',' << detail::format_double(response.samples(i))
            << '\n';
    }
    if (!out) throw std::runtime_error("failed while writing " + path.string());
}

inline nlohmann::json summary_json(const RunOutput& out) {
    const auto& sc = out.scenario;
    nlohmann::json j{
        {"alpha", sc.tuner.alpha},
        {"sigma", sc.tuner.sigma},
        {"N", sc.tuner.num_directions},
        {"q", sc.tuner.q},
        {"episodes", sc.tuner.episodes},
        {"seed", sc.tuner.seed},
        {"sigma_r_floor", sc.tuner.sigma_r_floor},
        {"controller_order", sc.controller_order},
        {"sample_dt", sc.sample_dt},
        {"horizon", sc.horizon},
        {"dt_sim", sc.dt_sim},
        {"initial_mae", out.initial_mae},
        {"final_mae", out.final_mae},
    };
    j["initial_gains"] = std::vector<double>(out.initial_gains.vec().begin(), out.initial_gains.vec().end());
    j["final_gains"] = std::vector<double>(out.final_gains.begin(), out.final_gains.end());
    return j;
}

inline void write_artifacts(const std::filesystem::path& out_dir, const RunOutput& out) {
    std::filesystem::create_directories(out_dir);
    write_episode_csv(out_dir / "episodes.csv", out.records);
    const SamplingGrid grid = out.scenario.grid();
    write_response_csv(out_dir / "response_first.csv", grid, out.first_response);
    write_response_csv(out_dir / "response_last.csv", grid, out.last_response);
    std::ofstream summary(out_dir / "summary.json");
    if (!summary) throw std::runtime_error("cannot write summary.json");
    summary << summary_json(out).dump(2) << '\n';
}

/// Load, run and write artifacts. Throws ConfigError for anything wrong with
/// the scenario or overrides (CLI exit 2) and std::runtime_error for failures
/// during the run itself (CLI exit 1).
inline RunOutput run_scenario(const std::filesystem::path& scenario_file,
                              const std::filesystem::path& out_dir, const RunOverrides& overrides = {}) {
    Scenario sc = load_scenario(scenario_file);
    sc.tuner.seed = resolve_seed(sc, overrides);
    if (overrides.episodes) {
        if (*overrides.episodes < 1) throw ConfigError("episodes override must be >= 1");
        sc.tuner.episodes = *overrides.episodes;
        if (sc.drift_spec && sc.drift_spec->end_episode > sc.tuner.episodes) {
            throw ConfigError("episodes override conflicts with drift end_episode");
        }
    }
    RunOutput out = run(sc);
    write_artifacts(out_dir, out);
    return out;
}

}  // namespace loopforge
