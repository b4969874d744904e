#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "loopforge/closedloop.hpp"
#include "loopforge/errors.hpp"
#include "loopforge/lti.hpp"
#include "loopforge/objective.hpp"
#include "loopforge/rng.hpp"

namespace loopforge {

// Sub-stream id for exploration noise (see derive_stream_seed).
inline constexpr std::uint64_t kExplorationStream = 0;

/// Linear gain policy: K = M x + K0. The anchor K0 is never touched by
/// training; only M evolves.
struct Policy {
    Eigen::MatrixXd M;  // k x n
    GainVector K0;

    static Policy zero(int n, GainVector anchor) {
        const int k = anchor.order();
        return Policy{Eigen::MatrixXd::Zero(k, n), std::move(anchor)};
    }
};

struct TunerConfig {
    double alpha = 0.01;          // update step size
    double sigma = 0.05;          // exploration standard deviation
    int num_directions = 1;       // N sampled directions per episode
    int q = 1;                    // reward exponent
    int episodes = 1;
    std::uint64_t seed = 0;
    double sigma_r_floor = 1e-12; // skip updates when the reward spread is degenerate
};

inline void validate(const TunerConfig& cfg) {
    if (!(cfg.alpha > 0.0)) throw std::invalid_argument("tuner: alpha must be positive");
    if (!(cfg.sigma > 0.0)) throw std::invalid_argument("tuner: sigma must be positive");
    if (cfg.num_directions < 1) throw std::invalid_argument("tuner: need at least one direction");
    if (cfg.q != 1 && cfg.q != 2) throw std::invalid_argument("tuner: reward exponent must be 1 or 2");
    if (cfg.episodes < 0) throw std::invalid_argument("tuner: episode count must be >= 0");
    if (!(cfg.sigma_r_floor >= 0.0)) throw std::invalid_argument("tuner: sigma_r floor must be >= 0");
}

/// Everything observable about one episode.
struct EpisodeRecord {
    int episode = 0;                       // 1-based
    Eigen::VectorXd gains_start;           // K used for the nominal rollout
    Eigen::VectorXd gains_updated;         // K after the policy update
    double reward_nominal = 0.0;
    double mae_nominal = 0.0;
    std::vector<double> rewards_plus;      // N entries, direction order
    std::vector<double> rewards_minus;
    double sigma_r = 0.0;
    bool updated = false;
    bool nominal_diverged = false;
    std::vector<std::uint8_t> plus_diverged;
    std::vector<std::uint8_t> minus_diverged;

    int diverged_count() const {
        int count = nominal_diverged ? 1 : 0;
        for (auto f : plus_diverged) count += f ? 1 : 0;
        for (auto f : minus_diverged) count += f ? 1 : 0;
        return count;
    }
};

/// K = K0 + M x.
inline GainVector policy_action(const Policy& policy, const ResponseVector& x) {
    if (policy.M.rows() != policy.K0.order() || policy.M.cols() != x.samples.size()) {
        throw ShapeMismatch("policy_action: M, K0 and x dimensions disagree");
    }
    return GainVector(policy.K0.vec() + policy.M * x.samples);
}

/// N i.i.d. standard-normal k x n matrices from one deterministic stream.
/// Entries are drawn in row-major order, matrices in index order.
inline std::vector<Eigen::MatrixXd> sample_directions(NormalStream& rng, int count, int rows, int cols) {
    if (count < 0 || rows < 0 || cols < 0) {
        throw std::invalid_argument("sample_directions: negative dimension");
    }
    std::vector<Eigen::MatrixXd> deltas;
    deltas.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        Eigen::MatrixXd d(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) d(r, c) = rng.next();
        }
        deltas.push_back(std::move(d));
    }
    return deltas;
}

/// Population standard deviation over the 2N reward pairs. Each (plus, minus)
/// pair is accumulated jointly, so swapping the roles of the two rollouts of a
/// direction leaves the result bit-identical.
inline double population_std(std::span<const double> plus, std::span<const double> minus) {
    if (plus.size() != minus.size() || plus.empty()) {
        throw LengthMismatch("population_std: need equally many plus and minus rewards");
    }
    const double count = 2.0 * static_cast<double>(plus.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < plus.size(); ++j) sum += plus[j] + minus[j];
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t j = 0; j < plus.size(); ++j) {
        sq += (plus[j] - mean) * (plus[j] - mean) + (minus[j] - mean) * (minus[j] - mean);
    }
    return std::sqrt(sq / count);
}

struct PolicyUpdate {
    Eigen::MatrixXd M;
    double sigma_r = 0.0;
    bool updated = false;
};

/// Finite-difference policy update:
///   M <- M + (alpha / sigma_r) * (1/N) * sum_j (r_j+ - r_j-) * delta_j
/// where sigma_r is the population standard deviation of the 2N rewards.
/// A spread below `sigma_r_floor` carries no direction information, so the
/// update is skipped and M returned unchanged.
inline PolicyUpdate update_policy(const Eigen::MatrixXd& M, const std::vector<Eigen::MatrixXd>& deltas,
                                  std::span<const double> rewards_plus, std::span<const double> rewards_minus,
                                  double alpha, double sigma_r_floor = 1e-12) {
    const std::size_t n_dirs = deltas.size();
    if (rewards_plus.size() != n_dirs || rewards_minus.size() != n_dirs) {
        throw LengthMismatch("update_policy: one reward pair per direction required");
    }
    if (n_dirs == 0) throw std::invalid_argument("update_policy: need at least one direction");

    PolicyUpdate result;
    result.sigma_r = population_std(rewards_plus, rewards_minus);
    if (!(result.sigma_r > sigma_r_floor)) {
        result.M = M;
        return result;
    }

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(M.rows(), M.cols());
    for (std::size_t j = 0; j < n_dirs; ++j) {
        if (deltas[j].rows() != M.rows() || deltas[j].cols() != M.cols()) {
            throw ShapeMismatch("update_policy: direction shape differs from M");
        }
        acc += (rewards_plus[j] - rewards_minus[j]) * deltas[j];
    }
    const double scale = alpha / result.sigma_r / static_cast<double>(n_dirs);
    result.M = M + scale * acc;
    if (!result.M.allFinite()) throw NonFiniteResult("update_policy: non-finite policy matrix");
    result.updated = true;
    return result;
}

using RolloutFn = std::function<ResponseVector(const GainVector&)>;

/// One episode: nominal rollout with the current gains, 2N perturbed rollouts
/// K+/- = (M +/- sigma*delta_j) x + K0, a sigma_r-scaled update of M, then
/// K <- M x + K0 using the same episode-start response x.
///
/// `policy` and `gains` are advanced in place; the record plus the nominal
/// response are returned for logging.
inline std::pair<EpisodeRecord, ResponseVector> run_episode(Policy& policy, GainVector& gains,
                                                            const RolloutFn& rollout,
                                                            const ResponseVector& target,
                                                            const TunerConfig& cfg, NormalStream& rng,
                                                            int episode_index) {
    const RewardConfig reward_cfg(cfg.q);
    const int k = policy.K0.order();
    const auto n = policy.M.cols();

    EpisodeRecord rec;
    rec.episode = episode_index;
    rec.gains_start = gains.vec();

    const ResponseVector x = rollout(gains);
    if (x.samples.size() != n || x.samples.size() != target.samples.size()) {
        throw ShapeMismatch("run_episode: response length differs from policy width");
    }
    rec.reward_nominal = reward(x, target, reward_cfg);
    rec.mae_nominal = mean_abs_error(x, target);
    rec.nominal_diverged = x.diverged;

    const auto deltas = sample_directions(rng, cfg.num_directions, k, static_cast<int>(n));
    rec.rewards_plus.reserve(deltas.size());
    rec.rewards_minus.reserve(deltas.size());
    for (const auto& delta : deltas) {
        const GainVector k_plus(policy.K0.vec() + (policy.M + cfg.sigma * delta) * x.samples);
        const GainVector k_minus(policy.K0.vec() + (policy.M - cfg.sigma * delta) * x.samples);
        const ResponseVector x_plus = rollout(k_plus);
        const ResponseVector x_minus = rollout(k_minus);
        rec.rewards_plus.push_back(reward(x_plus, target, reward_cfg));
        rec.rewards_minus.push_back(reward(x_minus, target, reward_cfg));
        rec.plus_diverged.push_back(x_plus.diverged ? 1 : 0);
        rec.minus_diverged.push_back(x_minus.diverged ? 1 : 0);
    }

    const PolicyUpdate update = update_policy(policy.M, deltas, rec.rewards_plus, rec.rewards_minus,
                                              cfg.alpha, cfg.sigma_r_floor);
    policy.M = update.M;
    rec.sigma_r = update.sigma_r;
    rec.updated = update.updated;

    gains = policy_action(policy, x);
    rec.gains_updated = gains.vec();
    return {std::move(rec), x};
}

/// run_episode against a concrete plant.
inline std::pair<EpisodeRecord, ResponseVector> run_episode(Policy& policy, GainVector& gains,
                                                            const DiscretePlant& plant,
                                                            const SamplingGrid& grid,
                                                            const ResponseVector& target,
                                                            const TunerConfig& cfg, NormalStream& rng,
                                                            int episode_index) {
    return run_episode(
        policy, gains,
        [&](const GainVector& k) { return simulate_closed_loop(plant, k, grid); },
        target, cfg, rng, episode_index);
}

using PlantProvider = std::function<DiscretePlant(int episode)>;
using EpisodeObserver = std::function<void(const EpisodeRecord&, const ResponseVector& nominal)>;

/// Full training loop. Episodes are numbered 1..cfg.episodes; the plant
/// provider is consulted before each episode so drift/noise schedules apply
/// ahead of the nominal rollout. Gains start from the anchor K0.
inline std::vector<EpisodeRecord> train(Policy& policy, const PlantProvider& plant_for_episode,
                                        const ResponseVector& target, const SamplingGrid& grid,
                                        const TunerConfig& cfg, const EpisodeObserver& observer = {}) {
    validate(cfg);
    if (target.samples.size() != grid.n() || policy.M.cols() != grid.n()) {
        throw LengthMismatch("train: target and policy width must match the grid");
    }

    NormalStream rng(derive_stream_seed(cfg.seed, kExplorationStream));
    GainVector gains = policy.K0;

    std::vector<EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(cfg.episodes));
    for (int e = 1; e <= cfg.episodes; ++e) {
        const DiscretePlant plant = plant_for_episode(e);
        auto [rec, nominal] = run_episode(policy, gains, plant, grid, target, cfg, rng, e);
        if (observer) observer(rec, nominal);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace loopforge
