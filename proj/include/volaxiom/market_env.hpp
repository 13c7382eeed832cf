#pragma once

#include "volaxiom/generator.hpp"
#include "volaxiom/grid.hpp"
#include "volaxiom/law_manifold.hpp"
#include "volaxiom/world_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <vector>

namespace volaxiom {

struct EnvConfig {
    int episode_len = 64;
    double gamma = 0.99;
    double lambda_law = 0.0;
    int n_buckets = 3;
    double a_max = 1.0;
    double trade_cost = 5e-4;
    double carry_coeff = 0.5;

    void validate() const;
};

// Maturity j belongs to band floor(j * n_buckets / n_t): contiguous short/mid/long bands.
std::vector<int> maturity_bands(const SurfaceGrid& grid, int n_buckets);
std::vector<double> bucket_values(const SurfaceGrid& grid, const std::vector<double>& w, int n_buckets);

/// pnl = sum_b a_b (V_b(w_next) - V_b(w_t)) - c sum_b |a_b| + carry * mean(w_t). Throws ActionOutOfBounds.
double step_pnl(const EnvConfig& cfg, const SurfaceGrid& grid, const std::vector<double>& w_t,
                const std::vector<double>& w_next, const std::vector<double>& a);

struct GoodhartSplit {
    double on_manifold = 0.0;
    double ghost = 0.0;
    double exact_penalty = 0.0; // 0.5 * dist^2 of w_pred, from the same projection
};

GoodhartSplit goodhart_decompose(const LawManifold& m, const EnvConfig& cfg, const std::vector<double>& w_t,
                                 const TotalVarianceSurface& w_pred, const std::vector<double>& a);

// L_r = a_max * sqrt(d_a) * max_b ||row_b|| for the bucket-averaging rows.
double ghost_lipschitz(const EnvConfig& cfg, const SurfaceGrid& grid);

struct StepRecord {
    TotalVarianceSurface w_pred;
    std::vector<double> action;
    double pnl = 0.0;
    double law_pen = 0.0;       // surrogate penalty of w_pred; the one inside the reward
    double law_pen_exact = 0.0; // exact penalty of w_pred (only when decomposed)
    double reward = 0.0;
    double r_on_manifold = 0.0;
    double r_ghost = 0.0;
};

struct EpisodeRecord {
    std::vector<StepRecord> steps;
    std::vector<TotalVarianceSurface> init_window;
    std::uint64_t seed = 0;
    Regime regime = Regime::baseline;
    bool decomposed = false;
};

// What a policy sees: bucket values of the current window (oldest first),
// the surface-mean level of each window entry, and the position just held.
struct Observation {
    std::vector<std::vector<double>> buckets;
    std::vector<double> mean_levels;
    std::vector<double> prev_action;
    int t = 0;
    int horizon = 0;

    // Fixed-scale numeric encoding for learned policies: last levels x10,
    // window increments x100, previous action, fraction of the episode left.
    std::vector<double> features() const;
};
std::size_t feature_dim(int window_len, int n_buckets);

class MarketEnv {
public:
    /// decompose = false skips the projection per step (training rollouts).
    MarketEnv(const WorldModel& model, const LawManifold& m, EnvConfig cfg, bool decompose = true);

    const EnvConfig& config() const { return cfg_; }
    const Observation& reset(const std::vector<TotalVarianceSurface>& init_window);
    StepRecord step(const std::vector<double>& action);
    const Observation& observation() const { return obs_; }
    bool done() const { return t_ >= cfg_.episode_len; }

private:
    void refresh_observation();

    const WorldModel* model_;
    const LawManifold* m_;
    EnvConfig cfg_;
    bool decompose_;
    std::deque<TotalVarianceSurface> window_;
    std::vector<double> prev_action_;
    Observation obs_;
    int t_ = 0;
};

class Policy;

/// Throws InvalidArgument on a malformed init window (wrong length or infeasible).
EpisodeRecord rollout(const WorldModel& model, const LawManifold& m, const EnvConfig& cfg, Policy& policy,
                      const std::vector<TotalVarianceSurface>& init_window, std::uint64_t seed,
                      Regime regime = Regime::baseline, bool decompose = true);

// Sum_t gamma^t (pnl_t - lambda * law_pen_t) for a recorded trace.
double discounted_return(const EpisodeRecord& ep, double gamma, double lambda);

void write_episode_csv(const std::filesystem::path& path, const EpisodeRecord& ep, int n_buckets);
nlohmann::json episode_sidecar(const EpisodeRecord& ep, const EnvConfig& cfg);

} // namespace volaxiom
