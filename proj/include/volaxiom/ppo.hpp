#pragma once

#include "volaxiom/agents.hpp"
#include "volaxiom/nn.hpp"

#include <functional>
#include <optional>

namespace volaxiom {

struct PPOConfig {
    double clip_eps = 0.2;
    double gae_lambda = 0.95;
    double gamma = 0.99;
    int epochs_per_update = 4;
    int steps_per_update = 4096;
    int minibatch_size = 256;
    double lr = 3e-4;
    std::vector<int> hidden = {64, 64};
    int total_updates = 20;
    int checkpoint_every = 5;
    double log_std_init = -1.2039728043259361; // ln 0.3
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double max_grad_norm = 0.5; // <= 0 disables clipping
    bool normalize_advantages = true;
    std::uint64_t seed = 11;

    void validate() const;
};

// Shared tanh trunk with a linear Gaussian-mean head, a linear value head and
// a state-independent log standard deviation.
class ActorCritic {
public:
    ActorCritic() = default;
    ActorCritic(std::size_t obs_dim, int action_dim, const std::vector<int>& hidden);

    std::size_t obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }
    const std::vector<int>& hidden() const { return hidden_; }
    Eigen::Index parameter_count() const { return layout_.size(); }

    void initialize(nn::Vector& params, Rng& rng, double log_std_init) const;

    struct Output {
        nn::Matrix mean;  // action_dim x batch
        nn::Matrix value; // 1 x batch
    };
    Output forward(const nn::Vector& params, const nn::Matrix& obs) const;
    nn::Vector log_std(const nn::Vector& params) const;

    // Per-column Gaussian log-density of the (unclipped) actions.
    nn::Vector log_prob(const nn::Vector& params, const nn::Matrix& obs, const nn::Matrix& actions) const;

    struct Batch {
        nn::Matrix obs;
        nn::Matrix actions;
        nn::Vector old_log_prob;
        nn::Vector advantages;
        nn::Vector returns;
    };
    struct LossParts {
        double policy = 0.0;
        double value = 0.0;
        double entropy = 0.0;
        double total = 0.0;
    };
    // Clipped surrogate + value MSE - entropy bonus; gradient added into grad when non-null.
    LossParts loss(const nn::Vector& params, const Batch& batch, double clip_eps, double value_coef,
                   double entropy_coef, nn::Vector* grad) const;

private:
    std::size_t obs_dim_ = 0;
    int action_dim_ = 0;
    std::vector<int> hidden_;
    nn::Layout layout_;
    nn::TanhTrunk trunk_;
    nn::Slot mean_w_, mean_b_, value_w_, value_b_, log_std_;
};

class PpoPolicy final : public Policy {
public:
    PpoPolicy(ActorCritic net, nn::Vector params, double a_max, bool stochastic = false);

    PolicyKind kind() const override { return PolicyKind::ppo; }
    std::vector<double> act(const Observation& obs) override;
    nlohmann::json to_json() const override;
    static PpoPolicy from_json(const nlohmann::json& j);

    const ActorCritic& network() const { return net_; }
    const nn::Vector& parameters() const { return params_; }
    void set_stochastic(bool s) { stochastic_ = s; }

private:
    ActorCritic net_;
    nn::Vector params_;
    bool stochastic_;
};

// Episodic environment as seen by the learner: feature vectors in, scalar rewards out.
class RlEnvironment {
public:
    virtual ~RlEnvironment() = default;
    virtual std::size_t observation_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual double a_max() const = 0;
    virtual std::vector<double> reset(Rng& rng) = 0;

    struct Step {
        std::vector<double> obs;
        double reward = 0.0;
        bool done = false;
    };
    // The action passed in is already clipped to the box.
    virtual Step step(const std::vector<double>& action) = 0;
};

// World-model market whose episodes start from windows drawn uniformly from a pool.
class WorldModelRlEnv final : public RlEnvironment {
public:
    WorldModelRlEnv(const WorldModel& model, const LawManifold& m, const EnvConfig& cfg,
                    std::vector<std::vector<TotalVarianceSurface>> init_pool);
    std::size_t observation_dim() const override;
    int action_dim() const override { return env_.config().n_buckets; }
    double a_max() const override { return env_.config().a_max; }
    std::vector<double> reset(Rng& rng) override;
    Step step(const std::vector<double>& action) override;

private:
    MarketEnv env_;
    int window_len_;
    std::vector<std::vector<TotalVarianceSurface>> pool_;
};

struct PpoCheckpoint {
    int update = 0;
    nn::Vector params;
};

struct PpoResult {
    ActorCritic net;
    nn::Vector params;
    std::vector<PpoCheckpoint> checkpoints;
    std::vector<double> curve; // mean per-step reward collected in each update
    double lambda_law = 0.0;

    PpoPolicy policy(double a_max) const { return PpoPolicy(net, params, a_max); }
};

// Generalized advantage estimates; dones[t] marks the last step of an episode.
void gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<bool>& dones,
         double gamma, double lambda, std::vector<double>& advantages, std::vector<double>& returns);

/// Throws DivergenceDetected on a non-finite loss; checkpoints written so far stay valid.
PpoResult ppo_train(RlEnvironment& env, const PPOConfig& cfg, double lambda_law,
                    const std::function<void(const PpoCheckpoint&)>& on_checkpoint = {});

struct SelectionCriterion {
    double law_weight = 1.0;
    double pnl_floor_slack = 0.005;
    int eval_episodes = 20;

    void validate() const;
};

struct CheckpointScore {
    double mean_pnl = 0.0;
    double mean_law_pen = 0.0;
    double gfi = 0.0;
};

struct Selection {
    std::size_t index = 0;
    bool floor_unmet = false;
    std::vector<CheckpointScore> scores;
};

/// Among checkpoints with mean_pnl >= reference_pnl - slack, minimizes mean_law_pen + law_weight * gfi
/// (ties: higher PnL, then earlier checkpoint). Throws NoCheckpoints.
Selection select_checkpoint(std::size_t n_checkpoints, const SelectionCriterion& criterion, double reference_pnl,
                            const std::function<CheckpointScore(std::size_t)>& evaluate);

} // namespace volaxiom
