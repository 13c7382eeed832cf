#pragma once

#include "volaxiom/market_env.hpp"
#include "volaxiom/rng.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace volaxiom {

enum class PolicyKind { zero_hedge, random_gaussian, vol_trend, ppo };
std::string to_string(PolicyKind k);
PolicyKind parse_policy_kind(const std::string& s);

class Policy {
public:
    Policy(int action_dim, double a_max);
    virtual ~Policy() = default;

    virtual PolicyKind kind() const = 0;
    int action_dim() const { return action_dim_; }
    double a_max() const { return a_max_; }

    // Resets per-episode state and reseeds the policy's own random stream.
    virtual void begin_episode(const Observation& first, std::uint64_t seed);
    // Always inside [-a_max, a_max]^action_dim.
    virtual std::vector<double> act(const Observation& obs) = 0;

    virtual nlohmann::json to_json() const = 0;

protected:
    std::vector<double> clip(std::vector<double> a) const;

    int action_dim_;
    double a_max_;
    Rng rng_;
};

std::unique_ptr<Policy> policy_from_json(const nlohmann::json& j);

class ZeroHedge final : public Policy {
public:
    ZeroHedge(int action_dim, double a_max);
    PolicyKind kind() const override { return PolicyKind::zero_hedge; }
    std::vector<double> act(const Observation& obs) override;
    nlohmann::json to_json() const override;
};

// a_b = kappa * xi_b / (1 + vol_b), xi ~ N(0, 1) i.i.d., vol_b the standard
// deviation of bucket b's increments over the observed window; clipped to the box.
class RandomGaussian final : public Policy {
public:
    RandomGaussian(int action_dim, double a_max, double kappa);
    PolicyKind kind() const override { return PolicyKind::random_gaussian; }
    std::vector<double> act(const Observation& obs) override;
    nlohmann::json to_json() const override;
    double kappa() const { return kappa_; }

private:
    double kappa_;
};

// tau <- beta tau + (1 - beta) (mean_w_t - mean_w_{t-1}); a = kappa tanh(theta tau) * proportions.
class VolTrend final : public Policy {
public:
    VolTrend(int action_dim, double a_max, double theta, double kappa, double beta, std::vector<double> proportions = {});
    PolicyKind kind() const override { return PolicyKind::vol_trend; }
    void begin_episode(const Observation& first, std::uint64_t seed) override;
    std::vector<double> act(const Observation& obs) override;
    nlohmann::json to_json() const override;
    double tau() const { return tau_; }

private:
    double theta_, kappa_, beta_;
    std::vector<double> proportions_;
    double tau_ = 0.0;
    double last_level_ = 0.0;
    bool primed_ = false;
};

// Parameters for the structural baselines.
struct BaselineParams {
    double rg_kappa = 0.3;
    double vt_theta = 200.0;
    double vt_kappa = 0.5;
    double vt_beta = 0.9;
    std::vector<double> vt_proportions = {1.0, 0.5, 0.25};
};

} // namespace volaxiom
