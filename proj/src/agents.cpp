#include "volaxiom/agents.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/ppo.hpp"

#include <algorithm>
#include <cmath>

namespace volaxiom {

std::string to_string(PolicyKind k) {
    switch (k) {
    case PolicyKind::zero_hedge: return "zero_hedge";
    case PolicyKind::random_gaussian: return "random_gaussian";
    case PolicyKind::vol_trend: return "vol_trend";
    case PolicyKind::ppo: return "ppo";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(const std::string& s) {
    if (s == "zero_hedge") return PolicyKind::zero_hedge;
    if (s == "random_gaussian") return PolicyKind::random_gaussian;
    if (s == "vol_trend") return PolicyKind::vol_trend;
    if (s == "ppo") return PolicyKind::ppo;
    throw FormatError("unknown policy kind '" + s + "'");
}

Policy::Policy(int action_dim, double a_max) : action_dim_(action_dim), a_max_(a_max) {
    if (action_dim < 1) throw InvalidArgument("action_dim must be >= 1");
    if (!(a_max > 0.0)) throw InvalidArgument("a_max must be positive");
}

void Policy::begin_episode(const Observation&, std::uint64_t seed) { rng_.seed(seed); }

std::vector<double> Policy::clip(std::vector<double> a) const {
    for (double& x : a) x = std::clamp(x, -a_max_, a_max_);
    return a;
}

ZeroHedge::ZeroHedge(int action_dim, double a_max) : Policy(action_dim, a_max) {}

std::vector<double> ZeroHedge::act(const Observation&) {
    return std::vector<double>(static_cast<std::size_t>(action_dim_), 0.0);
}

nlohmann::json ZeroHedge::to_json() const {
    return {{"kind", "zero_hedge"}, {"action_dim", action_dim_}, {"a_max", a_max_}};
}

RandomGaussian::RandomGaussian(int action_dim, double a_max, double kappa) : Policy(action_dim, a_max), kappa_(kappa) {
    if (!(kappa >= 0.0)) throw InvalidArgument("random-gaussian scale must be >= 0");
}

std::vector<double> RandomGaussian::act(const Observation& obs) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> a(static_cast<std::size_t>(action_dim_), 0.0);
    for (std::size_t b = 0; b < a.size(); ++b) {
        double vol = 0.0;
        const std::size_t L = obs.buckets.size();
        if (L > 2 && b < obs.buckets.back().size()) {
            double s = 0.0, sq = 0.0;
            for (std::size_t l = 1; l < L; ++l) {
                const double d = obs.buckets[l][b] - obs.buckets[l - 1][b];
                s += d;
                sq += d * d;
            }
            const double n = static_cast<double>(L - 1);
            vol = std::sqrt(std::max(0.0, sq / n - (s / n) * (s / n)));
        }
        const double xi = n01(rng_); // drawn even when kappa = 0 to keep the stream aligned
        a[b] = kappa_ * xi / (1.0 + vol);
    }
    return clip(std::move(a));
}

nlohmann::json RandomGaussian::to_json() const {
    return {{"kind", "random_gaussian"}, {"action_dim", action_dim_}, {"a_max", a_max_}, {"kappa", kappa_}};
}

VolTrend::VolTrend(int action_dim, double a_max, double theta, double kappa, double beta,
                   std::vector<double> proportions)
    : Policy(action_dim, a_max), theta_(theta), kappa_(kappa), beta_(beta), proportions_(std::move(proportions)) {
    if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("vol-trend beta must lie in [0, 1)");
    if (!(kappa >= 0.0 && kappa <= a_max)) throw InvalidArgument("vol-trend leverage must lie in [0, a_max]");
    if (proportions_.empty()) proportions_ = {1.0, 0.5, 0.25};
    proportions_.resize(static_cast<std::size_t>(action_dim), proportions_.back());
    double top = 0.0;
    for (double p : proportions_) top = std::max(top, std::abs(p));
    if (top == 0.0) throw InvalidArgument("vol-trend proportions must not all be zero");
    for (double& p : proportions_) p /= top; // largest bucket gets the full leverage
}

void VolTrend::begin_episode(const Observation& first, std::uint64_t seed) {
    Policy::begin_episode(first, seed);
    tau_ = 0.0;
    primed_ = false;
    // Warm the average up on the history the episode starts from.
    for (double level : first.mean_levels) {
        if (primed_) tau_ = beta_ * tau_ + (1.0 - beta_) * (level - last_level_);
        last_level_ = level;
        primed_ = true;
    }
}

std::vector<double> VolTrend::act(const Observation& obs) {
    const double level = obs.mean_levels.back();
    if (obs.t > 0) {
        tau_ = beta_ * tau_ + (1.0 - beta_) * (level - last_level_);
        last_level_ = level;
    }
    const double signal = kappa_ * std::tanh(theta_ * tau_);
    std::vector<double> a(static_cast<std::size_t>(action_dim_));
    for (std::size_t b = 0; b < a.size(); ++b) a[b] = signal * proportions_[b];
    return clip(std::move(a));
}

nlohmann::json VolTrend::to_json() const {
    return {{"kind", "vol_trend"}, {"action_dim", action_dim_}, {"a_max", a_max_},   {"theta", theta_},
            {"kappa", kappa_},     {"beta", beta_},             {"proportions", proportions_}};
}

std::unique_ptr<Policy> policy_from_json(const nlohmann::json& j) {
    try {
        const auto kind = parse_policy_kind(j.at("kind").get<std::string>());
        const int d = j.at("action_dim");
        const double a_max = j.at("a_max");
        switch (kind) {
        case PolicyKind::zero_hedge: return std::make_unique<ZeroHedge>(d, a_max);
        case PolicyKind::random_gaussian: return std::make_unique<RandomGaussian>(d, a_max, j.at("kappa").get<double>());
        case PolicyKind::vol_trend:
            return std::make_unique<VolTrend>(d, a_max, j.at("theta").get<double>(), j.at("kappa").get<double>(),
                                              j.at("beta").get<double>(),
                                              j.at("proportions").get<std::vector<double>>());
        case PolicyKind::ppo: return std::make_unique<PpoPolicy>(PpoPolicy::from_json(j));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed policy description: ") + e.what());
    }
    throw FormatError("unknown policy kind");
}

} // namespace volaxiom
