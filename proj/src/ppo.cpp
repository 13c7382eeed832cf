#include "volaxiom/ppo.hpp"

#include "volaxiom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace volaxiom {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;
}

void PPOConfig::validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0) && !(clip_eps >= 1.0)) throw InvalidArgument("clip_eps must be positive");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InvalidArgument("gae_lambda must lie in [0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (epochs_per_update < 1 || steps_per_update < 1 || minibatch_size < 1) {
        throw InvalidArgument("epochs_per_update, steps_per_update, minibatch_size must be >= 1");
    }
    if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
    if (total_updates < 0 || checkpoint_every < 1) throw InvalidArgument("total_updates >= 0, checkpoint_every >= 1");
    if (hidden.empty()) throw InvalidArgument("at least one hidden layer is required");
}

ActorCritic::ActorCritic(std::size_t obs_dim, int action_dim, const std::vector<int>& hidden)
    : obs_dim_(obs_dim), action_dim_(action_dim), hidden_(hidden) {
    if (obs_dim < 1 || action_dim < 1) throw InvalidArgument("actor-critic dimensions must be positive");
    trunk_ = nn::TanhTrunk(layout_, static_cast<Eigen::Index>(obs_dim), hidden);
    const Eigen::Index h = trunk_.output_dim();
    mean_w_ = layout_.add(action_dim, h);
    mean_b_ = layout_.add(action_dim, 1);
    value_w_ = layout_.add(1, h);
    value_b_ = layout_.add(1, 1);
    log_std_ = layout_.add(action_dim, 1);
}

void ActorCritic::initialize(nn::Vector& params, Rng& rng, double log_std_init) const {
    params = nn::Vector::Zero(layout_.size());
    trunk_.initialize(params, rng);
    nn::uniform_init(params, mean_w_, 0.01, rng);
    nn::uniform_init(params, value_w_, 1.0 / std::sqrt(static_cast<double>(trunk_.output_dim())), rng);
    log_std_.of(params).setConstant(log_std_init);
}

ActorCritic::Output ActorCritic::forward(const nn::Vector& params, const nn::Matrix& obs) const {
    const nn::Matrix h = trunk_.forward(params, obs, nullptr);
    Output out;
    out.mean = (mean_w_.of(params) * h).colwise() + mean_b_.of(params).col(0);
    out.value = (value_w_.of(params) * h).colwise() + value_b_.of(params).col(0);
    return out;
}

nn::Vector ActorCritic::log_std(const nn::Vector& params) const { return log_std_.of(params).col(0); }

nn::Vector ActorCritic::log_prob(const nn::Vector& params, const nn::Matrix& obs, const nn::Matrix& actions) const {
    const nn::Matrix mean = forward(params, obs).mean;
    const nn::Vector ls = log_std(params);
    const nn::Vector inv_std = (-ls.array()).exp();
    const nn::Matrix z = (actions - mean).array().colwise() * inv_std.array();
    nn::Vector lp = -0.5 * z.colwise().squaredNorm().transpose();
    lp.array() -= ls.sum() + kHalfLog2Pi * static_cast<double>(action_dim_);
    return lp;
}

ActorCritic::LossParts ActorCritic::loss(const nn::Vector& params, const Batch& batch, double clip_eps,
                                         double value_coef, double entropy_coef, nn::Vector* grad) const {
    const auto B = batch.obs.cols();
    const double inv_b = 1.0 / static_cast<double>(B);
    nn::TanhTrunk::Cache cache;
    const nn::Matrix h = trunk_.forward(params, batch.obs, &cache);
    const nn::Matrix mean = (mean_w_.of(params) * h).colwise() + mean_b_.of(params).col(0);
    const nn::Matrix value = (value_w_.of(params) * h).colwise() + value_b_.of(params).col(0);
    const nn::Vector ls = log_std(params);
    const nn::Vector inv_std = (-ls.array()).exp();
    const nn::Matrix z = (batch.actions - mean).array().colwise() * inv_std.array();
    nn::Vector lp = -0.5 * z.colwise().squaredNorm().transpose();
    lp.array() -= ls.sum() + kHalfLog2Pi * static_cast<double>(action_dim_);

    LossParts parts;
    nn::Vector dlp = nn::Vector::Zero(B); // dL/dlog_prob per sample
    for (Eigen::Index i = 0; i < B; ++i) {
        const double ratio = std::exp(lp[i] - batch.old_log_prob[i]);
        const double a = batch.advantages[i];
        const double s1 = ratio * a;
        const double s2 = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a;
        parts.policy -= std::min(s1, s2) * inv_b;
        if (s1 <= s2) dlp[i] = -a * ratio * inv_b;
    }
    const nn::Matrix verr = value - batch.returns.transpose();
    parts.value = value_coef * verr.squaredNorm() * inv_b;
    parts.entropy = ls.sum() + (kHalfLog2Pi + 0.5) * static_cast<double>(action_dim_);
    parts.total = parts.policy + parts.value - entropy_coef * parts.entropy;
    if (!grad) return parts;

    nn::Vector& g = *grad;
    if (g.size() != layout_.size()) g = nn::Vector::Zero(layout_.size());
    // d log_prob / d mean = z / std; d log_prob / d log_std = z^2 - 1.
    const nn::Matrix dmean = (z.array().colwise() * inv_std.array()).rowwise() * dlp.transpose().array();
    const nn::Vector dls = (z.array().square() - 1.0).matrix() * dlp;
    const nn::Matrix dvalue = (2.0 * value_coef * inv_b) * verr;
    mean_w_.of(g) += dmean * h.transpose();
    mean_b_.of(g) += dmean.rowwise().sum();
    value_w_.of(g) += dvalue * h.transpose();
    value_b_.of(g) += dvalue.rowwise().sum();
    log_std_.of(g).col(0) += dls - entropy_coef * nn::Vector::Ones(action_dim_);
    const nn::Matrix dh = mean_w_.of(params).transpose() * dmean + value_w_.of(params).transpose() * dvalue;
    trunk_.backward(params, cache, dh, g);
    return parts;
}

PpoPolicy::PpoPolicy(ActorCritic net, nn::Vector params, double a_max, bool stochastic)
    : Policy(net.action_dim(), a_max), net_(std::move(net)), params_(std::move(params)), stochastic_(stochastic) {
    if (params_.size() != net_.parameter_count()) throw InvalidArgument("parameter vector does not fit the network");
}

std::vector<double> PpoPolicy::act(const Observation& obs) {
    const auto f = obs.features();
    if (f.size() != net_.obs_dim()) throw InvalidArgument("observation size does not match the policy network");
    const nn::Matrix x = Eigen::Map<const nn::Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
    const nn::Vector mean = net_.forward(params_, x).mean.col(0);
    std::vector<double> a(mean.data(), mean.data() + mean.size());
    if (stochastic_) {
        const nn::Vector ls = net_.log_std(params_);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (std::size_t b = 0; b < a.size(); ++b) a[b] += std::exp(ls[static_cast<Eigen::Index>(b)]) * n01(rng_);
    }
    return clip(std::move(a));
}

nlohmann::json PpoPolicy::to_json() const {
    return {{"kind", "ppo"},
            {"action_dim", action_dim_},
            {"a_max", a_max_},
            {"obs_dim", net_.obs_dim()},
            {"hidden", net_.hidden()},
            {"stochastic", stochastic_},
            {"parameters", std::vector<double>(params_.data(), params_.data() + params_.size())}};
}

PpoPolicy PpoPolicy::from_json(const nlohmann::json& j) {
    ActorCritic net(j.at("obs_dim").get<std::size_t>(), j.at("action_dim").get<int>(),
                    j.at("hidden").get<std::vector<int>>());
    const auto p = j.at("parameters").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(p.size()) != net.parameter_count()) {
        throw FormatError("policy checkpoint parameter count does not match its network");
    }
    nn::Vector params = Eigen::Map<const nn::Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    return PpoPolicy(std::move(net), std::move(params), j.at("a_max").get<double>(), j.value("stochastic", false));
}

WorldModelRlEnv::WorldModelRlEnv(const WorldModel& model, const LawManifold& m, const EnvConfig& cfg,
                                 std::vector<std::vector<TotalVarianceSurface>> init_pool)
    : env_(model, m, cfg, false), window_len_(model.config().window_len), pool_(std::move(init_pool)) {
    if (pool_.empty()) throw EmptyInput("the initial-window pool is empty");
}

std::size_t WorldModelRlEnv::observation_dim() const { return feature_dim(window_len_, env_.config().n_buckets); }

std::vector<double> WorldModelRlEnv::reset(Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
    return env_.reset(pool_[pick(rng)]).features();
}

RlEnvironment::Step WorldModelRlEnv::step(const std::vector<double>& action) {
    const StepRecord rec = env_.step(action);
    return {env_.observation().features(), rec.reward, env_.done()};
}

void gae(const std::vector<double>& rewards, const std::vector<double>& values, const std::vector<bool>& dones,
         double gamma, double lambda, std::vector<double>& advantages, std::vector<double>& returns) {
    const std::size_t n = rewards.size();
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double next_value = (dones[t] || t + 1 == n) ? 0.0 : values[t + 1];
        const double carry = dones[t] ? 0.0 : next_adv;
        const double delta = rewards[t] + gamma * next_value - values[t];
        advantages[t] = delta + gamma * lambda * carry;
        next_adv = advantages[t];
        returns[t] = advantages[t] + values[t];
    }
}

PpoResult ppo_train(RlEnvironment& env, const PPOConfig& cfg, double lambda_law,
                    const std::function<void(const PpoCheckpoint&)>& on_checkpoint) {
    cfg.validate();
    PpoResult res;
    res.lambda_law = lambda_law;
    res.net = ActorCritic(env.observation_dim(), env.action_dim(), cfg.hidden);
    {
        Rng init_rng(derive_seed(cfg.seed, "ppo.init"));
        res.net.initialize(res.params, init_rng, cfg.log_std_init);
    }
    Rng env_rng(derive_seed(cfg.seed, "ppo.env"));
    Rng act_rng(derive_seed(cfg.seed, "ppo.action"));
    Rng batch_rng(derive_seed(cfg.seed, "ppo.minibatch"));
    std::normal_distribution<double> n01(0.0, 1.0);
    nn::Adam opt(res.net.parameter_count(), cfg.lr);
    const auto obs_dim = static_cast<Eigen::Index>(env.observation_dim());
    const int da = env.action_dim();

    for (int update = 1; update <= cfg.total_updates; ++update) {
        std::vector<std::vector<double>> obs_buf, act_buf;
        std::vector<double> rewards, values, logps;
        std::vector<bool> dones;
        // Whole episodes only, so every trajectory ends in a terminal step.
        while (static_cast<int>(rewards.size()) < cfg.steps_per_update) {
            std::vector<double> obs = env.reset(env_rng);
            for (bool done = false; !done;) {
                const nn::Matrix x = Eigen::Map<const nn::Vector>(obs.data(), obs_dim);
                const auto out = res.net.forward(res.params, x);
                const nn::Vector ls = res.net.log_std(res.params);
                std::vector<double> raw(static_cast<std::size_t>(da)), clipped(raw.size());
                double lp = -(ls.sum() + kHalfLog2Pi * da);
                for (int b = 0; b < da; ++b) {
                    const double eps = n01(act_rng);
                    raw[static_cast<std::size_t>(b)] = out.mean(b, 0) + std::exp(ls[b]) * eps;
                    clipped[static_cast<std::size_t>(b)] = std::clamp(raw[static_cast<std::size_t>(b)], -env.a_max(), env.a_max());
                    lp -= 0.5 * eps * eps;
                }
                const auto step = env.step(clipped);
                obs_buf.push_back(std::move(obs));
                act_buf.push_back(std::move(raw));
                rewards.push_back(step.reward);
                values.push_back(out.value(0, 0));
                logps.push_back(lp);
                dones.push_back(step.done);
                obs = step.obs;
                done = step.done;
            }
        }
        std::vector<double> adv, ret;
        gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda, adv, ret);
        const auto n = static_cast<Eigen::Index>(rewards.size());
        if (cfg.normalize_advantages && n > 1) {
            const double mu = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
            double var = 0.0;
            for (double a : adv) var += (a - mu) * (a - mu);
            const double sd = std::sqrt(var / static_cast<double>(n - 1));
            for (double& a : adv) a = (a - mu) / (sd + 1e-8);
        }
        res.curve.push_back(std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(n));

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        nn::Vector grad;
        for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
            std::shuffle(order.begin(), order.end(), batch_rng);
            for (Eigen::Index start = 0; start < n; start += cfg.minibatch_size) {
                const Eigen::Index stop = std::min<Eigen::Index>(n, start + cfg.minibatch_size);
                const Eigen::Index b = stop - start;
                ActorCritic::Batch batch{nn::Matrix(obs_dim, b), nn::Matrix(da, b), nn::Vector(b), nn::Vector(b),
                                         nn::Vector(b)};
                for (Eigen::Index k = 0; k < b; ++k) {
                    const auto i = static_cast<std::size_t>(order[static_cast<std::size_t>(start + k)]);
                    batch.obs.col(k) = Eigen::Map<const nn::Vector>(obs_buf[i].data(), obs_dim);
                    batch.actions.col(k) = Eigen::Map<const nn::Vector>(act_buf[i].data(), da);
                    batch.old_log_prob[k] = logps[i];
                    batch.advantages[k] = adv[i];
                    batch.returns[k] = ret[i];
                }
                grad.setZero(res.net.parameter_count());
                const auto parts = res.net.loss(res.params, batch, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef, &grad);
                if (!std::isfinite(parts.total) || !grad.allFinite()) {
                    throw DivergenceDetected("non-finite PPO loss at update " + std::to_string(update));
                }
                if (cfg.max_grad_norm > 0.0) {
                    const double norm = grad.norm();
                    if (norm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / norm;
                }
                opt.step(res.params, grad);
            }
        }
        if (update % cfg.checkpoint_every == 0 || update == cfg.total_updates) {
            res.checkpoints.push_back({update, res.params});
            if (on_checkpoint) on_checkpoint(res.checkpoints.back());
        }
    }
    return res;
}

void SelectionCriterion::validate() const {
    if (eval_episodes < 1) throw InvalidArgument("selection eval_episodes must be >= 1");
    if (!(law_weight >= 0.0) || !(pnl_floor_slack >= 0.0)) throw InvalidArgument("selection weights must be >= 0");
}

Selection select_checkpoint(std::size_t n_checkpoints, const SelectionCriterion& criterion, double reference_pnl,
                            const std::function<CheckpointScore(std::size_t)>& evaluate) {
    criterion.validate();
    if (n_checkpoints == 0) throw NoCheckpoints("no checkpoints to select from");
    Selection sel;
    for (std::size_t i = 0; i < n_checkpoints; ++i) sel.scores.push_back(evaluate(i));
    const auto score = [&](std::size_t i) { return sel.scores[i].mean_law_pen + criterion.law_weight * sel.scores[i].gfi; };
    const auto better = [&](std::size_t i, std::size_t j) {
        if (score(i) != score(j)) return score(i) < score(j);
        return sel.scores[i].mean_pnl > sel.scores[j].mean_pnl;
    };
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < n_checkpoints; ++i) {
        if (sel.scores[i].mean_pnl < reference_pnl - criterion.pnl_floor_slack) continue;
        if (!best || better(i, *best)) best = i;
    }
    if (!best) {
        sel.floor_unmet = true;
        best = 0;
        for (std::size_t i = 1; i < n_checkpoints; ++i) {
            if (better(i, *best)) best = i;
        }
    }
    sel.index = *best;
    return sel;
}

} // namespace volaxiom
