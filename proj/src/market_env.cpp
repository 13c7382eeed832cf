#include "volaxiom/market_env.hpp"

#include "volaxiom/agents.hpp"
#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"

#include <cmath>
#include <sstream>

namespace volaxiom {

void EnvConfig::validate() const {
    if (episode_len < 1) throw InvalidArgument("episode_len must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (!(lambda_law >= 0.0)) throw InvalidArgument("lambda_law must be >= 0");
    if (n_buckets < 1) throw InvalidArgument("n_buckets must be >= 1");
    if (!(a_max > 0.0)) throw InvalidArgument("a_max must be positive");
    if (!(trade_cost >= 0.0)) throw InvalidArgument("trade_cost must be >= 0");
    if (!std::isfinite(carry_coeff)) throw InvalidArgument("carry_coeff must be finite");
}

std::vector<int> maturity_bands(const SurfaceGrid& grid, int n_buckets) {
    if (n_buckets < 1 || static_cast<std::size_t>(n_buckets) > grid.n_t()) {
        throw InvalidArgument("n_buckets must lie in [1, number of maturities]");
    }
    std::vector<int> band(grid.n_t());
    for (std::size_t j = 0; j < grid.n_t(); ++j) {
        band[j] = static_cast<int>(j * static_cast<std::size_t>(n_buckets) / grid.n_t());
    }
    return band;
}

std::vector<double> bucket_values(const SurfaceGrid& grid, const std::vector<double>& w, int n_buckets) {
    if (w.size() != grid.d()) throw GridMismatch("surface size does not match the grid");
    const auto band = maturity_bands(grid, n_buckets);
    std::vector<double> sum(static_cast<std::size_t>(n_buckets), 0.0);
    std::vector<double> count(static_cast<std::size_t>(n_buckets), 0.0);
    for (std::size_t j = 0; j < grid.n_t(); ++j) {
        const auto b = static_cast<std::size_t>(band[j]);
        for (std::size_t i = 0; i < grid.n_k(); ++i) sum[b] += w[grid.index(i, j)];
        count[b] += static_cast<double>(grid.n_k());
    }
    for (std::size_t b = 0; b < sum.size(); ++b) sum[b] /= count[b];
    return sum;
}

namespace {

void check_action(const EnvConfig& cfg, const std::vector<double>& a) {
    if (a.size() != static_cast<std::size_t>(cfg.n_buckets)) {
        throw ActionOutOfBounds("action has " + std::to_string(a.size()) + " entries, expected " +
                                std::to_string(cfg.n_buckets));
    }
    for (double x : a) {
        if (!(std::abs(x) <= cfg.a_max)) throw ActionOutOfBounds("action entry " + format_double(x) + " outside the box");
    }
}

double mean_of(const std::vector<double>& w) {
    double s = 0.0;
    for (double x : w) s += x;
    return s / static_cast<double>(w.size());
}

} // namespace

double step_pnl(const EnvConfig& cfg, const SurfaceGrid& grid, const std::vector<double>& w_t,
                const std::vector<double>& w_next, const std::vector<double>& a) {
    check_action(cfg, a);
    const auto v0 = bucket_values(grid, w_t, cfg.n_buckets);
    const auto v1 = bucket_values(grid, w_next, cfg.n_buckets);
    double pnl = cfg.carry_coeff * mean_of(w_t);
    for (std::size_t b = 0; b < a.size(); ++b) pnl += a[b] * (v1[b] - v0[b]) - cfg.trade_cost * std::abs(a[b]);
    return pnl;
}

GoodhartSplit goodhart_decompose(const LawManifold& m, const EnvConfig& cfg, const std::vector<double>& w_t,
                                 const TotalVarianceSurface& w_pred, const std::vector<double>& a) {
    const auto& grid = *m.grid();
    const auto res = m.project(w_pred);
    if (!res.converged) throw ProjectionFailure("projection of a predicted surface did not converge");
    GoodhartSplit out;
    out.on_manifold = step_pnl(cfg, grid, w_t, res.projected.w, a);
    out.ghost = step_pnl(cfg, grid, w_t, w_pred.w, a) - out.on_manifold;
    out.exact_penalty = res.penalty;
    return out;
}

double ghost_lipschitz(const EnvConfig& cfg, const SurfaceGrid& grid) {
    const auto band = maturity_bands(grid, cfg.n_buckets);
    std::vector<double> members(static_cast<std::size_t>(cfg.n_buckets), 0.0);
    for (int b : band) members[static_cast<std::size_t>(b)] += static_cast<double>(grid.n_k());
    double worst = 0.0;
    for (double n : members) worst = std::max(worst, 1.0 / std::sqrt(n)); // n entries of weight 1/n
    return cfg.a_max * std::sqrt(static_cast<double>(cfg.n_buckets)) * worst;
}

std::size_t feature_dim(int window_len, int n_buckets) {
    return static_cast<std::size_t>(window_len) * static_cast<std::size_t>(n_buckets) +
           static_cast<std::size_t>(n_buckets) + 1;
}

std::vector<double> Observation::features() const {
    std::vector<double> f;
    const std::size_t L = buckets.size();
    const auto& last = buckets.back();
    for (double v : last) f.push_back(10.0 * v);
    for (std::size_t l = 1; l < L; ++l) {
        for (std::size_t b = 0; b < last.size(); ++b) f.push_back(100.0 * (buckets[l][b] - buckets[l - 1][b]));
    }
    f.insert(f.end(), prev_action.begin(), prev_action.end());
    f.push_back(horizon > 0 ? 1.0 - static_cast<double>(t) / horizon : 0.0);
    return f;
}

MarketEnv::MarketEnv(const WorldModel& model, const LawManifold& m, EnvConfig cfg, bool decompose)
    : model_(&model), m_(&m), cfg_(cfg), decompose_(decompose) {
    cfg_.validate();
    if (!same_grid(*model.grid(), *m.grid())) throw GridMismatch("world model and law manifold use different grids");
    maturity_bands(*m.grid(), cfg_.n_buckets); // validates n_buckets against the grid
}

const Observation& MarketEnv::reset(const std::vector<TotalVarianceSurface>& init_window) {
    if (init_window.size() != static_cast<std::size_t>(model_->config().window_len)) {
        throw WindowLengthMismatch("initial window length does not match the world model");
    }
    for (const auto& s : init_window) {
        if (!s.grid || !same_grid(*s.grid, *m_->grid())) throw GridMismatch("initial window is not on the env grid");
        if (!m_->is_feasible(s, 1e-8)) throw InvalidArgument("initial window surfaces must lie on the law manifold");
    }
    window_.assign(init_window.begin(), init_window.end());
    prev_action_.assign(static_cast<std::size_t>(cfg_.n_buckets), 0.0);
    t_ = 0;
    refresh_observation();
    return obs_;
}

void MarketEnv::refresh_observation() {
    obs_.buckets.clear();
    obs_.mean_levels.clear();
    for (const auto& s : window_) {
        obs_.buckets.push_back(bucket_values(*m_->grid(), s.w, cfg_.n_buckets));
        obs_.mean_levels.push_back(mean_of(s.w));
    }
    obs_.prev_action = prev_action_;
    obs_.t = t_;
    obs_.horizon = cfg_.episode_len;
}

StepRecord MarketEnv::step(const std::vector<double>& action) {
    if (window_.empty()) throw InvalidArgument("step() before reset()");
    if (done()) throw InvalidArgument("step() after the episode ended");
    check_action(cfg_, action);
    std::vector<const std::vector<double>*> win;
    for (const auto& s : window_) win.push_back(&s.w);
    StepRecord rec;
    rec.w_pred = TotalVarianceSurface(m_->grid(), model_->predict_raw(win));
    rec.action = action;
    const auto& w_t = window_.back().w;
    rec.pnl = step_pnl(cfg_, *m_->grid(), w_t, rec.w_pred.w, action);
    rec.law_pen = m_->surrogate_penalty(rec.w_pred);
    rec.reward = rec.pnl - cfg_.lambda_law * rec.law_pen;
    if (decompose_) {
        const auto split = goodhart_decompose(*m_, cfg_, w_t, rec.w_pred, action);
        rec.r_on_manifold = split.on_manifold;
        rec.r_ghost = split.ghost;
        rec.law_pen_exact = split.exact_penalty;
    }
    window_.pop_front();
    window_.push_back(rec.w_pred);
    prev_action_ = action;
    ++t_;
    refresh_observation();
    return rec;
}

EpisodeRecord rollout(const WorldModel& model, const LawManifold& m, const EnvConfig& cfg, Policy& policy,
                      const std::vector<TotalVarianceSurface>& init_window, std::uint64_t seed, Regime regime,
                      bool decompose) {
    MarketEnv env(model, m, cfg, decompose);
    EpisodeRecord ep;
    ep.init_window = init_window;
    ep.seed = seed;
    ep.regime = regime;
    ep.decomposed = decompose;
    const Observation& first = env.reset(init_window);
    policy.begin_episode(first, seed);
    ep.steps.reserve(static_cast<std::size_t>(cfg.episode_len));
    while (!env.done()) ep.steps.push_back(env.step(policy.act(env.observation())));
    return ep;
}

double discounted_return(const EpisodeRecord& ep, double gamma, double lambda) {
    double g = 0.0, discount = 1.0;
    for (const auto& s : ep.steps) {
        g += discount * (s.pnl - lambda * s.law_pen);
        discount *= gamma;
    }
    return g;
}

void write_episode_csv(const std::filesystem::path& path, const EpisodeRecord& ep, int n_buckets) {
    std::ostringstream out;
    out << "t,pnl,law_pen,reward,r_on_manifold,r_ghost";
    for (int b = 0; b < n_buckets; ++b) out << ",a_" << b;
    out << '\n';
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
        const auto& s = ep.steps[t];
        out << t << ',' << format_double(s.pnl) << ',' << format_double(s.law_pen) << ',' << format_double(s.reward)
            << ',' << format_double(s.r_on_manifold) << ',' << format_double(s.r_ghost);
        for (double a : s.action) out << ',' << format_double(a);
        out << '\n';
    }
    write_text_file(path, out.str());
}

nlohmann::json episode_sidecar(const EpisodeRecord& ep, const EnvConfig& cfg) {
    nlohmann::json j;
    j["schema"] = "volaxiom.episode/1";
    j["seed"] = ep.seed;
    j["regime"] = to_string(ep.regime);
    j["decomposed"] = ep.decomposed;
    j["steps"] = ep.steps.size();
    j["env"] = {{"episode_len", cfg.episode_len}, {"gamma", cfg.gamma},       {"lambda_law", cfg.lambda_law},
                {"n_buckets", cfg.n_buckets},     {"a_max", cfg.a_max},       {"trade_cost", cfg.trade_cost},
                {"carry_coeff", cfg.carry_coeff}};
    return j;
}

} // namespace volaxiom
