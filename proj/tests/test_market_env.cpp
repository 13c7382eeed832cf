#include "fixtures.hpp"

#include "volaxiom/agents.hpp"
#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"
#include "volaxiom/market_env.hpp"

#include <doctest.h>

#include <cmath>

using namespace volaxiom;
using volaxiom::testing::make_grid;

namespace {

EnvConfig bare_config() {
    EnvConfig c;
    c.carry_coeff = 0.0;
    c.trade_cost = 0.0;
    return c;
}

// A recurrent model with a random decoder: its predictions leave the manifold.
WorldModel noisy_model(const GridPtr& g, int window_len, double noise, std::uint64_t seed) {
    WorldModelConfig cfg;
    cfg.window_len = window_len;
    cfg.hidden_dim = 8;
    WorldModel model(cfg, g);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index i = 0; i < model.parameters().size(); ++i) model.parameters()[i] += noise * n01(rng);
    for (double& s : model.scale) s = 0.01;
    return model;
}

std::vector<TotalVarianceSurface> feasible_window(const LawManifold& m, int len, std::uint64_t seed) {
    GeneratorParams p;
    p.seed = seed;
    const auto tr = generate(p, m, len - 1);
    return tr.surfaces;
}

} // namespace

TEST_CASE("env: bucket values") {
    auto g = default_grid();
    const std::vector<double> flat(g->d(), 0.04);
    for (double v : bucket_values(*g, flat, 3)) CHECK(v == doctest::Approx(0.04).epsilon(1e-15));

    auto g2 = make_grid({0.25, 1.0}, {-0.1, 0.0, 0.1});
    const std::vector<double> w{0.01, 0.01, 0.01, 0.02, 0.02, 0.02};
    const auto v = bucket_values(*g2, w, 2);
    CHECK(v[0] == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(v[1] == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(bucket_values(*g2, w, 1)[0] == doctest::Approx(0.015).epsilon(1e-15));
    CHECK_THROWS_AS(bucket_values(*g2, w, 3), InvalidArgument);

    const auto bands = maturity_bands(*g, 3);
    CHECK(bands == std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2});
}

TEST_CASE("env: step pnl examples") {
    auto g = default_grid();
    const auto w = testing::smooth_surface(*g);
    EnvConfig cfg;
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= static_cast<double>(w.size());
    CHECK(step_pnl(cfg, *g, w, w, {0, 0, 0}) == doctest::Approx(cfg.carry_coeff * mean).epsilon(1e-15));

    // Raise the short band by 0.002 everywhere.
    auto up = w;
    const auto bands = maturity_bands(*g, 3);
    for (std::size_t i = 0; i < up.size(); ++i) {
        if (bands[i / g->n_k()] == 0) up[i] += 0.002;
    }
    auto bare = bare_config();
    CHECK(step_pnl(bare, *g, w, up, {1, 0, 0}) == doctest::Approx(0.002).epsilon(1e-12));
    bare.trade_cost = 0.001;
    CHECK(step_pnl(bare, *g, w, w, {1, 0, 0}) == doctest::Approx(-0.001).epsilon(1e-15));
    CHECK_THROWS_AS(step_pnl(bare, *g, w, w, {1.5, 0, 0}), ActionOutOfBounds);
    CHECK_THROWS_AS(step_pnl(bare, *g, w, w, {0.5, 0}), ActionOutOfBounds);
}

TEST_CASE("env: goodhart decomposition examples and ghost bound") {
    auto g = default_grid();
    LawManifold m(g);
    EnvConfig cfg;
    const auto w_t = testing::smooth_surface(*g);
    const TotalVarianceSurface feasible(g, testing::smooth_surface(*g, 0.05));
    const auto split = goodhart_decompose(m, cfg, w_t, feasible, {0.3, -0.2, 1.0});
    CHECK(split.ghost == doctest::Approx(0.0).epsilon(1e-15));

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double lr = ghost_lipschitz(cfg, *g);
    CHECK(lr == doctest::Approx(std::sqrt(3.0) / std::sqrt(22.0)).epsilon(1e-15));
    for (int trial = 0; trial < 200; ++trial) {
        const TotalVarianceSurface pred(g, testing::perturbed(w_t, 0.01, rng));
        const std::vector<double> a{u(rng), u(rng), u(rng)};
        const auto s = goodhart_decompose(m, cfg, w_t, pred, a);
        const double pnl = step_pnl(cfg, *g, w_t, pred.w, a);
        CHECK(std::abs(pnl - (s.on_manifold + s.ghost)) <= 1e-10);

        const auto proj = m.project(pred).projected;
        const auto vp = bucket_values(*g, pred.w, 3);
        const auto vq = bucket_values(*g, proj.w, 3);
        double linear = 0.0;
        for (int b = 0; b < 3; ++b) linear += a[static_cast<std::size_t>(b)] * (vp[static_cast<std::size_t>(b)] - vq[static_cast<std::size_t>(b)]);
        CHECK(s.ghost == doctest::Approx(linear).epsilon(1e-9));
        CHECK(std::abs(s.ghost) <= lr * std::sqrt(2.0 * s.exact_penalty) + 1e-15);

        const auto zero = goodhart_decompose(m, cfg, w_t, pred, {0, 0, 0});
        CHECK(zero.ghost == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("env: rollouts") {
    auto g = default_grid();
    LawManifold m(g);
    const int L = 4;
    const auto model = noisy_model(g, L, 0.3, 8);
    const auto window = feasible_window(m, L, 21);
    EnvConfig cfg;
    cfg.episode_len = 16;

    ZeroHedge zh(3, cfg.a_max);
    const auto ep = rollout(model, m, cfg, zh, window, 5);
    REQUIRE(ep.steps.size() == 16);
    bool any_off = false;
    for (const auto& s : ep.steps) {
        for (double a : s.action) CHECK(a == 0.0);
        CHECK(s.r_ghost == 0.0);
        CHECK(s.reward == s.pnl); // lambda = 0
        any_off = any_off || s.law_pen_exact > 0.0;
    }
    CHECK(any_off);

    RandomGaussian rg(3, cfg.a_max, 0.5);
    cfg.lambda_law = 10.0;
    const auto a = rollout(model, m, cfg, rg, window, 9);
    const auto b = rollout(model, m, cfg, rg, window, 9);
    const double lr = ghost_lipschitz(cfg, *g);
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
        CHECK(a.steps[t].w_pred.w == b.steps[t].w_pred.w);
        CHECK(a.steps[t].action == b.steps[t].action);
        CHECK(a.steps[t].reward == b.steps[t].reward);
        CHECK(a.steps[t].reward == a.steps[t].pnl - 10.0 * a.steps[t].law_pen);
        CHECK(std::abs(a.steps[t].pnl - a.steps[t].r_on_manifold - a.steps[t].r_ghost) <= 1e-10);
        CHECK(std::abs(a.steps[t].r_ghost) <= lr * std::sqrt(2.0 * a.steps[t].law_pen_exact) + 1e-15);
    }

    // The state path does not depend on lambda; the recomputed return is nonincreasing in it.
    cfg.lambda_law = 40.0;
    const auto c = rollout(model, m, cfg, rg, window, 9);
    for (std::size_t t = 0; t < a.steps.size(); ++t) CHECK(c.steps[t].w_pred.w == a.steps[t].w_pred.w);
    double prev = discounted_return(a, cfg.gamma, 0.0);
    for (double lambda : {5.0, 10.0, 20.0, 40.0}) {
        const double r = discounted_return(a, cfg.gamma, lambda);
        CHECK(r <= prev);
        prev = r;
    }

    std::mt19937_64 noise(1);
    std::vector<TotalVarianceSurface> bad = window;
    bad.back() = TotalVarianceSurface(g, testing::perturbed(window.back().w, 0.05, noise));
    CHECK_THROWS_AS(rollout(model, m, cfg, zh, bad, 1), InvalidArgument);
    CHECK_THROWS_AS(rollout(model, m, cfg, zh, {window[0]}, 1), WindowLengthMismatch);
}

TEST_CASE("env: observation features") {
    auto g = default_grid();
    LawManifold m(g);
    const int L = 3;
    const auto model = noisy_model(g, L, 0.0, 1);
    EnvConfig cfg;
    MarketEnv env(model, m, cfg);
    const auto& obs = env.reset(feasible_window(m, L, 2));
    CHECK(obs.features().size() == feature_dim(L, 3));
    CHECK(obs.buckets.size() == 3);
    CHECK(obs.features().back() == 1.0);
    env.step({0.1, 0.0, -0.1});
    CHECK(env.observation().prev_action == std::vector<double>{0.1, 0.0, -0.1});
}

TEST_CASE("env: episode csv") {
    auto g = default_grid();
    LawManifold m(g);
    const auto model = noisy_model(g, 2, 0.2, 3);
    EnvConfig cfg;
    cfg.episode_len = 3;
    ZeroHedge zh(3, 1.0);
    const auto ep = rollout(model, m, cfg, zh, feasible_window(m, 2, 4), 1);
    const auto path = std::filesystem::temp_directory_path() / "volaxiom_episode.csv";
    write_episode_csv(path, ep, 3);
    const auto rows = read_csv(path);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"t", "pnl", "law_pen", "reward", "r_on_manifold", "r_ghost", "a_0", "a_1", "a_2"});
    CHECK(parse_double(rows[1][1]) == ep.steps[0].pnl);
    std::filesystem::remove(path);
    CHECK(episode_sidecar(ep, cfg)["steps"] == 3);
}
