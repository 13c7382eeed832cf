#include "volaxiom/errors.hpp"
#include "volaxiom/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace volaxiom;

namespace {

// Rank ceil(5n/100) in exact integer arithmetic.
double oracle_var(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t r = std::max<std::size_t>(1, (5 * x.size() + 99) / 100);
    return x[r - 1];
}

double oracle_cvar(std::vector<double> x) {
    const double v = oracle_var(x);
    std::sort(x.begin(), x.end());
    double s = 0.0;
    std::size_t n = 0;
    for (double y : x)
        if (y <= v) {
            s += y;
            ++n;
        }
    return s / static_cast<double>(n);
}

bool oracle_dominated(const std::vector<std::array<double, 5>>& pts, std::size_t i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
        if (j == i) continue;
        const auto& a = pts[j];
        const auto& b = pts[i];
        const bool weak = a[0] <= b[0] && a[1] <= b[1] && a[2] >= b[2] && a[3] >= b[3] && a[4] >= b[4];
        const bool strict = a[0] < b[0] || a[1] < b[1] || a[2] > b[2] || a[3] > b[3] || a[4] > b[4];
        if (weak && strict) return true;
    }
    return false;
}

MetricsReport report(const std::string& id, double pnl, double pen, PenaltyKind kind = PenaltyKind::exact) {
    MetricsReport r;
    r.policy_id = id;
    r.mean_pnl = pnl;
    r.mean_law_pen = pen;
    r.penalty_kind = kind;
    return r;
}

} // namespace

TEST_CASE("metrics: degenerate distribution") {
    const auto r = compute_metrics({EpisodeSeries{std::vector<double>(10, 0.01), std::vector<double>(10, 0.0)}}, {});
    CHECK(r.mean_pnl == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(r.std_pnl <= 1e-17);
    CHECK(r.sharpe == doctest::Approx(1e6).epsilon(1e-6));
    CHECK(r.var5 == 0.01);
    CHECK(r.cvar5 == doctest::Approx(0.01).epsilon(1e-14));
}

TEST_CASE("metrics: tail risk on an equally spaced sample") {
    std::vector<double> pnl;
    for (int i = 0; i < 20; ++i) pnl.push_back(-0.05 + 0.01 * i);
    const auto r = compute_metrics({EpisodeSeries{pnl, std::vector<double>(20, 0.0)}}, {});
    CHECK(r.var5 == doctest::Approx(-0.05));
    CHECK(r.cvar5 == doctest::Approx(-0.05));
    CHECK(value_at_risk(pnl) == r.var5);
}

TEST_CASE("metrics: coverage, maxima and law-adjusted return") {
    const auto r = compute_metrics({EpisodeSeries{{0.0, 0.0}, {0.001, 0.004}}, EpisodeSeries{{0.03}, {0.007}}},
                                   {0.003, 0.006});
    REQUIRE(r.coverage.size() == 2);
    CHECK(r.coverage[0].second == doctest::Approx(1.0 / 3.0));
    CHECK(r.coverage[1].second == doctest::Approx(2.0 / 3.0));
    CHECK(r.max_law_pen == doctest::Approx((0.004 + 0.007) / 2));
    CHECK(r.mean_law_pen == doctest::Approx(0.004));
    CHECK(r.law_adj_return == doctest::Approx(0.01 - 0.004));
    CHECK(r.n_steps == 3);
    CHECK_THROWS_AS(compute_metrics(std::vector<EpisodeSeries>{}, {}), EmptyInput);
}

TEST_CASE("metrics: VaR/CVaR match the sort oracle on 100 random samples") {
    std::mt19937_64 rng(17);
    std::student_t_distribution<double> heavy(3.0);
    std::uniform_int_distribution<int> len(1, 400);
    int mismatches = 0;
    for (int s = 0; s < 100; ++s) {
        std::vector<double> x(static_cast<std::size_t>(len(rng)));
        for (double& v : x) v = 0.01 * heavy(rng);
        if (s % 10 == 0) x.insert(x.end(), x.begin(), x.begin() + static_cast<std::ptrdiff_t>(x.size() / 2)); // ties
        const auto r = compute_metrics({EpisodeSeries{x, std::vector<double>(x.size(), 0.0)}}, {});
        mismatches += r.var5 != oracle_var(x);
        mismatches += std::abs(r.cvar5 - oracle_cvar(x)) > 1e-15 * std::max(1.0, std::abs(oracle_cvar(x)));
        CHECK(r.cvar5 <= r.var5);
    }
    CHECK(mismatches == 0);
}

TEST_CASE("metrics: permutation invariance over episodes and steps") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<EpisodeSeries> eps(5);
    for (auto& e : eps)
        for (int t = 0; t < 13; ++t) {
            e.pnl.push_back(0.01 * n01(rng));
            e.law_pen.push_back(std::abs(0.005 * n01(rng)));
        }
    const auto a = compute_metrics(eps, {0.003, 0.006});
    std::vector<EpisodeSeries> shuffled;
    for (auto it = eps.rbegin(); it != eps.rend(); ++it) {
        EpisodeSeries e = *it;
        std::vector<std::size_t> idx(e.pnl.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        EpisodeSeries p;
        for (auto i : idx) {
            p.pnl.push_back(e.pnl[i]);
            p.law_pen.push_back(e.law_pen[i]);
        }
        shuffled.push_back(p);
    }
    const auto b = compute_metrics(shuffled, {0.003, 0.006});
    CHECK(metrics_csv({a}) == metrics_csv({b}));
    CHECK(a.max_law_pen == b.max_law_pen);
}

TEST_CASE("gfi: reference subtraction") {
    const auto base = report("pi", 0.0, 0.001), shock = report("pi", 0.0, 0.003);
    const auto rb = report("ref", 0.0, 0.002), rs = report("ref", 0.0, 0.003);
    CHECK(compute_gfi(base, shock, rb, rs, 1.0).gfi == doctest::Approx(0.001));
    CHECK(compute_gfi(rb, rs, rb, rs, std::sqrt(10.0)).gfi == 0.0);
    GfiOptions ratio;
    ratio.form = GfiForm::ratio;
    CHECK(compute_gfi(base, shock, rb, rs, 1.0, ratio).gfi == doctest::Approx(2.0).epsilon(1e-4));
    CHECK_THROWS_AS(compute_gfi(base, report("pi", 0, 0, PenaltyKind::surrogate), rb, rs, 1.0),
                    InconsistentPenaltyKind);
}

TEST_CASE("gfi: reference policy is exactly zero for any inputs") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 0.02);
    for (int i = 0; i < 1000; ++i) {
        const auto b = report("zh", 0.0, u(rng)), s = report("zh", 0.0, u(rng));
        CHECK(compute_gfi(b, s, b, s, 0.5 + u(rng)).gfi == 0.0);
    }
}

TEST_CASE("pareto: small examples") {
    std::vector<FrontierPoint> one{{"a", std::nullopt, {0.1, 0.2, 0.3, 0.4, 0.5}}};
    pareto_frontier(one);
    CHECK_FALSE(one[0].dominated);

    std::vector<FrontierPoint> zh_naive{{"zero_hedge", std::nullopt, {0.005, 0.0, 0.019, 0.014, 0.014}},
                                        {"naive", 0.0, {0.007, 1.27, -0.002, -0.023, -0.026}}};
    pareto_frontier(zh_naive);
    CHECK_FALSE(zh_naive[0].dominated);
    CHECK(zh_naive[1].dominated);

    std::vector<FrontierPoint> twins{{"a", std::nullopt, {1, 1, 1, 1, 1}}, {"b", std::nullopt, {1, 1, 1, 1, 1}}};
    pareto_frontier(twins);
    CHECK_FALSE(twins[0].dominated);
    CHECK_FALSE(twins[1].dominated);
}

TEST_CASE("pareto: matches the brute-force oracle on 100 random 5-D sets") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> coarse(0, 3); // small alphabet so ties and dominance both occur
    std::uniform_int_distribution<int> size(1, 12);
    int mismatches = 0;
    for (int s = 0; s < 100; ++s) {
        std::vector<FrontierPoint> pts(static_cast<std::size_t>(size(rng)));
        std::vector<std::array<double, 5>> raw;
        for (auto& p : pts) {
            for (double& c : p.coords) c = coarse(rng) * 0.25;
            raw.push_back(p.coords);
        }
        pareto_frontier(pts);
        for (std::size_t i = 0; i < pts.size(); ++i) mismatches += pts[i].dominated != oracle_dominated(raw, i);

        // Strictly increasing per-coordinate transforms leave the partition unchanged.
        auto moved = pts;
        for (auto& p : moved)
            for (std::size_t c = 0; c < 5; ++c) p.coords[c] = std::exp(3.0 * p.coords[c]) + static_cast<double>(c);
        pareto_frontier(moved);
        for (std::size_t i = 0; i < pts.size(); ++i) mismatches += moved[i].dominated != pts[i].dominated;
    }
    CHECK(mismatches == 0);
    std::vector<FrontierPoint> bad{{"x", std::nullopt, {std::nan(""), 0, 0, 0, 0}}};
    CHECK_THROWS_AS(pareto_frontier(bad), InvalidArgument);
}

TEST_CASE("bands: half-open membership") {
    const auto bands = penalty_bands({report("in", 0, 0.0055), report("edge", 0, 0.0057), report("low", 0, 0.0053)},
                                     {0.0053, 0.0057});
    REQUIRE(bands.size() == 1);
    REQUIRE(bands[0].members.size() == 2);
    CHECK(bands[0].members[0].policy_id == "in");
    CHECK(bands[0].members[1].policy_id == "low");
    const auto empty = penalty_bands({report("a", 0, 0.5)}, {0.0, 0.1, 0.2});
    CHECK(empty.size() == 2);
    CHECK(empty[0].members.empty());
    CHECK(empty[1].members.empty());
    CHECK_THROWS_AS(penalty_bands({}, {0.1, 0.1}), InvalidArgument);
}

TEST_CASE("lambda sweep: monotonicity diagnostic") {
    std::map<double, std::pair<MetricsReport, MetricsReport>> same;
    for (double l : {0.0, 5.0, 10.0}) same[l] = {report("soft", 0.01, 0.004), report("soft", 0.01, 0.005)};
    CHECK(lambda_sweep_table(same).violations.empty());

    std::map<double, std::pair<MetricsReport, MetricsReport>> paper{
        {5.0, {report("soft", -0.0202, 0.00647), report("soft", 0, 0)}},
        {10.0, {report("soft", -0.0175, 0.00371), report("soft", 0, 0)}},
        {20.0, {report("soft", -0.0204, 0.00396), report("soft", 0, 0)}}};
    const auto sweep = lambda_sweep_table(paper);
    bool pair_5_10_penalty = false, pair_10_20_penalty = false;
    for (const auto& v : sweep.violations) {
        if (v.lambda_low == 5.0 && v.lambda_high == 10.0) pair_5_10_penalty = v.penalty_increased;
        if (v.lambda_low == 10.0 && v.lambda_high == 20.0) pair_10_20_penalty = v.penalty_increased;
    }
    CHECK_FALSE(pair_5_10_penalty);
    CHECK(pair_10_20_penalty);
    CHECK_THROWS_AS(lambda_sweep_table({{0.0, {}}}), InvalidArgument);
}

TEST_CASE("metrics: csv schemas") {
    auto r = compute_metrics({EpisodeSeries{{0.01, 0.02}, {0.001, 0.002}}}, {0.003, 0.006});
    r.policy_id = "zero_hedge";
    r.gfi = 0.0;
    const auto csv = metrics_csv({r});
    CHECK(csv.substr(0, csv.find('\n')) ==
          "policy,regime,mean_pnl,std_pnl,sharpe,mean_law_pen,max_law_pen,law_adj_ret,gfi,cov_0.003,cov_0.006,var5,cvar5");
    std::vector<FrontierPoint> pts{frontier_point(r, 0.0)};
    const auto f = frontier_csv(pts);
    CHECK(f.substr(0, f.find('\n')) == "policy,lambda,mean_law_pen,gfi,mean_pnl,var5,cvar5,on_frontier");
    const auto s = scatter_csv({{"zero_hedge", 0, 0.01, 0.001}});
    CHECK(s == "policy,t,pnl,law_pen\nzero_hedge,0,0.01,0.001\n");
    const auto md = metrics_markdown({r});
    CHECK(md.find("| Strategy | Regime | Mean PnL | Std PnL | Sharpe | Mean Pen. | GFI | Cov<0.006 | VaR5 | CVaR5 |") == 0);
    CHECK(md.find("| zero_hedge | baseline | 0.0150 |") != std::string::npos);
}
