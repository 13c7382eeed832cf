#include "volaxiom/agents.hpp"
#include "volaxiom/errors.hpp"
#include "volaxiom/experiment.hpp"
#include "volaxiom/generator.hpp"
#include "volaxiom/io.hpp"
#include "volaxiom/law_manifold.hpp"
#include "volaxiom/market_env.hpp"
#include "volaxiom/metrics.hpp"
#include "volaxiom/ppo.hpp"
#include "volaxiom/rng.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace volaxiom;
using namespace volaxiom::testing;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", x);
    return buf;
}

// ---------------------------------------------------------------- run management

// A run directory in the work tree plus the stage timings measured when the stages actually ran.
class RunBook {
public:
    RunBook(fs::path work, bool resume) : work_(std::move(work)) {
        if (!resume) fs::remove_all(work_);
        fs::create_directories(work_);
        if (fs::exists(timing_path())) timing_ = json::parse(read_text_file(timing_path()));
    }

    // Runs (or resumes) the full pipeline; train-wm is timed on its own whenever it executes.
    Pipeline& ensure(const std::string& name, const ExperimentConfig& cfg) {
        auto it = runs_.find(name);
        if (it != runs_.end()) return *it->second;
        auto p = std::make_unique<Pipeline>(cfg, work_ / name);
        auto& ref = *p;
        runs_[name] = std::move(p);
        const auto done = ref.completed_stages();
        const bool fresh_wm = std::find(done.begin(), done.end(), "train-wm") == done.end();
        const auto t0 = Clock::now();
        if (fresh_wm) {
            ref.gen();
            const auto tw = Clock::now();
            ref.train_wm();
            timing_[name]["train-wm"] = seconds_since(tw);
        }
        ref.run_all();
        if (fresh_wm) timing_[name]["pipeline"] = seconds_since(t0);
        write_text_file(timing_path(), timing_.dump(2) + "\n");
        return ref;
    }

    std::optional<double> timing(const std::string& name, const std::string& key) const {
        if (timing_.contains(name) && timing_[name].contains(key)) return timing_[name][key].get<double>();
        return std::nullopt;
    }

    const fs::path& work() const { return work_; }

private:
    fs::path timing_path() const { return work_ / "timing.json"; }

    fs::path work_;
    json timing_ = json::object();
    std::map<std::string, std::unique_ptr<Pipeline>> runs_;
};

// ---------------------------------------------------------------- criteria

Outcome projection_correctness() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-0.05, 0.3);
    struct Case {
        GridPtr grid;
        double lo, hi;
    };
    const std::vector<Case> cases{{default_grid(GridPreset::tiny), 0.01, 0.25},
                                  {make_grid({0.5, 1.0, 2.0}, {-0.1, 0.1}), LawManifold::default_w_min, 4.0},
                                  {make_grid({1.0}, {-0.2, -0.1, 0.0, 0.1}), 0.01, 0.25},
                                  {make_grid({0.25, 1.0}, {-0.2, 0.0, 0.2}), LawManifold::default_w_min, 4.0}};
    double worst = 0.0, project_seconds = 0.0;
    int n = 0, unconverged = 0;
    for (const auto& c : cases) {
        const LawManifold m(c.grid, c.lo, c.hi);
        for (int rep = 0; rep < 50; ++rep, ++n) {
            std::vector<double> w(c.grid->d());
            for (double& x : w) x = u(rng);
            const auto t0 = Clock::now();
            const auto res = m.project(TotalVarianceSurface(c.grid, w));
            project_seconds += seconds_since(t0);
            unconverged += !res.converged;
            worst = std::max(worst, l2_distance(res.projected.w, oracle::enumerate_projection(m, w)));
        }
    }
    return {n == 200 && unconverged == 0 && worst <= 1e-8 && project_seconds < 10.0,
            "max distance to oracle " + sci(worst) + " over " + std::to_string(n) + " surfaces (d <= 6), " +
                std::to_string(unconverged) + " unconverged, project() time " + sci(project_seconds) + " s"};
}

Outcome projection_properties() {
    const auto g = default_grid();
    const LawManifold m(g);
    const ProjectionOptions opts;
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> level(0.01, 0.1), curv(0.0, 0.5);
    const std::vector<double> noise{0.002, 0.02, 0.1};
    int idem_bad = 0, nonexp_bad = 0;
    double worst_idem = 0.0, worst_excess = -1e300;
    const int pairs = 10000;
    for (int rep = 0; rep < pairs; ++rep) {
        const auto base = smooth_surface(*g, level(rng), curv(rng));
        const double s = noise[static_cast<std::size_t>(rep) % noise.size()];
        const TotalVarianceSurface a(g, perturbed(base, s, rng));
        const TotalVarianceSurface b(g, perturbed(base, s, rng));
        const auto pa = m.project(a, opts).projected;
        const auto pb = m.project(b, opts).projected;
        for (const auto* p : {&pa, &pb}) {
            const double e = l2_distance(m.project(*p, opts).projected.w, p->w);
            worst_idem = std::max(worst_idem, e);
            idem_bad += e > 2.0 * opts.tol_opt;
        }
        const double excess = l2_distance(pa.w, pb.w) - l2_distance(a.w, b.w);
        worst_excess = std::max(worst_excess, excess);
        nonexp_bad += excess > 2.0 * opts.tol_opt;
    }
    return {idem_bad == 0 && nonexp_bad == 0,
            std::to_string(pairs) + " pairs on the 8x11 grid: idempotence max " + sci(worst_idem) + " (" +
                std::to_string(idem_bad) + " > 2 tol_opt), max ||Pa-Pb|| - ||a-b|| = " + sci(worst_excess) + " (" +
                std::to_string(nonexp_bad) + " violations)"};
}

Outcome penalty_zero_iff() {
    const auto g = default_grid();
    const LawManifold m(g);
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> level(0.01, 0.1), curv(0.0, 0.5), viol(1e-3, 1e-2), unit(0.0, 1.0);

    std::vector<std::vector<double>> feasible;
    for (int i = 0; i < 500; ++i) feasible.push_back(smooth_surface(*g, level(rng), curv(rng)));
    for (int i = 0; i < 500; ++i) {
        const auto noisy = perturbed(smooth_surface(*g, level(rng), curv(rng)), 0.02, rng);
        feasible.push_back(m.project(TotalVarianceSurface(g, noisy)).projected.w);
    }
    double worst_feasible = 0.0;
    for (const auto& w : feasible) worst_feasible = std::max(worst_feasible, m.law_penalty(TotalVarianceSurface(g, w)));

    const auto& rows = m.rows();
    std::uniform_int_distribution<std::size_t> pick_row(0, rows.size() - 1), pick_entry(0, g->d() - 1);
    int uncertified = 0, zero_pen = 0;
    double min_pen = 1e300;
    for (const auto& f : feasible) {
        std::vector<double> w = f;
        const double v = viol(rng);
        if (unit(rng) < 0.2) {
            const std::size_t i = pick_entry(rng);
            w[i] = unit(rng) < 0.5 ? m.w_min() - v : m.w_max() + v;
        } else {
            const auto& row = rows[pick_row(rng)];
            const double shift = (v - row.evaluate(w) + row.rhs) / row.squared_norm();
            for (const auto& [idx, coef] : row.terms) w[idx] += shift * coef;
        }
        const TotalVarianceSurface ws(g, w);
        uncertified += m.check(ws, 0.0).worst_violation < 1e-3;
        const double pen = m.law_penalty(ws);
        min_pen = std::min(min_pen, pen);
        zero_pen += !(pen > 0.0);
    }
    return {worst_feasible <= 1e-8 && uncertified == 0 && zero_pen == 0,
            "1000 feasible: max penalty " + sci(worst_feasible) + "; 1000 perturbed (" +
                std::to_string(uncertified) + " uncertified): min penalty " + sci(min_pen) + ", " +
                std::to_string(zero_pen) + " zero"};
}

Outcome generator_consistency() {
    const auto g = default_grid();
    const LawManifold m(g);
    GeneratorParams gp;
    gp.seed = derive_seed(404, "acceptance-gen");
    const ShockSpec shock;
    const auto data = generate_dataset(gp, m, 60, 100);
    double worst = 0.0;
    std::size_t steps = 0;
    const auto scan = [&](const Trajectory& t) {
        for (std::size_t s = 1; s < t.surfaces.size(); ++s, ++steps) worst = std::max(worst, m.law_penalty(t.surfaces[s]));
    };
    for (const auto& tr : data) {
        scan(tr);
        scan(apply_shock(tr, shock, m));
    }
    return {steps >= 10000 && worst <= 1e-8,
            std::to_string(steps) + " generated steps (baseline + shock): max law penalty " + sci(worst)};
}

Outcome ghost_channel(RunBook& book, Pipeline& run) {
    const json diag = json::parse(read_text_file(run.path("ghost_diagnostics.json")));
    const json& v = diag.at("validation");
    const auto deltas = v.at("deltas").get<std::vector<double>>();
    const auto fracs = v.at("frac_offmanifold").get<std::vector<double>>();
    double frac = -1.0;
    for (std::size_t i = 0; i < deltas.size(); ++i)
        if (deltas[i] == 1e-6) frac = fracs[i];
    const double mean_pen = v.at("mean_pred_penalty").get<double>();
    const auto wm_seconds = book.timing("default_a", "train-wm");

    double rollout_pen = -1.0;
    for (const auto& r : run.load_metrics())
        if (r.policy_id == reference_policy_id && r.regime == Regime::baseline) rollout_pen = r.mean_law_pen;

    const bool pass = frac > 0.0 && mean_pen >= 1e-4 && mean_pen <= 1e-1 && wm_seconds && *wm_seconds < 600.0;
    return {pass, "held-out one-step: frac_offmanifold(1e-6) = " + sci(frac) + ", mean penalty " + sci(mean_pen) +
                      " (band [1e-4, 1e-1]); closed-loop zero-hedge mean penalty " + sci(rollout_pen) +
                      "; train-wm " + (wm_seconds ? sci(*wm_seconds) + " s" : std::string("untimed"))};
}

std::vector<std::string> evaluated_policies(const Pipeline& run) {
    std::vector<std::string> ids;
    for (const auto& r : run.load_metrics())
        if (std::find(ids.begin(), ids.end(), r.policy_id) == ids.end()) ids.push_back(r.policy_id);
    return ids;
}

Outcome goodhart_exactness(Pipeline& run) {
    std::size_t steps = 0, bad = 0, zh_nonzero = 0;
    double worst = 0.0;
    const auto ids = evaluated_policies(run);
    for (const auto& id : ids) {
        for (Regime regime : {Regime::baseline, Regime::shock}) {
            const auto eps = run.load_eval(id, regime);
            if (eps.size() != static_cast<std::size_t>(run.config().eval_episodes)) ++bad;
            for (const auto& ep : eps) {
                for (const auto& s : ep.steps) {
                    const double e = std::abs(s.pnl - (s.r_on_manifold + s.r_ghost));
                    worst = std::max(worst, e);
                    bad += e > 1e-10;
                    if (id == reference_policy_id) zh_nonzero += s.r_ghost != 0.0;
                    ++steps;
                }
            }
        }
    }
    return {bad == 0 && zh_nonzero == 0 && steps > 0,
            std::to_string(ids.size()) + " policies x 2 regimes x " + std::to_string(run.config().eval_episodes) +
                " episodes, " + std::to_string(steps) + " steps: max |pnl - r_M - r_ghost| " + sci(worst) +
                ", zero-hedge steps with r_ghost != 0: " + std::to_string(zh_nonzero)};
}

Outcome ghost_bound(Pipeline& run) {
    const auto& cfg = run.config();
    const auto grid = default_grid(cfg.grid);
    const double lr = ghost_lipschitz(cfg.env, *grid);
    std::size_t steps = 0, bad = 0;
    double worst_ratio = 0.0;
    for (const auto& id : evaluated_policies(run)) {
        for (Regime regime : {Regime::baseline, Regime::shock}) {
            for (const auto& ep : run.load_eval(id, regime)) {
                for (const auto& s : ep.steps) {
                    const double bound = lr * std::sqrt(2.0 * s.law_pen_exact);
                    // Rounding of the two PnL evaluations that make up r_ghost.
                    bad += std::abs(s.r_ghost) > bound + 1e-15;
                    if (bound > 0.0) worst_ratio = std::max(worst_ratio, std::abs(s.r_ghost) / bound);
                    ++steps;
                }
            }
        }
    }
    return {bad == 0 && steps > 0, std::to_string(steps) + " steps, L_r = " + sci(lr) + ": " + std::to_string(bad) +
                                       " violations, max |r_ghost| / bound " + sci(worst_ratio)};
}

class Bandit final : public RlEnvironment {
public:
    std::size_t observation_dim() const override { return 1; }
    int action_dim() const override { return 1; }
    double a_max() const override { return 1.0; }
    std::vector<double> reset(Rng& rng) override {
        state_ = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        return {state_};
    }
    Step step(const std::vector<double>& a) override { return {{state_}, a[0] > 0.0 ? 1.0 : 0.0, true}; }

private:
    double state_ = 1.0;
};

Outcome ppo_correctness() {
    ActorCritic net(2, 1, {4});
    nn::Vector params;
    Rng rng(808);
    net.initialize(params, rng, std::log(0.3));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = 0.5 * n01(rng);
    const Eigen::Index b = 32;
    ActorCritic::Batch batch{nn::Matrix(2, b), nn::Matrix(1, b), nn::Vector(b), nn::Vector(b), nn::Vector(b)};
    for (Eigen::Index k = 0; k < b; ++k) {
        batch.obs.col(k) << n01(rng), n01(rng);
        batch.actions(0, k) = n01(rng);
        batch.advantages[k] = n01(rng);
        batch.returns[k] = n01(rng);
    }
    const nn::Vector lp = net.log_prob(params, batch.obs, batch.actions);
    for (Eigen::Index k = 0; k < b; ++k) batch.old_log_prob[k] = lp[k] + 0.4 * n01(rng);
    nn::Vector grad = nn::Vector::Zero(net.parameter_count());
    net.loss(params, batch, 0.2, 0.5, 0.01, &grad);
    double worst = 0.0;
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        nn::Vector p = params;
        p[i] += h;
        const double up = net.loss(p, batch, 0.2, 0.5, 0.01, nullptr).total;
        p[i] -= 2 * h;
        const double dn = net.loss(p, batch, 0.2, 0.5, 0.01, nullptr).total;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-6, std::abs(fd) + std::abs(grad[i])));
    }

    int converged = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Bandit bandit;
        PPOConfig cfg;
        cfg.steps_per_update = 64;
        cfg.minibatch_size = 32;
        cfg.total_updates = 200;
        cfg.checkpoint_every = 50;
        cfg.hidden = {16, 16};
        cfg.seed = seed;
        const auto res = ppo_train(bandit, cfg, 0.0);
        bool ok = true;
        for (double s : {1.0, -1.0}) ok = ok && res.net.forward(res.params, nn::Matrix::Constant(1, 1, s)).mean(0, 0) > 0.0;
        converged += ok;
    }
    return {worst <= 1e-4 && converged == 3, "surrogate gradient max relative FD error " + sci(worst) +
                                                 "; bandit converged on " + std::to_string(converged) + "/3 seeds"};
}

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

MetricsReport bare_report(const std::string& id, double pen) {
    MetricsReport r;
    r.policy_id = id;
    r.mean_law_pen = pen;
    return r;
}

Outcome metrics_oracles(Pipeline& run) {
    std::mt19937_64 rng(909);
    std::uniform_int_distribution<int> size(1, 400), tick(-50, 50);
    std::normal_distribution<double> n01(0.0, 0.01);
    int tail_bad = 0;
    for (int s = 0; s < 100; ++s) {
        std::vector<double> x(static_cast<std::size_t>(size(rng)));
        for (double& v : x) v = s % 2 ? n01(rng) : tick(rng) * 1e-3; // half the samples carry ties
        tail_bad += value_at_risk(x) != oracle_var(x);
        tail_bad += conditional_value_at_risk(x) != oracle_cvar(x);
    }

    std::uniform_int_distribution<int> coarse(0, 3), count(1, 12);
    int pareto_bad = 0;
    for (int s = 0; s < 100; ++s) {
        std::vector<FrontierPoint> pts(static_cast<std::size_t>(count(rng)));
        std::vector<std::array<double, 5>> raw;
        for (auto& p : pts) {
            for (double& c : p.coords) c = coarse(rng) * 0.25;
            raw.push_back(p.coords);
        }
        pareto_frontier(pts);
        for (std::size_t i = 0; i < pts.size(); ++i) pareto_bad += pts[i].dominated != oracle_dominated(raw, i);
    }

    int gfi_bad = 0;
    std::uniform_real_distribution<double> u(0.0, 0.02);
    for (int i = 0; i < 1000; ++i) {
        const auto b = bare_report("ref", u(rng)), sh = bare_report("ref", u(rng));
        gfi_bad += compute_gfi(b, sh, b, sh, 0.5 + u(rng)).gfi != 0.0;
    }
    for (const auto& r : run.load_metrics())
        if (r.policy_id == reference_policy_id) gfi_bad += !r.gfi || *r.gfi != 0.0;

    return {tail_bad == 0 && pareto_bad == 0 && gfi_bad == 0,
            "VaR/CVaR mismatches " + std::to_string(tail_bad) + "/200, Pareto mismatches " +
                std::to_string(pareto_bad) + " over 100 sets, nonzero reference GFI " + std::to_string(gfi_bad)};
}

std::map<std::string, FrontierPoint> run_frontier(const Pipeline& run) {
    std::map<std::string, FrontierPoint> out;
    for (const auto& r : run.load_metrics())
        if (r.regime == Regime::baseline) out[r.policy_id] = frontier_point(r, r.gfi.value_or(0.0));
    return out;
}

Outcome frontier_pattern(Pipeline& run) {
    const auto pts = run_frontier(run);
    const auto& zh = pts.at("zero_hedge");
    const auto& vt = pts.at("vol_trend");
    std::vector<std::string> undominated;
    std::size_t n = 0;
    for (const auto& spec : learned_policies(run.config())) {
        const auto& p = pts.at(spec.id);
        ++n;
        if (!dominates(zh.coords, p.coords) && !dominates(vt.coords, p.coords)) undominated.push_back(spec.id);
    }
    double zh_gfi = -1.0, zh_pnl = 0.0;
    for (const auto& r : run.load_metrics())
        if (r.policy_id == reference_policy_id && r.regime == Regime::baseline) {
            zh_gfi = r.gfi.value_or(-1.0);
            zh_pnl = r.mean_pnl;
        }
    std::string list;
    for (const auto& id : undominated) list += (list.empty() ? "" : ",") + id;
    return {undominated.empty() && n == run.config().lambda_grid.size() + 1 && zh_pnl > 0.0 && zh_gfi == 0.0,
            std::to_string(n - undominated.size()) + "/" + std::to_string(n) +
                " PPO variants dominated by zero-hedge or vol-trend" + (list.empty() ? "" : " (not: " + list + ")") +
                "; zero-hedge mean PnL " + sci(zh_pnl) + ", GFI " + sci(zh_gfi)};
}

// Reference strategy and lambda-sweep rows, baseline regime:
// (mean pnl, sharpe, mean penalty, gfi, var5, cvar5).
struct TableRow {
    std::string id;
    bool learned;
    double pnl, sharpe, pen, gfi, var5, cvar5;
};

Outcome table_fixture() {
    const std::vector<TableRow> rows{
        {"naive", true, -0.0022, -0.17, 0.00699, 1.27, -0.0228, -0.0261},
        {"law_seeking", true, -0.0150, -1.16, 0.00786, 1.66, -0.0361, -0.0394},
        {"soft_l5", true, -0.0202, -1.68, 0.00647, 2.07, -0.0399, -0.0429},
        {"soft_l10", true, -0.0175, -1.42, 0.00371, 2.81, -0.0354, -0.0387},
        {"soft_l20", true, -0.0204, -1.56, 0.00396, 3.07, -0.0414, -0.0454},
        {"soft_l40", true, -0.0092, -1.71, 0.00474, 0.84, -0.0134, -0.0134},
        {"selection", true, -0.0223, -1.60, 0.00792, 2.04, -0.0448, -0.0489},
        {"zero_hedge", false, 0.0191, 2.99, 0.00550, 0.00, 0.0139, 0.0139},
        {"random_gaussian", false, 0.0099, 0.92, 0.00551, 1.21, -0.0088, -0.0161},
        {"vol_trend", false, 0.0146, 1.96, 0.00534, 0.00, 0.0045, 0.0033},
    };
    std::vector<FrontierPoint> pts;
    std::vector<MetricsReport> reports;
    for (const auto& r : rows) {
        MetricsReport m;
        m.policy_id = r.id;
        m.mean_pnl = r.pnl;
        m.sharpe = r.sharpe;
        m.mean_law_pen = r.pen;
        m.var5 = r.var5;
        m.cvar5 = r.cvar5;
        m.gfi = r.gfi;
        reports.push_back(m);
        pts.push_back(frontier_point(m, r.gfi));
    }
    pareto_frontier(pts);
    std::vector<std::string> learned_undominated;
    bool zh_vt_ok = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].learned && !pts[i].dominated) learned_undominated.push_back(rows[i].id);
        if ((rows[i].id == "zero_hedge" || rows[i].id == "vol_trend") && pts[i].dominated) zh_vt_ok = false;
    }

    const auto bands = penalty_bands(reports, {0.0053, 0.0057});
    bool band_ok = false;
    std::string band_detail = "band [0.0053,0.0057) missing";
    if (!bands.empty()) {
        const auto& members = bands.front().members;
        std::optional<MetricsReport> zh, best_rl;
        for (const auto& m : members) {
            const bool learned = std::any_of(rows.begin(), rows.end(), [&](const TableRow& r) {
                return r.id == m.policy_id && r.learned;
            });
            if (m.policy_id == "zero_hedge") zh = m;
            if (learned && (!best_rl || m.sharpe > best_rl->sharpe)) best_rl = m;
        }
        band_ok = zh && std::abs(zh->sharpe - 3.0) <= 0.05 && zh->gfi.value_or(1.0) == 0.0 && best_rl &&
                  best_rl->sharpe < 0.0 && best_rl->gfi.value_or(0.0) > 1.5;
        std::string ids;
        for (const auto& m : members) ids += (ids.empty() ? "" : ",") + m.policy_id;
        band_detail = "band members {" + ids + "}" +
                      (best_rl ? "" : ", no RL row in band so the in-band RL comparison has no subject");
    }
    std::string und;
    for (const auto& id : learned_undominated) und += (und.empty() ? "" : ",") + id;
    return {learned_undominated.empty() && zh_vt_ok && band_ok,
            std::string("RL rows undominated: {") + und + "}; zero-hedge and vol-trend undominated: " +
                (zh_vt_ok ? "yes" : "no") + "; " + band_detail};
}

Outcome determinism(RunBook& book, Pipeline& a, Pipeline& b) {
    bool identical = true;
    std::string diff;
    for (const char* f : {"metrics.csv", "frontier.csv"}) {
        if (read_text_file(a.path(f)) != read_text_file(b.path(f))) {
            identical = false;
            diff += std::string(" ") + f;
        }
    }

    ExperimentConfig tiny = ExperimentConfig::tiny();
    double worst = 0.0;
    std::vector<std::string> tiny_metrics;
    for (const char* name : {"tiny_a", "tiny_b"}) {
        const fs::path dir = book.work() / name;
        fs::remove_all(dir);
        const auto t0 = Clock::now();
        Pipeline p(tiny, dir);
        p.run_all();
        worst = std::max(worst, seconds_since(t0));
        tiny_metrics.push_back(read_text_file(p.path("metrics.csv")) + read_text_file(p.path("frontier.csv")));
    }
    const bool tiny_same = tiny_metrics[0] == tiny_metrics[1];
    return {identical && tiny_same && worst < 60.0,
            std::string("default runs: metrics/frontier ") + (identical ? "byte-identical" : "differ:" + diff) +
                "; tiny runs " + (tiny_same ? "byte-identical" : "differ") + ", slowest tiny run " + sci(worst) +
                " s"};
}

std::set<int> parse_list(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.insert(std::stoi(tok));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volaxiom acceptance criteria"};
    std::string work = "acceptance_runs";
    std::string expect_fail_arg;
    bool resume = false;
    app.add_option("--work-dir", work, "run directories and timing sidecar");
    app.add_option("--expect-fail", expect_fail_arg,
                   "comma-separated criteria known to be unattainable; they still print FAIL");
    app.add_flag("--resume", resume, "reuse intact pipeline stages from an earlier invocation");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> expect_fail = parse_list(expect_fail_arg);

    RunBook book(work, resume);
    std::map<int, Outcome> results;
    const std::map<int, std::string> names{
        {1, "projection matches exhaustive oracle"}, {2, "projection idempotent and non-expansive"},
        {3, "penalty zero iff feasible"},           {4, "generator stays on the manifold"},
        {5, "world-model ghost channel"},           {6, "Goodhart decomposition exact"},
        {7, "ghost reward bound"},                  {8, "PPO gradient and bandit"},
        {9, "metrics oracles"},                     {10, "baselines dominate every PPO variant"},
        {11, "reference-table fixture verdicts"},   {12, "end-to-end determinism"}};

    std::string transcript;
    const auto emit = [&](const std::string& line) {
        std::cout << line << std::endl;
        transcript += line + "\n";
    };
    auto record = [&](int id, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        results[id] = o;
        emit("criterion " + std::string(id < 10 ? " " : "") + std::to_string(id) + (o.pass ? " PASS  " : " FAIL  ") +
             names.at(id) + ": " + o.detail + " [" + sci(seconds_since(t0)) + " s]");
    };

    record(1, projection_correctness);
    record(2, projection_properties);
    record(3, penalty_zero_iff);
    record(4, generator_consistency);

    const ExperimentConfig defaults;
    Pipeline* run_a = nullptr;
    Pipeline* run_b = nullptr;
    std::string run_error;
    try {
        run_a = &book.ensure("default_a", defaults);
    } catch (const std::exception& e) {
        run_error = e.what();
    }
    auto with_run = [&](const std::function<Outcome(Pipeline&)>& f) {
        return [&, f]() -> Outcome {
            if (!run_a) return {false, "default pipeline failed: " + run_error};
            return f(*run_a);
        };
    };
    record(5, with_run([&](Pipeline& r) { return ghost_channel(book, r); }));
    record(6, with_run(goodhart_exactness));
    record(7, with_run(ghost_bound));
    record(8, ppo_correctness);
    record(9, with_run(metrics_oracles));
    record(10, with_run(frontier_pattern));
    record(11, table_fixture);
    record(12, with_run([&](Pipeline& a) {
        run_b = &book.ensure("default_b", defaults);
        return determinism(book, a, *run_b);
    }));

    int passed = 0;
    bool ok = true;
    std::string unexpected;
    for (const auto& [id, o] : results) {
        passed += o.pass;
        const bool expected = expect_fail.count(id) > 0;
        if (o.pass == expected) {
            ok = false;
            unexpected += " " + std::to_string(id) + (o.pass ? "(passed, expected to fail)" : "(failed)");
        }
    }
    std::string summary = std::to_string(passed) + "/" + std::to_string(results.size()) + " criteria passed";
    if (!expect_fail.empty()) {
        summary += "; known unattainable:";
        for (int id : expect_fail) summary += " " + std::to_string(id);
    }
    if (!ok) summary += "; unexpected:" + unexpected;
    emit(summary);
    write_text_file(book.work() / "acceptance_report.txt", transcript);
    return ok ? 0 : 1;
}
