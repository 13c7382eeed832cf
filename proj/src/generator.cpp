#include "volaxiom/generator.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"
#include "volaxiom/rng.hpp"
#include "volaxiom/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace volaxiom {

void GeneratorParams::validate() const {
    if (!(v0 > 0 && kappa > 0 && theta_bar > 0 && xi > 0 && dt > 0)) {
        throw InvalidArgument("generator v0, kappa, theta_bar, xi, dt must be positive");
    }
    if (!(param_jitter >= 0.0 && param_jitter < 1.0)) throw InvalidArgument("param_jitter must lie in [0, 1)");
}

void ShockSpec::validate() const {
    if (!(alpha_long >= 1.0 && alpha_spot >= 1.0)) throw InvalidArgument("shock multipliers must be >= 1");
    if (intensity_override < 0.0) throw InvalidArgument("shock intensity override must be >= 0");
}

std::string to_string(Regime r) { return r == Regime::shock ? "shock" : "baseline"; }

Regime parse_regime(const std::string& s) {
    if (s == "baseline") return Regime::baseline;
    if (s == "shock") return Regime::shock;
    throw ConfigParse("unknown regime '" + s + "'");
}

std::vector<double> raw_surface(const GeneratorParams& p, const SurfaceGrid& grid, double v, double w_min) {
    std::vector<double> w(grid.d());
    for (std::size_t j = 0; j < grid.n_t(); ++j) {
        const double t = grid.maturities()[j];
        const double decay = (1.0 - std::exp(-p.kappa * t)) / (p.kappa * t);
        const double level = (v + (p.theta_bar - v) * (1.0 - decay)) * t;
        for (std::size_t i = 0; i < grid.n_k(); ++i) {
            const double k = grid.log_moneyness()[i];
            const double value = level + p.smile_a * k * k * std::sqrt(t) + p.smile_b * k * t;
            w[grid.index(i, j)] = std::max(value, w_min);
        }
    }
    return w;
}

namespace {

GeneratorParams jittered(const GeneratorParams& p, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GeneratorParams q = p;
    const auto scale = [&](double x) { return x * (1.0 + p.param_jitter * u(rng)); };
    q.v0 = scale(p.v0);
    q.kappa = scale(p.kappa);
    q.theta_bar = scale(p.theta_bar);
    q.xi = scale(p.xi);
    q.smile_a = scale(p.smile_a);
    q.smile_b = scale(p.smile_b);
    return q;
}

TotalVarianceSurface project_or_throw(const LawManifold& m, const TotalVarianceSurface& raw, double& penalty) {
    const auto res = m.project(raw);
    if (!res.converged) {
        throw ProjectionFailure("generator projection did not converge (KKT residual " +
                                format_double(res.kkt_residual) + ")");
    }
    penalty = res.penalty;
    return res.projected;
}

} // namespace

Trajectory generate(const GeneratorParams& params, const LawManifold& m, int horizon) {
    params.validate();
    if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
    const auto& grid = m.grid();
    Rng rng(params.seed);
    Trajectory traj;
    traj.seed = params.seed;
    traj.params = params.param_jitter > 0.0 ? jittered(params, rng) : params;
    const GeneratorParams& p = traj.params;

    std::normal_distribution<double> n01(0.0, 1.0);
    double v = p.v0;
    traj.surfaces.reserve(static_cast<std::size_t>(horizon) + 1);
    for (int t = 0; t <= horizon; ++t) {
        if (t > 0) {
            const double eps = n01(rng);
            v = v + p.kappa * (p.theta_bar - v) * p.dt + p.xi * std::sqrt(std::max(v, 0.0) * p.dt) * eps;
            v = std::max(v, 1e-8);
        }
        double pen = 0.0;
        TotalVarianceSurface raw(grid, raw_surface(p, *grid, v, m.w_min()));
        traj.surfaces.push_back(project_or_throw(m, raw, pen));
        traj.raw_penalties.push_back(pen);
    }
    return traj;
}

std::vector<double> shock_multipliers(const ShockSpec& spec, const SurfaceGrid& grid) {
    const auto& ts = grid.maturities();
    std::vector<double> alpha(ts.size(), spec.alpha_spot);
    if (ts.size() == 1) {
        alpha[0] = spec.alpha_spot;
        return alpha;
    }
    const double span = ts.back() - ts.front();
    for (std::size_t j = 0; j < ts.size(); ++j) {
        alpha[j] = spec.alpha_spot + (spec.alpha_long - spec.alpha_spot) * (ts[j] - ts.front()) / span;
    }
    return alpha;
}

TotalVarianceSurface shock_surface(const TotalVarianceSurface& w, const ShockSpec& spec) {
    const auto alpha = shock_multipliers(spec, *w.grid);
    std::vector<double> out = w.w;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= alpha[i / w.grid->n_k()];
    return {w.grid, std::move(out)};
}

Trajectory apply_shock(const Trajectory& traj, const ShockSpec& spec, const LawManifold& m) {
    spec.validate();
    if (traj.regime != Regime::baseline) throw InvalidArgument("apply_shock expects a baseline trajectory");
    Trajectory out = traj;
    out.regime = Regime::shock;
    for (std::size_t t = 0; t < traj.surfaces.size(); ++t) {
        double pen = 0.0;
        out.surfaces[t] = project_or_throw(m, shock_surface(traj.surfaces[t], spec), pen);
        out.raw_penalties[t] = pen;
    }
    return out;
}

double shock_intensity(const ShockSpec& spec) {
    if (spec.intensity_override > 0.0) return spec.intensity_override;
    return std::hypot(spec.alpha_long - 1.0, spec.alpha_spot - 1.0);
}

std::vector<Trajectory> generate_dataset(const GeneratorParams& params, const LawManifold& m, int n_trajectories,
                                         int horizon) {
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(n_trajectories));
    for (int i = 0; i < n_trajectories; ++i) {
        GeneratorParams p = params;
        p.seed = derive_seed(params.seed, "trajectory", static_cast<std::uint64_t>(i));
        out.push_back(generate(p, m, horizon));
    }
    return out;
}

void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj) {
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < traj.surfaces.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%05zu.csv", t);
        write_surface_csv(dir / name, traj.surfaces[t]);
    }
    nlohmann::json meta;
    meta["schema"] = "volaxiom.trajectory/1";
    meta["params"] = traj.params;
    meta["seed"] = traj.seed;
    meta["regime"] = to_string(traj.regime);
    meta["horizon"] = traj.surfaces.size() - 1;
    meta["raw_penalties"] = traj.raw_penalties;
    write_text_file(dir / "meta.json", meta.dump(2) + "\n");
}

Trajectory read_trajectory(const std::filesystem::path& dir, const GridPtr& grid) {
    const auto meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
    Trajectory traj;
    traj.params = meta.at("params").get<GeneratorParams>();
    traj.seed = meta.at("seed").get<std::uint64_t>();
    traj.regime = parse_regime(meta.at("regime").get<std::string>());
    traj.raw_penalties = meta.at("raw_penalties").get<std::vector<double>>();
    const auto horizon = meta.at("horizon").get<std::size_t>();
    for (std::size_t t = 0; t <= horizon; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%05zu.csv", t);
        traj.surfaces.push_back(read_surface_csv(dir / name, grid));
    }
    return traj;
}

} // namespace volaxiom
