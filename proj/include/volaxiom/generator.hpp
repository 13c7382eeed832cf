#pragma once

#include "volaxiom/grid.hpp"
#include "volaxiom/law_manifold.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace volaxiom {

// Mean-reverting square-root variance driving a quadratic-smile surface family.
struct GeneratorParams {
    double v0 = 0.04;
    double kappa = 2.0;
    double theta_bar = 0.04;
    double xi = 0.3;
    double smile_a = 0.5;
    double smile_b = -0.1;
    double dt = 1.0 / 252.0;
    double param_jitter = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ShockSpec {
    double alpha_long = 4.0;
    double alpha_spot = 2.0;
    // When positive, overrides the default intensity |(alpha_long - 1, alpha_spot - 1)|.
    double intensity_override = 0.0;

    void validate() const;
};

enum class Regime { baseline, shock };
std::string to_string(Regime r);
Regime parse_regime(const std::string& s);

struct Trajectory {
    std::vector<TotalVarianceSurface> surfaces; // horizon + 1 entries
    std::vector<double> raw_penalties;          // exact penalty before each projection
    Regime regime = Regime::baseline;
    GeneratorParams params;                     // after per-trajectory jitter
    std::uint64_t seed = 0;
};

// Raw (pre-projection) surface for instantaneous variance v, floored at w_min.
std::vector<double> raw_surface(const GeneratorParams& p, const SurfaceGrid& grid, double v, double w_min);

/// Throws ProjectionFailure when any step's projection does not converge.
Trajectory generate(const GeneratorParams& params, const LawManifold& m, int horizon);

// Per-maturity multiplier: alpha_spot at the first maturity rising linearly to
// alpha_long at the last one. Constant in k and nondecreasing in T.
std::vector<double> shock_multipliers(const ShockSpec& spec, const SurfaceGrid& grid);
TotalVarianceSurface shock_surface(const TotalVarianceSurface& w, const ShockSpec& spec);
Trajectory apply_shock(const Trajectory& traj, const ShockSpec& spec, const LawManifold& m);

double shock_intensity(const ShockSpec& spec);

// n trajectories, trajectory i seeded with derive_seed(seed, "trajectory", i).
std::vector<Trajectory> generate_dataset(const GeneratorParams& params, const LawManifold& m, int n_trajectories,
                                         int horizon);

void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& dir, const GridPtr& grid);

} // namespace volaxiom
