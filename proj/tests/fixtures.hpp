#pragma once

#include "volaxiom/grid.hpp"
#include "volaxiom/law_manifold.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <vector>

namespace volaxiom::testing {

inline GridPtr make_grid(std::vector<double> maturities, std::vector<double> ks) {
    return std::make_shared<const SurfaceGrid>(std::move(maturities), std::move(ks));
}

// A smooth arbitrage-free surface: level * T + curvature * k^2 * sqrt(T).
inline std::vector<double> smooth_surface(const SurfaceGrid& g, double level = 0.04, double curvature = 0.3) {
    std::vector<double> w(g.d());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double t = g.maturity_of(i);
        const double k = g.log_moneyness_of(i);
        w[i] = level * t + curvature * k * k * std::sqrt(t);
    }
    return w;
}

inline std::vector<double> perturbed(const std::vector<double>& base, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> w = base;
    for (double& x : w) x += scale * n01(rng);
    return w;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

} // namespace volaxiom::testing
