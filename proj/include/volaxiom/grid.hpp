#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace volaxiom {

// Maturity x log-moneyness lattice. Flattening is row-major by maturity:
// index(i_k, j_t) = j_t * n_k + i_k, so all strikes of T_1 come first.
class SurfaceGrid {
public:
    SurfaceGrid(std::vector<double> maturities, std::vector<double> log_moneyness);

    const std::vector<double>& maturities() const { return maturities_; }
    const std::vector<double>& log_moneyness() const { return log_moneyness_; }
    std::size_t n_t() const { return maturities_.size(); }
    std::size_t n_k() const { return log_moneyness_.size(); }
    std::size_t d() const { return maturities_.size() * log_moneyness_.size(); }

    std::size_t index(std::size_t i_k, std::size_t j_t) const { return j_t * n_k() + i_k; }
    double maturity_of(std::size_t flat) const { return maturities_[flat / n_k()]; }
    double log_moneyness_of(std::size_t flat) const { return log_moneyness_[flat % n_k()]; }

    // True when log-moneyness points are equally spaced to 1e-9 relative.
    bool equally_spaced_strikes() const;

    bool operator==(const SurfaceGrid& other) const = default;

private:
    std::vector<double> maturities_;
    std::vector<double> log_moneyness_;
};

using GridPtr = std::shared_ptr<const SurfaceGrid>;

enum class GridPreset { standard, tiny };

GridPreset parse_grid_preset(const std::string& name);
std::string to_string(GridPreset preset);

// standard: 8 maturities (1M..2Y) x 11 log-moneyness points on [ln 0.5, ln 1.5].
// tiny: 2 x 3 test lattice.
GridPtr default_grid(GridPreset preset = GridPreset::standard);

struct TotalVarianceSurface {
    GridPtr grid;
    std::vector<double> w;

    TotalVarianceSurface() = default;
    TotalVarianceSurface(GridPtr g, std::vector<double> values);

    double operator[](std::size_t i) const { return w[i]; }
    std::size_t size() const { return w.size(); }
};

struct ImpliedVolSurface {
    GridPtr grid;
    std::vector<double> sigma;

    ImpliedVolSurface(GridPtr g, std::vector<double> values);
};

TotalVarianceSurface vol_to_total_variance(const ImpliedVolSurface& iv);

/// Throws NegativeVariance if any total variance is below zero.
ImpliedVolSurface total_variance_to_vol(const TotalVarianceSurface& tv);

bool same_grid(const SurfaceGrid& a, const SurfaceGrid& b);

// CSV with header `maturity,log_moneyness,total_variance`, rows in flattening order.
void write_surface_csv(const std::filesystem::path& path, const TotalVarianceSurface& s);
TotalVarianceSurface read_surface_csv(const std::filesystem::path& path, const GridPtr& grid);

} // namespace volaxiom
