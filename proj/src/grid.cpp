#include "volaxiom/grid.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace volaxiom {

namespace {

void require_strictly_increasing(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) {
            throw InvalidArgument(std::string(what) + " must be strictly increasing");
        }
    }
}

} // namespace

SurfaceGrid::SurfaceGrid(std::vector<double> maturities, std::vector<double> log_moneyness)
    : maturities_(std::move(maturities)), log_moneyness_(std::move(log_moneyness)) {
    if (maturities_.empty() || log_moneyness_.empty()) {
        throw InvalidArgument("grid needs at least one maturity and one strike");
    }
    require_strictly_increasing(maturities_, "maturities");
    require_strictly_increasing(log_moneyness_, "log_moneyness");
    if (maturities_.front() <= 0.0) {
        throw InvalidArgument("maturities must be positive");
    }
    for (double k : log_moneyness_) {
        if (!std::isfinite(k)) throw InvalidArgument("log_moneyness must be finite");
    }
}

bool SurfaceGrid::equally_spaced_strikes() const {
    if (log_moneyness_.size() < 3) return true;
    const double h = log_moneyness_[1] - log_moneyness_[0];
    for (std::size_t i = 2; i < log_moneyness_.size(); ++i) {
        const double hi = log_moneyness_[i] - log_moneyness_[i - 1];
        if (std::abs(hi - h) > 1e-9 * std::abs(h)) return false;
    }
    return true;
}

GridPreset parse_grid_preset(const std::string& name) {
    if (name == "default" || name == "standard") return GridPreset::standard;
    if (name == "tiny") return GridPreset::tiny;
    throw ConfigParse("unknown grid preset '" + name + "'");
}

std::string to_string(GridPreset preset) {
    return preset == GridPreset::tiny ? "tiny" : "default";
}

GridPtr default_grid(GridPreset preset) {
    if (preset == GridPreset::tiny) {
        return std::make_shared<const SurfaceGrid>(std::vector<double>{0.25, 1.0},
                                                   std::vector<double>{-0.2, 0.0, 0.2});
    }
    std::vector<double> maturities{1.0 / 12, 2.0 / 12, 3.0 / 12, 6.0 / 12,
                                   9.0 / 12, 12.0 / 12, 18.0 / 12, 24.0 / 12};
    const std::size_t n_k = 11;
    const double lo = std::log(0.5);
    const double hi = std::log(1.5);
    std::vector<double> ks(n_k);
    for (std::size_t i = 0; i < n_k; ++i) {
        ks[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_k - 1);
    }
    return std::make_shared<const SurfaceGrid>(std::move(maturities), std::move(ks));
}

TotalVarianceSurface::TotalVarianceSurface(GridPtr g, std::vector<double> values)
    : grid(std::move(g)), w(std::move(values)) {
    if (!grid) throw InvalidArgument("surface without grid");
    if (w.size() != grid->d()) {
        throw GridMismatch("surface has " + std::to_string(w.size()) + " values, grid expects " +
                           std::to_string(grid->d()));
    }
    for (double x : w) {
        if (!std::isfinite(x)) throw InvalidArgument("surface contains a non-finite value");
    }
}

ImpliedVolSurface::ImpliedVolSurface(GridPtr g, std::vector<double> values)
    : grid(std::move(g)), sigma(std::move(values)) {
    if (!grid) throw InvalidArgument("surface without grid");
    if (sigma.size() != grid->d()) throw GridMismatch("implied vol surface size mismatch");
    for (double s : sigma) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("implied vols must be finite and >= 0");
    }
}

TotalVarianceSurface vol_to_total_variance(const ImpliedVolSurface& iv) {
    std::vector<double> w(iv.sigma.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = iv.sigma[i] * iv.sigma[i] * iv.grid->maturity_of(i);
    }
    return {iv.grid, std::move(w)};
}

ImpliedVolSurface total_variance_to_vol(const TotalVarianceSurface& tv) {
    std::vector<double> sigma(tv.w.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (tv.w[i] < 0.0) {
            throw NegativeVariance("total variance " + format_double(tv.w[i]) + " at index " +
                                   std::to_string(i));
        }
        sigma[i] = std::sqrt(tv.w[i] / tv.grid->maturity_of(i));
    }
    return {tv.grid, std::move(sigma)};
}

bool same_grid(const SurfaceGrid& a, const SurfaceGrid& b) { return &a == &b || a == b; }

void write_surface_csv(const std::filesystem::path& path, const TotalVarianceSurface& s) {
    std::ostringstream out;
    out << "maturity,log_moneyness,total_variance\n";
    for (std::size_t i = 0; i < s.w.size(); ++i) {
        out << format_double(s.grid->maturity_of(i)) << ',' << format_double(s.grid->log_moneyness_of(i))
            << ',' << format_double(s.w[i]) << '\n';
    }
    write_text_file(path, out.str());
}

TotalVarianceSurface read_surface_csv(const std::filesystem::path& path, const GridPtr& grid) {
    const auto rows = read_csv(path);
    if (rows.empty() || rows.front() != std::vector<std::string>{"maturity", "log_moneyness", "total_variance"}) {
        throw FormatError(path.string() + ": bad surface header");
    }
    if (rows.size() - 1 != grid->d()) {
        throw GridMismatch(path.string() + ": expected " + std::to_string(grid->d()) + " rows");
    }
    std::vector<double> w(grid->d());
    for (std::size_t i = 0; i < grid->d(); ++i) {
        const auto& row = rows[i + 1];
        if (row.size() != 3) throw FormatError(path.string() + ": row with wrong column count");
        const double t = parse_double(row[0]);
        const double k = parse_double(row[1]);
        if (std::abs(t - grid->maturity_of(i)) > 1e-12 || std::abs(k - grid->log_moneyness_of(i)) > 1e-12) {
            throw GridMismatch(path.string() + ": row " + std::to_string(i + 1) + " does not match the grid");
        }
        w[i] = parse_double(row[2]);
    }
    return {grid, std::move(w)};
}

} // namespace volaxiom
