#pragma once

#include "volaxiom/grid.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace volaxiom {

enum class RowKind { butterfly, calendar };

// Sparse linear inequality a . w <= rhs.
struct ConstraintRow {
    RowKind kind;
    std::vector<std::pair<std::size_t, double>> terms;
    double rhs = 0.0;

    double evaluate(const std::vector<double>& w) const;
    double squared_norm() const;
};

struct FeasibilityReport {
    bool feasible = true;
    // Largest value of (a . w - rhs), or of a box excess, over all constraints.
    // Positive means violated.
    double worst_violation = 0.0;
    // Index into LawManifold::rows(), or -1 when the worst offender is a box bound.
    long worst_row = -1;
    std::string worst_description;
};

enum class ProjectionMethod { active_set, dykstra };

struct ProjectionOptions {
    double tol_feas = 1e-8;
    double tol_opt = 1e-9;
    int max_iterations = 10000;
    ProjectionMethod method = ProjectionMethod::active_set;
};

struct ProjectionResult {
    TotalVarianceSurface projected;
    double distance = 0.0;
    double penalty = 0.0; // 0.5 * distance^2
    int iterations = 0;
    bool converged = false;
    double kkt_residual = 0.0;
};

// Polyhedron of discretised no-arbitrage total-variance surfaces:
//   butterfly  -w[i-1,j] + 2 w[i,j] - w[i+1,j] <= 0   (convex in k)
//   calendar    w[i,j] - w[i,j+1]               <= 0   (nondecreasing in T)
//   box         w_min <= w <= w_max
// Immutable once built.
class LawManifold {
public:
    static constexpr double default_w_min = 1e-6;
    static constexpr double default_w_max = 4.0;

    /// Throws InvalidBounds unless 0 <= w_min < w_max, and InvalidArgument
    /// for unequally spaced log-moneyness (the (-1, 2, -1) stencil needs it).
    LawManifold(GridPtr grid, double w_min = default_w_min, double w_max = default_w_max);

    const GridPtr& grid() const { return grid_; }
    const std::vector<ConstraintRow>& rows() const { return rows_; }
    double w_min() const { return w_min_; }
    double w_max() const { return w_max_; }
    std::size_t butterfly_count() const { return n_butterfly_; }
    std::size_t calendar_count() const { return rows_.size() - n_butterfly_; }

    FeasibilityReport check(const TotalVarianceSurface& w, double tol) const;
    bool is_feasible(const TotalVarianceSurface& w, double tol) const { return check(w, tol).feasible; }

    ProjectionResult project(const TotalVarianceSurface& w, const ProjectionOptions& opts = {}) const;

    // 0.5 * dist(w, M)^2. Throws MaxIterationsExceeded if the projection did not converge.
    double law_penalty(const TotalVarianceSurface& w, const ProjectionOptions& opts = {}) const;

    // Sum of squared hinge violations, each scaled by 1 / (2 |a|^2); box rows likewise.
    double surrogate_penalty(const TotalVarianceSurface& w) const;

    // max |z - w + A^T mu|, primal infeasibility, complementarity, dual sign.
    double kkt_residual(const std::vector<double>& w, const std::vector<double>& z,
                        const std::vector<double>& row_multipliers,
                        const std::vector<double>& lower_multipliers,
                        const std::vector<double>& upper_multipliers) const;

    std::string to_json() const;

private:
    void require_grid(const TotalVarianceSurface& w) const;
    ProjectionResult project_active_set(const TotalVarianceSurface& w, const ProjectionOptions& opts) const;
    ProjectionResult project_dykstra(const TotalVarianceSurface& w, const ProjectionOptions& opts) const;

    GridPtr grid_;
    std::vector<ConstraintRow> rows_;
    std::size_t n_butterfly_ = 0;
    double w_min_;
    double w_max_;
};

/// Fraction of penalties strictly below threshold. Throws EmptyInput on an
/// empty list, InvalidArgument for threshold <= 0.
double law_coverage(const std::vector<double>& penalties, double threshold);

} // namespace volaxiom
