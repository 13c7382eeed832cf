#include "volaxiom/law_manifold.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace volaxiom {

double ConstraintRow::evaluate(const std::vector<double>& w) const {
    double acc = 0.0;
    for (const auto& [i, c] : terms) acc += c * w[i];
    return acc - rhs;
}

double ConstraintRow::squared_norm() const {
    double acc = 0.0;
    for (const auto& [i, c] : terms) acc += c * c;
    return acc;
}

LawManifold::LawManifold(GridPtr grid, double w_min, double w_max)
    : grid_(std::move(grid)), w_min_(w_min), w_max_(w_max) {
    if (!grid_) throw InvalidArgument("manifold without grid");
    if (!(w_min >= 0.0) || !(w_min < w_max) || !std::isfinite(w_max)) {
        throw InvalidBounds("need 0 <= w_min < w_max < inf, got w_min=" + format_double(w_min) +
                            " w_max=" + format_double(w_max));
    }
    if (!grid_->equally_spaced_strikes()) {
        throw InvalidArgument("butterfly stencil requires equally spaced log-moneyness");
    }
    const std::size_t n_t = grid_->n_t();
    const std::size_t n_k = grid_->n_k();
    for (std::size_t j = 0; j < n_t; ++j) {
        for (std::size_t i = 1; i + 1 < n_k; ++i) {
            rows_.push_back({RowKind::butterfly,
                             {{grid_->index(i - 1, j), -1.0}, {grid_->index(i, j), 2.0}, {grid_->index(i + 1, j), -1.0}},
                             0.0});
        }
    }
    n_butterfly_ = rows_.size();
    for (std::size_t j = 0; j + 1 < n_t; ++j) {
        for (std::size_t i = 0; i < n_k; ++i) {
            rows_.push_back({RowKind::calendar, {{grid_->index(i, j), 1.0}, {grid_->index(i, j + 1), -1.0}}, 0.0});
        }
    }

    // Non-emptiness witness: the flat midpoint surface.
    const TotalVarianceSurface mid(grid_, std::vector<double>(grid_->d(), 0.5 * (w_min_ + w_max_)));
    if (!check(mid, 0.0).feasible) throw InvalidBounds("midpoint surface is not feasible");
}

void LawManifold::require_grid(const TotalVarianceSurface& w) const {
    if (!w.grid || !same_grid(*w.grid, *grid_) || w.w.size() != grid_->d()) {
        throw GridMismatch("surface grid does not match the manifold grid");
    }
}

FeasibilityReport LawManifold::check(const TotalVarianceSurface& w, double tol) const {
    require_grid(w);
    FeasibilityReport rep;
    rep.worst_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        const double v = rows_[r].evaluate(w.w);
        if (v > rep.worst_violation) {
            rep.worst_violation = v;
            rep.worst_row = static_cast<long>(r);
        }
    }
    for (std::size_t i = 0; i < w.w.size(); ++i) {
        const double excess = std::max(w_min_ - w.w[i], w.w[i] - w_max_);
        if (excess > rep.worst_violation) {
            rep.worst_violation = excess;
            rep.worst_row = -1;
            rep.worst_description = "box bound at index " + std::to_string(i);
        }
    }
    if (rep.worst_row >= 0) {
        const auto& row = rows_[static_cast<std::size_t>(rep.worst_row)];
        const std::size_t anchor = row.kind == RowKind::butterfly ? row.terms[1].first : row.terms[0].first;
        rep.worst_description = std::string(row.kind == RowKind::butterfly ? "butterfly" : "calendar") +
                                " row " + std::to_string(rep.worst_row) + " at (T=" +
                                format_double(grid_->maturity_of(anchor)) +
                                ", k=" + format_double(grid_->log_moneyness_of(anchor)) + ")";
    }
    rep.feasible = rep.worst_violation <= tol;
    return rep;
}

double LawManifold::surrogate_penalty(const TotalVarianceSurface& w) const {
    require_grid(w);
    double acc = 0.0;
    for (const auto& row : rows_) {
        const double v = row.evaluate(w.w);
        if (v > 0.0) acc += v * v / (2.0 * row.squared_norm());
    }
    for (double x : w.w) {
        const double lo = w_min_ - x;
        const double hi = x - w_max_;
        if (lo > 0.0) acc += 0.5 * lo * lo;
        if (hi > 0.0) acc += 0.5 * hi * hi;
    }
    return acc;
}

double LawManifold::kkt_residual(const std::vector<double>& w, const std::vector<double>& z,
                                 const std::vector<double>& row_mu, const std::vector<double>& lower_mu,
                                 const std::vector<double>& upper_mu) const {
    const std::size_t n = w.size();
    std::vector<double> grad(n);
    for (std::size_t i = 0; i < n; ++i) grad[i] = z[i] - w[i] + upper_mu[i] - lower_mu[i];
    double res = 0.0;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        for (const auto& [i, c] : rows_[r].terms) grad[i] += row_mu[r] * c;
        const double slack = rows_[r].evaluate(z);
        res = std::max({res, slack, -row_mu[r], row_mu[r] * std::abs(slack)});
    }
    for (std::size_t i = 0; i < n; ++i) {
        res = std::max({res, std::abs(grad[i]), w_min_ - z[i], z[i] - w_max_, -lower_mu[i], -upper_mu[i],
                        lower_mu[i] * std::abs(z[i] - w_min_), upper_mu[i] * std::abs(w_max_ - z[i])});
    }
    return res;
}

namespace {

// Dual active-set method of Goldfarb and Idnani for
//   min 0.5 |x - w|^2  s.t.  N^T x + c0 >= 0,
// specialised to an identity Hessian, so the initial J is the identity and the
// unconstrained minimiser is w itself. J and R keep N_active = J[:, :q] R.
class IdentityHessianQp {
public:
    IdentityHessianQp(const Eigen::MatrixXd& normals, const Eigen::VectorXd& c0)
        : N_(normals), c0_(c0), n_(normals.rows()), m_(normals.cols()) {}

    struct Outcome {
        Eigen::VectorXd x;
        std::vector<int> active;
        std::vector<double> u;
        int iterations = 0;
        bool finished = false;
    };

    Outcome solve(const Eigen::VectorXd& w, int max_iterations) {
        J_ = Eigen::MatrixXd::Identity(n_, n_);
        R_ = Eigen::MatrixXd::Zero(n_, n_);
        active_.clear();
        u_.clear();
        Eigen::VectorXd x = w;
        std::vector<char> in_active(m_, 0);
        std::vector<char> excluded(m_, 0);
        Outcome out;

        Eigen::VectorXd s(m_), d(n_), z(n_), r(n_);
        Eigen::VectorXd x_old;
        std::vector<int> active_old;
        std::vector<double> u_old;

        bool recompute_slack = true;
        while (true) {
            if (recompute_slack) {
                if (++out.iterations > max_iterations) break;
                s.noalias() = N_.transpose() * x + c0_;
                std::fill(excluded.begin(), excluded.end(), 0);
                x_old = x;
                active_old = active_;
                u_old = u_;
            }
            recompute_slack = true;

            int p = -1;
            double most = -violation_floor;
            for (int i = 0; i < m_; ++i) {
                if (!in_active[i] && !excluded[i] && s(i) < most) {
                    most = s(i);
                    p = i;
                }
            }
            if (p < 0) {
                out.finished = true;
                break;
            }
            const Eigen::VectorXd np = N_.col(p);
            double s_p = s(p);
            double u_new = 0.0;

            while (true) {
                const int q = static_cast<int>(active_.size());
                d.noalias() = J_.transpose() * np;
                z.noalias() = J_.rightCols(n_ - q) * d.tail(n_ - q);
                if (q > 0) {
                    r.head(q) = R_.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));
                }
                double t1 = std::numeric_limits<double>::infinity();
                int drop = -1;
                for (int k = 0; k < q; ++k) {
                    if (r(k) > 0.0) {
                        const double ratio = u_[k] / r(k);
                        if (ratio < t1) {
                            t1 = ratio;
                            drop = k;
                        }
                    }
                }
                double t2 = std::numeric_limits<double>::infinity();
                if (z.squaredNorm() > std::numeric_limits<double>::epsilon()) t2 = -s_p / z.dot(np);
                const double t = std::min(t1, t2);
                if (!std::isfinite(t)) {
                    throw ProjectionFailure("constraint system reported infeasible");
                }
                for (int k = 0; k < q; ++k) u_[k] -= t * r(k);
                u_new += t;
                if (!std::isfinite(t2)) {
                    in_active[active_[drop]] = 0;
                    remove_active(drop);
                    continue;
                }
                x += t * z;
                if (t2 <= t1) {
                    if (!append_active(d)) {
                        // Numerically dependent constraint: roll back this pair and skip p.
                        x = x_old;
                        active_ = active_old;
                        u_ = u_old;
                        std::fill(in_active.begin(), in_active.end(), 0);
                        for (int a : active_) in_active[a] = 1;
                        refactor();
                        excluded[p] = 1;
                        recompute_slack = false;
                        break;
                    }
                    active_.push_back(p);
                    u_.push_back(u_new);
                    in_active[p] = 1;
                    break;
                }
                in_active[active_[drop]] = 0;
                remove_active(drop);
                s_p = np.dot(x) + c0_(p);
            }
        }
        out.x = x;
        out.active = active_;
        out.u = u_;
        return out;
    }

    static constexpr double violation_floor = 1e-14;

private:
    static void givens(double a, double b, double& c, double& s, double& h) {
        h = std::hypot(a, b);
        c = a / h;
        s = b / h;
    }

    // Rotates d so that d(q+1..n-1) vanish, applying the rotations to J, then
    // stores d(0..q) as column q of R.
    bool append_active(Eigen::VectorXd& d) {
        const int q = static_cast<int>(active_.size());
        for (int j = static_cast<int>(n_) - 1; j >= q + 1; --j) {
            if (d(j) == 0.0) continue;
            double c, s, h;
            givens(d(j - 1), d(j), c, s, h);
            d(j - 1) = h;
            d(j) = 0.0;
            for (int k = 0; k < n_; ++k) {
                const double a = J_(k, j - 1);
                const double b = J_(k, j);
                J_(k, j - 1) = c * a + s * b;
                J_(k, j) = -s * a + c * b;
            }
        }
        R_.col(q).head(q + 1) = d.head(q + 1);
        if (q + 1 > n_ || std::abs(d(q)) <= 1e-12 * std::max(1.0, R_norm_)) {
            R_.col(q).setZero();
            return false;
        }
        R_norm_ = std::max(R_norm_, std::abs(d(q)));
        return true;
    }

    void remove_active(int pos) {
        const int q = static_cast<int>(active_.size());
        for (int k = pos; k < q - 1; ++k) R_.col(k) = R_.col(k + 1);
        R_.col(q - 1).setZero();
        active_.erase(active_.begin() + pos);
        u_.erase(u_.begin() + pos);
        // R is now upper Hessenberg from column pos; restore triangularity.
        for (int j = pos; j < q - 1; ++j) {
            const double a0 = R_(j, j);
            const double b0 = R_(j + 1, j);
            if (b0 == 0.0) continue;
            double c, s, h;
            givens(a0, b0, c, s, h);
            for (int k = j; k < q - 1; ++k) {
                const double a = R_(j, k);
                const double b = R_(j + 1, k);
                R_(j, k) = c * a + s * b;
                R_(j + 1, k) = -s * a + c * b;
            }
            R_(j + 1, j) = 0.0;
            for (int k = 0; k < n_; ++k) {
                const double a = J_(k, j);
                const double b = J_(k, j + 1);
                J_(k, j) = c * a + s * b;
                J_(k, j + 1) = -s * a + c * b;
            }
        }
    }

    void refactor() {
        const int q = static_cast<int>(active_.size());
        R_.setZero();
        if (q == 0) {
            J_.setIdentity();
            return;
        }
        Eigen::MatrixXd na(n_, q);
        for (int k = 0; k < q; ++k) na.col(k) = N_.col(active_[k]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(na);
        J_ = qr.householderQ() * Eigen::MatrixXd::Identity(n_, n_);
        R_.topLeftCorner(q, q) = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
    }

    const Eigen::MatrixXd& N_;
    const Eigen::VectorXd& c0_;
    Eigen::Index n_;
    int m_;
    Eigen::MatrixXd J_;
    Eigen::MatrixXd R_;
    double R_norm_ = 1.0;
    std::vector<int> active_;
    std::vector<double> u_;
};

} // namespace

ProjectionResult LawManifold::project(const TotalVarianceSurface& w, const ProjectionOptions& opts) const {
    require_grid(w);
    ProjectionResult res = opts.method == ProjectionMethod::dykstra ? project_dykstra(w, opts)
                                                                    : project_active_set(w, opts);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.w.size(); ++i) {
        const double diff = w.w[i] - res.projected.w[i];
        acc += diff * diff;
    }
    res.distance = std::sqrt(acc);
    res.penalty = 0.5 * acc;
    return res;
}

ProjectionResult LawManifold::project_active_set(const TotalVarianceSurface& w,
                                                 const ProjectionOptions& opts) const {
    const auto n = static_cast<Eigen::Index>(grid_->d());
    const auto n_rows = static_cast<Eigen::Index>(rows_.size());
    const Eigen::Index m = n_rows + 2 * n;
    Eigen::MatrixXd normals = Eigen::MatrixXd::Zero(n, m);
    Eigen::VectorXd c0(m);
    for (Eigen::Index r = 0; r < n_rows; ++r) {
        for (const auto& [i, c] : rows_[static_cast<std::size_t>(r)].terms) {
            normals(static_cast<Eigen::Index>(i), r) = -c;
        }
        c0(r) = rows_[static_cast<std::size_t>(r)].rhs;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        normals(i, n_rows + i) = 1.0; // w_i - w_min >= 0
        c0(n_rows + i) = -w_min_;
        normals(i, n_rows + n + i) = -1.0; // w_max - w_i >= 0
        c0(n_rows + n + i) = w_max_;
    }

    const Eigen::VectorXd w0 = Eigen::Map<const Eigen::VectorXd>(w.w.data(), n);
    IdentityHessianQp qp(normals, c0);
    const auto out = qp.solve(w0, opts.max_iterations);

    std::vector<double> row_mu(rows_.size(), 0.0);
    std::vector<double> lower(grid_->d(), 0.0);
    std::vector<double> upper(grid_->d(), 0.0);
    for (std::size_t k = 0; k < out.active.size(); ++k) {
        const Eigen::Index c = out.active[k];
        if (c < n_rows) {
            row_mu[static_cast<std::size_t>(c)] = out.u[k];
        } else if (c < n_rows + n) {
            lower[static_cast<std::size_t>(c - n_rows)] = out.u[k];
        } else {
            upper[static_cast<std::size_t>(c - n_rows - n)] = out.u[k];
        }
    }
    std::vector<double> z(out.x.data(), out.x.data() + n);
    ProjectionResult res;
    res.iterations = out.iterations;
    res.kkt_residual = kkt_residual(w.w, z, row_mu, lower, upper);
    res.projected = TotalVarianceSurface(grid_, std::move(z));
    res.converged = out.finished && res.kkt_residual <= opts.tol_opt;
    return res;
}

ProjectionResult LawManifold::project_dykstra(const TotalVarianceSurface& w, const ProjectionOptions& opts) const {
    const std::size_t n = grid_->d();
    std::vector<double> x = w.w;
    std::vector<double> coef(rows_.size(), 0.0);
    std::vector<double> box(n, 0.0);
    std::vector<double> norms(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) norms[r] = rows_[r].squared_norm();

    ProjectionResult res;
    std::vector<double> prev(n);
    std::vector<double> row_mu(rows_.size()), lower(n), upper(n);
    for (int sweep = 1; sweep <= opts.max_iterations; ++sweep) {
        prev = x;
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto& row = rows_[r];
            // v = x + coef * a; project v onto {a . v <= rhs}.
            double av = 0.0;
            for (const auto& [i, c] : row.terms) av += c * (x[i] + coef[r] * c);
            const double viol = av - row.rhs;
            const double next = viol > 0.0 ? viol / norms[r] : 0.0;
            const double shift = coef[r] - next;
            for (const auto& [i, c] : row.terms) x[i] += shift * c;
            coef[r] = next;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double v = x[i] + box[i];
            x[i] = std::clamp(v, w_min_, w_max_);
            box[i] = v - x[i];
        }
        res.iterations = sweep;
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(x[i] - prev[i]));
        if (change <= 0.1 * opts.tol_opt || sweep == opts.max_iterations) {
            row_mu = coef;
            for (std::size_t i = 0; i < n; ++i) {
                upper[i] = std::max(box[i], 0.0);
                lower[i] = std::max(-box[i], 0.0);
            }
            res.kkt_residual = kkt_residual(w.w, x, row_mu, lower, upper);
            if (res.kkt_residual <= opts.tol_opt) {
                res.converged = true;
                break;
            }
        }
    }
    res.projected = TotalVarianceSurface(grid_, std::move(x));
    return res;
}

double LawManifold::law_penalty(const TotalVarianceSurface& w, const ProjectionOptions& opts) const {
    const auto res = project(w, opts);
    if (!res.converged) {
        throw MaxIterationsExceeded("projection did not reach KKT residual " + format_double(opts.tol_opt) +
                                    " (got " + format_double(res.kkt_residual) + ")");
    }
    return res.penalty;
}

std::string LawManifold::to_json() const {
    nlohmann::json j;
    j["schema"] = "volaxiom.constraints/1";
    j["maturities"] = grid_->maturities();
    j["log_moneyness"] = grid_->log_moneyness();
    j["w_min"] = w_min_;
    j["w_max"] = w_max_;
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& row : rows_) {
        nlohmann::json r;
        r["kind"] = row.kind == RowKind::butterfly ? "butterfly" : "calendar";
        std::vector<std::size_t> idx;
        std::vector<double> coef;
        for (const auto& [i, c] : row.terms) {
            idx.push_back(i);
            coef.push_back(c);
        }
        r["indices"] = idx;
        r["coefficients"] = coef;
        r["rhs"] = row.rhs;
        rows.push_back(std::move(r));
    }
    return j.dump(2);
}

double law_coverage(const std::vector<double>& penalties, double threshold) {
    if (penalties.empty()) throw EmptyInput("law_coverage on an empty list");
    if (!(threshold > 0.0)) throw InvalidArgument("coverage threshold must be positive");
    const auto below = std::count_if(penalties.begin(), penalties.end(), [&](double p) { return p < threshold; });
    return static_cast<double>(below) / static_cast<double>(penalties.size());
}

} // namespace volaxiom
