#include "volaxiom/metrics.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace volaxiom {

std::string to_string(PenaltyKind k) { return k == PenaltyKind::exact ? "exact" : "surrogate"; }

PenaltyKind parse_penalty_kind(const std::string& s) {
    if (s == "exact") return PenaltyKind::exact;
    if (s == "surrogate") return PenaltyKind::surrogate;
    throw ConfigParse("unknown penalty kind '" + s + "'");
}

EpisodeSeries series_of(const EpisodeRecord& ep, PenaltyKind kind) {
    if (kind == PenaltyKind::exact && !ep.decomposed)
        throw InconsistentPenaltyKind("exact penalties requested from an episode recorded without projection");
    EpisodeSeries s;
    for (const auto& step : ep.steps) {
        s.pnl.push_back(step.pnl);
        s.law_pen.push_back(kind == PenaltyKind::exact ? step.law_pen_exact : step.law_pen);
    }
    return s;
}

namespace {

std::size_t tail_rank(std::size_t n, double alpha) {
    const auto r = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-12));
    return std::clamp<std::size_t>(r, 1, n);
}

} // namespace

double value_at_risk(std::vector<double> pnl, double alpha) {
    if (pnl.empty()) throw EmptyInput("value_at_risk of an empty sample");
    const std::size_t r = tail_rank(pnl.size(), alpha);
    std::nth_element(pnl.begin(), pnl.begin() + static_cast<std::ptrdiff_t>(r - 1), pnl.end());
    return pnl[r - 1];
}

double conditional_value_at_risk(const std::vector<double>& pnl, double alpha) {
    const double var = value_at_risk(pnl, alpha);
    std::vector<double> sorted = pnl;
    std::sort(sorted.begin(), sorted.end()); // ascending summation: independent of input order
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : sorted) {
        if (x > var) break;
        sum += x;
        ++n;
    }
    return sum / static_cast<double>(n);
}

MetricsReport compute_metrics(const std::vector<EpisodeSeries>& episodes, const std::vector<double>& thresholds,
                              PenaltyKind kind) {
    if (episodes.empty()) throw EmptyInput("compute_metrics needs at least one episode");
    std::vector<double> pnl, pen;
    std::size_t n_eps = 0;
    for (const auto& ep : episodes) {
        if (ep.pnl.size() != ep.law_pen.size()) throw InvalidArgument("episode pnl and penalty series differ in length");
        if (ep.pnl.empty()) continue;
        pnl.insert(pnl.end(), ep.pnl.begin(), ep.pnl.end());
        pen.insert(pen.end(), ep.law_pen.begin(), ep.law_pen.end());
        ++n_eps;
    }
    if (pnl.empty()) throw EmptyInput("compute_metrics needs at least one step");

    // Sorted copies make the sums independent of episode and step order.
    std::vector<double> sp = pnl, sl = pen;
    std::sort(sp.begin(), sp.end());
    std::sort(sl.begin(), sl.end());
    const auto n = static_cast<double>(sp.size());
    MetricsReport r;
    r.penalty_kind = kind;
    r.n_steps = sp.size();
    double sum = 0.0;
    for (double x : sp) sum += x;
    r.mean_pnl = sum / n;
    double ss = 0.0;
    for (double x : sp) ss += (x - r.mean_pnl) * (x - r.mean_pnl);
    r.std_pnl = std::sqrt(ss / n);
    r.sharpe = r.mean_pnl / (r.std_pnl + sharpe_epsilon);
    double lsum = 0.0;
    for (double x : sl) lsum += x;
    r.mean_law_pen = lsum / n;

    std::vector<double> maxima;
    for (const auto& ep : episodes)
        if (!ep.law_pen.empty()) maxima.push_back(*std::max_element(ep.law_pen.begin(), ep.law_pen.end()));
    std::sort(maxima.begin(), maxima.end());
    double max_sum = 0.0;
    for (double x : maxima) max_sum += x;
    r.max_law_pen = max_sum / static_cast<double>(n_eps);
    r.law_adj_return = r.mean_pnl - r.mean_law_pen;

    for (double tau : thresholds) {
        const auto below = std::lower_bound(sl.begin(), sl.end(), tau) - sl.begin();
        r.coverage.emplace_back(tau, static_cast<double>(below) / n);
    }
    const std::size_t rank = tail_rank(sp.size(), 0.05);
    r.var5 = sp[rank - 1];
    double tail = 0.0;
    std::size_t k = 0;
    for (; k < sp.size() && sp[k] <= r.var5; ++k) tail += sp[k];
    r.cvar5 = tail / static_cast<double>(k);
    return r;
}

MetricsReport compute_metrics(const std::vector<EpisodeRecord>& episodes, const std::vector<double>& thresholds,
                              PenaltyKind kind) {
    if (episodes.empty()) throw EmptyInput("compute_metrics needs at least one episode");
    std::vector<EpisodeSeries> series;
    series.reserve(episodes.size());
    for (const auto& ep : episodes) series.push_back(series_of(ep, kind));
    auto r = compute_metrics(series, thresholds, kind);
    r.regime = episodes.front().regime;
    return r;
}

GFIReport compute_gfi(const MetricsReport& base, const MetricsReport& shock, const MetricsReport& ref_base,
                      const MetricsReport& ref_shock, double intensity, const GfiOptions& opt) {
    const auto kind = base.penalty_kind;
    if (shock.penalty_kind != kind || ref_base.penalty_kind != kind || ref_shock.penalty_kind != kind)
        throw InconsistentPenaltyKind("GFI inputs mix exact and surrogate penalties");
    GFIReport g;
    g.policy_id = base.policy_id;
    g.ref_policy_id = ref_base.policy_id;
    g.delta_law = shock.mean_law_pen - base.mean_law_pen;
    g.delta_ref = ref_shock.mean_law_pen - ref_base.mean_law_pen;
    g.intensity_used = intensity;
    if (opt.form == GfiForm::ratio) {
        g.gfi = g.delta_law / (g.delta_ref + opt.ratio_epsilon);
    } else {
        if (!(intensity > 0.0)) throw InvalidArgument("shock intensity must be positive");
        if (!(opt.scale > 0.0)) throw InvalidArgument("GFI scale must be positive");
        g.gfi = ((g.delta_law - g.delta_ref) / intensity) / opt.scale;
    }
    if (!std::isfinite(g.gfi)) throw InvalidArgument("GFI is not finite");
    return g;
}

FrontierPoint frontier_point(const MetricsReport& baseline, double gfi, std::optional<double> lambda) {
    FrontierPoint p;
    p.policy_id = baseline.policy_id;
    p.lambda = lambda;
    p.coords = {baseline.mean_law_pen, gfi, baseline.mean_pnl, baseline.var5, baseline.cvar5};
    return p;
}

bool dominates(const std::array<double, 5>& a, const std::array<double, 5>& b) {
    bool strict = false;
    for (std::size_t i = 0; i < 5; ++i) {
        const bool lower_better = i < 2;
        const double better = lower_better ? b[i] - a[i] : a[i] - b[i];
        if (better < 0.0) return false;
        if (better > 0.0) strict = true;
    }
    return strict;
}

void pareto_frontier(std::vector<FrontierPoint>& points) {
    for (auto& p : points) {
        for (const auto& c : p.coords)
            if (!std::isfinite(c)) throw InvalidArgument("frontier coordinates must be finite");
        p.dominated = false;
    }
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.size() && !points[i].dominated; ++j)
            if (j != i && dominates(points[j].coords, points[i].coords)) points[i].dominated = true;
}

std::vector<PenaltyBand> penalty_bands(const std::vector<MetricsReport>& reports, const std::vector<double>& edges) {
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw InvalidArgument("band edges must be strictly increasing");
    std::vector<PenaltyBand> bands;
    for (std::size_t i = 1; i < edges.size(); ++i) bands.push_back({edges[i - 1], edges[i], {}});
    for (const auto& r : reports)
        for (auto& b : bands)
            if (r.mean_law_pen >= b.lower && r.mean_law_pen < b.upper) b.members.push_back(r);
    return bands;
}

LambdaSweep lambda_sweep_table(const std::map<double, std::pair<MetricsReport, MetricsReport>>& results) {
    if (results.size() < 2) throw InvalidArgument("a lambda sweep needs at least two lambda values");
    LambdaSweep s;
    for (const auto& [lambda, pair] : results) {
        s.lambdas.push_back(lambda);
        s.baseline.push_back(pair.first);
        s.shock.push_back(pair.second);
    }
    for (std::size_t i = 0; i < s.lambdas.size(); ++i) {
        for (std::size_t j = i + 1; j < s.lambdas.size(); ++j) {
            MonotonicityViolation v{s.lambdas[i], s.lambdas[j],
                                    s.baseline[j].mean_law_pen > s.baseline[i].mean_law_pen,
                                    s.baseline[j].mean_pnl > s.baseline[i].mean_pnl};
            if (v.penalty_increased || v.pnl_increased) s.violations.push_back(v);
        }
    }
    return s;
}

namespace {

std::string optional_number(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

void metrics_row(std::ostream& out, const MetricsReport& r) {
    out << r.policy_id << ',' << to_string(r.regime) << ',' << format_double(r.mean_pnl) << ','
        << format_double(r.std_pnl) << ',' << format_double(r.sharpe) << ',' << format_double(r.mean_law_pen) << ','
        << format_double(r.max_law_pen) << ',' << format_double(r.law_adj_return) << ',' << optional_number(r.gfi);
    for (const auto& c : r.coverage) out << ',' << format_double(c.second);
    out << ',' << format_double(r.var5) << ',' << format_double(r.cvar5) << '\n';
}

std::string metrics_header(const std::vector<MetricsReport>& reports) {
    std::string h = "policy,regime,mean_pnl,std_pnl,sharpe,mean_law_pen,max_law_pen,law_adj_ret,gfi";
    if (!reports.empty())
        for (const auto& c : reports.front().coverage) h += ",cov_" + format_double(c.first);
    return h + ",var5,cvar5\n";
}

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    std::string s = buf;
    if (s.find_first_not_of("-0.") == std::string::npos) s = s.substr(s[0] == '-' ? 1 : 0);
    return s;
}

} // namespace

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    out << metrics_header(reports);
    for (const auto& r : reports) {
        if (!reports.empty() && r.coverage.size() != reports.front().coverage.size())
            throw InvalidArgument("metrics rows use different coverage thresholds");
        metrics_row(out, r);
    }
    return out.str();
}

std::string frontier_csv(const std::vector<FrontierPoint>& points) {
    std::ostringstream out;
    out << "policy,lambda,mean_law_pen,gfi,mean_pnl,var5,cvar5,on_frontier\n";
    for (const auto& p : points) {
        out << p.policy_id << ',' << optional_number(p.lambda);
        for (double c : p.coords) out << ',' << format_double(c);
        out << ',' << (p.dominated ? 0 : 1) << '\n';
    }
    return out.str();
}

std::string lambda_sweep_csv(const LambdaSweep& sweep) {
    std::ostringstream out;
    out << "lambda," << metrics_header(sweep.baseline);
    for (std::size_t i = 0; i < sweep.lambdas.size(); ++i) {
        for (const auto* r : {&sweep.baseline[i], &sweep.shock[i]}) {
            out << format_double(sweep.lambdas[i]) << ',';
            metrics_row(out, *r);
        }
    }
    out << "\n# monotonicity violations: lambda_low,lambda_high,penalty_increased,pnl_increased\n";
    for (const auto& v : sweep.violations)
        out << "# " << format_double(v.lambda_low) << ',' << format_double(v.lambda_high) << ','
            << (v.penalty_increased ? 1 : 0) << ',' << (v.pnl_increased ? 1 : 0) << '\n';
    return out.str();
}

std::string band_csv(const std::vector<PenaltyBand>& bands) {
    std::ostringstream out;
    out << "band_lower,band_upper,policy,regime,mean_law_pen,sharpe,gfi,var5,cvar5\n";
    for (const auto& b : bands)
        for (const auto& r : b.members)
            out << format_double(b.lower) << ',' << format_double(b.upper) << ',' << r.policy_id << ','
                << to_string(r.regime) << ',' << format_double(r.mean_law_pen) << ',' << format_double(r.sharpe) << ','
                << optional_number(r.gfi) << ',' << format_double(r.var5) << ',' << format_double(r.cvar5) << '\n';
    return out.str();
}

std::string scatter_csv(const std::vector<ScatterRow>& rows) {
    std::ostringstream out;
    out << "policy,t,pnl,law_pen\n";
    for (const auto& r : rows)
        out << r.policy_id << ',' << r.t << ',' << format_double(r.pnl) << ',' << format_double(r.law_pen) << '\n';
    return out.str();
}

std::string metrics_markdown(const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    std::string cov = "Cov";
    if (!reports.empty() && !reports.front().coverage.empty())
        cov += "<" + format_double(reports.front().coverage.back().first);
    out << "| Strategy | Regime | Mean PnL | Std PnL | Sharpe | Mean Pen. | GFI | " << cov << " | VaR5 | CVaR5 |\n";
    out << "|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& r : reports) {
        out << "| " << r.policy_id << " | " << to_string(r.regime) << " | " << fixed(r.mean_pnl, 4) << " | "
            << fixed(r.std_pnl, 4) << " | " << fixed(r.sharpe, 2) << " | " << fixed(r.mean_law_pen, 5) << " | "
            << (r.gfi ? fixed(*r.gfi, 2) : std::string("-")) << " | "
            << (r.coverage.empty() ? std::string("-") : fixed(r.coverage.back().second, 2)) << " | "
            << fixed(r.var5, 4) << " | " << fixed(r.cvar5, 4) << " |\n";
    }
    return out.str();
}

} // namespace volaxiom
