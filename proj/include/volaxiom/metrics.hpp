#pragma once

#include "volaxiom/generator.hpp"
#include "volaxiom/market_env.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace volaxiom {

enum class PenaltyKind { exact, surrogate };
std::string to_string(PenaltyKind k);
PenaltyKind parse_penalty_kind(const std::string& s);

inline constexpr double sharpe_epsilon = 1e-8;

struct MetricsReport {
    std::string policy_id;
    Regime regime = Regime::baseline;
    double mean_pnl = 0.0;
    double std_pnl = 0.0; // population standard deviation over pooled steps
    double sharpe = 0.0;
    double mean_law_pen = 0.0;
    double max_law_pen = 0.0; // mean over episodes of the per-episode maximum
    double law_adj_return = 0.0;
    std::vector<std::pair<double, double>> coverage; // threshold -> fraction of steps with penalty < threshold
    double var5 = 0.0;
    double cvar5 = 0.0;
    std::size_t n_steps = 0;
    PenaltyKind penalty_kind = PenaltyKind::exact;
    std::optional<double> gfi; // filled once a reference policy is known
};

// Per-episode step series; the raw material of compute_metrics.
struct EpisodeSeries {
    std::vector<double> pnl;
    std::vector<double> law_pen;
};

EpisodeSeries series_of(const EpisodeRecord& ep, PenaltyKind kind);

/// Throws EmptyInput when there are no episodes or no steps.
MetricsReport compute_metrics(const std::vector<EpisodeSeries>& episodes, const std::vector<double>& thresholds,
                              PenaltyKind kind = PenaltyKind::exact);
MetricsReport compute_metrics(const std::vector<EpisodeRecord>& episodes, const std::vector<double>& thresholds,
                              PenaltyKind kind = PenaltyKind::exact);

// Lower order statistic at rank ceil(alpha * n) of the signed sample, and the mean at or below it.
double value_at_risk(std::vector<double> pnl, double alpha = 0.05);
double conditional_value_at_risk(const std::vector<double>& pnl, double alpha = 0.05);

enum class GfiForm { reference_subtracted, ratio };

struct GfiOptions {
    GfiForm form = GfiForm::reference_subtracted;
    double scale = 1.0;
    double ratio_epsilon = 1e-8;
};

struct GFIReport {
    std::string policy_id;
    std::string ref_policy_id;
    double delta_law = 0.0;
    double delta_ref = 0.0;
    double gfi = 0.0;
    double intensity_used = 0.0;
};

/// reference_subtracted: ((delta - delta_ref) / intensity) / scale, zero for the reference itself.
/// ratio: delta / (delta_ref + epsilon). Throws InconsistentPenaltyKind.
GFIReport compute_gfi(const MetricsReport& base, const MetricsReport& shock, const MetricsReport& ref_base,
                      const MetricsReport& ref_shock, double intensity, const GfiOptions& opt = {});

// Coordinates: (mean_law_pen, gfi, mean_pnl, var5, cvar5); lower is better for the first two.
struct FrontierPoint {
    std::string policy_id;
    std::optional<double> lambda;
    std::array<double, 5> coords{};
    bool dominated = false;
};

FrontierPoint frontier_point(const MetricsReport& baseline, double gfi, std::optional<double> lambda = std::nullopt);

/// a weakly better on all five coordinates and strictly better on at least one.
bool dominates(const std::array<double, 5>& a, const std::array<double, 5>& b);

/// Marks every point's dominated flag. Identical points never dominate each other.
void pareto_frontier(std::vector<FrontierPoint>& points);

struct PenaltyBand {
    double lower = 0.0;
    double upper = 0.0;
    std::vector<MetricsReport> members;
};

/// Bands are [edge_k, edge_{k+1}); edges must be strictly increasing. Throws InvalidArgument.
std::vector<PenaltyBand> penalty_bands(const std::vector<MetricsReport>& reports, const std::vector<double>& edges);

struct MonotonicityViolation {
    double lambda_low = 0.0;
    double lambda_high = 0.0;
    bool penalty_increased = false;
    bool pnl_increased = false;
};

struct LambdaSweep {
    std::vector<double> lambdas;
    std::vector<MetricsReport> baseline;
    std::vector<MetricsReport> shock;
    std::vector<MonotonicityViolation> violations;
};

/// Flags every pair lambda_i < lambda_j whose baseline penalty or PnL rises with lambda.
/// Throws InvalidArgument with fewer than two lambdas.
LambdaSweep lambda_sweep_table(const std::map<double, std::pair<MetricsReport, MetricsReport>>& results);

std::string metrics_csv(const std::vector<MetricsReport>& reports);
std::string frontier_csv(const std::vector<FrontierPoint>& points);
std::string lambda_sweep_csv(const LambdaSweep& sweep);
std::string band_csv(const std::vector<PenaltyBand>& bands);

struct ScatterRow {
    std::string policy_id;
    std::size_t t = 0;
    double pnl = 0.0;
    double law_pen = 0.0;
};
std::string scatter_csv(const std::vector<ScatterRow>& rows);

// Markdown table with the column set Strategy, Regime, Mean PnL, Std PnL, Sharpe,
// Mean Pen., GFI, Cov<tau (last threshold), VaR5, CVaR5.
std::string metrics_markdown(const std::vector<MetricsReport>& reports);

} // namespace volaxiom
