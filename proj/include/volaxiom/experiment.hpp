#pragma once

#include "volaxiom/agents.hpp"
#include "volaxiom/generator.hpp"
#include "volaxiom/grid.hpp"
#include "volaxiom/market_env.hpp"
#include "volaxiom/metrics.hpp"
#include "volaxiom/ppo.hpp"
#include "volaxiom/world_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace volaxiom {

struct DatasetConfig {
    int n_trajectories = 200;
    int horizon = 32;
};

struct ExperimentConfig {
    GridPreset grid = GridPreset::standard;
    GeneratorParams generator;
    ShockSpec shock;
    DatasetConfig dataset;
    WorldModelConfig world_model;
    EnvConfig env;
    std::vector<double> lambda_grid = {0.0, 5.0, 10.0, 20.0, 40.0};
    PPOConfig ppo;
    SelectionCriterion selection;
    BaselineParams baselines;
    int eval_episodes = 50;
    std::vector<double> coverage_thresholds = {0.003, 0.006};
    std::vector<double> band_edges = {0.0053, 0.0057};
    GfiOptions gfi;
    std::string output_dir = "runs/default";
    std::uint64_t master_seed = 20240917;

    /// Throws InvalidArgument / ConfigParse.
    void validate() const;

    // A 2x3 grid and a few updates: the whole pipeline in seconds.
    static ExperimentConfig tiny();
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw ConfigParse.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_default_config();
std::string config_hash(const ExperimentConfig& cfg);

enum class Variant { naive, soft, selection };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct PolicySpec {
    std::string id;
    Variant variant = Variant::naive;
    double lambda = 0.0;
};

// Every trained policy the config asks for: naive (lambda 0), soft per positive lambda, selection.
std::vector<PolicySpec> learned_policies(const ExperimentConfig& cfg);
std::string policy_id(Variant v, double lambda);
inline const std::vector<std::string>& baseline_ids() {
    static const std::vector<std::string> ids{"zero_hedge", "random_gaussian", "vol_trend"};
    return ids;
}
inline const std::string reference_policy_id = "zero_hedge";

// One run directory. Every stage reads its inputs from disk (MissingArtifact when absent),
// writes its outputs, and records them in manifest.json with content hashes.
class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::filesystem::path run_dir);

    const ExperimentConfig& config() const { return cfg_; }
    const std::filesystem::path& run_dir() const { return dir_; }

    void gen();
    void train_wm();
    void train_rl(Variant v, double lambda);
    void eval(Regime regime);
    void frontier();
    void report();
    void diag();

    /// All stages in order; stages already recorded in the manifest with intact outputs are skipped.
    void run_all();

    std::vector<std::string> completed_stages() const;

    // Per-policy, per-regime evaluation traces as written by eval().
    std::vector<EpisodeRecord> load_eval(const std::string& policy, Regime regime) const;
    std::vector<Trajectory> load_dataset() const;
    WorldModel load_world_model() const;
    std::unique_ptr<Policy> load_policy(const std::string& id) const;
    std::vector<MetricsReport> load_metrics() const;

    std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }

private:
    void record_stage(const std::string& stage, std::uint64_t seed, const std::vector<std::string>& files);
    bool stage_intact(const std::string& stage) const;
    nlohmann::json read_manifest() const;
    void write_manifest(const nlohmann::json& j) const;
    std::filesystem::path require(const std::string& rel) const;

    std::unique_ptr<Policy> make_baseline(const std::string& id) const;
    std::vector<std::vector<TotalVarianceSurface>> init_windows(const std::string& stream, int n, Regime regime) const;
    std::vector<EpisodeRecord> evaluate_policy(Policy& policy, const WorldModel& model,
                                               const std::vector<std::vector<TotalVarianceSurface>>& windows,
                                               Regime regime, const std::string& stream) const;

    ExperimentConfig cfg_;
    std::filesystem::path dir_;
    GridPtr grid_;
    std::unique_ptr<LawManifold> manifold_;
};

} // namespace volaxiom
