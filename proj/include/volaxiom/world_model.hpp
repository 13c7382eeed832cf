#pragma once

#include "volaxiom/generator.hpp"
#include "volaxiom/grid.hpp"
#include "volaxiom/law_manifold.hpp"
#include "volaxiom/nn.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace volaxiom {

enum class WorldModelArch { recurrent, affine_ar };
std::string to_string(WorldModelArch a);
WorldModelArch parse_world_model_arch(const std::string& s);

struct WorldModelConfig {
    int window_len = 12;
    int hidden_dim = 64;
    bool residual = true; // decoder output is added to the last window surface
    double learning_rate = 1e-4;
    int epochs = 40;
    int batch_size = 64;
    WorldModelArch arch = WorldModelArch::recurrent;
    double ridge = 1e-6;
    double val_fraction = 0.2;
    // Keep the epoch with the lowest validation loss (recurrent arch only).
    bool early_stopping = true;
    std::uint64_t seed = 7;
    // When false, a model that loses to persistence is returned instead of rejected (diagnostics only).
    bool require_beats_persistence = true;

    void validate() const;
};

// Windows of L consecutive surfaces paired with the surface that follows.
struct WindowSet {
    std::vector<std::vector<const TotalVarianceSurface*>> windows;
    std::vector<const TotalVarianceSurface*> targets;

    std::size_t size() const { return targets.size(); }
};
WindowSet make_windows(const std::vector<Trajectory>& trajectories, int window_len);

class WorldModel {
public:
    WorldModel(const WorldModelConfig& cfg, GridPtr grid);

    const WorldModelConfig& config() const { return cfg_; }
    const GridPtr& grid() const { return grid_; }

    /// Throws WindowLengthMismatch unless window.size() == L; GridMismatch on a foreign grid.
    TotalVarianceSurface predict(const std::vector<TotalVarianceSurface>& window) const;
    std::vector<double> predict_raw(const std::vector<const std::vector<double>*>& window) const;

    double train_mse = 0.0;
    double val_mse = 0.0;
    double persistence_mse = 0.0;
    std::vector<double> loss_curve; // mean training loss per epoch (standardized units)
    std::vector<double> val_curve;  // validation loss per epoch when early stopping is on
    int best_epoch = 0;             // epoch whose parameters were kept (0 = initialization)

    nlohmann::json to_json() const;
    static WorldModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static WorldModel load(const std::filesystem::path& path);

    // Exposed for training and gradient checks.
    nn::Vector& parameters() { return params_; }
    const nn::Vector& parameters() const { return params_; }
    const nn::GruRegressor& network() const { return gru_; }
    std::vector<double> mean, scale; // per-grid-point standardization

private:
    friend WorldModel train(const std::vector<Trajectory>& dataset, const WorldModelConfig& cfg);

    WorldModelConfig cfg_;
    GridPtr grid_;
    nn::GruRegressor gru_;
    nn::Vector params_; // GRU parameters, or the (d x (d*L + 1)) affine map stored column-major
};

/// 80/20 split by trajectory. Throws InsufficientData, TrainingDegenerate.
WorldModel train(const std::vector<Trajectory>& dataset, const WorldModelConfig& cfg);

// Trajectories [0, n_train) train the model, the rest validate it.
std::size_t train_split(std::size_t n_trajectories, double val_fraction);

struct GhostDiagnostics {
    double mean_pred_penalty = 0.0;
    double max_pred_penalty = 0.0;
    std::vector<double> deltas;
    std::vector<double> frac_offmanifold; // fraction of predictions with penalty > delta
    double mean_residual_sq = 0.0;        // mean ||w_hat - w||^2 per prediction
    double model_mse = 0.0;               // per-entry MSE on the same windows
    double persistence_mse = 0.0;
    std::size_t n_predictions = 0;

    nlohmann::json to_json() const;
};

GhostDiagnostics diagnose(const WorldModel& model, const std::vector<Trajectory>& dataset, const LawManifold& m,
                          const std::vector<double>& deltas);

// Same statistics for externally supplied predictions (persistence_mse left at 0).
GhostDiagnostics summarize_predictions(const std::vector<TotalVarianceSurface>& predicted,
                                       const std::vector<TotalVarianceSurface>& truth, const LawManifold& m,
                                       const std::vector<double>& deltas);

} // namespace volaxiom
