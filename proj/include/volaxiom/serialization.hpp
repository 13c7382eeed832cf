#pragma once

// JSON bindings for parameter structs. Missing keys keep their defaults.

#include "volaxiom/agents.hpp"
#include "volaxiom/generator.hpp"
#include "volaxiom/grid.hpp"
#include "volaxiom/market_env.hpp"
#include "volaxiom/metrics.hpp"
#include "volaxiom/ppo.hpp"
#include "volaxiom/world_model.hpp"

#include <json.hpp>

namespace volaxiom {

// Enums travel as their names; unknown names throw ConfigParse.
inline void to_json(nlohmann::json& j, WorldModelArch a) { j = to_string(a); }
inline void from_json(const nlohmann::json& j, WorldModelArch& a) { a = parse_world_model_arch(j.get<std::string>()); }
inline void to_json(nlohmann::json& j, GridPreset p) { j = to_string(p); }
inline void from_json(const nlohmann::json& j, GridPreset& p) { p = parse_grid_preset(j.get<std::string>()); }
inline void to_json(nlohmann::json& j, PenaltyKind k) { j = to_string(k); }
inline void from_json(const nlohmann::json& j, PenaltyKind& k) { k = parse_penalty_kind(j.get<std::string>()); }
void to_json(nlohmann::json& j, GfiForm f);
void from_json(const nlohmann::json& j, GfiForm& f);

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GeneratorParams, v0, kappa, theta_bar, xi, smile_a, smile_b, dt,
                                                param_jitter, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ShockSpec, alpha_long, alpha_spot, intensity_override)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WorldModelConfig, window_len, hidden_dim, residual, learning_rate,
                                                epochs, batch_size, arch, ridge, val_fraction, early_stopping, seed,
                                                require_beats_persistence)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnvConfig, episode_len, gamma, lambda_law, n_buckets, a_max,
                                                trade_cost, carry_coeff)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PPOConfig, clip_eps, gae_lambda, gamma, epochs_per_update,
                                                steps_per_update, minibatch_size, lr, hidden, total_updates,
                                                checkpoint_every, log_std_init, value_coef, entropy_coef,
                                                max_grad_norm, normalize_advantages, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SelectionCriterion, law_weight, pnl_floor_slack, eval_episodes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BaselineParams, rg_kappa, vt_theta, vt_kappa, vt_beta, vt_proportions)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GfiOptions, form, scale, ratio_epsilon)

} // namespace volaxiom
