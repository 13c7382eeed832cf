#include "volaxiom/experiment.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"
#include "volaxiom/rng.hpp"
#include "volaxiom/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace volaxiom {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, GfiForm f) { j = f == GfiForm::ratio ? "ratio" : "reference_subtracted"; }

void from_json(const json& j, GfiForm& f) {
    const auto s = j.get<std::string>();
    if (s == "ratio") f = GfiForm::ratio;
    else if (s == "reference_subtracted") f = GfiForm::reference_subtracted;
    else throw ConfigParse("unknown GFI form '" + s + "'");
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
    const auto grid_ptr = default_grid(grid);
    generator.validate();
    shock.validate();
    world_model.validate();
    env.validate();
    ppo.validate();
    selection.validate();
    if (dataset.n_trajectories < 2) throw InvalidArgument("dataset.n_trajectories must be >= 2");
    if (dataset.horizon < world_model.window_len + 1)
        throw InvalidArgument("dataset.horizon must exceed world_model.window_len");
    if (lambda_grid.empty()) throw InvalidArgument("lambda_grid must not be empty");
    if (std::find(lambda_grid.begin(), lambda_grid.end(), 0.0) == lambda_grid.end())
        throw InvalidArgument("lambda_grid must contain 0 (the naive variant)");
    if (std::set<double>(lambda_grid.begin(), lambda_grid.end()).size() != lambda_grid.size())
        throw InvalidArgument("lambda_grid has duplicates");
    for (double l : lambda_grid)
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda values must be finite and >= 0");
    if (eval_episodes < 1) throw InvalidArgument("eval_episodes must be >= 1");
    if (env.n_buckets > static_cast<int>(grid_ptr->n_t()))
        throw InvalidArgument("env.n_buckets exceeds the number of maturities");
    for (std::size_t i = 0; i < coverage_thresholds.size(); ++i)
        if (!(coverage_thresholds[i] > 0.0) || (i > 0 && !(coverage_thresholds[i] > coverage_thresholds[i - 1])))
            throw InvalidArgument("coverage_thresholds must be positive and increasing");
    for (std::size_t i = 1; i < band_edges.size(); ++i)
        if (!(band_edges[i] > band_edges[i - 1])) throw InvalidArgument("band_edges must be strictly increasing");
    if (static_cast<int>(baselines.vt_proportions.size()) != env.n_buckets)
        throw InvalidArgument("baselines.vt_proportions needs one entry per bucket");
    if (!(baselines.rg_kappa >= 0.0)) throw InvalidArgument("baselines.rg_kappa must be >= 0");
    if (!(gfi.scale > 0.0)) throw InvalidArgument("gfi.scale must be positive");
    if (output_dir.empty()) throw InvalidArgument("output_dir must not be empty");
}

ExperimentConfig ExperimentConfig::tiny() {
    ExperimentConfig c;
    c.grid = GridPreset::tiny;
    c.dataset = {12, 16};
    c.world_model.window_len = 4;
    c.world_model.hidden_dim = 8;
    c.world_model.epochs = 10;
    c.world_model.batch_size = 16;
    c.world_model.require_beats_persistence = false;
    c.env.episode_len = 16;
    c.env.n_buckets = 2;
    c.baselines.vt_proportions = {1.0, 0.5};
    c.ppo.steps_per_update = 128;
    c.ppo.minibatch_size = 64;
    c.ppo.epochs_per_update = 2;
    c.ppo.hidden = {16, 16};
    c.ppo.total_updates = 3;
    c.ppo.checkpoint_every = 1;
    c.selection.eval_episodes = 3;
    c.eval_episodes = 5;
    c.output_dir = "runs/tiny";
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    return {{"grid", c.grid},
            {"generator", c.generator},
            {"shock", c.shock},
            {"dataset", {{"n_trajectories", c.dataset.n_trajectories}, {"horizon", c.dataset.horizon}}},
            {"world_model", c.world_model},
            {"env", c.env},
            {"lambda_grid", c.lambda_grid},
            {"ppo", c.ppo},
            {"selection", c.selection},
            {"baselines", c.baselines},
            {"eval_episodes", c.eval_episodes},
            {"coverage_thresholds", c.coverage_thresholds},
            {"band_edges", c.band_edges},
            {"gfi", c.gfi},
            {"output_dir", c.output_dir},
            {"master_seed", c.master_seed}};
}

namespace {

void check_keys(const json& given, const json& known, const std::string& where) {
    if (!given.is_object() || !known.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigParse("unknown config key '" + where + it.key() + "'");
        check_keys(it.value(), known.at(it.key()), where + it.key() + ".");
    }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

} // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigParse("config must be a JSON object");
    ExperimentConfig c;
    check_keys(j, config_to_json(c), "");
    try {
        read_if(j, "grid", c.grid);
        read_if(j, "generator", c.generator);
        read_if(j, "shock", c.shock);
        if (j.contains("dataset")) {
            read_if(j.at("dataset"), "n_trajectories", c.dataset.n_trajectories);
            read_if(j.at("dataset"), "horizon", c.dataset.horizon);
        }
        read_if(j, "world_model", c.world_model);
        read_if(j, "env", c.env);
        read_if(j, "lambda_grid", c.lambda_grid);
        read_if(j, "ppo", c.ppo);
        read_if(j, "selection", c.selection);
        read_if(j, "baselines", c.baselines);
        read_if(j, "eval_episodes", c.eval_episodes);
        read_if(j, "coverage_thresholds", c.coverage_thresholds);
        read_if(j, "band_edges", c.band_edges);
        read_if(j, "gfi", c.gfi);
        read_if(j, "output_dir", c.output_dir);
        read_if(j, "master_seed", c.master_seed);
    } catch (const json::exception& e) {
        throw ConfigParse(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifact("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigParse("cannot parse " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string dump_default_config() { return config_to_json(ExperimentConfig{}).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(config_to_json(cfg).dump()); }

std::string to_string(Variant v) {
    switch (v) {
    case Variant::naive: return "naive";
    case Variant::soft: return "soft";
    case Variant::selection: return "selection";
    }
    return "naive";
}

Variant parse_variant(const std::string& s) {
    if (s == "naive") return Variant::naive;
    if (s == "soft") return Variant::soft;
    if (s == "selection") return Variant::selection;
    throw ConfigParse("unknown variant '" + s + "' (expected naive, soft or selection)");
}

std::string policy_id(Variant v, double lambda) {
    if (v == Variant::naive) return "naive";
    if (v == Variant::selection) return "selection";
    return "soft_l" + format_double(lambda);
}

std::vector<PolicySpec> learned_policies(const ExperimentConfig& cfg) {
    std::vector<double> lambdas = cfg.lambda_grid;
    std::sort(lambdas.begin(), lambdas.end());
    std::vector<PolicySpec> out;
    for (double l : lambdas) {
        const Variant v = l == 0.0 ? Variant::naive : Variant::soft;
        out.push_back({policy_id(v, l), v, l});
    }
    out.push_back({policy_id(Variant::selection, 0.0), Variant::selection, 0.0});
    return out;
}

// ---------------------------------------------------------------- pipeline

namespace {

constexpr const char* manifest_schema = "volaxiom.manifest/1";

std::string traj_dir_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "traj_%05zu", i);
    return buf;
}

std::string ckpt_name(int update) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%05d.json", update);
    return buf;
}

std::vector<std::string> files_under(const fs::path& root, const fs::path& sub) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root / sub))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).generic_string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string eval_name(const std::string& policy, Regime r) { return "eval/" + policy + "_" + to_string(r) + ".csv"; }

double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

std::vector<std::string> all_policy_ids(const ExperimentConfig& cfg) {
    std::vector<std::string> ids = baseline_ids();
    for (const auto& p : learned_policies(cfg)) ids.push_back(p.id);
    return ids;
}

} // namespace

Pipeline::Pipeline(ExperimentConfig cfg, fs::path run_dir) : cfg_(std::move(cfg)), dir_(std::move(run_dir)) {
    cfg_.validate();
    grid_ = default_grid(cfg_.grid);
    manifold_ = std::make_unique<LawManifold>(grid_);
}

json Pipeline::read_manifest() const {
    const auto p = dir_ / "manifest.json";
    json fresh = {{"schema", manifest_schema},
                  {"config_hash", config_hash(cfg_)},
                  {"master_seed", cfg_.master_seed},
                  {"stages", json::object()},
                  {"order", json::array()},
                  {"schemas",
                   {{"trajectory", "volaxiom.trajectory/1"},
                    {"world_model", "volaxiom.world_model/1"},
                    {"policy", "volaxiom.policy/1"},
                    {"eval_csv", "volaxiom.eval/1"},
                    {"metrics_csv", "volaxiom.metrics/1"},
                    {"frontier_csv", "volaxiom.frontier/1"},
                    {"scatter_csv", "volaxiom.scatter/1"}}}};
    if (!fs::exists(p)) return fresh;
    json j;
    try {
        j = json::parse(read_text_file(p));
    } catch (const json::parse_error&) {
        return fresh;
    }
    if (j.value("schema", "") != manifest_schema || j.value("config_hash", "") != config_hash(cfg_)) return fresh;
    return j;
}

void Pipeline::write_manifest(const json& j) const {
    fs::create_directories(dir_);
    write_text_file(dir_ / "manifest.json", j.dump(2) + "\n");
}

void Pipeline::record_stage(const std::string& stage, std::uint64_t seed, const std::vector<std::string>& files) {
    auto m = read_manifest();
    write_text_file(dir_ / "config.json", config_to_json(cfg_).dump(2) + "\n");
    m["config_file"] = {{"config.json", fnv1a_hex(read_text_file(dir_ / "config.json"))}};
    json entry = {{"seed", seed}, {"files", json::object()}};
    for (const auto& f : files) entry["files"][f] = fnv1a_hex(read_text_file(dir_ / f));
    m["stages"][stage] = entry;
    auto& order = m["order"];
    order.erase(std::remove(order.begin(), order.end(), json(stage)), order.end());
    order.push_back(stage);
    m.erase("failed");
    write_manifest(m);
}

bool Pipeline::stage_intact(const std::string& stage) const {
    const auto m = read_manifest();
    if (!m["stages"].contains(stage)) return false;
    for (const auto& [f, h] : m["stages"][stage]["files"].items()) {
        if (!fs::exists(dir_ / f)) return false;
        if (fnv1a_hex(read_text_file(dir_ / f)) != h.get<std::string>()) return false;
    }
    return true;
}

std::vector<std::string> Pipeline::completed_stages() const {
    const auto m = read_manifest();
    std::vector<std::string> out;
    for (const auto& s : m["order"]) out.push_back(s.get<std::string>());
    return out;
}

fs::path Pipeline::require(const std::string& rel) const {
    const auto p = dir_ / rel;
    if (!fs::exists(p)) throw MissingArtifact("required artifact is missing: " + p.string());
    return p;
}

std::vector<Trajectory> Pipeline::load_dataset() const {
    const auto root = require("data");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw MissingArtifact("no trajectories under " + root.string());
    std::vector<Trajectory> out;
    for (const auto& d : dirs) out.push_back(read_trajectory(d, grid_));
    return out;
}

WorldModel Pipeline::load_world_model() const { return WorldModel::load(require("world_model.json")); }

std::unique_ptr<Policy> Pipeline::load_policy(const std::string& id) const {
    if (std::find(baseline_ids().begin(), baseline_ids().end(), id) != baseline_ids().end()) return make_baseline(id);
    const auto p = require("policies/" + id + ".json");
    try {
        return policy_from_json(json::parse(read_text_file(p)));
    } catch (const json::exception& e) {
        throw FormatError("cannot read policy " + p.string() + ": " + e.what());
    }
}

std::unique_ptr<Policy> Pipeline::make_baseline(const std::string& id) const {
    const int d = cfg_.env.n_buckets;
    const double a = cfg_.env.a_max;
    const auto& b = cfg_.baselines;
    if (id == "zero_hedge") return std::make_unique<ZeroHedge>(d, a);
    if (id == "random_gaussian") return std::make_unique<RandomGaussian>(d, a, b.rg_kappa);
    if (id == "vol_trend") return std::make_unique<VolTrend>(d, a, b.vt_theta, b.vt_kappa, b.vt_beta, b.vt_proportions);
    throw InvalidArgument("unknown baseline '" + id + "'");
}

std::vector<std::vector<TotalVarianceSurface>> Pipeline::init_windows(const std::string& stream, int n,
                                                                      Regime regime) const {
    const int L = cfg_.world_model.window_len;
    GeneratorParams gp = cfg_.generator;
    gp.seed = derive_seed(cfg_.master_seed, stream);
    std::vector<std::vector<TotalVarianceSurface>> out;
    for (auto& traj : generate_dataset(gp, *manifold_, n, std::max(1, L - 1))) {
        const Trajectory t = regime == Regime::shock ? apply_shock(traj, cfg_.shock, *manifold_) : traj;
        out.emplace_back(t.surfaces.begin(), t.surfaces.begin() + L);
    }
    return out;
}

std::vector<EpisodeRecord> Pipeline::evaluate_policy(Policy& policy, const WorldModel& model,
                                                     const std::vector<std::vector<TotalVarianceSurface>>& windows,
                                                     Regime regime, const std::string& stream) const {
    EnvConfig env = cfg_.env;
    env.lambda_law = 0.0;
    std::vector<EpisodeRecord> out;
    for (std::size_t i = 0; i < windows.size(); ++i)
        out.push_back(rollout(model, *manifold_, env, policy, windows[i], derive_seed(cfg_.master_seed, stream, i),
                              regime, true));
    return out;
}

void Pipeline::gen() {
    GeneratorParams gp = cfg_.generator;
    const std::uint64_t seed = derive_seed(cfg_.master_seed, "gen");
    gp.seed = seed;
    const auto data = generate_dataset(gp, *manifold_, cfg_.dataset.n_trajectories, cfg_.dataset.horizon);
    fs::remove_all(dir_ / "data");
    for (std::size_t i = 0; i < data.size(); ++i) write_trajectory(dir_ / "data" / traj_dir_name(i), data[i]);
    record_stage("gen", seed, files_under(dir_, "data"));
}

void Pipeline::train_wm() {
    const auto data = load_dataset();
    WorldModelConfig wc = cfg_.world_model;
    wc.seed = derive_seed(cfg_.master_seed, "train-wm");
    const WorldModel model = train(data, wc);
    model.save(dir_ / "world_model.json");

    const std::vector<double> deltas{1e-6, 1e-4, 1e-3, 1e-1};
    const std::vector<Trajectory> held_out(data.begin() + static_cast<std::ptrdiff_t>(
                                                              train_split(data.size(), wc.val_fraction)),
                                           data.end());
    json diag = {{"validation", diagnose(model, held_out, *manifold_, deltas).to_json()},
                 {"all", diagnose(model, data, *manifold_, deltas).to_json()},
                 {"best_epoch", model.best_epoch},
                 {"train_mse", model.train_mse},
                 {"val_mse", model.val_mse},
                 {"persistence_mse", model.persistence_mse}};
    write_text_file(dir_ / "ghost_diagnostics.json", diag.dump(2) + "\n");

    std::ostringstream curve;
    curve << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < model.loss_curve.size(); ++e)
        curve << e << ',' << format_double(model.loss_curve[e]) << ','
              << (e < model.val_curve.size() ? format_double(model.val_curve[e]) : std::string()) << '\n';
    write_text_file(dir_ / "world_model_curve.csv", curve.str());
    record_stage("train-wm", wc.seed, {"world_model.json", "ghost_diagnostics.json", "world_model_curve.csv"});
}

void Pipeline::train_rl(Variant v, double lambda) {
    if (v == Variant::naive) lambda = 0.0;
    if (v == Variant::selection) lambda = 0.0;
    if (v == Variant::soft && !(lambda > 0.0)) throw InvalidArgument("the soft variant needs lambda > 0");
    const std::string id = policy_id(v, lambda);
    const WorldModel model = load_world_model();
    const auto data = load_dataset();
    const std::size_t n_train = train_split(data.size(), cfg_.world_model.val_fraction);
    const int L = cfg_.world_model.window_len;
    std::vector<std::vector<TotalVarianceSurface>> pool;
    for (std::size_t i = 0; i < n_train; ++i) {
        const auto& s = data[i].surfaces;
        for (std::size_t t = 0; t + static_cast<std::size_t>(L) <= s.size(); ++t)
            pool.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(t), s.begin() + static_cast<std::ptrdiff_t>(t) + L);
    }

    EnvConfig env_cfg = cfg_.env;
    env_cfg.lambda_law = lambda;
    WorldModelRlEnv env(model, *manifold_, env_cfg, pool);
    PPOConfig pc = cfg_.ppo;
    pc.seed = derive_seed(cfg_.master_seed, "train-rl:" + id);

    const std::string ckdir = "policies/" + id;
    fs::remove_all(dir_ / ckdir);
    fs::create_directories(dir_ / ckdir);
    std::vector<std::string> files;
    ActorCritic net_for_ckpt(env.observation_dim(), env.action_dim(), pc.hidden);
    const auto res = ppo_train(env, pc, lambda, [&](const PpoCheckpoint& c) {
        const std::string f = ckdir + "/" + ckpt_name(c.update);
        const PpoPolicy p(net_for_ckpt, c.params, cfg_.env.a_max);
        json j = p.to_json();
        j["update"] = c.update;
        j["lambda"] = lambda;
        write_text_file(dir_ / f, j.dump() + "\n");
        files.push_back(f);
    });

    std::ostringstream curve;
    curve << "update,mean_reward\n";
    for (std::size_t u = 0; u < res.curve.size(); ++u) curve << u + 1 << ',' << format_double(res.curve[u]) << '\n';
    write_text_file(dir_ / ("policies/" + id + "_curve.csv"), curve.str());
    files.push_back("policies/" + id + "_curve.csv");

    PpoPolicy chosen = res.policy(cfg_.env.a_max);
    if (v == Variant::selection) {
        // Law metrics enter only here: score every checkpoint on held-out windows in both regimes.
        const WorldModel& wm = model;
        const auto base_w = init_windows("select-windows", cfg_.selection.eval_episodes, Regime::baseline);
        const auto shock_w = init_windows("select-windows", cfg_.selection.eval_episodes, Regime::shock);
        const auto metrics_of = [&](Policy& p, Regime r) {
            return compute_metrics(evaluate_policy(p, wm, r == Regime::baseline ? base_w : shock_w, r, "select-policy"),
                                   cfg_.coverage_thresholds);
        };
        auto zh = make_baseline(reference_policy_id);
        const auto zh_base = metrics_of(*zh, Regime::baseline);
        const auto zh_shock = metrics_of(*zh, Regime::shock);
        auto naive = load_policy("naive");
        const double reference_pnl = metrics_of(*naive, Regime::baseline).mean_pnl;
        const auto sel = select_checkpoint(res.checkpoints.size(), cfg_.selection, reference_pnl, [&](std::size_t i) {
            PpoPolicy p(res.net, res.checkpoints[i].params, cfg_.env.a_max);
            const auto b = metrics_of(p, Regime::baseline);
            const auto s = metrics_of(p, Regime::shock);
            const auto g = compute_gfi(b, s, zh_base, zh_shock, shock_intensity(cfg_.shock), cfg_.gfi);
            return CheckpointScore{b.mean_pnl, b.mean_law_pen, g.gfi};
        });
        chosen = PpoPolicy(res.net, res.checkpoints[sel.index].params, cfg_.env.a_max);
        json js = {{"selected_update", res.checkpoints[sel.index].update},
                   {"floor_unmet", sel.floor_unmet},
                   {"reference_pnl", reference_pnl},
                   {"scores", json::array()}};
        for (std::size_t i = 0; i < sel.scores.size(); ++i)
            js["scores"].push_back({{"update", res.checkpoints[i].update},
                                    {"mean_pnl", sel.scores[i].mean_pnl},
                                    {"mean_law_pen", sel.scores[i].mean_law_pen},
                                    {"gfi", sel.scores[i].gfi}});
        write_text_file(dir_ / "policies/selection_scores.json", js.dump(2) + "\n");
        files.push_back("policies/selection_scores.json");
    }
    json j = chosen.to_json();
    j["lambda"] = lambda;
    j["variant"] = to_string(v);
    write_text_file(dir_ / ("policies/" + id + ".json"), j.dump() + "\n");
    files.push_back("policies/" + id + ".json");
    record_stage("train-rl:" + id, pc.seed, files);
}

void Pipeline::eval(Regime regime) {
    const WorldModel model = load_world_model();
    std::vector<std::pair<std::string, std::unique_ptr<Policy>>> policies;
    for (const auto& id : all_policy_ids(cfg_)) policies.emplace_back(id, load_policy(id));
    const auto windows = init_windows("eval-windows", cfg_.eval_episodes, regime);
    const int d = cfg_.env.n_buckets;
    std::vector<std::string> files;
    fs::create_directories(dir_ / "eval");
    for (auto& [id, policy] : policies) {
        const auto eps = evaluate_policy(*policy, model, windows, regime, "eval-policy");
        std::ostringstream out;
        out << "episode,t,pnl,law_pen,law_pen_surrogate,r_on_manifold,r_ghost";
        for (int b = 0; b < d; ++b) out << ",a_" << b;
        out << '\n';
        for (std::size_t e = 0; e < eps.size(); ++e) {
            for (std::size_t t = 0; t < eps[e].steps.size(); ++t) {
                const auto& s = eps[e].steps[t];
                out << e << ',' << t << ',' << format_double(s.pnl) << ',' << format_double(s.law_pen_exact) << ','
                    << format_double(s.law_pen) << ',' << format_double(s.r_on_manifold) << ','
                    << format_double(s.r_ghost);
                for (double a : s.action) out << ',' << format_double(a);
                out << '\n';
            }
        }
        const std::string f = eval_name(id, regime);
        write_text_file(dir_ / f, out.str());
        files.push_back(f);
    }
    record_stage("eval:" + to_string(regime), derive_seed(cfg_.master_seed, "eval-windows"), files);
}

std::vector<EpisodeRecord> Pipeline::load_eval(const std::string& policy, Regime regime) const {
    const auto rows = read_csv(require(eval_name(policy, regime)));
    if (rows.empty() || rows[0].size() < 7 || rows[0][0] != "episode")
        throw FormatError("malformed evaluation file for " + policy);
    std::vector<EpisodeRecord> eps;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& c = rows[r];
        if (c.size() != rows[0].size()) throw FormatError("ragged row in evaluation file for " + policy);
        const auto e = static_cast<std::size_t>(std::stoul(c[0]));
        if (e >= eps.size()) {
            eps.resize(e + 1);
            eps[e].regime = regime;
            eps[e].decomposed = true;
        }
        StepRecord s;
        s.pnl = parse_double(c[2]);
        s.law_pen_exact = parse_double(c[3]);
        s.law_pen = parse_double(c[4]);
        s.r_on_manifold = parse_double(c[5]);
        s.r_ghost = parse_double(c[6]);
        s.reward = s.pnl;
        for (std::size_t k = 7; k < c.size(); ++k) s.action.push_back(parse_double(c[k]));
        eps[e].steps.push_back(std::move(s));
    }
    return eps;
}

void Pipeline::frontier() {
    const auto ids = all_policy_ids(cfg_);
    std::map<std::string, std::pair<MetricsReport, MetricsReport>> by_id;
    for (const auto& id : ids) {
        auto b = compute_metrics(load_eval(id, Regime::baseline), cfg_.coverage_thresholds);
        auto s = compute_metrics(load_eval(id, Regime::shock), cfg_.coverage_thresholds);
        b.policy_id = s.policy_id = id;
        b.regime = Regime::baseline;
        s.regime = Regime::shock;
        by_id[id] = {b, s};
    }
    const auto& ref = by_id.at(reference_policy_id);
    const double intensity = shock_intensity(cfg_.shock);
    std::vector<MetricsReport> rows;
    std::vector<FrontierPoint> points;
    std::map<double, std::pair<MetricsReport, MetricsReport>> sweep;
    std::ostringstream ghost;
    ghost << "policy,regime,mean_r_ghost,mean_abs_r_ghost,max_abs_r_ghost,mean_r_on_manifold\n";
    for (const auto& id : ids) {
        auto& [b, s] = by_id.at(id);
        const auto g = compute_gfi(b, s, ref.first, ref.second, intensity, cfg_.gfi);
        b.gfi = s.gfi = g.gfi;
        rows.push_back(b);
        rows.push_back(s);
        std::optional<double> lambda;
        for (const auto& p : learned_policies(cfg_))
            if (p.id == id && p.variant != Variant::selection) lambda = p.lambda;
        points.push_back(frontier_point(b, g.gfi, lambda));
        if (lambda) sweep[*lambda] = {b, s};
        for (Regime r : {Regime::baseline, Regime::shock}) {
            std::vector<double> rg, rm;
            double max_abs = 0.0, abs_sum = 0.0;
            for (const auto& ep : load_eval(id, r))
                for (const auto& st : ep.steps) {
                    rg.push_back(st.r_ghost);
                    rm.push_back(st.r_on_manifold);
                    abs_sum += std::abs(st.r_ghost);
                    max_abs = std::max(max_abs, std::abs(st.r_ghost));
                }
            ghost << id << ',' << to_string(r) << ',' << format_double(mean_of(rg)) << ','
                  << format_double(rg.empty() ? 0.0 : abs_sum / static_cast<double>(rg.size())) << ','
                  << format_double(max_abs) << ',' << format_double(mean_of(rm)) << '\n';
        }
    }
    pareto_frontier(points);
    write_text_file(dir_ / "metrics.csv", metrics_csv(rows));
    write_text_file(dir_ / "frontier.csv", frontier_csv(points));
    write_text_file(dir_ / "ghost.csv", ghost.str());
    std::vector<MetricsReport> base_rows;
    for (const auto& r : rows)
        if (r.regime == Regime::baseline) base_rows.push_back(r);
    write_text_file(dir_ / "bands.csv", band_csv(penalty_bands(base_rows, cfg_.band_edges)));
    std::vector<std::string> files{"metrics.csv", "frontier.csv", "ghost.csv", "bands.csv"};
    if (sweep.size() >= 2) {
        write_text_file(dir_ / "lambda_sweep.csv", lambda_sweep_csv(lambda_sweep_table(sweep)));
        files.push_back("lambda_sweep.csv");
    }
    record_stage("frontier", cfg_.master_seed, files);
}

std::vector<MetricsReport> Pipeline::load_metrics() const {
    const auto rows = read_csv(require("metrics.csv"));
    if (rows.empty() || rows[0].size() < 11 || rows[0][0] != "policy") throw FormatError("malformed metrics.csv");
    const auto& h = rows[0];
    std::vector<MetricsReport> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& c = rows[r];
        if (c.size() != h.size()) throw FormatError("ragged row in metrics.csv");
        MetricsReport m;
        m.policy_id = c[0];
        m.regime = parse_regime(c[1]);
        m.mean_pnl = parse_double(c[2]);
        m.std_pnl = parse_double(c[3]);
        m.sharpe = parse_double(c[4]);
        m.mean_law_pen = parse_double(c[5]);
        m.max_law_pen = parse_double(c[6]);
        m.law_adj_return = parse_double(c[7]);
        if (!c[8].empty()) m.gfi = parse_double(c[8]);
        for (std::size_t k = 9; k + 2 < c.size(); ++k)
            m.coverage.emplace_back(parse_double(h[k].substr(4)), parse_double(c[k]));
        m.var5 = parse_double(c[c.size() - 2]);
        m.cvar5 = parse_double(c[c.size() - 1]);
        out.push_back(m);
    }
    return out;
}

void Pipeline::report() {
    const auto metrics = load_metrics();
    const auto frontier_rows = read_csv(require("frontier.csv"));
    std::vector<MetricsReport> base, shock, strategies, sweep;
    std::set<std::string> strategy_ids{"naive", "zero_hedge", "random_gaussian", "vol_trend"};
    for (const auto& m : metrics) {
        (m.regime == Regime::baseline ? base : shock).push_back(m);
        if (strategy_ids.count(m.policy_id)) strategies.push_back(m);
        else if (m.regime == Regime::baseline && std::find(baseline_ids().begin(), baseline_ids().end(),
                                                           m.policy_id) == baseline_ids().end())
            sweep.push_back(m);
    }
    for (const auto& m : metrics)
        if (m.policy_id == "naive" && m.regime == Regime::baseline) sweep.insert(sweep.begin(), m);

    std::ostringstream md;
    md << "# Run report\n\n";
    md << "Master seed " << cfg_.master_seed << ", config hash " << config_hash(cfg_) << ", " << cfg_.eval_episodes
       << " evaluation episodes of " << cfg_.env.episode_len << " steps per regime. Penalties are exact "
       << "(half squared distance to the law manifold) on world-model predictions.\n\n";
    md << "## Baseline regime\n\n" << metrics_markdown(base) << "\n";
    md << "## Shock regime\n\n" << metrics_markdown(shock) << "\n";
    md << "## Frontier (baseline coordinates, GFI from both regimes)\n\n";
    md << "| Policy | lambda | Mean Pen. | GFI | Mean PnL | VaR5 | CVaR5 | On frontier |\n";
    md << "|---|---:|---:|---:|---:|---:|---:|---|\n";
    for (std::size_t r = 1; r < frontier_rows.size(); ++r) {
        const auto& c = frontier_rows[r];
        md << "| " << c[0] << " | " << (c[1].empty() ? "-" : c[1]);
        for (std::size_t k = 2; k < 7; ++k) md << " | " << c[k];
        md << " | " << (c[7] == "1" ? "yes" : "no") << " |\n";
    }
    md << "\n## Calibration targets\n\n";
    md << "| Quantity | Target | Measured |\n|---|---:|---:|\n";
    for (const auto& m : base) {
        if (m.policy_id != reference_policy_id) continue;
        md << "| Zero-Hedge mean step PnL | 0.0191 | " << format_double(m.mean_pnl) << " |\n";
        md << "| Zero-Hedge Sharpe | 2.99 | " << format_double(m.sharpe) << " |\n";
        md << "| Zero-Hedge mean law penalty | 0.0055 | " << format_double(m.mean_law_pen) << " |\n";
    }
    write_text_file(dir_ / "report.md", md.str());
    write_text_file(dir_ / "table_strategies.csv", metrics_csv(strategies));
    write_text_file(dir_ / "table_lambda.csv", metrics_csv(sweep));
    record_stage("report", cfg_.master_seed, {"report.md", "table_strategies.csv", "table_lambda.csv"});
}

void Pipeline::diag() {
    const std::vector<double> edges{0.0, 1e-8, 1e-6, 1e-4, 1e-3, 3e-3, 6e-3, 1e-2, 1e-1};
    std::vector<ScatterRow> scatter;
    std::ostringstream hist;
    hist << "policy,regime,bin_lower,bin_upper,count\n";
    for (const auto& id : all_policy_ids(cfg_)) {
        for (Regime r : {Regime::baseline, Regime::shock}) {
            std::vector<std::size_t> counts(edges.size(), 0);
            for (const auto& ep : load_eval(id, r)) {
                for (std::size_t t = 0; t < ep.steps.size(); ++t) {
                    const double p = ep.steps[t].law_pen_exact;
                    if (r == Regime::baseline) scatter.push_back({id, t, ep.steps[t].pnl, p});
                    const auto bin = std::upper_bound(edges.begin(), edges.end(), p) - edges.begin();
                    ++counts[static_cast<std::size_t>(std::max<std::ptrdiff_t>(bin, 1) - 1)];
                }
            }
            for (std::size_t b = 0; b < edges.size(); ++b)
                hist << id << ',' << to_string(r) << ',' << format_double(edges[b]) << ','
                     << (b + 1 < edges.size() ? format_double(edges[b + 1]) : std::string("inf")) << ','
                     << counts[b] << '\n';
        }
    }
    write_text_file(dir_ / "scatter.csv", scatter_csv(scatter));
    write_text_file(dir_ / "penalty_histogram.csv", hist.str());
    record_stage("diag", cfg_.master_seed, {"scatter.csv", "penalty_histogram.csv"});
}

void Pipeline::run_all() {
    std::vector<std::pair<std::string, std::function<void()>>> stages;
    stages.emplace_back("gen", [this] { gen(); });
    stages.emplace_back("train-wm", [this] { train_wm(); });
    for (const auto& p : learned_policies(cfg_))
        stages.emplace_back("train-rl:" + p.id, [this, p] { train_rl(p.variant, p.lambda); });
    stages.emplace_back("eval:baseline", [this] { eval(Regime::baseline); });
    stages.emplace_back("eval:shock", [this] { eval(Regime::shock); });
    stages.emplace_back("frontier", [this] { frontier(); });
    stages.emplace_back("report", [this] { report(); });
    stages.emplace_back("diag", [this] { diag(); });

    // A stage is redone when it or anything before it had to be redone.
    bool dirty = false;
    for (auto& [name, fn] : stages) {
        if (!dirty && stage_intact(name)) continue;
        dirty = true;
        try {
            fn();
        } catch (const Error& e) {
            auto m = read_manifest();
            m["failed"] = {{"stage", name}, {"code", e.code()}, {"message", e.what()}};
            write_manifest(m);
            throw;
        }
    }
}

} // namespace volaxiom
