#include "volaxiom/errors.hpp"
#include "volaxiom/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <set>

using namespace volaxiom;

namespace {

int fail(const std::string& code, const std::string& message) {
    std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volaxiom: law-manifold volatility testbed"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "experiment config (JSON); defaults when omitted");
    app.add_option("--seed", seed, "master seed override");
    app.add_option("--out", out_dir, "run directory (else $VOLAXIOM_OUTPUT_DIR, else config output_dir)");

    auto* gen = app.add_subcommand("gen", "generate the trajectory dataset");
    auto* train_wm = app.add_subcommand("train-wm", "train the world model and write ghost diagnostics");
    auto* train_rl = app.add_subcommand("train-rl", "train one PPO variant");
    std::string variant = "naive";
    double lambda = 0.0;
    train_rl->add_option("--variant", variant, "naive | soft | selection")->check(CLI::IsMember({"naive", "soft", "selection"}));
    train_rl->add_option("--lambda", lambda, "law-penalty weight (soft variant)");
    auto* eval = app.add_subcommand("eval", "evaluate every policy in one regime");
    std::string regime = "baseline";
    eval->add_option("--regime", regime, "baseline | shock")->check(CLI::IsMember({"baseline", "shock"}));
    auto* frontier = app.add_subcommand("frontier", "metrics, GFI, frontier, bands and lambda sweep");
    auto* report = app.add_subcommand("report", "Markdown report and table CSVs");
    auto* diag = app.add_subcommand("diag", "scatter and penalty histogram data");
    auto* run = app.add_subcommand("run", "every stage in order, resuming completed ones");
    auto* config = app.add_subcommand("config", "print configuration");
    bool dump_defaults = false;
    bool tiny = false;
    config->add_flag("--dump-defaults", dump_defaults, "print the default config");
    config->add_flag("--tiny", tiny, "print the tiny smoke-test config");

    const std::set<std::string> known{"gen", "train-wm", "train-rl", "eval", "frontier", "report", "diag", "run", "config"};
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            if (a.rfind("-", 0) == 0) {
                if (a == "--config" || a == "--seed" || a == "--out") ++i;
                continue;
            }
            if (!known.count(a)) return fail("UnknownSubcommand", "unknown subcommand '" + a + "'");
            break;
        }
        return fail(argc > 1 ? "ConfigParse" : "UnknownSubcommand", e.what());
    }

    try {
        if (config->parsed()) {
            if (tiny) std::cout << config_to_json(ExperimentConfig::tiny()).dump(2) << '\n';
            else if (dump_defaults || config_path.empty()) std::cout << dump_default_config();
            else std::cout << config_to_json(load_config(config_path)).dump(2) << '\n';
            return 0;
        }
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (seed) cfg.master_seed = *seed;
        std::string dir = cfg.output_dir;
        if (const char* env = std::getenv("VOLAXIOM_OUTPUT_DIR"); env && *env) dir = env;
        if (!out_dir.empty()) dir = out_dir;
        Pipeline p(cfg, dir);

        const auto t0 = std::chrono::steady_clock::now();
        std::string stage;
        if (gen->parsed()) {
            stage = "gen";
            p.gen();
        } else if (train_wm->parsed()) {
            stage = "train-wm";
            p.train_wm();
        } else if (train_rl->parsed()) {
            const Variant v = parse_variant(variant);
            stage = "train-rl:" + policy_id(v, lambda);
            p.train_rl(v, lambda);
        } else if (eval->parsed()) {
            stage = "eval:" + regime;
            p.eval(parse_regime(regime));
        } else if (frontier->parsed()) {
            stage = "frontier";
            p.frontier();
        } else if (report->parsed()) {
            stage = "report";
            p.report();
        } else if (diag->parsed()) {
            stage = "diag";
            p.diag();
        } else if (run->parsed()) {
            stage = "run";
            p.run_all();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << nlohmann::json{{"status", "ok"}, {"stage", stage}, {"run_dir", dir}, {"seconds", secs}}.dump()
                  << '\n';
        return 0;
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("InternalError", e.what());
    }
}
