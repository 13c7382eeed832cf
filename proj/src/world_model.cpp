#include "volaxiom/world_model.hpp"

#include "volaxiom/errors.hpp"
#include "volaxiom/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace volaxiom {

std::string to_string(WorldModelArch a) { return a == WorldModelArch::affine_ar ? "affine_ar" : "recurrent"; }

WorldModelArch parse_world_model_arch(const std::string& s) {
    if (s == "recurrent") return WorldModelArch::recurrent;
    if (s == "affine_ar") return WorldModelArch::affine_ar;
    throw ConfigParse("unknown world-model arch '" + s + "'");
}

void WorldModelConfig::validate() const {
    if (window_len < 1) throw InvalidArgument("window_len must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (hidden_dim < 1 || epochs < 0 || batch_size < 1) throw InvalidArgument("hidden_dim, epochs, batch_size invalid");
    if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be >= 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must lie in (0, 1)");
}

WindowSet make_windows(const std::vector<Trajectory>& trajectories, int window_len) {
    WindowSet out;
    const auto L = static_cast<std::size_t>(window_len);
    for (const auto& tr : trajectories) {
        for (std::size_t t = 0; t + L < tr.surfaces.size(); ++t) {
            std::vector<const TotalVarianceSurface*> win;
            for (std::size_t s = t; s < t + L; ++s) win.push_back(&tr.surfaces[s]);
            out.windows.push_back(std::move(win));
            out.targets.push_back(&tr.surfaces[t + L]);
        }
    }
    return out;
}

std::size_t train_split(std::size_t n, double val_fraction) {
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
    return n > n_val ? n - n_val : 0;
}

WorldModel::WorldModel(const WorldModelConfig& cfg, GridPtr grid) : cfg_(cfg), grid_(std::move(grid)) {
    cfg_.validate();
    if (!grid_) throw InvalidArgument("world model needs a grid");
    const auto d = static_cast<Eigen::Index>(grid_->d());
    mean.assign(grid_->d(), 0.0);
    scale.assign(grid_->d(), 1.0);
    if (cfg_.arch == WorldModelArch::recurrent) {
        gru_ = nn::GruRegressor(d, cfg_.hidden_dim, cfg_.residual);
        Rng rng(cfg_.seed);
        gru_.initialize(params_, rng);
    } else {
        // Identity on the last surface, zero elsewhere.
        const Eigen::Index p = d * cfg_.window_len + 1;
        nn::Matrix b = nn::Matrix::Zero(p, d);
        b.block(d * (cfg_.window_len - 1), 0, d, d).setIdentity();
        params_ = Eigen::Map<nn::Vector>(b.data(), b.size());
    }
}

namespace {

nn::Vector standardize(const std::vector<double>& w, const std::vector<double>& mean, const std::vector<double>& scale) {
    nn::Vector x(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) x[static_cast<Eigen::Index>(i)] = (w[i] - mean[i]) / scale[i];
    return x;
}

// Stacked window features [x_1; ...; x_L; 1] for the affine model.
nn::Vector affine_features(const std::vector<nn::Vector>& xs) {
    const Eigen::Index d = xs.front().size();
    nn::Vector phi(d * static_cast<Eigen::Index>(xs.size()) + 1);
    for (std::size_t l = 0; l < xs.size(); ++l) phi.segment(d * static_cast<Eigen::Index>(l), d) = xs[l];
    phi[phi.size() - 1] = 1.0;
    return phi;
}

} // namespace

std::vector<double> WorldModel::predict_raw(const std::vector<const std::vector<double>*>& window) const {
    if (window.size() != static_cast<std::size_t>(cfg_.window_len)) {
        throw WindowLengthMismatch("window has " + std::to_string(window.size()) + " surfaces, model expects " +
                                   std::to_string(cfg_.window_len));
    }
    const auto d = static_cast<Eigen::Index>(grid_->d());
    std::vector<nn::Vector> xs;
    xs.reserve(window.size());
    for (const auto* w : window) {
        if (w->size() != grid_->d()) throw GridMismatch("window surface has the wrong dimension");
        xs.push_back(standardize(*w, mean, scale));
    }
    nn::Vector y;
    if (cfg_.arch == WorldModelArch::recurrent) {
        std::vector<nn::Matrix> batch(xs.begin(), xs.end());
        y = gru_.forward(params_, batch).col(0);
    } else {
        const nn::Vector phi = affine_features(xs);
        y = nn::ConstMatrixMap(params_.data(), phi.size(), d).transpose() * phi;
    }
    std::vector<double> out(grid_->d());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean[i] + scale[i] * y[static_cast<Eigen::Index>(i)];
    return out;
}

TotalVarianceSurface WorldModel::predict(const std::vector<TotalVarianceSurface>& window) const {
    std::vector<const std::vector<double>*> raw;
    raw.reserve(window.size());
    for (const auto& s : window) {
        if (!s.grid || !same_grid(*s.grid, *grid_)) throw GridMismatch("window surface is not on the model grid");
        raw.push_back(&s.w);
    }
    // TotalVarianceSurface rejects non-finite values; predictions may be negative.
    return {grid_, predict_raw(raw)};
}

namespace {

struct Standardized {
    std::vector<std::vector<nn::Vector>> windows;
    std::vector<nn::Vector> targets;
};

Standardized standardize_set(const WindowSet& ws, const std::vector<double>& mean, const std::vector<double>& scale) {
    Standardized out;
    out.windows.reserve(ws.size());
    for (std::size_t n = 0; n < ws.size(); ++n) {
        std::vector<nn::Vector> xs;
        for (const auto* s : ws.windows[n]) xs.push_back(standardize(s->w, mean, scale));
        out.windows.push_back(std::move(xs));
        out.targets.push_back(standardize(ws.targets[n]->w, mean, scale));
    }
    return out;
}

double raw_mse(const WorldModel& model, const WindowSet& ws) {
    if (ws.size() == 0) return 0.0;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < ws.size(); ++n) {
        std::vector<const std::vector<double>*> win;
        for (const auto* s : ws.windows[n]) win.push_back(&s->w);
        const auto pred = model.predict_raw(win);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double e = pred[i] - ws.targets[n]->w[i];
            acc += e * e;
        }
        count += pred.size();
    }
    return acc / static_cast<double>(count);
}

double persistence(const WindowSet& ws) {
    if (ws.size() == 0) return 0.0;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < ws.size(); ++n) {
        const auto& last = ws.windows[n].back()->w;
        for (std::size_t i = 0; i < last.size(); ++i) {
            const double e = last[i] - ws.targets[n]->w[i];
            acc += e * e;
        }
        count += last.size();
    }
    return acc / static_cast<double>(count);
}

// Stacks samples [begin, end) of `order` into (d x b) step matrices.
void gather(const Standardized& data, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
            std::vector<nn::Matrix>& xs, nn::Matrix& target) {
    const Eigen::Index d = data.targets.front().size();
    const auto b = static_cast<Eigen::Index>(end - begin);
    const std::size_t L = data.windows.front().size();
    xs.assign(L, nn::Matrix(d, b));
    target.resize(d, b);
    for (std::size_t n = begin; n < end; ++n) {
        const auto col = static_cast<Eigen::Index>(n - begin);
        for (std::size_t l = 0; l < L; ++l) xs[l].col(col) = data.windows[order[n]][l];
        target.col(col) = data.targets[order[n]];
    }
}

double standardized_loss(const WorldModel& model, const Standardized& data) {
    if (data.targets.empty()) return 0.0;
    std::vector<std::size_t> order(data.targets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<nn::Matrix> xs;
    nn::Matrix target;
    double total = 0.0;
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < order.size(); start += chunk) {
        const std::size_t stop = std::min(order.size(), start + chunk);
        gather(data, order, start, stop, xs, target);
        total += model.network().loss(model.parameters(), xs, target, nullptr) * static_cast<double>(stop - start);
    }
    return total / static_cast<double>(order.size());
}

void fit_recurrent(WorldModel& model, const Standardized& data, const Standardized& val, std::vector<double>& curve,
                   std::vector<double>& val_curve, int& best_epoch) {
    const auto& cfg = model.config();
    const auto& net = model.network();
    nn::Adam opt(net.parameter_count(), cfg.learning_rate);
    Rng rng(derive_seed(cfg.seed, "world_model.shuffle"));
    std::vector<std::size_t> order(data.targets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Vector grad;
    std::vector<nn::Matrix> xs;
    nn::Matrix target;
    nn::Vector best = model.parameters();
    double best_val = cfg.early_stopping ? standardized_loss(model, val) : 0.0;
    best_epoch = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            gather(data, order, start, stop, xs, target);
            grad.setZero(net.parameter_count());
            const double loss = net.loss(model.parameters(), xs, target, &grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw TrainingDegenerate("non-finite loss at epoch " + std::to_string(epoch));
            }
            opt.step(model.parameters(), grad);
            total += loss * static_cast<double>(stop - start);
        }
        curve.push_back(total / static_cast<double>(order.size()));
        if (cfg.early_stopping) {
            const double v = standardized_loss(model, val);
            val_curve.push_back(v);
            if (v < best_val) {
                best_val = v;
                best = model.parameters();
                best_epoch = epoch;
            }
        }
    }
    if (cfg.early_stopping) {
        model.parameters() = best;
    } else {
        best_epoch = cfg.epochs;
    }
}

void fit_affine(WorldModel& model, const Standardized& data) {
    const auto& cfg = model.config();
    const Eigen::Index d = static_cast<Eigen::Index>(model.grid()->d());
    const Eigen::Index p = d * cfg.window_len + 1;
    nn::Matrix gram = nn::Matrix::Zero(p, p);
    nn::Matrix rhs = nn::Matrix::Zero(p, d);
    for (std::size_t n = 0; n < data.targets.size(); ++n) {
        const nn::Vector phi = affine_features(data.windows[n]);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
        rhs.noalias() += phi * data.targets[n].transpose();
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += cfg.ridge;
    const nn::Matrix b = gram.ldlt().solve(rhs);
    if (!b.allFinite()) throw TrainingDegenerate("affine least-squares solve produced non-finite coefficients");
    model.parameters() = Eigen::Map<const nn::Vector>(b.data(), b.size());
}

} // namespace

WorldModel train(const std::vector<Trajectory>& dataset, const WorldModelConfig& cfg) {
    cfg.validate();
    if (dataset.size() < 2) throw InsufficientData("world-model training needs at least 2 trajectories");
    const GridPtr grid = dataset.front().surfaces.empty() ? nullptr : dataset.front().surfaces.front().grid;
    for (const auto& tr : dataset) {
        if (tr.surfaces.size() < static_cast<std::size_t>(cfg.window_len) + 1) {
            throw InsufficientData("every trajectory needs at least window_len + 1 surfaces");
        }
        for (const auto& s : tr.surfaces) {
            if (!s.grid || !same_grid(*s.grid, *grid)) throw GridMismatch("trajectories live on different grids");
        }
    }
    const std::size_t n_train = train_split(dataset.size(), cfg.val_fraction);
    const std::vector<Trajectory> train_set(dataset.begin(), dataset.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<Trajectory> val_set(dataset.begin() + static_cast<std::ptrdiff_t>(n_train), dataset.end());

    WorldModel model(cfg, grid);
    const std::size_t d = grid->d();
    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    std::size_t count = 0;
    for (const auto& tr : train_set) {
        for (const auto& s : tr.surfaces) {
            for (std::size_t i = 0; i < d; ++i) {
                sum[i] += s.w[i];
                sq[i] += s.w[i] * s.w[i];
            }
            ++count;
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double mu = sum[i] / static_cast<double>(count);
        const double var = std::max(0.0, sq[i] / static_cast<double>(count) - mu * mu);
        const double sd = std::sqrt(var);
        model.mean[i] = mu;
        model.scale[i] = sd > 1e-12 * std::max(1.0, std::abs(mu)) ? sd : 1.0;
    }

    const WindowSet train_windows = make_windows(train_set, cfg.window_len);
    const WindowSet val_windows = make_windows(val_set, cfg.window_len);
    const Standardized data = standardize_set(train_windows, model.mean, model.scale);
    if (cfg.arch == WorldModelArch::recurrent) {
        const Standardized val = standardize_set(val_windows, model.mean, model.scale);
        fit_recurrent(model, data, val, model.loss_curve, model.val_curve, model.best_epoch);
    } else {
        fit_affine(model, data);
    }

    model.train_mse = raw_mse(model, train_windows);
    model.val_mse = raw_mse(model, val_windows);
    model.persistence_mse = persistence(val_windows);
    if (!std::isfinite(model.val_mse)) throw TrainingDegenerate("validation MSE is not finite");
    if (cfg.require_beats_persistence && model.persistence_mse > 0.0 && !(model.val_mse < model.persistence_mse)) {
        throw TrainingDegenerate("validation MSE " + format_double(model.val_mse) +
                                 " does not beat the persistence forecast " + format_double(model.persistence_mse));
    }
    return model;
}

nlohmann::json WorldModel::to_json() const {
    nlohmann::json j;
    j["schema"] = "volaxiom.world_model/1";
    j["config"] = {{"window_len", cfg_.window_len},   {"hidden_dim", cfg_.hidden_dim}, {"residual", cfg_.residual},
                   {"learning_rate", cfg_.learning_rate}, {"epochs", cfg_.epochs},
                   {"batch_size", cfg_.batch_size},   {"arch", to_string(cfg_.arch)},
                   {"ridge", cfg_.ridge},             {"val_fraction", cfg_.val_fraction}, {"early_stopping", cfg_.early_stopping},
                   {"seed", cfg_.seed}};
    j["maturities"] = grid_->maturities();
    j["log_moneyness"] = grid_->log_moneyness();
    j["mean"] = mean;
    j["scale"] = scale;
    j["parameters"] = std::vector<double>(params_.data(), params_.data() + params_.size());
    j["train_mse"] = train_mse;
    j["val_mse"] = val_mse;
    j["persistence_mse"] = persistence_mse;
    j["loss_curve"] = loss_curve;
    j["val_curve"] = val_curve;
    j["best_epoch"] = best_epoch;
    return j;
}

WorldModel WorldModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema") != "volaxiom.world_model/1") throw FormatError("unsupported world-model schema");
        const auto& c = j.at("config");
        WorldModelConfig cfg;
        cfg.window_len = c.at("window_len");
        cfg.hidden_dim = c.at("hidden_dim");
        cfg.residual = c.at("residual");
        cfg.learning_rate = c.at("learning_rate");
        cfg.epochs = c.at("epochs");
        cfg.batch_size = c.at("batch_size");
        cfg.arch = parse_world_model_arch(c.at("arch"));
        cfg.ridge = c.at("ridge");
        cfg.val_fraction = c.at("val_fraction");
        cfg.early_stopping = c.at("early_stopping");
        cfg.seed = c.at("seed");
        auto grid = std::make_shared<const SurfaceGrid>(j.at("maturities").get<std::vector<double>>(),
                                                        j.at("log_moneyness").get<std::vector<double>>());
        WorldModel model(cfg, grid);
        model.mean = j.at("mean").get<std::vector<double>>();
        model.scale = j.at("scale").get<std::vector<double>>();
        const auto p = j.at("parameters").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(p.size()) != model.params_.size() || model.mean.size() != grid->d() ||
            model.scale.size() != grid->d()) {
            throw FormatError("world-model checkpoint has inconsistent array sizes");
        }
        model.params_ = Eigen::Map<const nn::Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
        model.train_mse = j.at("train_mse");
        model.val_mse = j.at("val_mse");
        model.persistence_mse = j.at("persistence_mse");
        model.loss_curve = j.value("loss_curve", std::vector<double>{});
        model.val_curve = j.value("val_curve", std::vector<double>{});
        model.best_epoch = j.value("best_epoch", 0);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed world-model checkpoint: ") + e.what());
    }
}

void WorldModel::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump() + "\n"); }

WorldModel WorldModel::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json GhostDiagnostics::to_json() const {
    nlohmann::json j;
    j["mean_pred_penalty"] = mean_pred_penalty;
    j["max_pred_penalty"] = max_pred_penalty;
    j["deltas"] = deltas;
    j["frac_offmanifold"] = frac_offmanifold;
    j["mean_residual_sq"] = mean_residual_sq;
    j["model_mse"] = model_mse;
    j["persistence_mse"] = persistence_mse;
    j["n_predictions"] = n_predictions;
    return j;
}

GhostDiagnostics summarize_predictions(const std::vector<TotalVarianceSurface>& predicted,
                                       const std::vector<TotalVarianceSurface>& truth, const LawManifold& m,
                                       const std::vector<double>& deltas) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw EmptyInput("need a nonempty set of prediction/truth pairs");
    }
    GhostDiagnostics g;
    g.deltas = deltas;
    g.frac_offmanifold.assign(deltas.size(), 0.0);
    g.n_predictions = predicted.size();
    double sq = 0.0;
    std::size_t entries = 0;
    for (std::size_t n = 0; n < predicted.size(); ++n) {
        const double pen = m.law_penalty(predicted[n]);
        g.mean_pred_penalty += pen;
        g.max_pred_penalty = std::max(g.max_pred_penalty, pen);
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            if (pen > deltas[k]) g.frac_offmanifold[k] += 1.0;
        }
        double r = 0.0;
        for (std::size_t i = 0; i < predicted[n].size(); ++i) {
            const double e = predicted[n][i] - truth[n][i];
            r += e * e;
        }
        sq += r;
        entries += predicted[n].size();
    }
    const auto count = static_cast<double>(predicted.size());
    g.mean_pred_penalty /= count;
    for (double& f : g.frac_offmanifold) f /= count;
    g.mean_residual_sq = sq / count;
    g.model_mse = sq / static_cast<double>(entries);
    return g;
}

GhostDiagnostics diagnose(const WorldModel& model, const std::vector<Trajectory>& dataset, const LawManifold& m,
                          const std::vector<double>& deltas) {
    const WindowSet ws = make_windows(dataset, model.config().window_len);
    if (ws.size() == 0) throw EmptyInput("no complete windows in the diagnostic dataset");
    std::vector<TotalVarianceSurface> predicted, truth;
    predicted.reserve(ws.size());
    for (std::size_t n = 0; n < ws.size(); ++n) {
        std::vector<const std::vector<double>*> win;
        for (const auto* s : ws.windows[n]) win.push_back(&s->w);
        predicted.emplace_back(model.grid(), model.predict_raw(win));
        truth.push_back(*ws.targets[n]);
    }
    GhostDiagnostics g = summarize_predictions(predicted, truth, m, deltas);
    g.persistence_mse = persistence(ws);
    return g;
}

} // namespace volaxiom
