#include "volaxiom/nn.hpp"

#include "volaxiom/errors.hpp"

#include <cmath>

namespace volaxiom::nn {

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Slot Layout::add(Eigen::Index rows, Eigen::Index cols) {
    Slot s{size_, rows, cols};
    size_ += rows * cols;
    return s;
}

void uniform_init(Vector& params, const Slot& s, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < s.size(); ++i) params[s.offset + i] = u(rng);
}

Matrix sigmoid(const Matrix& a) {
    return (1.0 + (-a.array()).exp()).inverse().matrix();
}

GruRegressor::GruRegressor(Eigen::Index input_dim, Eigen::Index hidden_dim, bool residual)
    : d_(input_dim), h_(hidden_dim), residual_(residual) {
    if (input_dim < 1 || hidden_dim < 1) throw InvalidArgument("GRU dimensions must be positive");
    wz_ = layout_.add(h_, d_);
    uz_ = layout_.add(h_, h_);
    bz_ = layout_.add(h_, 1);
    wr_ = layout_.add(h_, d_);
    ur_ = layout_.add(h_, h_);
    br_ = layout_.add(h_, 1);
    wn_ = layout_.add(h_, d_);
    un_ = layout_.add(h_, h_);
    bn_ = layout_.add(h_, 1);
    bun_ = layout_.add(h_, 1);
    wo_ = layout_.add(d_, h_);
    bo_ = layout_.add(d_, 1);
}

void GruRegressor::initialize(Vector& params, Rng& rng) const {
    params = Vector::Zero(layout_.size());
    const double bound = 1.0 / std::sqrt(static_cast<double>(h_));
    for (const Slot* s : {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wn_, &un_, &bn_, &bun_}) {
        uniform_init(params, *s, bound, rng);
    }
    if (residual_) return; // zero decoder: an untrained residual model is the persistence forecast
    uniform_init(params, wo_, bound, rng);
    uniform_init(params, bo_, bound, rng);
}

namespace {

struct GruStep {
    Matrix h_prev, z, r, n, hn;
};

} // namespace

static Matrix gru_run(const Vector& p, const std::vector<Matrix>& xs, Eigen::Index h, const Slot& wz, const Slot& uz,
                      const Slot& bz, const Slot& wr, const Slot& ur, const Slot& br, const Slot& wn, const Slot& un,
                      const Slot& bn, const Slot& bun, std::vector<GruStep>* tape) {
    const Eigen::Index batch = xs.front().cols();
    Matrix state = Matrix::Zero(h, batch);
    for (const auto& x : xs) {
        GruStep s;
        s.z = sigmoid((wz.of(p) * x + uz.of(p) * state).colwise() + bz.of(p).col(0));
        s.r = sigmoid((wr.of(p) * x + ur.of(p) * state).colwise() + br.of(p).col(0));
        s.hn = (un.of(p) * state).colwise() + bun.of(p).col(0);
        const Matrix an = (wn.of(p) * x).colwise() + bn.of(p).col(0);
        s.n = (an.array() + s.r.array() * s.hn.array()).tanh().matrix();
        Matrix next = ((1.0 - s.z.array()) * s.n.array() + s.z.array() * state.array()).matrix();
        if (tape) {
            s.h_prev = std::move(state);
            tape->push_back(std::move(s));
        }
        state = std::move(next);
    }
    return state;
}

Matrix GruRegressor::forward(const Vector& params, const std::vector<Matrix>& xs) const {
    if (xs.empty()) throw InvalidArgument("GRU needs at least one input step");
    const Matrix state = gru_run(params, xs, h_, wz_, uz_, bz_, wr_, ur_, br_, wn_, un_, bn_, bun_, nullptr);
    Matrix y = (wo_.of(params) * state).colwise() + bo_.of(params).col(0);
    if (residual_) y += xs.back();
    return y;
}

double GruRegressor::loss(const Vector& params, const std::vector<Matrix>& xs, const Matrix& target,
                          Vector* grad) const {
    if (xs.empty()) throw InvalidArgument("GRU needs at least one input step");
    std::vector<GruStep> tape;
    tape.reserve(xs.size());
    const Matrix state = gru_run(params, xs, h_, wz_, uz_, bz_, wr_, ur_, br_, wn_, un_, bn_, bun_, grad ? &tape : nullptr);
    Matrix y = (wo_.of(params) * state).colwise() + bo_.of(params).col(0);
    if (residual_) y += xs.back();
    const Matrix err = y - target;
    const double count = static_cast<double>(err.size());
    const double value = err.squaredNorm() / count;
    if (!grad) return value;

    Vector& g = *grad;
    if (g.size() != layout_.size()) g = Vector::Zero(layout_.size());
    const Matrix dy = (2.0 / count) * err;
    wo_.of(g) += dy * state.transpose();
    bo_.of(g) += dy.rowwise().sum();
    Matrix dh = wo_.of(params).transpose() * dy;

    for (std::size_t t = xs.size(); t-- > 0;) {
        const GruStep& s = tape[t];
        const Matrix& x = xs[t];
        const Matrix dn = (dh.array() * (1.0 - s.z.array())).matrix();
        const Matrix dz = (dh.array() * (s.h_prev.array() - s.n.array())).matrix();
        Matrix dprev = (dh.array() * s.z.array()).matrix();

        const Matrix dan = (dn.array() * (1.0 - s.n.array().square())).matrix();
        wn_.of(g) += dan * x.transpose();
        bn_.of(g) += dan.rowwise().sum();
        const Matrix dr = (dan.array() * s.hn.array()).matrix();
        const Matrix dhn = (dan.array() * s.r.array()).matrix();
        un_.of(g) += dhn * s.h_prev.transpose();
        bun_.of(g) += dhn.rowwise().sum();
        dprev.noalias() += un_.of(params).transpose() * dhn;

        const Matrix dar = (dr.array() * s.r.array() * (1.0 - s.r.array())).matrix();
        wr_.of(g) += dar * x.transpose();
        ur_.of(g) += dar * s.h_prev.transpose();
        br_.of(g) += dar.rowwise().sum();
        dprev.noalias() += ur_.of(params).transpose() * dar;

        const Matrix daz = (dz.array() * s.z.array() * (1.0 - s.z.array())).matrix();
        wz_.of(g) += daz * x.transpose();
        uz_.of(g) += daz * s.h_prev.transpose();
        bz_.of(g) += daz.rowwise().sum();
        dprev.noalias() += uz_.of(params).transpose() * daz;

        dh = std::move(dprev);
    }
    return value;
}

TanhTrunk::TanhTrunk(Layout& layout, Eigen::Index input_dim, const std::vector<int>& hidden)
    : input_dim_(input_dim) {
    Eigen::Index prev = input_dim;
    for (int width : hidden) {
        if (width < 1) throw InvalidArgument("hidden layer widths must be positive");
        weights_.push_back(layout.add(width, prev));
        biases_.push_back(layout.add(width, 1));
        prev = width;
    }
}

Eigen::Index TanhTrunk::output_dim() const { return weights_.empty() ? input_dim_ : weights_.back().rows; }

void TanhTrunk::initialize(Vector& params, Rng& rng) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        uniform_init(params, weights_[l], std::sqrt(6.0 / static_cast<double>(weights_[l].cols + weights_[l].rows)), rng);
        biases_[l].of(params).setZero();
    }
}

Matrix TanhTrunk::forward(const Vector& params, const Matrix& x, Cache* cache) const {
    Matrix a = x;
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(x);
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        a = ((weights_[l].of(params) * a).colwise() + biases_[l].of(params).col(0)).array().tanh().matrix();
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

Matrix TanhTrunk::backward(const Vector& params, const Cache& cache, const Matrix& d_out, Vector& grad) const {
    Matrix d = d_out;
    for (std::size_t l = weights_.size(); l-- > 0;) {
        const Matrix& out = cache.activations[l + 1];
        const Matrix& in = cache.activations[l];
        const Matrix da = (d.array() * (1.0 - out.array().square())).matrix();
        weights_[l].of(grad) += da * in.transpose();
        biases_[l].of(grad) += da.rowwise().sum();
        d = weights_[l].of(params).transpose() * da;
    }
    return d;
}

} // namespace volaxiom::nn
