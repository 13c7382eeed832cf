#pragma once

// Small dense/recurrent building blocks with hand-written backprop. Every
// network keeps its parameters in one flat vector so that the optimizer,
// checkpoints and finite-difference checks all see the same layout.

#include "volaxiom/rng.hpp"

#include <Eigen/Dense>

#include <vector>

namespace volaxiom::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

class Adam {
public:
    Adam() = default;
    Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(Vector& params, const Vector& grad);
    double learning_rate() const { return lr_; }
    long steps_taken() const { return t_; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    Vector m_;
    Vector v_;
};

// Slice [offset, offset + rows * cols) of a flat vector viewed as a column-major matrix.
struct Slot {
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    Eigen::Index size() const { return rows * cols; }
    MatrixMap of(Vector& v) const { return {v.data() + offset, rows, cols}; }
    ConstMatrixMap of(const Vector& v) const { return {v.data() + offset, rows, cols}; }
};

class Layout {
public:
    Slot add(Eigen::Index rows, Eigen::Index cols);
    Eigen::Index size() const { return size_; }

private:
    Eigen::Index size_ = 0;
};

void uniform_init(Vector& params, const Slot& s, double bound, Rng& rng);

Matrix sigmoid(const Matrix& a);

// Single-layer gated recurrent encoder followed by a dense decoder,
// y = W_o h_L + b_o, optionally added to the last input (residual = true).
class GruRegressor {
public:
    GruRegressor() = default;
    GruRegressor(Eigen::Index input_dim, Eigen::Index hidden_dim, bool residual = true);

    Eigen::Index input_dim() const { return d_; }
    Eigen::Index hidden_dim() const { return h_; }
    Eigen::Index parameter_count() const { return layout_.size(); }
    bool residual() const { return residual_; }

    void initialize(Vector& params, Rng& rng) const;

    // xs[t] is (input_dim x batch); returns (input_dim x batch).
    Matrix forward(const Vector& params, const std::vector<Matrix>& xs) const;

    // Mean squared error over all entries; accumulates the gradient into grad if non-null.
    double loss(const Vector& params, const std::vector<Matrix>& xs, const Matrix& target, Vector* grad) const;

private:
    Eigen::Index d_ = 0;
    Eigen::Index h_ = 0;
    bool residual_ = true;
    Layout layout_;
    Slot wz_, uz_, bz_, wr_, ur_, br_, wn_, un_, bn_, bun_, wo_, bo_;
};

// Tanh multilayer perceptron trunk: input -> hidden[0] -> ... -> hidden[n-1].
class TanhTrunk {
public:
    TanhTrunk() = default;
    TanhTrunk(Layout& layout, Eigen::Index input_dim, const std::vector<int>& hidden);

    Eigen::Index output_dim() const;
    void initialize(Vector& params, Rng& rng) const;

    struct Cache {
        std::vector<Matrix> activations; // activations[0] is the input
    };
    Matrix forward(const Vector& params, const Matrix& x, Cache* cache) const;
    // d_out is dL/d(output); gradients are added into grad. Returns dL/d(input).
    Matrix backward(const Vector& params, const Cache& cache, const Matrix& d_out, Vector& grad) const;

private:
    Eigen::Index input_dim_ = 0;
    std::vector<Slot> weights_;
    std::vector<Slot> biases_;
};

} // namespace volaxiom::nn
