#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lowrank/linalg.hpp"

namespace lowrank {

/// One low-rank adapter: A is n x r, B is r x n.
struct Adapter {
    Matrix a;
    Matrix b;

    Index rank() const { return a.cols(); }
};

inline void validate_adapters(const std::vector<Adapter>& adapters, Index n) {
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        const auto& ad = adapters[i];
        const std::string where = "adapter " + std::to_string(i + 1) + ": ";
        if (ad.a.rows() != n || ad.b.cols() != n)
            throw ShapeError(where + "A must be n x r and B r x n with n = " + std::to_string(n));
        if (ad.a.cols() != ad.b.rows())
            throw ShapeError(where + "inner ranks differ (" + shape_str(ad.a.rows(), ad.a.cols()) + " vs " +
                             shape_str(ad.b.rows(), ad.b.cols()) + ")");
        if (ad.a.cols() < 1) throw ShapeError(where + "rank must be >= 1");
    }
}

enum class Activation { Identity, Relu, Tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

inline Matrix apply_activation(Activation act, Matrix z) {
    switch (act) {
        case Activation::Identity: break;
        case Activation::Relu: z = z.cwiseMax(0.0); break;
        case Activation::Tanh: z = z.array().tanh().matrix(); break;
    }
    return z;
}

/// Base weight W plus ordered adapters; order i evaluates
/// f((W + sum_{j<=i} A_j B_j) X).
class CascadeModel {
public:
    CascadeModel(Matrix w, std::vector<Adapter> adapters, Activation activation = Activation::Identity)
        : w_(std::move(w)), adapters_(std::move(adapters)), activation_(activation) {
        if (w_.rows() != w_.cols() || w_.rows() < 1) throw ShapeError("CascadeModel: W must be square and nonempty");
        validate_adapters(adapters_, w_.rows());
    }

    Index n() const { return w_.rows(); }
    int k() const { return static_cast<int>(adapters_.size()); }
    Index total_rank() const {
        Index r = 0;
        for (const auto& ad : adapters_) r += ad.rank();
        return r;
    }
    const Matrix& weight() const { return w_; }
    const std::vector<Adapter>& adapters() const { return adapters_; }
    Activation activation() const { return activation_; }

    /// Model with only the first j adapters.
    CascadeModel truncated(int j) const {
        if (j < 0 || j > k()) throw std::out_of_range("CascadeModel::truncated: order out of range");
        return CascadeModel(w_, std::vector<Adapter>(adapters_.begin(), adapters_.begin() + j), activation_);
    }

    /// [B_1; ...; B_k], r x n.
    Matrix stacked_b() const {
        Matrix out(total_rank(), n());
        Index offset = 0;
        for (const auto& ad : adapters_) {
            out.middleRows(offset, ad.rank()) = ad.b;
            offset += ad.rank();
        }
        return out;
    }

private:
    Matrix w_;
    std::vector<Adapter> adapters_;
    Activation activation_;
};

struct EvalOutput {
    std::vector<Matrix> orders;  // G_0..G_k, each n x b
    std::uint64_t flops_used = 0;
};

inline void check_input(const CascadeModel& model, const Matrix& x) {
    if (x.rows() != model.n())
        throw ShapeError("input X is " + shape_str(x.rows(), x.cols()) + ", expected " + std::to_string(model.n()) +
                         " rows");
}

/// Pre-activation Z_{<=0..k} via one stacked B product and a running sum.
inline std::vector<Matrix> cascade_preactivations(const CascadeModel& model, const Matrix& x, FlopCounter* counter) {
    check_input(model, x);
    std::vector<Matrix> z;
    z.reserve(static_cast<std::size_t>(model.k()) + 1);
    z.push_back(multiply(model.weight(), x, counter));
    if (model.k() == 0) return z;
    const Matrix y = multiply(model.stacked_b(), x, counter);
    Index offset = 0;
    for (const auto& ad : model.adapters()) {
        const Matrix zi = multiply(ad.a, y.middleRows(offset, ad.rank()), counter);
        offset += ad.rank();
        Matrix next = z.back();
        add_into(next, zi, counter);
        z.push_back(std::move(next));
    }
    return z;
}

inline EvalOutput eval_all_orders(const CascadeModel& model, const Matrix& x) {
    FlopCounter counter;
    auto z = cascade_preactivations(model, x, &counter);
    EvalOutput out;
    for (auto& zi : z) out.orders.push_back(apply_activation(model.activation(), std::move(zi)));
    out.flops_used = counter.total();
    return out;
}

/// Dense oracle: materializes W_i = W_{i-1} + A_i B_i and multiplies each by X.
inline EvalOutput eval_naive(const CascadeModel& model, const Matrix& x) {
    check_input(model, x);
    FlopCounter counter;
    EvalOutput out;
    Matrix wi = model.weight();
    out.orders.push_back(apply_activation(model.activation(), multiply(wi, x, &counter)));
    for (const auto& ad : model.adapters()) {
        add_into(wi, multiply(ad.a, ad.b, &counter), &counter);
        out.orders.push_back(apply_activation(model.activation(), multiply(wi, x, &counter)));
    }
    out.flops_used = counter.total();
    return out;
}

struct FlopEstimate {
    std::uint64_t cascade = 0;
    std::uint64_t naive = 0;
};

/// cascade = 2n^2 b + 2rnb + sum_i 2 n r_i b + knb
/// naive   = (k+1) 2n^2 b + sum_i (2 n^2 r_i + n^2)
inline FlopEstimate flop_estimate(const CascadeModel& model, Index b) {
    const auto n = static_cast<std::uint64_t>(model.n());
    const auto ub = static_cast<std::uint64_t>(b);
    const auto k = static_cast<std::uint64_t>(model.k());
    const auto r = static_cast<std::uint64_t>(model.total_rank());
    FlopEstimate e;
    e.cascade = 2 * n * n * ub + k * n * ub;
    if (k > 0) e.cascade += 2 * r * n * ub;
    for (const auto& ad : model.adapters()) e.cascade += 2 * n * static_cast<std::uint64_t>(ad.rank()) * ub;
    e.naive = (k + 1) * 2 * n * n * ub;
    for (const auto& ad : model.adapters()) e.naive += 2 * n * n * static_cast<std::uint64_t>(ad.rank()) + n * n;
    return e;
}

}  // namespace lowrank
