#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "stablegnn/errors.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/matrix.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"

namespace stablegnn {

enum class Nonlinearity { ReLU, Identity };

/// Architecture of a polynomial-filter GNN. `features` runs from the single
/// input feature to the single output feature, e.g. {1, 64, 1} for one hidden
/// bank of 64 filters plus the readout. Hidden layers use `taps` filter taps
/// and ReLU; the final (readout) layer uses `readout_taps` and no
/// nonlinearity so it can emit arbitrary real values per node.
struct GnnConfig {
    std::vector<std::size_t> features;
    std::size_t taps = 5;
    std::size_t readout_taps = 5;

    std::size_t layer_count() const { return features.size() - 1; }
    std::size_t hidden_layer_count() const { return layer_count() - 1; }
    std::size_t layer_in(std::size_t l) const { return features[l]; }
    std::size_t layer_out(std::size_t l) const { return features[l + 1]; }
    std::size_t layer_taps(std::size_t l) const {
        return l + 1 == layer_count() ? readout_taps : taps;
    }
    Nonlinearity layer_nonlinearity(std::size_t l) const {
        return l + 1 == layer_count() ? Nonlinearity::Identity : Nonlinearity::ReLU;
    }

    void validate() const {
        if (features.size() < 2) fail(errc::bad_config, "need at least one layer");
        if (features.front() != 1 || features.back() != 1)
            fail(errc::bad_config, "input and output must have one feature");
        for (auto f : features)
            if (f == 0) fail(errc::bad_config, "zero-width feature bank");
        if (taps == 0 || readout_taps == 0) fail(errc::bad_config, "taps must be >= 1");
    }

    std::string describe() const {
        std::string s;
        for (std::size_t i = 0; i < features.size(); ++i)
            s += (i ? "-" : "") + std::to_string(features[i]);
        return s + " K=" + std::to_string(taps) + " Kr=" + std::to_string(readout_taps);
    }

    friend bool operator==(const GnnConfig& a, const GnnConfig& b) {
        return a.features == b.features && a.taps == b.taps && a.readout_taps == b.readout_taps;
    }
};

/// Filter coefficients H[l][k], each an F_{l-1} x F_l matrix. Also serves as
/// the gradient / Adam-moment container since those are shape-congruent.
class GnnParams {
  public:
    GnnParams() = default;

    static GnnParams zeros(const GnnConfig& cfg) {
        cfg.validate();
        GnnParams p;
        p.h_.resize(cfg.layer_count());
        for (std::size_t l = 0; l < cfg.layer_count(); ++l) {
            p.h_[l].reserve(cfg.layer_taps(l));
            for (std::size_t k = 0; k < cfg.layer_taps(l); ++k)
                p.h_[l].emplace_back(cfg.layer_in(l), cfg.layer_out(l));
        }
        return p;
    }

    /// i.i.d. uniform on [-a, a] with a = 1/sqrt(F_in * K); keeps activations
    /// O(1) under a norm-1 shift operator.
    static GnnParams init_uniform(const GnnConfig& cfg, Rng& rng) {
        GnnParams p = zeros(cfg);
        for (std::size_t l = 0; l < p.layers(); ++l) {
            const double a = 1.0 / std::sqrt(double(cfg.layer_in(l) * cfg.layer_taps(l)));
            for (auto& hk : p.h_[l])
                for (std::size_t i = 0; i < hk.rows(); ++i)
                    for (std::size_t j = 0; j < hk.cols(); ++j)
                        hk(i, j) = a * (2.0 * rng.uniform01() - 1.0);
        }
        return p;
    }

    std::size_t layers() const { return h_.size(); }
    std::size_t taps(std::size_t l) const { return h_[l].size(); }
    Matrix& at(std::size_t l, std::size_t k) { return h_[l][k]; }
    const Matrix& at(std::size_t l, std::size_t k) const { return h_[l][k]; }

    bool congruent(const GnnParams& o) const {
        if (h_.size() != o.h_.size()) return false;
        for (std::size_t l = 0; l < h_.size(); ++l) {
            if (h_[l].size() != o.h_[l].size()) return false;
            for (std::size_t k = 0; k < h_[l].size(); ++k)
                if (!h_[l][k].same_shape(o.h_[l][k])) return false;
        }
        return true;
    }

    bool matches(const GnnConfig& cfg) const {
        if (h_.size() != cfg.layer_count()) return false;
        for (std::size_t l = 0; l < h_.size(); ++l) {
            if (h_[l].size() != cfg.layer_taps(l)) return false;
            for (const auto& hk : h_[l])
                if (hk.rows() != cfg.layer_in(l) || hk.cols() != cfg.layer_out(l)) return false;
        }
        return true;
    }

    void for_each(const std::function<void(Matrix&)>& f) {
        for (auto& layer : h_)
            for (auto& hk : layer) f(hk);
    }
    void for_each(const std::function<void(const Matrix&)>& f) const {
        for (const auto& layer : h_)
            for (const auto& hk : layer) f(hk);
    }

    /// this += alpha * other (congruent shapes required).
    void axpy(double alpha, const GnnParams& o) {
        if (!congruent(o)) fail(errc::shape_mismatch, "axpy on incongruent params");
        for (std::size_t l = 0; l < h_.size(); ++l)
            for (std::size_t k = 0; k < h_[l].size(); ++k) {
                double* d = h_[l][k].data();
                const double* s = o.h_[l][k].data();
                const std::size_t m = h_[l][k].rows() * h_[l][k].cols();
                for (std::size_t i = 0; i < m; ++i) d[i] += alpha * s[i];
            }
    }

    void scale(double a) {
        for_each([a](Matrix& m) { m *= a; });
    }

    std::size_t coord_count() const {
        std::size_t c = 0;
        for_each([&c](const Matrix& m) { c += m.rows() * m.cols(); });
        return c;
    }

    double get_coord(std::size_t idx) const {
        for (const auto& layer : h_)
            for (const auto& hk : layer) {
                const std::size_t m = hk.rows() * hk.cols();
                if (idx < m) return hk.data()[idx];
                idx -= m;
            }
        fail(errc::shape_mismatch, "coordinate index out of range");
    }

    void set_coord(std::size_t idx, double v) {
        for (auto& layer : h_)
            for (auto& hk : layer) {
                const std::size_t m = hk.rows() * hk.cols();
                if (idx < m) {
                    hk.data()[idx] = v;
                    return;
                }
                idx -= m;
            }
        fail(errc::shape_mismatch, "coordinate index out of range");
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&ok](const Matrix& m) { ok = ok && m.all_finite(); });
        return ok;
    }

    double max_abs() const {
        double v = 0.0;
        for_each([&v](const Matrix& m) { v = std::max(v, m.max_abs()); });
        return v;
    }

    friend bool operator==(const GnnParams& a, const GnnParams& b) { return a.h_ == b.h_; }

  private:
    std::vector<std::vector<Matrix>> h_;
};

/// Everything the backward pass needs from the last forward call: the shifted
/// input stacks S^k X_{l-1} and the pre-activations of every layer.
struct ForwardTape {
    std::vector<std::vector<Matrix>> shifted; // [layer][tap] = S^k X_{l-1}
    std::vector<Matrix> preact;               // [layer] pre-nonlinearity output
    std::size_t n_nodes = 0;
    bool valid = false;
};

/// y = sum_k S^k X H_k, evaluated with the shift recursion Z_{k+1} = S Z_k.
inline Matrix filter_apply(const Gso& g, const Matrix& x, const std::vector<Matrix>& taps) {
    if (taps.empty()) fail(errc::dimension_mismatch, "filter needs at least one tap");
    if (x.rows() != g.n()) fail(errc::dimension_mismatch, "filter input rows != node count");
    for (const auto& hk : taps)
        if (hk.rows() != x.cols() || hk.cols() != taps.front().cols())
            fail(errc::dimension_mismatch, "tap coefficient shape mismatch");

    Matrix out(x.rows(), taps.front().cols());
    Matrix z = x;
    gemm_acc(z, taps[0], out);
    for (std::size_t k = 1; k < taps.size(); ++k) {
        z = matmul(g.matrix(), z);
        gemm_acc(z, taps[k], out);
    }
    return out;
}

namespace detail {

inline Matrix signal_as_column(const GraphSignal& x) {
    Matrix m(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) m(i, 0) = x[i];
    return m;
}

inline GraphSignal column_as_signal(const Matrix& m) {
    GraphSignal x(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) x[i] = m(i, 0);
    return x;
}

} // namespace detail

/// Full forward pass. The returned tape is owned by the caller and consumed
/// by backward(); it is only valid for the (g, params, cfg) it was built with.
inline std::pair<GraphSignal, ForwardTape> forward(const Gso& g, const GraphSignal& x,
                                                   const GnnParams& params, const GnnConfig& cfg) {
    cfg.validate();
    if (!params.matches(cfg)) fail(errc::shape_mismatch, "params do not match config");
    if (x.size() != g.n()) fail(errc::dimension_mismatch, "input length != node count");

    ForwardTape tape;
    tape.n_nodes = g.n();
    tape.shifted.resize(cfg.layer_count());
    tape.preact.resize(cfg.layer_count());

    Matrix cur = detail::signal_as_column(x);
    for (std::size_t l = 0; l < cfg.layer_count(); ++l) {
        const std::size_t K = cfg.layer_taps(l);
        auto& stack = tape.shifted[l];
        stack.reserve(K);
        stack.push_back(std::move(cur));
        for (std::size_t k = 1; k < K; ++k) stack.push_back(matmul(g.matrix(), stack.back()));

        Matrix pre(g.n(), cfg.layer_out(l));
        for (std::size_t k = 0; k < K; ++k) gemm_acc(stack[k], params.at(l, k), pre);
        if (!pre.all_finite())
            fail(errc::non_finite_activation, "layer " + std::to_string(l) + " diverged");

        tape.preact[l] = pre;
        if (cfg.layer_nonlinearity(l) == Nonlinearity::ReLU) {
            double* d = pre.data();
            const std::size_t m = pre.rows() * pre.cols();
            for (std::size_t i = 0; i < m; ++i) d[i] = d[i] > 0.0 ? d[i] : 0.0;
        }
        cur = std::move(pre);
    }

    tape.valid = true;
    return {detail::column_as_signal(cur), std::move(tape)};
}

inline GraphSignal forward_value(const Gso& g, const GraphSignal& x, const GnnParams& params,
                                 const GnnConfig& cfg) {
    return forward(g, x, params, cfg).first;
}

/// Smooth L1 over the masked nodes: d^2/(2*beta) inside the quadratic zone,
/// |d| - beta/2 outside. Returns the mean value and its gradient w.r.t. the
/// prediction (zero off-mask).
inline std::pair<double, GraphSignal> loss_smooth_l1(const GraphSignal& y_hat,
                                                     const GraphSignal& y, const NodeMask& mask,
                                                     double beta = 1.0) {
    if (y_hat.size() != y.size() || y_hat.size() != mask.size())
        fail(errc::dimension_mismatch, "loss inputs differ in length");
    const std::size_t cnt = mask_count(mask);
    if (cnt == 0) fail(errc::empty_mask, "loss mask selects no node");

    double value = 0.0;
    GraphSignal grad(y_hat.size(), 0.0);
    const double inv = 1.0 / double(cnt);
    for (std::size_t i = 0; i < y_hat.size(); ++i) {
        if (!mask[i]) continue;
        const double d = y_hat[i] - y[i];
        if (std::abs(d) < beta) {
            value += d * d / (2.0 * beta) * inv;
            grad[i] = d / beta * inv;
        } else {
            value += (std::abs(d) - beta / 2.0) * inv;
            grad[i] = (d > 0.0 ? 1.0 : -1.0) * inv;
        }
    }
    return {value, std::move(grad)};
}

/// Exact gradients of the scalar loss w.r.t. every filter coefficient.
/// dL/dH_lk = (S^k X_{l-1})^T D_l, with D_l the upstream gradient pushed
/// through the nonlinearity; the signal gradient propagates down as
/// sum_k S^k D_l H_lk^T (S symmetric).
inline GnnParams backward(const ForwardTape& tape, const GraphSignal& grad_y_hat, const Gso& g,
                          const GnnParams& params, const GnnConfig& cfg) {
    if (!tape.valid || tape.n_nodes != g.n() || tape.preact.size() != cfg.layer_count())
        fail(errc::stale_tape, "tape does not match this forward configuration");
    if (!params.matches(cfg)) fail(errc::shape_mismatch, "params do not match config");
    if (grad_y_hat.size() != g.n())
        fail(errc::dimension_mismatch, "upstream gradient length != node count");

    GnnParams grads = GnnParams::zeros(cfg);
    Matrix delta = detail::signal_as_column(grad_y_hat);

    for (std::size_t l = cfg.layer_count(); l-- > 0;) {
        const std::size_t K = cfg.layer_taps(l);
        if (tape.shifted[l].size() != K || tape.shifted[l][0].cols() != cfg.layer_in(l))
            fail(errc::stale_tape, "tape layer " + std::to_string(l) + " shape mismatch");

        if (cfg.layer_nonlinearity(l) == Nonlinearity::ReLU) {
            // ReLU subgradient at 0 taken as 0.
            const Matrix& pre = tape.preact[l];
            for (std::size_t i = 0; i < delta.rows(); ++i)
                for (std::size_t j = 0; j < delta.cols(); ++j)
                    if (pre(i, j) <= 0.0) delta(i, j) = 0.0;
        }

        for (std::size_t k = 0; k < K; ++k)
            gemm_at_b_acc(tape.shifted[l][k], delta, grads.at(l, k));

        if (l > 0) {
            // Horner form of sum_k S^k (delta H_k^T).
            Matrix down(g.n(), cfg.layer_in(l));
            gemm_a_bt_acc(delta, params.at(l, K - 1), down);
            for (std::size_t k = K - 1; k-- > 0;) {
                down = matmul(g.matrix(), down);
                gemm_a_bt_acc(delta, params.at(l, k), down);
            }
            delta = std::move(down);
        }
    }
    return grads;
}

} // namespace stablegnn
