#pragma once

#include <cmath>
#include <cstdint>

#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"

namespace stablegnn {

struct AdamState {
    GnnParams m;
    GnnParams v;
    std::uint64_t step = 0;
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;

    static AdamState make(const GnnConfig& cfg, double lr = 0.005, double beta1 = 0.9,
                          double beta2 = 0.999) {
        AdamState s;
        s.m = GnnParams::zeros(cfg);
        s.v = GnnParams::zeros(cfg);
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        return s;
    }
};

/// Standard Adam update with bias correction. Mutates params and state; the
/// caller serializes access (single trainer thread owns both).
inline void adam_step(GnnParams& params, const GnnParams& grads, AdamState& state) {
    if (!params.congruent(grads) || !params.congruent(state.m) || !params.congruent(state.v))
        fail(errc::shape_mismatch, "adam_step: incongruent shapes");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));

    for (std::size_t l = 0; l < params.layers(); ++l) {
        for (std::size_t k = 0; k < params.taps(l); ++k) {
            double* p = params.at(l, k).data();
            const double* g = grads.at(l, k).data();
            double* m = state.m.at(l, k).data();
            double* v = state.v.at(l, k).data();
            const std::size_t count = params.at(l, k).rows() * params.at(l, k).cols();
            for (std::size_t i = 0; i < count; ++i) {
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
            }
        }
    }
}

} // namespace stablegnn
