#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/matrix.hpp"
#include "stablegnn/parallel.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"

namespace stablegnn {

enum class PerturbationKind { Additive, Relative };

/// How the norm of the error matrix is drawn: scaled uniformly on (0, eps]
/// or pinned to the boundary eps exactly.
enum class NormMode { ScaledUniform, ExactBoundary };

struct PerturbationModel {
    PerturbationKind kind = PerturbationKind::Relative;
    double epsilon = 0.0;
    NormMode mode = NormMode::ScaledUniform;

    void validate() const {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            fail(errc::bad_config, "perturbation.epsilon must be finite and >= 0");
    }
};

/// Symmetric error matrix with ||E|| <= epsilon: Gaussian direction, norm
/// rescaled by t * epsilon / sigma with t ~ U(0,1] (ScaledUniform) or t = 1
/// (ExactBoundary). The spectral norm used for rescaling is resolved to well
/// below the 1e-9 budget the boundary mode promises.
inline Matrix sample_error_matrix(std::size_t n, double epsilon, NormMode mode, Rng& rng,
                                  double* realized_norm = nullptr) {
    Matrix e(n, n);
    if (realized_norm) *realized_norm = 0.0;
    if (epsilon == 0.0) return e;
    for (std::size_t i = 0; i < n; ++i) {
        e(i, i) = rng.normal();
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = rng.normal();
            e(i, j) = v;
            e(j, i) = v;
        }
    }
    const double t = mode == NormMode::ExactBoundary ? 1.0 : rng.uniform_pos();
    const double sigma = spectral_norm_sym(e, 1e-12, 20000);
    if (sigma == 0.0) return Matrix(n, n);
    e *= t * epsilon / sigma;
    if (realized_norm) *realized_norm = t * epsilon;
    return e;
}

/// Perturbed operator together with the realized ||E|| for logging.
struct PerturbDraw {
    Gso gso;
    double error_norm = 0.0;
};

/// Additive: S + E. Relative: S + ES + SE, built as S + P + P^T with P = ES
/// so the result is symmetric bit-for-bit.
inline PerturbDraw perturb_draw(const Gso& g, const PerturbationModel& model, Rng& rng) {
    model.validate();
    if (model.epsilon == 0.0) return {g, 0.0};

    const std::size_t n = g.n();
    double realized = 0.0;
    Matrix e = sample_error_matrix(n, model.epsilon, model.mode, rng, &realized);

    if (model.kind == PerturbationKind::Additive) {
        Matrix s_hat = g.matrix();
        s_hat += e;
        return {Gso(std::move(s_hat)), realized};
    }
    Matrix p = matmul(e, g.matrix());
    Matrix s_hat = g.matrix();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s_hat(i, j) += p(i, j) + p(j, i);
    return {Gso(std::move(s_hat)), realized};
}

inline Gso perturb(const Gso& g, const PerturbationModel& model, Rng& rng) {
    return perturb_draw(g, model, rng).gso;
}

struct StabilityReport {
    double mean_deviation = 0.0;
    double max_deviation = 0.0;
    std::optional<double> empirical_c; // max deviation / epsilon, when epsilon > 0
    std::size_t evaluations = 0;
};

/// Empirical output deviation ||phi(x,S) - phi(x,S_hat)||_2 over batch x draws.
inline StabilityReport measure_stability(const GnnParams& params, const GnnConfig& cfg,
                                         const Gso& g, const PerturbationModel& model,
                                         const SignalBatch& batch, std::size_t num_draws,
                                         Rng& rng) {
    if (num_draws == 0) fail(errc::bad_config, "need at least one draw");
    batch.validate(g.n());

    std::vector<GraphSignal> nominal(batch.size());
    parallel_for(batch.size(),
                 [&](std::size_t i) { nominal[i] = forward_value(g, batch.inputs[i], params, cfg); });

    std::vector<Gso> draws;
    draws.reserve(num_draws);
    for (std::size_t d = 0; d < num_draws; ++d) draws.push_back(perturb(g, model, rng));

    std::vector<double> devs(batch.size() * num_draws, 0.0);
    parallel_for(devs.size(), [&](std::size_t idx) {
        const std::size_t d = idx / batch.size();
        const std::size_t i = idx % batch.size();
        const GraphSignal out = forward_value(draws[d], batch.inputs[i], params, cfg);
        double acc = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double diff = out[k] - nominal[i][k];
            acc += diff * diff;
        }
        devs[idx] = std::sqrt(acc);
    });

    StabilityReport rep;
    rep.evaluations = devs.size();
    for (double v : devs) {
        rep.mean_deviation += v;
        rep.max_deviation = std::max(rep.max_deviation, v);
    }
    rep.mean_deviation /= double(devs.size());
    if (model.epsilon > 0.0) rep.empirical_c = rep.max_deviation / model.epsilon;
    return rep;
}

} // namespace stablegnn
