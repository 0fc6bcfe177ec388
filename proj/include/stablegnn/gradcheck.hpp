#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stablegnn/gnn.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/rng.hpp"

namespace stablegnn {

/// Central finite differences of smooth-L1 ∘ forward w.r.t. every filter
/// coefficient. Touches only the forward path, so it stays an independent
/// check on backward().
inline GnnParams finite_difference_grad(const Gso& g, const GraphSignal& x, const GraphSignal& y,
                                        const NodeMask& mask, const GnnParams& params,
                                        const GnnConfig& cfg, double beta = 1.0,
                                        double h = 1e-5) {
    GnnParams fd = GnnParams::zeros(cfg);
    GnnParams work = params;
    const std::size_t count = params.coord_count();
    for (std::size_t idx = 0; idx < count; ++idx) {
        const double orig = work.get_coord(idx);
        work.set_coord(idx, orig + h);
        const double up =
            loss_smooth_l1(forward_value(g, x, work, cfg), y, mask, beta).first;
        work.set_coord(idx, orig - h);
        const double down =
            loss_smooth_l1(forward_value(g, x, work, cfg), y, mask, beta).first;
        work.set_coord(idx, orig);
        fd.set_coord(idx, (up - down) / (2.0 * h));
    }
    return fd;
}

inline double gradient_rel_error(const GnnParams& analytic, const GnnParams& fd) {
    double worst = 0.0;
    const std::size_t count = analytic.coord_count();
    for (std::size_t idx = 0; idx < count; ++idx) {
        const double a = analytic.get_coord(idx);
        const double f = fd.get_coord(idx);
        const double denom = std::max({std::abs(a), std::abs(f), 1e-6});
        worst = std::max(worst, std::abs(a - f) / denom);
    }
    return worst;
}

struct GradCheckCase {
    std::string architecture;
    std::size_t taps = 0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    double max_rel_error = 0.0;
};

namespace detail {

inline Gso random_test_graph(std::size_t n, Rng& rng) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = rng.normal();
            m(i, j) = v;
            m(j, i) = v;
        }
    Gso g(std::move(m));
    Matrix scaled = g.matrix();
    scaled *= 1.0 / g.spectral_norm();
    return Gso(std::move(scaled));
}

/// Finite differencing breaks down within h of the ReLU and smooth-L1 kinks;
/// reject fixtures that sit too close to either.
inline bool fixture_clear_of_kinks(const Gso& g, const GraphSignal& x, const GraphSignal& y,
                                   const NodeMask& mask, const GnnParams& params,
                                   const GnnConfig& cfg, double beta, double margin) {
    auto [y_hat, tape] = forward(g, x, params, cfg);
    for (std::size_t l = 0; l < cfg.layer_count(); ++l) {
        if (cfg.layer_nonlinearity(l) != Nonlinearity::ReLU) continue;
        const Matrix& pre = tape.preact[l];
        for (std::size_t i = 0; i < pre.rows(); ++i)
            for (std::size_t j = 0; j < pre.cols(); ++j)
                if (std::abs(pre(i, j)) < margin) return false;
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (std::abs(std::abs(y_hat[i] - y[i]) - beta) < margin) return false;
    }
    return true;
}

} // namespace detail

/// The standard gradient-check grid: both architecture families at reduced
/// widths, taps in {1, 2, 5}, on a small random graph.
inline GradCheckReport run_gradcheck(std::uint64_t seed = 7, double h = 1e-5) {
    const std::vector<std::vector<std::size_t>> shapes = {
        {1, 2, 1}, {1, 4, 1}, {1, 2, 2, 1}, {1, 4, 2, 1}};
    const std::vector<std::size_t> taps = {1, 2, 5};
    const std::size_t n = 8;
    const double beta = 1.0;

    GradCheckReport report;
    Rng graph_rng = Rng::stream(seed, 0x6a);
    const Gso g = detail::random_test_graph(n, graph_rng);

    for (const auto& shape : shapes) {
        for (const auto k : taps) {
            GnnConfig cfg;
            cfg.features = shape;
            cfg.taps = k;
            cfg.readout_taps = k;

            // Deterministic retry until the fixture is clear of both kinks.
            GnnParams params;
            GraphSignal x(n), y(n);
            NodeMask mask(n, 1);
            bool ok = false;
            for (std::uint64_t attempt = 0; attempt < 64 && !ok; ++attempt) {
                Rng rng = Rng::stream(seed, 0x100 + attempt * 131 + k * 7 + shape.size());
                params = GnnParams::init_uniform(cfg, rng);
                for (std::size_t i = 0; i < n; ++i) {
                    x[i] = 2.0 * rng.normal();
                    y[i] = rng.normal();
                }
                ok = detail::fixture_clear_of_kinks(g, x, y, mask, params, cfg, beta, 1e-3);
            }
            if (!ok) fail(errc::no_convergence, "could not find a kink-free gradcheck fixture");

            auto [y_hat, tape] = forward(g, x, params, cfg);
            auto [value, grad_y] = loss_smooth_l1(y_hat, y, mask, beta);
            const GnnParams analytic = backward(tape, grad_y, g, params, cfg);
            const GnnParams fd = finite_difference_grad(g, x, y, mask, params, cfg, beta, h);

            GradCheckCase c;
            c.architecture = cfg.describe();
            c.taps = k;
            c.rel_error = gradient_rel_error(analytic, fd);
            report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
            report.cases.push_back(std::move(c));
        }
    }
    return report;
}

} // namespace stablegnn
