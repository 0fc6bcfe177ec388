#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "stablegnn/adam.hpp"
#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/parallel.hpp"
#include "stablegnn/perturbation.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"

namespace stablegnn {

enum class TrainMode { Unconstrained, Constrained };

struct TrainerConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 5;
    double lr = 0.005;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double eta_d = 0.05;     // dual step size
    double stability_c = 0.25;
    double epsilon = 0.2;    // perturbation magnitude entering the C*eps bound
    std::size_t m_perturbations = 3;
    double slack_eval_fraction = 0.2;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Constrained;
    std::optional<double> lambda_max; // off by default: the dual variable is unclamped
    double loss_beta = 1.0;

    void validate() const {
        if (epochs < 1) fail(errc::bad_config, "trainer.epochs must be >= 1");
        if (batch_size < 1) fail(errc::bad_config, "trainer.batch_size must be >= 1");
        if (m_perturbations < 1) fail(errc::bad_config, "trainer.m_perturbations must be >= 1");
        if (!(slack_eval_fraction > 0.0) || slack_eval_fraction > 1.0)
            fail(errc::bad_config, "trainer.slack_eval_fraction must be in (0, 1]");
        if (!(eta_d > 0.0)) fail(errc::bad_config, "trainer.eta_d must be > 0");
        if (!(stability_c > 0.0)) fail(errc::bad_config, "trainer.stability_c must be > 0");
        if (!(epsilon >= 0.0)) fail(errc::bad_config, "trainer.epsilon must be >= 0");
        if (!(lr > 0.0)) fail(errc::bad_config, "trainer.lr must be > 0");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double slack = std::numeric_limits<double>::quiet_NaN();
    double lambda = 0.0;
    double seconds = 0.0;
    // Mean losses on the slack set behind the slack value; NaN when unconstrained.
    double slack_nominal = std::numeric_limits<double>::quiet_NaN();
    double slack_perturbed = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
    GnnParams params;
    AdamState adam;
    double lambda = 0.0;
    std::size_t epoch = 0;
    std::size_t batches_done = 0;
    Rng data_rng;
    Rng pert_rng;
    std::vector<EpochRecord> history;
};

/// L(H, lambda) = (1 - lambda) * mean(nominal) + lambda * (mean(perturbed) - C*eps).
inline double lagrangian_value(double lambda, const std::vector<double>& nominal_losses,
                               const std::vector<double>& perturbed_losses, double c_eps) {
    if (nominal_losses.empty() || perturbed_losses.empty())
        fail(errc::empty_batch, "lagrangian over empty loss lists");
    double nom = 0.0, pert = 0.0;
    for (double v : nominal_losses) nom += v;
    for (double v : perturbed_losses) pert += v;
    nom /= double(nominal_losses.size());
    pert /= double(perturbed_losses.size());
    return (1.0 - lambda) * nom + lambda * (pert - c_eps);
}

struct PrimalGradient {
    GnnParams grad;
    double nominal_mean = 0.0;
    double perturbed_mean = std::numeric_limits<double>::quiet_NaN();
};

/// Stochastic gradient of the Lagrangian: weight (1-lambda)/N on nominal
/// terms, lambda/(N*M) on each perturbed term. The perturbed passes are
/// skipped outright when lambda == 0 since their weight is exactly zero.
inline PrimalGradient primal_gradient(const SignalBatch& batch, const Gso& g,
                                      const std::vector<Gso>& perturbed_gsos,
                                      const GnnParams& params, double lambda,
                                      const GnnConfig& cfg, double loss_beta = 1.0) {
    const std::size_t n_samples = batch.size();
    if (n_samples == 0) fail(errc::empty_batch, "primal gradient over empty batch");
    batch.validate(g.n());

    const std::size_t m = perturbed_gsos.size();
    const bool use_perturbed = lambda != 0.0 && m > 0;

    std::vector<GnnParams> nominal_grads(n_samples);
    std::vector<double> nominal_losses(n_samples, 0.0);
    std::vector<GnnParams> pert_grads(use_perturbed ? n_samples * m : 0);
    std::vector<double> pert_losses(use_perturbed ? n_samples * m : 0, 0.0);

    const std::size_t total = n_samples + (use_perturbed ? n_samples * m : 0);
    parallel_for(total, [&](std::size_t task) {
        if (task < n_samples) {
            const std::size_t i = task;
            auto [y_hat, tape] = forward(g, batch.inputs[i], params, cfg);
            auto [value, grad_y] = loss_smooth_l1(y_hat, batch.targets[i], batch.masks[i], loss_beta);
            nominal_losses[i] = value;
            nominal_grads[i] = backward(tape, grad_y, g, params, cfg);
        } else {
            const std::size_t idx = task - n_samples;
            const std::size_t i = idx / m;
            const std::size_t j = idx % m;
            const Gso& gj = perturbed_gsos[j];
            auto [y_hat, tape] = forward(gj, batch.inputs[i], params, cfg);
            auto [value, grad_y] = loss_smooth_l1(y_hat, batch.targets[i], batch.masks[i], loss_beta);
            pert_losses[idx] = value;
            pert_grads[idx] = backward(tape, grad_y, gj, params, cfg);
        }
    });

    PrimalGradient out;
    out.grad = GnnParams::zeros(cfg);
    GnnParams nominal_sum = GnnParams::zeros(cfg);
    for (std::size_t i = 0; i < n_samples; ++i) {
        nominal_sum.axpy(1.0, nominal_grads[i]);
        out.nominal_mean += nominal_losses[i];
    }
    out.nominal_mean /= double(n_samples);
    out.grad.axpy((1.0 - lambda) / double(n_samples), nominal_sum);

    if (use_perturbed) {
        GnnParams pert_sum = GnnParams::zeros(cfg);
        double pert_total = 0.0;
        for (std::size_t idx = 0; idx < pert_grads.size(); ++idx) {
            pert_sum.axpy(1.0, pert_grads[idx]);
            pert_total += pert_losses[idx];
        }
        out.perturbed_mean = pert_total / double(n_samples * m);
        out.grad.axpy(lambda / double(n_samples * m), pert_sum);
    }
    return out;
}

/// Projected dual ascent: lambda <- [lambda + eta_d * slack]_+ with an
/// optional experimentation-only upper clamp.
inline double dual_update(double lambda, double slack, double eta_d,
                          std::optional<double> lambda_max = std::nullopt) {
    double next = std::max(0.0, lambda + eta_d * slack);
    if (lambda_max) next = std::min(next, *lambda_max);
    return next;
}

struct SlackRecord {
    double slack = 0.0;
    double nominal_mean = 0.0;
    double perturbed_mean = 0.0;
};

namespace detail {

inline std::vector<double> batch_losses(const SignalBatch& batch, const Gso& g,
                                        const GnnParams& params, const GnnConfig& cfg,
                                        double loss_beta) {
    std::vector<double> losses(batch.size(), 0.0);
    parallel_for(batch.size(), [&](std::size_t i) {
        const GraphSignal y_hat = forward_value(g, batch.inputs[i], params, cfg);
        losses[i] = loss_smooth_l1(y_hat, batch.targets[i], batch.masks[i], loss_beta).first;
    });
    return losses;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

} // namespace detail

/// Constraint-violation estimate on the reserved slack set followed by the
/// projected dual ascent step. Draws m_perturbations fresh operators.
inline SlackRecord dual_step(TrainState& state, const SignalBatch& slack_batch, const Gso& g,
                             const PerturbationModel& pert, const TrainerConfig& cfg,
                             const GnnConfig& model_cfg) {
    if (slack_batch.empty()) fail(errc::empty_slack_set, "slack evaluation set is empty");
    slack_batch.validate(g.n());

    const std::size_t n = slack_batch.size();
    const std::size_t m = cfg.m_perturbations;
    std::vector<Gso> draws;
    draws.reserve(m);
    for (std::size_t j = 0; j < m; ++j) draws.push_back(perturb(g, pert, state.pert_rng));

    const std::vector<double> nominal =
        detail::batch_losses(slack_batch, g, state.params, model_cfg, cfg.loss_beta);

    std::vector<double> perturbed(n * m, 0.0);
    parallel_for(n * m, [&](std::size_t idx) {
        const std::size_t j = idx / n;
        const std::size_t i = idx % n;
        const GraphSignal y_hat =
            forward_value(draws[j], slack_batch.inputs[i], state.params, model_cfg);
        perturbed[idx] =
            loss_smooth_l1(y_hat, slack_batch.targets[i], slack_batch.masks[i], cfg.loss_beta)
                .first;
    });

    SlackRecord rec;
    rec.nominal_mean = detail::mean(nominal);
    rec.perturbed_mean = detail::mean(perturbed);
    rec.slack = rec.perturbed_mean - rec.nominal_mean - cfg.stability_c * cfg.epsilon;
    state.lambda = dual_update(state.lambda, rec.slack, cfg.eta_d, cfg.lambda_max);
    return rec;
}

using EpochObserver = std::function<void(const TrainState&, const EpochRecord&)>;

/// Full training loop. Constrained mode follows the alternating scheme:
/// per batch, M shared perturbation draws and one Adam step on the primal
/// gradient; per epoch, one projected dual ascent step on the slack set.
/// Unconstrained mode optimizes the plain statistical risk (no draws, no
/// dual updates). The perturbation model's magnitude is taken from
/// cfg.epsilon so the constraint bound and the sampled perturbations agree.
inline TrainState train(const Gso& g, const SignalBatch& train_batch,
                        const SignalBatch& slack_batch, const GnnConfig& model_cfg,
                        const TrainerConfig& cfg, PerturbationModel pert,
                        const EpochObserver& observer = nullptr) {
    cfg.validate();
    model_cfg.validate();
    if (train_batch.empty()) fail(errc::empty_batch, "training set is empty");
    train_batch.validate(g.n());
    const bool constrained = cfg.mode == TrainMode::Constrained;
    if (constrained) {
        if (slack_batch.empty()) fail(errc::empty_slack_set, "constrained mode needs a slack set");
        slack_batch.validate(g.n());
    }
    pert.epsilon = cfg.epsilon;
    pert.validate();

    TrainState state;
    Rng init_rng = Rng::stream(cfg.seed, 0x111);
    state.data_rng = Rng::stream(cfg.seed, 0x222);
    state.pert_rng = Rng::stream(cfg.seed, 0x333);
    state.params = GnnParams::init_uniform(model_cfg, init_rng);
    state.adam = AdamState::make(model_cfg, cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    state.lambda = 0.0;

    const std::size_t n_train = train_batch.size();
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates shuffle from the data stream.
        for (std::size_t i = n_train; i > 1; --i) {
            const std::size_t j = std::size_t(state.data_rng.below(i));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n_train);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            const SignalBatch batch = train_batch.subset(idx);

            std::vector<Gso> draws;
            if (constrained) {
                draws.reserve(cfg.m_perturbations);
                for (std::size_t j = 0; j < cfg.m_perturbations; ++j)
                    draws.push_back(perturb(g, pert, state.pert_rng));
            }
            const PrimalGradient pg =
                primal_gradient(batch, g, draws, state.params, state.lambda, model_cfg,
                                cfg.loss_beta);
            adam_step(state.params, pg.grad, state.adam);
            loss_sum += pg.nominal_mean * double(batch.size());
            state.batches_done += 1;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / double(n_train);
        if (constrained) {
            const SlackRecord sr = dual_step(state, slack_batch, g, pert, cfg, model_cfg);
            rec.slack = sr.slack;
            rec.slack_nominal = sr.nominal_mean;
            rec.slack_perturbed = sr.perturbed_mean;
        }
        rec.lambda = state.lambda;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.epoch = epoch;
        state.history.push_back(rec);
        if (observer) observer(state, rec);
    }
    return state;
}

/// One JSON object per epoch; `slack` keys appear only when they were computed.
inline void write_history_jsonl(std::ostream& os, const std::vector<EpochRecord>& history) {
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : history) {
        os << "{\"epoch\":" << r.epoch << ",\"train_loss\":" << num(r.train_loss);
        if (!std::isnan(r.slack))
            os << ",\"slack\":" << num(r.slack) << ",\"slack_nominal\":" << num(r.slack_nominal)
               << ",\"slack_perturbed\":" << num(r.slack_perturbed);
        os << ",\"lambda\":" << num(r.lambda) << ",\"seconds\":" << num(r.seconds) << "}\n";
    }
}

} // namespace stablegnn
