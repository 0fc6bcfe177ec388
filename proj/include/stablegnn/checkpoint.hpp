#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

#include "stablegnn/adam.hpp"
#include "stablegnn/errors.hpp"
#include "stablegnn/gnn.hpp"

namespace stablegnn {

/// Optional trainer-side extras stored after the parameters.
struct CheckpointExtras {
    double lambda = 0.0;
    AdamState adam;
};

struct Checkpoint {
    GnnConfig config;
    GnnParams params;
    std::optional<CheckpointExtras> extras;
};

namespace detail {

inline void write_param_block(std::ostream& os, const char* tag, std::size_t l, std::size_t k,
                              const Matrix& m) {
    os << tag << " " << l << " " << k << " " << m.rows() << " " << m.cols() << "\n";
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << buf << (j + 1 == m.cols() ? "" : " ");
        }
        os << "\n";
    }
}

inline Matrix read_param_block(std::istream& is, std::size_t expect_rows, std::size_t expect_cols,
                               const std::string& what) {
    std::size_t l = 0, k = 0, rows = 0, cols = 0;
    if (!(is >> l >> k >> rows >> cols)) fail(errc::io_failure, "checkpoint: truncated " + what);
    if (rows != expect_rows || cols != expect_cols)
        fail(errc::shape_mismatch, "checkpoint " + what + " [" + std::to_string(l) + "][" +
                                       std::to_string(k) + "] is " + std::to_string(rows) + "x" +
                                       std::to_string(cols) + ", config expects " +
                                       std::to_string(expect_rows) + "x" +
                                       std::to_string(expect_cols));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            if (!(is >> m(i, j))) fail(errc::io_failure, "checkpoint: truncated " + what + " body");
    return m;
}

} // namespace detail

/// Text checkpoint: a config echo header, then every filter matrix with its
/// shape prefix (row-major), then optionally lambda and the Adam state.
inline void save_checkpoint(std::ostream& os, const GnnConfig& cfg, const GnnParams& params,
                            const CheckpointExtras* extras = nullptr) {
    if (!params.matches(cfg)) fail(errc::shape_mismatch, "params do not match config");
    os << "stablegnn-checkpoint 1\n";
    os << "features";
    for (auto f : cfg.features) os << " " << f;
    os << "\ntaps " << cfg.taps << "\nreadout_taps " << cfg.readout_taps << "\n";
    for (std::size_t l = 0; l < params.layers(); ++l)
        for (std::size_t k = 0; k < params.taps(l); ++k)
            detail::write_param_block(os, "param", l, k, params.at(l, k));
    if (extras) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", extras->lambda);
        os << "lambda " << buf << "\n";
        os << "adam " << extras->adam.step;
        for (double v : {extras->adam.lr, extras->adam.beta1, extras->adam.beta2,
                         extras->adam.eps_hat}) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << " " << buf;
        }
        os << "\n";
        for (std::size_t l = 0; l < params.layers(); ++l)
            for (std::size_t k = 0; k < params.taps(l); ++k)
                detail::write_param_block(os, "adam_m", l, k, extras->adam.m.at(l, k));
        for (std::size_t l = 0; l < params.layers(); ++l)
            for (std::size_t k = 0; k < params.taps(l); ++k)
                detail::write_param_block(os, "adam_v", l, k, extras->adam.v.at(l, k));
    }
    os << "end\n";
}

inline void save_checkpoint(const std::string& path, const GnnConfig& cfg, const GnnParams& params,
                            const CheckpointExtras* extras = nullptr) {
    std::ofstream os(path);
    if (!os) fail(errc::io_failure, "cannot open " + path + " for writing");
    save_checkpoint(os, cfg, params, extras);
}

inline Checkpoint load_checkpoint(std::istream& is) {
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "stablegnn-checkpoint" || version != "1")
        fail(errc::io_failure, "not a stablegnn checkpoint");

    Checkpoint ck;
    std::string tok;
    if (!(is >> tok) || tok != "features") fail(errc::io_failure, "checkpoint: missing features");
    // Feature list runs until the 'taps' keyword.
    while (is >> tok && tok != "taps") {
        try {
            ck.config.features.push_back(std::size_t(std::stoul(tok)));
        } catch (...) {
            fail(errc::io_failure, "checkpoint: bad feature entry '" + tok + "'");
        }
    }
    if (tok != "taps") fail(errc::io_failure, "checkpoint: missing taps");
    if (!(is >> ck.config.taps)) fail(errc::io_failure, "checkpoint: bad taps");
    if (!(is >> tok) || tok != "readout_taps" || !(is >> ck.config.readout_taps))
        fail(errc::io_failure, "checkpoint: missing readout_taps");
    ck.config.validate();

    ck.params = GnnParams::zeros(ck.config);
    for (std::size_t l = 0; l < ck.params.layers(); ++l)
        for (std::size_t k = 0; k < ck.params.taps(l); ++k) {
            if (!(is >> tok) || tok != "param")
                fail(errc::io_failure, "checkpoint: expected param block");
            ck.params.at(l, k) = detail::read_param_block(is, ck.config.layer_in(l),
                                                          ck.config.layer_out(l), "param");
        }

    if (!(is >> tok)) fail(errc::io_failure, "checkpoint: missing end");
    if (tok == "lambda") {
        CheckpointExtras extras;
        if (!(is >> extras.lambda)) fail(errc::io_failure, "checkpoint: bad lambda");
        if (!(is >> tok) || tok != "adam") fail(errc::io_failure, "checkpoint: missing adam");
        extras.adam = AdamState::make(ck.config);
        if (!(is >> extras.adam.step >> extras.adam.lr >> extras.adam.beta1 >>
              extras.adam.beta2 >> extras.adam.eps_hat))
            fail(errc::io_failure, "checkpoint: bad adam header");
        for (std::size_t l = 0; l < ck.params.layers(); ++l)
            for (std::size_t k = 0; k < ck.params.taps(l); ++k) {
                if (!(is >> tok) || tok != "adam_m")
                    fail(errc::io_failure, "checkpoint: expected adam_m block");
                extras.adam.m.at(l, k) = detail::read_param_block(is, ck.config.layer_in(l),
                                                                  ck.config.layer_out(l), "adam_m");
            }
        for (std::size_t l = 0; l < ck.params.layers(); ++l)
            for (std::size_t k = 0; k < ck.params.taps(l); ++k) {
                if (!(is >> tok) || tok != "adam_v")
                    fail(errc::io_failure, "checkpoint: expected adam_v block");
                extras.adam.v.at(l, k) = detail::read_param_block(is, ck.config.layer_in(l),
                                                                  ck.config.layer_out(l), "adam_v");
            }
        ck.extras = std::move(extras);
        if (!(is >> tok)) fail(errc::io_failure, "checkpoint: missing end");
    }
    if (tok != "end") fail(errc::io_failure, "checkpoint: expected end, got '" + tok + "'");
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(errc::io_failure, "cannot open " + path);
    return load_checkpoint(is);
}

/// Shape validation against an externally supplied config (the CLI path).
inline void require_matching_config(const Checkpoint& ck, const GnnConfig& expected) {
    if (!(ck.config == expected))
        fail(errc::shape_mismatch, "checkpoint architecture " + ck.config.describe() +
                                       " does not match configured " + expected.describe());
}

} // namespace stablegnn
