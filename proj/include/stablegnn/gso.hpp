#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stablegnn/errors.hpp"
#include "stablegnn/matrix.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"

namespace stablegnn {

namespace detail {

inline void symv(const Matrix& s, const std::vector<double>& x, std::vector<double>& out) {
    const std::size_t n = s.rows();
#ifdef STABLEGNN_USE_CBLAS
    cblas_dsymv(CblasRowMajor, CblasUpper, int(n), 1.0, s.data(), int(n), x.data(), 1, 0.0,
                out.data(), 1);
#else
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = s.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
#endif
}

} // namespace detail

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
///
/// Deterministic all-ones start; one seeded random restart if the start lies
/// in the null space. Stops when the iterate is eigen-locked (small residual,
/// which bounds the eigenvalue error directly) or when the norm-ratio
/// estimate has stalled for several iterations, which covers spectra with a
/// +/- dominant pair where the residual never shrinks.
inline double spectral_norm_sym(const Matrix& s, double rel_tol = 1e-8, int max_iters = 5000) {
    const std::size_t n = s.rows();
    if (n == 0 || s.cols() != n) fail(errc::non_square, "spectral_norm on non-square matrix");
    if (n == 1) return std::abs(s(0, 0));

    std::vector<double> v(n, 1.0 / std::sqrt(double(n)));
    std::vector<double> w(n);
    bool restarted = false;
    double est_prev = std::numeric_limits<double>::infinity();
    int stable = 0;

    for (int it = 0; it < max_iters; ++it) {
        detail::symv(s, v, w);
        const double nrm = norm2(w);
        if (nrm == 0.0) {
            if (restarted) return 0.0;
            restarted = true;
            Rng rng(0x9c0ULL ^ n);
            double vn = 0.0;
            for (auto& vi : v) {
                vi = rng.normal();
                vn += vi * vi;
            }
            vn = std::sqrt(vn);
            for (auto& vi : v) vi /= vn;
            est_prev = std::numeric_limits<double>::infinity();
            stable = 0;
            continue;
        }
        const double rq = dot(v, w);
        const double resid = std::sqrt(std::max(0.0, nrm * nrm - rq * rq));
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
        const double est = nrm; // ||Sv|| with ||v|| = 1
        if (resid <= rel_tol * nrm) return est;
        if (std::abs(est - est_prev) <= rel_tol * est) {
            if (++stable >= 3) return est;
        } else {
            stable = 0;
        }
        est_prev = est;
    }
    fail(errc::no_convergence, "power iteration exceeded " + std::to_string(max_iters) +
                                   " iterations at rel_tol " + std::to_string(rel_tol));
}

/// Graph shift operator: symmetric dense similarity matrix over n nodes.
/// Immutable after construction; the spectral norm is computed lazily and
/// cached (benign to race: every writer stores the same value).
class Gso {
  public:
    explicit Gso(Matrix m, double sym_tol = 1e-9) : s_(std::move(m)) {
        if (s_.rows() != s_.cols()) fail(errc::non_square, "GSO matrix must be square");
        n_ = s_.rows();
        if (n_ == 0) fail(errc::non_square, "GSO must have at least one node");
        if (!s_.all_finite()) fail(errc::non_finite_entry, "GSO entries must be finite");
        double asym = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j)
                asym = std::max(asym, std::abs(s_(i, j) - s_(j, i)));
        if (asym > sym_tol)
            fail(errc::asymmetry_too_large,
                 "max |S_ij - S_ji| = " + std::to_string(asym) + " exceeds tolerance");
        if (asym > 0.0) {
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = i + 1; j < n_; ++j) {
                    const double m2 = 0.5 * (s_(i, j) + s_(j, i));
                    s_(i, j) = m2;
                    s_(j, i) = m2;
                }
        }
    }

    Gso(const Gso& o) : n_(o.n_), s_(o.s_) { norm_cache_.store(o.norm_cache_.load()); }
    Gso& operator=(const Gso& o) {
        n_ = o.n_;
        s_ = o.s_;
        norm_cache_.store(o.norm_cache_.load());
        return *this;
    }
    Gso(Gso&& o) noexcept : n_(o.n_), s_(std::move(o.s_)) {
        norm_cache_.store(o.norm_cache_.load());
    }
    Gso& operator=(Gso&& o) noexcept {
        n_ = o.n_;
        s_ = std::move(o.s_);
        norm_cache_.store(o.norm_cache_.load());
        return *this;
    }

    std::size_t n() const { return n_; }
    const Matrix& matrix() const { return s_; }

    double spectral_norm(double rel_tol = 1e-8, int max_iters = 5000) const {
        double cached = norm_cache_.load(std::memory_order_relaxed);
        if (!std::isnan(cached)) return cached;
        const double v = spectral_norm_sym(s_, rel_tol, max_iters);
        norm_cache_.store(v, std::memory_order_relaxed);
        return v;
    }

    bool norm_cached() const { return !std::isnan(norm_cache_.load(std::memory_order_relaxed)); }

    friend bool operator==(const Gso& a, const Gso& b) { return a.s_ == b.s_; }

  private:
    std::size_t n_ = 0;
    Matrix s_;
    mutable std::atomic<double> norm_cache_{std::numeric_limits<double>::quiet_NaN()};
};

inline Gso gso_from_matrix(Matrix m) { return Gso(std::move(m)); }

inline double spectral_norm(const Gso& g) { return g.spectral_norm(); }

/// y = S x.
inline GraphSignal shift(const Gso& g, const GraphSignal& x) {
    if (x.size() != g.n()) fail(errc::dimension_mismatch, "shift: signal length != node count");
    GraphSignal y(g.n());
    detail::symv(g.matrix(), x.values, y.values);
    for (double v : y.values)
        if (!std::isfinite(v)) fail(errc::non_finite_entry, "shift produced non-finite value");
    return y;
}

namespace detail {

inline void check_permutation(const std::vector<std::size_t>& p, std::size_t n) {
    if (p.size() != n) fail(errc::not_a_permutation, "permutation length != node count");
    std::vector<std::uint8_t> seen(n, 0);
    for (auto v : p) {
        if (v >= n || seen[v]) fail(errc::not_a_permutation, "indices must be a bijection");
        seen[v] = 1;
    }
}

} // namespace detail

/// Reindexed operator: node i of the result is node p[i] of the input.
inline Gso permute(const Gso& g, const std::vector<std::size_t>& p) {
    detail::check_permutation(p, g.n());
    const std::size_t n = g.n();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = g.matrix()(p[i], p[j]);
    return Gso(std::move(out));
}

inline GraphSignal permute_signal(const GraphSignal& x, const std::vector<std::size_t>& p) {
    detail::check_permutation(p, x.size());
    GraphSignal y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[p[i]];
    return y;
}

inline std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& p) {
    std::vector<std::size_t> inv(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
    return inv;
}

// --- text serialization: first line n, then n whitespace-separated rows ---

inline void save_matrix_text(const Matrix& m, std::ostream& os) {
    os << m.rows() << "\n";
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << buf << (j + 1 == m.cols() ? "" : " ");
        }
        os << "\n";
    }
}

inline Matrix load_matrix_text(std::istream& is) {
    std::size_t n = 0;
    if (!(is >> n) || n == 0) fail(errc::io_failure, "matrix header: expected positive node count");
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!(is >> m(i, j))) fail(errc::io_failure, "matrix body: truncated");
    return m;
}

inline void save_gso(const Gso& g, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail(errc::io_failure, "cannot open " + path + " for writing");
    save_matrix_text(g.matrix(), os);
}

inline Gso load_gso(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(errc::io_failure, "cannot open " + path);
    return Gso(load_matrix_text(is));
}

} // namespace stablegnn
