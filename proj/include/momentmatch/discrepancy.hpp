#pragma once

#include "momentmatch/samples.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace momentmatch {

/// Choice of discrepancy measure d plus its weight lambda in the
/// regularized objective.
struct DiscrepancySpec {
    enum class Kind { Cmd, Mmd, Mkl };

    Kind kind = Kind::Cmd;
    int K = 5;           // CMD only, number of moment terms
    double beta = 1.0;   // MMD only, Gaussian kernel parameter
    double lambda = 1.0;

    static DiscrepancySpec cmd(int K, double lambda = 1.0) {
        if (K < 1) throw std::invalid_argument("DiscrepancySpec: K must be >= 1");
        if (lambda < 0) throw std::invalid_argument("DiscrepancySpec: lambda must be >= 0");
        return {Kind::Cmd, K, 1.0, lambda};
    }
    static DiscrepancySpec mmd(double beta, double lambda = 1.0) {
        if (beta <= 0) throw std::invalid_argument("DiscrepancySpec: beta must be > 0");
        if (lambda < 0) throw std::invalid_argument("DiscrepancySpec: lambda must be >= 0");
        return {Kind::Mmd, 5, beta, lambda};
    }
    static DiscrepancySpec mkl(double lambda = 1.0) {
        if (lambda < 0) throw std::invalid_argument("DiscrepancySpec: lambda must be >= 0");
        return {Kind::Mkl, 5, 1.0, lambda};
    }
};

/// Discrepancy estimate; per_term is populated for CMD only
/// (per_term[0] = mean term, per_term[k-1] = order-k term).
struct DiscrepancyValue {
    double value = 0.0;
    std::vector<double> per_term;
};

namespace detail {

inline void check_pair(const Sample& x, const Sample& y) {
    if (x.cols() != y.cols()) {
        throw std::invalid_argument("discrepancy: samples have different dimension");
    }
}

inline void check_cmd_pair(const Sample& x, const Sample& y) {
    check_pair(x, y);
    if (x.bounds() != y.bounds()) {
        throw std::invalid_argument("cmd: samples have different bounds");
    }
}

}  // namespace detail

/// Coordinate-wise biased k-th central moment, divide-by-n convention.
/// k = 1 returns the exact zero vector.
inline Vector central_moments(const Sample& x, int k) {
    if (k < 1) throw std::invalid_argument("central_moments: k must be >= 1");
    if (k == 1) return Vector::Zero(x.cols());
    Vector mean = x.data().colwise().mean();
    Matrix centered = x.data().rowwise() - mean.transpose();
    return centered.array().pow(k).colwise().mean();
}

/// Range-normalized sum of order-wise central-moment distances:
/// term 1 is the mean distance, terms 2..K are central-moment distances,
/// each divided by range^k. O(K*N*(n+m)); no pairwise matrix.
inline DiscrepancyValue cmd_k(const Sample& x, const Sample& y, int K) {
    detail::check_cmd_pair(x, y);
    if (K < 1) throw std::invalid_argument("cmd_k: K must be >= 1");

    double range = x.bounds().range();
    DiscrepancyValue out;
    out.per_term.resize(static_cast<size_t>(K));

    Vector mean_x = x.data().colwise().mean();
    Vector mean_y = y.data().colwise().mean();
    out.per_term[0] = (mean_x - mean_y).norm() / range;

    Matrix cx = x.data().rowwise() - mean_x.transpose();
    Matrix cy = y.data().rowwise() - mean_y.transpose();
    Matrix px = cx, py = cy;  // running elementwise powers
    double scale = range;
    for (int k = 2; k <= K; ++k) {
        px.array() *= cx.array();
        py.array() *= cy.array();
        scale *= range;
        Vector mom_x = px.colwise().mean();
        Vector mom_y = py.colwise().mean();
        out.per_term[static_cast<size_t>(k - 1)] = (mom_x - mom_y).norm() / scale;
    }
    for (double t : out.per_term) out.value += t;
    return out;
}

/// Analytic gradient of cmd_k(x, y, K).value with respect to the entries of
/// x, holding y fixed. A term whose moment distance is zero contributes the
/// zero subgradient.
inline Matrix cmd_k_grad(const Sample& x, const Sample& y, int K) {
    detail::check_cmd_pair(x, y);
    if (K < 1) throw std::invalid_argument("cmd_k_grad: K must be >= 1");

    const Matrix& X = x.data();
    const Eigen::Index n = X.rows();
    const double range = x.bounds().range();
    const double inv_n = 1.0 / static_cast<double>(n);

    Vector mean_x = X.colwise().mean();
    Vector mean_y = y.data().colwise().mean();
    Matrix grad = Matrix::Zero(n, X.cols());

    // Mean term: each row gets (1/(n*range)) * unit(mean_x - mean_y).
    {
        Vector d = mean_x - mean_y;
        double norm = d.norm();
        if (norm > 0) {
            Vector g = d / (norm * range * static_cast<double>(n));
            grad.rowwise() += g.transpose();
        }
    }

    Matrix cx = X.rowwise() - mean_x.transpose();
    Matrix cy = y.data().rowwise() - mean_y.transpose();
    Matrix px = cx, py = cy;          // powers k
    Matrix px_prev = Matrix::Ones(n, X.cols());  // powers k-1
    double scale = range;
    for (int k = 2; k <= K; ++k) {
        px_prev = px;
        px.array() *= cx.array();
        py.array() *= cy.array();
        scale *= range;
        Vector mom_x = px.colwise().mean();
        Vector mom_y = py.colwise().mean();
        Vector d = mom_x - mom_y;
        double norm = d.norm();
        if (norm == 0) continue;
        // dC_k/dX_ji = (k/n) * (cx_ji^{k-1} - mean_l cx_li^{k-1}),
        // the second piece from the dependence of the mean on X_ji.
        Vector mean_pow = px_prev.colwise().mean();
        Vector coeff = d * (static_cast<double>(k) * inv_n / (norm * scale));
        Matrix dterm = (px_prev.rowwise() - mean_pow.transpose()).array().rowwise() *
                       coeff.transpose().array();
        grad += dterm;
    }
    return grad;
}

/// Biased Gaussian-kernel MMD^2 V-statistic over all pairs including
/// self-pairs. Blockwise, O(N*(n^2 + nm + m^2)) time without materializing
/// full kernel matrices.
inline double mmd2(const Sample& x, const Sample& y, double beta) {
    detail::check_pair(x, y);
    if (beta <= 0) throw std::invalid_argument("mmd2: beta must be > 0");

    const Matrix& X = x.data();
    const Matrix& Y = y.data();

    // Sum of exp(-beta * ||a_i - b_j||^2) over all pairs, in row blocks.
    auto kernel_sum = [beta](const Matrix& A, const Matrix& B) {
        const Eigen::Index block = 512;
        Vector a2 = A.rowwise().squaredNorm();
        Vector b2 = B.rowwise().squaredNorm();
        double total = 0.0;
        for (Eigen::Index i0 = 0; i0 < A.rows(); i0 += block) {
            Eigen::Index ib = std::min(block, A.rows() - i0);
            for (Eigen::Index j0 = 0; j0 < B.rows(); j0 += block) {
                Eigen::Index jb = std::min(block, B.rows() - j0);
                Matrix sq = (-2.0 * A.middleRows(i0, ib) * B.middleRows(j0, jb).transpose());
                sq.colwise() += a2.segment(i0, ib);
                sq.rowwise() += b2.segment(j0, jb).transpose();
                total += (sq.array().max(0.0) * -beta).exp().sum();
            }
        }
        return total;
    };

    double n = static_cast<double>(X.rows());
    double m = static_cast<double>(Y.rows());
    if (&x == &y || (X.rows() == Y.rows() && X == Y)) return 0.0;  // exact cancellation
    return kernel_sum(X, X) / (n * n) - 2.0 * kernel_sum(X, Y) / (n * m) +
           kernel_sum(Y, Y) / (m * m);
}

/// Analytic gradient of mmd2 with respect to the entries of x.
inline Matrix mmd2_grad(const Sample& x, const Sample& y, double beta) {
    detail::check_pair(x, y);
    if (beta <= 0) throw std::invalid_argument("mmd2_grad: beta must be > 0");

    const Matrix& X = x.data();
    const Matrix& Y = y.data();
    const Eigen::Index n = X.rows(), m = Y.rows();
    Matrix grad = Matrix::Zero(n, X.cols());

    // d/dx_j exp(-beta ||x_j - z||^2) = -2 beta k(x_j,z) (x_j - z).
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector g = Vector::Zero(X.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector diff = X.row(j) - X.row(i);
            double k = std::exp(-beta * diff.squaredNorm());
            g += (-4.0 * beta / static_cast<double>(n * n)) * k * diff;
        }
        for (Eigen::Index l = 0; l < m; ++l) {
            Vector diff = X.row(j) - Y.row(l);
            double k = std::exp(-beta * diff.squaredNorm());
            g -= (2.0 / static_cast<double>(n * m)) * (-2.0 * beta) * k * diff;
        }
        grad.row(j) = g.transpose();
    }
    return grad;
}

inline constexpr double kMklEps = 1e-8;

/// Symmetrized KL-style divergence of coordinate-wise mean activations,
/// natural log, means clamped below at 1e-8.
inline double mkl(const Sample& x, const Sample& y) {
    detail::check_pair(x, y);
    Vector a = x.data().colwise().mean().cwiseMax(kMklEps);
    Vector b = y.data().colwise().mean().cwiseMax(kMklEps);
    double out = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        out += a(i) * std::log(a(i) / b(i)) + b(i) * std::log(b(i) / a(i));
    }
    return out;
}

/// Analytic gradient of mkl with respect to the entries of x. Coordinates
/// whose mean sits at the clamp floor contribute zero.
inline Matrix mkl_grad(const Sample& x, const Sample& y) {
    detail::check_pair(x, y);
    Vector raw_a = x.data().colwise().mean();
    Vector a = raw_a.cwiseMax(kMklEps);
    Vector b = y.data().colwise().mean().cwiseMax(kMklEps);

    double inv_n = 1.0 / static_cast<double>(x.rows());
    Vector per_coord(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (raw_a(i) < kMklEps) {
            per_coord(i) = 0.0;
        } else {
            per_coord(i) = inv_n * (std::log(a(i) / b(i)) + 1.0 - b(i) / a(i));
        }
    }
    Matrix grad(x.rows(), x.cols());
    grad.rowwise() = per_coord.transpose();
    return grad;
}

/// Closed-form upper bound on the order-k range-normalized CMD term:
/// 2*sqrt(N) * (1/(k+1) * (k/(k+1))^k + 2^-(1+k)). Strictly decreasing in k,
/// converging to zero.
inline double cmd_term_bound(int k, int N) {
    if (k < 1 || N < 1) throw std::invalid_argument("cmd_term_bound: k and N must be >= 1");
    double kd = static_cast<double>(k);
    double inner = (1.0 / (kd + 1.0)) * std::pow(kd / (kd + 1.0), kd) + std::pow(2.0, -(1.0 + kd));
    return 2.0 * std::sqrt(static_cast<double>(N)) * inner;
}

/// Evaluate the measure selected by spec (without the lambda weight).
inline DiscrepancyValue evaluate(const DiscrepancySpec& spec, const Sample& x, const Sample& y) {
    switch (spec.kind) {
        case DiscrepancySpec::Kind::Cmd:
            return cmd_k(x, y, spec.K);
        case DiscrepancySpec::Kind::Mmd:
            return {mmd2(x, y, spec.beta), {}};
        case DiscrepancySpec::Kind::Mkl:
            return {mkl(x, y), {}};
    }
    throw std::logic_error("evaluate: unreachable");
}

/// Gradient of the selected measure with respect to the entries of x.
inline Matrix evaluate_grad(const DiscrepancySpec& spec, const Sample& x, const Sample& y) {
    switch (spec.kind) {
        case DiscrepancySpec::Kind::Cmd:
            return cmd_k_grad(x, y, spec.K);
        case DiscrepancySpec::Kind::Mmd:
            return mmd2_grad(x, y, spec.beta);
        case DiscrepancySpec::Kind::Mkl:
            return mkl_grad(x, y);
    }
    throw std::logic_error("evaluate_grad: unreachable");
}

}  // namespace momentmatch
