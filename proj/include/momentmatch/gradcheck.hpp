#pragma once

#include "momentmatch/samples.hpp"

#include <cmath>
#include <functional>

namespace momentmatch {

/// Central finite differences of a scalar function of a matrix, entrywise.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                double step = 1e-5) {
    Matrix grad(x.rows(), x.cols());
    Matrix work = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            double orig = work(i, j);
            work(i, j) = orig + step;
            double fp = f(work);
            work(i, j) = orig - step;
            double fm = f(work);
            work(i, j) = orig;
            grad(i, j) = (fp - fm) / (2.0 * step);
        }
    }
    return grad;
}

/// Max relative error between analytic and numeric gradients, skipping
/// entries where both magnitudes are below 1e-8.
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
        for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
            double a = analytic(i, j), n = numeric(i, j);
            if (std::abs(a) < 1e-8 && std::abs(n) < 1e-8) continue;
            worst = std::max(worst, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
        }
    }
    return worst;
}

}  // namespace momentmatch
