#include "momentmatch/discrepancy.hpp"
#include "momentmatch/gradcheck.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace momentmatch;

namespace {

Sample column_sample(std::initializer_list<double> values, Bounds bounds) {
    Matrix m(static_cast<Eigen::Index>(values.size()), 1);
    Eigen::Index i = 0;
    for (double v : values) m(i++, 0) = v;
    return Sample(m, bounds);
}

Sample random_sample(std::mt19937_64& rng, Eigen::Index n, Eigen::Index dim, Bounds bounds) {
    std::uniform_real_distribution<double> unif(bounds.lo, bounds.hi);
    Matrix m(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = unif(rng);
    }
    return Sample(m, bounds);
}

}  // namespace

TEST_CASE("central_moments hand fixtures") {
    auto x = column_sample({0.0, 1.0}, Bounds(0.0, 1.0));
    CHECK(central_moments(x, 1)(0) == 0.0);
    CHECK(central_moments(x, 2)(0) == Catch::Approx(0.25).margin(1e-15));
    CHECK(central_moments(x, 4)(0) == Catch::Approx(0.0625).margin(1e-15));
}

TEST_CASE("central_moments first moment is exactly zero") {
    std::mt19937_64 rng(5);
    auto x = random_sample(rng, 17, 4, Bounds(-2.0, 3.0));
    CHECK(central_moments(x, 1).isZero(0.0));
}

TEST_CASE("cmd_k identity case") {
    std::mt19937_64 rng(1);
    auto x = random_sample(rng, 10, 3, Bounds(0.0, 1.0));
    auto v = cmd_k(x, x, 5);
    CHECK(v.value == 0.0);
    for (double t : v.per_term) CHECK(t == 0.0);
}

TEST_CASE("cmd_k mean-shift fixture") {
    auto x = column_sample({0.2, 0.4}, Bounds(0.0, 1.0));
    auto y = column_sample({0.6, 0.8}, Bounds(0.0, 1.0));
    auto v = cmd_k(x, y, 5);
    CHECK(v.value == Catch::Approx(0.4).margin(1e-12));
    CHECK(v.per_term[0] == Catch::Approx(0.4).margin(1e-12));
    for (size_t k = 1; k < 5; ++k) CHECK(v.per_term[k] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("cmd_k equal-mean different-variance fixture") {
    auto x = column_sample({0.0, 1.0}, Bounds(0.0, 1.0));
    auto y = column_sample({0.5, 0.5}, Bounds(0.0, 1.0));
    auto v = cmd_k(x, y, 5);
    CHECK(v.per_term[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(v.per_term[1] == Catch::Approx(0.25).margin(1e-12));
    CHECK(v.per_term[2] == Catch::Approx(0.0).margin(1e-15));
    CHECK(v.per_term[3] == Catch::Approx(0.0625).margin(1e-12));
    CHECK(v.per_term[4] == Catch::Approx(0.0).margin(1e-15));
    CHECK(v.value == Catch::Approx(0.3125).margin(1e-12));
}

TEST_CASE("cmd_k value equals sum of per_term") {
    std::mt19937_64 rng(2);
    auto x = random_sample(rng, 12, 2, Bounds(0.0, 1.0));
    auto y = random_sample(rng, 9, 2, Bounds(0.0, 1.0));
    auto v = cmd_k(x, y, 7);
    double sum = 0.0;
    for (double t : v.per_term) sum += t;
    CHECK(v.value == Catch::Approx(sum).margin(1e-15));
}

TEST_CASE("cmd_k rejects mismatched inputs") {
    std::mt19937_64 rng(3);
    auto x = random_sample(rng, 5, 2, Bounds(0.0, 1.0));
    auto y = random_sample(rng, 5, 3, Bounds(0.0, 1.0));
    CHECK_THROWS_AS(cmd_k(x, y, 3), std::invalid_argument);
    auto z = random_sample(rng, 5, 2, Bounds(-1.0, 1.0));
    CHECK_THROWS_AS(cmd_k(x, z, 3), std::invalid_argument);
}

TEST_CASE("cmd_k metric-like axioms on random triples") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> n_dist(2, 50), dim_dist(1, 8), k_dist(1, 7);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Index dim = dim_dist(rng);
        int K = k_dist(rng);
        Bounds bounds(0.0, 1.0);
        auto x = random_sample(rng, n_dist(rng), dim, bounds);
        auto y = random_sample(rng, n_dist(rng), dim, bounds);
        auto z = random_sample(rng, n_dist(rng), dim, bounds);

        double dxy = cmd_k(x, y, K).value;
        double dyx = cmd_k(y, x, K).value;
        double dxz = cmd_k(x, z, K).value;
        double dyz = cmd_k(y, z, K).value;
        REQUIRE(dxy >= 0.0);
        REQUIRE(dxy == dyx);
        REQUIRE(dxz <= dxy + dyz + 1e-12);
        REQUIRE(cmd_k(x, x, K).value == 0.0);
    }
}

TEST_CASE("per-term values respect the closed-form bound") {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> n_dist(2, 50), dim_dist(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Index dim = dim_dist(rng);
        auto x = random_sample(rng, n_dist(rng), dim, Bounds(0.0, 1.0));
        auto y = random_sample(rng, n_dist(rng), dim, Bounds(0.0, 1.0));
        auto v = cmd_k(x, y, 7);
        for (int k = 1; k <= 7; ++k) {
            REQUIRE(v.per_term[static_cast<size_t>(k - 1)] <=
                    cmd_term_bound(k, static_cast<int>(dim)) + 1e-12);
        }
    }
}

TEST_CASE("cmd_term_bound fixtures and monotonicity") {
    CHECK(cmd_term_bound(1, 1) == Catch::Approx(1.0).margin(1e-15));
    CHECK(cmd_term_bound(2, 1) == Catch::Approx(8.0 / 27.0 + 0.25).margin(1e-15));
    CHECK(cmd_term_bound(2, 4) == Catch::Approx(2.0 * (8.0 / 27.0 + 0.25)).margin(1e-15));
    for (int k = 1; k < 30; ++k) {
        CHECK(cmd_term_bound(k + 1, 3) < cmd_term_bound(k, 3));
    }
    // Tail behaviour: bound at k=50 is dominated by its two small pieces.
    CHECK(cmd_term_bound(50, 1) < 2.0 * std::pow(2.0, -50.0) + 2.0 / 51.0);
}

TEST_CASE("higher cmd terms are translation invariant") {
    std::mt19937_64 rng(31);
    auto x = random_sample(rng, 14, 3, Bounds(0.0, 1.0));
    auto y = random_sample(rng, 11, 3, Bounds(0.0, 1.0));
    auto v = cmd_k(x, y, 6);

    const double shift = 2.5;
    Sample xs((x.data().array() + shift).matrix(), Bounds(shift, 1.0 + shift));
    Sample ys((y.data().array() + shift).matrix(), Bounds(shift, 1.0 + shift));
    auto vs = cmd_k(xs, ys, 6);
    for (size_t k = 1; k < 6; ++k) {
        CHECK(vs.per_term[k] == Catch::Approx(v.per_term[k]).margin(1e-12));
    }
}

TEST_CASE("mmd2 hand fixtures") {
    auto x = column_sample({0.0}, Bounds(0.0, 1.0));
    auto y = column_sample({1.0}, Bounds(0.0, 1.0));
    CHECK(mmd2(x, y, 1.0) == Catch::Approx(2.0 - 2.0 * std::exp(-1.0)).margin(1e-12));

    auto x2 = column_sample({0.0, 1.0}, Bounds(0.0, 1.0));
    CHECK(mmd2(x2, x, 1.0) ==
          Catch::Approx(1.0 - (1.0 + std::exp(-1.0)) / 2.0).margin(1e-12));
}

TEST_CASE("mmd2 symmetry and identity") {
    std::mt19937_64 rng(41);
    auto x = random_sample(rng, 13, 4, Bounds(0.0, 1.0));
    auto y = random_sample(rng, 8, 4, Bounds(0.0, 1.0));
    CHECK(mmd2(x, y, 0.7) == mmd2(y, x, 0.7));
    CHECK(mmd2(x, x, 0.7) == 0.0);
}

TEST_CASE("mkl hand fixtures") {
    auto x = column_sample({0.5, 0.5}, Bounds(0.0, 1.0));
    auto y = column_sample({0.25, 0.25}, Bounds(0.0, 1.0));
    CHECK(mkl(x, y) == Catch::Approx(0.25 * std::log(2.0)).margin(1e-12));
    CHECK(mkl(x, x) == 0.0);

    // Two coordinates with the same per-coordinate values double the sum.
    Matrix mx(2, 2), my(2, 2);
    mx << 0.5, 0.5, 0.5, 0.5;
    my << 0.25, 0.25, 0.25, 0.25;
    CHECK(mkl(Sample(mx, Bounds(0.0, 1.0)), Sample(my, Bounds(0.0, 1.0))) ==
          Catch::Approx(2.0 * 0.25 * std::log(2.0)).margin(1e-12));
}

// -- gradient oracles -----------------------------------------------------

TEST_CASE("cmd_k_grad matches finite differences") {
    std::mt19937_64 rng(101);
    Bounds bounds(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_sample(rng, 6, 3, bounds);
        auto y = random_sample(rng, 6, 3, bounds);
        Matrix analytic = cmd_k_grad(x, y, 5);
        Matrix numeric = finite_difference(
            [&](const Matrix& m) { return cmd_k(Sample(m, bounds), y, 5).value; }, x.data());
        REQUIRE(max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("cmd_k_grad at identical samples is zero") {
    std::mt19937_64 rng(103);
    auto x = random_sample(rng, 7, 2, Bounds(0.0, 1.0));
    CHECK(cmd_k_grad(x, x, 5).isZero(0.0));
}

TEST_CASE("cmd_k_grad mean-only shift matches the hand derivative") {
    // Both samples have identical centered shape; only term 1 is nonzero.
    // Entries are exact binary fractions so the centered moments cancel
    // exactly and the higher-term subgradients are exactly zero.
    Matrix base(4, 2);
    base << 0.0, 0.25, 0.25, 0.0, 0.0, 0.0, 0.25, 0.25;
    Bounds bounds(0.0, 1.0);
    Sample x((base.array() + 0.5).matrix(), bounds);
    Sample y(base, bounds);

    Matrix grad = cmd_k_grad(x, y, 5);
    Vector mean_diff = x.data().colwise().mean() - y.data().colwise().mean();
    Vector expect = mean_diff / (mean_diff.norm() * 4.0);
    for (Eigen::Index i = 0; i < grad.rows(); ++i) {
        CHECK((grad.row(i).transpose() - expect).norm() < 1e-10);
    }
}

TEST_CASE("mmd2_grad matches finite differences") {
    std::mt19937_64 rng(107);
    Bounds bounds(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_sample(rng, 6, 3, bounds);
        auto y = random_sample(rng, 6, 3, bounds);
        Matrix analytic = mmd2_grad(x, y, 1.0);
        Matrix numeric = finite_difference(
            [&](const Matrix& m) { return mmd2(Sample(m, bounds), y, 1.0); }, x.data());
        REQUIRE(max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("mmd2_grad single-point pair matches the hand derivative") {
    Matrix mx(1, 2), my(1, 2);
    mx << 0.7, 0.4;
    my << 0.2, 0.1;
    double beta = 0.9;
    Sample x(mx, Bounds(0.0, 1.0)), y(my, Bounds(0.0, 1.0));
    Vector diff = (mx - my).row(0);
    Vector expect = 4.0 * beta * std::exp(-beta * diff.squaredNorm()) * diff;
    Matrix grad = mmd2_grad(x, y, beta);
    CHECK((grad.row(0).transpose() - expect).norm() < 1e-12);
}

TEST_CASE("mmd2_grad identical samples give the zero matrix") {
    std::mt19937_64 rng(109);
    auto x = random_sample(rng, 5, 3, Bounds(0.0, 1.0));
    CHECK(mmd2_grad(x, x, 1.0).isZero(1e-14));
}

TEST_CASE("mkl_grad matches finite differences") {
    std::mt19937_64 rng(113);
    Bounds bounds(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        // Keep entries away from zero so the clamp never engages.
        std::uniform_real_distribution<double> unif(0.1, 0.9);
        Matrix mx(6, 3), my(6, 3);
        for (Eigen::Index i = 0; i < 6; ++i) {
            for (Eigen::Index j = 0; j < 3; ++j) {
                mx(i, j) = unif(rng);
                my(i, j) = unif(rng);
            }
        }
        Sample x(mx, bounds), y(my, bounds);
        Matrix analytic = mkl_grad(x, y);
        Matrix numeric = finite_difference(
            [&](const Matrix& m) { return mkl(Sample(m, bounds), y); }, x.data());
        REQUIRE(max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("mkl_grad equal means give the zero matrix") {
    auto x = column_sample({0.2, 0.8}, Bounds(0.0, 1.0));
    auto y = column_sample({0.5, 0.5}, Bounds(0.0, 1.0));
    CHECK(mkl_grad(x, y).isZero(1e-14));
}

TEST_CASE("mkl_grad single-coordinate hand formula") {
    auto x = column_sample({0.6, 0.8}, Bounds(0.0, 1.0));  // mean 0.7
    auto y = column_sample({0.3, 0.5}, Bounds(0.0, 1.0));  // mean 0.4
    double expect = 0.5 * (std::log(0.7 / 0.4) + 1.0 - 0.4 / 0.7);
    Matrix grad = mkl_grad(x, y);
    CHECK(grad(0, 0) == Catch::Approx(expect).margin(1e-14));
    CHECK(grad(1, 0) == Catch::Approx(expect).margin(1e-14));
}

TEST_CASE("same-distribution cmd shrinks as samples grow") {
    // Consistency proxy: median over 20 seeds decreases as n doubles.
    std::vector<Eigen::Index> sizes{50, 200, 800, 3200};
    std::vector<double> medians;
    for (Eigen::Index n : sizes) {
        std::vector<double> vals;
        for (int seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 1000 + n);
            auto x = random_sample(rng, n, 2, Bounds(0.0, 1.0));
            auto y = random_sample(rng, n, 2, Bounds(0.0, 1.0));
            vals.push_back(cmd_k(x, y, 5).value);
        }
        std::sort(vals.begin(), vals.end());
        medians.push_back((vals[9] + vals[10]) / 2.0);
    }
    for (size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] < medians[i - 1]);
    CHECK(medians.back() < 0.05);
}

TEST_CASE("K >= 2 discriminates equal-mean distributions, K = 1 is blind") {
    std::mt19937_64 rng(211);
    const Eigen::Index n = 1000;
    std::bernoulli_distribution coin(0.5);
    Matrix mx(n, 1), my(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        mx(i, 0) = coin(rng) ? 1.0 : 0.0;
        my(i, 0) = 0.5;
    }
    Sample x(mx, Bounds(0.0, 1.0)), y(my, Bounds(0.0, 1.0));

    // Same-distribution reference at the same size.
    Matrix mx2(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) mx2(i, 0) = coin(rng) ? 1.0 : 0.0;
    Sample x2(mx2, Bounds(0.0, 1.0));

    double same_k2 = cmd_k(x, x2, 2).value;
    double diff_k2 = cmd_k(x, y, 2).value;
    CHECK(diff_k2 > 10.0 * same_k2);

    double same_k1 = cmd_k(x, x2, 1).value;
    double diff_k1 = cmd_k(x, y, 1).value;
    CHECK_FALSE(diff_k1 > 10.0 * same_k1);
}
