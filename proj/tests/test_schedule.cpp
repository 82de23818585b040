#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcm/rng.hpp"
#include "mcm/schedule.hpp"

using namespace mcm;

TEST_CASE("linear schedule satisfies boundary and monotonicity invariants") {
    auto s = build_linear_schedule(1000, 1e-4, 2e-2);
    CHECK(s.alpha(0) == doctest::Approx(1.0));
    CHECK(s.sigma(0) == doctest::Approx(0.0));
    CHECK(s.alpha(1000) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(s.sigma(1000) == doctest::Approx(1.0).epsilon(1e-6));
    for (long t = 0; t <= 1000; ++t) {
        double a = s.alpha(t), g = s.sigma(t);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
        CHECK(a * a + g * g == doctest::Approx(1.0).epsilon(1e-6));
        if (t > 0) {
            CHECK(s.alpha(t) <= s.alpha(t - 1) + 1e-12);
            CHECK(s.sigma(t) >= s.sigma(t - 1) - 1e-12);
        }
    }
}

TEST_CASE("early alphas match an independent cumulative-product oracle") {
    // Oracle: recompute sqrt of the running product of (1 - beta_t) directly,
    // without going through the schedule builder.
    const long T = 1000;
    const double bmin = 1e-4, bmax = 2e-2;
    auto s = build_linear_schedule(T, bmin, bmax);
    double prod = 1.0;
    for (long t = 1; t <= T - 1; ++t) {
        double beta = bmin + (bmax - bmin) * double(t - 1) / double(T - 1);
        prod *= 1.0 - beta;
        CHECK(s.alpha(t) == doctest::Approx(std::sqrt(prod)).epsilon(1e-12));
    }
    // Terminal entry is intentionally rescaled away from the raw product.
    CHECK(s.alpha(T) == 0.0);
}

TEST_CASE("schedule builder rejects bad parameters") {
    CHECK_THROWS_AS(build_linear_schedule(1, 1e-4, 2e-2), ParameterError);
    CHECK_THROWS_AS(build_linear_schedule(1000, 0.0, 2e-2), ParameterError);
    CHECK_THROWS_AS(build_linear_schedule(1000, 2e-2, 1e-4), ParameterError);
    CHECK_THROWS_AS(build_linear_schedule(1000, 1e-4, 1.0), ParameterError);
    CHECK_THROWS_AS(build_linear_schedule(1000, 1e-4, 2e-2, -1), ParameterError);
    auto s = build_linear_schedule(10, 1e-4, 2e-2);
    CHECK_THROWS_AS(s.alpha(11), ParameterError);
    CHECK_THROWS_AS(s.alpha(-1), ParameterError);
}

TEST_CASE("consistency weights: boundary exact, interior arithmetic, monotone") {
    const long T = 1000;
    auto w = consistency_weights(0.5, 0, T);
    CHECK(w.c_skip(0) == 1.0);  // exact, not approximate
    CHECK(w.c_out(0) == 0.0);

    // t - eps = 0.5 and t = 0.5 on the normalized axis.
    CHECK(w.c_skip(T / 2) == doctest::Approx(0.5));
    CHECK(w.c_out(T / 2) == doctest::Approx(0.25 / std::sqrt(0.5)));

    double prev = w.c_skip(0);
    for (long t = 1; t <= T; t += 7) {
        CHECK(w.c_skip(t) < prev);
        CHECK(w.c_out(t) >= 0.0);
        CHECK(std::isfinite(w.c_skip(t)));
        CHECK(std::isfinite(w.c_out(t)));
        prev = w.c_skip(t);
    }

    // Nonzero epsilon keeps the boundary exact at that index.
    auto w2 = consistency_weights(0.5, 25, T);
    CHECK(w2.c_skip(25) == 1.0);
    CHECK(w2.c_out(25) == 0.0);

    CHECK_THROWS_AS(consistency_weights(0.0, 0, T), ParameterError);
}

TEST_CASE("solver grid is strictly increasing from epsilon to T") {
    auto s = build_linear_schedule(1000, 1e-4, 2e-2);
    auto grid = solver_grid(50, s);
    CHECK(grid.size() == 51);
    CHECK(grid.front() == s.epsilon_step);
    CHECK(grid.back() == s.num_train_steps);
    for (size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);

    auto s2 = build_linear_schedule(1000, 1e-4, 2e-2, 25);
    auto g2 = solver_grid(4, s2);
    CHECK(g2.front() == 25);
    CHECK(g2.back() == 1000);

    CHECK_THROWS_AS(solver_grid(0, s), ParameterError);
    CHECK_THROWS_AS(solver_grid(2000, s), ParameterError);
}

TEST_CASE("noising at the terminal step is standard normal regardless of x0") {
    // Monte Carlo moment check of alpha_T*x0 + sigma_T*eps with constant x0.
    auto s = build_linear_schedule(1000, 1e-4, 2e-2);
    auto g = derive_rng(99, "schedule.terminal");
    const int N = 20000;
    double x0 = 7.3;  // arbitrary, must not leak through
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < N; ++i) {
        double eps = normal01(g);
        double xt = s.alpha(1000) * x0 + s.sigma(1000) * eps;
        sum += xt;
        sumsq += xt * xt;
    }
    double m = sum / N;
    double sd = std::sqrt(sumsq / N - m * m);
    CHECK(std::abs(m) < 0.05);
    CHECK(std::abs(sd - 1.0) < 0.05);
}
