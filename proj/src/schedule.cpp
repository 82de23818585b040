#include "mcm/schedule.hpp"

#include <cmath>

namespace mcm {

NoiseSchedule build_linear_schedule(long num_train_steps, double beta_min, double beta_max,
                                    long epsilon_step) {
    if (num_train_steps < 2) throw ParameterError("build_linear_schedule: need at least 2 steps");
    if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
        throw ParameterError("build_linear_schedule: need 0 < beta_min < beta_max < 1");
    if (epsilon_step < 0 || epsilon_step >= num_train_steps)
        throw ParameterError("build_linear_schedule: epsilon_step outside [0, T)");

    NoiseSchedule s;
    s.num_train_steps = num_train_steps;
    s.epsilon_step = epsilon_step;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.alphas.assign(static_cast<size_t>(num_train_steps) + 1, 0.0);
    s.sigmas.assign(static_cast<size_t>(num_train_steps) + 1, 0.0);

    s.alphas[0] = 1.0;
    s.sigmas[0] = 0.0;
    double abar = 1.0;
    for (long t = 1; t <= num_train_steps; ++t) {
        double beta = beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) /
                                     static_cast<double>(num_train_steps - 1);
        abar *= 1.0 - beta;
        s.alphas[static_cast<size_t>(t)] = std::sqrt(abar);
        s.sigmas[static_cast<size_t>(t)] = std::sqrt(1.0 - abar);
    }
    // A linear-beta schedule only approaches zero terminal signal. Pin the
    // final entry so noising at T yields exactly standard normal samples.
    s.alphas.back() = 0.0;
    s.sigmas.back() = 1.0;
    return s;
}

ConsistencyWeights consistency_weights(double sigma_data, long epsilon_step, long num_train_steps) {
    if (sigma_data <= 0.0) throw ParameterError("consistency_weights: sigma_data must be positive");
    if (num_train_steps < 1) throw ParameterError("consistency_weights: num_train_steps must be >= 1");
    ConsistencyWeights w;
    w.sigma_data = sigma_data;
    w.epsilon_step = epsilon_step;
    w.num_train_steps = num_train_steps;
    return w;
}

std::vector<long> solver_grid(long n_points, const NoiseSchedule& sched) {
    long T = sched.num_train_steps, eps = sched.epsilon_step;
    if (n_points < 1 || n_points > T - eps)
        throw ParameterError("solver_grid: n_points must be in [1, T - epsilon_step]");
    std::vector<long> grid(static_cast<size_t>(n_points) + 1);
    for (long i = 0; i <= n_points; ++i) {
        grid[static_cast<size_t>(i)] =
            eps + static_cast<long>(std::llround(static_cast<double>((T - eps) * i) /
                                                 static_cast<double>(n_points)));
    }
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw ParameterError("solver_grid: grid not strictly increasing");
    return grid;
}

}  // namespace mcm
