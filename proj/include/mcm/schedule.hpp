#pragma once

#include <cmath>
#include <vector>

#include "mcm/errors.hpp"

namespace mcm {

// Discrete variance-preserving noise schedule. Tables are indexed by
// timestep 0..T inclusive; index 0 is the identity step (alpha=1, sigma=0)
// and index T carries zero signal (alpha=0, sigma=1) after the terminal
// rescale, so a sample noised at T is pure standard normal.
struct NoiseSchedule {
    long num_train_steps = 0;  // T
    std::vector<double> alphas;
    std::vector<double> sigmas;
    long epsilon_step = 0;  // smallest timestep the consistency function targets
    double beta_min = 0.0, beta_max = 0.0;

    double alpha(long t) const {
        check_t(t);
        return alphas[static_cast<size_t>(t)];
    }
    double sigma(long t) const {
        check_t(t);
        return sigmas[static_cast<size_t>(t)];
    }
    void check_t(long t) const {
        if (t < 0 || t > num_train_steps)
            throw ParameterError("timestep " + std::to_string(t) + " outside [0," +
                                 std::to_string(num_train_steps) + "]");
    }
};

NoiseSchedule build_linear_schedule(long num_train_steps, double beta_min, double beta_max,
                                    long epsilon_step = 0);

// Skip/output weights of the consistency parameterization
// f(x,t) = c_skip(t)*x + c_out(t)*F(x,t), evaluated on the timestep axis
// normalized by T. At t == epsilon_step the pair is exactly (1, 0), so the
// consistency function is the identity at the trajectory origin.
struct ConsistencyWeights {
    double sigma_data = 0.5;
    long epsilon_step = 0;
    long num_train_steps = 1;

    double c_skip(long t) const {
        double tn = norm(t), en = norm(epsilon_step);
        double d = tn - en;
        return sigma_data * sigma_data / (d * d + sigma_data * sigma_data);
    }
    double c_out(long t) const {
        double tn = norm(t), en = norm(epsilon_step);
        return sigma_data * (tn - en) / std::sqrt(sigma_data * sigma_data + tn * tn);
    }

  private:
    double norm(long t) const { return static_cast<double>(t) / static_cast<double>(num_train_steps); }
};

ConsistencyWeights consistency_weights(double sigma_data, long epsilon_step, long num_train_steps);

// n_points+1 timesteps from epsilon_step up to T, uniform in index space,
// strictly increasing. The sampling loops walk it from the back.
std::vector<long> solver_grid(long n_points, const NoiseSchedule& sched);

}  // namespace mcm
