#pragma once

#include <random>
#include <vector>

#include "mcm/consistency.hpp"
#include "mcm/synthetic_data.hpp"

namespace mcm {

enum class TrajectorySource { real_data, generated };

// One distillation training point: a noised state on some trajectory plus
// everything needed to rebuild the consistency pair deterministically.
// Invariant: x_t == alpha_t * x_start + sigma_t * eps, [t_prev, t] adjacent
// on the solver grid, and x_start never carries gradient history.
struct TrajectorySample {
    Video x_t;
    long t = 0;
    long t_prev = 0;
    Condition cond;
    TrajectorySource source = TrajectorySource::real_data;
    Video x_start;  // clean clip (real) or the seeded one-step prediction (generated)
    Video eps;      // injected noise
    double w = 0.0; // guidance weight for the teacher solver step
};

// Noise a dataset clip at a grid timestep. Consumes the generator exactly
// like the plain consistency-pair draw so the two stay interchangeable.
TrajectorySample sample_real_point(const Video& x0, const Condition& cond,
                                   const NoiseSchedule& sched, std::mt19937_64& g,
                                   const CdSettings& settings = {});

// Seed a synthetic high-quality trajectory: one-step student inference from
// pure noise (values only, no graph), then re-noise the prediction at a
// fresh grid timestep. Draw order: x_T, then the pair/noise/weight draw.
TrajectorySample simulate_hq_trajectory(const ConsistencyStudent& student, const Condition& cond,
                                        std::mt19937_64& g, const CdSettings& settings = {});

// n samples, each independently real with probability lambda_real, else
// generated (condition drawn uniformly over the student's class vocabulary).
std::vector<TrajectorySample> build_mixed_batch(const VideoDataset& dataset,
                                                const ConsistencyStudent& student, long n,
                                                double lambda_real, std::mt19937_64& g,
                                                const CdSettings& settings = {});

// The consistency-pair view of a sample.
CdPoint cd_point_of(const TrajectorySample& s);

}  // namespace mcm
