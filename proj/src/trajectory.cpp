#include "mcm/trajectory.hpp"

#include "mcm/errors.hpp"

namespace mcm {

namespace {

TrajectorySample from_point(const CdPoint& p, TrajectorySource src, const NoiseSchedule& sched) {
    TrajectorySample s;
    s.x_t = add_noise(p.x0, p.eps, p.t, sched);
    s.t = p.t;
    s.t_prev = p.t_prev;
    s.cond = p.cond;
    s.source = src;
    s.x_start = p.x0;
    s.eps = p.eps;
    s.w = p.w;
    return s;
}

}  // namespace

TrajectorySample sample_real_point(const Video& x0, const Condition& cond,
                                   const NoiseSchedule& sched, std::mt19937_64& g,
                                   const CdSettings& settings) {
    CdPoint p = draw_cd_point(x0, cond, g, sched, settings);
    return from_point(p, TrajectorySource::real_data, sched);
}

TrajectorySample simulate_hq_trajectory(const ConsistencyStudent& student, const Condition& cond,
                                        std::mt19937_64& g, const CdSettings& settings) {
    const NoiseSchedule& sched = student.schedule();
    const DenoiserArch& arch = student.backbone().arch();
    Video x_T = Tensor::randn({arch.frames, arch.channels, arch.height, arch.width}, g);
    Video x0_hat = student.apply_eval(x_T, sched.num_train_steps, cond, Branch::online);
    CdPoint p = draw_cd_point(x0_hat, cond, g, sched, settings);
    return from_point(p, TrajectorySource::generated, sched);
}

std::vector<TrajectorySample> build_mixed_batch(const VideoDataset& dataset,
                                                const ConsistencyStudent& student, long n,
                                                double lambda_real, std::mt19937_64& g,
                                                const CdSettings& settings) {
    if (lambda_real < 0.0 || lambda_real > 1.0)
        throw ParameterError("lambda_real must lie in [0, 1]");
    if (n < 0) throw ParameterError("batch size must be nonnegative");

    std::bernoulli_distribution pick_real(lambda_real);
    std::vector<TrajectorySample> batch;
    batch.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        // The mix decision is consumed for every slot regardless of outcome.
        if (pick_real(g)) {
            if (dataset.size() == 0)
                throw ParameterError("real trajectory requested from an empty dataset");
            std::uniform_int_distribution<size_t> idx(0, dataset.size() - 1);
            size_t k = idx(g);
            batch.push_back(
                sample_real_point(dataset.clips[k], dataset.labels[k], student.schedule(), g,
                                  settings));
        } else {
            std::uniform_int_distribution<long> cls(0, student.backbone().arch().num_classes - 1);
            Condition cond = Condition::of(cls(g));
            batch.push_back(simulate_hq_trajectory(student, cond, g, settings));
        }
    }
    return batch;
}

CdPoint cd_point_of(const TrajectorySample& s) {
    CdPoint p;
    p.x0 = s.x_start;
    p.cond = s.cond;
    p.t = s.t;
    p.t_prev = s.t_prev;
    p.eps = s.eps;
    p.w = s.w;
    return p;
}

}  // namespace mcm
