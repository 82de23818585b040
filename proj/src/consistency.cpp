#include "mcm/consistency.hpp"

#include <cmath>
#include <string>

#include "mcm/rng.hpp"

namespace mcm {

ConsistencyStudent::ConsistencyStudent(const Denoiser& teacher_init, ConsistencyWeights weights,
                                       NoiseSchedule schedule, double ema_rate)
    : backbone_(teacher_init.clone()),
      target_(teacher_init.clone()),
      weights_(weights),
      schedule_(std::move(schedule)),
      ema_rate_(ema_rate) {
    if (!(ema_rate >= 0.0 && ema_rate <= 1.0))
        throw ParameterError("ema_rate must lie in [0,1], got " + std::to_string(ema_rate));
    if (teacher_init.arch().num_train_steps != schedule_.num_train_steps)
        throw ParameterError("backbone timestep range does not match the schedule");
    if (weights_.num_train_steps != schedule_.num_train_steps ||
        weights_.epsilon_step != schedule_.epsilon_step)
        throw ParameterError("consistency weights disagree with the schedule axis");
}

ad::VarPtr ConsistencyStudent::apply(const ad::VarPtr& x_t, long t, const Condition& cond,
                                     Branch b) const {
    schedule_.check_t(t);
    if (t < schedule_.epsilon_step)
        throw ParameterError("consistency function undefined below the origin step");
    const Denoiser& net = (b == Branch::online) ? *backbone_ : *target_;
    ad::VarPtr raw = net.forward(x_t, t, cond);
    // c_out is exactly 0 at the origin step, so f is the identity there.
    return ad::add(ad::scale(x_t, weights_.c_skip(t)), ad::scale(raw, weights_.c_out(t)));
}

Video ConsistencyStudent::apply_eval(const Video& x_t, long t, const Condition& cond,
                                     Branch b) const {
    ad::NoGradGuard guard;
    return apply(ad::constant(x_t), t, cond, b)->value;
}

void ema_update(ConsistencyStudent& student) {
    nn::ema_update(student.target().params(), student.backbone().params(), student.ema_rate());
}

CdPoint draw_cd_point(const Video& x0, const Condition& cond, std::mt19937_64& g,
                      const NoiseSchedule& sched, const CdSettings& settings) {
    std::vector<long> grid = solver_grid(settings.solver_points, sched);
    // Fixed draw order (grid index, noise, guidance scale) keeps independent
    // consumers of one stream aligned.
    std::uniform_int_distribution<long> pick(1, static_cast<long>(grid.size()) - 1);
    long j = pick(g);
    CdPoint p;
    p.x0 = x0;
    p.cond = cond;
    p.t = grid[static_cast<size_t>(j)];
    p.t_prev = grid[static_cast<size_t>(j - 1)];
    p.eps = Tensor::randn(x0.shape, g);
    p.w = settings.w_min + uniform01(g) * (settings.w_max - settings.w_min);
    return p;
}

CdBranches branches_of(const ConsistencyStudent& student) {
    CdBranches br;
    br.online = [&student](const Video& x_t, long t, const Condition& cond) {
        return student.apply(ad::constant(x_t), t, cond, Branch::online);
    };
    br.target = [&student](const Video& x_t, long t, const Condition& cond) {
        return student.apply_eval(x_t, t, cond, Branch::target);
    };
    return br;
}

ad::VarPtr cd_point_loss(const CdBranches& br, const EpsModel& teacher, const NoiseSchedule& sched,
                         const CdPoint& p, const CdSettings& settings, const PayloadFn& payload,
                         ad::VarPtr* online_prediction) {
    if (p.t_prev == p.t)
        throw ParameterError("degenerate consistency pair: both ends at t=" + std::to_string(p.t));
    if (p.t_prev > p.t) throw ParameterError("consistency pair must step toward the origin");
    sched.check_t(p.t);
    if (p.t_prev < sched.epsilon_step)
        throw ParameterError("consistency pair undershoots the origin step");

    Video x_t = add_noise(p.x0, p.eps, p.t, sched);

    ad::VarPtr on = br.online(x_t, p.t, p.cond);
    if (online_prediction) *online_prediction = on;
    if (payload) on = payload(on, Branch::online);

    Video tgt_val;
    {
        ad::NoGradGuard guard;
        Video x_hat = ddim_step(teacher, x_t, p.t, p.t_prev, p.cond, p.w, sched,
                                settings.guidance_on, 1e-4, settings.clip_x0);
        Video f_tgt = br.target(x_hat, p.t_prev, p.cond);
        ad::VarPtr tgt = ad::constant(f_tgt);
        if (payload) tgt = payload(tgt, Branch::target);
        tgt_val = tgt->value;
    }
    return ad::huber_distance(on, ad::constant(tgt_val), settings.huber_delta);
}

ad::VarPtr cd_loss(const ConsistencyStudent& student, const EpsModel& teacher, const Video& x0,
                   const Condition& cond, std::mt19937_64& g, const CdSettings& settings) {
    CdPoint p = draw_cd_point(x0, cond, g, student.schedule(), settings);
    return cd_point_loss(branches_of(student), teacher, student.schedule(), p, settings);
}

Video cm_sample(const ConsistencyStudent& student, long num_steps, const Condition& cond,
                std::mt19937_64& g) {
    if (num_steps != 1 && num_steps != 2 && num_steps != 4 && num_steps != 8)
        throw ParameterError("sampling ladder supports 1, 2, 4 or 8 steps, got " +
                             std::to_string(num_steps));
    const DenoiserArch& a = student.backbone().arch();
    const NoiseSchedule& sched = student.schedule();
    std::vector<long> grid = solver_grid(num_steps, sched);

    // Draw order: the initial noise, then one fresh noise per re-noising rung.
    Video x = Tensor::randn({a.frames, a.channels, a.height, a.width}, g);
    Video x0 = x;
    for (long k = num_steps; k >= 1; --k) {
        x0 = student.apply_eval(x, grid[static_cast<size_t>(k)], cond, Branch::online);
        if (k > 1) {
            Video eps = Tensor::randn(x0.shape, g);
            x = add_noise(x0, eps, grid[static_cast<size_t>(k - 1)], sched);
        }
    }
    clip_(x0, -1.0, 1.0);
    return x0;
}

}  // namespace mcm
