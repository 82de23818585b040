#pragma once

#include <functional>
#include <memory>

#include "mcm/diffusion.hpp"

namespace mcm {

enum class Branch { online, target };

// Student pair for distillation: the trained backbone F_theta and its
// EMA-tracked target copy. The target is only ever written by ema_update —
// no optimizer owns its parameters and the loss graph detaches it.
class ConsistencyStudent {
  public:
    ConsistencyStudent(const Denoiser& teacher_init, ConsistencyWeights weights,
                       NoiseSchedule schedule, double ema_rate);

    // x0-space prediction f(x_t, t) = c_skip(t) x_t + c_out(t) F(x_t, t).
    // At t = epsilon_step this is the identity on x_t to machine precision.
    ad::VarPtr apply(const ad::VarPtr& x_t, long t, const Condition& cond, Branch b) const;
    Video apply_eval(const Video& x_t, long t, const Condition& cond, Branch b) const;

    Denoiser& backbone() { return *backbone_; }
    const Denoiser& backbone() const { return *backbone_; }
    Denoiser& target() { return *target_; }
    const Denoiser& target() const { return *target_; }
    const ConsistencyWeights& weights() const { return weights_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    double ema_rate() const { return ema_rate_; }

  private:
    std::unique_ptr<Denoiser> backbone_, target_;
    ConsistencyWeights weights_;
    NoiseSchedule schedule_;
    double ema_rate_;
};

// theta_minus <- mu * theta_minus + (1 - mu) * theta.
void ema_update(ConsistencyStudent& student);

struct CdSettings {
    long solver_points = 50;  // teacher sub-grid; the skip is one stride
    double w_min = 5.0, w_max = 15.0;
    double huber_delta = 0.01;
    bool guidance_on = true;
    // Clamp the teacher's origin prediction to the data range inside the
    // solver step. Keeps the target branch bounded where the floored
    // zero-SNR inversion would otherwise amplify prediction error.
    bool clip_x0 = true;
};

// One fully resolved distillation draw.
struct CdPoint {
    Video x0;
    Condition cond;
    long t = 0, t_prev = 0;
    Video eps;
    double w = 1.0;
};

// Draws (grid index, noise, guidance scale) in a fixed documented order so
// independent training loops consuming the same stream stay bit-identical.
CdPoint draw_cd_point(const Video& x0, const Condition& cond, std::mt19937_64& g,
                      const NoiseSchedule& sched, const CdSettings& settings);

// The two sides of the self-consistency objective, kept injectable so exact
// closed-form consistency functions can stand in for the networks in tests.
struct CdBranches {
    std::function<ad::VarPtr(const Video& x_t, long t, const Condition&)> online;
    std::function<Video(const Video& x_t, long t, const Condition&)> target;
};

CdBranches branches_of(const ConsistencyStudent& student);

// Optional transform applied to both x0-space predictions before the
// distance (the motion-payload hook); identity when empty. The target side
// runs under a no-grad guard and is detached.
using PayloadFn = std::function<ad::VarPtr(const ad::VarPtr& x0_pred, Branch b)>;

// d( payload(f_online(x_t, t)), payload(f_target(solver_step(x_t), t_prev)) )
// with x_t = add_noise(x0, eps, t) and the teacher supplying the step.
// `online_prediction`, when given, receives the pre-payload online node so
// further objectives can score the same prediction without a second pass.
ad::VarPtr cd_point_loss(const CdBranches& br, const EpsModel& teacher, const NoiseSchedule& sched,
                         const CdPoint& p, const CdSettings& settings,
                         const PayloadFn& payload = {}, ad::VarPtr* online_prediction = nullptr);

// Convenience entry point: draws the pair itself, then scores it.
ad::VarPtr cd_loss(const ConsistencyStudent& student, const EpsModel& teacher, const Video& x0,
                   const Condition& cond, std::mt19937_64& g, const CdSettings& settings);

// Multi-step consistency sampling: start from pure noise at T, alternate
// f(x, t) and re-noising down a ladder uniform in index space (largest
// first). Output is clipped to the data range.
Video cm_sample(const ConsistencyStudent& student, long num_steps, const Condition& cond,
                std::mt19937_64& g);

}  // namespace mcm
