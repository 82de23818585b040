#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mcm/condition.hpp"
#include "mcm/nn.hpp"
#include "mcm/schedule.hpp"
#include "mcm/synthetic_data.hpp"

namespace mcm {

// Anything that predicts the noise component of a corrupted video. The
// forward pass builds a tape when gradients are enabled; eval() is the pure
// sampling path.
class EpsModel {
  public:
    virtual ~EpsModel() = default;
    virtual ad::VarPtr forward(const ad::VarPtr& x_t, long t, const Condition& cond) const = 0;

    Video eval(const Video& x_t, long t, const Condition& cond) const {
        ad::NoGradGuard ng;
        return forward(ad::constant(x_t), t, cond)->value;
    }
};

struct DenoiserArch {
    long frames = 8, channels = 1, height = 16, width = 16;
    long hidden = 32;
    long time_dim = 32;
    long num_classes = 8;
    long num_train_steps = 1000;  // timestep normalization for the embedding

    bool operator==(const DenoiserArch&) const = default;
};

// Small convolutional eps-prediction network over the [F*C, H, W] stack
// with sinusoidal time features and an additive class embedding (last
// embedding row is the unconditional token).
class Denoiser : public EpsModel {
  public:
    Denoiser(const DenoiserArch& arch, std::uint64_t init_seed);

    ad::VarPtr forward(const ad::VarPtr& x_t, long t, const Condition& cond) const override;

    const DenoiserArch& arch() const { return arch_; }
    nn::ParamList& params() { return params_; }
    const nn::ParamList& params() const { return params_; }

    // Deep copy; fresh leaves, same values.
    std::unique_ptr<Denoiser> clone() const;
    // Start from zero output: final conv zeroed, everything else kept.
    void zero_output_layer();

  private:
    void arch_check_t(long t) const;

    DenoiserArch arch_;
    nn::Conv2d conv_in_, conv_mid1_, conv_mid2_, conv_out_;
    nn::Linear time_mlp1_, time_mlp2_;
    ad::VarPtr class_emb_;  // [K+1, hidden]
    nn::ParamList params_;
};

// Forward corruption x_t = alpha_t * x0 + sigma_t * eps.
Video add_noise(const Video& x0, const Video& eps, long t, const NoiseSchedule& sched);

// Exact inversion (x_t - sigma_t * eps_hat) / alpha_t; singular at alpha=0.
Video predict_x0(const Video& x_t, const Video& eps_hat, long t, const NoiseSchedule& sched);

// Classifier-free guidance: eps_u + w * (eps_c - eps_u).
Video guided_eps(const EpsModel& model, const Video& x_t, long t, const Condition& cond, double w);

// One deterministic ODE solver step t -> t_prev (t_prev == t is a no-op).
// The t = T inversion is guarded by alpha_floor. `guidance_on` selects
// between guided and plain conditional prediction inside the solver.
// `clip_x0` clamps the inverted origin prediction to [-1,1] before
// recombination (off by default so the raw solver map stays exact).
Video ddim_step(const EpsModel& model, const Video& x_t, long t, long t_prev, const Condition& cond,
                double w, const NoiseSchedule& sched, bool guidance_on = true,
                double alpha_floor = 1e-4, bool clip_x0 = false);

// Mean squared eps-prediction error of one batch; the training objective of
// the teacher and the finite-difference target of the gradient checks.
ad::VarPtr eps_mse_loss(const EpsModel& model, const std::vector<const Video*>& x0s,
                        const std::vector<Condition>& conds, const std::vector<long>& ts,
                        const std::vector<const Video*>& epss, const NoiseSchedule& sched);

struct TeacherConfig {
    long num_train_steps = 1000;
    double beta_min = 1e-4, beta_max = 2e-2;
    long epsilon_step = 0;
    DenoiserArch arch;
    long steps = 1500;
    long batch = 8;
    double lr = 1e-3;
    double cond_dropout = 0.1;  // fraction of draws trained on the NULL token
    std::uint64_t seed = 0;
    long checkpoint_every = 0;  // 0 disables periodic callbacks
    std::function<void(long step, const Denoiser&, const nn::Adam&)> checkpoint_cb;
};

struct TeacherResult {
    std::unique_ptr<Denoiser> denoiser;
    NoiseSchedule schedule;
    std::vector<double> loss_curve;  // one entry per completed step this run
    std::unique_ptr<nn::Adam> optimizer;  // final state, for checkpointing
};

// Mid-run optimizer snapshot. Because every step derives its own draw
// stream, restoring this and continuing from start_step replays the
// remaining steps bit-identically to an uninterrupted run.
struct TeacherResume {
    Tensor params;  // flat parameter vector
    Tensor adam_m, adam_v;
    long adam_t = 0;
    long start_step = 0;
};

TeacherResult train_teacher(const VideoDataset& dataset, const TeacherConfig& config,
                            const TeacherResume* resume = nullptr);

}  // namespace mcm
