#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcm/adversarial.hpp"
#include "mcm/metrics.hpp"
#include "mcm/motion.hpp"
#include "mcm/trajectory.hpp"

namespace mcm {

struct DistillConfig {
    double lambda_adv = 1.0;   // adversarial weight in the generator objective
    double lambda_real = 0.5;  // share of real-data trajectories
    MotionKind motion_kind = MotionKind::diff;
    double motion_cutoff = 0.25;             // band split for the frequency kinds
    long head_hidden = 16, head_out = 8;     // learnable-representation head sizes
    long l_frames = 2;                       // frames scored per fake clip
    double lr_student = 5e-5;                // 10x the full-scale 5e-6; toy nets are tiny
    double lr_disc = 5e-4;                   // 10x the full-scale 5e-5
    double r1_weight = 0.01;
    long disc_every = 1;                     // discriminator update cadence in steps
    long batch_size = 4;
    long total_steps = 200;
    std::uint64_t seed = 0;
    double ema_rate = 0.95;
    CdSettings cd;

    // Evaluation: runs every total_steps/10 steps (and at the last step)
    // whenever eval_samples > 0, sampling each entry of eval_step_counts.
    long eval_samples = 0;
    std::vector<long> eval_step_counts{1, 2, 4};
    double dark_threshold = 0.01;
};

// Per-step log line. Evaluation vectors align with eval_step_counts and
// stay NaN on steps without an evaluation pass.
struct TrainLogRow {
    long step = 0;
    double loss_G = 0, loss_D = 0;
    double mcd_real = 0, mcd_gen = 0;
    double adv_G = 0, adv_D = 0;
    bool evaluated = false;
    std::vector<double> fvd_proxy, watermark_energy, motion_err, near_dark_frac;
};

// Everything a finished (or aborted) distillation run hands back.
struct TrainResult {
    std::unique_ptr<ConsistencyStudent> student;
    std::unique_ptr<Discriminator> disc;  // null when lambda_adv == 0
    std::unique_ptr<MotionHead> head;     // null unless the learnable kind
    std::vector<TrainLogRow> log;
};

// Motion-space consistency loss on one trajectory point: the plain pair
// loss with both branch predictions routed through the motion payload (the
// target side uses the head's slow twin). The raw kind is a pass-through,
// so it builds the identical graph to the plain pair loss.
ad::VarPtr mcd_point_loss(const CdBranches& br, const EpsModel& teacher,
                          const NoiseSchedule& sched, const CdPoint& p,
                          const MotionContext& motion, const CdSettings& settings,
                          ad::VarPtr* online_prediction = nullptr);

ad::VarPtr mcd_loss(const ConsistencyStudent& student, const EpsModel& teacher,
                    const TrajectorySample& sample, const MotionContext& motion,
                    const CdSettings& settings);

// Generator and discriminator objectives over one mixed batch.
// loss_G = lambda_real * mean over real samples of (mcd + lambda_adv*adv)
//        + (1-lambda_real) * mean over generated samples of the same;
// empty source buckets contribute nothing, so the lambda_real extremes
// reduce exactly to the single-source means. loss_D scores the same fake
// frames, detached, against images drawn from the high-quality set; it is
// null when lambda_adv == 0 (then no adversarial work happens at all).
struct LossBundle {
    ad::VarPtr loss_G;
    ad::VarPtr loss_D;
    double mcd_real = 0, mcd_gen = 0, adv_G = 0, adv_D = 0;
};

LossBundle total_loss(const ConsistencyStudent& student, const EpsModel& teacher,
                      Discriminator* disc, const std::vector<TrajectorySample>& batch,
                      const ImageDataset& images, const MotionContext& motion,
                      const DistillConfig& cfg, std::mt19937_64& g);

// Frozen evaluation harness shared by the training loops and the report
// command: a fixed embedder plus reference features of the clean-appearance
// video distribution, both derived from the config seed alone.
struct EvalContext {
    FeatureEmbedder embedder;
    FeatureSet ref_features;
    DataParams params;
    double dark_threshold = 0.01;
};

EvalContext make_eval_context(const DataParams& params, const DistillConfig& cfg);

struct StepEval {
    double fvd = 0, wm_energy = 0, motion_err = 0, dark_frac = 0;
};

// Draw n k-step samples (conditions cycling over the class vocabulary) and
// measure them. motion_err averages over clips with measurable motion and
// is NaN if every sample is dark.
StepEval evaluate_student(const ConsistencyStudent& student, long k, const EvalContext& ctx,
                          long n_samples, std::uint64_t seed);

using CheckpointFn = std::function<void(long step, const ConsistencyStudent&)>;

// Plain consistency-distillation baseline: real trajectories only, raw
// payload, no adversarial term. Kept as an independent loop so the full
// pipeline's collapse onto it is a meaningful check.
TrainResult lcm_distill(const Denoiser& teacher, const NoiseSchedule& sched,
                        const VideoDataset& videos, const DistillConfig& cfg,
                        const CheckpointFn& on_divergence = {});

// Full pipeline: mixed trajectories, motion-space consistency, adversarial
// appearance pressure, alternating generator/discriminator updates with EMA
// tracking each step. Throws DivergenceError (after invoking the callback
// with the last finite state) when a loss goes non-finite.
TrainResult train_mcm(const Denoiser& teacher, const NoiseSchedule& sched,
                      const VideoDataset& videos, const ImageDataset& images,
                      const DistillConfig& cfg, const CheckpointFn& on_divergence = {});

// CSV emission: fixed base columns, then per eval step count k the columns
// fvd_proxy@k, watermark_energy@k, motion_err@k, near_dark@k (blank on
// non-evaluated rows).
void write_training_csv(const std::vector<TrainLogRow>& log,
                        const std::vector<long>& eval_step_counts, const std::string& path);

}  // namespace mcm
