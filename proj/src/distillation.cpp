#include "mcm/distillation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "mcm/errors.hpp"
#include "mcm/rng.hpp"

namespace mcm {

namespace {

PayloadFn payload_of(const MotionContext& motion) {
    return [motion](const ad::VarPtr& x0_pred, Branch b) {
        return motion.payload(x0_pred, /*use_twin=*/b == Branch::target);
    };
}

ad::VarPtr mean_of(const std::vector<ad::VarPtr>& terms) {
    ad::VarPtr acc = terms.front();
    for (size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
    return ad::scale(acc, 1.0 / double(terms.size()));
}

void validate_config(const DistillConfig& cfg) {
    if (cfg.lambda_adv < 0.0) throw ParameterError("lambda_adv must be nonnegative");
    if (cfg.lambda_real < 0.0 || cfg.lambda_real > 1.0)
        throw ParameterError("lambda_real must lie in [0, 1]");
    if (cfg.l_frames < 1) throw ParameterError("l_frames must be positive");
    if (cfg.batch_size < 1) throw ParameterError("batch_size must be positive");
    if (cfg.total_steps < 0) throw ParameterError("total_steps must be nonnegative");
    if (cfg.lr_student <= 0.0 || cfg.lr_disc <= 0.0)
        throw ParameterError("learning rates must be positive");
    if (cfg.disc_every < 1) throw ParameterError("disc_every must be positive");
    if (cfg.eval_samples < 0) throw ParameterError("eval_samples must be nonnegative");
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void blank_eval(TrainLogRow& row, size_t n_counts) {
    row.fvd_proxy.assign(n_counts, kNan);
    row.watermark_energy.assign(n_counts, kNan);
    row.motion_err.assign(n_counts, kNan);
    row.near_dark_frac.assign(n_counts, kNan);
}

bool eval_due(long step, const DistillConfig& cfg) {
    if (cfg.eval_samples <= 0 || cfg.total_steps <= 0) return false;
    long cadence = std::max(1L, cfg.total_steps / 10);
    return (step + 1) % cadence == 0 || step + 1 == cfg.total_steps;
}

void run_eval(TrainLogRow& row, const ConsistencyStudent& student, const DistillConfig& cfg,
              const EvalContext& ctx, long step) {
    row.evaluated = true;
    for (size_t i = 0; i < cfg.eval_step_counts.size(); ++i) {
        StepEval e = evaluate_student(student, cfg.eval_step_counts[i], ctx, cfg.eval_samples,
                                      cfg.seed + std::uint64_t(step + 1));
        row.fvd_proxy[i] = e.fvd;
        row.watermark_energy[i] = e.wm_energy;
        row.motion_err[i] = e.motion_err;
        row.near_dark_frac[i] = e.dark_frac;
    }
}

}  // namespace

ad::VarPtr mcd_point_loss(const CdBranches& br, const EpsModel& teacher,
                          const NoiseSchedule& sched, const CdPoint& p,
                          const MotionContext& motion, const CdSettings& settings,
                          ad::VarPtr* online_prediction) {
    return cd_point_loss(br, teacher, sched, p, settings, payload_of(motion), online_prediction);
}

ad::VarPtr mcd_loss(const ConsistencyStudent& student, const EpsModel& teacher,
                    const TrajectorySample& sample, const MotionContext& motion,
                    const CdSettings& settings) {
    return mcd_point_loss(branches_of(student), teacher, student.schedule(), cd_point_of(sample),
                          motion, settings);
}

LossBundle total_loss(const ConsistencyStudent& student, const EpsModel& teacher,
                      Discriminator* disc, const std::vector<TrajectorySample>& batch,
                      const ImageDataset& images, const MotionContext& motion,
                      const DistillConfig& cfg, std::mt19937_64& g) {
    if (batch.empty()) throw ParameterError("total_loss needs a nonempty batch");
    const bool adv_on = cfg.lambda_adv != 0.0;
    if (adv_on && !disc) throw ParameterError("adversarial weight set but no discriminator");
    if (adv_on && images.size() == 0)
        throw ParameterError("adversarial weight set but the image set is empty");

    CdBranches br = branches_of(student);
    PayloadFn payload = payload_of(motion);

    std::vector<ad::VarPtr> real_terms, gen_terms;
    std::vector<FrameSample> fakes;
    std::vector<Condition> fake_conds;
    LossBundle out;
    long n_real = 0, n_gen = 0;

    for (const TrajectorySample& s : batch) {
        ad::VarPtr pred;
        ad::VarPtr mcd = cd_point_loss(br, teacher, student.schedule(), cd_point_of(s), cfg.cd,
                                       payload, adv_on ? &pred : nullptr);
        ad::VarPtr term = mcd;
        if (adv_on) {
            FrameSample fs = sample_frames(pred->value, cfg.l_frames, g);
            ad::VarPtr adv = generator_adv_loss(*disc, pred, fs.indices, s.cond);
            out.adv_G += adv->value.data[0] / double(batch.size());
            term = ad::add(mcd, ad::scale(adv, cfg.lambda_adv));
            fakes.push_back(std::move(fs));
            fake_conds.push_back(s.cond);
        }
        if (s.source == TrajectorySource::real_data) {
            real_terms.push_back(term);
            out.mcd_real += mcd->value.data[0];
            ++n_real;
        } else {
            gen_terms.push_back(term);
            out.mcd_gen += mcd->value.data[0];
            ++n_gen;
        }
    }
    out.mcd_real = n_real ? out.mcd_real / double(n_real) : 0.0;
    out.mcd_gen = n_gen ? out.mcd_gen / double(n_gen) : 0.0;

    if (!real_terms.empty()) out.loss_G = ad::scale(mean_of(real_terms), cfg.lambda_real);
    if (!gen_terms.empty()) {
        ad::VarPtr gen_side = ad::scale(mean_of(gen_terms), 1.0 - cfg.lambda_real);
        out.loss_G = out.loss_G ? ad::add(out.loss_G, gen_side) : gen_side;
    }

    if (adv_on) {
        // Draw order: per-sample frame picks above, then the real-image
        // picks, one per fake clip, in batch order.
        std::vector<const Video*> reals;
        std::vector<Condition> real_conds;
        std::uniform_int_distribution<size_t> pick(0, images.size() - 1);
        for (size_t i = 0; i < batch.size(); ++i) {
            size_t k = pick(g);
            reals.push_back(&images.images[k]);
            real_conds.push_back(images.labels[k]);
        }
        out.loss_D = discriminator_loss(*disc, fakes, fake_conds, reals, real_conds,
                                        cfg.r1_weight);
        out.adv_D = out.loss_D->value.data[0];
    }
    return out;
}

EvalContext make_eval_context(const DataParams& params, const DistillConfig& cfg) {
    EvalContext ctx{FeatureEmbedder(params.channels * params.height * params.width, 16, cfg.seed),
                    {},
                    params,
                    cfg.dark_threshold};
    VideoDataset ref = make_clean_video_dataset(64, params, cfg.seed);
    ctx.ref_features = video_feature_set(ctx.embedder, ref.clips);
    return ctx;
}

StepEval evaluate_student(const ConsistencyStudent& student, long k, const EvalContext& ctx,
                          long n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ParameterError("evaluation needs at least one sample");
    const long num_classes = ctx.params.num_classes;
    std::vector<Video> clips;
    std::vector<long> classes;
    for (long i = 0; i < n_samples; ++i) {
        long cls = i % num_classes;
        auto g = derive_rng(seed, "eval.sample", std::uint64_t(k) * 1000003ULL + std::uint64_t(i));
        clips.push_back(cm_sample(student, k, Condition::of(cls), g));
        classes.push_back(cls);
    }

    StepEval e;
    e.fvd = frechet_distance(video_feature_set(ctx.embedder, clips), ctx.ref_features);
    e.dark_frac = near_dark_fraction(clips, ctx.dark_threshold);

    double wm = 0.0, motion = 0.0;
    long measurable = 0;
    for (size_t i = 0; i < clips.size(); ++i) {
        wm += watermark_energy(clips[i], ctx.params.region) / double(clips.size());
        auto dir = class_direction(classes[i], num_classes);
        try {
            motion += motion_error(clips[i],
                                   {dir[0] * ctx.params.speed, dir[1] * ctx.params.speed},
                                   &ctx.params.region);
            ++measurable;
        } catch (const UndefinedMotionError&) {
            // dark clip: no centroid to track, counted by dark_frac instead
        }
    }
    e.wm_energy = wm;
    e.motion_err = measurable ? motion / double(measurable) : kNan;
    return e;
}

TrainResult lcm_distill(const Denoiser& teacher, const NoiseSchedule& sched,
                        const VideoDataset& videos, const DistillConfig& cfg,
                        const CheckpointFn& on_divergence) {
    validate_config(cfg);
    if (videos.size() == 0) throw ParameterError("video dataset is empty");

    TrainResult res;
    res.student = std::make_unique<ConsistencyStudent>(
        teacher, consistency_weights(0.5, sched.epsilon_step, sched.num_train_steps), sched,
        cfg.ema_rate);
    nn::Adam opt(res.student->backbone().params(), cfg.lr_student);
    CdBranches br = branches_of(*res.student);

    std::unique_ptr<EvalContext> eval_ctx;
    if (cfg.eval_samples > 0)
        eval_ctx = std::make_unique<EvalContext>(make_eval_context(videos.params, cfg));

    for (long step = 0; step < cfg.total_steps; ++step) {
        auto gb = derive_rng(cfg.seed, "distill.batch", std::uint64_t(step));
        auto batch = build_mixed_batch(videos, *res.student, cfg.batch_size, 1.0, gb, cfg.cd);

        std::vector<ad::VarPtr> terms;
        for (const TrajectorySample& s : batch)
            terms.push_back(cd_point_loss(br, teacher, sched, cd_point_of(s), cfg.cd));
        ad::VarPtr loss = mean_of(terms);

        if (!std::isfinite(loss->value.data[0])) {
            if (on_divergence) on_divergence(step, *res.student);
            throw DivergenceError("distillation loss became non-finite", step);
        }

        opt.zero_grad();
        ad::backward(loss);
        opt.step();
        ema_update(*res.student);

        TrainLogRow row;
        row.step = step;
        row.loss_G = loss->value.data[0];
        row.mcd_real = row.loss_G;
        blank_eval(row, cfg.eval_step_counts.size());
        if (eval_ctx && eval_due(step, cfg)) run_eval(row, *res.student, cfg, *eval_ctx, step);
        res.log.push_back(std::move(row));
    }
    return res;
}

TrainResult train_mcm(const Denoiser& teacher, const NoiseSchedule& sched,
                      const VideoDataset& videos, const ImageDataset& images,
                      const DistillConfig& cfg, const CheckpointFn& on_divergence) {
    validate_config(cfg);
    if (videos.size() == 0) throw ParameterError("video dataset is empty");
    const bool adv_on = cfg.lambda_adv != 0.0;
    if (adv_on && images.size() == 0)
        throw ParameterError("adversarial training needs the image dataset");

    const DenoiserArch& arch = teacher.arch();
    TrainResult res;
    res.student = std::make_unique<ConsistencyStudent>(
        teacher, consistency_weights(0.5, sched.epsilon_step, sched.num_train_steps), sched,
        cfg.ema_rate);

    if (cfg.motion_kind == MotionKind::learnable)
        res.head = std::make_unique<MotionHead>(arch.channels * arch.height * arch.width,
                                                cfg.head_hidden, cfg.head_out, cfg.ema_rate,
                                                cfg.seed);
    MotionContext motion{cfg.motion_kind, cfg.motion_cutoff, res.head.get()};

    std::unique_ptr<nn::Adam> opt_d;
    if (adv_on) {
        DiscArch darch;
        darch.channels = arch.channels;
        darch.height = arch.height;
        darch.width = arch.width;
        darch.num_classes = arch.num_classes;
        res.disc = std::make_unique<Discriminator>(darch, cfg.seed);
        opt_d = std::make_unique<nn::Adam>(res.disc->head_params(), cfg.lr_disc);
    }

    nn::ParamList gen_params = res.student->backbone().params();
    if (res.head)
        for (auto& p : res.head->params()) gen_params.push_back(p);
    nn::Adam opt_g(gen_params, cfg.lr_student);

    std::unique_ptr<EvalContext> eval_ctx;
    if (cfg.eval_samples > 0)
        eval_ctx = std::make_unique<EvalContext>(make_eval_context(videos.params, cfg));

    for (long step = 0; step < cfg.total_steps; ++step) {
        auto gb = derive_rng(cfg.seed, "distill.batch", std::uint64_t(step));
        auto batch =
            build_mixed_batch(videos, *res.student, cfg.batch_size, cfg.lambda_real, gb, cfg.cd);
        auto ga = derive_rng(cfg.seed, "distill.adv", std::uint64_t(step));
        LossBundle bundle =
            total_loss(*res.student, teacher, res.disc.get(), batch, images, motion, cfg, ga);

        bool bad_g = !std::isfinite(bundle.loss_G->value.data[0]);
        bool bad_d = bundle.loss_D && !std::isfinite(bundle.loss_D->value.data[0]);
        if (bad_g || bad_d) {
            if (on_divergence) on_divergence(step, *res.student);
            throw DivergenceError(bad_g ? "generator loss became non-finite"
                                        : "discriminator loss became non-finite",
                                  step);
        }

        opt_g.zero_grad();
        ad::backward(bundle.loss_G);
        opt_g.step();
        ema_update(*res.student);
        if (res.head) head_ema_update(*res.head);

        if (res.disc && step % cfg.disc_every == 0) {
            opt_d->zero_grad();
            ad::backward(bundle.loss_D);
            opt_d->step();
        }

        TrainLogRow row;
        row.step = step;
        row.loss_G = bundle.loss_G->value.data[0];
        row.loss_D = bundle.loss_D ? bundle.loss_D->value.data[0] : 0.0;
        row.mcd_real = bundle.mcd_real;
        row.mcd_gen = bundle.mcd_gen;
        row.adv_G = bundle.adv_G;
        row.adv_D = bundle.adv_D;
        blank_eval(row, cfg.eval_step_counts.size());
        if (eval_ctx && eval_due(step, cfg)) run_eval(row, *res.student, cfg, *eval_ctx, step);
        res.log.push_back(std::move(row));
    }
    return res;
}

void write_training_csv(const std::vector<TrainLogRow>& log,
                        const std::vector<long>& eval_step_counts, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open training log for writing: " + path);
    f << "step,loss_G,loss_D,mcd_real,mcd_gen,adv_G,adv_D";
    for (long k : eval_step_counts)
        f << ",fvd_proxy@" << k << ",watermark_energy@" << k << ",motion_err@" << k
          << ",near_dark@" << k;
    f << "\n" << std::setprecision(17);
    for (const TrainLogRow& row : log) {
        f << row.step << ',' << row.loss_G << ',' << row.loss_D << ',' << row.mcd_real << ','
          << row.mcd_gen << ',' << row.adv_G << ',' << row.adv_D;
        for (size_t i = 0; i < eval_step_counts.size(); ++i) {
            if (!row.evaluated) {
                f << ",,,,";
                continue;
            }
            f << ',' << row.fvd_proxy[i] << ',' << row.watermark_energy[i] << ','
              << row.motion_err[i] << ',' << row.near_dark_frac[i];
        }
        f << "\n";
    }
    if (!f) throw IoError("failed while writing training log: " + path);
}

}  // namespace mcm
