#include "mcm/diffusion.hpp"

#include <cmath>

namespace mcm {

Denoiser::Denoiser(const DenoiserArch& arch, std::uint64_t init_seed) : arch_(arch) {
    if (arch.frames < 1 || arch.channels < 1 || arch.height < 1 || arch.width < 1 ||
        arch.hidden < 1 || arch.num_classes < 1)
        throw ParameterError("Denoiser: invalid architecture");
    if (arch.time_dim % 2 != 0) throw ParameterError("Denoiser: time_dim must be even");

    auto g = derive_rng(init_seed, "denoiser.init");
    long fc = arch.frames * arch.channels;
    conv_in_ = nn::Conv2d(fc, arch.hidden, 3, g);
    time_mlp1_ = nn::Linear(arch.time_dim, arch.hidden, g);
    time_mlp2_ = nn::Linear(arch.hidden, arch.hidden, g);
    class_emb_ = nn::make_param_xavier({arch.num_classes + 1, arch.hidden}, arch.hidden,
                                       arch.hidden, g);
    conv_mid1_ = nn::Conv2d(arch.hidden, arch.hidden, 3, g);
    conv_mid2_ = nn::Conv2d(arch.hidden, arch.hidden, 3, g);
    conv_out_ = nn::Conv2d(arch.hidden, fc, 3, g);

    conv_in_.collect(params_, "conv_in");
    time_mlp1_.collect(params_, "time_mlp1");
    time_mlp2_.collect(params_, "time_mlp2");
    params_.push_back({"class_emb", class_emb_});
    conv_mid1_.collect(params_, "conv_mid1");
    conv_mid2_.collect(params_, "conv_mid2");
    conv_out_.collect(params_, "conv_out");
}

ad::VarPtr Denoiser::forward(const ad::VarPtr& x_t, long t, const Condition& cond) const {
    const Shape want{arch_.frames, arch_.channels, arch_.height, arch_.width};
    if (x_t->value.shape != want)
        throw ShapeError("Denoiser: input " + shape_str(x_t->value.shape) + ", expected " +
                         shape_str(want));
    if (!cond.is_null() && cond.class_id >= arch_.num_classes)
        throw ParameterError("Denoiser: class_id outside vocabulary");
    arch_check_t(t);

    long fc = arch_.frames * arch_.channels;
    auto h = conv_in_.apply(ad::reshape(x_t, {fc, arch_.height, arch_.width}));

    double t_norm = static_cast<double>(t) / static_cast<double>(arch_.num_train_steps);
    auto temb = ad::constant(nn::sinusoidal_embedding(t_norm, arch_.time_dim)
                                 .reshaped({1, arch_.time_dim}));
    auto tvec = time_mlp2_.apply(ad::silu(time_mlp1_.apply(temb)));
    h = ad::add_channel_bias(h, ad::reshape(tvec, {arch_.hidden}));

    long row = cond.is_null() ? arch_.num_classes : cond.class_id;
    auto cvec = ad::reshape(ad::gather_first(class_emb_, {row}), {arch_.hidden});
    h = ad::silu(ad::add_channel_bias(h, cvec));

    h = ad::silu(conv_mid1_.apply(h));
    h = ad::silu(conv_mid2_.apply(h));
    auto out = conv_out_.apply(h);
    return ad::reshape(out, want);
}

void Denoiser::arch_check_t(long t) const {
    if (t < 0 || t > arch_.num_train_steps)
        throw ParameterError("Denoiser: timestep outside schedule range");
}

std::unique_ptr<Denoiser> Denoiser::clone() const {
    auto copy = std::make_unique<Denoiser>(arch_, 0);
    nn::copy_params(copy->params_, params_);
    return copy;
}

void Denoiser::zero_output_layer() {
    std::fill(conv_out_.w->value.data.begin(), conv_out_.w->value.data.end(), 0.0);
    std::fill(conv_out_.b->value.data.begin(), conv_out_.b->value.data.end(), 0.0);
}

Video add_noise(const Video& x0, const Video& eps, long t, const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "add_noise");
    double a = sched.alpha(t), s = sched.sigma(t);
    Video out = x0;
    for (long i = 0; i < out.numel(); ++i) out.data[i] = a * x0.data[i] + s * eps.data[i];
    return out;
}

Video predict_x0(const Video& x_t, const Video& eps_hat, long t, const NoiseSchedule& sched) {
    check_same_shape(x_t, eps_hat, "predict_x0");
    double a = sched.alpha(t), s = sched.sigma(t);
    if (a <= 0.0)
        throw SingularStepError("predict_x0: alpha=0 at t=" + std::to_string(t) +
                                "; use the consistency function at the terminal step");
    Video out = x_t;
    for (long i = 0; i < out.numel(); ++i) out.data[i] = (x_t.data[i] - s * eps_hat.data[i]) / a;
    return out;
}

Video guided_eps(const EpsModel& model, const Video& x_t, long t, const Condition& cond, double w) {
    if (cond.is_null()) throw ParameterError("guided_eps: condition must not be the NULL token");
    Video eps_c = model.eval(x_t, t, cond);
    if (w == 1.0) return eps_c;
    Video eps_u = model.eval(x_t, t, Condition::null_cond());
    Video out = eps_u;
    for (long i = 0; i < out.numel(); ++i)
        out.data[i] = eps_u.data[i] + w * (eps_c.data[i] - eps_u.data[i]);
    return out;
}

Video ddim_step(const EpsModel& model, const Video& x_t, long t, long t_prev, const Condition& cond,
                double w, const NoiseSchedule& sched, bool guidance_on, double alpha_floor,
                bool clip_x0) {
    sched.check_t(t);
    sched.check_t(t_prev);
    if (t_prev > t) throw ParameterError("ddim_step: t_prev must not exceed t");
    if (t_prev == t) return x_t;

    Video eps_hat = (guidance_on && !cond.is_null()) ? guided_eps(model, x_t, t, cond, w)
                                                     : model.eval(x_t, t, cond);
    double a = std::max(sched.alpha(t), alpha_floor);
    double s = sched.sigma(t);
    double ap = sched.alpha(t_prev), sp = sched.sigma(t_prev);
    Video out = x_t;
    for (long i = 0; i < out.numel(); ++i) {
        double x0_hat = (x_t.data[i] - s * eps_hat.data[i]) / a;
        // Near the zero-SNR end the floored inversion can blow up an
        // imperfect prediction; distillation draws clamp it to the data range.
        if (clip_x0) x0_hat = std::min(1.0, std::max(-1.0, x0_hat));
        out.data[i] = ap * x0_hat + sp * eps_hat.data[i];
    }
    return out;
}

ad::VarPtr eps_mse_loss(const EpsModel& model, const std::vector<const Video*>& x0s,
                        const std::vector<Condition>& conds, const std::vector<long>& ts,
                        const std::vector<const Video*>& epss, const NoiseSchedule& sched) {
    if (x0s.empty() || x0s.size() != conds.size() || x0s.size() != ts.size() ||
        x0s.size() != epss.size())
        throw ParameterError("eps_mse_loss: inconsistent batch");
    ad::VarPtr total;
    for (size_t i = 0; i < x0s.size(); ++i) {
        Video x_t = add_noise(*x0s[i], *epss[i], ts[i], sched);
        auto pred = model.forward(ad::constant(x_t), ts[i], conds[i]);
        auto err = ad::mean_all(ad::square(ad::sub(pred, ad::constant(*epss[i]))));
        total = total ? ad::add(total, err) : err;
    }
    return ad::scale(total, 1.0 / static_cast<double>(x0s.size()));
}

TeacherResult train_teacher(const VideoDataset& dataset, const TeacherConfig& config,
                            const TeacherResume* resume) {
    if (dataset.size() == 0) throw ParameterError("train_teacher: empty dataset");
    if (config.steps < 1 || config.batch < 1) throw ParameterError("train_teacher: bad config");
    const long start = resume ? resume->start_step : 0;
    if (start < 0 || start > config.steps)
        throw ParameterError("train_teacher: resume step outside the configured run");

    TeacherResult res;
    res.schedule = build_linear_schedule(config.num_train_steps, config.beta_min, config.beta_max,
                                         config.epsilon_step);
    res.denoiser = std::make_unique<Denoiser>(config.arch, mix64(config.seed ^ 0x7ea0));
    res.denoiser->zero_output_layer();

    res.optimizer = std::make_unique<nn::Adam>(res.denoiser->params(), config.lr);
    nn::Adam& opt = *res.optimizer;
    if (resume) {
        nn::ParamList ps = res.denoiser->params();
        nn::load_flat_params(ps, resume->params);
        nn::load_flat_tensors(opt.m(), resume->adam_m);
        nn::load_flat_tensors(opt.v(), resume->adam_v);
        opt.set_t(resume->adam_t);
    }
    const long T = config.num_train_steps;
    const Shape vshape{config.arch.frames, config.arch.channels, config.arch.height,
                       config.arch.width};

    for (long step = start; step < config.steps; ++step) {
        auto g = derive_rng(config.seed, "teacher.batch", static_cast<std::uint64_t>(step));
        std::vector<const Video*> x0s, epss;
        std::vector<Condition> conds;
        std::vector<long> ts;
        std::vector<Video> eps_storage;
        eps_storage.reserve(static_cast<size_t>(config.batch));
        for (long b = 0; b < config.batch; ++b) {
            size_t idx = static_cast<size_t>(uniform01(g) * double(dataset.size()));
            idx = std::min(idx, dataset.size() - 1);
            x0s.push_back(&dataset.clips[idx]);
            Condition c = dataset.labels[idx];
            if (uniform01(g) < config.cond_dropout) c = Condition::null_cond();
            conds.push_back(c);
            ts.push_back(1 + static_cast<long>(uniform01(g) * double(T)) % T);
            eps_storage.push_back(Tensor::randn(vshape, g));
        }
        for (auto& e : eps_storage) epss.push_back(&e);

        opt.zero_grad();
        auto loss = eps_mse_loss(*res.denoiser, x0s, conds, ts, epss, res.schedule);
        double lv = loss->value.data[0];
        if (!std::isfinite(lv)) {
            if (config.checkpoint_cb) config.checkpoint_cb(step, *res.denoiser, opt);
            throw DivergenceError("train_teacher: non-finite loss at step " + std::to_string(step),
                                  step);
        }
        ad::backward(loss);
        opt.step();
        res.loss_curve.push_back(lv);

        if (config.checkpoint_every > 0 && config.checkpoint_cb &&
            (step + 1) % config.checkpoint_every == 0)
            config.checkpoint_cb(step + 1, *res.denoiser, opt);
    }
    return res;
}

}  // namespace mcm
