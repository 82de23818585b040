#include "mcm/motion.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numeric>

#include "mcm/errors.hpp"
#include "mcm/rng.hpp"

namespace mcm {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;

void check_video_4d(const Shape& s, long min_frames) {
    if (s.size() != 4)
        throw ShapeError("expected a [F,C,H,W] video, got " + shape_str(s));
    if (s[0] < min_frames)
        throw ShapeError("need at least " + std::to_string(min_frames) + " frames, got " +
                         std::to_string(s[0]));
}

// Unitary DFT matrix; symmetric, so the 2D transform is U_h X U_w.
CMat dft_matrix(long n) {
    CMat u(n, n);
    double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (long j = 0; j < n; ++j)
        for (long k = 0; k < n; ++k) {
            double ang = -2.0 * M_PI * static_cast<double>(j * k) / static_cast<double>(n);
            u(j, k) = std::complex<double>(std::cos(ang) * norm, std::sin(ang) * norm);
        }
    return u;
}

RowMat band_mask(long h, long w, double cutoff, bool low) {
    RowMat m(h, w);
    double r_nyq = std::hypot(static_cast<double>(h) / 2.0, static_cast<double>(w) / 2.0);
    for (long fy = 0; fy < h; ++fy)
        for (long fx = 0; fx < w; ++fx) {
            double ky = static_cast<double>(std::min(fy, h - fy));
            double kx = static_cast<double>(std::min(fx, w - fx));
            bool in_low = std::hypot(ky, kx) <= cutoff * r_nyq + 1e-12;
            m(fy, fx) = (in_low == low) ? 1.0 : 0.0;
        }
    return m;
}

// Orthogonal band projector applied to every [H,W] slice; self-adjoint, so
// the same routine propagates gradients.
Tensor project_slices(const Tensor& in, double cutoff, bool low) {
    const Shape& s = in.shape;
    long h = s[s.size() - 2], w = s[s.size() - 1];
    long slices = in.numel() / (h * w);
    CMat uh = dft_matrix(h), uw = dft_matrix(w);
    RowMat mask = band_mask(h, w, cutoff, low);

    Tensor out = Tensor::zeros(s);
    for (long i = 0; i < slices; ++i) {
        Eigen::Map<const RowMat> x(in.data.data() + i * h * w, h, w);
        CMat spec = uh * x.cast<std::complex<double>>() * uw;
        for (long fy = 0; fy < h; ++fy)
            for (long fx = 0; fx < w; ++fx) spec(fy, fx) *= mask(fy, fx);
        CMat back = uh.conjugate() * spec * uw.conjugate();
        Eigen::Map<RowMat>(out.data.data() + i * h * w, h, w) = back.real();
    }
    return out;
}

}  // namespace

MotionKind motion_kind_from_string(const std::string& s) {
    if (s == "raw") return MotionKind::raw;
    if (s == "diff") return MotionKind::diff;
    if (s == "corr") return MotionKind::corr;
    if (s == "lowfreq") return MotionKind::low_freq;
    if (s == "highfreq") return MotionKind::high_freq;
    if (s == "learnable") return MotionKind::learnable;
    throw ConfigError("unknown motion representation '" + s + "'");
}

std::string to_string(MotionKind k) {
    switch (k) {
        case MotionKind::raw: return "raw";
        case MotionKind::diff: return "diff";
        case MotionKind::corr: return "corr";
        case MotionKind::low_freq: return "lowfreq";
        case MotionKind::high_freq: return "highfreq";
        case MotionKind::learnable: return "learnable";
    }
    throw ConfigError("unhandled motion kind");
}

ad::VarPtr frame_difference(const ad::VarPtr& v) {
    const Shape& s = v->value.shape;
    check_video_4d(s, 2);
    long f = s[0], per = s[1] * s[2] * s[3];
    ad::VarPtr flat = ad::reshape(v, {f, per});
    std::vector<long> hi(static_cast<size_t>(f - 1)), lo(static_cast<size_t>(f - 1));
    std::iota(hi.begin(), hi.end(), 1);
    std::iota(lo.begin(), lo.end(), 0);
    ad::VarPtr d = ad::sub(ad::gather_first(flat, hi), ad::gather_first(flat, lo));
    return ad::reshape(d, {f - 1, s[1], s[2], s[3]});
}

ad::VarPtr frame_correlation(const ad::VarPtr& v) {
    const Shape& s = v->value.shape;
    check_video_4d(s, 2);
    long f = s[0], c = s[1], h = s[2], w = s[3];
    long hw = h * w;
    double inv_c = 1.0 / static_cast<double>(c);

    Tensor out = Tensor::zeros({f - 1, h, w, h, w});
    for (long i = 0; i + 1 < f; ++i) {
        Eigen::Map<const RowMat> hi(v->value.data.data() + (i + 1) * c * hw, c, hw);
        Eigen::Map<const RowMat> lo(v->value.data.data() + i * c * hw, c, hw);
        Eigen::Map<RowMat>(out.data.data() + i * hw * hw, hw, hw) =
            hi.transpose() * lo * inv_c;
    }

    return ad::make_node(std::move(out), {v}, [f, c, hw, inv_c](ad::Node& n) {
        ad::VarPtr in = n.parents[0];
        if (!in->requires_grad) return;
        in->ensure_grad();
        for (long i = 0; i + 1 < f; ++i) {
            Eigen::Map<const RowMat> g(n.grad.data.data() + i * hw * hw, hw, hw);
            Eigen::Map<const RowMat> hi(in->value.data.data() + (i + 1) * c * hw, c, hw);
            Eigen::Map<const RowMat> lo(in->value.data.data() + i * c * hw, c, hw);
            Eigen::Map<RowMat>(in->grad.data.data() + (i + 1) * c * hw, c, hw) +=
                lo * g.transpose() * inv_c;
            Eigen::Map<RowMat>(in->grad.data.data() + i * c * hw, c, hw) += hi * g * inv_c;
        }
    });
}

ad::VarPtr frequency_band(const ad::VarPtr& v, double cutoff, bool low) {
    if (!(cutoff > 0.0 && cutoff <= 1.0))
        throw ParameterError("frequency cutoff must lie in (0,1], got " + std::to_string(cutoff));
    if (v->value.ndim() < 2) throw ShapeError("frequency split needs spatial [.., H, W] input");

    Tensor out = project_slices(v->value, cutoff, low);
    return ad::make_node(std::move(out), {v}, [cutoff, low](ad::Node& n) {
        ad::VarPtr in = n.parents[0];
        if (!in->requires_grad) return;
        in->ensure_grad();
        Tensor g = project_slices(n.grad, cutoff, low);
        for (long i = 0; i < g.numel(); ++i) in->grad.data[i] += g.data[i];
    });
}

MotionRepr motion_difference(const Video& v) {
    ad::NoGradGuard guard;
    return {MotionKind::diff, frame_difference(ad::constant(v))->value};
}

MotionRepr motion_correlation(const Video& v) {
    ad::NoGradGuard guard;
    return {MotionKind::corr, frame_correlation(ad::constant(v))->value};
}

std::pair<MotionRepr, MotionRepr> motion_freq_split(const Video& v, double cutoff) {
    ad::NoGradGuard guard;
    ad::VarPtr x = ad::constant(v);
    return {{MotionKind::low_freq, frequency_band(x, cutoff, true)->value},
            {MotionKind::high_freq, frequency_band(x, cutoff, false)->value}};
}

MotionHead::MotionHead(long frame_dim, long hidden, long out_dim, double ema_rate,
                       std::uint64_t seed)
    : frame_dim_(frame_dim), hidden_(hidden), out_dim_(out_dim), ema_rate_(ema_rate) {
    if (frame_dim <= 0 || hidden <= 0 || out_dim <= 0)
        throw ParameterError("motion head dimensions must be positive");
    if (!(ema_rate >= 0.0 && ema_rate <= 1.0))
        throw ParameterError("ema_rate must lie in [0,1], got " + std::to_string(ema_rate));
    auto g = derive_rng(seed, "motion_head.init");
    l1_ = nn::Linear(frame_dim, hidden, g);
    l2_ = nn::Linear(hidden, out_dim, g);
    l1_.collect(params_, "head.l1");
    l2_.collect(params_, "head.l2");
    // The twin starts as an exact copy, like any EMA target.
    twin_l1_.w = ad::var(l1_.w->value, true);
    twin_l1_.b = ad::var(l1_.b->value, true);
    twin_l2_.w = ad::var(l2_.w->value, true);
    twin_l2_.b = ad::var(l2_.b->value, true);
    twin_l1_.collect(twin_params_, "head_twin.l1");
    twin_l2_.collect(twin_params_, "head_twin.l2");
}

ad::VarPtr MotionHead::apply(const ad::VarPtr& v, bool use_twin) const {
    const Shape& s = v->value.shape;
    long per = 0;
    if (s.size() == 4) per = s[1] * s[2] * s[3];
    else if (s.size() == 2) per = s[1];
    if (per != frame_dim_)
        throw ShapeError("motion head expects frames of " + std::to_string(frame_dim_) +
                         " values, got " + shape_str(s));
    long f = s[0];
    ad::VarPtr x = ad::reshape(v, {f, frame_dim_});
    const nn::Linear& a = use_twin ? twin_l1_ : l1_;
    const nn::Linear& b = use_twin ? twin_l2_ : l2_;
    return b.apply(ad::silu(a.apply(x)));
}

void MotionHead::zero_output_layer() {
    for (ad::VarPtr p : {l2_.w, l2_.b, twin_l2_.w, twin_l2_.b})
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

MotionRepr motion_head_apply(const MotionHead& head, const Video& v, bool use_twin) {
    ad::NoGradGuard guard;
    return {MotionKind::learnable, head.apply(ad::constant(v), use_twin)->value};
}

void head_ema_update(MotionHead& head) {
    nn::ema_update(head.twin_params(), head.params(), head.ema_rate());
}

ad::VarPtr MotionContext::payload(const ad::VarPtr& x0_pred, bool use_twin) const {
    switch (kind) {
        case MotionKind::raw: return x0_pred;
        case MotionKind::diff: return frame_difference(x0_pred);
        case MotionKind::corr: return frame_correlation(x0_pred);
        case MotionKind::low_freq: return frequency_band(x0_pred, cutoff, true);
        case MotionKind::high_freq: return frequency_band(x0_pred, cutoff, false);
        case MotionKind::learnable:
            if (head == nullptr)
                throw ParameterError("learnable motion payload needs an attached head");
            return head->apply(x0_pred, use_twin);
    }
    throw ParameterError("unhandled motion kind");
}

}  // namespace mcm
