#include "mcm/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcm/errors.hpp"
#include "mcm/rng.hpp"

namespace mcm {

namespace {

Tensor xavier_tensor(Shape s, long fan_in, long fan_out, std::mt19937_64& g) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) v = (uniform01(g) * 2.0 - 1.0) * limit;
    return t;
}

double silu_derivative(double z) {
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

Tensor silu_derivative_of(const Tensor& z) {
    Tensor out = z;
    for (double& v : out.data) v = silu_derivative(v);
    return out;
}

// Input-gradient of a stride-1 same-padded conv: convolve the cotangent with
// the kernel flipped spatially and transposed over channels.
Tensor flipped_transposed_kernel(const Tensor& w) {
    long oc = w.shape[0], ic = w.shape[1], k = w.shape[2];
    Tensor out = Tensor::zeros({ic, oc, k, k});
    for (long o = 0; o < oc; ++o)
        for (long i = 0; i < ic; ++i)
            for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx)
                    out.data[((i * oc + o) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                        w.data[((o * ic + i) * k + ky) * k + kx];
    return out;
}

}  // namespace

struct Discriminator::Taps {
    std::vector<ad::VarPtr> z;  // pre-activations
    std::vector<ad::VarPtr> h;  // post-activation taps
};

Discriminator::Discriminator(const DiscArch& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.encoder_widths.empty()) throw ParameterError("encoder needs at least one layer");
    auto ge = derive_rng(seed, "disc.encoder");
    long in_ch = arch.channels;
    for (size_t i = 0; i < arch.encoder_widths.size(); ++i) {
        long out_ch = arch.encoder_widths[i];
        enc_w_.push_back(ad::constant(
            xavier_tensor({out_ch, in_ch, 3, 3}, in_ch * 9, out_ch * 9, ge)));
        enc_b_.push_back(ad::constant(Tensor::zeros({out_ch})));
        frozen_list_.push_back({"enc.w" + std::to_string(i), enc_w_.back()});
        frozen_list_.push_back({"enc.b" + std::to_string(i), enc_b_.back()});
        in_ch = out_ch;
    }

    auto gh = derive_rng(seed, "disc.heads");
    for (size_t i = 0; i < arch.encoder_widths.size(); ++i) {
        long e = arch.encoder_widths[i];
        head_w_.push_back(ad::var(xavier_tensor({1, e, 1, 1}, e, 1, gh), true));
        head_b_.push_back(ad::var(Tensor::zeros({1}), true));
        class_emb_.push_back(
            ad::var(xavier_tensor({arch.num_classes + 1, e}, e, e, gh), true));
        std::string tag = std::to_string(i);
        head_params_.push_back({"head.w" + tag, head_w_.back()});
        head_params_.push_back({"head.b" + tag, head_b_.back()});
        head_params_.push_back({"head.emb" + tag, class_emb_.back()});
    }
}

Discriminator::Taps Discriminator::encode(const ad::VarPtr& image) const {
    const Shape& s = image->value.shape;
    if (s.size() != 3 || s[0] != arch_.channels || s[1] != arch_.height || s[2] != arch_.width)
        throw ShapeError("discriminator expects [C,H,W] = [" + std::to_string(arch_.channels) +
                         "," + std::to_string(arch_.height) + "," + std::to_string(arch_.width) +
                         "], got " + shape_str(s));
    Taps t;
    ad::VarPtr x = image;
    for (size_t i = 0; i < enc_w_.size(); ++i) {
        ad::VarPtr z = ad::conv2d(x, enc_w_[i], enc_b_[i], 1);
        t.z.push_back(z);
        x = ad::silu(z);
        t.h.push_back(x);
    }
    return t;
}

ad::VarPtr Discriminator::head_vec(size_t scale, const Condition& cond, bool detached) const {
    long k = arch_.num_classes;
    long row = cond.is_null() ? k : cond.class_id;
    if (row < 0 || row > k)
        throw ParameterError("class id " + std::to_string(cond.class_id) + " outside [0," +
                             std::to_string(k - 1) + "]");
    ad::VarPtr w = head_w_[scale], emb = class_emb_[scale];
    if (detached) {
        w = ad::detach(w);
        emb = ad::detach(emb);
    }
    long e = arch_.encoder_widths[scale];
    ad::VarPtr row_vec = ad::reshape(ad::gather_first(emb, {row}), {e});
    return ad::add(ad::reshape(w, {e}), row_vec);
}

ad::VarPtr Discriminator::score(const ad::VarPtr& image, const Condition& cond,
                                bool detach_heads) const {
    Taps taps = encode(image);
    double inv_hw = 1.0 / static_cast<double>(arch_.height * arch_.width);
    ad::VarPtr total;
    for (size_t s = 0; s < taps.h.size(); ++s) {
        ad::VarPtr vec = head_vec(s, cond, detach_heads);
        long e = arch_.encoder_widths[s];
        ad::VarPtr weights = ad::add_channel_bias(
            ad::constant(Tensor::zeros({e, arch_.height, arch_.width})), vec);
        ad::VarPtr patch_sum = ad::sum_all(ad::mul(taps.h[s], weights));
        ad::VarPtr bias = detach_heads ? ad::detach(head_b_[s]) : head_b_[s];
        ad::VarPtr score_s = ad::add(ad::scale(patch_sum, inv_hw), bias);
        total = total ? ad::add(total, score_s) : score_s;
    }
    return ad::scale(total, 1.0 / static_cast<double>(taps.h.size()));
}

double Discriminator::score_value(const Video& image, const Condition& cond) const {
    ad::NoGradGuard guard;
    return score(ad::constant(image), cond)->value.data[0];
}

ad::VarPtr Discriminator::input_gradient(const Video& image, const Condition& cond) const {
    std::vector<Tensor> dsilu;
    {
        ad::NoGradGuard guard;
        Taps taps = encode(ad::constant(image));
        for (auto& z : taps.z) dsilu.push_back(silu_derivative_of(z->value));
    }
    size_t n = enc_w_.size();
    double patch_scale = 1.0 / static_cast<double>(arch_.height * arch_.width * n);

    // Walk the frozen chain backward; the moving cotangent stays linear in
    // the head parameters, so R1 reaches psi through ordinary backprop.
    ad::VarPtr cot;  // gradient w.r.t. the current tap h_i
    for (size_t i = n; i-- > 0;) {
        long e = arch_.encoder_widths[i];
        ad::VarPtr head_part = ad::add_channel_bias(
            ad::constant(Tensor::zeros({e, arch_.height, arch_.width})),
            ad::scale(head_vec(i, cond, false), patch_scale));
        cot = cot ? ad::add(cot, head_part) : head_part;
        ad::VarPtr dz = ad::mul(cot, ad::constant(dsilu[i]));
        ad::VarPtr back_kernel = ad::constant(flipped_transposed_kernel(enc_w_[i]->value));
        long in_ch = enc_w_[i]->value.shape[1];
        cot = ad::conv2d(dz, back_kernel, ad::constant(Tensor::zeros({in_ch})), 1);
    }
    return cot;  // [C,H,W]
}

std::uint64_t Discriminator::encoder_fingerprint() const {
    return nn::params_fingerprint(frozen_list_);
}

FrameSample sample_frames(const Video& v, long l, std::mt19937_64& g) {
    if (v.ndim() != 4) throw ShapeError("sample_frames expects a [F,C,H,W] video");
    long f = v.shape[0];
    if (l < 1 || l > f)
        throw ParameterError("frame count " + std::to_string(l) + " outside [1," +
                             std::to_string(f) + "]");
    std::vector<long> idx(static_cast<size_t>(f));
    std::iota(idx.begin(), idx.end(), 0);
    for (long i = 0; i < l; ++i) {
        std::uniform_int_distribution<long> pick(i, f - 1);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(g))]);
    }
    idx.resize(static_cast<size_t>(l));
    std::sort(idx.begin(), idx.end());

    FrameSample fs;
    fs.indices = idx;
    long per = v.numel() / f;
    Shape frame_shape(v.shape.begin() + 1, v.shape.end());
    for (long i : idx) {
        Tensor frame(frame_shape);
        std::copy_n(v.data.begin() + i * per, per, frame.data.begin());
        fs.frames.push_back(std::move(frame));
    }
    return fs;
}

ad::VarPtr generator_adv_loss(const Discriminator& d, const ad::VarPtr& video,
                              const std::vector<long>& frame_indices, const Condition& cond) {
    const Shape& s = video->value.shape;
    if (s.size() != 4) throw ShapeError("generator loss expects a [F,C,H,W] video");
    if (frame_indices.empty()) throw ParameterError("generator loss needs at least one frame");
    long f = s[0], per = s[1] * s[2] * s[3];
    ad::VarPtr flat = ad::reshape(video, {f, per});
    ad::VarPtr total;
    for (long i : frame_indices) {
        if (i < 0 || i >= f) throw ParameterError("frame index out of range");
        ad::VarPtr frame = ad::reshape(ad::gather_first(flat, {i}), {s[1], s[2], s[3]});
        ad::VarPtr sc = d.score(frame, cond, /*detach_heads=*/true);
        total = total ? ad::add(total, sc) : sc;
    }
    return ad::scale(total, -1.0 / static_cast<double>(frame_indices.size()));
}

double generator_adv_loss(const Discriminator& d, const FrameSample& fs, const Condition& cond) {
    if (fs.frames.empty()) throw ParameterError("generator loss needs at least one frame");
    double total = 0.0;
    for (const Video& frame : fs.frames) total += d.score_value(frame, cond);
    return -total / static_cast<double>(fs.frames.size());
}

double hinge_parts(const std::vector<double>& fake_mean_scores,
                   const std::vector<double>& real_scores) {
    if (fake_mean_scores.empty() || real_scores.empty())
        throw ParameterError("hinge needs both fake and real scores");
    double fake = 0.0, real = 0.0;
    for (double s : fake_mean_scores) fake += std::max(0.0, 1.0 + s);
    for (double s : real_scores) real += std::max(0.0, 1.0 - s);
    return fake / static_cast<double>(fake_mean_scores.size()) +
           real / static_cast<double>(real_scores.size());
}

ad::VarPtr discriminator_loss(const Discriminator& d, const std::vector<FrameSample>& fakes,
                              const std::vector<Condition>& fake_conds,
                              const std::vector<const Video*>& real_images,
                              const std::vector<Condition>& real_conds, double r1_weight) {
    if (fakes.empty() || real_images.empty())
        throw ParameterError("discriminator loss needs both fake and real batches");
    if (fakes.size() != fake_conds.size() || real_images.size() != real_conds.size())
        throw ParameterError("discriminator loss: condition count mismatch");

    ad::VarPtr fake_part;
    for (size_t i = 0; i < fakes.size(); ++i) {
        const FrameSample& fs = fakes[i];
        if (fs.frames.empty()) throw ParameterError("empty frame sample");
        ad::VarPtr mean_sc;
        for (const Video& frame : fs.frames) {
            ad::VarPtr sc = d.score(ad::constant(frame), fake_conds[i]);
            mean_sc = mean_sc ? ad::add(mean_sc, sc) : sc;
        }
        mean_sc = ad::scale(mean_sc, 1.0 / static_cast<double>(fs.frames.size()));
        ad::VarPtr hinge = ad::relu(ad::add_scalar(mean_sc, 1.0));
        fake_part = fake_part ? ad::add(fake_part, hinge) : hinge;
    }
    fake_part = ad::scale(fake_part, 1.0 / static_cast<double>(fakes.size()));

    ad::VarPtr real_part;
    for (size_t i = 0; i < real_images.size(); ++i) {
        ad::VarPtr sc = d.score(ad::constant(*real_images[i]), real_conds[i]);
        ad::VarPtr hinge = ad::relu(ad::add_scalar(ad::scale(sc, -1.0), 1.0));
        real_part = real_part ? ad::add(real_part, hinge) : hinge;
    }
    real_part = ad::scale(real_part, 1.0 / static_cast<double>(real_images.size()));

    ad::VarPtr total = ad::add(fake_part, real_part);
    if (r1_weight != 0.0) {
        ad::VarPtr r1;
        for (size_t i = 0; i < real_images.size(); ++i) {
            ad::VarPtr g = d.input_gradient(*real_images[i], real_conds[i]);
            ad::VarPtr sq = ad::sum_all(ad::square(g));
            r1 = r1 ? ad::add(r1, sq) : sq;
        }
        r1 = ad::scale(r1, r1_weight / static_cast<double>(real_images.size()));
        total = ad::add(total, r1);
    }
    return total;
}

}  // namespace mcm
