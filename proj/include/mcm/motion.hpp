#pragma once

#include <string>
#include <utility>

#include "mcm/autodiff.hpp"
#include "mcm/nn.hpp"
#include "mcm/synthetic_data.hpp"

namespace mcm {

enum class MotionKind { raw, diff, corr, low_freq, high_freq, learnable };

MotionKind motion_kind_from_string(const std::string& s);  // ConfigError on unknown names
std::string to_string(MotionKind k);

struct MotionRepr {
    MotionKind kind = MotionKind::raw;
    Tensor payload;
};

// Graph-level extractors; gradients flow through all of them.
// Consecutive-frame difference: [F,C,H,W] -> [F-1,C,H,W].
ad::VarPtr frame_difference(const ad::VarPtr& v);
// Channel-mean dot product between every spatial position pair of
// consecutive frames: [F,C,H,W] -> [F-1,H,W,H,W].
ad::VarPtr frame_correlation(const ad::VarPtr& v);
// Per-frame unitary spectral projection onto the radial band
// r <= cutoff * r_nyquist (low) or its complement (high); shape-preserving,
// self-adjoint, and the two bands sum back to the input exactly.
ad::VarPtr frequency_band(const ad::VarPtr& v, double cutoff, bool low);

MotionRepr motion_difference(const Video& v);
MotionRepr motion_correlation(const Video& v);
std::pair<MotionRepr, MotionRepr> motion_freq_split(const Video& v, double cutoff);

// Two-layer per-frame perceptron over flattened frames plus an EMA twin for
// the target branch. No cross-frame mixing: permuting input frames permutes
// output rows identically. The twin is only ever written by head_ema_update.
class MotionHead {
  public:
    MotionHead(long frame_dim, long hidden, long out_dim, double ema_rate, std::uint64_t seed);

    // [F,C,H,W] (or [F, frame_dim]) -> [F, out_dim].
    ad::VarPtr apply(const ad::VarPtr& v, bool use_twin) const;

    void zero_output_layer();  // zeroes both the online and twin final layer

    nn::ParamList& params() { return params_; }
    const nn::ParamList& params() const { return params_; }
    nn::ParamList& twin_params() { return twin_params_; }
    const nn::ParamList& twin_params() const { return twin_params_; }
    long frame_dim() const { return frame_dim_; }
    long out_dim() const { return out_dim_; }
    double ema_rate() const { return ema_rate_; }

  private:
    long frame_dim_, hidden_, out_dim_;
    double ema_rate_;
    nn::Linear l1_, l2_, twin_l1_, twin_l2_;
    nn::ParamList params_, twin_params_;
};

MotionRepr motion_head_apply(const MotionHead& head, const Video& v, bool use_twin);
void head_ema_update(MotionHead& head);

// Kind dispatcher used by the distillation losses. `use_twin` selects the
// head's EMA parameters on the target branch; other kinds ignore it.
struct MotionContext {
    MotionKind kind = MotionKind::raw;
    double cutoff = 0.25;
    const MotionHead* head = nullptr;  // required for the learnable kind

    ad::VarPtr payload(const ad::VarPtr& x0_pred, bool use_twin) const;
};

}  // namespace mcm
