#pragma once

#include <vector>

#include "mcm/autodiff.hpp"
#include "mcm/condition.hpp"
#include "mcm/nn.hpp"
#include "mcm/synthetic_data.hpp"

namespace mcm {

struct DiscArch {
    long channels = 1, height = 16, width = 16;
    long num_classes = 8;
    std::vector<long> encoder_widths{16, 24, 32};

    bool operator==(const DiscArch&) const = default;
};

// Image scorer: a frozen, seeded convolutional feature extractor with a tap
// after every activation, and trainable per-scale linear heads (1x1 conv plus
// a class-embedding projection). Only the head parameters (psi) train; the
// encoder weights are constants on the tape, so gradients pass through them
// into the image but never accumulate in them.
class Discriminator {
  public:
    Discriminator(const DiscArch& arch, std::uint64_t seed);

    // Scalar patch-score average for one [C,H,W] image. `detach_heads`
    // blocks gradient flow into psi (generator-side losses).
    ad::VarPtr score(const ad::VarPtr& image, const Condition& cond,
                     bool detach_heads = false) const;
    double score_value(const Video& image, const Condition& cond) const;

    // d score / d image materialized as tape ops, linear in psi; the frozen
    // chain is folded in as constants. Lets the R1 penalty reach psi's
    // gradient exactly without double backpropagation.
    ad::VarPtr input_gradient(const Video& image, const Condition& cond) const;

    nn::ParamList& head_params() { return head_params_; }
    const nn::ParamList& head_params() const { return head_params_; }
    const DiscArch& arch() const { return arch_; }
    // Hash of the frozen encoder weights; constant across a run by contract.
    std::uint64_t encoder_fingerprint() const;

  private:
    struct Taps;
    Taps encode(const ad::VarPtr& image) const;
    ad::VarPtr head_vec(size_t scale, const Condition& cond, bool detached) const;

    DiscArch arch_;
    std::vector<ad::VarPtr> enc_w_, enc_b_;          // frozen constants
    std::vector<ad::VarPtr> head_w_, head_b_;        // [1,e,1,1], [1] per scale
    std::vector<ad::VarPtr> class_emb_;              // [K+1, e] per scale
    nn::ParamList head_params_;
    nn::ParamList frozen_list_;
};

struct FrameSample {
    std::vector<long> indices;  // strictly increasing frame positions
    std::vector<Video> frames;  // the corresponding [C,H,W] images
};

// Uniform without-replacement frame draw; indices are reported sorted.
FrameSample sample_frames(const Video& v, long l, std::mt19937_64& g);

// -(1/l) sum of head-detached scores, built over the generated video so the
// gradient reaches the generator through the frames only.
ad::VarPtr generator_adv_loss(const Discriminator& d, const ad::VarPtr& video,
                              const std::vector<long>& frame_indices, const Condition& cond);
double generator_adv_loss(const Discriminator& d, const FrameSample& fs, const Condition& cond);

// Pure hinge arithmetic over already-reduced scores:
// sum over fakes of max(0, 1 + mean_score) / n_fake
//   + sum over reals of max(0, 1 - score) / n_real.
double hinge_parts(const std::vector<double>& fake_mean_scores,
                   const std::vector<double>& real_scores);

// Hinge discriminator objective: fake hinge on the per-video mean of l frame
// scores, real hinge per image, optional R1 gradient penalty on the reals.
// Fake frames enter as values (already detached from the generator).
ad::VarPtr discriminator_loss(const Discriminator& d, const std::vector<FrameSample>& fakes,
                              const std::vector<Condition>& fake_conds,
                              const std::vector<const Video*>& real_images,
                              const std::vector<Condition>& real_conds, double r1_weight);

}  // namespace mcm
