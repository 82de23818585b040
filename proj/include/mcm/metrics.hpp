#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mcm/synthetic_data.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

// Frozen, seeded two-layer projection of clips (or single frames) into a
// low-dimensional feature space. Video features pool per-frame appearance
// activations together with consecutive-frame-difference activations, so
// the distributional proxy is motion-sensitive; frame features use the
// appearance trunk alone.
class FeatureEmbedder {
  public:
    FeatureEmbedder(long frame_numel, long dim, std::uint64_t seed);

    std::vector<double> video_features(const Video& v) const;
    std::vector<double> frame_features(const Tensor& frame) const;

    long dim() const { return dim_; }
    long frame_numel() const { return frame_numel_; }

  private:
    std::vector<double> trunk(const double* x, const Tensor& w, const Tensor& b) const;

    long frame_numel_ = 0;
    long hidden_ = 32;
    long dim_ = 0;
    Tensor w_frame_, b_frame_;  // appearance trunk
    Tensor w_motion_, b_motion_;  // frame-difference trunk
    Tensor w_out_video_;  // [dim, 2*hidden]
    Tensor w_out_frame_;  // [dim, hidden]
};

using FeatureSet = std::vector<std::vector<double>>;

FeatureSet video_feature_set(const FeatureEmbedder& e, const std::vector<Video>& clips);
FeatureSet frame_feature_set(const FeatureEmbedder& e, const std::vector<Video>& clips);

// Squared mean distance plus the Gaussian covariance-alignment term
// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with population
// covariances and the matrix square root taken through a symmetric
// eigendecomposition (negative eigenvalues clipped at zero). Rank-deficient
// covariances are ridged with 1e-6 on both sides; `ridged`, when given,
// reports that this happened so callers can log it.
double frechet_distance(const FeatureSet& a, const FeatureSet& b, bool* ridged = nullptr);

// Mean absolute intensity over the region across all frames and channels.
// Accepts [F,C,H,W] clips and [C,H,W] single frames.
double watermark_energy(const Video& v, const WatermarkRegion& region);

// Component RMSE between per-frame intensity-centroid displacements and the
// expected velocity, in pixels/frame. Centroid weights are max(pixel, 0)
// summed over channels; pixels inside `exclude`, when given, are ignored so
// a static watermark cannot drag the centroid. Throws UndefinedMotionError
// when a frame carries no measurable intensity.
double motion_error(const Video& v, const std::array<double, 2>& expected_velocity,
                    const WatermarkRegion* exclude = nullptr);

// A sample counts as near-dark when its mean absolute intensity falls below
// the threshold (collapse indicator for generated clips).
bool near_dark(const Video& v, double threshold);
double near_dark_fraction(const std::vector<Video>& clips, double threshold);

}  // namespace mcm
