#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcm/condition.hpp"
#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

// Videos are dense [F, C, H, W] tensors with values in [-1, 1]; single
// images drop the leading frame axis to [C, H, W].
using Video = Tensor;

struct WatermarkRegion {
    long x0 = 0, y0 = 0, w = 0, h = 0;
    bool contains(long x, long y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
    long area() const { return w * h; }
};

struct Degradation {
    bool watermark_on = false;
    WatermarkRegion region;
    double watermark_intensity = 0.8;
    double blur_sigma = 0.0;   // 0 disables blurring
    double noise_std = 0.0;
};

struct SceneSpec {
    double cx0 = 0.0, cy0 = 0.0;   // blob center at frame 0, pixel units
    double vx = 0.0, vy = 0.0;     // pixels per frame
    double blob_sigma = 1.2;
    double amplitude = 0.8;
    long class_id = 0;
    Degradation degradation;
};

// Shared geometry and degradation recipe for a generated dataset.
struct DataParams {
    long frames = 8;
    long channels = 1;
    long height = 16, width = 16;
    long num_classes = 8;       // motion-direction vocabulary
    double blob_sigma = 1.2;
    double amplitude = 0.8;
    double speed = 0.8;         // pixels/frame along the class direction
    WatermarkRegion region{10, 12, 6, 4};  // bottom-right rectangle
    double watermark_intensity = 0.8;
    double lq_blur_sigma = 1.0;
    double lq_noise_std = 0.05;
    double hq_noise_std = 0.01;
};

// Unit direction of a motion class: angle 2*pi*k/K.
std::array<double, 2> class_direction(long class_id, long num_classes);

// One blob translating at constant velocity; degradations applied on top
// (blur, then watermark overlay, then pixel noise), output clipped to
// [-1, 1]. Throws if the blob center ever leaves the frame.
std::pair<Video, Condition> render_clip(const SceneSpec& spec, long F, long H, long W,
                                        std::mt19937_64& g);

struct VideoDataset {
    std::vector<Video> clips;  // [F,C,H,W] each
    std::vector<Condition> labels;
    std::vector<std::array<double, 2>> velocities;  // ground-truth (vx, vy)
    DataParams params;
    std::uint64_t seed = 0;

    size_t size() const { return clips.size(); }
};

struct ImageDataset {
    std::vector<Tensor> images;  // [C,H,W] each
    std::vector<Condition> labels;
    DataParams params;
    std::uint64_t seed = 0;

    size_t size() const { return images.size(); }
};

// Low-quality clips: watermark on, blur on, noisy; uniformly random motion
// class per item, start position chosen so the whole trajectory keeps a
// margin from the border.
VideoDataset make_lq_video_dataset(long n, const DataParams& params, std::uint64_t seed);

// High-quality stills: sharp, watermark off, low noise, random positions.
// Class labels are drawn uniformly; they only feed the conditional
// discriminator, a still frame has no intrinsic direction.
ImageDataset make_hq_image_dataset(long n, const DataParams& params, std::uint64_t seed);

// Clips with the low-quality dynamics but the high-quality appearance: no
// watermark, no blur, low noise. This is the target distribution the
// distilled model should land on, used as the evaluation reference set.
VideoDataset make_clean_video_dataset(long n, const DataParams& params, std::uint64_t seed);

// Directory layout: manifest.json + one raw little-endian double blob per
// item (clip_00000.bin, ...).
void save_video_dataset(const VideoDataset& ds, const std::string& dir);
VideoDataset load_video_dataset(const std::string& dir);
void save_image_dataset(const ImageDataset& ds, const std::string& dir);
ImageDataset load_image_dataset(const std::string& dir);

}  // namespace mcm
