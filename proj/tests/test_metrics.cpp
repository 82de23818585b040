#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "mcm/metrics.hpp"
#include "mcm/rng.hpp"
#include "mcm/synthetic_data.hpp"

using namespace mcm;

namespace {

FeatureSet random_set(long n, long d, std::uint64_t seed, double shift = 0.0) {
    auto g = derive_rng(seed, "t.metrics");
    std::normal_distribution<double> dist(shift, 1.0);
    FeatureSet out;
    for (long i = 0; i < n; ++i) {
        std::vector<double> f(static_cast<size_t>(d));
        for (double& x : f) x = dist(g);
        out.push_back(std::move(f));
    }
    return out;
}

// Trace of (Sa Sb)^{1/2} straight from the eigenvalues of the nonsymmetric
// product: an independent route to the same matrix function.
double frechet_oracle(const FeatureSet& a, const FeatureSet& b) {
    auto stats = [](const FeatureSet& s, Eigen::VectorXd& mu) {
        long n = long(s.size()), d = long(s[0].size());
        Eigen::MatrixXd x(n, d);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d; ++j) x(i, j) = s[size_t(i)][size_t(j)];
        mu = x.colwise().mean();
        Eigen::MatrixXd c = x.rowwise() - mu.transpose();
        return Eigen::MatrixXd((c.transpose() * c) / double(n));
    };
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a = stats(a, mu_a), cov_b = stats(b, mu_b);
    Eigen::ComplexEigenSolver<Eigen::MatrixXd> eig(cov_a * cov_b);
    double tr = 0.0;
    for (long i = 0; i < eig.eigenvalues().size(); ++i)
        tr += std::sqrt(eig.eigenvalues()[i]).real();
    return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr;
}

std::pair<Video, Condition> clean_clip(double vx, double vy, double cx0, double cy0,
                                       std::uint64_t seed) {
    SceneSpec spec;
    spec.cx0 = cx0;
    spec.cy0 = cy0;
    spec.vx = vx;
    spec.vy = vy;
    auto g = derive_rng(seed, "t.metclip");
    return render_clip(spec, 8, 16, 16, g);
}

}  // namespace

TEST_CASE("frechet distance: closed-form 1-D case is exactly the mean gap") {
    // Both sets have population variance 1; means differ by exactly 1.
    FeatureSet a{{-1.0}, {1.0}};
    FeatureSet b{{0.0}, {2.0}};
    CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(frechet_distance(b, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frechet distance: identical sets score zero, even rank-deficient") {
    FeatureSet a = random_set(20, 4, 1);
    bool ridged = true;
    CHECK(frechet_distance(a, a, &ridged) < 1e-6);
    CHECK_FALSE(ridged);  // 20 samples in 4-D are full rank

    FeatureSet thin = random_set(3, 5, 2);  // 3 samples in 5-D: rank-deficient
    CHECK(frechet_distance(thin, thin, &ridged) < 1e-6);
    CHECK(ridged);
}

TEST_CASE("frechet distance: 5-D random case matches the eigenvalue oracle") {
    FeatureSet a = random_set(60, 5, 3, 0.0);
    FeatureSet b = random_set(60, 5, 4, 0.7);
    double fd = frechet_distance(a, b);
    CHECK(fd == doctest::Approx(frechet_oracle(a, b)).epsilon(1e-6));
    CHECK(fd >= 0.0);
    CHECK(frechet_distance(b, a) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("frechet distance: input validation") {
    FeatureSet a = random_set(6, 3, 5);
    CHECK_THROWS_AS(frechet_distance({}, a), ParameterError);
    FeatureSet bad = a;
    bad[2].push_back(0.0);
    CHECK_THROWS_AS(frechet_distance(a, bad), ParameterError);
}

TEST_CASE("watermark energy: exact values and bounds checks") {
    WatermarkRegion region{10, 12, 6, 4};
    Video zero({8, 1, 16, 16});
    CHECK(watermark_energy(zero, region) == 0.0);

    Video filled({8, 1, 16, 16});
    for (long f = 0; f < 8; ++f)
        for (long y = region.y0; y < region.y0 + region.h; ++y)
            for (long x = region.x0; x < region.x0 + region.w; ++x)
                filled.data[size_t((f * 16 + y) * 16 + x)] = 0.8;
    CHECK(watermark_energy(filled, region) == doctest::Approx(0.8).epsilon(1e-12));

    Tensor image({1, 16, 16});
    image.data[size_t(12 * 16 + 10)] = -0.4;  // absolute value counts
    CHECK(watermark_energy(image, region) == doctest::Approx(0.4 / double(region.area())));

    CHECK_THROWS_AS(watermark_energy(zero, WatermarkRegion{14, 12, 6, 4}), ParameterError);
    CHECK_THROWS_AS(watermark_energy(Tensor({4, 4}), region), ShapeError);
}

TEST_CASE("watermark energy separates the degraded and clean datasets") {
    DataParams params;
    VideoDataset lq = make_lq_video_dataset(20, params, 31);
    ImageDataset hq = make_hq_image_dataset(20, params, 32);
    double lq_mean = 0.0, hq_mean = 0.0;
    for (const Video& v : lq.clips) lq_mean += watermark_energy(v, params.region) / 20.0;
    for (const Tensor& im : hq.images) hq_mean += watermark_energy(im, params.region) / 20.0;
    CHECK(hq_mean < 0.5 * lq_mean);
}

TEST_CASE("motion error: static and moving blobs round-trip, dark clips throw") {
    auto [still, c1] = clean_clip(0.0, 0.0, 8.0, 8.0, 41);
    CHECK(motion_error(still, {0.0, 0.0}) < 0.05);

    auto [moving, c2] = clean_clip(1.0, 0.0, 4.0, 8.0, 42);
    CHECK(motion_error(moving, {1.0, 0.0}) < 0.2);
    CHECK(motion_error(moving, {-1.0, 0.0}) > 0.5);  // wrong expectation is visible

    CHECK_THROWS_AS(motion_error(Video({4, 1, 8, 8}), {0.0, 0.0}), UndefinedMotionError);
    CHECK_THROWS_AS(motion_error(Video({1, 1, 8, 8}), {0.0, 0.0}), ParameterError);
    CHECK_THROWS_AS(motion_error(Tensor({8, 8}), {0.0, 0.0}), ShapeError);
}

TEST_CASE("motion error: excluding the watermark region removes its drag") {
    SceneSpec spec;
    spec.cx0 = 4.0;
    spec.cy0 = 5.0;
    spec.vx = 1.0;
    spec.vy = 0.0;
    spec.degradation.watermark_on = true;
    spec.degradation.region = WatermarkRegion{10, 12, 6, 4};
    spec.degradation.watermark_intensity = 0.8;
    auto g = derive_rng(43, "t.metwm");
    auto [clip, cond] = render_clip(spec, 8, 16, 16, g);

    double raw = motion_error(clip, {1.0, 0.0});
    double masked = motion_error(clip, {1.0, 0.0}, &spec.degradation.region);
    CHECK(masked < 0.2);
    CHECK(raw > masked);
}

TEST_CASE("feature embedder: determinism, motion sensitivity, validation") {
    FeatureEmbedder e(16 * 16, 16, 99);
    FeatureEmbedder same(16 * 16, 16, 99);
    FeatureEmbedder other(16 * 16, 16, 100);
    auto [clip, cond] = clean_clip(1.0, 0.0, 4.0, 8.0, 44);

    auto f1 = e.video_features(clip);
    CHECK(long(f1.size()) == e.dim());
    CHECK(f1 == same.video_features(clip));
    CHECK(f1 != other.video_features(clip));
    for (double v : f1) CHECK(std::isfinite(v));

    // Reversing time keeps every frame but flips the motion, so the video
    // features move while the per-frame features stay put.
    Video reversed = clip;
    const long per = clip.numel() / clip.shape[0];
    for (long i = 0; i < clip.shape[0]; ++i)
        std::copy(clip.data.begin() + i * per, clip.data.begin() + (i + 1) * per,
                  reversed.data.begin() + (clip.shape[0] - 1 - i) * per);
    CHECK(e.video_features(reversed) != f1);
    FeatureSet frames_fwd = frame_feature_set(e, {clip});
    FeatureSet frames_rev = frame_feature_set(e, {reversed});
    CHECK(frames_fwd.front() == frames_rev.back());

    CHECK_THROWS_AS(e.video_features(Tensor({4, 4})), ShapeError);
    CHECK_THROWS_AS(e.frame_features(Tensor({3, 3})), ShapeError);
    CHECK_THROWS_AS(FeatureEmbedder(0, 16, 1), ParameterError);

    FeatureSet vs = video_feature_set(e, {clip, reversed});
    CHECK(vs.size() == 2);
    CHECK(frame_feature_set(e, {clip}).size() == size_t(clip.shape[0]));
}

TEST_CASE("near-dark detection") {
    Video black({8, 1, 16, 16});
    auto [clip, cond] = clean_clip(0.5, 0.5, 6.0, 6.0, 45);
    CHECK(near_dark(black, 0.01));
    CHECK_FALSE(near_dark(clip, 0.01));
    CHECK(near_dark_fraction({black, clip, black}, 0.01) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(near_dark_fraction({}, 0.01), ParameterError);
}
