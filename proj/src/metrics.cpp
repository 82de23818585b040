#include "mcm/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "mcm/errors.hpp"
#include "mcm/rng.hpp"

namespace mcm {

namespace {

Tensor gaussian_matrix(Shape s, double scale, std::mt19937_64& g) {
    Tensor t = Tensor::randn(std::move(s), g);
    for (double& v : t.data) v *= scale;
    return t;
}

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat mean_and_cov(const FeatureSet& set, Vec& mean) {
    const long n = static_cast<long>(set.size());
    const long d = static_cast<long>(set[0].size());
    Mat x(n, d);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) x(i, j) = set[size_t(i)][size_t(j)];
    mean = x.colwise().mean();
    Mat centered = x.rowwise() - mean.transpose();
    return (centered.transpose() * centered) / double(n);  // population covariance
}

// Symmetric PSD square root with negative eigenvalues clipped at zero.
Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(m);
    Vec lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

double min_eigenvalue(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(m);
    return eig.eigenvalues().minCoeff();
}

void check_region(const WatermarkRegion& r, long h, long w) {
    if (r.w <= 0 || r.h <= 0 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.w > w || r.y0 + r.h > h)
        throw ParameterError("watermark region outside the frame");
}

}  // namespace

FeatureEmbedder::FeatureEmbedder(long frame_numel, long dim, std::uint64_t seed)
    : frame_numel_(frame_numel), dim_(dim) {
    if (frame_numel <= 0 || dim <= 0) throw ParameterError("embedder sizes must be positive");
    auto g = derive_rng(seed, "embed.init");
    double s_in = 1.0 / std::sqrt(double(frame_numel_));
    double s_hid = 1.0 / std::sqrt(double(hidden_));
    w_frame_ = gaussian_matrix({hidden_, frame_numel_}, s_in, g);
    b_frame_ = gaussian_matrix({hidden_}, 0.1, g);
    w_motion_ = gaussian_matrix({hidden_, frame_numel_}, s_in, g);
    b_motion_ = gaussian_matrix({hidden_}, 0.1, g);
    w_out_video_ = gaussian_matrix({dim_, 2 * hidden_}, s_hid, g);
    w_out_frame_ = gaussian_matrix({dim_, hidden_}, s_hid, g);
}

std::vector<double> FeatureEmbedder::trunk(const double* x, const Tensor& w,
                                           const Tensor& b) const {
    std::vector<double> h(static_cast<size_t>(hidden_), 0.0);
    for (long i = 0; i < hidden_; ++i) {
        double acc = b.data[size_t(i)];
        const double* row = w.data.data() + i * frame_numel_;
        for (long j = 0; j < frame_numel_; ++j) acc += row[j] * x[j];
        h[size_t(i)] = std::tanh(acc);
    }
    return h;
}

std::vector<double> FeatureEmbedder::video_features(const Video& v) const {
    if (v.shape.size() != 4) throw ShapeError("video features need a [F,C,H,W] clip");
    const long f = v.shape[0], per = v.numel() / f;
    if (per != frame_numel_) throw ShapeError("clip frame size does not match the embedder");

    std::vector<double> pooled(static_cast<size_t>(2 * hidden_), 0.0);
    for (long i = 0; i < f; ++i) {
        auto h = trunk(v.data.data() + i * per, w_frame_, b_frame_);
        for (long j = 0; j < hidden_; ++j) pooled[size_t(j)] += h[size_t(j)] / double(f);
    }
    if (f >= 2) {
        std::vector<double> diff(static_cast<size_t>(per));
        for (long i = 0; i + 1 < f; ++i) {
            for (long j = 0; j < per; ++j)
                diff[size_t(j)] =
                    v.data[size_t((i + 1) * per + j)] - v.data[size_t(i * per + j)];
            auto h = trunk(diff.data(), w_motion_, b_motion_);
            for (long j = 0; j < hidden_; ++j)
                pooled[size_t(hidden_ + j)] += h[size_t(j)] / double(f - 1);
        }
    }

    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    for (long i = 0; i < dim_; ++i) {
        const double* row = w_out_video_.data.data() + i * 2 * hidden_;
        for (long j = 0; j < 2 * hidden_; ++j) out[size_t(i)] += row[j] * pooled[size_t(j)];
    }
    return out;
}

std::vector<double> FeatureEmbedder::frame_features(const Tensor& frame) const {
    if (frame.numel() != frame_numel_)
        throw ShapeError("frame size does not match the embedder");
    auto h = trunk(frame.data.data(), w_frame_, b_frame_);
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    for (long i = 0; i < dim_; ++i) {
        const double* row = w_out_frame_.data.data() + i * hidden_;
        for (long j = 0; j < hidden_; ++j) out[size_t(i)] += row[j] * h[size_t(j)];
    }
    return out;
}

FeatureSet video_feature_set(const FeatureEmbedder& e, const std::vector<Video>& clips) {
    FeatureSet out;
    out.reserve(clips.size());
    for (const Video& v : clips) out.push_back(e.video_features(v));
    return out;
}

FeatureSet frame_feature_set(const FeatureEmbedder& e, const std::vector<Video>& clips) {
    FeatureSet out;
    for (const Video& v : clips) {
        if (v.shape.size() != 4) throw ShapeError("frame features need [F,C,H,W] clips");
        const long f = v.shape[0], per = v.numel() / f;
        for (long i = 0; i < f; ++i) {
            Tensor frame({per});
            std::copy(v.data.begin() + i * per, v.data.begin() + (i + 1) * per,
                      frame.data.begin());
            out.push_back(e.frame_features(frame));
        }
    }
    return out;
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b, bool* ridged) {
    if (a.empty() || b.empty()) throw ParameterError("feature sets must be nonempty");
    const size_t d = a[0].size();
    for (const auto& set : {&a, &b})
        for (const auto& f : *set)
            if (f.size() != d) throw ParameterError("inconsistent feature dimensions");
    if (d == 0) throw ParameterError("feature dimension must be positive");

    Vec mu_a, mu_b;
    Mat cov_a = mean_and_cov(a, mu_a);
    Mat cov_b = mean_and_cov(b, mu_b);

    bool ridge = min_eigenvalue(cov_a) < 1e-10 || min_eigenvalue(cov_b) < 1e-10;
    if (ridge) {
        cov_a += 1e-6 * Mat::Identity(long(d), long(d));
        cov_b += 1e-6 * Mat::Identity(long(d), long(d));
    }
    if (ridged) *ridged = ridge;

    // Tr((Sa Sb)^{1/2}) through the symmetric form sqrt(Sa)^T Sb sqrt(Sa).
    Mat root_a = psd_sqrt(cov_a);
    double tr_cross = psd_sqrt(root_a * cov_b * root_a).trace();
    double fd = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
    return std::max(0.0, fd);  // the exact quantity is nonnegative; guard roundoff
}

double watermark_energy(const Video& v, const WatermarkRegion& region) {
    const size_t nd = v.shape.size();
    if (nd != 3 && nd != 4) throw ShapeError("watermark energy needs [F,C,H,W] or [C,H,W]");
    const long h = v.shape[nd - 2], w = v.shape[nd - 1];
    check_region(region, h, w);
    const long planes = v.numel() / (h * w);

    double acc = 0.0;
    for (long p = 0; p < planes; ++p)
        for (long y = region.y0; y < region.y0 + region.h; ++y)
            for (long x = region.x0; x < region.x0 + region.w; ++x)
                acc += std::abs(v.data[size_t((p * h + y) * w + x)]);
    return acc / double(planes * region.area());
}

double motion_error(const Video& v, const std::array<double, 2>& expected_velocity,
                    const WatermarkRegion* exclude) {
    if (v.shape.size() != 4) throw ShapeError("motion error needs a [F,C,H,W] clip");
    const long f = v.shape[0], c = v.shape[1], h = v.shape[2], w = v.shape[3];
    if (f < 2) throw ParameterError("motion error needs at least two frames");
    if (exclude) check_region(*exclude, h, w);

    std::vector<std::array<double, 2>> centroids;
    for (long i = 0; i < f; ++i) {
        double mass = 0.0, mx = 0.0, my = 0.0;
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                if (exclude && exclude->contains(x, y)) continue;
                double weight = 0.0;
                for (long ch = 0; ch < c; ++ch)
                    weight += std::max(0.0, v.data[size_t(((i * c + ch) * h + y) * w + x)]);
                mass += weight;
                mx += weight * double(x);
                my += weight * double(y);
            }
        if (mass < 1e-9)
            throw UndefinedMotionError("frame " + std::to_string(i) +
                                       " carries no measurable intensity");
        centroids.push_back({mx / mass, my / mass});
    }

    double acc = 0.0;
    for (long i = 0; i + 1 < f; ++i) {
        double dx = centroids[size_t(i + 1)][0] - centroids[size_t(i)][0] - expected_velocity[0];
        double dy = centroids[size_t(i + 1)][1] - centroids[size_t(i)][1] - expected_velocity[1];
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / double(2 * (f - 1)));
}

bool near_dark(const Video& v, double threshold) {
    if (v.numel() == 0) throw ShapeError("empty clip");
    double acc = 0.0;
    for (double x : v.data) acc += std::abs(x);
    return acc / double(v.numel()) < threshold;
}

double near_dark_fraction(const std::vector<Video>& clips, double threshold) {
    if (clips.empty()) throw ParameterError("need at least one clip");
    long dark = 0;
    for (const Video& v : clips)
        if (near_dark(v, threshold)) ++dark;
    return double(dark) / double(clips.size());
}

}  // namespace mcm
