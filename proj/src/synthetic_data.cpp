#include "mcm/synthetic_data.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace mcm {

namespace fs = std::filesystem;
using nlohmann::json;

std::array<double, 2> class_direction(long class_id, long num_classes) {
    if (num_classes < 1 || class_id < 0 || class_id >= num_classes)
        throw ParameterError("class_direction: class_id outside [0,K)");
    double th = 2.0 * M_PI * static_cast<double>(class_id) / static_cast<double>(num_classes);
    return {std::cos(th), std::sin(th)};
}

namespace {

void gaussian_blur_frame(Tensor& v, long f, long C, long H, long W, double sigma) {
    long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double s = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        double w = std::exp(-0.5 * double(i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = w;
        s += w;
    }
    for (double& w : k) w /= s;

    auto clampi = [](long i, long n) { return std::min(n - 1, std::max(0L, i)); };
    std::vector<double> tmp(static_cast<size_t>(H * W));
    for (long c = 0; c < C; ++c) {
        // horizontal pass
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<size_t>(i + radius)] * v.at(f, c, y, clampi(x + i, W));
                tmp[static_cast<size_t>(y * W + x)] = acc;
            }
        // vertical pass
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<size_t>(i + radius)] *
                           tmp[static_cast<size_t>(clampi(y + i, H) * W + x)];
                v.at(f, c, y, x) = acc;
            }
    }
}

}  // namespace

std::pair<Video, Condition> render_clip(const SceneSpec& spec, long F, long H, long W,
                                        std::mt19937_64& g) {
    if (F < 1 || H < 1 || W < 1) throw ParameterError("render_clip: empty geometry");
    if (spec.blob_sigma <= 0.0) throw ParameterError("render_clip: blob_sigma must be positive");
    for (long f = 0; f < F; ++f) {
        double cx = spec.cx0 + spec.vx * double(f);
        double cy = spec.cy0 + spec.vy * double(f);
        if (cx < 0.0 || cx > double(W - 1) || cy < 0.0 || cy > double(H - 1))
            throw ParameterError("render_clip: blob center leaves the frame at frame " +
                                 std::to_string(f));
    }

    const long C = 1;
    Video v({F, C, H, W});
    double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
    for (long f = 0; f < F; ++f) {
        double cx = spec.cx0 + spec.vx * double(f);
        double cy = spec.cy0 + spec.vy * double(f);
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double dx = double(x) - cx, dy = double(y) - cy;
                v.at(f, 0L, y, x) = spec.amplitude * std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
    }

    // Degradation order models a low-quality capture chain: sensor noise,
    // then the optics/downscale blur smoothing scene and noise alike, then a
    // sharp logo overlay stamped on top.
    const Degradation& d = spec.degradation;
    if (d.noise_std > 0.0) {
        std::normal_distribution<double> nd(0.0, d.noise_std);
        for (double& x : v.data) x += nd(g);
    }

    if (d.blur_sigma > 0.0)
        for (long f = 0; f < F; ++f) gaussian_blur_frame(v, f, C, H, W, d.blur_sigma);

    if (d.watermark_on) {
        for (long f = 0; f < F; ++f)
            for (long y = d.region.y0; y < d.region.y0 + d.region.h; ++y)
                for (long x = d.region.x0; x < d.region.x0 + d.region.w; ++x) {
                    if (y < 0 || y >= H || x < 0 || x >= W)
                        throw ParameterError("render_clip: watermark region outside frame");
                    v.at(f, 0L, y, x) = d.watermark_intensity;
                }
    }

    clip_(v, -1.0, 1.0);
    return {std::move(v), Condition::of(spec.class_id)};
}

namespace {

// Blob centers keep this distance (in units of blob_sigma) from both the
// frame border and the watermark rectangle, so blob mass never bleeds into
// the region in either dataset and a region metric separates the two.
constexpr double kClearanceSigmas = 2.5;

bool clears_region(double cx, double cy, const WatermarkRegion& r, double clearance) {
    if (r.area() == 0) return true;
    return !(cx >= double(r.x0) - clearance && cx <= double(r.x0 + r.w - 1) + clearance &&
             cy >= double(r.y0) - clearance && cy <= double(r.y0 + r.h - 1) + clearance);
}

SceneSpec lq_scene(const DataParams& p, long class_id, std::mt19937_64& g) {
    auto dir = class_direction(class_id, p.num_classes);
    double vx = p.speed * dir[0], vy = p.speed * dir[1];
    double margin = kClearanceSigmas * p.blob_sigma;
    double spanx = vx * double(p.frames - 1), spany = vy * double(p.frames - 1);
    double x_lo = margin - std::min(0.0, spanx);
    double x_hi = double(p.width - 1) - margin - std::max(0.0, spanx);
    double y_lo = margin - std::min(0.0, spany);
    double y_hi = double(p.height - 1) - margin - std::max(0.0, spany);
    if (x_lo > x_hi || y_lo > y_hi)
        throw ParameterError("dataset params leave no room for the trajectory");

    SceneSpec s;
    s.vx = vx;
    s.vy = vy;
    s.blob_sigma = p.blob_sigma;
    s.amplitude = p.amplitude;
    s.class_id = class_id;
    for (int tries = 0; tries < 200; ++tries) {
        s.cx0 = x_lo + uniform01(g) * (x_hi - x_lo);
        s.cy0 = y_lo + uniform01(g) * (y_hi - y_lo);
        bool ok = true;
        for (long f = 0; f < p.frames && ok; ++f)
            ok = clears_region(s.cx0 + vx * double(f), s.cy0 + vy * double(f), p.region, margin);
        if (ok) return s;
    }
    throw ParameterError("dataset params leave no watermark-free trajectory");
}

}  // namespace

VideoDataset make_lq_video_dataset(long n, const DataParams& params, std::uint64_t seed) {
    if (n < 0) throw ParameterError("make_lq_video_dataset: negative count");
    VideoDataset ds;
    ds.params = params;
    ds.seed = seed;
    for (long i = 0; i < n; ++i) {
        auto g = derive_rng(seed, "data.lq", static_cast<std::uint64_t>(i));
        long k = std::min<long>(params.num_classes - 1,
                                static_cast<long>(uniform01(g) * double(params.num_classes)));
        SceneSpec s = lq_scene(params, k, g);
        s.degradation.watermark_on = true;
        s.degradation.region = params.region;
        s.degradation.watermark_intensity = params.watermark_intensity;
        s.degradation.blur_sigma = params.lq_blur_sigma;
        s.degradation.noise_std = params.lq_noise_std;
        auto [v, c] = render_clip(s, params.frames, params.height, params.width, g);
        ds.clips.push_back(std::move(v));
        ds.labels.push_back(c);
        ds.velocities.push_back({s.vx, s.vy});
    }
    return ds;
}

VideoDataset make_clean_video_dataset(long n, const DataParams& params, std::uint64_t seed) {
    if (n < 0) throw ParameterError("make_clean_video_dataset: negative count");
    VideoDataset ds;
    ds.params = params;
    ds.seed = seed;
    for (long i = 0; i < n; ++i) {
        auto g = derive_rng(seed, "data.clean", static_cast<std::uint64_t>(i));
        long k = std::min<long>(params.num_classes - 1,
                                static_cast<long>(uniform01(g) * double(params.num_classes)));
        SceneSpec s = lq_scene(params, k, g);
        s.degradation.noise_std = params.hq_noise_std;
        auto [v, c] = render_clip(s, params.frames, params.height, params.width, g);
        ds.clips.push_back(std::move(v));
        ds.labels.push_back(c);
        ds.velocities.push_back({s.vx, s.vy});
    }
    return ds;
}

ImageDataset make_hq_image_dataset(long n, const DataParams& params, std::uint64_t seed) {
    if (n < 0) throw ParameterError("make_hq_image_dataset: negative count");
    ImageDataset ds;
    ds.params = params;
    ds.seed = seed;
    double margin = kClearanceSigmas * params.blob_sigma;
    for (long i = 0; i < n; ++i) {
        auto g = derive_rng(seed, "data.hq", static_cast<std::uint64_t>(i));
        long k = std::min<long>(params.num_classes - 1,
                                static_cast<long>(uniform01(g) * double(params.num_classes)));
        SceneSpec s;
        int tries = 0;
        do {
            if (++tries > 200)
                throw ParameterError("dataset params leave no watermark-free position");
            s.cx0 = margin + uniform01(g) * (double(params.width - 1) - 2.0 * margin);
            s.cy0 = margin + uniform01(g) * (double(params.height - 1) - 2.0 * margin);
        } while (!clears_region(s.cx0, s.cy0, params.region, margin));
        s.blob_sigma = params.blob_sigma;
        s.amplitude = params.amplitude;
        s.class_id = k;
        s.degradation.noise_std = params.hq_noise_std;
        auto [v, c] = render_clip(s, 1, params.height, params.width, g);
        ds.images.push_back(v.reshaped({params.channels, params.height, params.width}));
        ds.labels.push_back(c);
    }
    return ds;
}

// --- serialization ---

void to_json(json& j, const WatermarkRegion& r) {
    j = json{{"x0", r.x0}, {"y0", r.y0}, {"w", r.w}, {"h", r.h}};
}
void from_json(const json& j, WatermarkRegion& r) {
    j.at("x0").get_to(r.x0);
    j.at("y0").get_to(r.y0);
    j.at("w").get_to(r.w);
    j.at("h").get_to(r.h);
}

void to_json(json& j, const DataParams& p) {
    j = json{{"frames", p.frames},
             {"channels", p.channels},
             {"height", p.height},
             {"width", p.width},
             {"num_classes", p.num_classes},
             {"blob_sigma", p.blob_sigma},
             {"amplitude", p.amplitude},
             {"speed", p.speed},
             {"region", p.region},
             {"watermark_intensity", p.watermark_intensity},
             {"lq_blur_sigma", p.lq_blur_sigma},
             {"lq_noise_std", p.lq_noise_std},
             {"hq_noise_std", p.hq_noise_std}};
}
void from_json(const json& j, DataParams& p) {
    j.at("frames").get_to(p.frames);
    j.at("channels").get_to(p.channels);
    j.at("height").get_to(p.height);
    j.at("width").get_to(p.width);
    j.at("num_classes").get_to(p.num_classes);
    j.at("blob_sigma").get_to(p.blob_sigma);
    j.at("amplitude").get_to(p.amplitude);
    j.at("speed").get_to(p.speed);
    j.at("region").get_to(p.region);
    j.at("watermark_intensity").get_to(p.watermark_intensity);
    j.at("lq_blur_sigma").get_to(p.lq_blur_sigma);
    j.at("lq_noise_std").get_to(p.lq_noise_std);
    j.at("hq_noise_std").get_to(p.hq_noise_std);
}

namespace {

std::string item_name(long i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05ld.bin", i);
    return buf;
}

void write_blob(const fs::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw IoError("short write: " + path.string());
}

Tensor read_blob(const fs::path& path, Shape shape) {
    Tensor t(std::move(shape));
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for read: " + path.string());
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (f.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(double)))
        throw IoError("short read: " + path.string());
    return t;
}

}  // namespace

void save_video_dataset(const VideoDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json man;
    man["kind"] = "video";
    man["seed"] = ds.seed;
    man["n"] = ds.clips.size();
    man["params"] = ds.params;
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        man["class_ids"].push_back(ds.labels[i].class_id);
        man["velocities"].push_back({ds.velocities[i][0], ds.velocities[i][1]});
        write_blob(fs::path(dir) / item_name(static_cast<long>(i)), ds.clips[i]);
    }
    if (ds.clips.empty()) {
        man["class_ids"] = json::array();
        man["velocities"] = json::array();
    }
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << man.dump(2) << '\n';
}

VideoDataset load_video_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("missing manifest in " + dir);
    json man = json::parse(f, nullptr, true);
    if (man.at("kind") != "video") throw IoError("manifest kind mismatch in " + dir);
    VideoDataset ds;
    ds.seed = man.at("seed").get<std::uint64_t>();
    ds.params = man.at("params").get<DataParams>();
    size_t n = man.at("n").get<size_t>();
    Shape shape{ds.params.frames, ds.params.channels, ds.params.height, ds.params.width};
    for (size_t i = 0; i < n; ++i) {
        ds.clips.push_back(read_blob(fs::path(dir) / item_name(static_cast<long>(i)), shape));
        ds.labels.push_back(Condition::of(man.at("class_ids")[i].get<long>()));
        ds.velocities.push_back(
            {man.at("velocities")[i][0].get<double>(), man.at("velocities")[i][1].get<double>()});
    }
    return ds;
}

void save_image_dataset(const ImageDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    json man;
    man["kind"] = "image";
    man["seed"] = ds.seed;
    man["n"] = ds.images.size();
    man["params"] = ds.params;
    man["class_ids"] = json::array();
    for (size_t i = 0; i < ds.images.size(); ++i) {
        man["class_ids"].push_back(ds.labels[i].class_id);
        write_blob(fs::path(dir) / item_name(static_cast<long>(i)), ds.images[i]);
    }
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << man.dump(2) << '\n';
}

ImageDataset load_image_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("missing manifest in " + dir);
    json man = json::parse(f, nullptr, true);
    if (man.at("kind") != "image") throw IoError("manifest kind mismatch in " + dir);
    ImageDataset ds;
    ds.seed = man.at("seed").get<std::uint64_t>();
    ds.params = man.at("params").get<DataParams>();
    size_t n = man.at("n").get<size_t>();
    Shape shape{ds.params.channels, ds.params.height, ds.params.width};
    for (size_t i = 0; i < n; ++i) {
        ds.images.push_back(read_blob(fs::path(dir) / item_name(static_cast<long>(i)), shape));
        ds.labels.push_back(Condition::of(man.at("class_ids")[i].get<long>()));
    }
    return ds;
}

}  // namespace mcm
