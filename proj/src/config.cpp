#include "mcm/config.hpp"

#include <fstream>
#include <set>

#include "mcm/errors.hpp"

namespace mcm {

namespace {

using nlohmann::json;

// Strict object reader: every key must be consumed by a field binding.
class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object())
            throw ConfigError("config: '" + name_ + "' must be a JSON object");
    }

    template <typename T>
    void bind(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            j_.at(key).get_to(out);
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + name_ + "." + key + "': " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    const json& at(const char* key) const { return j_.at(key); }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key))
                throw ConfigError("config: unknown key '" + name_ + "." + key + "'");
    }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

std::string motion_kind_name(MotionKind k) {
    switch (k) {
        case MotionKind::raw: return "raw";
        case MotionKind::diff: return "diff";
        case MotionKind::corr: return "corr";
        case MotionKind::low_freq: return "lowfreq";
        case MotionKind::high_freq: return "highfreq";
        case MotionKind::learnable: return "learnable";
    }
    throw ParameterError("motion_kind_name: unknown kind");
}

MotionKind motion_kind_from_name(const std::string& name) {
    if (name == "raw") return MotionKind::raw;
    if (name == "diff") return MotionKind::diff;
    if (name == "corr") return MotionKind::corr;
    if (name == "lowfreq") return MotionKind::low_freq;
    if (name == "highfreq") return MotionKind::high_freq;
    if (name == "learnable") return MotionKind::learnable;
    throw ConfigError("config: unknown motion kind '" + name +
                      "' (expected raw|diff|corr|lowfreq|highfreq|learnable)");
}

nlohmann::json to_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;

    j["data"] = {{"frames", c.data.frames},
                 {"channels", c.data.channels},
                 {"height", c.data.height},
                 {"width", c.data.width},
                 {"num_classes", c.data.num_classes},
                 {"blob_sigma", c.data.blob_sigma},
                 {"amplitude", c.data.amplitude},
                 {"speed", c.data.speed},
                 {"region", {c.data.region.x0, c.data.region.y0, c.data.region.w, c.data.region.h}},
                 {"watermark_intensity", c.data.watermark_intensity},
                 {"lq_blur_sigma", c.data.lq_blur_sigma},
                 {"lq_noise_std", c.data.lq_noise_std},
                 {"hq_noise_std", c.data.hq_noise_std}};
    j["video_count"] = c.video_count;
    j["image_count"] = c.image_count;

    j["teacher"] = {{"num_train_steps", c.teacher.num_train_steps},
                    {"beta_min", c.teacher.beta_min},
                    {"beta_max", c.teacher.beta_max},
                    {"epsilon_step", c.teacher.epsilon_step},
                    {"arch",
                     {{"frames", c.teacher.arch.frames},
                      {"channels", c.teacher.arch.channels},
                      {"height", c.teacher.arch.height},
                      {"width", c.teacher.arch.width},
                      {"hidden", c.teacher.arch.hidden},
                      {"time_dim", c.teacher.arch.time_dim},
                      {"num_classes", c.teacher.arch.num_classes},
                      {"num_train_steps", c.teacher.arch.num_train_steps}}},
                    {"steps", c.teacher.steps},
                    {"batch", c.teacher.batch},
                    {"lr", c.teacher.lr},
                    {"cond_dropout", c.teacher.cond_dropout},
                    {"checkpoint_every", c.teacher.checkpoint_every}};

    j["distill"] = {{"lambda_adv", c.distill.lambda_adv},
                    {"lambda_real", c.distill.lambda_real},
                    {"motion_kind", motion_kind_name(c.distill.motion_kind)},
                    {"motion_cutoff", c.distill.motion_cutoff},
                    {"head_hidden", c.distill.head_hidden},
                    {"head_out", c.distill.head_out},
                    {"l_frames", c.distill.l_frames},
                    {"lr_student", c.distill.lr_student},
                    {"lr_disc", c.distill.lr_disc},
                    {"r1_weight", c.distill.r1_weight},
                    {"disc_every", c.distill.disc_every},
                    {"batch_size", c.distill.batch_size},
                    {"total_steps", c.distill.total_steps},
                    {"ema_rate", c.distill.ema_rate},
                    {"cd",
                     {{"solver_points", c.distill.cd.solver_points},
                      {"w_min", c.distill.cd.w_min},
                      {"w_max", c.distill.cd.w_max},
                      {"huber_delta", c.distill.cd.huber_delta},
                      {"guidance_on", c.distill.cd.guidance_on},
                      {"clip_x0", c.distill.cd.clip_x0}}},
                    {"eval_samples", c.distill.eval_samples},
                    {"eval_step_counts", c.distill.eval_step_counts},
                    {"dark_threshold", c.distill.dark_threshold}};

    j["report_samples"] = c.report_samples;
    j["report_step_counts"] = c.report_step_counts;
    return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    Section root(j, "");
    if (!root.has("schema_version"))
        throw ConfigError("config: missing required key 'schema_version'");
    root.bind("schema_version", c.schema_version);
    if (c.schema_version != 1)
        throw ConfigError("config: unsupported schema_version " +
                          std::to_string(c.schema_version));
    root.bind("seed", c.seed);
    root.bind("output_dir", c.output_dir);
    root.bind("video_count", c.video_count);
    root.bind("image_count", c.image_count);
    root.bind("report_samples", c.report_samples);
    root.bind("report_step_counts", c.report_step_counts);

    if (root.has("data")) {
        Section d(root.at("data"), "data");
        d.bind("frames", c.data.frames);
        d.bind("channels", c.data.channels);
        d.bind("height", c.data.height);
        d.bind("width", c.data.width);
        d.bind("num_classes", c.data.num_classes);
        d.bind("blob_sigma", c.data.blob_sigma);
        d.bind("amplitude", c.data.amplitude);
        d.bind("speed", c.data.speed);
        if (d.has("region")) {
            std::vector<long> r;
            d.bind("region", r);
            if (r.size() != 4)
                throw ConfigError("config: 'data.region' must be [x0, y0, w, h]");
            c.data.region = {r[0], r[1], r[2], r[3]};
        }
        d.bind("watermark_intensity", c.data.watermark_intensity);
        d.bind("lq_blur_sigma", c.data.lq_blur_sigma);
        d.bind("lq_noise_std", c.data.lq_noise_std);
        d.bind("hq_noise_std", c.data.hq_noise_std);
        d.finish();
    }

    if (root.has("teacher")) {
        Section t(root.at("teacher"), "teacher");
        t.bind("num_train_steps", c.teacher.num_train_steps);
        t.bind("beta_min", c.teacher.beta_min);
        t.bind("beta_max", c.teacher.beta_max);
        t.bind("epsilon_step", c.teacher.epsilon_step);
        if (t.has("arch")) {
            Section a(t.at("arch"), "teacher.arch");
            a.bind("frames", c.teacher.arch.frames);
            a.bind("channels", c.teacher.arch.channels);
            a.bind("height", c.teacher.arch.height);
            a.bind("width", c.teacher.arch.width);
            a.bind("hidden", c.teacher.arch.hidden);
            a.bind("time_dim", c.teacher.arch.time_dim);
            a.bind("num_classes", c.teacher.arch.num_classes);
            a.bind("num_train_steps", c.teacher.arch.num_train_steps);
            a.finish();
        }
        t.bind("steps", c.teacher.steps);
        t.bind("batch", c.teacher.batch);
        t.bind("lr", c.teacher.lr);
        t.bind("cond_dropout", c.teacher.cond_dropout);
        t.bind("checkpoint_every", c.teacher.checkpoint_every);
        t.finish();
    }

    if (root.has("distill")) {
        Section d(root.at("distill"), "distill");
        d.bind("lambda_adv", c.distill.lambda_adv);
        d.bind("lambda_real", c.distill.lambda_real);
        if (d.has("motion_kind")) {
            std::string name;
            d.bind("motion_kind", name);
            c.distill.motion_kind = motion_kind_from_name(name);
        }
        d.bind("motion_cutoff", c.distill.motion_cutoff);
        d.bind("head_hidden", c.distill.head_hidden);
        d.bind("head_out", c.distill.head_out);
        d.bind("l_frames", c.distill.l_frames);
        d.bind("lr_student", c.distill.lr_student);
        d.bind("lr_disc", c.distill.lr_disc);
        d.bind("r1_weight", c.distill.r1_weight);
        d.bind("disc_every", c.distill.disc_every);
        d.bind("batch_size", c.distill.batch_size);
        d.bind("total_steps", c.distill.total_steps);
        d.bind("ema_rate", c.distill.ema_rate);
        if (d.has("cd")) {
            Section s(d.at("cd"), "distill.cd");
            s.bind("solver_points", c.distill.cd.solver_points);
            s.bind("w_min", c.distill.cd.w_min);
            s.bind("w_max", c.distill.cd.w_max);
            s.bind("huber_delta", c.distill.cd.huber_delta);
            s.bind("guidance_on", c.distill.cd.guidance_on);
            s.bind("clip_x0", c.distill.cd.clip_x0);
            s.finish();
        }
        d.bind("eval_samples", c.distill.eval_samples);
        d.bind("eval_step_counts", c.distill.eval_step_counts);
        d.bind("dark_threshold", c.distill.dark_threshold);
        d.finish();
    }
    root.finish();

    // The distillation seed always follows the experiment seed; keeping one
    // source of truth is what makes paired ablation runs comparable.
    c.distill.seed = c.seed;
    c.teacher.seed = c.seed;
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("config: cannot open '" + path + "' for writing");
    out << to_json(c).dump(2) << "\n";
    if (!out) throw IoError("config: write failed on '" + path + "'");
}

void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };

    const DataParams& p = c.data;
    if (p.frames < 1 || p.channels < 1 || p.height < 1 || p.width < 1)
        fail("data geometry must be positive");
    if (p.num_classes < 1) fail("data.num_classes must be positive");
    if (p.region.w < 1 || p.region.h < 1 || p.region.x0 < 0 || p.region.y0 < 0 ||
        p.region.x0 + p.region.w > p.width || p.region.y0 + p.region.h > p.height)
        fail("data.region must fit inside the frame");
    if (c.video_count < 1 || c.image_count < 1) fail("dataset counts must be positive");

    const DenoiserArch& a = c.teacher.arch;
    if (a.frames != p.frames || a.channels != p.channels || a.height != p.height ||
        a.width != p.width)
        fail("teacher.arch geometry must match the data recipe");
    if (a.num_classes != p.num_classes)
        fail("teacher.arch.num_classes must match data.num_classes");
    if (a.num_train_steps != c.teacher.num_train_steps)
        fail("teacher.arch.num_train_steps must match teacher.num_train_steps");
    if (c.teacher.steps < 1 || c.teacher.batch < 1) fail("teacher.steps/batch must be positive");
    if (c.teacher.lr <= 0) fail("teacher.lr must be positive");

    const DistillConfig& d = c.distill;
    if (d.cd.solver_points < 1) fail("distill.cd.solver_points must be positive");
    if (d.cd.solver_points >= c.teacher.num_train_steps)
        fail("distill.cd.solver_points must be smaller than the schedule length");
    if (d.lambda_real < 0 || d.lambda_real > 1) fail("distill.lambda_real must lie in [0, 1]");
    if (d.lambda_adv < 0) fail("distill.lambda_adv must be nonnegative");
    if (d.batch_size < 1 || d.total_steps < 0) fail("distill.batch_size/total_steps invalid");
    for (long k : c.report_step_counts)
        if (k != 1 && k != 2 && k != 4 && k != 8)
            fail("report_step_counts entries must be one of {1, 2, 4, 8}");
    for (long k : d.eval_step_counts)
        if (k != 1 && k != 2 && k != 4 && k != 8)
            fail("distill.eval_step_counts entries must be one of {1, 2, 4, 8}");
    if (c.report_samples < 1) fail("report_samples must be positive");
}

}  // namespace mcm
