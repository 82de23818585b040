#include "mcm/checkpoint.hpp"

#include <fstream>

#include "mcm/errors.hpp"

namespace mcm {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'M', 'C', 'K', 'P', 'T', '\n'};
constexpr long kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError("checkpoint: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

bool Checkpoint::has_blob(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::blob(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return t;
    throw IoError("checkpoint: no blob named '" + name + "'");
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
    nlohmann::json header;
    header["version"] = kVersion;
    header["kind"] = c.kind;
    header["arch"] = c.arch;
    header["schedule"] = c.schedule;
    header["meta"] = c.meta;
    header["seed"] = c.seed;
    header["step"] = c.step;
    nlohmann::json dir = nlohmann::json::array();
    for (const auto& [name, t] : c.blobs) dir.push_back({{"name", name}, {"count", t.numel()}});
    header["blobs"] = dir;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, 8);
    put_u64(out, hs.size());
    out.write(hs.data(), std::streamsize(hs.size()));
    for (const auto& [name, t] : c.blobs)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  std::streamsize(sizeof(double) * size_t(t.numel())));
    if (!out) throw IoError("checkpoint: write failed on '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, kMagic))
        throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    std::uint64_t hlen = get_u64(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), std::streamsize(hlen));
    if (!in) throw IoError("checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: malformed header: ") + e.what());
    }

    Checkpoint c;
    try {
        c.version = header.at("version").get<long>();
        if (c.version > kVersion)
            throw IoError("checkpoint: container version " + std::to_string(c.version) +
                          " is newer than this build understands");
        c.kind = header.at("kind").get<std::string>();
        c.arch = header.at("arch");
        c.schedule = header.at("schedule");
        c.meta = header.at("meta");
        c.seed = header.at("seed").get<std::uint64_t>();
        c.step = header.at("step").get<long>();
        for (const auto& entry : header.at("blobs")) {
            Tensor t({entry.at("count").get<long>()});
            in.read(reinterpret_cast<char*>(t.data.data()),
                    std::streamsize(sizeof(double) * t.data.size()));
            if (!in) throw IoError("checkpoint: truncated payload");
            c.blobs.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: malformed header: ") + e.what());
    }
    return c;
}

nlohmann::json to_json(const DenoiserArch& a) {
    return {{"frames", a.frames},   {"channels", a.channels},
            {"height", a.height},   {"width", a.width},
            {"hidden", a.hidden},   {"time_dim", a.time_dim},
            {"num_classes", a.num_classes}, {"num_train_steps", a.num_train_steps}};
}

nlohmann::json to_json(const DiscArch& a) {
    return {{"channels", a.channels},
            {"height", a.height},
            {"width", a.width},
            {"num_classes", a.num_classes},
            {"encoder_widths", a.encoder_widths}};
}

nlohmann::json to_json(const NoiseSchedule& s) {
    return {{"num_train_steps", s.num_train_steps},
            {"beta_min", s.beta_min},
            {"beta_max", s.beta_max},
            {"epsilon_step", s.epsilon_step}};
}

DenoiserArch denoiser_arch_from_json(const nlohmann::json& j) {
    DenoiserArch a;
    a.frames = j.at("frames").get<long>();
    a.channels = j.at("channels").get<long>();
    a.height = j.at("height").get<long>();
    a.width = j.at("width").get<long>();
    a.hidden = j.at("hidden").get<long>();
    a.time_dim = j.at("time_dim").get<long>();
    a.num_classes = j.at("num_classes").get<long>();
    a.num_train_steps = j.at("num_train_steps").get<long>();
    return a;
}

DiscArch disc_arch_from_json(const nlohmann::json& j) {
    DiscArch a;
    a.channels = j.at("channels").get<long>();
    a.height = j.at("height").get<long>();
    a.width = j.at("width").get<long>();
    a.num_classes = j.at("num_classes").get<long>();
    a.encoder_widths = j.at("encoder_widths").get<std::vector<long>>();
    return a;
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    return build_linear_schedule(j.at("num_train_steps").get<long>(),
                                 j.at("beta_min").get<double>(),
                                 j.at("beta_max").get<double>(),
                                 j.at("epsilon_step").get<long>());
}

Checkpoint teacher_checkpoint(const Denoiser& d, const NoiseSchedule& sched, const nn::Adam* opt,
                              std::uint64_t seed, long step) {
    Checkpoint c;
    c.kind = "teacher";
    c.arch = to_json(d.arch());
    c.schedule = to_json(sched);
    c.meta = nlohmann::json::object();
    c.seed = seed;
    c.step = step;
    c.blobs.emplace_back("params", nn::flatten_params(d.params()));
    if (opt) {
        c.blobs.emplace_back("adam.m", nn::flatten_tensors(opt->m()));
        c.blobs.emplace_back("adam.v", nn::flatten_tensors(opt->v()));
        c.meta["adam_t"] = opt->t();
    }
    return c;
}

std::unique_ptr<Denoiser> load_teacher(const Checkpoint& c, NoiseSchedule* sched_out) {
    if (c.kind != "teacher") throw IoError("checkpoint: expected kind 'teacher', got '" + c.kind + "'");
    auto d = std::make_unique<Denoiser>(denoiser_arch_from_json(c.arch), 0);
    nn::ParamList ps = d->params();
    nn::load_flat_params(ps, c.blob("params"));
    if (sched_out) *sched_out = schedule_from_json(c.schedule);
    return d;
}

TeacherResume teacher_resume_state(const Checkpoint& c) {
    if (c.kind != "teacher") throw IoError("checkpoint: expected kind 'teacher', got '" + c.kind + "'");
    if (!c.has_blob("adam.m") || !c.meta.contains("adam_t"))
        throw IoError("checkpoint: no optimizer state to resume from");
    TeacherResume r;
    r.params = c.blob("params");
    r.adam_m = c.blob("adam.m");
    r.adam_v = c.blob("adam.v");
    r.adam_t = c.meta.at("adam_t").get<long>();
    r.start_step = c.step;
    return r;
}

Checkpoint student_checkpoint(const ConsistencyStudent& s, const MotionHead* head,
                              std::uint64_t seed, long step) {
    Checkpoint c;
    c.kind = "student";
    c.arch = to_json(s.backbone().arch());
    c.schedule = to_json(s.schedule());
    c.meta = {{"ema_rate", s.ema_rate()}, {"sigma_data", s.weights().sigma_data}};
    c.seed = seed;
    c.step = step;
    c.blobs.emplace_back("backbone", nn::flatten_params(s.backbone().params()));
    c.blobs.emplace_back("target", nn::flatten_params(s.target().params()));
    if (head) {
        // The hidden width is not a stored scalar on the head; recover it
        // from the first layer's weight matrix [frame_dim, hidden].
        c.meta["head"] = {{"hidden", head->params().front().v->value.shape[1]},
                          {"out_dim", head->out_dim()},
                          {"ema_rate", head->ema_rate()}};
        c.blobs.emplace_back("motion_head", nn::flatten_params(head->params()));
        c.blobs.emplace_back("motion_head_twin", nn::flatten_params(head->twin_params()));
    }
    return c;
}

StudentState load_student(const Checkpoint& c) {
    if (c.kind != "student") throw IoError("checkpoint: expected kind 'student', got '" + c.kind + "'");
    DenoiserArch arch = denoiser_arch_from_json(c.arch);
    NoiseSchedule sched = schedule_from_json(c.schedule);
    Denoiser init(arch, 0);

    StudentState st;
    st.student = std::make_unique<ConsistencyStudent>(
        init,
        consistency_weights(c.meta.at("sigma_data").get<double>(), sched.epsilon_step,
                            sched.num_train_steps),
        sched, c.meta.at("ema_rate").get<double>());
    nn::ParamList bp = st.student->backbone().params();
    nn::load_flat_params(bp, c.blob("backbone"));
    nn::ParamList tp = st.student->target().params();
    nn::load_flat_params(tp, c.blob("target"));

    if (c.meta.contains("head") && !c.meta.at("head").is_null()) {
        const auto& h = c.meta.at("head");
        st.head = std::make_unique<MotionHead>(arch.channels * arch.height * arch.width,
                                               h.at("hidden").get<long>(),
                                               h.at("out_dim").get<long>(),
                                               h.at("ema_rate").get<double>(), c.seed);
        nn::load_flat_params(st.head->params(), c.blob("motion_head"));
        nn::load_flat_params(st.head->twin_params(), c.blob("motion_head_twin"));
    }
    return st;
}

Checkpoint discriminator_checkpoint(const Discriminator& d, std::uint64_t seed, long step) {
    Checkpoint c;
    c.kind = "discriminator";
    c.arch = to_json(d.arch());
    c.schedule = nlohmann::json::object();
    c.meta = nlohmann::json::object();
    c.seed = seed;  // the frozen encoder is rebuilt from this
    c.step = step;
    c.blobs.emplace_back("heads", nn::flatten_params(d.head_params()));
    return c;
}

std::unique_ptr<Discriminator> load_discriminator(const Checkpoint& c) {
    if (c.kind != "discriminator")
        throw IoError("checkpoint: expected kind 'discriminator', got '" + c.kind + "'");
    auto d = std::make_unique<Discriminator>(disc_arch_from_json(c.arch), c.seed);
    nn::load_flat_params(d->head_params(), c.blob("heads"));
    return d;
}

}  // namespace mcm
