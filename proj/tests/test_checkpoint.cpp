#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "mcm/checkpoint.hpp"
#include "mcm/errors.hpp"
#include "mcm/rng.hpp"

using namespace mcm;

namespace {

DenoiserArch tiny_arch() {
    DenoiserArch a;
    a.frames = 4;
    a.channels = 1;
    a.height = 16;
    a.width = 16;
    a.hidden = 6;
    a.time_dim = 8;
    a.num_classes = 8;
    a.num_train_steps = 40;
    return a;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (long i = 0; i < a.numel(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("container round trip preserves header fields and payloads bitwise") {
    Checkpoint c;
    c.kind = "teacher";
    c.arch = {{"frames", 4}};
    c.schedule = {{"num_train_steps", 40}};
    c.meta = {{"note", 3}};
    c.seed = 0xdeadbeefcafe1234ULL;
    c.step = 77;
    auto g = derive_rng(5, "test.ckpt.blob");
    c.blobs.emplace_back("alpha", Tensor::randn({31}, g));
    c.blobs.emplace_back("beta", Tensor::randn({7}, g, 3.5));

    TempFile f("test_container.ckpt");
    write_checkpoint(c, f.path);
    Checkpoint r = read_checkpoint(f.path);

    CHECK(r.version == 1);
    CHECK(r.kind == c.kind);
    CHECK(r.arch == c.arch);
    CHECK(r.schedule == c.schedule);
    CHECK(r.meta == c.meta);
    CHECK(r.seed == c.seed);
    CHECK(r.step == c.step);
    REQUIRE(r.blobs.size() == 2);
    CHECK(r.blobs[0].first == "alpha");
    CHECK(tensors_equal(r.blob("alpha"), c.blobs[0].second));
    CHECK(tensors_equal(r.blob("beta"), c.blobs[1].second));
    CHECK(r.has_blob("alpha"));
    CHECK(!r.has_blob("gamma"));
    CHECK_THROWS_AS(r.blob("gamma"), IoError);
}

TEST_CASE("teacher checkpoint restores the network and its schedule") {
    DataParams p;
    p.frames = 4;
    VideoDataset ds = make_lq_video_dataset(4, p, 3);
    TeacherConfig cfg;
    cfg.num_train_steps = 40;
    cfg.arch = tiny_arch();
    cfg.steps = 3;
    cfg.batch = 2;
    cfg.seed = 9;
    TeacherResult res = train_teacher(ds, cfg);

    TempFile f("test_teacher.ckpt");
    write_checkpoint(teacher_checkpoint(*res.denoiser, res.schedule, res.optimizer.get(),
                                        cfg.seed, cfg.steps),
                     f.path);
    Checkpoint c = read_checkpoint(f.path);
    CHECK(c.kind == "teacher");
    CHECK(c.step == 3);
    CHECK(c.seed == 9);

    NoiseSchedule sched;
    std::unique_ptr<Denoiser> d = load_teacher(c, &sched);
    CHECK(d->arch() == cfg.arch);
    CHECK(nn::params_fingerprint(d->params()) == nn::params_fingerprint(res.denoiser->params()));
    CHECK(sched.num_train_steps == res.schedule.num_train_steps);
    CHECK(sched.alphas == res.schedule.alphas);
    CHECK(sched.sigmas == res.schedule.sigmas);
}

TEST_CASE("a resumed teacher run is bit-identical to an uninterrupted one") {
    DataParams p;
    p.frames = 4;
    VideoDataset ds = make_lq_video_dataset(4, p, 3);
    TeacherConfig cfg;
    cfg.num_train_steps = 40;
    cfg.arch = tiny_arch();
    cfg.steps = 8;
    cfg.batch = 2;
    cfg.seed = 21;

    TeacherResult whole = train_teacher(ds, cfg);

    // First half, checkpoint through the file, second half.
    TeacherConfig half = cfg;
    half.steps = 4;
    TeacherResult first = train_teacher(ds, half);
    TempFile f("test_resume.ckpt");
    write_checkpoint(teacher_checkpoint(*first.denoiser, first.schedule, first.optimizer.get(),
                                        cfg.seed, half.steps),
                     f.path);
    TeacherResume resume = teacher_resume_state(read_checkpoint(f.path));
    CHECK(resume.start_step == 4);
    TeacherResult second = train_teacher(ds, cfg, &resume);

    CHECK(nn::params_fingerprint(second.denoiser->params()) ==
          nn::params_fingerprint(whole.denoiser->params()));
    REQUIRE(second.loss_curve.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        CAPTURE(i);
        CHECK(second.loss_curve[i] == whole.loss_curve[i + 4]);
    }

    // Resume metadata outside the configured run is rejected.
    TeacherResume bad = resume;
    bad.start_step = 99;
    CHECK_THROWS_AS(train_teacher(ds, cfg, &bad), ParameterError);
}

TEST_CASE("student checkpoint carries backbone, target, and the motion head pair") {
    NoiseSchedule sched = build_linear_schedule(40, 1e-4, 2e-2);
    Denoiser teacher(tiny_arch(), 5);
    ConsistencyStudent st(teacher, consistency_weights(0.5, 0, 40), sched, 0.91);
    // Separate the branches so the test can tell them apart.
    for (auto& prm : st.backbone().params())
        for (auto& x : prm.v->value.data) x += 0.125;
    MotionHead head(16 * 16, 8, 6, 0.97, 44);
    for (auto& prm : head.params())
        for (auto& x : prm.v->value.data) x += 0.0625;

    TempFile f("test_student.ckpt");
    write_checkpoint(student_checkpoint(st, &head, 123, 55), f.path);
    StudentState loaded = load_student(read_checkpoint(f.path));

    CHECK(nn::params_fingerprint(loaded.student->backbone().params()) ==
          nn::params_fingerprint(st.backbone().params()));
    CHECK(nn::params_fingerprint(loaded.student->target().params()) ==
          nn::params_fingerprint(st.target().params()));
    CHECK(loaded.student->ema_rate() == 0.91);
    CHECK(loaded.student->weights().sigma_data == 0.5);
    CHECK(loaded.student->schedule().alphas == sched.alphas);
    REQUIRE(loaded.head != nullptr);
    CHECK(nn::params_fingerprint(loaded.head->params()) == nn::params_fingerprint(head.params()));
    CHECK(nn::params_fingerprint(loaded.head->twin_params()) ==
          nn::params_fingerprint(head.twin_params()));
    CHECK(loaded.head->ema_rate() == 0.97);

    SUBCASE("no head saved, no head restored") {
        TempFile f2("test_student_nohead.ckpt");
        write_checkpoint(student_checkpoint(st, nullptr, 123, 55), f2.path);
        StudentState bare = load_student(read_checkpoint(f2.path));
        CHECK(bare.head == nullptr);
    }
}

TEST_CASE("discriminator checkpoint rebuilds the frozen encoder from its seed") {
    DiscArch darch;
    darch.channels = 1;
    darch.height = 16;
    darch.width = 16;
    darch.num_classes = 8;
    Discriminator disc(darch, 31);
    for (auto& prm : disc.head_params())
        for (auto& x : prm.v->value.data) x += 0.03;

    TempFile f("test_disc.ckpt");
    write_checkpoint(discriminator_checkpoint(disc, 31, 12), f.path);
    std::unique_ptr<Discriminator> loaded = load_discriminator(read_checkpoint(f.path));

    CHECK(loaded->encoder_fingerprint() == disc.encoder_fingerprint());
    CHECK(nn::params_fingerprint(loaded->head_params()) ==
          nn::params_fingerprint(disc.head_params()));

    auto g = derive_rng(8, "test.disc.probe");
    Tensor probe = Tensor::randn({1, 16, 16}, g, 0.5);
    CHECK(loaded->score_value(probe, Condition::of(2)) == disc.score_value(probe, Condition::of(2)));
}

TEST_CASE("malformed checkpoint files fail with clear I/O errors") {
    CHECK_THROWS_AS(read_checkpoint("does_not_exist.ckpt"), IoError);

    TempFile junk("test_junk.ckpt");
    {
        std::ofstream out(junk.path, std::ios::binary);
        out << "this is not a checkpoint at all";
    }
    CHECK_THROWS_AS(read_checkpoint(junk.path), IoError);

    // Valid file truncated mid-payload.
    Checkpoint c;
    c.kind = "teacher";
    c.arch = nlohmann::json::object();
    c.schedule = nlohmann::json::object();
    c.meta = nlohmann::json::object();
    auto g = derive_rng(5, "test.ckpt.trunc");
    c.blobs.emplace_back("alpha", Tensor::randn({64}, g));
    TempFile whole("test_whole.ckpt");
    write_checkpoint(c, whole.path);
    std::ifstream in(whole.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TempFile cut("test_cut.ckpt");
    {
        std::ofstream out(cut.path, std::ios::binary);
        out.write(bytes.data(), std::streamsize(bytes.size() - 200));
    }
    CHECK_THROWS_AS(read_checkpoint(cut.path), IoError);

    // Kind mismatches and missing optimizer state.
    Checkpoint r = read_checkpoint(whole.path);
    CHECK_THROWS_AS(load_student(r), IoError);
    CHECK_THROWS_AS(load_discriminator(r), IoError);
    CHECK_THROWS_AS(teacher_resume_state(r), IoError);

    CHECK_THROWS_AS(write_checkpoint(c, "no_such_dir_xyz/x.ckpt"), IoError);
}
