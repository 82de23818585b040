// Experiment driver: dataset generation, teacher training, distillation,
// evaluation, and the ablation grids, all steered by one JSON config.
// Every subcommand is reproducible from config + seed alone; logs and
// reports carry no timestamps so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcm/checkpoint.hpp"
#include "mcm/config.hpp"
#include "mcm/distillation.hpp"
#include "mcm/errors.hpp"
#include "mcm/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mcm;

namespace {

// Metric cells can be null in a report (no measurable motion).
double json_num(const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

struct Options {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::string motion;
    double lambda_real = 0.5;
    double lambda_adv = 1.0;
    std::string steps;
    bool force = false;
};

// Every subcommand takes the same overrides; presence is queried on the
// parsed subcommand itself, so only flags the user actually gave apply.
void add_common_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", o.seed, "override the experiment seed");
    cmd->add_option("--out", o.out, "override the output directory");
    cmd->add_option("--motion", o.motion, "override the motion representation")
        ->check(CLI::IsMember({"raw", "diff", "corr", "lowfreq", "highfreq", "learnable"}));
    cmd->add_option("--lambda-real", o.lambda_real, "override the real-trajectory share");
    cmd->add_option("--lambda-adv", o.lambda_adv, "override the adversarial weight");
    cmd->add_option("--steps", o.steps,
                    "override the sampling step counts (comma list, e.g. 1,2,4)");
    cmd->add_flag("--force", o.force, "overwrite existing outputs");
}

std::vector<long> parse_step_list(const std::string& s) {
    std::vector<long> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size()) throw ConfigError("bad --steps entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("--steps must list at least one step count");
    return out;
}

// File values first, then flags on top; the resolved config is what runs.
ExperimentConfig resolve_config(const CLI::App& cmd, const Options& o) {
    ExperimentConfig c = load_config(o.config_path);
    if (cmd.count("--seed")) c.seed = o.seed;
    if (cmd.count("--out")) c.output_dir = o.out;
    if (cmd.count("--motion")) c.distill.motion_kind = motion_kind_from_name(o.motion);
    if (cmd.count("--lambda-real")) c.distill.lambda_real = o.lambda_real;
    if (cmd.count("--lambda-adv")) c.distill.lambda_adv = o.lambda_adv;
    if (cmd.count("--steps")) {
        std::vector<long> ks = parse_step_list(o.steps);
        c.report_step_counts = ks;
        c.distill.eval_step_counts = ks;
    }
    // Stage seeds always follow the experiment seed, also across overrides.
    c.teacher.seed = c.seed;
    c.distill.seed = c.seed;
    validate(c);
    return c;
}

fs::path videos_dir(const ExperimentConfig& c) {
    return fs::path(c.output_dir) / "data" / "videos";
}
fs::path images_dir(const ExperimentConfig& c) {
    return fs::path(c.output_dir) / "data" / "images";
}

VideoDataset require_videos(const ExperimentConfig& c) {
    fs::path dir = videos_dir(c);
    if (!fs::exists(dir / "manifest.json"))
        throw IoError("no video dataset at " + dir.string() + "; run gen-data first");
    return load_video_dataset(dir.string());
}

ImageDataset require_images(const ExperimentConfig& c) {
    fs::path dir = images_dir(c);
    if (!fs::exists(dir / "manifest.json"))
        throw IoError("no image dataset at " + dir.string() + "; run gen-data first");
    return load_image_dataset(dir.string());
}

int cmd_gen_data(const ExperimentConfig& c, bool force) {
    fs::path vd = videos_dir(c), id = images_dir(c);
    if (!force && (fs::exists(vd / "manifest.json") || fs::exists(id / "manifest.json")))
        throw IoError("datasets already exist under " +
                      (fs::path(c.output_dir) / "data").string() + "; pass --force to overwrite");

    // Two independent streams off the one experiment seed.
    VideoDataset videos = make_lq_video_dataset(c.video_count, c.data, c.seed);
    ImageDataset images = make_hq_image_dataset(c.image_count, c.data, c.seed + 1);
    save_video_dataset(videos, vd.string());
    save_image_dataset(images, id.string());
    std::cout << "wrote " << videos.size() << " clips to " << vd.string() << "\n"
              << "wrote " << images.size() << " images to " << id.string() << "\n";
    return 0;
}

int cmd_train_teacher(const ExperimentConfig& c, bool force) {
    VideoDataset videos = require_videos(c);
    fs::create_directories(c.output_dir);
    fs::path ckpt_path = fs::path(c.output_dir) / "teacher.ckpt";
    fs::path log_path = fs::path(c.output_dir) / "teacher_log.csv";

    TeacherConfig tc = c.teacher;
    TeacherResume resume;
    const TeacherResume* resume_ptr = nullptr;
    if (!force && fs::exists(ckpt_path)) {
        Checkpoint prev = read_checkpoint(ckpt_path.string());
        if (prev.step >= tc.steps) {
            std::cout << "teacher already trained to step " << prev.step
                      << "; pass --force to retrain\n";
            return 0;
        }
        resume = teacher_resume_state(prev);
        resume_ptr = &resume;
        std::cout << "resuming from step " << resume.start_step << "\n";
    }

    NoiseSchedule sched =
        build_linear_schedule(tc.num_train_steps, tc.beta_min, tc.beta_max, tc.epsilon_step);
    tc.checkpoint_cb = [&](long step, const Denoiser& d, const nn::Adam& opt) {
        write_checkpoint(teacher_checkpoint(d, sched, &opt, c.seed, step), ckpt_path.string());
    };

    TeacherResult res = train_teacher(videos, tc, resume_ptr);
    write_checkpoint(teacher_checkpoint(*res.denoiser, res.schedule, res.optimizer.get(), c.seed,
                                        tc.steps),
                     ckpt_path.string());

    // Resumed runs append their steps, so the file ends up identical to an
    // uninterrupted run's log.
    long base = resume_ptr ? resume.start_step : 0;
    std::ofstream log(log_path, resume_ptr ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write " + log_path.string());
    if (!resume_ptr) log << "step,loss\n";
    log << std::setprecision(17);
    for (size_t i = 0; i < res.loss_curve.size(); ++i)
        log << base + long(i) << ',' << res.loss_curve[i] << "\n";
    log.close();

    // Chart the whole curve from the file, not just this run's slice.
    Series losses{"eps_mse", {}, {}};
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        size_t comma = line.find(',');
        if (comma == std::string::npos) continue;
        losses.xs.push_back(std::stod(line.substr(0, comma)));
        losses.ys.push_back(std::stod(line.substr(comma + 1)));
    }
    write_line_chart("teacher training loss", {losses},
                     (fs::path(c.output_dir) / "teacher_loss.png").string());

    if (!res.loss_curve.empty())
        std::cout << "trained " << tc.steps << " steps, final loss " << res.loss_curve.back()
                  << "\n";
    std::cout << "checkpoint: " << ckpt_path.string() << "\n";
    return 0;
}

std::unique_ptr<Denoiser> require_teacher(const ExperimentConfig& c, NoiseSchedule* sched) {
    fs::path path = fs::path(c.output_dir) / "teacher.ckpt";
    if (!fs::exists(path))
        throw IoError("no teacher checkpoint at " + path.string() + "; run train-teacher first");
    Checkpoint ck = read_checkpoint(path.string());
    return load_teacher(ck, sched);
}

void write_sample_grid(const ConsistencyStudent& student, long k, long num_classes,
                       std::uint64_t seed, const fs::path& path) {
    std::vector<Tensor> clips;
    long n = std::min<long>(6, num_classes);
    for (long i = 0; i < n; ++i) {
        auto g = derive_rng(seed, "cli.sample", std::uint64_t(k) * 1000003ULL + std::uint64_t(i));
        clips.push_back(cm_sample(student, k, Condition::of(i % num_classes), g));
    }
    write_frame_grid(clips, path.string());
}

void plot_distill_log(const std::vector<TrainLogRow>& log, const fs::path& path) {
    Series g{"loss_g", {}, {}}, d{"loss_d", {}, {}};
    for (const TrainLogRow& row : log) {
        g.xs.push_back(double(row.step));
        g.ys.push_back(row.loss_G);
        d.xs.push_back(double(row.step));
        d.ys.push_back(row.loss_D);
    }
    write_line_chart("distillation losses", {g, d}, path.string());
}

// One distillation run into `dir`. Returns the result so callers can keep
// evaluating; on divergence the last finite student state is saved first.
TrainResult run_distill(const ExperimentConfig& c, const DistillConfig& dc, const Denoiser& teacher,
                        const NoiseSchedule& sched, const VideoDataset& videos,
                        const ImageDataset& images, const fs::path& dir) {
    fs::create_directories(dir);
    CheckpointFn on_divergence = [&](long step, const ConsistencyStudent& s) {
        write_checkpoint(student_checkpoint(s, nullptr, c.seed, step),
                         (dir / "student_lastgood.ckpt").string());
        std::cerr << "divergence: saved last finite student state (step " << step << ") to "
                  << (dir / "student_lastgood.ckpt").string() << "\n";
    };

    TrainResult res = train_mcm(teacher, sched, videos, images, dc, on_divergence);
    write_training_csv(res.log, dc.eval_step_counts, (dir / "distill_log.csv").string());
    write_checkpoint(student_checkpoint(*res.student, res.head.get(), c.seed, dc.total_steps),
                     (dir / "student.ckpt").string());
    if (res.disc)
        write_checkpoint(discriminator_checkpoint(*res.disc, c.seed, dc.total_steps),
                         (dir / "disc.ckpt").string());
    plot_distill_log(res.log, dir / "distill_loss.png");
    long k_show = dc.eval_step_counts.empty()
                      ? 4
                      : *std::max_element(dc.eval_step_counts.begin(), dc.eval_step_counts.end());
    write_sample_grid(*res.student, k_show, c.data.num_classes, c.seed, dir / "samples.png");
    return res;
}

int cmd_distill(const ExperimentConfig& c) {
    NoiseSchedule sched;
    auto teacher = require_teacher(c, &sched);
    VideoDataset videos = require_videos(c);
    ImageDataset images;
    if (c.distill.lambda_adv > 0) images = require_images(c);

    TrainResult res =
        run_distill(c, c.distill, *teacher, sched, videos, images, fs::path(c.output_dir));
    if (!res.log.empty())
        std::cout << "distilled " << c.distill.total_steps << " steps, final loss_G "
                  << res.log.back().loss_G << "\n";
    std::cout << "checkpoint: " << (fs::path(c.output_dir) / "student.ckpt").string() << "\n";
    return 0;
}

json eval_report(const ConsistencyStudent& student, const EvalContext& ctx,
                 const std::vector<long>& step_counts, long n_samples, std::uint64_t seed) {
    json rows = json::array();
    for (long k : step_counts) {
        StepEval e = evaluate_student(student, k, ctx, n_samples, seed);
        rows.push_back({{"steps", k},
                        {"fvd_proxy", e.fvd},
                        {"watermark_energy", e.wm_energy},
                        {"motion_err", e.motion_err},
                        {"near_dark_frac", e.dark_frac}});
    }
    return rows;
}

int cmd_eval(const ExperimentConfig& c) {
    fs::path ckpt_path = fs::path(c.output_dir) / "student.ckpt";
    if (!fs::exists(ckpt_path))
        throw IoError("no student checkpoint at " + ckpt_path.string() + "; run distill first");
    Checkpoint ck = read_checkpoint(ckpt_path.string());
    StudentState st = load_student(ck);
    EvalContext ctx = make_eval_context(c.data, c.distill);

    json report;
    report["seed"] = c.seed;
    report["checkpoint_step"] = ck.step;
    report["motion_kind"] = motion_kind_name(c.distill.motion_kind);
    report["lambda_real"] = c.distill.lambda_real;
    report["lambda_adv"] = c.distill.lambda_adv;
    report["samples_per_step_count"] = c.report_samples;
    report["per_step"] = eval_report(*st.student, ctx, c.report_step_counts, c.report_samples,
                                     c.seed);

    fs::path report_path = fs::path(c.output_dir) / "report.json";
    std::ofstream f(report_path);
    if (!f) throw IoError("cannot write " + report_path.string());
    f << report.dump(2) << "\n";
    if (!f) throw IoError("write failed on " + report_path.string());

    Series fvd{"fvd_proxy", {}, {}}, wm{"watermark_energy", {}, {}}, me{"motion_err", {}, {}},
        nd{"near_dark", {}, {}};
    std::printf("%6s %12s %12s %12s %12s\n", "steps", "fvd_proxy", "wm_energy", "motion_err",
                "near_dark");
    for (const json& row : report["per_step"]) {
        double k = row["steps"].get<double>();
        fvd.xs.push_back(k), fvd.ys.push_back(json_num(row["fvd_proxy"]));
        wm.xs.push_back(k), wm.ys.push_back(json_num(row["watermark_energy"]));
        me.xs.push_back(k), me.ys.push_back(json_num(row["motion_err"]));
        nd.xs.push_back(k), nd.ys.push_back(json_num(row["near_dark_frac"]));
        std::printf("%6ld %12.5f %12.5f %12.5f %12.5f\n", long(k), fvd.ys.back(), wm.ys.back(),
                    me.ys.back(), nd.ys.back());
    }
    write_line_chart("metrics vs sampling steps", {fvd, wm, me, nd},
                     (fs::path(c.output_dir) / "metrics_vs_steps.png").string());
    for (long k : c.report_step_counts)
        write_sample_grid(*st.student, k, c.data.num_classes, c.seed,
                          fs::path(c.output_dir) / ("samples_" + std::to_string(k) + "step.png"));
    std::cout << "report: " << report_path.string() << "\n";
    return 0;
}

struct AblationCell {
    std::string grid, name;
    DistillConfig dc;
};

int cmd_ablate(const ExperimentConfig& c) {
    NoiseSchedule sched;
    auto teacher = require_teacher(c, &sched);
    VideoDataset videos = require_videos(c);
    ImageDataset images = require_images(c);

    std::vector<AblationCell> cells;
    // Additive objective grid: adversarial appearance pressure alone, plus
    // the learned motion representation, plus mixed trajectories.
    {
        DistillConfig adv = c.distill;
        adv.motion_kind = MotionKind::raw;
        adv.lambda_real = 1.0;
        DistillConfig mcd = adv;
        mcd.motion_kind = MotionKind::learnable;
        DistillConfig mixed = mcd;
        mixed.lambda_real = 0.5;
        cells.push_back({"objective", "adv", adv});
        cells.push_back({"objective", "adv+mcd", mcd});
        cells.push_back({"objective", "adv+mcd+mixed", mixed});
    }
    for (double lr : {1.0, 0.5, 0.0}) {
        DistillConfig dc = c.distill;
        dc.lambda_real = lr;
        std::ostringstream name;
        name << "lambda_real_" << lr;
        cells.push_back({"lambda_real", name.str(), dc});
    }
    for (MotionKind k : {MotionKind::raw, MotionKind::diff, MotionKind::corr, MotionKind::low_freq,
                         MotionKind::high_freq, MotionKind::learnable}) {
        DistillConfig dc = c.distill;
        dc.motion_kind = k;
        cells.push_back({"motion", motion_kind_name(k), dc});
    }

    fs::path root = fs::path(c.output_dir) / "ablate";
    fs::create_directories(root);
    json table = json::array();
    std::ofstream csv(root / "ablation.csv");
    if (!csv) throw IoError("cannot write " + (root / "ablation.csv").string());
    csv << "grid,cell,motion,lambda_real,lambda_adv";
    for (long k : c.report_step_counts)
        csv << ",fvd_proxy@" << k << ",watermark_energy@" << k << ",motion_err@" << k
            << ",near_dark@" << k;
    csv << "\n" << std::setprecision(17);

    for (const AblationCell& cell : cells) {
        std::cout << "[" << cell.grid << " / " << cell.name << "]\n";
        fs::path dir = root / cell.grid / cell.name;
        // Every cell runs under the same experiment seed so comparisons are
        // paired, not confounded by draw differences.
        TrainResult res = run_distill(c, cell.dc, *teacher, sched, videos, images, dir);
        EvalContext ctx = make_eval_context(c.data, cell.dc);
        json rows = eval_report(*res.student, ctx, c.report_step_counts, c.report_samples, c.seed);

        json entry;
        entry["grid"] = cell.grid;
        entry["cell"] = cell.name;
        entry["motion"] = motion_kind_name(cell.dc.motion_kind);
        entry["lambda_real"] = cell.dc.lambda_real;
        entry["lambda_adv"] = cell.dc.lambda_adv;
        entry["per_step"] = rows;
        table.push_back(entry);

        csv << cell.grid << ',' << cell.name << ',' << motion_kind_name(cell.dc.motion_kind) << ','
            << cell.dc.lambda_real << ',' << cell.dc.lambda_adv;
        for (const json& row : rows)
            csv << ',' << json_num(row["fvd_proxy"]) << ',' << json_num(row["watermark_energy"])
                << ',' << json_num(row["motion_err"]) << ',' << json_num(row["near_dark_frac"]);
        csv << "\n";
    }
    if (!csv) throw IoError("write failed on " + (root / "ablation.csv").string());
    csv.close();

    std::ofstream jf(root / "ablation.json");
    if (!jf) throw IoError("cannot write " + (root / "ablation.json").string());
    jf << table.dump(2) << "\n";
    std::cout << "ablation table: " << (root / "ablation.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-consistency distillation lab"};
    app.require_subcommand(1);
    Options o;
    CLI::App* gen = app.add_subcommand("gen-data", "materialize the video and image datasets");
    CLI::App* teach = app.add_subcommand("train-teacher", "train (or resume) the diffusion teacher");
    CLI::App* dist = app.add_subcommand("distill", "distill the few-step student");
    CLI::App* eval = app.add_subcommand("eval", "sample a student checkpoint and report metrics");
    CLI::App* abl = app.add_subcommand("ablate", "run the objective/mixing/motion ablation grids");
    for (CLI::App* cmd : {gen, teach, dist, eval, abl}) add_common_options(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ExperimentConfig c = resolve_config(*app.get_subcommands().front(), o);
        if (gen->parsed()) return cmd_gen_data(c, o.force);
        if (teach->parsed()) return cmd_train_teacher(c, o.force);
        if (dist->parsed()) return cmd_distill(c);
        if (eval->parsed()) return cmd_eval(c);
        if (abl->parsed()) return cmd_ablate(c);
        return 2;  // unreachable with require_subcommand(1)
    } catch (const ConfigError& e) {
        std::cerr << "mcmlab: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "mcmlab: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "mcmlab: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "mcmlab: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "mcmlab: " << e.what() << "\n";
        return 1;
    }
}
