#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "mcm/config.hpp"
#include "mcm/errors.hpp"

using namespace mcm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("default configuration is self-consistent and round-trips through JSON") {
    ExperimentConfig c;
    CHECK_NOTHROW(validate(c));

    nlohmann::json j = to_json(c);
    ExperimentConfig back = config_from_json(j);
    CHECK(to_json(back) == j);

    TempFile f("test_config_roundtrip.json");
    save_config(c, f.path);
    ExperimentConfig loaded = load_config(f.path);
    CHECK(to_json(loaded) == j);
}

TEST_CASE("motion kind names cover every kind and reject strangers") {
    for (MotionKind k : {MotionKind::raw, MotionKind::diff, MotionKind::corr,
                         MotionKind::low_freq, MotionKind::high_freq, MotionKind::learnable})
        CHECK(motion_kind_from_name(motion_kind_name(k)) == k);
    CHECK(motion_kind_name(MotionKind::low_freq) == "lowfreq");
    CHECK_THROWS_AS(motion_kind_from_name("speed"), ConfigError);
}

TEST_CASE("partial files override only the keys they mention") {
    nlohmann::json j = {{"schema_version", 1},
                        {"seed", 5},
                        {"distill", {{"lambda_real", 0.25}, {"motion_kind", "corr"}}}};
    ExperimentConfig c = config_from_json(j);
    CHECK(c.seed == 5);
    CHECK(c.distill.lambda_real == 0.25);
    CHECK(c.distill.motion_kind == MotionKind::corr);
    // Untouched keys keep their defaults.
    ExperimentConfig d;
    CHECK(c.distill.lambda_adv == d.distill.lambda_adv);
    CHECK(c.teacher.steps == d.teacher.steps);
    // The experiment seed is the single source of truth for the stage seeds.
    CHECK(c.teacher.seed == 5);
    CHECK(c.distill.seed == 5);
}

TEST_CASE("schema versioning is mandatory and checked") {
    CHECK_THROWS_AS(config_from_json(nlohmann::json::object()), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"schema_version", 2}}), ConfigError);
    CHECK_NOTHROW(config_from_json({{"schema_version", 1}}));
}

TEST_CASE("unknown keys fail loudly at every nesting level") {
    CHECK_THROWS_AS(config_from_json({{"schema_version", 1}, {"sede", 4}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"schema_version", 1}, {"data", {{"frames", 4}, {"blur", 1.0}}}}),
                    ConfigError);
    CHECK_THROWS_AS(
        config_from_json({{"schema_version", 1}, {"distill", {{"cd", {{"solverpoints", 9}}}}}}),
        ConfigError);
    CHECK_THROWS_AS(
        config_from_json({{"schema_version", 1}, {"teacher", {{"arch", {{"frames", 4}, {"depth", 3}}}}}}),
        ConfigError);
    // Wrong value types are named, not coerced.
    CHECK_THROWS_AS(config_from_json({{"schema_version", 1}, {"seed", "many"}}), ConfigError);
    CHECK_THROWS_AS(
        config_from_json({{"schema_version", 1}, {"data", {{"region", {1, 2, 3}}}}}),
        ConfigError);
}

TEST_CASE("cross-field validation names the offending relation") {
    ExperimentConfig c;

    SUBCASE("teacher geometry must match the data recipe") {
        c.teacher.arch.height = 8;
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("class vocabularies must agree") {
        c.data.num_classes = 4;
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("schedule lengths must agree") {
        c.teacher.num_train_steps = 500;
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("watermark region must fit the frame") {
        c.data.region = {14, 14, 6, 4};
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("solver ladder must be shorter than the schedule") {
        c.distill.cd.solver_points = 1000;
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("step counts limited to the supported ladder sizes") {
        c.report_step_counts = {1, 3};
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
    SUBCASE("counts must be positive") {
        c.video_count = 0;
        CHECK_THROWS_AS(validate(c), ConfigError);
    }
}

TEST_CASE("file-level failures map to the right error types") {
    CHECK_THROWS_AS(load_config("no_such_config.json"), IoError);

    TempFile f("test_config_invalid.json");
    {
        std::ofstream out(f.path);
        out << "{ this is not json";
    }
    CHECK_THROWS_AS(load_config(f.path), ConfigError);

    ExperimentConfig c;
    CHECK_THROWS_AS(save_config(c, "no_such_dir_xyz/config.json"), IoError);
}
