#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mcm/diffusion.hpp"
#include "mcm/distillation.hpp"

namespace mcm {

std::string motion_kind_name(MotionKind k);
MotionKind motion_kind_from_name(const std::string& name);  // ConfigError on unknown

// One file drives a whole experiment: dataset recipe, teacher training,
// distillation, and report settings. A run is reproducible from this plus
// the seed alone. JSON layout mirrors the struct; unknown keys are
// rejected so typos fail loudly instead of silently using a default.
struct ExperimentConfig {
    long schema_version = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    DataParams data;
    long video_count = 64;   // low-quality clips
    long image_count = 256;  // high-quality stills

    TeacherConfig teacher;
    DistillConfig distill;

    long report_samples = 64;  // per step count in cmd_eval
    std::vector<long> report_step_counts{1, 2, 4, 8};
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);  // IoError / ConfigError
void save_config(const ExperimentConfig& c, const std::string& path);

// Cross-field checks: the teacher geometry must match the dataset recipe,
// counts must be positive, the schedule must be long enough for the solver
// ladder. Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& c);

}  // namespace mcm
