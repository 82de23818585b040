#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcm/adversarial.hpp"
#include "mcm/consistency.hpp"
#include "mcm/diffusion.hpp"
#include "mcm/motion.hpp"

namespace mcm {

// Self-describing binary container: an 8-byte magic, a little-endian u64
// header length, a JSON header (version, kind, arch, schedule, seed, step,
// kind-specific meta, and the blob directory), then the raw double payloads
// in directory order. Everything a run needs to continue bit-identically is
// stored as named flat vectors.
struct Checkpoint {
    long version = 1;
    std::string kind;         // "teacher" | "student" | "discriminator"
    nlohmann::json arch;      // geometry descriptor, layout depends on kind
    nlohmann::json schedule;  // defining scalars; empty for the discriminator
    nlohmann::json meta;      // kind-specific scalars (EMA rates, head sizes)
    std::uint64_t seed = 0;
    long step = 0;
    std::vector<std::pair<std::string, Tensor>> blobs;

    bool has_blob(const std::string& name) const;
    const Tensor& blob(const std::string& name) const;  // IoError when absent
};

void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

nlohmann::json to_json(const DenoiserArch& a);
nlohmann::json to_json(const DiscArch& a);
nlohmann::json to_json(const NoiseSchedule& s);
DenoiserArch denoiser_arch_from_json(const nlohmann::json& j);
DiscArch disc_arch_from_json(const nlohmann::json& j);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

// Teacher: flat parameter vector plus the optimizer moments (when given),
// so training can resume mid-run bit-identically.
Checkpoint teacher_checkpoint(const Denoiser& d, const NoiseSchedule& sched, const nn::Adam* opt,
                              std::uint64_t seed, long step);
std::unique_ptr<Denoiser> load_teacher(const Checkpoint& c, NoiseSchedule* sched_out = nullptr);
TeacherResume teacher_resume_state(const Checkpoint& c);  // IoError without optimizer blobs

// Student: backbone + EMA target, plus the motion head pair when one exists.
Checkpoint student_checkpoint(const ConsistencyStudent& s, const MotionHead* head,
                              std::uint64_t seed, long step);
struct StudentState {
    std::unique_ptr<ConsistencyStudent> student;
    std::unique_ptr<MotionHead> head;  // null when the checkpoint carries none
};
StudentState load_student(const Checkpoint& c);

// Discriminator: trainable heads only; the frozen encoder is rebuilt from
// the stored seed.
Checkpoint discriminator_checkpoint(const Discriminator& d, std::uint64_t seed, long step);
std::unique_ptr<Discriminator> load_discriminator(const Checkpoint& c);

}  // namespace mcm
