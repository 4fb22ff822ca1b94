#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "halo/data.hpp"
#include "halo/encoding.hpp"
#include "halo/fields.hpp"
#include "halo/freq_tuning.hpp"
#include "halo/losses.hpp"

namespace halo {

// Per-stage optimization budget. A seed of 0 means "derive from the global
// seed", so stages stay decorrelated without manual bookkeeping.
struct StageConfig {
    long iterations = 8000;
    int batch_size = 1024;
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    int samples_per_ray = 64;
    EncodingConfig encoding = SinusoidalEncodingConfig{5, 32.0, true};
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
void from_json(const nlohmann::json& j, StageConfig& c);

// Linear decay of the joint-training angle window from 1 to alpha_end over
// decay_iterations, flat afterwards.
struct JointScheduleConfig {
    double alpha_end = 0.5;
    long decay_iterations = 20000;

    void validate() const;
};

void to_json(nlohmann::json& j, const JointScheduleConfig& c);
void from_json(const nlohmann::json& j, JointScheduleConfig& c);

double alpha_at(const JointScheduleConfig& schedule, long iteration);

struct RenderingSection {
    int eval_samples_per_ray = 64;
    bool white_background = true;
    double depth_window_fraction = 0.2;  // depth-guided window over [t_near, t_far]
    double uniform_fraction = 0.25;      // samples kept outside the window

    void validate() const;
};

void to_json(nlohmann::json& j, const RenderingSection& c);
void from_json(const nlohmann::json& j, RenderingSection& c);

// Scene source. "procedural" renders an analytic scene in memory, "blender"
// loads a transforms_<split>.json dataset, "lightfield" loads (or fabricates,
// when dir is empty) a camera-lattice grid for the EPI variant.
struct SceneSection {
    std::string type = "procedural";

    ProceduralSceneSpec procedural;
    double holdout_azimuth_offset_deg = 45.0;
    int holdout_views = 4;

    std::string blender_dir;
    std::string train_split = "train";
    std::string eval_split = "test";
    std::vector<std::string> subset;       // training view names; empty keeps all
    std::vector<std::string> eval_subset;  // evaluation view names; empty keeps all

    std::string lightfield_dir;
    int lattice = 17;
    std::vector<std::pair<int, int>> corner_indices = {{4, 4}, {4, 12}, {12, 4}, {12, 12}};
    std::vector<std::pair<int, int>> eval_indices = {{8, 6}, {8, 10}, {6, 8}, {10, 8}};
    ProceduralLightFieldSpec lightfield;

    void validate() const;
};

void to_json(nlohmann::json& j, const SceneSection& c);
void from_json(const nlohmann::json& j, SceneSection& c);

std::vector<EncodingGroup> default_epi_pos_groups();
std::vector<EncodingGroup> default_epi_dir_groups();
std::vector<EncodingGroup> default_epi_ray_groups();

// Network shapes shared across stages. Stage encodings live in StageConfig;
// everything else about the two point fields and the two ray fields is here.
struct ArchSection {
    int point_depth = 8;
    int point_width = 256;
    int point_skip = 4;
    int ray_depth = 6;
    int ray_width = 128;
    int ray_skip = 0;
    EncodingConfig dir_encoding = SinusoidalEncodingConfig{4, 1.0, true};
    std::vector<EncodingGroup> epi_pos_groups = default_epi_pos_groups();  // (s', t') then theta
    std::vector<EncodingGroup> epi_dir_groups = default_epi_dir_groups();  // (u, v)
    std::vector<EncodingGroup> epi_ray_groups = default_epi_ray_groups();  // (u, v, s, t)

    void validate() const;
};

void to_json(nlohmann::json& j, const ArchSection& c);
void from_json(const nlohmann::json& j, ArchSection& c);

std::vector<EncodingConfig> default_tune_candidates();

// Frequency selection: short-budget training per candidate plus the spectral
// criterion that scores the result.
struct TuneSection {
    SpectralCriterionConfig criterion;
    long iterations = 8000;
    int batch_size = 1024;
    int samples_per_ray = 64;
    double lr_start = 5e-4;
    double lr_end = 5e-5;
    std::vector<EncodingConfig> candidates = default_tune_candidates();
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TuneSection& c);
void from_json(const nlohmann::json& j, TuneSection& c);

struct HaloConfig {
    std::string out_dir = "runs/halo";
    std::uint64_t seed = 1;

    SceneSection scene;
    RenderingSection rendering;
    ArchSection arch;
    LossWeights losses;

    StageConfig stage_lo;
    StageConfig stage_ray{.iterations = 10000};
    StageConfig stage_hi{.iterations = 120000,
                         .encoding = SinusoidalEncodingConfig{10, 1.0, true}};
    StageConfig stage_joint{.iterations = 30000};  // encoding unused; EPI groups come from arch
    JointScheduleConfig joint_schedule;
    TuneSection tune;

    void validate() const;

    PointFieldConfig lo_field_config() const;
    PointFieldConfig hi_field_config() const;
    PointFieldConfig hi_field_config(const EncodingConfig& pos_encoding) const;
    RayFieldConfig ray_field_config() const;
    PointFieldConfig epi_point_field_config() const;
    RayFieldConfig epi_ray_field_config() const;

    // Compact profile sized for a single CPU core; the acceptance scene.
    static HaloConfig desk_procedural();
    static HaloConfig desk_lightfield();
};

void to_json(nlohmann::json& j, const HaloConfig& c);
void from_json(const nlohmann::json& j, HaloConfig& c);

HaloConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const HaloConfig& cfg);

// Stage seed: explicit when nonzero, otherwise mixed from the global seed and
// a per-stage salt.
std::uint64_t stage_seed(const HaloConfig& cfg, const StageConfig& stage, std::uint64_t salt);

inline constexpr std::uint64_t kSaltLo = 1;
inline constexpr std::uint64_t kSaltRay = 2;
inline constexpr std::uint64_t kSaltHi = 3;
inline constexpr std::uint64_t kSaltJoint = 4;
inline constexpr std::uint64_t kSaltTune = 5;

// FNV-1a over the canonical JSON dump; stable across runs and platforms.
std::uint64_t config_hash(const HaloConfig& cfg);
std::string config_hash_hex(const HaloConfig& cfg);

}  // namespace halo
