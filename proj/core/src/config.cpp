#include "halo/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <variant>

#include "halo/random.hpp"

namespace halo {

namespace {

void validate_encoding(const EncodingConfig& cfg) {
    std::visit([](const auto& e) { e.validate(); }, cfg);
}

void validate_groups(const std::vector<EncodingGroup>& groups, int expected_dims,
                     const char* what) {
    int dims = 0;
    for (const auto& g : groups) {
        if (g.dims < 1) throw std::invalid_argument(std::string(what) + ": group dims must be >= 1");
        validate_encoding(g.cfg);
        dims += g.dims;
    }
    if (dims != expected_dims) {
        throw std::invalid_argument(std::string(what) + ": encoding groups must cover " +
                                    std::to_string(expected_dims) + " input dims, got " +
                                    std::to_string(dims));
    }
}

}  // namespace

void StageConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("stage: iterations must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("stage: batch_size must be >= 1");
    if (!(lr_start > 0) || !(lr_end > 0)) {
        throw std::invalid_argument("stage: learning rates must be > 0");
    }
    if (samples_per_ray < 1) throw std::invalid_argument("stage: samples_per_ray must be >= 1");
    validate_encoding(encoding);
}

void to_json(nlohmann::json& j, const StageConfig& c) {
    j = nlohmann::json{{"iterations", c.iterations},
                       {"batch_size", c.batch_size},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"samples_per_ray", c.samples_per_ray},
                       {"encoding", c.encoding},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, StageConfig& c) {
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
    c.samples_per_ray = j.value("samples_per_ray", c.samples_per_ray);
    if (j.contains("encoding")) j.at("encoding").get_to(c.encoding);
    c.seed = j.value("seed", c.seed);
}

void JointScheduleConfig::validate() const {
    if (!(alpha_end > 0 && alpha_end <= 1)) {
        throw std::invalid_argument("joint schedule: alpha_end must be in (0, 1]");
    }
    if (decay_iterations < 1) {
        throw std::invalid_argument("joint schedule: decay_iterations must be >= 1");
    }
}

void to_json(nlohmann::json& j, const JointScheduleConfig& c) {
    j = nlohmann::json{{"alpha_end", c.alpha_end}, {"decay_iterations", c.decay_iterations}};
}

void from_json(const nlohmann::json& j, JointScheduleConfig& c) {
    c.alpha_end = j.value("alpha_end", c.alpha_end);
    c.decay_iterations = j.value("decay_iterations", c.decay_iterations);
}

double alpha_at(const JointScheduleConfig& schedule, long iteration) {
    schedule.validate();
    if (iteration <= 0) return 1.0;
    const double f =
        std::min(1.0, static_cast<double>(iteration) / static_cast<double>(schedule.decay_iterations));
    return 1.0 + (schedule.alpha_end - 1.0) * f;
}

void RenderingSection::validate() const {
    if (eval_samples_per_ray < 1) {
        throw std::invalid_argument("rendering: eval_samples_per_ray must be >= 1");
    }
    if (!(depth_window_fraction > 0 && depth_window_fraction <= 1)) {
        throw std::invalid_argument("rendering: depth_window_fraction must be in (0, 1]");
    }
    if (!(uniform_fraction >= 0 && uniform_fraction <= 1)) {
        throw std::invalid_argument("rendering: uniform_fraction must be in [0, 1]");
    }
}

void to_json(nlohmann::json& j, const RenderingSection& c) {
    j = nlohmann::json{{"eval_samples_per_ray", c.eval_samples_per_ray},
                       {"white_background", c.white_background},
                       {"depth_window_fraction", c.depth_window_fraction},
                       {"uniform_fraction", c.uniform_fraction}};
}

void from_json(const nlohmann::json& j, RenderingSection& c) {
    c.eval_samples_per_ray = j.value("eval_samples_per_ray", c.eval_samples_per_ray);
    c.white_background = j.value("white_background", c.white_background);
    c.depth_window_fraction = j.value("depth_window_fraction", c.depth_window_fraction);
    c.uniform_fraction = j.value("uniform_fraction", c.uniform_fraction);
}

void SceneSection::validate() const {
    if (type == "procedural") {
        procedural.validate();
        if (holdout_views < 0) throw std::invalid_argument("scene: holdout_views must be >= 0");
    } else if (type == "blender") {
        if (blender_dir.empty()) throw std::invalid_argument("scene: blender_dir is required");
        if (train_split.empty() || eval_split.empty()) {
            throw std::invalid_argument("scene: split names must be non-empty");
        }
    } else if (type == "lightfield") {
        if (lattice < 2) throw std::invalid_argument("scene: lattice must be >= 2");
        if (corner_indices.empty()) {
            throw std::invalid_argument("scene: corner_indices must be non-empty");
        }
        if (lightfield_dir.empty()) lightfield.validate();
    } else {
        throw std::invalid_argument("scene: unknown type '" + type + "'");
    }
}

void to_json(nlohmann::json& j, const SceneSection& c) {
    j = nlohmann::json{{"type", c.type},
                       {"procedural", c.procedural},
                       {"holdout_azimuth_offset_deg", c.holdout_azimuth_offset_deg},
                       {"holdout_views", c.holdout_views},
                       {"blender_dir", c.blender_dir},
                       {"train_split", c.train_split},
                       {"eval_split", c.eval_split},
                       {"subset", c.subset},
                       {"eval_subset", c.eval_subset},
                       {"lightfield_dir", c.lightfield_dir},
                       {"lattice", c.lattice},
                       {"corner_indices", c.corner_indices},
                       {"eval_indices", c.eval_indices},
                       {"lightfield", c.lightfield}};
}

void from_json(const nlohmann::json& j, SceneSection& c) {
    c.type = j.value("type", c.type);
    if (j.contains("procedural")) j.at("procedural").get_to(c.procedural);
    c.holdout_azimuth_offset_deg = j.value("holdout_azimuth_offset_deg", c.holdout_azimuth_offset_deg);
    c.holdout_views = j.value("holdout_views", c.holdout_views);
    c.blender_dir = j.value("blender_dir", c.blender_dir);
    c.train_split = j.value("train_split", c.train_split);
    c.eval_split = j.value("eval_split", c.eval_split);
    c.subset = j.value("subset", c.subset);
    c.eval_subset = j.value("eval_subset", c.eval_subset);
    c.lightfield_dir = j.value("lightfield_dir", c.lightfield_dir);
    c.lattice = j.value("lattice", c.lattice);
    c.corner_indices = j.value("corner_indices", c.corner_indices);
    c.eval_indices = j.value("eval_indices", c.eval_indices);
    if (j.contains("lightfield")) j.at("lightfield").get_to(c.lightfield);
}

std::vector<EncodingGroup> default_epi_pos_groups() {
    return {{GaussianEncodingConfig{64.0, 10, 901}, 2},
            {GaussianEncodingConfig{8.0, 5, 902}, 1}};
}

std::vector<EncodingGroup> default_epi_dir_groups() {
    return {{GaussianEncodingConfig{64.0, 10, 903}, 2}};
}

std::vector<EncodingGroup> default_epi_ray_groups() {
    return {{GaussianEncodingConfig{2.0, 16, 904}, 4}};
}

void ArchSection::validate() const {
    if (point_depth < 1 || ray_depth < 1) throw std::invalid_argument("arch: depth must be >= 1");
    if (point_width < 1 || ray_width < 1) throw std::invalid_argument("arch: width must be >= 1");
    if (point_skip < 0 || ray_skip < 0) throw std::invalid_argument("arch: skip must be >= 0");
    validate_encoding(dir_encoding);
    validate_groups(epi_pos_groups, 3, "arch epi_pos_groups");
    validate_groups(epi_dir_groups, 2, "arch epi_dir_groups");
    validate_groups(epi_ray_groups, 4, "arch epi_ray_groups");
}

void to_json(nlohmann::json& j, const ArchSection& c) {
    j = nlohmann::json{{"point_depth", c.point_depth},
                       {"point_width", c.point_width},
                       {"point_skip", c.point_skip},
                       {"ray_depth", c.ray_depth},
                       {"ray_width", c.ray_width},
                       {"ray_skip", c.ray_skip},
                       {"dir_encoding", c.dir_encoding},
                       {"epi_pos_groups", c.epi_pos_groups},
                       {"epi_dir_groups", c.epi_dir_groups},
                       {"epi_ray_groups", c.epi_ray_groups}};
}

void from_json(const nlohmann::json& j, ArchSection& c) {
    c.point_depth = j.value("point_depth", c.point_depth);
    c.point_width = j.value("point_width", c.point_width);
    c.point_skip = j.value("point_skip", c.point_skip);
    c.ray_depth = j.value("ray_depth", c.ray_depth);
    c.ray_width = j.value("ray_width", c.ray_width);
    c.ray_skip = j.value("ray_skip", c.ray_skip);
    if (j.contains("dir_encoding")) j.at("dir_encoding").get_to(c.dir_encoding);
    if (j.contains("epi_pos_groups")) j.at("epi_pos_groups").get_to(c.epi_pos_groups);
    if (j.contains("epi_dir_groups")) j.at("epi_dir_groups").get_to(c.epi_dir_groups);
    if (j.contains("epi_ray_groups")) j.at("epi_ray_groups").get_to(c.epi_ray_groups);
}

std::vector<EncodingConfig> default_tune_candidates() {
    return {SinusoidalEncodingConfig{10, 1.0, true}, SinusoidalEncodingConfig{8, 1.0, true},
            SinusoidalEncodingConfig{6, 1.0, true}, SinusoidalEncodingConfig{5, 1.0, true},
            SinusoidalEncodingConfig{4, 1.0, true}};
}

void TuneSection::validate() const {
    criterion.validate();
    if (iterations < 1) throw std::invalid_argument("tune: iterations must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("tune: batch_size must be >= 1");
    if (samples_per_ray < 1) throw std::invalid_argument("tune: samples_per_ray must be >= 1");
    if (!(lr_start > 0) || !(lr_end > 0)) throw std::invalid_argument("tune: learning rates must be > 0");
    if (candidates.empty()) throw std::invalid_argument("tune: candidate list must be non-empty");
    for (const auto& c : candidates) validate_encoding(c);
}

void to_json(nlohmann::json& j, const TuneSection& c) {
    j = nlohmann::json{{"criterion", c.criterion},
                       {"iterations", c.iterations},
                       {"batch_size", c.batch_size},
                       {"samples_per_ray", c.samples_per_ray},
                       {"lr_start", c.lr_start},
                       {"lr_end", c.lr_end},
                       {"candidates", c.candidates},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TuneSection& c) {
    if (j.contains("criterion")) j.at("criterion").get_to(c.criterion);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.samples_per_ray = j.value("samples_per_ray", c.samples_per_ray);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
    if (j.contains("candidates")) j.at("candidates").get_to(c.candidates);
    c.seed = j.value("seed", c.seed);
}

void HaloConfig::validate() const {
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be non-empty");
    scene.validate();
    rendering.validate();
    arch.validate();
    losses.validate();
    stage_lo.validate();
    stage_ray.validate();
    stage_hi.validate();
    stage_joint.validate();
    joint_schedule.validate();
    tune.validate();
}

PointFieldConfig HaloConfig::lo_field_config() const {
    PointFieldConfig f;
    f.pos_encoding = single_group(stage_lo.encoding, 3);
    f.dir_encoding = single_group(arch.dir_encoding, 3);
    f.depth = arch.point_depth;
    f.width = arch.point_width;
    f.skip = arch.point_skip;
    return f;
}

PointFieldConfig HaloConfig::hi_field_config() const { return hi_field_config(stage_hi.encoding); }

PointFieldConfig HaloConfig::hi_field_config(const EncodingConfig& pos_encoding) const {
    PointFieldConfig f;
    f.pos_encoding = single_group(pos_encoding, 3);
    f.dir_encoding = single_group(arch.dir_encoding, 3);
    f.depth = arch.point_depth;
    f.width = arch.point_width;
    f.skip = arch.point_skip;
    return f;
}

RayFieldConfig HaloConfig::ray_field_config() const {
    RayFieldConfig f;
    f.encoding = single_group(stage_ray.encoding, 6);
    f.depth = arch.ray_depth;
    f.width = arch.ray_width;
    f.skip = arch.ray_skip;
    return f;
}

PointFieldConfig HaloConfig::epi_point_field_config() const {
    PointFieldConfig f;
    f.pos_encoding = arch.epi_pos_groups;
    f.dir_encoding = arch.epi_dir_groups;
    f.depth = arch.point_depth;
    f.width = arch.point_width;
    f.skip = arch.point_skip;
    return f;
}

RayFieldConfig HaloConfig::epi_ray_field_config() const {
    RayFieldConfig f;
    f.encoding = arch.epi_ray_groups;
    f.depth = arch.ray_depth;
    f.width = arch.ray_width;
    f.skip = arch.ray_skip;
    return f;
}

HaloConfig HaloConfig::desk_procedural() {
    HaloConfig c;
    c.out_dir = "runs/desk";
    c.seed = 1;

    c.scene.type = "procedural";
    c.scene.procedural.views = 4;
    c.scene.procedural.width = 100;
    c.scene.procedural.height = 100;
    c.scene.holdout_azimuth_offset_deg = 45.0;
    c.scene.holdout_views = 4;

    c.rendering.eval_samples_per_ray = 48;

    c.arch.point_depth = 4;
    c.arch.point_width = 128;
    c.arch.point_skip = 0;
    c.arch.ray_depth = 4;
    c.arch.ray_width = 64;
    c.arch.ray_skip = 0;

    c.stage_lo = StageConfig{.iterations = 2000,
                             .batch_size = 256,
                             .lr_start = 2e-3,
                             .lr_end = 2e-4,
                             .samples_per_ray = 40,
                             .encoding = SinusoidalEncodingConfig{4, 1.0, true}};
    c.stage_ray = StageConfig{.iterations = 6000,
                              .batch_size = 256,
                              .samples_per_ray = 40,
                              .encoding = SinusoidalEncodingConfig{4, 1.0, true}};
    c.stage_hi = StageConfig{.iterations = 4000,
                             .batch_size = 256,
                             .samples_per_ray = 40,
                             .encoding = SinusoidalEncodingConfig{10, 1.0, true}};
    c.stage_joint = StageConfig{.iterations = 1500, .batch_size = 256, .samples_per_ray = 32};
    c.joint_schedule = JointScheduleConfig{.alpha_end = 0.5, .decay_iterations = 1000};

    c.tune.iterations = 600;
    c.tune.batch_size = 256;
    c.tune.samples_per_ray = 32;
    c.tune.criterion.num_pairs = 3;
    c.tune.criterion.render_resolution = 48;
    return c;
}

HaloConfig HaloConfig::desk_lightfield() {
    HaloConfig c = desk_procedural();
    c.out_dir = "runs/desk_lf";
    c.scene.type = "lightfield";
    c.scene.lightfield_dir.clear();
    c.scene.lattice = c.scene.lightfield.lattice;
    c.arch.epi_pos_groups = {{GaussianEncodingConfig{16.0, 8, 901}, 2},
                             {GaussianEncodingConfig{4.0, 4, 902}, 1}};
    c.arch.epi_dir_groups = {{GaussianEncodingConfig{8.0, 6, 903}, 2}};
    c.arch.epi_ray_groups = {{GaussianEncodingConfig{2.0, 8, 904}, 4}};
    return c;
}

void to_json(nlohmann::json& j, const HaloConfig& c) {
    j = nlohmann::json{{"out_dir", c.out_dir},
                       {"seed", c.seed},
                       {"scene", c.scene},
                       {"rendering", c.rendering},
                       {"arch", c.arch},
                       {"losses", c.losses},
                       {"stages",
                        nlohmann::json{{"lo", c.stage_lo},
                                       {"ray", c.stage_ray},
                                       {"hi", c.stage_hi},
                                       {"joint", c.stage_joint}}},
                       {"joint_schedule", c.joint_schedule},
                       {"tune", c.tune}};
}

void from_json(const nlohmann::json& j, HaloConfig& c) {
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    if (j.contains("scene")) j.at("scene").get_to(c.scene);
    if (j.contains("rendering")) j.at("rendering").get_to(c.rendering);
    if (j.contains("arch")) j.at("arch").get_to(c.arch);
    if (j.contains("losses")) j.at("losses").get_to(c.losses);
    if (j.contains("stages")) {
        const auto& s = j.at("stages");
        if (s.contains("lo")) s.at("lo").get_to(c.stage_lo);
        if (s.contains("ray")) s.at("ray").get_to(c.stage_ray);
        if (s.contains("hi")) s.at("hi").get_to(c.stage_hi);
        if (s.contains("joint")) s.at("joint").get_to(c.stage_joint);
    }
    if (j.contains("joint_schedule")) j.at("joint_schedule").get_to(c.joint_schedule);
    if (j.contains("tune")) j.at("tune").get_to(c.tune);
}

HaloConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("cannot parse config file " + path.string() + ": " + e.what());
    }
    HaloConfig cfg;
    j.get_to(cfg);
    cfg.validate();
    return cfg;
}

void save_config(const std::filesystem::path& path, const HaloConfig& cfg) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path.string());
    nlohmann::json j = cfg;
    out << j.dump(2) << "\n";
}

std::uint64_t stage_seed(const HaloConfig& cfg, const StageConfig& stage, std::uint64_t salt) {
    return stage.seed != 0 ? stage.seed : mix_seed(cfg.seed, salt);
}

std::uint64_t config_hash(const HaloConfig& cfg) {
    const nlohmann::json j = cfg;
    const std::string dump = j.dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (const unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash_hex(const HaloConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
    return std::string(buf);
}

}  // namespace halo
