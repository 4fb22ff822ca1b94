#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "halo/config.hpp"
#include "halo/data.hpp"
#include "halo/fields.hpp"
#include "halo/nn.hpp"
#include "halo/rendering.hpp"

namespace halo {

// JSON has no inf/nan literals; non-finite values are emitted as the strings
// "inf", "-inf", "nan" so reports stay parseable.
nlohmann::json json_number(double v);

// Pinhole scene resolved from the config: training views, held-out views,
// shared bounds (the bounding-sphere radius covers both camera sets).
struct SceneData {
    PosedImageSet train;
    PosedImageSet holdout;
    SceneBounds bounds;
};

SceneData load_scene(const HaloConfig& cfg);

struct LightFieldData {
    LightFieldGrid train;
    LightFieldGrid eval;
    SceneBounds bounds;  // theta_near/theta_far filled
};

LightFieldData load_lightfield_scene(const HaloConfig& cfg);

// Every training pixel as a bounded world ray with its color.
struct RayDataset {
    std::vector<Ray> rays;
    Eigen::Matrix3Xd colors;

    long count() const { return static_cast<long>(rays.size()); }
};

RayDataset build_ray_dataset(const PosedImageSet& views, const SceneBounds& bounds);

// Candidate rays for the empty-space term: even slots revisit training
// pixels, odd slots are fresh rays from the bounding sphere toward the
// central content region. The low field's occupancy gate then decides which
// of them actually count as empty.
Ray sample_pool_ray(const RayDataset& data, const SceneBounds& bounds, long slot, Rng& rng);

// Newline-delimited JSON log sink.
class RunLogger {
public:
    RunLogger() = default;
    RunLogger(const std::filesystem::path& path, bool append);

    void write(const nlohmann::json& line);
    explicit operator bool() const { return out_.is_open(); }

private:
    std::ofstream out_;
};

// Run directory layout: checkpoints/, logs/, renders/, report.json,
// manifest.json, config.json, tune.json.
struct RunPaths {
    std::filesystem::path run_dir;

    std::filesystem::path checkpoints_dir() const { return run_dir / "checkpoints"; }
    std::filesystem::path logs_dir() const { return run_dir / "logs"; }
    std::filesystem::path renders_dir() const { return run_dir / "renders"; }
    std::filesystem::path checkpoint(const std::string& stage) const {
        return checkpoints_dir() / (stage + ".ckpt");
    }
    std::filesystem::path log(const std::string& stage) const {
        return logs_dir() / (stage + ".ndjson");
    }
    std::filesystem::path report() const { return run_dir / "report.json"; }
    std::filesystem::path manifest() const { return run_dir / "manifest.json"; }
    std::filesystem::path config_copy() const { return run_dir / "config.json"; }
    std::filesystem::path tune_result() const { return run_dir / "tune.json"; }

    void ensure_layout() const;
};

struct TrainState {
    Eigen::VectorXd params;
    AdamState adam;
    long iteration = 0;
};

struct StageOutcome {
    TrainState state;
    nlohmann::json report;
};

// Stage runners. Each trains its field, writes <stage>.ckpt plus an ndjson
// log, folds a fragment into report.json, and returns that fragment. With
// resume, training continues from the stage checkpoint and the iteration
// counter never regresses; without it the stage restarts from scratch.
// Missing prerequisite checkpoints abort with a "missing prerequisite
// checkpoint" error.
StageOutcome run_stage_lo(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                          bool resume);
StageOutcome run_stage_ray(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                           bool resume);
StageOutcome run_stage_hi(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths,
                          bool resume);
// Joint light-field training; the returned state holds the point field, the
// checkpoint additionally holds the ray (NELF) field.
StageOutcome run_stage_joint(const HaloConfig& cfg, const LightFieldData& data,
                             const RunPaths& paths, bool resume);

// Frequency selection: short-budget training per candidate scored by the
// spectral criterion; writes tune.json, whose chosen encoding later stage-lo
// runs in the same directory pick up automatically.
nlohmann::json run_tune(const HaloConfig& cfg, const SceneData& scene, const RunPaths& paths);

void update_report(const RunPaths& paths, const std::string& key, const nlohmann::json& fragment);
void write_manifest(const RunPaths& paths, const HaloConfig& cfg, const std::string& command);

RenderedView render_field_view(const PointField& field, const Eigen::VectorXd& params,
                               const Eigen::Matrix4d& pose, double camera_angle_x, int width,
                               int height, const SceneBounds& bounds, const RenderOptions& options);

struct ViewMetrics {
    std::vector<double> psnr;
    std::vector<double> ssim;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

ViewMetrics evaluate_field(const PointField& field, const Eigen::VectorXd& params,
                           const PosedImageSet& views, const SceneBounds& bounds,
                           const RenderOptions& options,
                           std::vector<RenderedView>* renders = nullptr);

// Mean high-field occupancy on pool rays the low field gates as empty; the
// convergence check for empty-space suppression.
struct EmptyAccReport {
    double mean_acc_hi = 0;
    long rays_gated = 0;
    long pool_size = 0;
};

EmptyAccReport measure_empty_acc(const PointField& lo_field, const Eigen::VectorXd& lo_params,
                                 const PointField& hi_field, const Eigen::VectorXd& hi_params,
                                 const RayDataset& data, const SceneBounds& bounds, double tau,
                                 int samples_per_ray, int pool_size, std::uint64_t seed);

// Gated mean absolute error of the ray field against the low field's
// rendered depth over a view set, in world units.
struct DepthDistillEval {
    double mae = 0;
    long used = 0;
    long total = 0;
};

DepthDistillEval evaluate_ray_field(const RayField& ray_field, const Eigen::VectorXd& ray_params,
                                    const PointField& lo_field, const Eigen::VectorXd& lo_params,
                                    const PosedImageSet& views, const SceneBounds& bounds,
                                    int samples_per_ray, double tau);

// EPI rendering: per-pixel composite over midpoint theta samples spanning
// the full [theta_near, theta_far] range (independent of the NELF).
Image render_epi_view(const PointField& field, const Eigen::VectorXd& params,
                      const Eigen::Vector2d& uv, int width, int height, const SceneBounds& bounds,
                      int samples_per_theta);

}  // namespace halo
