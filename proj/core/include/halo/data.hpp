#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "halo/fields.hpp"
#include "halo/image.hpp"
#include "halo/random.hpp"

namespace halo {

struct PosedImageSet {
    std::vector<Image> images;  // H x W x 3 in [0,1]
    std::vector<Eigen::Matrix4d> poses;
    std::vector<std::string> names;
    double camera_angle_x = 0;
    SceneBounds bounds;
    // procedural scenes also carry analytic references per view
    std::vector<Image> depths;     // 1 channel, distance along the pixel ray
    std::vector<Image> hit_masks;  // 1 channel, 1 where the ray hits content

    int count() const { return static_cast<int>(images.size()); }
    int width() const { return images.empty() ? 0 : images.front().width; }
    int height() const { return images.empty() ? 0 : images.front().height; }
    void validate() const;
};

// Reads transforms_<split>.json (Blender-synthetic layout). Frames load in
// lexicographic file-name order; a non-empty subset keeps exactly the named
// frames (names like "r_2.png") and rejects unknown ones. Alpha composites
// over white. The bounding sphere is 1.1x the farthest camera distance.
PosedImageSet load_blender(const std::filesystem::path& dir, const std::string& split,
                           const std::vector<std::string>& subset_names = {});

struct LightFieldGrid {
    int lattice = 17;
    std::vector<Image> images;
    std::vector<std::pair<int, int>> indices;  // (row, col) on the lattice
    std::vector<Eigen::Vector2d> uv;           // camera-plane coords in [-1,1]^2
    SceneBounds bounds;                        // theta_near/theta_far filled in

    int count() const { return static_cast<int>(images.size()); }
    int width() const { return images.empty() ? 0 : images.front().width; }
    int height() const { return images.empty() ? 0 : images.front().height; }
};

// Grid index to camera-plane coordinates: column maps to u, row to v, the
// lattice center to (0,0).
Eigen::Vector2d lightfield_uv(int row, int col, int lattice);

// Pixel center to image-plane coordinates in [-1,1]^2.
Eigen::Vector2d lightfield_st(int x, int y, int width, int height);

// Loads `<prefix>_<row>_<col>.png` images for the two index lists from one
// directory (train grid from corner_indices, eval grid from eval_indices).
std::pair<LightFieldGrid, LightFieldGrid> load_lightfield_grid(
    const std::filesystem::path& dir, int lattice,
    const std::vector<std::pair<int, int>>& corner_indices,
    const std::vector<std::pair<int, int>>& eval_indices);

void save_lightfield_grid(const std::filesystem::path& dir, const LightFieldGrid& grid,
                          const std::string& prefix);

// Analytic test scene: exact ray-primitive intersections, Lambertian
// shading, white background, per-view ground-truth depth and hit masks.
struct ProceduralSceneSpec {
    std::string primitive = "checker_sphere";  // or "textured_plane"
    int views = 8;
    int width = 100;
    int height = 100;
    double camera_distance = 4.0;
    double elevation_deg = 30.0;
    double azimuth_offset_deg = 0.0;  // shift the view ring (held-out sets)
    double camera_angle_x = 0.6911112;
    double sphere_radius = 1.0;
    int checker_count = 8;
    double plane_z = -1.0;
    double plane_extent = 2.0;
    double t_near = 2.0;
    double t_far = 6.0;
    double radius_scale = 1.1;  // bounding sphere over camera distance

    void validate() const;
};

void to_json(nlohmann::json& j, const ProceduralSceneSpec& s);
void from_json(const nlohmann::json& j, ProceduralSceneSpec& s);

PosedImageSet make_procedural_scene(const ProceduralSceneSpec& spec, std::uint64_t seed);

// Two fronto-parallel textured planes behind the st plane; the front one is
// striped with gaps so rays see both depths. Exactly consistent with the
// two-plane ray model used by the EPI parameterization.
struct ProceduralLightFieldSpec {
    int lattice = 17;
    int width = 32;
    int height = 32;
    double z_back = 2.5;
    double z_front = 1.5;
    double stripe_period = 0.5;  // front-plane stripe spacing in world units
    int checker_count = 6;       // back-plane checker cells across its extent

    void validate() const;
};

void to_json(nlohmann::json& j, const ProceduralLightFieldSpec& s);
void from_json(const nlohmann::json& j, ProceduralLightFieldSpec& s);

LightFieldGrid make_procedural_lightfield(const ProceduralLightFieldSpec& spec,
                                          std::uint64_t seed);

// EPI slope angle of a fronto-parallel plane at depth z > 1 behind the
// image plane: theta = atan(-z / (z - 1)), so nearer content has the more
// negative angle and angles increase with depth.
double epi_theta_of_depth(double z);

// Camera helpers (world up is +z; cameras look at the scene center).
Eigen::Matrix4d look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                             const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ());
Eigen::Matrix4d orbit_pose(double azimuth_rad, double elevation_rad, double distance);
Eigen::Matrix4d rotate_about_z(const Eigen::Matrix4d& pose, double angle_rad);

// Random poses on the training orbit, for spectral view pairs.
struct OrbitPoseSampler {
    double distance = 4.0;
    double elevation_min_deg = 25.0;
    double elevation_max_deg = 35.0;
    double azimuth_min_deg = 0.0;
    double azimuth_max_deg = 360.0;

    Eigen::Matrix4d sample(Rng& rng) const;
};

OrbitPoseSampler fit_orbit_sampler(const PosedImageSet& data);

}  // namespace halo
