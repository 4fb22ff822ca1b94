#include "halo/data.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "halo/rendering.hpp"

namespace halo {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_rigid_pose(const Eigen::Matrix4d& m, const std::string& what) {
    const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::runtime_error(what + ": pose rotation is not orthonormal");
}

Image ensure_rgb(Image img) {
    img = composite_over_white(std::move(img));
    if (img.channels == 3) return img;
    if (img.channels == 1) {
        Image out(img.width, img.height, 3);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, 0);
        return out;
    }
    throw std::runtime_error("unsupported channel count in dataset image");
}

struct Shading {
    Eigen::Vector3d light = Eigen::Vector3d(0.4, 0.25, 0.85).normalized();
    double ambient = 0.35;
    double diffuse = 0.65;

    double factor(const Eigen::Vector3d& normal) const {
        return ambient + diffuse * std::max(0.0, normal.dot(light));
    }
};

int wrapped_cell(double angle, double phase, int cells) {
    const double a = std::fmod(angle + phase + 3.0 * kPi, 2.0 * kPi) / (2.0 * kPi);
    return static_cast<int>(std::floor(a * cells)) % cells;
}

}  // namespace

void PosedImageSet::validate() const {
    if (images.empty()) throw std::invalid_argument("image set is empty");
    if (poses.size() != images.size() || names.size() != images.size())
        throw std::invalid_argument("image/pose/name counts disagree");
    for (const auto& img : images)
        if (!img.same_shape(images.front()))
            throw std::invalid_argument("images in a set must share one shape");
    if (!(camera_angle_x > 0) || !(camera_angle_x < kPi))
        throw std::invalid_argument("camera_angle_x must lie in (0, pi)");
    for (const auto& p : poses) check_rigid_pose(p, "image set");
    bounds.validate();
}

PosedImageSet load_blender(const std::filesystem::path& dir, const std::string& split,
                           const std::vector<std::string>& subset_names) {
    const auto json_path = dir / ("transforms_" + split + ".json");
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open " + json_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed transforms JSON: " + std::string(e.what()));
    }

    struct Frame {
        std::string name;
        std::filesystem::path file;
        Eigen::Matrix4d pose;
    };
    std::vector<Frame> frames;
    for (const auto& f : j.at("frames")) {
        Frame fr;
        std::string rel = f.at("file_path").get<std::string>();
        if (rel.rfind("./", 0) == 0) rel = rel.substr(2);
        if (rel.size() < 4 || rel.substr(rel.size() - 4) != ".png") rel += ".png";
        fr.file = dir / rel;
        fr.name = fr.file.filename().string();
        const auto& m = f.at("transform_matrix");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) fr.pose(r, c) = m.at(r).at(c).get<double>();
        check_rigid_pose(fr.pose, fr.name);
        frames.push_back(std::move(fr));
    }
    std::sort(frames.begin(), frames.end(),
              [](const Frame& a, const Frame& b) { return a.name < b.name; });

    if (!subset_names.empty()) {
        std::set<std::string> want(subset_names.begin(), subset_names.end());
        std::vector<Frame> kept;
        for (auto& fr : frames)
            if (want.erase(fr.name)) kept.push_back(std::move(fr));
        if (!want.empty())
            throw std::runtime_error("unknown subset name: " + *want.begin());
        frames = std::move(kept);
    }

    PosedImageSet out;
    out.camera_angle_x = j.at("camera_angle_x").get<double>();
    double max_dist = 0;
    for (auto& fr : frames) {
        out.images.push_back(ensure_rgb(read_png(fr.file)));
        out.poses.push_back(fr.pose);
        out.names.push_back(fr.name);
        max_dist = std::max(max_dist, fr.pose.topRightCorner<3, 1>().norm());
    }
    out.bounds.t_near = 2.0;
    out.bounds.t_far = 6.0;
    out.bounds.radius = 1.1 * max_dist;
    out.validate();
    return out;
}

Eigen::Vector2d lightfield_uv(int row, int col, int lattice) {
    if (lattice < 2) throw std::invalid_argument("light field lattice must be >= 2");
    return {2.0 * col / (lattice - 1) - 1.0, 2.0 * row / (lattice - 1) - 1.0};
}

Eigen::Vector2d lightfield_st(int x, int y, int width, int height) {
    return {2.0 * (x + 0.5) / width - 1.0, 2.0 * (y + 0.5) / height - 1.0};
}

std::pair<LightFieldGrid, LightFieldGrid> load_lightfield_grid(
    const std::filesystem::path& dir, int lattice,
    const std::vector<std::pair<int, int>>& corner_indices,
    const std::vector<std::pair<int, int>>& eval_indices) {
    // map (row, col) -> file found by parsing trailing _<row>_<col> tokens
    std::map<std::pair<int, int>, std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".png") continue;
        const std::string stem = entry.path().stem().string();
        const auto p2 = stem.rfind('_');
        if (p2 == std::string::npos) continue;
        const auto p1 = stem.rfind('_', p2 - 1);
        if (p1 == std::string::npos) continue;
        try {
            const int row = std::stoi(stem.substr(p1 + 1, p2 - p1 - 1));
            const int col = std::stoi(stem.substr(p2 + 1));
            files[{row, col}] = entry.path();
        } catch (const std::exception&) {
            continue;
        }
    }

    auto load_set = [&](const std::vector<std::pair<int, int>>& idxs) {
        LightFieldGrid g;
        g.lattice = lattice;
        for (const auto& [row, col] : idxs) {
            const auto it = files.find({row, col});
            if (it == files.end())
                throw std::runtime_error("missing light field image for index (" +
                                         std::to_string(row) + ", " +
                                         std::to_string(col) + ")");
            g.images.push_back(ensure_rgb(read_png(it->second)));
            g.indices.emplace_back(row, col);
            g.uv.push_back(lightfield_uv(row, col, lattice));
        }
        return g;
    };
    return {load_set(corner_indices), load_set(eval_indices)};
}

void save_lightfield_grid(const std::filesystem::path& dir, const LightFieldGrid& grid,
                          const std::string& prefix) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < grid.count(); ++i) {
        const auto [row, col] = grid.indices[i];
        write_png(dir / (prefix + "_" + std::to_string(row) + "_" +
                         std::to_string(col) + ".png"),
                  grid.images[i]);
    }
}

void ProceduralSceneSpec::validate() const {
    if (primitive != "checker_sphere" && primitive != "textured_plane")
        throw std::invalid_argument("unknown procedural primitive \"" + primitive + "\"");
    if (views < 1 || width < 1 || height < 1)
        throw std::invalid_argument("procedural scene needs views and a resolution");
    if (!(camera_distance > 0) || !(sphere_radius > 0) || checker_count < 1)
        throw std::invalid_argument("procedural scene geometry is invalid");
    if (!(t_near > 0) || !(t_near < t_far))
        throw std::invalid_argument("procedural scene requires 0 < t_near < t_far");
    if (!(radius_scale >= 1.0))
        throw std::invalid_argument("bounding sphere scale must be >= 1");
}

void to_json(nlohmann::json& j, const ProceduralSceneSpec& s) {
    j = {{"primitive", s.primitive},
         {"views", s.views},
         {"width", s.width},
         {"height", s.height},
         {"camera_distance", s.camera_distance},
         {"elevation_deg", s.elevation_deg},
         {"azimuth_offset_deg", s.azimuth_offset_deg},
         {"camera_angle_x", s.camera_angle_x},
         {"sphere_radius", s.sphere_radius},
         {"checker_count", s.checker_count},
         {"plane_z", s.plane_z},
         {"plane_extent", s.plane_extent},
         {"t_near", s.t_near},
         {"t_far", s.t_far},
         {"radius_scale", s.radius_scale}};
}

void from_json(const nlohmann::json& j, ProceduralSceneSpec& s) {
    s.primitive = j.value("primitive", s.primitive);
    s.views = j.value("views", s.views);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.camera_distance = j.value("camera_distance", s.camera_distance);
    s.elevation_deg = j.value("elevation_deg", s.elevation_deg);
    s.azimuth_offset_deg = j.value("azimuth_offset_deg", s.azimuth_offset_deg);
    s.camera_angle_x = j.value("camera_angle_x", s.camera_angle_x);
    s.sphere_radius = j.value("sphere_radius", s.sphere_radius);
    s.checker_count = j.value("checker_count", s.checker_count);
    s.plane_z = j.value("plane_z", s.plane_z);
    s.plane_extent = j.value("plane_extent", s.plane_extent);
    s.t_near = j.value("t_near", s.t_near);
    s.t_far = j.value("t_far", s.t_far);
    s.radius_scale = j.value("radius_scale", s.radius_scale);
}

PosedImageSet make_procedural_scene(const ProceduralSceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double phase = rng.uniform(0.0, 2.0 * kPi / spec.checker_count);
    const Shading shading;
    const Eigen::Vector3d color_a(0.95, 0.95, 0.95);
    const Eigen::Vector3d color_b(0.75, 0.20, 0.15);

    PosedImageSet out;
    out.camera_angle_x = spec.camera_angle_x;
    out.bounds.t_near = spec.t_near;
    out.bounds.t_far = spec.t_far;
    out.bounds.radius = spec.radius_scale * spec.camera_distance;

    const double elev = spec.elevation_deg * kPi / 180.0;
    for (int v = 0; v < spec.views; ++v) {
        const double az =
            spec.azimuth_offset_deg * kPi / 180.0 + 2.0 * kPi * v / spec.views;
        const Eigen::Matrix4d pose = orbit_pose(az, elev, spec.camera_distance);
        Image img(spec.width, spec.height, 3, 1.0);
        Image depth(spec.width, spec.height, 1, 0.0);
        Image mask(spec.width, spec.height, 1, 0.0);

        const auto rays = generate_rays(pose, spec.camera_angle_x, spec.width,
                                        spec.height, spec.t_near, spec.t_far);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const Ray& ray = rays[static_cast<std::size_t>(y) * spec.width + x];
                double t_hit = -1;
                Eigen::Vector3d normal, tex;
                if (spec.primitive == "checker_sphere") {
                    const double b = ray.origin.dot(ray.direction);
                    const double disc =
                        b * b - ray.origin.squaredNorm() + spec.sphere_radius * spec.sphere_radius;
                    if (disc >= 0) {
                        const double t = -b - std::sqrt(disc);
                        if (t > 0) {
                            t_hit = t;
                            const Eigen::Vector3d p = ray.origin + t * ray.direction;
                            normal = p / spec.sphere_radius;
                            const double az_t = std::atan2(normal.y(), normal.x());
                            const double pol =
                                std::acos(std::clamp(normal.z(), -1.0, 1.0));
                            const int ca = wrapped_cell(az_t, phase, spec.checker_count);
                            const int cp = static_cast<int>(std::floor(
                                std::min(pol / kPi, 0.999999) * spec.checker_count));
                            tex = ((ca + cp) % 2 == 0) ? color_a : color_b;
                        }
                    }
                } else {  // textured_plane
                    if (std::abs(ray.direction.z()) > 1e-12) {
                        const double t = (spec.plane_z - ray.origin.z()) / ray.direction.z();
                        if (t > 0) {
                            const Eigen::Vector3d p = ray.origin + t * ray.direction;
                            if (std::abs(p.x()) <= spec.plane_extent &&
                                std::abs(p.y()) <= spec.plane_extent) {
                                t_hit = t;
                                normal = Eigen::Vector3d::UnitZ();
                                const double cell =
                                    2.0 * spec.plane_extent / spec.checker_count;
                                const int cx = static_cast<int>(
                                    std::floor((p.x() + spec.plane_extent) / cell));
                                const int cy = static_cast<int>(
                                    std::floor((p.y() + spec.plane_extent) / cell));
                                tex = ((cx + cy) % 2 == 0) ? color_a : color_b;
                            }
                        }
                    }
                }
                if (t_hit > 0) {
                    const Eigen::Vector3d rgb =
                        (tex * shading.factor(normal)).cwiseMin(1.0).cwiseMax(0.0);
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = rgb[c];
                    depth.at(x, y, 0) = t_hit;
                    mask.at(x, y, 0) = 1.0;
                }
            }
        }
        out.images.push_back(std::move(img));
        out.depths.push_back(std::move(depth));
        out.hit_masks.push_back(std::move(mask));
        out.poses.push_back(pose);
        out.names.push_back("view_" + std::to_string(v));
    }
    out.validate();
    return out;
}

void ProceduralLightFieldSpec::validate() const {
    if (lattice < 2 || width < 1 || height < 1)
        throw std::invalid_argument("light field spec needs a lattice and resolution");
    if (!(z_front > 1.0) || !(z_back > z_front))
        throw std::invalid_argument("light field planes must satisfy 1 < z_front < z_back");
    if (!(stripe_period > 0) || checker_count < 1)
        throw std::invalid_argument("light field textures are invalid");
}

void to_json(nlohmann::json& j, const ProceduralLightFieldSpec& s) {
    j = {{"lattice", s.lattice},
         {"width", s.width},
         {"height", s.height},
         {"z_back", s.z_back},
         {"z_front", s.z_front},
         {"stripe_period", s.stripe_period},
         {"checker_count", s.checker_count}};
}

void from_json(const nlohmann::json& j, ProceduralLightFieldSpec& s) {
    s.lattice = j.value("lattice", s.lattice);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.z_back = j.value("z_back", s.z_back);
    s.z_front = j.value("z_front", s.z_front);
    s.stripe_period = j.value("stripe_period", s.stripe_period);
    s.checker_count = j.value("checker_count", s.checker_count);
}

double epi_theta_of_depth(double z) {
    if (!(z > 1.0))
        throw std::invalid_argument("EPI depth must lie behind the image plane (z > 1)");
    return std::atan(-z / (z - 1.0));
}

LightFieldGrid make_procedural_lightfield(const ProceduralLightFieldSpec& spec,
                                          std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double phase = rng.uniform(0.0, spec.stripe_period);

    LightFieldGrid grid;
    grid.lattice = spec.lattice;
    const double theta_front = epi_theta_of_depth(spec.z_front);
    const double theta_back = epi_theta_of_depth(spec.z_back);
    const double pad = 0.15 * (theta_back - theta_front);
    grid.bounds.theta_near = theta_front - pad;
    grid.bounds.theta_far = theta_back + pad;
    grid.bounds.t_near = spec.z_front - 0.4;
    grid.bounds.t_far = spec.z_back + 0.4;
    grid.bounds.radius = 1.0;

    const double back_extent = 2.0 * spec.z_back - 1.0;
    const double cell = 2.0 * back_extent / spec.checker_count;
    const Eigen::Vector3d back_a(0.92, 0.86, 0.70);
    const Eigen::Vector3d back_b(0.25, 0.45, 0.35);
    const Eigen::Vector3d front_color(0.20, 0.30, 0.80);

    for (int row = 0; row < spec.lattice; ++row) {
        for (int col = 0; col < spec.lattice; ++col) {
            const Eigen::Vector2d uv = lightfield_uv(row, col, spec.lattice);
            Image img(spec.width, spec.height, 3);
            for (int y = 0; y < spec.height; ++y) {
                for (int x = 0; x < spec.width; ++x) {
                    const Eigen::Vector2d st =
                        lightfield_st(x, y, spec.width, spec.height);
                    // front plane first; its stripes occlude the back plane
                    const double xf = uv.x() + (st.x() - uv.x()) * spec.z_front;
                    Eigen::Vector3d rgb;
                    const double q =
                        std::floor((xf + phase) / spec.stripe_period);
                    if (static_cast<long long>(q) % 2 == 0) {
                        const double yf = uv.y() + (st.y() - uv.y()) * spec.z_front;
                        rgb = front_color * (0.85 + 0.15 * std::sin(2.0 * yf));
                    } else {
                        const double xb = uv.x() + (st.x() - uv.x()) * spec.z_back;
                        const double yb = uv.y() + (st.y() - uv.y()) * spec.z_back;
                        const int cx = static_cast<int>(
                            std::floor((xb + back_extent) / cell));
                        const int cy = static_cast<int>(
                            std::floor((yb + back_extent) / cell));
                        rgb = ((cx + cy) % 2 == 0) ? back_a : back_b;
                        rgb *= 0.8 + 0.2 * (xb / back_extent);
                    }
                    for (int c = 0; c < 3; ++c)
                        img.at(x, y, c) = std::clamp(rgb[c], 0.0, 1.0);
                }
            }
            grid.images.push_back(std::move(img));
            grid.indices.emplace_back(row, col);
            grid.uv.push_back(uv);
        }
    }
    return grid;
}

Eigen::Matrix4d look_at_pose(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                             const Eigen::Vector3d& up) {
    const Eigen::Vector3d z = (eye - target).normalized();
    Eigen::Vector3d x = up.cross(z);
    const double n = x.norm();
    if (n < 1e-9)
        throw std::invalid_argument("look_at viewing direction is parallel to up");
    x /= n;
    const Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
    pose.topLeftCorner<3, 1>() = x;
    pose.block<3, 1>(0, 1) = y;
    pose.block<3, 1>(0, 2) = z;
    pose.topRightCorner<3, 1>() = eye;
    return pose;
}

Eigen::Matrix4d orbit_pose(double azimuth_rad, double elevation_rad, double distance) {
    const Eigen::Vector3d eye(distance * std::cos(elevation_rad) * std::cos(azimuth_rad),
                              distance * std::cos(elevation_rad) * std::sin(azimuth_rad),
                              distance * std::sin(elevation_rad));
    return look_at_pose(eye, Eigen::Vector3d::Zero());
}

Eigen::Matrix4d rotate_about_z(const Eigen::Matrix4d& pose, double angle_rad) {
    Eigen::Matrix4d rot = Eigen::Matrix4d::Identity();
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    rot(0, 0) = c;
    rot(0, 1) = -s;
    rot(1, 0) = s;
    rot(1, 1) = c;
    return rot * pose;
}

Eigen::Matrix4d OrbitPoseSampler::sample(Rng& rng) const {
    const double az = rng.uniform(azimuth_min_deg, azimuth_max_deg) * kPi / 180.0;
    const double el = rng.uniform(elevation_min_deg, elevation_max_deg) * kPi / 180.0;
    return orbit_pose(az, el, distance);
}

OrbitPoseSampler fit_orbit_sampler(const PosedImageSet& data) {
    data.validate();
    OrbitPoseSampler s;
    double dist = 0, el_lo = 90, el_hi = -90;
    for (const auto& pose : data.poses) {
        const Eigen::Vector3d eye = pose.topRightCorner<3, 1>();
        dist += eye.norm();
        const double el = std::asin(std::clamp(eye.z() / eye.norm(), -1.0, 1.0)) * 180.0 / kPi;
        el_lo = std::min(el_lo, el);
        el_hi = std::max(el_hi, el);
    }
    s.distance = dist / data.count();
    s.elevation_min_deg = el_lo;
    s.elevation_max_deg = std::max(el_hi, el_lo + 1e-6);
    return s;
}

}  // namespace halo
