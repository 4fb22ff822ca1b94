#pragma once

#include <halo/config.hpp>
#include <halo/random.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace halo::test {

// Creates a unique directory under the system temp root and removes it (and
// everything inside) on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 1000; ++attempt) {
      auto candidate = base / (tag + "-" + std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir for tag " + tag);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string sub(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Central-difference derivative of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central-difference gradient of f with respect to entry i of params.
inline double central_diff_param(const std::function<double()>& f,
                                 Eigen::VectorXd& params, Eigen::Index i,
                                 double h) {
  const double saved = params[i];
  params[i] = saved + h;
  const double hi = f();
  params[i] = saved - h;
  const double lo = f();
  params[i] = saved;
  return (hi - lo) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// A tiny procedural scene configuration that trains in seconds.  Used by the
// pipeline tests that only care about plumbing, not quality.
inline HaloConfig micro_config(const std::string& out_dir, std::uint64_t seed = 7) {
  HaloConfig cfg = HaloConfig::desk_procedural();
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.scene.procedural.views = 3;
  cfg.scene.procedural.width = 24;
  cfg.scene.procedural.height = 24;
  cfg.scene.holdout_views = 2;
  cfg.rendering.eval_samples_per_ray = 12;
  auto shrink = [](StageConfig& s) {
    s.iterations = 20;
    s.batch_size = 64;
    s.samples_per_ray = 12;
  };
  shrink(cfg.stage_lo);
  shrink(cfg.stage_ray);
  shrink(cfg.stage_hi);
  shrink(cfg.stage_joint);
  cfg.joint_schedule.decay_iterations = 16;
  cfg.tune.iterations = 16;
  cfg.tune.batch_size = 64;
  cfg.tune.samples_per_ray = 12;
  cfg.tune.criterion.num_pairs = 2;
  cfg.tune.criterion.render_resolution = 24;
  cfg.arch.point_depth = 2;
  cfg.arch.point_width = 32;
  cfg.arch.point_skip = 0;
  cfg.arch.ray_depth = 2;
  cfg.arch.ray_width = 32;
  cfg.arch.ray_skip = 0;
  cfg.validate();
  return cfg;
}

inline HaloConfig micro_lightfield_config(const std::string& out_dir,
                                          std::uint64_t seed = 7) {
  HaloConfig cfg = HaloConfig::desk_lightfield();
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.scene.lattice = 5;
  cfg.scene.corner_indices = {{0, 0}, {0, 4}, {4, 0}, {4, 4}};
  cfg.scene.eval_indices = {{2, 2}};
  cfg.scene.lightfield.lattice = 5;
  cfg.scene.lightfield.width = 12;
  cfg.scene.lightfield.height = 12;
  cfg.stage_joint.iterations = 20;
  cfg.stage_joint.batch_size = 48;
  cfg.stage_joint.samples_per_ray = 10;
  cfg.rendering.eval_samples_per_ray = 10;
  cfg.joint_schedule.decay_iterations = 16;
  cfg.validate();
  return cfg;
}

}  // namespace halo::test
