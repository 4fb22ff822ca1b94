#include <doctest.h>

#include <halo/pipeline.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "support/testutil.hpp"

using namespace halo;
using test::TempDir;
using test::slurp;

namespace {

// Sets HALO_NUM_THREADS for the current scope and restores the previous
// value on exit.  worker_thread_count() re-reads the variable on every
// parallel region, so this takes effect immediately.
class ThreadCountGuard {
 public:
  explicit ThreadCountGuard(int n) {
    if (const char* old = std::getenv("HALO_NUM_THREADS")) saved_ = old;
    setenv("HALO_NUM_THREADS", std::to_string(n).c_str(), 1);
  }
  ~ThreadCountGuard() {
    if (saved_.empty()) {
      unsetenv("HALO_NUM_THREADS");
    } else {
      setenv("HALO_NUM_THREADS", saved_.c_str(), 1);
    }
  }

 private:
  std::string saved_;
};

void clear_dir(const std::filesystem::path& dir) {
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
}

}  // namespace

TEST_CASE("point and ray stages are byte-identical across worker counts") {
  TempDir tmp("det-threads");
  HaloConfig cfg = test::micro_config(tmp.sub("run"));
  cfg.stage_lo.iterations = 60;
  cfg.stage_ray.iterations = 200;
  cfg.stage_hi.iterations = 40;
  const SceneData scene = load_scene(cfg);
  const RunPaths paths(cfg.out_dir);

  auto run_all = [&] {
    run_stage_lo(cfg, scene, paths, false);
    run_stage_ray(cfg, scene, paths, false);
    run_stage_hi(cfg, scene, paths, false);
    return std::array<std::string, 3>{slurp(paths.checkpoint("lo").string()),
                                      slurp(paths.checkpoint("ray").string()),
                                      slurp(paths.checkpoint("hi").string())};
  };

  std::array<std::string, 3> serial, threaded;
  {
    ThreadCountGuard guard(1);
    serial = run_all();
  }
  clear_dir(cfg.out_dir);
  {
    ThreadCountGuard guard(4);
    threaded = run_all();
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(!serial[i].empty());
    CHECK(serial[i] == threaded[i]);
  }
}

TEST_CASE("joint stage is byte-identical across worker counts") {
  TempDir tmp("det-joint-threads");
  HaloConfig cfg = test::micro_lightfield_config(tmp.sub("run"));
  cfg.stage_joint.iterations = 40;
  const LightFieldData data = load_lightfield_scene(cfg);
  const RunPaths paths(cfg.out_dir);

  std::string serial, threaded;
  {
    ThreadCountGuard guard(1);
    run_stage_joint(cfg, data, paths, false);
    serial = slurp(paths.checkpoint("joint").string());
  }
  clear_dir(cfg.out_dir);
  {
    ThreadCountGuard guard(3);
    run_stage_joint(cfg, data, paths, false);
    threaded = slurp(paths.checkpoint("joint").string());
  }
  CHECK(!serial.empty());
  CHECK(serial == threaded);
}

TEST_CASE("high stage reruns reproduce the checkpoint exactly") {
  TempDir tmp("det-hi-rerun");
  HaloConfig cfg = test::micro_config(tmp.sub("run"));
  cfg.stage_lo.iterations = 60;
  cfg.stage_ray.iterations = 100;
  cfg.stage_hi.iterations = 60;
  const SceneData scene = load_scene(cfg);
  const RunPaths paths(cfg.out_dir);

  auto run_all = [&] {
    run_stage_lo(cfg, scene, paths, false);
    run_stage_ray(cfg, scene, paths, false);
    run_stage_hi(cfg, scene, paths, false);
    return slurp(paths.checkpoint("hi").string());
  };
  const std::string first = run_all();
  clear_dir(cfg.out_dir);
  const std::string second = run_all();
  CHECK(!first.empty());
  CHECK(first == second);
}

TEST_CASE("rendering and metrics are bit-stable across worker counts") {
  TempDir tmp("det-render");
  HaloConfig cfg = test::micro_config(tmp.sub("run"));
  cfg.stage_lo.iterations = 120;
  const SceneData scene = load_scene(cfg);
  const RunPaths paths(cfg.out_dir);
  const StageOutcome out = run_stage_lo(cfg, scene, paths, false);

  const PointField field(cfg.lo_field_config());
  RenderOptions opt;
  opt.samples_per_ray = cfg.rendering.eval_samples_per_ray;

  auto eval_once = [&](int workers) {
    ThreadCountGuard guard(workers);
    return evaluate_field(field, out.state.params, scene.holdout, scene.bounds, opt);
  };
  const ViewMetrics a = eval_once(1);
  const ViewMetrics b = eval_once(5);
  REQUIRE(a.psnr.size() == b.psnr.size());
  for (size_t i = 0; i < a.psnr.size(); ++i) {
    CHECK(a.psnr[i] == b.psnr[i]);
    CHECK(a.ssim[i] == b.ssim[i]);
  }
  CHECK(a.mean_psnr == b.mean_psnr);
  CHECK(a.mean_ssim == b.mean_ssim);
}
