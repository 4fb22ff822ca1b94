#include <doctest.h>

#include <halo/rendering.hpp>

#include "support/testutil.hpp"

#include <cmath>

using halo::CompositeResult;
using halo::Ray;

namespace {

// Constant-density gray medium; closed forms are easy against it.
halo::FieldFn constant_medium(double sigma, const Eigen::Vector3d& color) {
  return [sigma, color](const Eigen::Ref<const Eigen::MatrixXd>& P,
                        const Eigen::Ref<const Eigen::MatrixXd>& D) {
    halo::PointField::Output out;
    out.sigma = Eigen::ArrayXd::Constant(P.cols(), sigma);
    out.rgb = color.replicate(1, P.cols());
    (void)D;
    return out;
  };
}

Eigen::Matrix4d identity_pose() { return Eigen::Matrix4d::Identity(); }

}  // namespace

TEST_CASE("composite reproduces a hand-computed two-sample example") {
  // Samples at t = 1, 2 with t_far = 3: slab widths 1 and 1.
  Eigen::ArrayXd sigmas(2);
  sigmas << 0.5, 1.0;
  Eigen::Matrix3Xd colors(3, 2);
  colors.col(0) = Eigen::Vector3d(1.0, 0.0, 0.0);
  colors.col(1) = Eigen::Vector3d(0.0, 1.0, 0.0);
  Eigen::ArrayXd ts(2);
  ts << 1.0, 2.0;

  const double a0 = 1.0 - std::exp(-0.5);
  const double T1 = std::exp(-0.5);
  const double a1 = 1.0 - std::exp(-1.0);
  const double w0 = a0;
  const double w1 = T1 * a1;

  const CompositeResult r = halo::composite(sigmas, colors, ts, 3.0, std::nullopt);
  CHECK(r.weights.size() == 2);
  CHECK(r.weights[0] == doctest::Approx(w0).epsilon(1e-12));
  CHECK(r.weights[1] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(r.acc == doctest::Approx(w0 + w1).epsilon(1e-12));
  CHECK(r.rgb.x() == doctest::Approx(w0).epsilon(1e-12));
  CHECK(r.rgb.y() == doctest::Approx(w1).epsilon(1e-12));
  CHECK(r.rgb.z() == doctest::Approx(0.0));
  CHECK(r.transmittance_tail == doctest::Approx(T1 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(r.depth ==
        doctest::Approx((w0 * 1.0 + w1 * 2.0) / (w0 + w1)).epsilon(1e-12));
}

TEST_CASE("background color receives the residual transmittance") {
  Eigen::ArrayXd sigmas(1);
  sigmas << 0.25;
  Eigen::Matrix3Xd colors(3, 1);
  colors.col(0) = Eigen::Vector3d(0.0, 0.0, 1.0);
  Eigen::ArrayXd ts(1);
  ts << 0.0;

  const Eigen::Vector3d bg(1.0, 1.0, 1.0);
  const CompositeResult r = halo::composite(sigmas, colors, ts, 2.0, bg);
  const double alpha = 1.0 - std::exp(-0.5);
  CHECK(r.rgb.z() == doctest::Approx(alpha + (1.0 - alpha)).epsilon(1e-12));
  CHECK(r.rgb.x() == doctest::Approx(1.0 - alpha).epsilon(1e-12));
  // acc counts medium weights only, not the background.
  CHECK(r.acc == doctest::Approx(alpha).epsilon(1e-12));
}

TEST_CASE("zero density is fully transparent") {
  Eigen::ArrayXd sigmas = Eigen::ArrayXd::Zero(8);
  Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Ones(3, 8);
  const Eigen::ArrayXd ts = halo::midpoint_sample(2.0, 6.0, 8);
  const CompositeResult r = halo::composite(sigmas, colors, ts, 6.0, std::nullopt);
  CHECK(r.acc == 0.0);
  CHECK(r.transmittance_tail == 1.0);
  CHECK(r.rgb.norm() == 0.0);
  // Depth normalizer is floored, not divided by zero.
  CHECK(std::isfinite(r.depth));
}

TEST_CASE("conservation: weights sum to acc and tail absorbs the rest") {
  halo::Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(24));
    Eigen::ArrayXd sigmas(n);
    for (int i = 0; i < n; ++i) sigmas[i] = rng.uniform(0.0, 4.0);
    Eigen::Matrix3Xd colors(3, n);
    for (int i = 0; i < n; ++i)
      colors.col(i) = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    const double t_near = rng.uniform(0.1, 2.0);
    const double t_far = t_near + rng.uniform(0.5, 5.0);
    Eigen::ArrayXd ts(n);
    double t = t_near;
    for (int i = 0; i < n; ++i) {
      t += rng.uniform(1e-4, (t_far - t) / (n - i + 1));
      ts[i] = t;
    }
    const CompositeResult r = halo::composite(sigmas, colors, ts, t_far, std::nullopt);
    REQUIRE(std::abs(r.weights.sum() - r.acc) < 1e-12);
    REQUIRE(std::abs(r.acc + r.transmittance_tail - 1.0) < 1e-12);
    REQUIRE(r.weights.minCoeff() >= 0.0);
  }
}

TEST_CASE("last slab is floored at zero width when ts reaches t_far") {
  Eigen::ArrayXd sigmas(2);
  sigmas << 1.0, 5.0;
  Eigen::Matrix3Xd colors = Eigen::Matrix3Xd::Ones(3, 2);
  Eigen::ArrayXd ts(2);
  ts << 1.0, 3.0;
  // t_far before the last sample: its slab contributes nothing.
  const CompositeResult r = halo::composite(sigmas, colors, ts, 2.5, std::nullopt);
  CHECK(r.weights[1] == 0.0);
  CHECK(r.acc == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("composite_backward matches finite differences on all inputs") {
  Eigen::ArrayXd sigmas(4);
  sigmas << 0.3, 1.2, 0.05, 2.0;
  Eigen::Matrix3Xd colors(3, 4);
  colors.setRandom();
  colors = (colors.array() * 0.5 + 0.5).matrix();
  Eigen::ArrayXd ts(4);
  ts << 1.0, 1.5, 2.2, 2.9;
  const double t_far = 3.5;
  const std::optional<Eigen::Vector3d> bg(Eigen::Vector3d(1.0, 1.0, 1.0));

  const Eigen::Vector3d d_rgb(0.7, -0.3, 0.2);
  const double d_acc = 0.4;
  const double d_depth = -0.6;

  auto loss = [&] {
    const CompositeResult r = halo::composite(sigmas, colors, ts, t_far, bg);
    return d_rgb.dot(r.rgb) + d_acc * r.acc + d_depth * r.depth;
  };

  const halo::CompositeGrad g =
      halo::composite_backward(sigmas, colors, ts, t_far, bg, d_rgb, d_acc, d_depth);

  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    const double saved = sigmas[i];
    auto f = [&](double v) {
      sigmas[i] = v;
      const double out = loss();
      sigmas[i] = saved;
      return out;
    };
    CHECK(g.d_sigma[i] ==
          doctest::Approx(halo::test::central_diff(f, saved, h)).epsilon(1e-6));
  }
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 3; ++k) {
      const double saved = colors(k, c);
      auto f = [&](double v) {
        colors(k, c) = v;
        const double out = loss();
        colors(k, c) = saved;
        return out;
      };
      CHECK(g.d_color(k, c) ==
            doctest::Approx(halo::test::central_diff(f, saved, h)).epsilon(1e-6));
    }
}

TEST_CASE("midpoint_sample hits bin centers") {
  const Eigen::ArrayXd ts = halo::midpoint_sample(2.0, 6.0, 4);
  REQUIRE(ts.size() == 4);
  CHECK(ts[0] == doctest::Approx(2.5));
  CHECK(ts[1] == doctest::Approx(3.5));
  CHECK(ts[2] == doctest::Approx(4.5));
  CHECK(ts[3] == doctest::Approx(5.5));
}

TEST_CASE("stratified_sample keeps one draw per bin, strictly increasing") {
  halo::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::ArrayXd ts = halo::stratified_sample(2.0, 6.0, 8, rng);
    REQUIRE(ts.size() == 8);
    const double bin = 0.5;
    for (int i = 0; i < 8; ++i) {
      REQUIRE(ts[i] >= 2.0 + i * bin);
      REQUIRE(ts[i] <= 2.0 + (i + 1) * bin);
      if (i > 0) REQUIRE(ts[i] > ts[i - 1]);
    }
  }
}

TEST_CASE("depth_guided_sample stays in range and concentrates in the window") {
  halo::Rng rng(9);
  const double d_hat = 4.0, window = 0.8;
  int in_window = 0, total = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::ArrayXd ts =
        halo::depth_guided_sample(d_hat, window, 16, 2.0, 6.0, 0.25, rng);
    REQUIRE(ts.size() == 16);
    for (int i = 0; i < 16; ++i) {
      REQUIRE(ts[i] >= 2.0);
      REQUIRE(ts[i] <= 6.0);
      if (i > 0) REQUIRE(ts[i] > ts[i - 1]);
      if (std::abs(ts[i] - d_hat) <= window / 2 + 1e-12) ++in_window;
      ++total;
    }
  }
  // ceil(0.75*16)=12 of 16 per draw sit inside the window, plus uniform
  // strays that happen to land there.
  CHECK(in_window >= 12 * 40);
  CHECK(in_window < total);
}

TEST_CASE("depth_guided_sample with uniform_fraction=1 matches stratified") {
  halo::Rng a(17), b(17);
  const Eigen::ArrayXd guided =
      halo::depth_guided_sample(4.0, 0.8, 16, 2.0, 6.0, 1.0, a);
  const Eigen::ArrayXd plain = halo::stratified_sample(2.0, 6.0, 16, b);
  CHECK((guided - plain).abs().maxCoeff() == 0.0);
}

TEST_CASE("depth_guided_sample clips the window to the ray range") {
  halo::Rng rng(21);
  const Eigen::ArrayXd ts =
      halo::depth_guided_sample(2.05, 1.0, 12, 2.0, 6.0, 0.25, rng);
  for (int i = 0; i < 12; ++i) REQUIRE(ts[i] >= 2.0);
}

TEST_CASE("depth_guided_sample rejects a depth estimate off the ray") {
  halo::Rng rng(22);
  CHECK_THROWS(halo::depth_guided_sample(7.0, 1.0, 8, 2.0, 6.0, 0.25, rng));
  CHECK_THROWS(halo::depth_guided_sample(1.0, 1.0, 8, 2.0, 6.0, 0.25, rng));
}

TEST_CASE("epi_theta_sample at alpha=1 is not narrower than the full range") {
  halo::Rng rng(5);
  const double lo = -1.3, hi = -1.0;
  const Eigen::ArrayXd ts = halo::epi_theta_sample(-1.15, 1.0, lo, hi, 32, rng);
  REQUIRE(ts.size() == 32);
  for (int i = 0; i < 32; ++i) {
    REQUIRE(ts[i] >= lo);
    REQUIRE(ts[i] <= hi + 1e-9);
    if (i > 0) REQUIRE(ts[i] > ts[i - 1]);
  }
  CHECK(ts.minCoeff() < lo + 0.1 * (hi - lo));
  CHECK(ts.maxCoeff() > hi - 0.1 * (hi - lo));
}

TEST_CASE("epi_theta_sample narrows around the predicted angle") {
  halo::Rng rng(6);
  const double lo = -1.3, hi = -1.0;
  const double center = -1.2, alpha = 0.1;
  const double half = alpha * (hi - lo);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::ArrayXd ts = halo::epi_theta_sample(center, alpha, lo, hi, 16, rng);
    for (int i = 0; i < 16; ++i) {
      REQUIRE(ts[i] >= std::max(lo, center - half) - 1e-9);
      REQUIRE(ts[i] <= std::min(hi, center + half) + 1e-9);
      if (i > 0) REQUIRE(ts[i] > ts[i - 1]);
    }
  }
}

TEST_CASE("epi_theta_sample keeps strict order when clipping piles up") {
  halo::Rng rng(7);
  // Center far outside the window: everything clips to the boundary and must
  // be nudged apart.
  const Eigen::ArrayXd ts = halo::epi_theta_sample(-0.2, 0.05, -1.3, -1.0, 8, rng);
  for (int i = 1; i < 8; ++i) REQUIRE(ts[i] > ts[i - 1]);
  for (int i = 0; i < 8; ++i) REQUIRE(ts[i] <= -1.0 + 1e-9);
}

TEST_CASE("generate_rays follows the blender camera convention") {
  const int w = 4, h = 3;
  const double angle_x = 0.8;
  const auto rays = halo::generate_rays(identity_pose(), angle_x, w, h, 1.0, 5.0);
  REQUIRE(rays.size() == static_cast<std::size_t>(w * h));

  // Identity pose: camera at origin looking down -z.
  for (const auto& r : rays) {
    CHECK(r.origin.norm() == doctest::Approx(0.0));
    CHECK(r.direction.norm() == doctest::Approx(1.0));
    CHECK(r.direction.z() < 0.0);
    CHECK(r.t_near == 1.0);
    CHECK(r.t_far == 5.0);
  }

  // Pixel order is row-major; x grows to the right, y down the image.
  const auto& first = rays[0];
  const auto& second = rays[1];
  const auto& next_row = rays[w];
  CHECK(second.direction.x() > first.direction.x());
  CHECK(next_row.direction.y() < first.direction.y());

  // The focal length matches the field of view: the horizontal extent of the
  // corner pixels spans tan(angle_x / 2).
  const double focal = halo::focal_from_angle(w, angle_x);
  CHECK(focal == doctest::Approx(0.5 * w / std::tan(0.5 * angle_x)));
}

TEST_CASE("pixel_ray agrees with generate_rays") {
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  pose(0, 3) = 1.0;
  pose(2, 3) = 4.0;
  const int w = 5, h = 4;
  const auto rays = halo::generate_rays(pose, 0.7, w, h, 2.0, 6.0);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < w; ++col) {
      const Ray r = halo::pixel_ray(pose, 0.7, w, h, col, row, 2.0, 6.0);
      const Ray& g = rays[static_cast<std::size_t>(row) * w + col];
      CHECK((r.origin - g.origin).norm() < 1e-14);
      CHECK((r.direction - g.direction).norm() < 1e-14);
    }
}

TEST_CASE("generate_rays rejects a non-rigid pose") {
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  pose(0, 0) = 2.0;  // scale is not a rigid motion
  CHECK_THROWS(halo::generate_rays(pose, 0.7, 4, 4, 1.0, 5.0));
}

TEST_CASE("render_ray matches composite on the same samples") {
  const auto field = constant_medium(0.5, Eigen::Vector3d(0.4, 0.5, 0.6));
  Ray ray;
  ray.origin = Eigen::Vector3d(0.0, 0.0, 0.0);
  ray.direction = Eigen::Vector3d(0.0, 0.0, 1.0);
  ray.t_near = 2.0;
  ray.t_far = 6.0;
  const Eigen::ArrayXd ts = halo::midpoint_sample(2.0, 6.0, 32);
  const CompositeResult r = halo::render_ray(field, ray, ts, std::nullopt);

  Eigen::ArrayXd sigmas = Eigen::ArrayXd::Constant(32, 0.5);
  Eigen::Matrix3Xd colors = Eigen::Vector3d(0.4, 0.5, 0.6).replicate(1, 32);
  const CompositeResult want = halo::composite(sigmas, colors, ts, 6.0, std::nullopt);
  CHECK((r.rgb - want.rgb).norm() < 1e-12);
  CHECK(r.acc == doctest::Approx(want.acc).epsilon(1e-12));
}

TEST_CASE("render_depth reports the expected depth of a thin shell") {
  // Density spike near t=4 in an otherwise empty medium.
  auto field = [](const Eigen::Ref<const Eigen::MatrixXd>& P,
                  const Eigen::Ref<const Eigen::MatrixXd>&) {
    halo::PointField::Output out;
    const int n = static_cast<int>(P.cols());
    out.sigma = Eigen::ArrayXd::Zero(n);
    out.rgb = Eigen::MatrixXd::Ones(3, n);
    for (int i = 0; i < n; ++i) {
      if (std::abs(P(2, i) - 4.0) < 0.1) out.sigma[i] = 50.0;
    }
    return out;
  };
  Ray ray;
  ray.origin = Eigen::Vector3d(0.0, 0.0, 0.0);
  ray.direction = Eigen::Vector3d(0.0, 0.0, 1.0);
  ray.t_near = 2.0;
  ray.t_far = 6.0;
  const halo::DepthSample d =
      halo::render_depth(field, ray, halo::midpoint_sample(2.0, 6.0, 256));
  CHECK(d.acc > 0.99);
  CHECK(d.depth == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("render_view fills the background on an empty field") {
  const auto field = constant_medium(0.0, Eigen::Vector3d(0.2, 0.2, 0.2));
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  halo::RenderOptions opts;
  opts.samples_per_ray = 4;
  const halo::RenderedView view =
      halo::render_view(field, pose, 0.7, 6, 5, 1.0, 5.0, opts);
  REQUIRE(view.rgb.width == 6);
  REQUIRE(view.rgb.height == 5);
  REQUIRE(view.rgb.channels == 3);
  REQUIRE(view.acc.channels == 1);
  for (double v : view.rgb.data) CHECK(v == doctest::Approx(1.0));
  for (double v : view.acc.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("render_view is independent of the worker count") {
  const auto field = constant_medium(0.3, Eigen::Vector3d(0.8, 0.1, 0.4));
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  halo::RenderOptions opts;
  opts.samples_per_ray = 8;

  const char* saved = std::getenv("HALO_NUM_THREADS");
  setenv("HALO_NUM_THREADS", "1", 1);
  const halo::RenderedView a = halo::render_view(field, pose, 0.7, 8, 6, 1.0, 5.0, opts);
  setenv("HALO_NUM_THREADS", "3", 1);
  const halo::RenderedView b = halo::render_view(field, pose, 0.7, 8, 6, 1.0, 5.0, opts);
  if (saved) setenv("HALO_NUM_THREADS", saved, 1);
  else unsetenv("HALO_NUM_THREADS");

  REQUIRE(a.rgb.data.size() == b.rgb.data.size());
  for (std::size_t i = 0; i < a.rgb.data.size(); ++i)
    REQUIRE(a.rgb.data[i] == b.rgb.data[i]);
}

TEST_CASE("jittered render_view is reproducible per seed") {
  const auto field = constant_medium(0.3, Eigen::Vector3d(0.8, 0.1, 0.4));
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  halo::RenderOptions opts;
  opts.samples_per_ray = 8;
  opts.jitter = true;
  opts.seed = 123;
  const halo::RenderedView a = halo::render_view(field, pose, 0.7, 6, 4, 1.0, 5.0, opts);
  const halo::RenderedView b = halo::render_view(field, pose, 0.7, 6, 4, 1.0, 5.0, opts);
  for (std::size_t i = 0; i < a.rgb.data.size(); ++i)
    REQUIRE(a.rgb.data[i] == b.rgb.data[i]);
}

TEST_CASE("ray validation rejects inverted ranges") {
  Ray ray;
  ray.origin = Eigen::Vector3d::Zero();
  ray.direction = Eigen::Vector3d(0.0, 0.0, 1.0);
  ray.t_near = 5.0;
  ray.t_far = 2.0;
  CHECK_THROWS(ray.validate());
}
