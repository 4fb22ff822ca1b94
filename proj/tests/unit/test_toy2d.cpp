#include <doctest.h>

#include <halo/random.hpp>
#include <halo/toy2d.hpp>

#include "support/testutil.hpp"

#include <cmath>
#include <fstream>
#include <limits>

using halo::CornerMask;
using halo::Image;
using halo::ToyField;
using halo::ToyTrainConfig;
using halo::test::TempDir;

namespace {

ToyField small_field() {
  return ToyField(halo::SinusoidalEncodingConfig{2, 1.0, true}, 2, 16);
}

Image constant_image(int size, double value) {
  Image img(size, size, 1);
  for (double& v : img.data) v = value;
  return img;
}

}  // namespace

TEST_CASE("grid_coords maps pixel centers row-major into the unit square") {
  const Eigen::MatrixXd C = halo::grid_coords(4, 2);
  REQUIRE(C.cols() == 8);
  CHECK(C(0, 0) == doctest::Approx(-0.75));
  CHECK(C(1, 0) == doctest::Approx(-0.5));
  // row 1, col 2 lands at flat index 6
  CHECK(C(0, 6) == doctest::Approx(0.25));
  CHECK(C(1, 6) == doctest::Approx(0.5));
  CHECK(C.row(0).minCoeff() > -1.0);
  CHECK(C.row(0).maxCoeff() < 1.0);
}

TEST_CASE("image_targets flattens luminance in grid order") {
  Image img(3, 2, 3);
  halo::Rng rng(4);
  for (double& v : img.data) v = rng.uniform();
  const Image lum = halo::to_luminance(img);
  const Eigen::ArrayXd t = halo::image_targets(img);
  REQUIRE(t.size() == 6);
  for (int row = 0; row < 2; ++row)
    for (int col = 0; col < 3; ++col)
      CHECK(t[row * 3 + col] == lum.at(col, row, 0));
}

TEST_CASE("checkerboard cells alternate and dimensions must divide") {
  const Image board = halo::make_checkerboard(8, 8, 2, 2);
  CHECK(board.at(0, 0, 0) == 0.0);
  CHECK(board.at(4, 0, 0) == 1.0);
  CHECK(board.at(0, 4, 0) == 1.0);
  CHECK(board.at(4, 4, 0) == 0.0);
  CHECK(board.at(3, 3, 0) == 0.0);   // still inside the first cell
  double mean = 0;
  for (double v : board.data) mean += v;
  CHECK(mean / board.data.size() == doctest::Approx(0.5));

  CHECK_THROWS(halo::make_checkerboard(10, 8, 4, 2));
  CHECK_THROWS(halo::make_checkerboard(8, 8, 0, 2));
}

TEST_CASE("corner mask zeroes exactly the far corner rectangle") {
  const auto keep = halo::corner_mask_keep(8, 6, CornerMask{3, 2});
  REQUIRE(keep.size() == 48);
  long zeros = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int col = static_cast<int>(i % 8);
    const int row = static_cast<int>(i / 8);
    const bool masked = (col >= 5) && (row >= 4);
    CHECK(keep[i] == (masked ? 0 : 1));
    zeros += keep[i] == 0;
  }
  CHECK(zeros == 6);

  const auto none = halo::corner_mask_keep(8, 6, CornerMask{0, 0});
  for (auto k : none) CHECK(k == 1);
  CHECK_THROWS(halo::corner_mask_keep(8, 6, CornerMask{9, 1}));
}

TEST_CASE("toy field initialization is seed-deterministic") {
  const ToyField field = small_field();
  CHECK(field.param_count() > 0);
  const Eigen::VectorXd a = field.init_params(3);
  const Eigen::VectorXd b = field.init_params(3);
  const Eigen::VectorXd c = field.init_params(4);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == field.param_count());
}

TEST_CASE("toy field backward matches finite differences") {
  const ToyField field = small_field();
  Eigen::VectorXd params = field.init_params(11);
  halo::Rng rng(12);
  Eigen::MatrixXd X(2, 3);
  for (int i = 0; i < X.size(); ++i) X(i % 2, i / 2) = rng.uniform(-0.9, 0.9);
  Eigen::ArrayXd d_out(3);
  d_out << 0.7, -1.1, 0.4;

  ToyField::Cache cache;
  field.forward(params, X, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(field.param_count());
  field.backward(params, cache, d_out, grad);

  const auto scalar = [&](const Eigen::VectorXd& p) {
    return (field.forward(p, X) * d_out).sum();
  };
  for (int trial = 0; trial < 40; ++trial) {
    const int i = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(params.size())));
    const double fd = halo::test::central_diff_param(scalar, params, i, 1e-6);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("zero-iteration fit returns the untrained field") {
  const ToyField field = small_field();
  const Image img = halo::make_toy_image(8, 5);
  ToyTrainConfig tc;
  tc.iterations = 0;
  tc.seed = 21;
  const Eigen::VectorXd fitted = halo::fit_image_field(img, field, tc);
  const Eigen::VectorXd init = field.init_params(halo::mix_seed(21, 1));
  CHECK(fitted == init);
}

TEST_CASE("dense rendering at factor 1 reproduces the field on the grid") {
  const ToyField field = small_field();
  const Eigen::VectorXd params = field.init_params(2);
  const Image out = halo::render_dense(field, params, 6, 5, 1);
  REQUIRE(out.width == 6);
  REQUIRE(out.height == 5);
  const Eigen::ArrayXd direct = field.forward(params, halo::grid_coords(6, 5));
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 6; ++col) {
      const double expect = std::clamp(direct[row * 6 + col], 0.0, 1.0);
      CHECK(out.at(col, row, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
  CHECK(halo::render_dense(field, params, 6, 5, 3).width == 18);
  CHECK_THROWS(halo::render_dense(field, params, 6, 5, 0));
}

TEST_CASE("both encodings learn a constant image to within 1e-3") {
  const Image img = constant_image(12, 0.6);
  ToyTrainConfig tc;
  tc.iterations = 4000;
  tc.batch_size = 32;
  tc.seed = 3;
  for (const halo::EncodingConfig enc :
       {halo::EncodingConfig(halo::SinusoidalEncodingConfig{2, 1.0, true}),
        halo::EncodingConfig(halo::SinusoidalEncodingConfig{6, 1.0, true})}) {
    const ToyField field(enc, 2, 16);
    const Eigen::VectorXd params = halo::fit_image_field(img, field, tc);
    const Image recon = halo::render_dense(field, params, 12, 12, 1);
    double max_err = 0;
    for (std::size_t i = 0; i < recon.data.size(); ++i)
      max_err = std::max(max_err, std::abs(recon.data[i] - 0.6));
    CHECK(max_err <= 1e-3);
  }
}

TEST_CASE("pixels excluded by the mask never influence training") {
  const int size = 8;
  const Image clean = halo::make_toy_image(size, 9);
  const auto keep = halo::corner_mask_keep(size, size, CornerMask{3, 3});

  Image poisoned = clean;
  for (int y = size - 3; y < size; ++y)
    for (int x = size - 3; x < size; ++x)
      poisoned.at(x, y, 0) = std::numeric_limits<double>::quiet_NaN();

  const ToyField field = small_field();
  ToyTrainConfig tc;
  tc.iterations = 30;
  tc.batch_size = 16;
  tc.seed = 14;
  const Eigen::VectorXd a = halo::fit_image_field(clean, field, tc, keep);
  const Eigen::VectorXd b = halo::fit_image_field(poisoned, field, tc, keep);
  CHECK(a == b);

  // With an empty keep list the poison is read and training rejects it.
  CHECK_THROWS(halo::fit_image_field(poisoned, field, tc));
}

TEST_CASE("fit rejects an all-masked image and bad budgets") {
  const Image img = constant_image(4, 0.5);
  const ToyField field = small_field();
  ToyTrainConfig tc;
  tc.iterations = 1;
  const std::vector<std::uint8_t> none(16, 0);
  CHECK_THROWS(halo::fit_image_field(img, field, tc, none));
  std::vector<std::uint8_t> wrong(15, 1);
  CHECK_THROWS(halo::fit_image_field(img, field, tc, wrong));
  tc.iterations = -1;
  CHECK_THROWS(halo::fit_image_field(img, field, tc));
}

TEST_CASE("zero-area mask yields the empty accuracy sentinel") {
  const Image pattern = halo::make_checkerboard(8, 8, 2, 2);
  const ToyField field = small_field();
  ToyTrainConfig tc;
  tc.iterations = 5;
  tc.batch_size = 8;
  const halo::ExtrapolationResult res =
      halo::extrapolate_experiment(pattern, CornerMask{0, 0}, field, tc);
  CHECK(res.masked_pixels == 0);
  CHECK_FALSE(res.masked_accuracy.has_value());
  CHECK(res.prediction.width == 8);
}

TEST_CASE("extrapolation accuracy reflects thresholded agreement") {
  const Image pattern = halo::make_checkerboard(8, 8, 2, 2);
  const ToyField field = small_field();
  ToyTrainConfig tc;
  tc.iterations = 10;
  tc.batch_size = 8;
  const halo::ExtrapolationResult res =
      halo::extrapolate_experiment(pattern, CornerMask{4, 4}, field, tc);
  REQUIRE(res.masked_pixels == 16);
  REQUIRE(res.masked_accuracy.has_value());
  CHECK(*res.masked_accuracy >= 0.0);
  CHECK(*res.masked_accuracy <= 1.0);

  // Recompute the advertised statistic from the prediction itself.
  long hits = 0;
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x)
      hits += (pattern.at(x, y, 0) >= 0.5) == (res.prediction.at(x, y, 0) >= 0.5);
  CHECK(*res.masked_accuracy == doctest::Approx(hits / 16.0));
}

TEST_CASE("interpolation residual ratio is bounded and uses the dense grid") {
  const Image img = halo::make_toy_image(8, 2);
  const ToyField field = small_field();
  const Eigen::VectorXd params = field.init_params(5);
  const halo::InterpolationResult res =
      halo::interpolate_experiment(img, field, params, 2);
  CHECK(res.upsampled.width == 16);
  CHECK(res.reference.width == 16);
  CHECK(res.residual_hf_ratio >= 0.0);
  CHECK(res.residual_hf_ratio <= 1.0);
}

TEST_CASE("toy config round-trips through json and validates geometry") {
  halo::Toy2dConfig cfg;
  cfg.image_size = 32;
  cfg.checker_cells = 4;
  cfg.seed = 77;
  cfg.low = halo::SinusoidalEncodingConfig{3, 2.0, false};
  const nlohmann::json j = cfg;
  const halo::Toy2dConfig back = j.get<halo::Toy2dConfig>();
  CHECK(back.image_size == 32);
  CHECK(back.seed == 77);
  CHECK(std::get<halo::SinusoidalEncodingConfig>(back.low).bands == 3);
  CHECK(back.out_dir == cfg.out_dir);

  halo::Toy2dConfig bad;
  bad.checker_cells = 7;  // 64 % 7 != 0
  CHECK_THROWS(bad.validate());
  bad = halo::Toy2dConfig{};
  bad.upsample_factor = 0;
  CHECK_THROWS(bad.validate());
  bad = halo::Toy2dConfig{};
  bad.mask_divisor = 5;
  CHECK_THROWS(bad.validate());
  bad = halo::Toy2dConfig{};
  bad.extrap_seeds = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("shrunken toy run writes panels and a structured report") {
  TempDir dir("toy2d");
  halo::Toy2dConfig cfg;
  cfg.low = halo::SinusoidalEncodingConfig{2, 5.0, true};
  cfg.high = halo::SinusoidalEncodingConfig{5, 5.0, true};
  cfg.depth = 2;
  cfg.width = 16;
  cfg.iterations = 60;
  cfg.extrap_iterations = 40;
  cfg.batch_size = 32;
  cfg.image_size = 16;
  cfg.upsample_factor = 2;
  cfg.checker_cells = 4;
  cfg.mask_divisor = 4;
  cfg.extrap_seeds = 2;
  cfg.out_dir = dir.sub("out");
  cfg.validate();

  const nlohmann::json report = halo::run_toy2d(cfg);
  CHECK(std::filesystem::exists(cfg.out_dir / "report.json"));
  CHECK(std::filesystem::exists(cfg.out_dir / "interpolation.png"));
  CHECK(std::filesystem::exists(cfg.out_dir / "extrapolation.png"));

  const auto& interp = report.at("interpolation");
  CHECK(interp.contains("train_psnr_low"));
  CHECK(interp.contains("train_psnr_high"));
  CHECK(interp.at("residual_hf_ratio_low").get<double>() >= 0.0);
  CHECK(interp.at("residual_hf_ratio_high").get<double>() <= 1.0);

  const auto& extrap = report.at("extrapolation");
  CHECK(extrap.at("runs").size() == 2);
  const int wins = extrap.at("high_wins").get<int>();
  CHECK(wins >= 0);
  CHECK(wins <= 2);
  CHECK(extrap.at("mask").at(0) == 4);

  // The written report parses back to the returned one.
  std::ifstream in(cfg.out_dir / "report.json");
  nlohmann::json disk;
  in >> disk;
  CHECK(disk.at("extrapolation").at("high_wins") == wins);
}
