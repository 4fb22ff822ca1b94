#include <doctest.h>

#include <halo/losses.hpp>

#include "support/testutil.hpp"

#include <cmath>

TEST_CASE("loss_reconstruction is the mean per-ray squared error") {
  Eigen::Matrix3Xd pred(3, 2), gt(3, 2);
  pred << 0.5, 0.0, 0.5, 1.0, 0.5, 0.0;
  gt << 0.0, 0.0, 0.5, 1.0, 1.0, 0.0;
  // Ray 0 error: 0.25 + 0 + 0.25; ray 1 error: 0. Mean over 2 rays.
  const double want = (0.25 + 0.25) / 2.0;
  Eigen::Matrix3Xd d_pred;
  const double got = halo::loss_reconstruction(pred, gt, &d_pred);
  CHECK(got == doctest::Approx(want));
  // d/dpred = 2 (pred - gt) / B.
  CHECK(d_pred(0, 0) == doctest::Approx(2.0 * 0.5 / 2.0));
  CHECK(d_pred(1, 0) == doctest::Approx(0.0));
  CHECK(d_pred(2, 0) == doctest::Approx(2.0 * -0.5 / 2.0));
  CHECK(d_pred(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("loss_reconstruction gradient matches finite differences") {
  Eigen::Matrix3Xd pred(3, 4), gt(3, 4);
  pred.setRandom();
  gt.setRandom();
  Eigen::Matrix3Xd d_pred;
  halo::loss_reconstruction(pred, gt, &d_pred);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 3; ++r) {
      const double saved = pred(r, c);
      auto f = [&](double v) {
        pred(r, c) = v;
        const double out = halo::loss_reconstruction(pred, gt);
        pred(r, c) = saved;
        return out;
      };
      CHECK(d_pred(r, c) ==
            doctest::Approx(halo::test::central_diff(f, saved, 1e-6)).epsilon(1e-7));
    }
}

TEST_CASE("loss_ray_distill averages over gated rays only") {
  Eigen::ArrayXd pred(3), target(3), acc(3);
  pred << 3.0, 4.0, 5.0;
  target << 3.5, 4.0, 2.0;
  acc << 0.9, 0.001, 0.8;  // middle ray fails the tau=0.01 gate
  Eigen::ArrayXd d_pred;
  const halo::GatedLoss g = halo::loss_ray_distill(pred, target, acc, 0.01, &d_pred);
  CHECK(g.used == 2);
  CHECK(g.skipped == 1);
  CHECK(g.value == doctest::Approx((0.25 + 9.0) / 2.0));
  CHECK(d_pred[0] == doctest::Approx(2.0 * -0.5 / 2.0));
  CHECK(d_pred[1] == 0.0);
  CHECK(d_pred[2] == doctest::Approx(2.0 * 3.0 / 2.0));
}

TEST_CASE("loss_ray_distill with an empty gate is zero with zero grads") {
  Eigen::ArrayXd pred(2), target(2), acc(2);
  pred << 3.0, 4.0;
  target << 3.5, 4.5;
  acc << 0.001, 0.0;
  Eigen::ArrayXd d_pred;
  const halo::GatedLoss g = halo::loss_ray_distill(pred, target, acc, 0.01, &d_pred);
  CHECK(g.used == 0);
  CHECK(g.skipped == 2);
  CHECK(g.value == 0.0);
  CHECK(d_pred.abs().maxCoeff() == 0.0);
}

TEST_CASE("loss_empty averages gated occupancy over the full batch") {
  Eigen::ArrayXd acc_hi(4), acc_lo(4);
  acc_hi << 0.5, 0.2, 0.9, 0.1;
  acc_lo << 0.005, 0.5, 0.002, 0.9;  // rays 0 and 2 count as empty
  Eigen::ArrayXd d_hi;
  const double got = halo::loss_empty(acc_hi, acc_lo, 0.01, &d_hi);
  CHECK(got == doctest::Approx((0.5 + 0.9) / 4.0));
  CHECK(d_hi[0] == doctest::Approx(0.25));
  CHECK(d_hi[1] == 0.0);
  CHECK(d_hi[2] == doctest::Approx(0.25));
  CHECK(d_hi[3] == 0.0);
}

TEST_CASE("loss_empty is zero when the low field sees content everywhere") {
  Eigen::ArrayXd acc_hi(3), acc_lo(3);
  acc_hi << 0.5, 0.2, 0.9;
  acc_lo << 0.5, 0.6, 0.7;
  Eigen::ArrayXd d_hi;
  CHECK(halo::loss_empty(acc_hi, acc_lo, 0.01, &d_hi) == 0.0);
  CHECK(d_hi.abs().maxCoeff() == 0.0);
}

TEST_CASE("loss_consist is the mean squared angle gap") {
  Eigen::ArrayXd pred(2), target(2);
  pred << -1.1, -1.2;
  target << -1.0, -1.25;
  Eigen::ArrayXd d_pred;
  const double got = halo::loss_consist(pred, target, &d_pred);
  CHECK(got == doctest::Approx((0.01 + 0.0025) / 2.0));
  CHECK(d_pred[0] == doctest::Approx(2.0 * -0.1 / 2.0));
  CHECK(d_pred[1] == doctest::Approx(2.0 * 0.05 / 2.0));
}

TEST_CASE("loss_total combines terms with the empty weight") {
  halo::LossWeights w;
  w.lambda_empty = 0.1;
  CHECK(halo::loss_total(0.5, 0.3, w) == doctest::Approx(0.5 + 0.1 * 0.3));
  w.lambda_empty = 0.0;
  CHECK(halo::loss_total(0.5, 0.3, w) == doctest::Approx(0.5));
}

TEST_CASE("loss weights validation") {
  halo::LossWeights w;
  w.validate();
  w.lambda_empty = -0.1;
  CHECK_THROWS(w.validate());
  w.lambda_empty = 0.1;
  w.tau = 0.0;
  CHECK_THROWS(w.validate());
}

TEST_CASE("batch mismatches are rejected") {
  Eigen::Matrix3Xd a(3, 2), b(3, 3);
  a.setZero();
  b.setZero();
  CHECK_THROWS(halo::loss_reconstruction(a, b));

  Eigen::ArrayXd x2 = Eigen::ArrayXd::Zero(2);
  Eigen::ArrayXd x3 = Eigen::ArrayXd::Zero(3);
  CHECK_THROWS(halo::loss_ray_distill(x2, x3, x2, 0.01));
  CHECK_THROWS(halo::loss_empty(x2, x3, 0.01));
  CHECK_THROWS(halo::loss_consist(x2, x3));
}
