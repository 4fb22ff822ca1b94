#include <doctest.h>

#include <halo/image.hpp>
#include <halo/random.hpp>

#include "support/testutil.hpp"

#include <cmath>

using halo::Image;

namespace {

Image random_image(int w, int h, int c, std::uint64_t seed) {
  Image img(w, h, c);
  halo::Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("Image indexing is row-major, channel-interleaved") {
  Image img(3, 2, 2);
  img.at(1, 0, 1) = 0.5;
  img.at(2, 1, 0) = 0.25;
  CHECK(img.data[(0 * 3 + 1) * 2 + 1] == 0.5);
  CHECK(img.data[(1 * 3 + 2) * 2 + 0] == 0.25);
  CHECK(img.pixel_count() == 6);
}

TEST_CASE("png round-trip is lossless to 8-bit quantization") {
  halo::test::TempDir dir("png");
  const Image img = random_image(17, 9, 3, 1);
  const auto path = dir.sub("img.png");
  halo::write_png(path, img);
  const Image back = halo::read_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.channels == img.channels);
  CHECK(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("png write clamps out-of-range values") {
  halo::test::TempDir dir("pngc");
  Image img(2, 1, 1);
  img.at(0, 0, 0) = -0.4;
  img.at(1, 0, 0) = 1.7;
  const auto path = dir.sub("clamp.png");
  halo::write_png(path, img);
  const Image back = halo::read_png(path);
  CHECK(back.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(back.at(1, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("grayscale png round-trips as one channel") {
  halo::test::TempDir dir("pngg");
  const Image img = random_image(8, 8, 1, 2);
  const auto path = dir.sub("gray.png");
  halo::write_png(path, img);
  const Image back = halo::read_png(path);
  CHECK(back.channels == 1);
  CHECK(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("composite_over_white blends alpha and passes rgb through") {
  Image rgba(1, 1, 4);
  rgba.at(0, 0, 0) = 0.2;
  rgba.at(0, 0, 1) = 0.4;
  rgba.at(0, 0, 2) = 0.6;
  rgba.at(0, 0, 3) = 0.5;
  const Image flat = halo::composite_over_white(rgba);
  REQUIRE(flat.channels == 3);
  CHECK(flat.at(0, 0, 0) == doctest::Approx(0.2 * 0.5 + 0.5));
  CHECK(flat.at(0, 0, 1) == doctest::Approx(0.4 * 0.5 + 0.5));
  CHECK(flat.at(0, 0, 2) == doctest::Approx(0.6 * 0.5 + 0.5));

  const Image rgb = random_image(4, 3, 3, 3);
  CHECK(max_abs_diff(halo::composite_over_white(rgb), rgb) == 0.0);
}

TEST_CASE("to_luminance uses Rec. 601 weights") {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 1.0;
  img.at(0, 0, 1) = 0.5;
  img.at(0, 0, 2) = 0.25;
  const Image y = halo::to_luminance(img);
  REQUIRE(y.channels == 1);
  CHECK(y.at(0, 0, 0) ==
        doctest::Approx(0.299 * 1.0 + 0.587 * 0.5 + 0.114 * 0.25));

  const Image gray = random_image(5, 5, 1, 4);
  CHECK(max_abs_diff(halo::to_luminance(gray), gray) == 0.0);
}

TEST_CASE("channel_mean averages the planes") {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 0.3;
  img.at(0, 0, 1) = 0.6;
  img.at(0, 0, 2) = 0.9;
  const Image m = halo::channel_mean(img);
  REQUIRE(m.channels == 1);
  CHECK(m.at(0, 0, 0) == doctest::Approx(0.6));
}

TEST_CASE("bilinear_resize is exact for constant images and identity size") {
  const Image img = random_image(6, 4, 3, 5);
  CHECK(max_abs_diff(halo::bilinear_resize(img, 6, 4), img) < 1e-12);

  Image flat(5, 5, 1, 0.7);
  const Image up = halo::bilinear_resize(flat, 13, 9);
  for (double v : up.data) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("hstack concatenates with a one-pixel separator") {
  Image a(2, 2, 1, 0.0);
  Image b(3, 2, 1, 1.0);
  const Image s = halo::hstack({a, b});
  CHECK(s.width == 2 + 1 + 3);
  CHECK(s.height == 2);
  CHECK(s.at(0, 0, 0) == 0.0);
  CHECK(s.at(3, 0, 0) == 1.0);
  CHECK(s.at(5, 1, 0) == 1.0);
}

TEST_CASE("vstack concatenates vertically") {
  Image a(2, 2, 1, 0.0);
  Image b(2, 3, 1, 1.0);
  const Image s = halo::vstack({a, b});
  CHECK(s.width == 2);
  CHECK(s.height == 2 + 1 + 3);
  CHECK(s.at(0, 0, 0) == 0.0);
  CHECK(s.at(0, 3, 0) == 1.0);
}

TEST_CASE("float map round-trip preserves float32 values and semantic tag") {
  halo::test::TempDir dir("fmap");
  Image img(7, 3, 1);
  halo::Rng rng(6);
  for (auto& v : img.data) {
    // Store float-representable values so the round trip is bit-exact.
    v = static_cast<double>(static_cast<float>(rng.uniform(-10.0, 10.0)));
  }
  const auto path = dir.sub("depth.f32");
  halo::write_float_map(path, img, "depth");
  const halo::FloatMap back = halo::read_float_map(path);
  CHECK(back.semantic == "depth");
  REQUIRE(back.image.same_shape(img));
  CHECK(max_abs_diff(back.image, img) == 0.0);
}

TEST_CASE("read_float_map rejects a corrupt header") {
  halo::test::TempDir dir("fmapbad");
  const auto path = dir.sub("bad.f32");
  {
    std::ofstream out(path, std::ios::binary);
    out << "this is not a float map";
  }
  CHECK_THROWS(halo::read_float_map(path));
}

TEST_CASE("read_png throws on a missing file") {
  CHECK_THROWS(halo::read_png("/nonexistent/halo-test-missing.png"));
}
