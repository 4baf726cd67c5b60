#include "cathlab/drr_renderer.hpp"
#include "cathlab/error.hpp"
#include "cathlab/image_enhance.hpp"
#include "support/enhance_scene.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace cathlab;
using namespace cathlab::enhance;

namespace {

// Bright horizontal ridge with a Gaussian cross-section of the given sigma.
Image2D ridge(int n, double sigma, double amp = 1.0) {
  Image2D img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) img.at(x, y) = amp * std::exp(-0.5 * std::pow((y - n / 2) / sigma, 2));
  return img;
}

Image2D rotate90(const Image2D& img) {
  Image2D out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out.at(img.height() - 1 - y, x) = img.at(x, y);
  return out;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("clahe") {
  const Image2D flat(64, 64, 0.4);
  const Image2D cf = clahe(flat, 0.03, 8, 8);
  CHECK(cf.max() - cf.min() == 0.0);

  Image2D checker(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) checker.at(x, y) = ((x / 4 + y / 4) % 2) ? 0.7 : 0.3;
  const Image2D cc = clahe(checker, 0.03, 16, 16);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x + 1 < 64; ++x)
      if (checker.at(x, y) != checker.at(x + 1, y))
        CHECK((checker.at(x, y) < checker.at(x + 1, y)) == (cc.at(x, y) < cc.at(x + 1, y)));

  // low-contrast blob gains dynamic range
  Image2D blob(96, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) blob.at(x, y) = 0.45 + 0.05 * std::exp(-((x - 48) * (x - 48) + (y - 40) * (y - 40)) / 300.0);
  const Image2D cb = clahe(blob, 0.03, 12, 12);
  CHECK(cb.max() - cb.min() >= blob.max() - blob.min());
  CHECK(cb.min() >= 0.0);
  CHECK(cb.max() <= 1.0);

  CHECK_THROWS_AS(clahe(flat, 0.03, 65, 8), Error);
  CHECK_THROWS_AS(clahe(flat, 0.0, 8, 8), Error);
}

TEST_CASE("LoG kernel and filter") {
  CHECK(log_value(0, 0, 1.0) == doctest::Approx(-1.0 / kPi).epsilon(1e-15));
  CHECK(log_value(0, 0, 1.0) == doctest::Approx(-0.31831).epsilon(1e-5));
  int r = 0;
  const auto k = log_kernel(1.0, &r);
  CHECK(r == 4);
  CHECK(k[r * (2 * r + 1) + r] == doctest::Approx(-1.0 / kPi));

  const Image2D flat(40, 40, 3.7);
  for (double s : {0.8, 1.2, 1.6}) {
    const Image2D resp = log_filter(flat, s);
    CHECK(std::max(std::abs(resp.min()), std::abs(resp.max())) < 1e-9);
  }

  // ridge of width ~2 sigma stands out from the flat background
  const Image2D rg = ridge(64, 1.2);
  const Image2D resp = log_filter(rg, 1.2);
  const double on = std::abs(resp.at(32, 32));
  const double off = std::abs(resp.at(32, 4)) + 1e-12;
  CHECK(on >= 10.0 * off);
  // the printed kernel is negative at the center, so a bright ridge responds negatively
  CHECK(resp.at(32, 32) < 0.0);
  CHECK(log_filter(rg, 1.2, true).at(32, 32) == doctest::Approx(-resp.at(32, 32)));

  // 90 degree rotation commutes with the symmetric kernel
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  Image2D noise(33, 27);
  for (double& p : noise.pixels()) p = u(rng);
  const Image2D a = rotate90(log_filter(noise, 1.6));
  const Image2D b = log_filter(rotate90(noise), 1.6);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  CHECK(m < 1e-12);
}

TEST_CASE("vessel contrast") {
  Image2D img(10, 10);
  for (int i = 0; i < 100; ++i) img.pixels()[i] = 0.01 * i;
  EnhanceParams p;
  p.vessel_offset = 0.0;
  const Image2D ones(10, 10, 1.0), zeros(10, 10, 0.0);
  const Image2D a = vessel_contrast(img, ones, p), b = vessel_contrast(img, zeros, p);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(a.pixels()[i] == doctest::Approx(1.4 * img.pixels()[i]));
    CHECK(b.pixels()[i] == doctest::Approx(0.9 * img.pixels()[i]));
  }

  // two-level image, half vessel: the level ratio grows by exactly 1.4 / 0.9
  Image2D two(10, 10, 0.2), prob(10, 10, 0.0);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 10; ++x) {
      two.at(x, y) = 0.6;
      prob.at(x, y) = 1.0;
    }
  const Image2D t = vessel_contrast(two, prob, p);
  CHECK((t.at(0, 0) / t.at(0, 9)) / (0.6 / 0.2) == doctest::Approx(1.4 / 0.9));

  // linear per branch when beta = 0
  Image2D scaled = two;
  for (double& v : scaled.pixels()) v *= 3.0;
  const Image2D ts = vessel_contrast(scaled, prob, p);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(ts.pixels()[i] == doctest::Approx(3.0 * t.pixels()[i]));

  // default offset keeps the global mean
  EnhanceParams q;
  CHECK(vessel_contrast(two, prob, q).mean() == doctest::Approx(two.mean()).epsilon(1e-12));

  CHECK_THROWS_AS(vessel_contrast(img, Image2D(9, 10, 0.0), p), Error);
}

TEST_CASE("CNR and FWHM") {
  // fg constant 10; bg values with mean 0 and population std 1
  Image2D img(4, 2, std::vector<double>{10, 10, 10, 10, -1, 1, -1, 1});
  Mask fg{1, 1, 1, 1, 0, 0, 0, 0}, bg{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(cnr(img, fg, bg) == doctest::Approx(10.0).epsilon(1e-15));
  Image2D same(4, 2, std::vector<double>{-1, 1, -1, 1, -1, 1, -1, 1});
  CHECK(cnr(same, fg, bg) == doctest::Approx(0.0));
  try {
    cnr(Image2D(4, 2, 1.0), fg, bg);
    FAIL("expected undefined CNR");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Undefined);
  }

  std::vector<double> g;
  for (int i = -20; i <= 20; ++i) g.push_back(std::exp(-0.5 * i * i / 4.0));
  CHECK(std::abs(fwhm(g) - 2.0 * std::sqrt(2.0 * std::log(2.0)) * 2.0) / 4.7096 < 0.02);
  CHECK_THROWS_AS(fwhm({0.0, 1.0, 2.0, 3.0}), Error);  // no crossing on the right
}

TEST_CASE("vesselness") {
  CHECK(vesselness(Image2D(32, 32, 5.0), 1.5).max() == 0.0);

  const Image2D rg = ridge(64, 2.0);
  const Image2D v = vesselness(rg, 2.0);
  std::vector<double> on, off;
  for (int x = 8; x < 56; ++x) {
    on.push_back(v.at(x, 32));
    off.push_back(v.at(x, 5));
  }
  CHECK(median(on) >= 10.0 * (median(off) + 1e-12));
  CHECK(v.max() < 1.0);
  CHECK(v.min() >= 0.0);

  // dark valley: positive dominant eigenvalue everywhere on it
  Image2D valley = rg;
  for (double& p : valley.pixels()) p = 1.0 - p;
  const Image2D vv = vesselness(valley, 2.0);
  for (int x = 8; x < 56; ++x) CHECK(vv.at(x, 32) == 0.0);
}

TEST_CASE("pipeline on a constant image stays finite") {
  const auto r = enhance_pipeline(Image2D(48, 48, 0.25), Image2D(), EnhanceParams{});
  for (double p : r.image.pixels()) CHECK(std::isfinite(p));
  CHECK(r.image.min() >= 0.0);
}

TEST_CASE("pipeline sharpens a blurred step edge") {
  Image2D step(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) step.at(x, y) = 0.5 + 0.5 * std::erf((x - 31.5) / (std::sqrt(2.0) * 2.5));
  const auto r = enhance_pipeline(step, Image2D(), EnhanceParams{});
  std::vector<double> before, after;
  for (int x = 0; x < 64; ++x) {
    before.push_back(step.at(x, 32));
    after.push_back(r.image.at(x, 32));
  }
  CHECK(edge_fwhm(after) <= edge_fwhm(before));
}

TEST_CASE("pipeline raises vessel CNR on a noisy tube DRR") {
  const auto scene = cathlab::testing::tube_scene(128);
  const Image2D noisy = cathlab::testing::add_noise(scene.clean, 0.01, 7);
  const double before = cnr(noisy, scene.fg, scene.bg);
  const auto r = enhance_pipeline(noisy, Image2D(), EnhanceParams{});
  CHECK(cnr(r.image, scene.fg, scene.bg) >= 1.2 * before);
}
