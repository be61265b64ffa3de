#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nti/error.hpp"
#include "nti/metrics.hpp"
#include "toy.hpp"

using nti::Vec;

TEST_CASE("mse and psnr") {
  const Vec a = Vec::LinSpaced(4, -1.0, 2.0);
  const auto same = nti::mse_psnr(a, a, 8.0);
  CHECK(same.mse == 0.0);
  CHECK(same.psnr == nti::kPsnrCap);

  const auto off = nti::mse_psnr(a, a.array() + 0.1, 8.0);
  CHECK(off.mse == doctest::Approx(0.01));
  CHECK(off.psnr == doctest::Approx(20.0 * std::log10(80.0)));
  CHECK(off.psnr == doctest::Approx(38.06).epsilon(1e-4));

  nti::Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec x = nti::standard_normal(rng, 5), y = nti::standard_normal(rng, 5);
    double s = 0;
    for (int j = 0; j < 5; ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
    const auto m = nti::mse_psnr(x, y, 3.0);
    CHECK(m.mse == doctest::Approx(s / 5).epsilon(1e-14));
    CHECK(m.psnr == doctest::Approx(10.0 * std::log10(9.0 / (s / 5))).epsilon(1e-12));
  }

  CHECK_THROWS_AS(nti::mse_psnr(a, Vec::Zero(3), 1.0), nti::ShapeError);
  CHECK_THROWS_AS(nti::mse_psnr(a, a, 0.0), nti::ParameterError);
}

TEST_CASE("psnr strictly decreases in mse and is capped") {
  const Vec zero = Vec::Zero(1);
  double prev = INFINITY;
  for (double d : {1e-120, 1e-9, 1e-3, 0.1, 1.0, 10.0}) {
    const double p = nti::mse_psnr(zero, Vec::Constant(1, d), 8.0).psnr;
    CHECK(p <= nti::kPsnrCap);
    if (d > 1e-9) CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("gaussian log-likelihood") {
  CHECK(nti::gaussian_loglik(Vec::Zero(2)) == doctest::Approx(-std::log(2 * std::numbers::pi)));
  CHECK(nti::gaussian_loglik(Vec::Zero(2)) == doctest::Approx(-1.8379).epsilon(1e-4));
  Vec e(2);
  e << 1.0, 0.0;
  CHECK(nti::gaussian_loglik(e) == doctest::Approx(-2.3379).epsilon(1e-4));

  double prev = INFINITY;
  for (double r : {0.0, 0.5, 1.0, 3.0}) {
    const double l = nti::gaussian_loglik(Vec::Constant(3, r));
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("gaussian log-likelihood Monte-Carlo mean") {
  nti::Rng rng(17);
  const int d = 2, n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double l = nti::gaussian_loglik(nti::standard_normal(rng, d));
    s += l;
    s2 += l * l;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  const double expect = -0.5 * d * (std::log(2 * std::numbers::pi) + 1.0);
  CHECK(std::abs(mean - expect) <= 3 * se);
}

TEST_CASE("trajectory deviation") {
  nti::Trajectory a, b;
  for (int k = 0; k < 4; ++k) a.codes.push_back(Vec::Constant(2, k));
  b = a;
  for (double d : nti::trajectory_deviation(a, b)) CHECK(d == 0.0);
  b.codes[1] = Vec::Constant(2, 1.0 + 3.0);
  const auto dev = nti::trajectory_deviation(a, b);
  CHECK(dev[1] == doctest::Approx(3.0 * std::sqrt(2.0)));
  CHECK(dev[3] == 0.0);
  b.codes.pop_back();
  CHECK_THROWS_AS(nti::trajectory_deviation(a, b), nti::ShapeError);
}

TEST_CASE("guided replay drifts from the pivot toward the data end") {
  const toy::Model toy;
  const nti::Embedding c = toy.table.embed("class0");
  const nti::Embedding null = nti::Embedding::zeros(3);
  std::vector<double> first, last;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto pivot = nti::ddim_invert(toy.den, toy.sample(0, seed), c, 1.0, toy.sched);
    const auto replay = nti::ddim_sample(toy.den, pivot.terminal(), c, std::span(&null, 1), 7.5, toy.sched);
    const auto dev = nti::trajectory_deviation(pivot, replay);
    CHECK(dev[50] == 0.0);
    first.push_back(dev[49]);
    last.push_back(dev[0]);
  }
  CHECK(toy::median(last) >= toy::median(first));
}

TEST_CASE("component responsibilities") {
  const toy::Model toy;
  // the origin is equidistant from all circle means
  for (int k = 0; k < 3; ++k)
    CHECK(nti::component_responsibility(toy.mix, Vec::Zero(2), k) == doctest::Approx(1.0 / 3.0));

  nti::Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Vec x = 3.0 * nti::standard_normal(rng, 2);
    double s = 0;
    for (int k = 0; k < 3; ++k) s += nti::component_responsibility(toy.mix, x, k);
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(nti::component_responsibility(toy.mix, Vec::Zero(2), 3), nti::ParameterError);
  CHECK_THROWS_AS(nti::component_responsibility(toy.mix, Vec::Zero(3), 0), nti::ShapeError);
}

TEST_CASE("responsibility at a mean with 8 sigma separation") {
  nti::MixtureModel m;
  Vec a(2), b(2);
  a << 0.0, 0.0;
  b << 8.0, 0.0;
  m.means = {a, b};
  m.sigma = 1.0;
  // density ratio of the far component is exp(-64/2)
  const double expect = 1.0 / (1.0 + std::exp(-32.0));
  const double r = nti::component_responsibility(m, a, 0);
  CHECK(r > 0.999);
  CHECK(r == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("psnr peak is the bounding-box extent plus six sigma") {
  const toy::Model toy;
  // circle means at 0, 120, 240 degrees: y extent 8 sin(60) dominates
  CHECK(nti::psnr_peak(toy.mix) == doctest::Approx(8.0 * std::sqrt(3.0) / 2.0 + 1.8));
}

TEST_CASE("metric report JSON") {
  nti::MetricReport r;
  r.mse = 0.5;
  r.deviation = {0.0, 1.0};
  const auto j = nti::to_json(r);
  CHECK(j.at("mse") == 0.5);
  CHECK(j.at("deviation").size() == 2);
  CHECK(j.contains("peak"));
}
