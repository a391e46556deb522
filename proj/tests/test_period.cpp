#include <doctest.h>

#include <cmath>

#include "dgct/losses.hpp"
#include "dgct/period.hpp"
#include "test_support.hpp"

using namespace dgct;

namespace {

PlaneGridConfig tiny_cfg() {
  PlaneGridConfig c;
  c.levels = 2;
  c.base_res = 4;
  c.time_res = 4;
  c.features = 4;
  return c;
}

ConeBeamGeometry small_geom(int n) {
  ConeBeamGeometry g;
  g.nu = n;
  g.nv = n;
  return g;
}

DynamicModel random_model(testing::SplitMix64& rng, std::size_t k, double tau) {
  DynamicModel m;
  m.gaussians = testing::random_gaussians(rng, k, 0.08, 0.16);
  m.field = testing::random_field(rng, tiny_cfg(), 8);
  m.period.tau = tau;
  return m;
}

}  // namespace

TEST_SUITE("period") {
  TEST_CASE("shift sampling") {
    Rng rng(17);
    int plus = 0;
    for (int i = 0; i < 10000; ++i) {
      const int n = sample_shift(rng);
      REQUIRE((n == 1 || n == -1));
      plus += n == 1 ? 1 : 0;
    }
    CHECK(plus >= 4700);
    CHECK(plus <= 5300);

    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_shift(a) == sample_shift(b));

    Rng w(6);
    std::array<int, 7> counts{};
    for (int i = 0; i < 6000; ++i) {
      const int n = sample_shift(w, 3);
      REQUIRE(n != 0);
      REQUIRE(std::abs(n) <= 3);
      ++counts[n + 3];
    }
    for (int n : {-3, -2, -1, 1, 2, 3}) CHECK(counts[n + 3] > 800);
  }

  TEST_CASE("period estimate") {
    LearnablePeriod p;
    // exp(1.0296) = 2.7999456...; the initial period is 2.8 s to four places.
    CHECK(period_estimate(p) == doctest::Approx(2.7999456).epsilon(1e-7));
    CHECK(std::abs(period_estimate(p) - 2.8) < 6e-5);
    p.tau = 0.0;
    CHECK(period_estimate(p) == 1.0);
    p.tau = -30.0;
    CHECK(period_estimate(p) > 0.0);
    p.tau = std::log(3.0);
    CHECK(period_estimate(p) == doctest::Approx(3.0).epsilon(1e-15));
  }

  TEST_CASE("static model reproducing its own projection has zero loss") {
    testing::SplitMix64 rng(51);
    DynamicModel m;
    m.gaussians = testing::random_gaussians(rng, 6, 0.08, 0.16);
    m.field.planes = PlaneGrid::initialized(tiny_cfg(), 2);
    m.field.decoder = DeformDecoder::initialized(8, 8, 3);
    const auto g = small_geom(16);
    Projection proj;
    proj.angle = 0.9;
    proj.timestamp = 12.0;
    proj.image = render_image(m.gaussians, g, proj.angle);
    for (int n : {-1, 1}) {
      const auto r = periodic_consistency_loss(m, g, proj, n, 0.25);
      CHECK(std::abs(r.value) < 1e-12);
      CHECK(r.shifted_time == doctest::Approx(12.0 + n * 2.8).epsilon(1e-4));
      CHECK(r.grads.tau == 0.0);
    }
  }

  TEST_CASE("lambda1 = 0 reduces to the L1 term") {
    testing::SplitMix64 rng(52);
    const DynamicModel m = random_model(rng, 4, 1.0);
    const auto g = small_geom(16);
    Projection proj;
    proj.angle = 2.1;
    proj.timestamp = 4.0;
    proj.image = testing::random_image(3, 16, 16);
    const auto r = periodic_consistency_loss(m, g, proj, 1, 0.0);
    const Image shifted =
        render_image(deform(m.gaussians, m.field, 4.0 + std::exp(1.0)), g, proj.angle);
    CHECK(r.value == l1(proj.image, shifted));
    CHECK(r.dssim == 0.0);
    const auto full = periodic_consistency_loss(m, g, proj, 1, 0.5);
    CHECK(full.value == doctest::Approx(r.value + 0.5 * dssim(proj.image, shifted)).epsilon(1e-12));
  }

  TEST_CASE("time-independent field gives zero period gradient") {
    testing::SplitMix64 rng(53);
    DynamicModel m = random_model(rng, 4, 1.1);
    for (int l = 0; l < 2; ++l) {
      for (int p = 3; p < 6; ++p) {
        for (double& x : m.field.planes.plane(l, p)) x = 1.0;
      }
    }
    const auto g = small_geom(16);
    Projection proj;
    proj.angle = 0.3;
    proj.timestamp = 5.0;
    proj.image = testing::random_image(4, 16, 16);
    const auto a = periodic_consistency_loss(m, g, proj, 1, 0.25);
    const auto b = periodic_consistency_loss(m, g, proj, -1, 0.25);
    CHECK(a.grads.tau == 0.0);
    CHECK(b.grads.tau == 0.0);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
  }

  TEST_CASE("period gradient matches central differences") {
    testing::SplitMix64 rng(54);
    const auto g = small_geom(16);
    int checked = 0;
    while (checked < 6) {
      DynamicModel m = random_model(rng, 4, rng.uniform(0.6, 1.4));
      Projection proj;
      proj.angle = rng.uniform(0, 6.28);
      proj.timestamp = rng.uniform(2.0, 8.0);
      proj.image = testing::random_image(rng.next(), 16, 16);
      const int n = checked % 2 ? 1 : -1;
      const double shifted = proj.timestamp + n * std::exp(m.period.tau);
      if (!testing::clear_of_grid_lines(m.gaussians, m.field, {shifted}, 2e-3)) continue;
      if (testing::min_preactivation(m.gaussians, m.field, shifted) < 1e-3) continue;
      if (testing::near_cull_boundary(deform(m.gaussians, m.field, shifted), g, proj.angle, 2e-3)) {
        continue;
      }
      const auto r = periodic_consistency_loss(m, g, proj, n, 0.25);
      const auto f = [&] { return periodic_consistency_loss(m, g, proj, n, 0.25).value; };
      const auto d = testing::central_differences({&m.period.tau, 1}, f, 1e-6);
      CHECK(r.grads.tau == doctest::Approx(d[0]).epsilon(1e-2));
      ++checked;
    }
  }

  TEST_CASE("gradients reach every model parameter") {
    testing::SplitMix64 rng(55);
    DynamicModel m = random_model(rng, 3, 1.0);
    const auto g = small_geom(16);
    Projection proj;
    proj.angle = 1.4;
    proj.timestamp = 6.0;
    proj.image = testing::random_image(9, 16, 16);
    const auto r = periodic_consistency_loss(m, g, proj, -1, 0.25);
    REQUIRE(r.grads.gaussians.size() == 3);
    const auto f = [&] { return periodic_consistency_loss(m, g, proj, -1, 0.25).value; };
    CHECK(testing::relative_error(r.grads.gaussians.density_values(),
                                  testing::central_differences(m.gaussians.density_values(), f,
                                                               1e-6)) < 1e-2);
  }
}
