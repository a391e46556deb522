#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dgct/phantom.hpp"
#include "test_support.hpp"

using namespace dgct;

namespace {

ConeBeamGeometry tiny_geom(int n) {
  ConeBeamGeometry g;
  g.nu = n;
  g.nv = n;
  return g;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("default phantom values") {
    const auto p = default_phantom(3.0);
    CHECK(phantom_density(p, Vec3(0.15, 0, 0.05), 0.0) == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(phantom_density(p, Vec3(-0.15, 0, 0.05), 0.0) == doctest::Approx(0.05).epsilon(1e-12));
    for (double t : {0.0, 0.4, 1.7, 2.9}) {
      CHECK(phantom_density(p, Vec3(0.49, 0.24, 0.44), t) == 0.0);
    }
    const double at0 = phantom_density(p, Vec3(0.15, 0, 0.05), 0.0);
    CHECK(std::abs(phantom_density(p, Vec3(0.15, 0, 0.05), 1.5) - at0) < 1e-12);
    CHECK(std::abs(phantom_density(p, Vec3(0.15, 0, 0.05), 3.0) - at0) < 1e-12);
    CHECK_THROWS_AS(default_phantom(0.0), InputDomainError);
    CHECK_THROWS_AS(default_phantom(-1.0), InputDomainError);
  }

  TEST_CASE("component layout") {
    const auto p = default_phantom(3.0);
    REQUIRE(p.components.size() == 4);
    CHECK(p.edge_width == 0.01);
    const auto& lung = p.components[1];
    const Vec3 a = p.semi_axes_at(lung, 0.75);  // quarter period: sin = 1
    CHECK(a.z() == doctest::Approx(0.21).epsilon(1e-12));
    const auto& tumor = p.components[3];
    CHECK(p.center_at(tumor, 0.75).z() == doctest::Approx(0.07).epsilon(1e-12));
    CHECK(p.semi_axes_at(tumor, 0.0).isApprox(Vec3::Constant(0.03)));
  }

  TEST_CASE("tumor boundary lies strictly between interiors") {
    const auto p = default_phantom(3.0);
    const double v = phantom_density(p, Vec3(0.18, 0, 0.05), 0.0);
    CHECK(v > 0.05);
    CHECK(v < 0.45);
  }

  TEST_CASE("density is periodic and non-negative") {
    const auto p = default_phantom(3.0);
    testing::SplitMix64 rng(11);
    for (int i = 0; i < 100; ++i) {
      const Vec3 x(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      const double t = rng.uniform(0.0, 40.0);
      const double a = phantom_density(p, x, t);
      CHECK(a >= 0.0);
      CHECK(std::abs(a - phantom_density(p, x, t + 3.0)) <= 1e-12);
    }
  }

  TEST_CASE("indicator is monotone across the ramp") {
    const auto p = default_phantom(3.0);
    const auto& body = p.components[0];
    double prev = 2.0;
    for (int i = 0; i <= 40; ++i) {
      const double x = 0.24 + 0.0005 * i;  // crosses the 0.25 y semi-axis
      const double v = component_indicator(p, body, Vec3(0, x, 0), 0.0);
      CHECK(v <= prev);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
    CHECK(component_indicator(p, body, Vec3(0, 0.24, 0), 0.0) == 1.0);
    CHECK(component_indicator(p, body, Vec3(0, 0.26, 0), 0.0) == 0.0);
  }

  TEST_CASE("empty phantom projects to zero") {
    BreathingPhantom p;
    const Image img = simulate_projection(p, tiny_geom(8), 0.3, 1.0);
    for (double v : img.data) CHECK(v == 0.0);
  }

  TEST_CASE("projection is linear in density") {
    auto p = default_phantom(3.0);
    const auto g = tiny_geom(12);
    const Image a = simulate_projection(p, g, 0.9, 1.3);
    for (auto& c : p.components) c.density_delta *= 2.0;
    const Image b = simulate_projection(p, g, 0.9, 1.3);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(b.data[i] - 2.0 * a.data[i]) <= 1e-10 * std::max(1.0, std::abs(b.data[i])));
    }
  }

  TEST_CASE("quadrature self-convergence") {
    const auto p = default_phantom(3.0);
    const auto g = tiny_geom(64);
    const QuadratureOptions base;
    QuadratureOptions fine;
    fine.max_step = p.edge_width / 4;
    fine.min_subintervals = 2 * base.min_subintervals;
    for (int v = 0; v < 64; v += 2) {
      for (int u = 1; u < 64; u += 2) {
        const Ray r = make_ray(g, 0.4, u, v);
        const double a = phantom_line_integral(p, r, g.bounds, 0.7);
        const double b = phantom_line_integral(p, r, g.bounds, 0.7, fine);
        CHECK(std::abs(a - b) <= 1e-6 * b);
      }
    }
  }

  TEST_CASE("projections are periodic and bounded") {
    const auto p = default_phantom(3.0);
    const auto g = tiny_geom(16);
    const Image a = simulate_projection(p, g, 2.0, 4.2);
    const Image b = simulate_projection(p, g, 2.0, 7.2);
    const double bound = 0.7 * g.bounds.diagonal();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-9);
      CHECK(a.data[i] >= 0.0);
      CHECK(a.data[i] <= bound);
    }
  }

  TEST_CASE("dataset timestamps and determinism") {
    const auto p = default_phantom(3.0);
    const auto g = tiny_geom(4);
    const auto d = generate_dataset(p, g, 300, 60.0, 5);
    REQUIRE(d.size() == 300);
    for (std::size_t j = 1; j < d.size(); ++j) {
      CHECK(d.items[j].timestamp - d.items[j - 1].timestamp == doctest::Approx(0.2).epsilon(1e-12));
      CHECK(d.items[j].angle >= 0.0);
      CHECK(d.items[j].angle < 2 * std::numbers::pi);
    }
    CHECK(d.true_period.value() == 3.0);
    CHECK(d.duration == 60.0);

    const auto one = generate_dataset(p, g, 1, 10.0, 5);
    REQUIRE(one.size() == 1);
    CHECK(one.items[0].timestamp == 5.0);

    const auto a = generate_dataset(p, g, 20, 10.0, 9);
    const auto b = generate_dataset(p, g, 20, 10.0, 9);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a.items[j].angle == b.items[j].angle);
      CHECK(a.items[j].image.data == b.items[j].image.data);
    }
    CHECK_THROWS_AS(generate_dataset(p, g, 0, 10.0, 1), InputDomainError);
    CHECK_THROWS_AS(generate_dataset(p, g, 3, 0.0, 1), InputDomainError);
  }

  TEST_CASE("ground-truth volume samples the density") {
    const auto p = default_phantom(3.0);
    VolumeSpec spec;
    spec.res = {8, 8, 8};
    const Volume v = phantom_volume(p, spec, 0.5);
    for (int k = 0; k < 8; k += 3) {
      for (int j = 0; j < 8; j += 2) {
        for (int i = 0; i < 8; ++i) {
          CHECK(v.at(i, j, k) == phantom_density(p, spec.voxel_center(i, j, k), 0.5));
        }
      }
    }
  }
}
