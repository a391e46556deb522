#include <doctest.h>

#include <cmath>

#include "dgct/deform.hpp"
#include "dgct/renderer.hpp"
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

double weighted(const GaussianSet& w, const GaussianSet& s) {
  double acc = 0.0;
  auto dot = [&](std::span<const double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  };
  dot(w.center_values(), s.center_values());
  dot(w.log_scale_values(), s.log_scale_values());
  dot(w.quat_values(), s.quat_values());
  dot(w.density_values(), s.density_values());
  return acc;
}

}  // namespace

TEST_SUITE("deform") {
  TEST_CASE("coordinate normalization") {
    NormalizationBounds b;
    b.time.end = 40.0;
    b.time.period_upper_bound = 5.0;
    CHECK(normalize_coords(Vec3::Constant(-0.5), -5.0, b) == Vec4::Zero());
    CHECK(normalize_coords(Vec3::Zero(), 20.0, b) == Vec4::Constant(0.5));
    CHECK(normalize_coords(Vec3::Zero(), 50.0, b)[3] == 1.0);
    CHECK(normalize_coords(Vec3(9, -9, 0), 0.0, b).head<2>() == Eigen::Vector2d(1, 0));
  }

  TEST_CASE("grid construction") {
    const PlaneGrid g(tiny_cfg());
    CHECK(g.resolution(0, 0) == 4);
    CHECK(g.resolution(1, 2) == 8);
    CHECK(g.all_planes().size() == 12);
    CHECK(g.plane(1, 3).size() == 8 * 8 * 4);
    PlaneGridConfig bad = tiny_cfg();
    bad.base_res = 1;
    CHECK_THROWS_AS(PlaneGrid{bad}, InputDomainError);

    const PlaneGrid init = PlaneGrid::initialized(tiny_cfg(), 3);
    for (const auto& pl : init.all_planes()) {
      for (double x : pl) {
        CHECK(x >= 0.99);
        CHECK(x <= 1.01);
      }
    }
  }

  TEST_CASE("encoding of constant-one planes") {
    const PlaneGrid g(tiny_cfg(), 1.0);
    const auto e = encode(g, Vec4(0.3, 0.7, 0.1, 0.9));
    REQUIRE(e.size() == 8);
    for (double x : e) CHECK(x == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("encoding is multilinear per plane") {
    testing::SplitMix64 rng(41);
    auto f = testing::random_field(rng, tiny_cfg(), 8);
    const Vec4 v(0.31, 0.62, 0.17, 0.45);
    const auto base = encode(f.planes, v);
    for (double& x : f.planes.plane(1, 4)) x *= 2.5;
    const auto scaled = encode(f.planes, v);
    for (int k = 0; k < 4; ++k) CHECK(scaled[k] == base[k]);
    for (int k = 4; k < 8; ++k) CHECK(scaled[k] == doctest::Approx(2.5 * base[k]).epsilon(1e-14));
  }

  TEST_CASE("encoding at grid nodes is a direct lookup") {
    testing::SplitMix64 rng(42);
    const auto f = testing::random_field(rng, tiny_cfg(), 8);
    // Level 0 has 4 nodes per axis, level 1 has 8; i/3 is a node of level 0
    // only, so use coordinates that are nodes of both: 0 and 1.
    const Vec4 v(0.0, 1.0, 1.0, 0.0);
    const auto e = encode(f.planes, v);
    for (int l = 0; l < 2; ++l) {
      for (int k = 0; k < 4; ++k) {
        double prod = 1.0;
        for (int p = 0; p < 6; ++p) {
          const int a = kPlaneAxes[p][0], b = kPlaneAxes[p][1];
          const int ia = v[a] == 0.0 ? 0 : f.planes.resolution(l, a) - 1;
          const int ib = v[b] == 0.0 ? 0 : f.planes.resolution(l, b) - 1;
          prod *= f.planes.plane(l, p)[f.planes.node_offset(l, p, ia, ib) + k];
        }
        CHECK(e[l * 4 + k] == doctest::Approx(prod).epsilon(1e-15));
      }
    }
    // Interior node of level 0 (1/3 on every axis).
    const Vec4 w = Vec4::Constant(1.0 / 3.0);
    const auto e2 = encode(f.planes, w);
    for (int k = 0; k < 4; ++k) {
      double prod = 1.0;
      for (int p = 0; p < 6; ++p) prod *= f.planes.plane(0, p)[f.planes.node_offset(0, p, 1, 1) + k];
      CHECK(e2[k] == doctest::Approx(prod).epsilon(1e-12));
    }
  }

  TEST_CASE("zero-initialized heads give the identity") {
    testing::SplitMix64 rng(43);
    const auto s = testing::random_gaussians(rng, 7);
    DeformationField f;
    f.planes = PlaneGrid::initialized(tiny_cfg(), 1);
    f.decoder = DeformDecoder::initialized(8, 16, 2);
    for (const auto& h : f.decoder.heads) {
      CHECK(h.w2.isZero(0.0));
      CHECK(h.b2.isZero(0.0));
    }
    for (double t : {-3.0, 0.0, 2.5, 11.0}) {
      const GaussianSet d = deform(s, f, t);
      CHECK(d.centers == s.centers);
      CHECK(d.quats == s.quats);
      CHECK(d.log_scales == s.log_scales);
      CHECK(d.densities == s.densities);
    }
    // Warm-start continuity: renders through the field are bit-identical.
    ConeBeamGeometry g;
    g.nu = g.nv = 8;
    CHECK(render_image(deform(s, f, 4.0), g, 0.3).data == render_image(s, g, 0.3).data);
  }

  TEST_CASE("deformation depends on the normalized time only") {
    testing::SplitMix64 rng(44);
    const auto s = testing::random_gaussians(rng, 5);
    const auto f = testing::random_field(rng, tiny_cfg(), 8);
    const double hi = f.bounds.time.hi();
    const GaussianSet a = deform(s, f, hi + 5.0);
    const GaussianSet b = deform(s, f, hi + 50.0);
    CHECK(a.centers == b.centers);
    CHECK(a.quats == b.quats);
    const GaussianSet c = deform(s, f, 2.0);
    CHECK(c.densities == s.densities);
    CHECK_FALSE(c.centers == s.centers);
    const DeformPass pass(s, f, hi + 1.0);
    CHECK(pass.time_clamped());
    CHECK_FALSE(DeformPass(s, f, 3.0).time_clamped());
  }

  TEST_CASE("zero upstream gives zero gradients") {
    testing::SplitMix64 rng(45);
    const auto s = testing::random_gaussians(rng, 3);
    const auto f = testing::random_field(rng, tiny_cfg(), 8);
    const DeformGradients g = deform_backward(s, f, 3.3, GaussianSet::zeros(3));
    for (const auto& pl : g.planes.all_planes()) {
      for (double x : pl) CHECK(x == 0.0);
    }
    for (auto t : g.decoder.tensors()) {
      for (double x : t) CHECK(x == 0.0);
    }
    CHECK(g.dt == 0.0);
  }

  TEST_CASE("backward matches central differences") {
    testing::SplitMix64 rng(46);
    int checked = 0;
    while (checked < 4) {
      auto s = testing::random_gaussians(rng, 3);
      auto f = testing::random_field(rng, tiny_cfg(), 8);
      double t = rng.uniform(0.0, 10.0);
      if (!testing::clear_of_grid_lines(s, f, {t}, 1e-3)) continue;
      if (testing::min_preactivation(s, f, t) < 1e-3) continue;
      GaussianSet w = GaussianSet::zeros(3);
      for (double& x : w.center_values()) x = rng.uniform(-1, 1);
      for (double& x : w.log_scale_values()) x = rng.uniform(-1, 1);
      for (double& x : w.quat_values()) x = rng.uniform(-1, 1);
      for (double& x : w.density_values()) x = rng.uniform(-1, 1);
      const auto loss = [&] { return weighted(w, deform(s, f, t)); };
      const DeformGradients g = deform_backward(s, f, t, w);
      const double h = 1e-6;

      std::vector<double> an, fd;
      for (std::size_t p = 0; p < f.planes.all_planes().size(); ++p) {
        auto& pl = f.planes.all_planes()[p];
        const auto d = testing::central_differences(pl, loss, h);
        an.insert(an.end(), g.planes.all_planes()[p].begin(), g.planes.all_planes()[p].end());
        fd.insert(fd.end(), d.begin(), d.end());
      }
      CHECK(testing::relative_error(an, fd) < 1e-3);

      an.clear();
      fd.clear();
      auto params = f.decoder.tensors();
      const auto grads = g.decoder.tensors();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto d = testing::central_differences(params[i], loss, h);
        an.insert(an.end(), grads[i].begin(), grads[i].end());
        fd.insert(fd.end(), d.begin(), d.end());
      }
      CHECK(testing::relative_error(an, fd) < 1e-3);

      CHECK(testing::relative_error(g.gaussians.center_values(),
                                    testing::central_differences(s.center_values(), loss, h)) <
            1e-3);
      CHECK(testing::relative_error(g.gaussians.log_scale_values(),
                                    testing::central_differences(s.log_scale_values(), loss, h)) <
            1e-3);
      CHECK(testing::relative_error(g.gaussians.quat_values(),
                                    testing::central_differences(s.quat_values(), loss, h)) < 1e-3);
      CHECK(testing::relative_error(g.gaussians.density_values(),
                                    testing::central_differences(s.density_values(), loss, h)) <
            1e-3);
      const auto dt = testing::central_differences({&t, 1}, loss, 1e-5);
      CHECK(g.dt == doctest::Approx(dt[0]).epsilon(1e-3));
      ++checked;
    }
  }

  TEST_CASE("plane gradients stay inside one kernel's stencils") {
    testing::SplitMix64 rng(47);
    const auto s = testing::random_gaussians(rng, 3);
    const auto f = testing::random_field(rng, tiny_cfg(), 8);
    GaussianSet w = GaussianSet::zeros(3);
    w.centers[1] = Vec3(0.3, -0.2, 0.7);
    const DeformGradients g = deform_backward(s, f, 4.4, w);
    std::size_t nonzero_nodes = 0;
    for (int l = 0; l < 2; ++l) {
      for (int p = 0; p < 6; ++p) {
        const auto& pl = g.planes.plane(l, p);
        for (std::size_t n = 0; n < pl.size(); n += 4) {
          bool any = false;
          for (int k = 0; k < 4; ++k) any = any || pl[n + k] != 0.0;
          nonzero_nodes += any ? 1 : 0;
        }
      }
    }
    CHECK(nonzero_nodes > 0);
    CHECK(nonzero_nodes <= 4 * 6 * 2);
  }

  TEST_CASE("perturbing features outside a stencil leaves the kernel unchanged") {
    testing::SplitMix64 rng(48);
    GaussianSet s = testing::random_gaussians(rng, 1);
    s.centers[0] = Vec3(-0.45, -0.45, -0.45);
    auto f = testing::random_field(rng, tiny_cfg(), 8);
    const GaussianSet before = deform(s, f, 0.5);
    // The far corner node of the level-1 xy plane is outside the stencil.
    const int r = f.planes.resolution(1, 0);
    f.planes.plane(1, 0)[f.planes.node_offset(1, 0, r - 1, r - 1)] += 10.0;
    const GaussianSet after = deform(s, f, 0.5);
    CHECK(before.centers == after.centers);
  }
}
