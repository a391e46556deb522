#include "dgct/gaussians.hpp"

#include <algorithm>
#include <cmath>

#include "dgct/rng.hpp"

namespace dgct {

void GaussianSet::resize(std::size_t k) {
  centers.resize(k, Vec3::Zero());
  log_scales.resize(k, Vec3::Zero());
  quats.resize(k, Quat::Zero());
  densities.resize(k, 0.0);
}

GaussianSet GaussianSet::zeros(std::size_t k) {
  GaussianSet s;
  s.resize(k);
  return s;
}

GaussianSet GaussianSet::gather(std::span<const std::size_t> indices) const {
  GaussianSet out;
  out.centers.reserve(indices.size());
  out.log_scales.reserve(indices.size());
  out.quats.reserve(indices.size());
  out.densities.reserve(indices.size());
  for (std::size_t i : indices) {
    out.centers.push_back(centers[i]);
    out.log_scales.push_back(log_scales[i]);
    out.quats.push_back(quats[i]);
    out.densities.push_back(densities[i]);
  }
  return out;
}

void GaussianSet::append(const GaussianSet& other) {
  centers.insert(centers.end(), other.centers.begin(), other.centers.end());
  log_scales.insert(log_scales.end(), other.log_scales.begin(), other.log_scales.end());
  quats.insert(quats.end(), other.quats.begin(), other.quats.end());
  densities.insert(densities.end(), other.densities.begin(), other.densities.end());
}

GaussianSet& GaussianSet::operator+=(const GaussianSet& other) {
  for (std::size_t i = 0; i < size(); ++i) {
    centers[i] += other.centers[i];
    log_scales[i] += other.log_scales[i];
    quats[i] += other.quats[i];
    densities[i] += other.densities[i];
  }
  return *this;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat3 rotation_from_quaternion(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw InputDomainError("rotation_from_quaternion: zero quaternion");
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 covariance(const Quat& q, const Vec3& log_scales) {
  const Mat3 r = rotation_from_quaternion(q);
  const Vec3 var = (2.0 * log_scales).array().exp();
  return r * var.asDiagonal() * r.transpose();
}

Mat3 inverse_covariance(const Quat& q, const Vec3& log_scales) {
  const Mat3 r = rotation_from_quaternion(q);
  const Vec3 inv_var = (-2.0 * log_scales).array().exp();
  return r * inv_var.asDiagonal() * r.transpose();
}

ActiveKernel activate(const GaussianSet& set, std::size_t i) {
  ActiveKernel k;
  k.center = set.centers[i];
  k.rotation = rotation_from_quaternion(set.quats[i]);
  k.scales = set.log_scales[i].array().exp();
  const Vec3 inv_var = k.scales.array().square().inverse();
  k.inv_cov = k.rotation * inv_var.asDiagonal() * k.rotation.transpose();
  k.density = softplus(set.densities[i]);
  k.cull_radius = 3.0 * k.scales.maxCoeff();
  return k;
}

std::vector<ActiveKernel> activate_all(const GaussianSet& set) {
  std::vector<ActiveKernel> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out[i] = activate(set, i);
  return out;
}

void accumulate_raw_gradients(const GaussianSet& set, std::size_t i, const ActiveKernel& k,
                              const Mat3& d_inv_cov, const Vec3& d_center, double d_density,
                              GaussianSet& grads) {
  const Mat3& r = k.rotation;
  const Vec3 inv_var = k.scales.array().square().inverse();

  // A = R D R^T with D = diag(exp(-2 log_s)).
  const Mat3 rtgr = r.transpose() * d_inv_cov * r;
  for (int a = 0; a < 3; ++a) grads.log_scales[i][a] += -2.0 * inv_var[a] * rtgr(a, a);

  const Mat3 g = (d_inv_cov + d_inv_cov.transpose()) * r * inv_var.asDiagonal();

  const Quat& q = set.quats[i];
  const double n = q.norm();
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Quat dqn;
  dqn[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                x * g(2, 1));
  dqn[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  dqn[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  dqn[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  const Quat qn(w, x, y, z);
  grads.quats[i] += (dqn - qn * qn.dot(dqn)) / n;

  grads.centers[i] += d_center;
  grads.densities[i] += d_density * sigmoid(set.densities[i]);
}

double evaluate_density(const GaussianSet& set, const Vec3& x) {
  double sigma = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const ActiveKernel k = activate(set, i);
    const Vec3 d = x - k.center;
    sigma += k.density * std::exp(-0.5 * d.dot(k.inv_cov * d));
  }
  return sigma;
}

double Volume::sample_trilinear(const Vec3& x) const {
  const Vec3 h = spec.spacing();
  int idx[3][2];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double pos = std::clamp((x[a] - spec.bounds.lo[a]) / h[a] - 0.5, 0.0,
                                  static_cast<double>(spec.res[a] - 1));
    int i0 = std::min(static_cast<int>(std::floor(pos)), spec.res[a] - 2);
    i0 = std::max(i0, 0);
    idx[a][0] = i0;
    idx[a][1] = std::min(i0 + 1, spec.res[a] - 1);
    frac[a] = pos - i0;
  }
  double out = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
    const double wgt = (bx ? frac[0] : 1 - frac[0]) * (by ? frac[1] : 1 - frac[1]) *
                       (bz ? frac[2] : 1 - frac[2]);
    if (wgt == 0.0) continue;
    out += wgt * at(idx[0][bx], idx[1][by], idx[2][bz]);
  }
  return out;
}

namespace {

struct VoxelRange {
  int lo[3];
  int hi[3];  // inclusive; empty when lo > hi
};

VoxelRange voxel_range(const VolumeSpec& spec, const ActiveKernel& k, bool cull) {
  VoxelRange r{};
  const Vec3 h = spec.spacing();
  for (int a = 0; a < 3; ++a) {
    if (!cull) {
      r.lo[a] = 0;
      r.hi[a] = spec.res[a] - 1;
      continue;
    }
    const double lo = (k.center[a] - k.cull_radius - spec.bounds.lo[a]) / h[a] - 0.5;
    const double hi = (k.center[a] + k.cull_radius - spec.bounds.lo[a]) / h[a] - 0.5;
    r.lo[a] = std::max(0, static_cast<int>(std::ceil(lo)));
    r.hi[a] = std::min(spec.res[a] - 1, static_cast<int>(std::floor(hi)));
  }
  return r;
}

// Exp recurrence along one voxel row: for n in [n0, n1], the kernel value
// is e, then e *= r and r *= m. Culling restricts the row to voxels inside
// the cull sphere and within Mahalanobis distance sqrt(kMaxMahalanobis2).
struct RowWalk {
  int n0 = 0, n1 = -1;
  double e = 0.0, r = 0.0, m = 0.0;
};

constexpr double kMaxMahalanobis2 = 60.0;

RowWalk row_walk(const VolumeSpec& spec, const ActiveKernel& k, const VoxelRange& range,
                 double y, double z, bool cull) {
  RowWalk w;
  const Vec3 h = spec.spacing();
  const double hx = h.x();
  const Mat3& A = k.inv_cov;
  const double dy = y - k.center.y();
  const double dz = z - k.center.z();
  const double dx0 = spec.bounds.lo.x() + 0.5 * hx - k.center.x();
  const double cross = A(0, 1) * dy + A(0, 2) * dz;
  const double a = A(0, 0) * hx * hx;
  const double b = 2.0 * hx * (A(0, 0) * dx0 + cross);
  const double c = A(0, 0) * dx0 * dx0 + 2.0 * dx0 * cross + A(1, 1) * dy * dy +
                   2.0 * A(1, 2) * dy * dz + A(2, 2) * dz * dz;
  double lo = range.lo[0], hi = range.hi[0];
  if (cull) {
    const double s2 = k.cull_radius * k.cull_radius - dy * dy - dz * dz;
    if (s2 < 0.0) return w;
    const double s = std::sqrt(s2);
    lo = std::max(lo, std::ceil((-s - dx0) / hx));
    hi = std::min(hi, std::floor((s - dx0) / hx));
    const double disc = b * b - 4.0 * a * (c - kMaxMahalanobis2);
    if (disc < 0.0) return w;
    const double sq = std::sqrt(disc);
    lo = std::max(lo, std::ceil((-b - sq) / (2.0 * a)));
    hi = std::min(hi, std::floor((-b + sq) / (2.0 * a)));
  }
  if (lo > hi) return w;
  w.n0 = static_cast<int>(lo);
  w.n1 = static_cast<int>(hi);
  const double n = lo;
  w.e = std::exp(-0.5 * ((a * n + b) * n + c));
  w.r = std::exp(-0.5 * (a * (2.0 * n + 1.0) + b));
  w.m = std::exp(-a);
  return w;
}

}  // namespace

Volume voxelize(const GaussianSet& set, const VolumeSpec& spec, const VoxelizeOptions& opts) {
  Volume vol(spec);
  const auto kernels = activate_all(set);
  std::vector<VoxelRange> ranges(kernels.size());
  std::vector<std::vector<std::uint32_t>> by_slice(spec.res[2]);
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    ranges[i] = voxel_range(spec, kernels[i], opts.cull);
    if (ranges[i].lo[0] > ranges[i].hi[0] || ranges[i].lo[1] > ranges[i].hi[1]) continue;
    for (int kz = ranges[i].lo[2]; kz <= ranges[i].hi[2]; ++kz) {
      by_slice[kz].push_back(static_cast<std::uint32_t>(i));
    }
  }
  const Vec3 h = spec.spacing();

  // Each slice sums its kernels in index order.
#pragma omp parallel for schedule(dynamic)
  for (int kz = 0; kz < spec.res[2]; ++kz) {
    const double z = spec.bounds.lo.z() + (kz + 0.5) * h.z();
    for (std::uint32_t i : by_slice[kz]) {
      const ActiveKernel& k = kernels[i];
      const VoxelRange& r = ranges[i];
      for (int ky = r.lo[1]; ky <= r.hi[1]; ++ky) {
        const double y = spec.bounds.lo.y() + (ky + 0.5) * h.y();
        double* row = &vol.data[vol.index(0, ky, kz)];
        if (opts.cull) {
          RowWalk w = row_walk(spec, k, r, y, z, true);
          for (int kx = w.n0; kx <= w.n1; ++kx) {
            row[kx] += k.density * w.e;
            w.e *= w.r;
            w.r *= w.m;
          }
        } else {
          for (int kx = r.lo[0]; kx <= r.hi[0]; ++kx) {
            const Vec3 d(spec.bounds.lo.x() + (kx + 0.5) * h.x() - k.center.x(),
                         y - k.center.y(), z - k.center.z());
            row[kx] += k.density * std::exp(-0.5 * d.dot(k.inv_cov * d));
          }
        }
      }
    }
  }
  return vol;
}

GaussianSet voxelize_backward(const GaussianSet& set, const VolumeSpec& spec,
                              const Volume& voxel_grads, const VoxelizeOptions& opts) {
  GaussianSet grads = GaussianSet::zeros(set.size());
  const Vec3 h = spec.spacing();
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(set.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const ActiveKernel k = activate(set, i);
    const VoxelRange r = voxel_range(spec, k, opts.cull);
    // Moments of g * e over the kernel's voxels: sum, first and second order in d.
    double s0 = 0.0;
    Vec3 s1 = Vec3::Zero();
    Mat3 s2 = Mat3::Zero();
    bool touched = false;
    for (int kz = r.lo[2]; kz <= r.hi[2]; ++kz) {
      const double z = spec.bounds.lo.z() + (kz + 0.5) * h.z();
      const double dz = z - k.center.z();
      for (int ky = r.lo[1]; ky <= r.hi[1]; ++ky) {
        const double y = spec.bounds.lo.y() + (ky + 0.5) * h.y();
        const double dy = y - k.center.y();
        const double* row = &voxel_grads.data[voxel_grads.index(0, ky, kz)];
        // Row sums of g e, g e dx and g e dx^2.
        double r0 = 0.0, r1 = 0.0, r2 = 0.0;
        auto add = [&](int kx, double e) {
          const double ge = row[kx] * e;
          const double dx = spec.bounds.lo.x() + (kx + 0.5) * h.x() - k.center.x();
          r0 += ge;
          r1 += ge * dx;
          r2 += ge * dx * dx;
        };
        if (opts.cull) {
          RowWalk w = row_walk(spec, k, r, y, z, true);
          for (int kx = w.n0; kx <= w.n1; ++kx) {
            add(kx, w.e);
            w.e *= w.r;
            w.r *= w.m;
          }
        } else {
          for (int kx = r.lo[0]; kx <= r.hi[0]; ++kx) {
            const Vec3 d(spec.bounds.lo.x() + (kx + 0.5) * h.x() - k.center.x(), dy, dz);
            add(kx, std::exp(-0.5 * d.dot(k.inv_cov * d)));
          }
        }
        if (r0 == 0.0 && r1 == 0.0 && r2 == 0.0) continue;
        touched = true;
        s0 += r0;
        s1 += Vec3(r1, dy * r0, dz * r0);
        s2(0, 0) += r2;
        s2(0, 1) += dy * r1;
        s2(0, 2) += dz * r1;
        s2(1, 1) += dy * dy * r0;
        s2(1, 2) += dy * dz * r0;
        s2(2, 2) += dz * dz * r0;
      }
    }
    if (!touched) continue;
    s2(1, 0) = s2(0, 1);
    s2(2, 0) = s2(0, 2);
    s2(2, 1) = s2(1, 2);
    const Vec3 d_mu = k.density * (k.inv_cov * s1);
    const Mat3 d_a = -0.5 * k.density * s2;
    accumulate_raw_gradients(set, i, k, d_a, d_mu, s0, grads);
  }
  return grads;
}

Volume backproject(const ProjectionSet& data, const VolumeSpec& spec) {
  const auto& geom = data.geometry;
  std::vector<ViewFrame> frames;
  frames.reserve(data.size());
  for (const auto& item : data.items) frames.push_back(view_frame(geom, item.angle));

  Volume vol(spec);
#pragma omp parallel for
  for (int k = 0; k < spec.res[2]; ++k) {
    for (int j = 0; j < spec.res[1]; ++j) {
      for (int i = 0; i < spec.res[0]; ++i) {
        const Vec3 x = spec.voxel_center(i, j, k);
        double sum = 0.0;
        int hits = 0;
        for (std::size_t p = 0; p < data.size(); ++p) {
          const auto uv = project_to_detector(geom, frames[p], x);
          if (!uv) continue;
          const long u = std::lround(uv->first);
          const long v = std::lround(uv->second);
          if (u < 0 || u >= geom.nu || v < 0 || v >= geom.nv) continue;
          sum += data.items[p].image.at(static_cast<int>(u), static_cast<int>(v));
          ++hits;
        }
        vol.at(i, j, k) = hits ? sum / hits : 0.0;
      }
    }
  }
  return vol;
}

GaussianSet init_from_backprojection(const ProjectionSet& data, const BackprojectionInit& opts) {
  if (opts.count < 1) throw InputDomainError("init_from_backprojection: K must be >= 1");
  if (data.empty()) throw InitializationError("init_from_backprojection: empty projection set");
  if (opts.grid_res < 2) throw InputDomainError("init_from_backprojection: grid_res must be >= 2");

  VolumeSpec spec;
  spec.res = {opts.grid_res, opts.grid_res, opts.grid_res};
  spec.bounds = data.geometry.bounds;
  const Volume bp = backproject(data, spec);

  std::vector<double> sorted = bp.data;
  std::sort(sorted.begin(), sorted.end());
  const double q = std::clamp(opts.threshold_quantile, 0.0, 1.0);
  const double threshold = sorted[static_cast<std::size_t>(q * (sorted.size() - 1))];

  std::vector<std::size_t> candidates;
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t v = 0; v < bp.data.size(); ++v) {
    if (bp.data[v] > 0.0 && bp.data[v] >= threshold) {
      total += bp.data[v];
      candidates.push_back(v);
      cumulative.push_back(total);
    }
  }
  if (candidates.empty() || !(total > 0.0)) {
    throw InitializationError("init_from_backprojection: backprojected volume is all zero");
  }

  Rng rng(opts.seed);
  const Vec3 h = spec.spacing();
  const double log_scale = std::log(h.maxCoeff());
  const double diag = spec.bounds.diagonal();
  GaussianSet set;
  for (int n = 0; n < opts.count; ++n) {
    const double target = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const std::size_t v = candidates[static_cast<std::size_t>(it - cumulative.begin())];
    const int i = static_cast<int>(v % spec.res[0]);
    const int j = static_cast<int>((v / spec.res[0]) % spec.res[1]);
    const int k = static_cast<int>(v / (static_cast<std::size_t>(spec.res[0]) * spec.res[1]));
    Vec3 jitter;
    for (int a = 0; a < 3; ++a) jitter[a] = rng.uniform(-0.5, 0.5) * h[a];
    set.centers.push_back(spec.voxel_center(i, j, k) + jitter);
    set.log_scales.push_back(Vec3::Constant(log_scale));
    set.quats.push_back(Quat(1.0, 0.0, 0.0, 0.0));
    set.densities.push_back(inverse_softplus(0.1 * bp.data[v] / diag));
  }
  return set;
}

}  // namespace dgct
