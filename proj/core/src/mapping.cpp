#include "fly0/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>

#include "fly0/error.hpp"

namespace fly0 {

namespace {

constexpr double kFar = 1e20;

int floor_mod(int a, int n) {
  const int r = a % n;
  return r < 0 ? r + n : r;
}

// Exact 1D squared distance transform (lower envelope of parabolas).
// `f` holds squared distances in voxel units with kFar for "no site";
// `d` receives the result. Sites with kFar never enter the envelope.
void squared_edt_1d(const double* f, double* d, int n, int* v, double* z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d, d + n, kFar);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] + dq * dq;
  }
}

}  // namespace

void MapConfig::validate() const {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "map resolution must be positive");
  if ((window_voxels.array() < 2).any()) throw Error(ErrorCode::InvalidArgument, "window needs >= 2 voxels per axis");
  if (!(truncation_radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "truncation radius must be positive");
}

DistanceSample trilinear(const double (&c)[8], const Eigen::Vector3d& frac, double spacing) {
  const double x = frac.x(), y = frac.y(), z = frac.z();
  const double c00 = c[0] * (1 - x) + c[1] * x;
  const double c10 = c[2] * (1 - x) + c[3] * x;
  const double c01 = c[4] * (1 - x) + c[5] * x;
  const double c11 = c[6] * (1 - x) + c[7] * x;
  const double c0 = c00 * (1 - y) + c10 * y;
  const double c1 = c01 * (1 - y) + c11 * y;

  DistanceSample out;
  out.distance = c0 * (1 - z) + c1 * z;

  const double dx00 = c[1] - c[0], dx10 = c[3] - c[2], dx01 = c[5] - c[4], dx11 = c[7] - c[6];
  const double gx = ((dx00 * (1 - y) + dx10 * y) * (1 - z) + (dx01 * (1 - y) + dx11 * y) * z);
  const double gy = ((c10 - c00) * (1 - z) + (c11 - c01) * z);
  const double gz = c1 - c0;
  out.gradient = Eigen::Vector3d(gx, gy, gz) / spacing;
  return out;
}

OccupancyMap::OccupancyMap(const MapConfig& config, const Eigen::Vector3d& center) : config_(config) {
  config_.validate();
  const auto n = config_.window_voxels;
  const std::size_t total = std::size_t(n.x()) * n.y() * n.z();
  occupied_.assign(total, 0);
  distance_.assign(total, config_.truncation_radius);
  center_ = center;
  origin_ = world_to_index(center) - n / 2;
}

Eigen::Vector3i OccupancyMap::world_to_index(const Eigen::Vector3d& p) const {
  return (p / config_.resolution).array().floor().cast<int>();
}

Eigen::Vector3d OccupancyMap::index_to_center(const Eigen::Vector3i& g) const {
  return (g.cast<double>().array() + 0.5) * config_.resolution;
}

bool OccupancyMap::in_window(const Eigen::Vector3i& g) const {
  const Eigen::Vector3i local = g - origin_;
  return (local.array() >= 0).all() && (local.array() < config_.window_voxels.array()).all();
}

std::size_t OccupancyMap::ring_slot(const Eigen::Vector3i& g) const {
  const auto& n = config_.window_voxels;
  const int x = floor_mod(g.x(), n.x());
  const int y = floor_mod(g.y(), n.y());
  const int z = floor_mod(g.z(), n.z());
  return (std::size_t(z) * n.y() + y) * n.x() + x;
}

std::size_t OccupancyMap::local_linear(const Eigen::Vector3i& l) const {
  const auto& n = config_.window_voxels;
  return (std::size_t(l.z()) * n.y() + l.y()) * n.x() + l.x();
}

bool OccupancyMap::is_occupied(const Eigen::Vector3i& g) const {
  return in_window(g) && occupied_[ring_slot(g)] != 0;
}

std::size_t OccupancyMap::insert_cloud(const PointCloud& cloud) {
  if (cloud.frame != Frame::World) throw Error(ErrorCode::InvalidArgument, "insert_cloud expects a world-frame cloud");
  std::size_t added = 0;
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) continue;
    const Eigen::Vector3i g = world_to_index(p);
    if (!in_window(g)) continue;
    auto& cell = occupied_[ring_slot(g)];
    if (cell == 0) {
      cell = 1;
      ++added;
    }
  }
  if (added > 0) stale_ = true;
  return added;
}

bool OccupancyMap::slide_window(const Eigen::Vector3d& new_center) {
  const Eigen::Vector3i new_origin = world_to_index(new_center) - config_.window_voxels / 2;
  center_ = new_center;
  if (new_origin == origin_) return false;

  const Eigen::Vector3i old_origin = origin_;
  const auto& n = config_.window_voxels;
  origin_ = new_origin;
  // Clear every slot whose voxel is new to the window; survivors keep their
  // slot because addressing is by global index.
  Eigen::Vector3i g;
  for (int z = 0; z < n.z(); ++z) {
    g.z() = new_origin.z() + z;
    const bool z_in = g.z() >= old_origin.z() && g.z() < old_origin.z() + n.z();
    for (int y = 0; y < n.y(); ++y) {
      g.y() = new_origin.y() + y;
      const bool y_in = g.y() >= old_origin.y() && g.y() < old_origin.y() + n.y();
      for (int x = 0; x < n.x(); ++x) {
        g.x() = new_origin.x() + x;
        const bool x_in = g.x() >= old_origin.x() && g.x() < old_origin.x() + n.x();
        if (!(x_in && y_in && z_in)) occupied_[ring_slot(g)] = 0;
      }
    }
  }
  stale_ = true;
  return true;
}

namespace {

// Exact squared distance transform, in voxel units, over a dense x-fastest
// grid whose sites hold 0 and every other cell kFar. Values above `cut`
// come back as kFar. Lines without sites, or already all zero, are final
// and skipped.
void squared_edt_3d(std::vector<double>& sq, int nx, int ny, int nz, double cut) {
  // A partial squared distance above the cut can only grow in later passes,
  // so it is dropped as a site; results below the cut stay exact.
  auto drop_far = [&](double* values, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i)
      if (values[i] > cut) values[i] = kFar;
  };

  const int longest = std::max({nx, ny, nz});
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<int> v(longest);

  // x pass: contiguous rows
  for (std::size_t row = 0; row < std::size_t(ny) * nz; ++row) {
    double* line = sq.data() + row * nx;
    bool site = false, open = false;
    for (int i = 0; i < nx; ++i) {
      site |= line[i] < kFar;
      open |= line[i] > 0.0;
    }
    if (!site || !open) continue;
    squared_edt_1d(line, d.data(), nx, v.data(), z.data());
    std::copy(d.begin(), d.begin() + nx, line);
    drop_far(line, std::size_t(nx));
  }
  // y pass; lines without sites are found with a sequential scan first.
  std::vector<std::uint8_t> has_site(static_cast<std::size_t>(nx)), has_open(has_site.size());
  for (int zz = 0; zz < nz; ++zz) {
    const double* slab = sq.data() + std::size_t(zz) * ny * nx;
    std::fill(has_site.begin(), has_site.end(), 0);
    std::fill(has_open.begin(), has_open.end(), 0);
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        has_site[x] |= slab[std::size_t(y) * nx + x] < kFar;
        has_open[x] |= slab[std::size_t(y) * nx + x] > 0.0;
      }
    for (int x = 0; x < nx; ++x) {
      if (!has_site[x] || !has_open[x]) continue;
      for (int y = 0; y < ny; ++y) f[y] = sq[(std::size_t(zz) * ny + y) * nx + x];
      squared_edt_1d(f.data(), d.data(), ny, v.data(), z.data());
      drop_far(d.data(), std::size_t(ny));
      for (int y = 0; y < ny; ++y) sq[(std::size_t(zz) * ny + y) * nx + x] = d[y];
    }
  }
  // z pass
  const std::size_t plane = std::size_t(nx) * ny;
  has_site.assign(plane, 0);
  has_open.assign(plane, 0);
  for (int zz = 0; zz < nz; ++zz) {
    const double* layer = sq.data() + zz * plane;
    for (std::size_t col = 0; col < plane; ++col) {
      has_site[col] |= layer[col] < kFar;
      has_open[col] |= layer[col] > 0.0;
    }
  }
  for (std::size_t col = 0; col < plane; ++col) {
    if (!has_site[col] || !has_open[col]) continue;
    for (int zz = 0; zz < nz; ++zz) f[zz] = sq[zz * plane + col];
    squared_edt_1d(f.data(), d.data(), nz, v.data(), z.data());
    drop_far(d.data(), std::size_t(nz));
    for (int zz = 0; zz < nz; ++zz) sq[zz * plane + col] = d[zz];
  }
}

}  // namespace

void OccupancyMap::recompute_distance_field() {
  const auto& n = config_.window_voxels;
  const int nx = n.x(), ny = n.y(), nz = n.z();
  const std::size_t total = distance_.size();

  // Window-linear copy of the occupancy ring.
  std::vector<std::uint8_t> occ(total);
  std::vector<int> rx(nx), ry(ny), rz(nz);
  for (int x = 0; x < nx; ++x) rx[x] = floor_mod(origin_.x() + x, nx);
  for (int y = 0; y < ny; ++y) ry[y] = floor_mod(origin_.y() + y, ny);
  for (int z = 0; z < nz; ++z) rz[z] = floor_mod(origin_.z() + z, nz);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      const std::uint8_t* ring = occupied_.data() + (std::size_t(rz[z]) * ny + ry[y]) * nx;
      std::uint8_t* out = occ.data() + (std::size_t(z) * ny + y) * nx;
      for (int x = 0; x < nx; ++x) out[x] = ring[rx[x]];
    }

  const double res = config_.resolution;
  const double trunc = config_.truncation_radius;
  const double cut = std::pow(trunc / res, 2) * (1.0 + 1e-9) + 1e-9;
  auto to_meters = [&](double s) { return s >= kFar ? trunc : std::min(std::sqrt(s) * res, trunc); };

  // Clearance: distance from every voxel center to the nearest occupied one.
  for (std::size_t i = 0; i < total; ++i) distance_[i] = occ[i] ? 0.0 : kFar;
  squared_edt_3d(distance_, nx, ny, nz, cut);
  for (auto& s : distance_) s = to_meters(s);

  // Penetration: for occupied voxels buried below the surface layer, the
  // distance to the nearest free voxel minus one voxel. Cells outside the
  // window count as free. Only buried voxels can be nonzero and the value is
  // truncated, so the transform runs on their bounding box grown by the
  // truncation radius.
  const std::size_t plane = std::size_t(nx) * ny;
  Eigen::Vector3i lo = n, hi = Eigen::Vector3i::Constant(-1);
  for (int z = 1; z < nz - 1; ++z)
    for (int y = 1; y < ny - 1; ++y)
      for (int x = 1; x < nx - 1; ++x) {
        const std::size_t i = (std::size_t(z) * ny + y) * nx + x;
        if (occ[i] && occ[i - 1] && occ[i + 1] && occ[i - nx] && occ[i + nx] && occ[i - plane] &&
            occ[i + plane]) {
          lo = lo.cwiseMin(Eigen::Vector3i(x, y, z));
          hi = hi.cwiseMax(Eigen::Vector3i(x, y, z));
        }
      }
  penetration_.clear();
  penetration_box_.setZero();
  if (hi.x() >= 0) {
    const int margin = static_cast<int>(std::ceil(trunc / res)) + 1;
    lo = (lo.array() - margin).cwiseMax(0).matrix();
    hi = (hi.array() + margin).cwiseMin(n.array() - 1).matrix();
    // One extra layer around the box: window cells keep their occupancy,
    // cells beyond the window are free sites.
    const Eigen::Vector3i box = hi - lo + Eigen::Vector3i::Constant(3);
    const int bx = box.x(), by = box.y(), bz = box.z();
    std::vector<double> sq(std::size_t(bx) * by * bz);
    for (int z = 0; z < bz; ++z)
      for (int y = 0; y < by; ++y)
        for (int x = 0; x < bx; ++x) {
          const Eigen::Vector3i w = lo + Eigen::Vector3i(x - 1, y - 1, z - 1);
          const bool inside = (w.array() >= 0).all() && (w.array() < n.array()).all();
          const bool solid = inside && occ[(std::size_t(w.z()) * ny + w.y()) * nx + w.x()];
          sq[(std::size_t(z) * by + y) * bx + x] = solid ? kFar : 0.0;
        }
    squared_edt_3d(sq, bx, by, bz, cut);
    for (auto& v : sq) v = std::max(0.0, to_meters(v) - res);
    penetration_ = std::move(sq);
    penetration_lo_ = lo - Eigen::Vector3i::Ones();
    penetration_box_ = box;
  }
  stale_ = false;
}

double OccupancyMap::voxel_distance(const Eigen::Vector3i& g) const {
  if (stale_) throw Error(ErrorCode::StaleField, "distance field not recomputed since last mutation");
  if (!in_window(g)) return config_.truncation_radius;
  return distance_[local_linear(g - origin_)];
}

double OccupancyMap::penetration(const Eigen::Vector3i& local) const {
  // The outer layer of the box only seeds the transform.
  const Eigen::Vector3i b = local - penetration_lo_;
  if ((b.array() < 1).any() || (b.array() >= penetration_box_.array() - 1).any()) return 0.0;
  return penetration_[(std::size_t(b.z()) * penetration_box_.y() + b.y()) * penetration_box_.x() + b.x()];
}

DistanceSample OccupancyMap::query_distance(const Eigen::Vector3d& p) const {
  if (stale_) throw Error(ErrorCode::StaleField, "distance field not recomputed since last mutation");
  const auto& n = config_.window_voxels;
  const double res = config_.resolution;

  // Continuous local coordinate with voxel centers at integers.
  Eigen::Vector3d u = p / res - origin_.cast<double>() - Eigen::Vector3d::Constant(0.5);
  bool outside = false;
  Eigen::Vector3i clamped_axis = Eigen::Vector3i::Zero();
  for (int a = 0; a < 3; ++a) {
    const double lo = -0.5, hi = n[a] - 0.5;  // window faces
    if (u[a] < lo || u[a] > hi) outside = true;
    const double lo_c = 0.0, hi_c = n[a] - 1.0;  // outermost centers
    if (u[a] < lo_c) {
      u[a] = lo_c;
      clamped_axis[a] = 1;
    } else if (u[a] > hi_c) {
      u[a] = hi_c;
      clamped_axis[a] = 1;
    }
  }

  Eigen::Vector3i base;
  Eigen::Vector3d frac;
  for (int a = 0; a < 3; ++a) {
    int b = static_cast<int>(std::floor(u[a]));
    b = std::clamp(b, 0, n[a] - 2);
    base[a] = b;
    frac[a] = u[a] - b;
  }

  double corners[8];
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) {
        const Eigen::Vector3i l = base + Eigen::Vector3i(i, j, k);
        corners[i + 2 * j + 4 * k] = distance_[local_linear(l)] - penetration(l);
      }

  DistanceSample s = trilinear(corners, frac, res);
  for (int a = 0; a < 3; ++a)
    if (clamped_axis[a]) s.gradient[a] = 0.0;
  s.outside_window = outside;
  return s;
}

std::size_t OccupancyMap::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupied_.begin(), occupied_.end(), std::uint8_t{1}));
}

std::vector<Eigen::Vector3i> OccupancyMap::occupied_voxels() const {
  std::vector<Eigen::Vector3i> out;
  const auto& n = config_.window_voxels;
  for (int z = 0; z < n.z(); ++z)
    for (int y = 0; y < n.y(); ++y)
      for (int x = 0; x < n.x(); ++x) {
        const Eigen::Vector3i g = origin_ + Eigen::Vector3i(x, y, z);
        if (occupied_[ring_slot(g)]) out.push_back(g);
      }
  return out;
}

void OccupancyMap::export_csv(std::ostream& out, bool occupied_only) const {
  out << "x,y,z,occupied\n";
  const auto& n = config_.window_voxels;
  for (int z = 0; z < n.z(); ++z)
    for (int y = 0; y < n.y(); ++y)
      for (int x = 0; x < n.x(); ++x) {
        const Eigen::Vector3i g = origin_ + Eigen::Vector3i(x, y, z);
        const bool occ = occupied_[ring_slot(g)] != 0;
        if (occupied_only && !occ) continue;
        const Eigen::Vector3d c = index_to_center(g);
        out << c.x() << ',' << c.y() << ',' << c.z() << ',' << (occ ? 1 : 0) << '\n';
      }
}

}  // namespace fly0
