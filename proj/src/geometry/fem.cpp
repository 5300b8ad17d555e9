#include <cmath>
#include <string>

#include "stzi/error.hpp"
#include "stzi/geometry.hpp"

namespace stzi {

FemMatrices assembleFem(const Mesh& mesh) {
  const int k = mesh.size();
  double scale = 0.0;
  for (const auto& v : mesh.vertices) scale = std::max({scale, std::fabs(v.lon), std::fabs(v.lat)});
  scale = std::max(scale, 1.0);

  FemMatrices fem;
  fem.massLumped = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.triangles.size() * 9);

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point& p0 = mesh.vertices[tri[0]];
    const Point& p1 = mesh.vertices[tri[1]];
    const Point& p2 = mesh.vertices[tri[2]];
    const double twiceArea = (p1.lon - p0.lon) * (p2.lat - p0.lat) - (p1.lat - p0.lat) * (p2.lon - p0.lon);
    if (!(std::fabs(twiceArea) > 1e-14 * scale * scale))
      throw GeometryError("zero-area triangle at index " + std::to_string(t));
    const double area = 0.5 * std::fabs(twiceArea);

    // Edge opposite each vertex.
    const double ex[3] = {p2.lon - p1.lon, p0.lon - p2.lon, p1.lon - p0.lon};
    const double ey[3] = {p2.lat - p1.lat, p0.lat - p2.lat, p1.lat - p0.lat};
    for (int i = 0; i < 3; ++i) {
      fem.massLumped[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(tri[i], tri[j], (ex[i] * ex[j] + ey[i] * ey[j]) / (4.0 * area));
    }
  }
  fem.stiffness.resize(k, k);
  fem.stiffness.setFromTriplets(trips.begin(), trips.end());
  return fem;
}

TriangleLocator::TriangleLocator(const Mesh& mesh) : mesh_(&mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) return;
  double x1 = mesh.vertices[0].lon, y1 = mesh.vertices[0].lat;
  x0_ = x1;
  y0_ = y1;
  for (const auto& v : mesh.vertices) {
    x0_ = std::min(x0_, v.lon);
    y0_ = std::min(y0_, v.lat);
    x1 = std::max(x1, v.lon);
    y1 = std::max(y1, v.lat);
  }
  const double side = std::max(x1 - x0_, y1 - y0_);
  const int cells = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.triangles.size()) / 2.0)));
  cell_ = side > 0 ? side / cells : 1.0;
  nx_ = std::max(1, static_cast<int>(std::ceil((x1 - x0_) / cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::ceil((y1 - y0_) / cell_)) + 1);
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  auto clampX = [&](double x) { return std::clamp(static_cast<int>(std::floor((x - x0_) / cell_)), 0, nx_ - 1); };
  auto clampY = [&](double y) { return std::clamp(static_cast<int>(std::floor((y - y0_) / cell_)), 0, ny_ - 1); };
  const double pad = 1e-9 * std::max(side, 1.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
    for (int v : mesh.triangles[t]) {
      bx0 = std::min(bx0, mesh.vertices[v].lon);
      by0 = std::min(by0, mesh.vertices[v].lat);
      bx1 = std::max(bx1, mesh.vertices[v].lon);
      by1 = std::max(by1, mesh.vertices[v].lat);
    }
    for (int ix = clampX(bx0 - pad); ix <= clampX(bx1 + pad); ++ix)
      for (int iy = clampY(by0 - pad); iy <= clampY(by1 + pad); ++iy)
        buckets_[static_cast<std::size_t>(iy) * nx_ + ix].push_back(static_cast<int>(t));
  }
}

std::optional<std::pair<int, std::array<double, 3>>> TriangleLocator::locate(const Point& p) const {
  if (buckets_.empty()) return std::nullopt;
  const double fx = std::floor((p.lon - x0_) / cell_);
  const double fy = std::floor((p.lat - y0_) / cell_);
  if (fx < -1 || fy < -1 || fx > nx_ || fy > ny_) return std::nullopt;
  const int ix = std::clamp(static_cast<int>(fx), 0, nx_ - 1);
  const int iy = std::clamp(static_cast<int>(fy), 0, ny_ - 1);
  for (int t : buckets_[static_cast<std::size_t>(iy) * nx_ + ix]) {
    const auto& tri = mesh_->triangles[t];
    const Point& a = mesh_->vertices[tri[0]];
    const Point& b = mesh_->vertices[tri[1]];
    const Point& c = mesh_->vertices[tri[2]];
    const double det = (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
    std::array<double, 3> w{
        ((b.lon - p.lon) * (c.lat - p.lat) - (b.lat - p.lat) * (c.lon - p.lon)) / det,
        ((c.lon - p.lon) * (a.lat - p.lat) - (c.lat - p.lat) * (a.lon - p.lon)) / det,
        ((a.lon - p.lon) * (b.lat - p.lat) - (a.lat - p.lat) * (b.lon - p.lon)) / det};
    if (std::min({w[0], w[1], w[2]}) < -1e-12) continue;
    double s = 0.0;
    for (double& x : w) {
      x = std::max(x, 0.0);
      s += x;
    }
    for (double& x : w) x /= s;
    return std::make_pair(t, w);
  }
  return std::nullopt;
}

Projector projectPoints(const Mesh& mesh, std::span<const Point> points) {
  const TriangleLocator locator(mesh);
  Projector proj;
  proj.outside.assign(points.size(), false);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(points.size() * 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto hit = locator.locate(points[i]);
    if (!hit) {
      proj.outside[i] = true;
      continue;
    }
    const auto& tri = mesh.triangles[hit->first];
    for (int k = 0; k < 3; ++k)
      if (hit->second[k] > 0.0) trips.emplace_back(static_cast<int>(i), tri[k], hit->second[k]);
  }
  proj.matrix.resize(static_cast<Eigen::Index>(points.size()), mesh.size());
  proj.matrix.setFromTriplets(trips.begin(), trips.end());
  return proj;
}

}  // namespace stzi
