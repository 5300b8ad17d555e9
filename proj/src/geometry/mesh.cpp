#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "stzi/error.hpp"
#include "stzi/geometry.hpp"

namespace stzi {
namespace {

double orient(const Point& a, const Point& b, const Point& c) {
  return (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
}

// > 0 when d lies strictly inside the circumcircle of ccw triangle abc.
bool inCircle(const Point& a, const Point& b, const Point& c, const Point& d) {
  const long double adx = a.lon - d.lon, ady = a.lat - d.lat;
  const long double bdx = b.lon - d.lon, bdy = b.lat - d.lat;
  const long double cdx = c.lon - d.lon, cdy = c.lat - d.lat;
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  const long double t1 = ad * (bdx * cdy - cdx * bdy);
  const long double t2 = bd * (adx * cdy - cdx * ady);
  const long double t3 = cd * (adx * bdy - bdx * ady);
  const long double det = t1 - t2 + t3;
  const long double scale = std::fabs(t1) + std::fabs(t2) + std::fabs(t3);
  return det > 1e-12L * scale;
}

std::uint64_t edgeKey(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

class Triangulator {
 public:
  Triangulator(const Point& lo, const Point& hi) {
    verts_ = {lo, {hi.lon, lo.lat}, hi, {lo.lon, hi.lat}};
    addTriangle(0, 1, 2);
    addTriangle(0, 2, 3);
    scale_ = std::max(hi.lon - lo.lon, hi.lat - lo.lat);
  }

  int insert(const Point& p) {
    const int t0 = locate(p);
    if (t0 < 0) throw GeometryError("mesh insertion point outside the outer domain");
    for (int k = 0; k < 3; ++k) {
      const Point& v = verts_[tris_[t0].v[k]];
      if (std::hypot(v.lon - p.lon, v.lat - p.lat) <= 1e-12 * scale_) return tris_[t0].v[k];
    }
    const int pi = static_cast<int>(verts_.size());
    verts_.push_back(p);

    std::vector<int> cavity{t0};
    std::vector<char> inCavity(tris_.size(), 0);
    inCavity[t0] = 1;
    for (std::size_t head = 0; head < cavity.size(); ++head) {
      const auto& t = tris_[cavity[head]];
      for (int k = 0; k < 3; ++k) {
        const int nb = neighbor(t.v[k], t.v[(k + 1) % 3]);
        if (nb < 0 || inCavity[nb]) continue;
        const auto& n = tris_[nb];
        const bool onSharedEdge =
            std::fabs(orient(verts_[t.v[k]], verts_[t.v[(k + 1) % 3]], p)) <= 1e-13 * scale_ * scale_ &&
            head == 0;
        if (onSharedEdge || inCircle(verts_[n.v[0]], verts_[n.v[1]], verts_[n.v[2]], p)) {
          inCavity[nb] = 1;
          cavity.push_back(nb);
        }
      }
    }

    std::vector<std::pair<int, int>> rim;
    for (int ti : cavity) {
      const auto& t = tris_[ti];
      for (int k = 0; k < 3; ++k) {
        const int a = t.v[k], b = t.v[(k + 1) % 3];
        const int nb = neighbor(a, b);
        if (nb < 0 || !inCavity[nb]) rim.emplace_back(a, b);
      }
    }
    for (int ti : cavity) removeTriangle(ti);
    for (auto [a, b] : rim) {
      // p on a hull edge splits it instead of forming a sliver.
      if (orient(verts_[a], verts_[b], p) <= 1e-13 * scale_ * scale_) continue;
      addTriangle(a, b, pi);
    }
    hint_ = static_cast<int>(tris_.size()) - 1;
    return pi;
  }

  const std::vector<Point>& vertices() const { return verts_; }

  template <class F>
  void forEachTriangle(F&& f) const {
    for (const auto& t : tris_)
      if (t.alive) f(t.v);
  }

  bool hasEdge(int a, int b) const { return edges_.count(edgeKey(a, b)) || edges_.count(edgeKey(b, a)); }

 private:
  struct Tri {
    std::array<int, 3> v;
    bool alive;
  };

  void addTriangle(int a, int b, int c) {
    const int id = static_cast<int>(tris_.size());
    tris_.push_back({{a, b, c}, true});
    edges_[edgeKey(a, b)] = id;
    edges_[edgeKey(b, c)] = id;
    edges_[edgeKey(c, a)] = id;
  }

  void removeTriangle(int id) {
    auto& t = tris_[id];
    t.alive = false;
    for (int k = 0; k < 3; ++k) {
      auto it = edges_.find(edgeKey(t.v[k], t.v[(k + 1) % 3]));
      if (it != edges_.end() && it->second == id) edges_.erase(it);
    }
  }

  int neighbor(int a, int b) const {
    auto it = edges_.find(edgeKey(b, a));
    return it == edges_.end() ? -1 : it->second;
  }

  bool contains(int ti, const Point& p) const {
    const auto& t = tris_[ti];
    const double tol = -1e-13 * scale_ * scale_;
    for (int k = 0; k < 3; ++k)
      if (orient(verts_[t.v[k]], verts_[t.v[(k + 1) % 3]], p) < tol) return false;
    return true;
  }

  int locate(const Point& p) const {
    int t = hint_;
    if (t < 0 || t >= static_cast<int>(tris_.size()) || !tris_[t].alive) t = lastAlive();
    for (std::size_t steps = 0; t >= 0 && steps < tris_.size(); ++steps) {
      const auto& tri = tris_[t];
      int next = -1;
      for (int k = 0; k < 3; ++k) {
        if (orient(verts_[tri.v[k]], verts_[tri.v[(k + 1) % 3]], p) < -1e-13 * scale_ * scale_) {
          next = neighbor(tri.v[k], tri.v[(k + 1) % 3]);
          break;
        }
      }
      if (next < 0) {
        if (contains(t, p)) return t;
        break;
      }
      t = next;
    }
    for (int i = 0; i < static_cast<int>(tris_.size()); ++i)
      if (tris_[i].alive && contains(i, p)) return i;
    return -1;
  }

  int lastAlive() const {
    for (int i = static_cast<int>(tris_.size()) - 1; i >= 0; --i)
      if (tris_[i].alive) return i;
    return -1;
  }

  std::vector<Point> verts_;
  std::vector<Tri> tris_;
  std::unordered_map<std::uint64_t, int> edges_;
  int hint_ = -1;
  double scale_ = 1.0;
};

bool allCollinear(std::span<const Point> pts) {
  if (pts.size() < 3) return true;
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max({scale, std::fabs(p.lon - pts[0].lon), std::fabs(p.lat - pts[0].lat)});
  if (scale == 0.0) return true;
  std::size_t j = 1;
  while (j < pts.size() && std::hypot(pts[j].lon - pts[0].lon, pts[j].lat - pts[0].lat) < 1e-12 * scale) ++j;
  if (j == pts.size()) return true;
  for (std::size_t k = j + 1; k < pts.size(); ++k)
    if (std::fabs(orient(pts[0], pts[j], pts[k])) > 1e-10 * scale * scale) return false;
  return true;
}

class PointFilter {
 public:
  explicit PointFilter(double cutoff) : cutoff_(cutoff) {}

  bool accept(const Point& p) {
    if (cutoff_ <= 0.0) return exact_.insert({p.lon, p.lat}).second;
    const long cx = static_cast<long>(std::floor(p.lon / cutoff_));
    const long cy = static_cast<long>(std::floor(p.lat / cutoff_));
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy) {
        auto it = grid_.find({cx + dx, cy + dy});
        if (it == grid_.end()) continue;
        for (const auto& q : it->second)
          if (std::hypot(q.lon - p.lon, q.lat - p.lat) < cutoff_) return false;
      }
    grid_[{cx, cy}].push_back(p);
    return true;
  }

 private:
  double cutoff_;
  std::set<std::pair<double, double>> exact_;
  std::map<std::pair<long, long>, std::vector<Point>> grid_;
};

}  // namespace

double polygonArea(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.lon * q.lat - q.lon * p.lat;
  }
  return 0.5 * a;
}

Polygon convexHull(std::span<const Point> points) {
  std::vector<Point> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.lon < b.lon || (a.lon == b.lon && a.lat < b.lat);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point& a, const Point& b) { return a.lon == b.lon && a.lat == b.lat; }),
            pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && orient(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

Mesh buildMesh(std::span<const Point> points, const Polygon& boundaryIn, const MeshOptions& options) {
  if (!(options.maxEdge > 0.0)) throw GeometryError("maxEdge must be positive");
  std::vector<Point> all(points.begin(), points.end());
  all.insert(all.end(), boundaryIn.begin(), boundaryIn.end());
  if (allCollinear(all)) throw GeometryError("mesh construction needs at least three non-collinear points");

  Polygon boundary = boundaryIn;
  if (boundary.size() > 1 && boundary.front().lon == boundary.back().lon &&
      boundary.front().lat == boundary.back().lat)
    boundary.pop_back();
  if (boundary.empty()) boundary = convexHull(points);
  if (boundary.size() < 3 || std::fabs(polygonArea(boundary)) == 0.0)
    throw GeometryError("mesh boundary is degenerate");
  if (polygonArea(boundary) < 0) std::reverse(boundary.begin(), boundary.end());

  Point lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point hi{-lo.lon, -lo.lat};
  for (const auto& p : all) {
    lo.lon = std::min(lo.lon, p.lon);
    lo.lat = std::min(lo.lat, p.lat);
    hi.lon = std::max(hi.lon, p.lon);
    hi.lat = std::max(hi.lat, p.lat);
  }
  const double diameter = std::hypot(hi.lon - lo.lon, hi.lat - lo.lat);
  const double pad = std::max(options.extension, 0.0) * diameter;
  lo = {lo.lon - pad, lo.lat - pad};
  hi = {hi.lon + pad, hi.lat + pad};

  const double inner = options.maxEdge;
  const double outer = options.maxEdge * std::max(options.outerEdgeFactor, 1.0);
  Triangulator tri(lo, hi);

  auto subdivide = [&](const Point& a, const Point& b, double limit, bool includeStart) {
    const double len = std::hypot(b.lon - a.lon, b.lat - a.lat);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / limit - 1e-9)));
    for (int k = includeStart ? 0 : 1; k < pieces; ++k) {
      const double t = static_cast<double>(k) / pieces;
      tri.insert({a.lon + t * (b.lon - a.lon), a.lat + t * (b.lat - a.lat)});
    }
  };
  const std::array<Point, 4> rect{lo, Point{hi.lon, lo.lat}, hi, Point{lo.lon, hi.lat}};
  if (pad > 0)
    for (int k = 0; k < 4; ++k) subdivide(rect[k], rect[(k + 1) % 4], outer, false);
  for (std::size_t k = 0; k < boundary.size(); ++k)
    subdivide(boundary[k], boundary[(k + 1) % boundary.size()], inner, true);

  PointFilter filter(options.cutoff);
  for (const auto& v : tri.vertices()) filter.accept(v);
  for (const auto& p : points)
    if (filter.accept(p)) tri.insert(p);

  const std::vector<Polygon> rings{boundary};
  auto limitFor = [&](const Point& a, const Point& b) {
    const Point mid{0.5 * (a.lon + b.lon), 0.5 * (a.lat + b.lat)};
    if (pointInRings(rings, mid) || pointInRings(rings, a) || pointInRings(rings, b)) return inner;
    return outer;
  };

  constexpr std::size_t kMaxVertices = 500000;
  for (;;) {
    struct LongEdge {
      double excess;
      int a, b;
    };
    std::vector<LongEdge> longEdges;
    const auto& vs = tri.vertices();
    tri.forEachTriangle([&](const std::array<int, 3>& t) {
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        if (a > b) continue;  // each interior edge once; hull edges may be skipped
        const double len = std::hypot(vs[a].lon - vs[b].lon, vs[a].lat - vs[b].lat);
        const double limit = limitFor(vs[a], vs[b]);
        if (len > limit * (1 + 1e-12)) longEdges.push_back({len / limit, a, b});
      }
    });
    // Hull edges only appear in one direction; catch those with a > b.
    tri.forEachTriangle([&](const std::array<int, 3>& t) {
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        if (a < b) continue;
        if (tri.hasEdge(a, b) && tri.hasEdge(b, a)) continue;
        const double len = std::hypot(vs[a].lon - vs[b].lon, vs[a].lat - vs[b].lat);
        const double limit = limitFor(vs[a], vs[b]);
        if (len > limit * (1 + 1e-12)) longEdges.push_back({len / limit, b, a});
      }
    });
    if (longEdges.empty()) break;
    std::sort(longEdges.begin(), longEdges.end(), [](const LongEdge& x, const LongEdge& y) {
      if (x.excess != y.excess) return x.excess > y.excess;
      return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });
    for (const auto& e : longEdges) {
      if (!tri.hasEdge(e.a, e.b) && !tri.hasEdge(e.b, e.a)) continue;
      const Point a = tri.vertices()[e.a], b = tri.vertices()[e.b];
      tri.insert({0.5 * (a.lon + b.lon), 0.5 * (a.lat + b.lat)});
    }
    if (tri.vertices().size() > kMaxVertices) throw GeometryError("mesh refinement exceeded the vertex limit");
  }

  Mesh mesh;
  mesh.vertices = tri.vertices();
  mesh.boundary = boundary;
  tri.forEachTriangle([&](const std::array<int, 3>& t) { mesh.triangles.push_back(t); });
  return mesh;
}

}  // namespace stzi
