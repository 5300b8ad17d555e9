#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

namespace stzi {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Planar coordinates in degrees.
struct Point {
  double lon = 0.0;
  double lat = 0.0;
};

using Polygon = std::vector<Point>;

struct MeshOptions {
  double maxEdge = 0.1;
  // Seed points closer than this to an existing vertex are skipped;
  // <= 0 removes exact duplicates only.
  double cutoff = 0.0;
  // Width of the outer band as a fraction of the domain diameter.
  double extension = 0.2;
  // Edge limit outside the boundary, as a multiple of maxEdge.
  double outerEdgeFactor = 2.0;
};

struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  Polygon boundary;

  int size() const { return static_cast<int>(vertices.size()); }
};

struct FemMatrices {
  Eigen::VectorXd massLumped;  // diagonal of C~
  SparseMatrix stiffness;      // G
};

struct Projector {
  SparseRowMatrix matrix;     // n x K barycentric weights
  std::vector<bool> outside;  // row i has no containing triangle
};

struct Region {
  std::string name;
  std::vector<Polygon> rings;  // even-odd over all rings
  std::map<int, double> population;
};

struct RegionSet {
  std::vector<Region> regions;
};

struct RegionHit {
  std::size_t index;
  std::string name;
  double population;
};

// Delaunay mesh over the convex region spanned by `points` and `boundary`,
// padded by an outer band. An empty boundary uses the convex hull of points.
Mesh buildMesh(std::span<const Point> points, const Polygon& boundary, const MeshOptions& options);
inline Mesh buildMesh(std::span<const Point> points, const Polygon& boundary, double maxEdge) {
  MeshOptions o;
  o.maxEdge = maxEdge;
  return buildMesh(points, boundary, o);
}

FemMatrices assembleFem(const Mesh& mesh);

// Point location over a fixed mesh with a uniform bucket grid.
class TriangleLocator {
 public:
  explicit TriangleLocator(const Mesh& mesh);
  // Index of the first (lowest index) triangle containing p, and its
  // barycentric weights.
  std::optional<std::pair<int, std::array<double, 3>>> locate(const Point& p) const;

 private:
  const Mesh* mesh_;
  double x0_ = 0, y0_ = 0, cell_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

Projector projectPoints(const Mesh& mesh, std::span<const Point> points);

// Returns nullopt when p lies in no region. Throws if the containing region
// has no population entry for `year`. Points on a shared border go to the
// region listed first.
std::optional<RegionHit> locateRegion(const RegionSet& regions, const Point& p, int year);

bool pointInRings(const std::vector<Polygon>& rings, const Point& p);
double polygonArea(const Polygon& polygon);
Polygon convexHull(std::span<const Point> points);

// GeoJSON FeatureCollection of Polygon / MultiPolygon features carrying a
// "name" property. Populations are attached separately.
RegionSet readRegionsGeoJson(std::istream& in);
// CSV with header `region,year,population`.
void readPopulationCsv(std::istream& in, RegionSet& regions);

}  // namespace stzi
