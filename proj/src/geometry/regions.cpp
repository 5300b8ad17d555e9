#include <cmath>
#include <sstream>

#include "json.hpp"

#include "stzi/error.hpp"
#include "stzi/geometry.hpp"

namespace stzi {
namespace {

bool onSegment(const Point& a, const Point& b, const Point& p) {
  const double dx = b.lon - a.lon, dy = b.lat - a.lat;
  const double len2 = dx * dx + dy * dy;
  const double scale = std::max({1.0, std::fabs(a.lon), std::fabs(a.lat)});
  const double tol = 1e-12 * scale;
  if (len2 == 0.0) return std::hypot(p.lon - a.lon, p.lat - a.lat) <= tol;
  const double cross = dx * (p.lat - a.lat) - dy * (p.lon - a.lon);
  if (std::fabs(cross) > tol * std::sqrt(len2)) return false;
  const double t = (dx * (p.lon - a.lon) + dy * (p.lat - a.lat)) / len2;
  return t >= -1e-12 && t <= 1 + 1e-12;
}

Polygon parseRing(const nlohmann::json& ring) {
  Polygon poly;
  for (const auto& c : ring) poly.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  if (poly.size() > 1 && poly.front().lon == poly.back().lon && poly.front().lat == poly.back().lat)
    poly.pop_back();
  if (poly.size() < 3) throw Error("region ring has fewer than three distinct vertices");
  return poly;
}

}  // namespace

bool pointInRings(const std::vector<Polygon>& rings, const Point& p) {
  bool inside = false;
  for (const auto& ring : rings) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i)
      if (onSegment(ring[i], ring[(i + 1) % n], p)) return true;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point& a = ring[i];
      const Point& b = ring[j];
      if ((a.lat > p.lat) != (b.lat > p.lat)) {
        const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
        if (p.lon < x) inside = !inside;
      }
    }
  }
  return inside;
}

std::optional<RegionHit> locateRegion(const RegionSet& set, const Point& p, int year) {
  for (std::size_t i = 0; i < set.regions.size(); ++i) {
    const Region& r = set.regions[i];
    if (!pointInRings(r.rings, p)) continue;
    auto it = r.population.find(year);
    if (it == r.population.end())
      throw Error("region '" + r.name + "' has no population for year " + std::to_string(year));
    return RegionHit{i, r.name, it->second};
  }
  return std::nullopt;
}

RegionSet readRegionsGeoJson(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("regions GeoJSON is not valid JSON: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection") throw Error("regions file must be a GeoJSON FeatureCollection");
  RegionSet set;
  for (const auto& f : doc.at("features")) {
    Region r;
    r.name = f.at("properties").at("name").get<std::string>();
    const auto& g = f.at("geometry");
    const std::string type = g.at("type").get<std::string>();
    if (type == "Polygon") {
      for (const auto& ring : g.at("coordinates")) r.rings.push_back(parseRing(ring));
    } else if (type == "MultiPolygon") {
      for (const auto& poly : g.at("coordinates"))
        for (const auto& ring : poly) r.rings.push_back(parseRing(ring));
    } else {
      throw Error("unsupported geometry type '" + type + "' for region " + r.name);
    }
    set.regions.push_back(std::move(r));
  }
  return set;
}

void readPopulationCsv(std::istream& in, RegionSet& set) {
  std::string line;
  if (!std::getline(in, line)) throw Error("population CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "region,year,population") throw Error("population CSV header must be 'region,year,population'");
  std::size_t lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? std::string::npos : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos) throw Error("population CSV line " + std::to_string(lineNo) + " is malformed");
    const std::string name = line.substr(0, c1);
    int year = 0;
    double pop = 0;
    try {
      year = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
      pop = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw Error("population CSV line " + std::to_string(lineNo) + " has a non-numeric field");
    }
    if (!(pop > 0)) throw Error("population must be positive (line " + std::to_string(lineNo) + ")");
    bool found = false;
    for (auto& r : set.regions)
      if (r.name == name) {
        r.population[year] = pop;
        found = true;
      }
    if (!found) throw Error("population CSV references unknown region '" + name + "'");
  }
}

}  // namespace stzi
