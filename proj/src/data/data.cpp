#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "stzi/data.hpp"
#include "stzi/error.hpp"

namespace stzi {

std::string to_string(Season s) {
  switch (s) {
    case Season::Winter: return "Winter";
    case Season::Spring: return "Spring";
    case Season::Summer: return "Summer";
    case Season::Autumn: return "Autumn";
  }
  return "unknown";
}

Season encodeSeason(int month) {
  if (month < 1 || month > 12) throw Error("month must lie in 1..12, got " + std::to_string(month));
  if (month == 12 || month <= 2) return Season::Winter;
  if (month <= 5) return Season::Spring;
  if (month <= 8) return Season::Summer;
  return Season::Autumn;
}

GroupLexicon defaultLexicon() {
  return {
      {"EDF", {"EDF", "ENDF", "Ethiopian National Defense Force", "Military Forces of Ethiopia"}},
      {"EUFF", {"EUFF", "United Front of Ethiopian Federalist Forces"}},
      {"Ginbot7", {"Ginbot7", "Ginbot 7", "Patriotic Ginbot 7"}},
      {"ONLF", {"ONLF", "Ogaden National Liberation Front"}},
      {"OLA", {"OLA", "Oromo Liberation Army"}},
      {"SPLA", {"SPLA", "Sudan People's Liberation Army"}},
      {"TPDM", {"TPDM", "Tigray People's Democratic Movement"}},
      {"TPLF", {"TPLF", "Tigray People's Liberation Front"}},
      {"Eritrea army", {"Eritrea army", "Eritrean army", "Military Forces of Eritrea"}},
  };
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool wordChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// First position of `needle` in `hay` bounded by non-alphanumeric characters.
std::size_t findWord(const std::string& hay, const std::string& needle) {
  std::size_t pos = hay.find(needle);
  while (pos != std::string::npos) {
    const bool leftOk = pos == 0 || !wordChar(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool rightOk = end >= hay.size() || !wordChar(hay[end]);
    if (leftOk && rightOk) return pos;
    pos = hay.find(needle, pos + 1);
  }
  return std::string::npos;
}

}  // namespace

std::optional<std::string> extractGroup(const std::string& notes, const GroupLexicon& lexicon) {
  const std::string text = lower(notes);
  std::optional<std::string> best;
  std::size_t bestLen = 0, bestPos = std::string::npos;
  for (const GroupAlias& g : lexicon) {
    for (const std::string& alias : g.aliases) {
      if (alias.empty()) continue;
      const std::size_t pos = findWord(text, lower(alias));
      if (pos == std::string::npos) continue;
      if (alias.size() > bestLen || (alias.size() == bestLen && pos < bestPos)) {
        best = g.label;
        bestLen = alias.size();
        bestPos = pos;
      }
    }
  }
  return best;
}

namespace {

// Reads one CSV record; quoted fields may contain commas, doubled quotes and
// newlines. Returns false at end of input.
bool readRecord(std::istream& in, std::vector<std::string>& fields, std::size_t& lineNo) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++lineNo;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i >= line.size()) {
      if (quoted) {
        std::string more;
        if (!std::getline(in, more)) break;
        ++lineNo;
        field.push_back('\n');
        line = more;
        i = 0;
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
    ++i;
  }
  fields.push_back(field);
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parseDouble(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  const auto r = std::from_chars(first, last, out);
  return r.ec == std::errc() && r.ptr == last && std::isfinite(out);
}

bool parseInt(const std::string& s, long long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  return r.ec == std::errc() && r.ptr == t.data() + t.size();
}

int monthFromName(const std::string& name) {
  static const char* names[] = {"january", "february", "march",     "april",   "may",      "june",
                                "july",    "august",   "september", "october", "november", "december"};
  const std::string l = lower(name);
  for (int m = 0; m < 12; ++m)
    if (l == names[m] || (l.size() >= 3 && std::string(names[m]).rfind(l, 0) == 0)) return m + 1;
  return 0;
}

// "YYYY-MM-DD" or "DD Month YYYY"; returns 0 on failure.
int monthFromDate(const std::string& date) {
  const std::string d = trim(date);
  long long v = 0;
  if (d.size() >= 7 && d[4] == '-' && parseInt(d.substr(5, 2), v)) return static_cast<int>(v);
  const auto s1 = d.find(' ');
  const auto s2 = d.rfind(' ');
  if (s1 != std::string::npos && s2 != s1) return monthFromName(d.substr(s1 + 1, s2 - s1 - 1));
  return 0;
}

}  // namespace

ParseResult parseEvents(std::istream& in, const SchemaConfig& schema, const GroupLexicon& lexicon) {
  std::vector<std::string> header;
  std::size_t lineNo = 0;
  if (!readRecord(in, header, lineNo)) throw Error("events CSV is empty");
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);
  auto column = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int cLon = column(schema.longitude), cLat = column(schema.latitude), cYear = column(schema.year);
  const int cMonth = column(schema.month), cDate = column(schema.eventDate);
  const int cType = column(schema.eventType), cFat = column(schema.fatalities), cNotes = column(schema.notes);
  const std::pair<int, const std::string*> required[] = {
      {cLon, &schema.longitude}, {cLat, &schema.latitude}, {cYear, &schema.year},
      {cType, &schema.eventType}, {cFat, &schema.fatalities}};
  for (const auto& [idx, name] : required)
    if (idx < 0) throw Error("events CSV is missing required column '" + *name + "'");
  if (cMonth < 0 && cDate < 0)
    throw Error("events CSV is missing required column '" + schema.month + "' (or '" + schema.eventDate + "')");

  const std::set<std::string> vocabulary(schema.eventTypes.begin(), schema.eventTypes.end());
  ParseResult out;
  std::vector<std::string> f;
  while (true) {
    const std::size_t startLine = lineNo + 1;
    if (!readRecord(in, f, lineNo)) break;
    if (f.size() == 1 && trim(f[0]).empty()) continue;
    auto fail = [&](const std::string& msg) { out.errors.push_back({startLine, msg}); };
    if (f.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
      continue;
    }
    EventRecord r;
    if (!parseDouble(f[static_cast<std::size_t>(cLon)], r.point.lon) || r.point.lon < -180 || r.point.lon > 180) {
      fail("unparseable longitude '" + f[static_cast<std::size_t>(cLon)] + "'");
      continue;
    }
    if (!parseDouble(f[static_cast<std::size_t>(cLat)], r.point.lat) || r.point.lat < -90 || r.point.lat > 90) {
      fail("unparseable latitude '" + f[static_cast<std::size_t>(cLat)] + "'");
      continue;
    }
    long long year = 0;
    if (!parseInt(f[static_cast<std::size_t>(cYear)], year)) {
      fail("unparseable year '" + f[static_cast<std::size_t>(cYear)] + "'");
      continue;
    }
    if (year < schema.firstYear || year > schema.lastYear) {
      fail("year " + std::to_string(year) + " outside the configured range");
      continue;
    }
    r.year = static_cast<int>(year);
    long long month = 0;
    if (cMonth >= 0) {
      if (!parseInt(f[static_cast<std::size_t>(cMonth)], month)) month = 0;
    } else {
      month = monthFromDate(f[static_cast<std::size_t>(cDate)]);
    }
    if (month < 1 || month > 12) {
      fail("unparseable month");
      continue;
    }
    r.month = static_cast<int>(month);
    r.eventType = trim(f[static_cast<std::size_t>(cType)]);
    if (r.eventType.empty() || (!vocabulary.empty() && !vocabulary.count(r.eventType))) {
      fail("event type '" + r.eventType + "' is not in the configured vocabulary");
      continue;
    }
    long long fat = 0;
    if (!parseInt(f[static_cast<std::size_t>(cFat)], fat) || fat < 0) {
      fail("fatalities must be a non-negative integer, got '" + f[static_cast<std::size_t>(cFat)] + "'");
      continue;
    }
    r.fatalities = fat;
    if (cNotes >= 0) {
      r.notes = f[static_cast<std::size_t>(cNotes)];
      r.group = extractGroup(r.notes, lexicon);
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

namespace {

CategoricalColumn makeFactor(const std::string& name, const std::vector<std::string>& values,
                             const std::string& reference) {
  CategoricalColumn col;
  col.name = name;
  const std::set<std::string> distinct(values.begin(), values.end());
  col.levels.assign(distinct.begin(), distinct.end());
  if (!reference.empty()) {
    const auto it = std::find(col.levels.begin(), col.levels.end(), reference);
    if (it == col.levels.end()) {
      col.levels.push_back(reference);
      std::sort(col.levels.begin(), col.levels.end());
    }
    col.reference =
        static_cast<int>(std::find(col.levels.begin(), col.levels.end(), reference) - col.levels.begin());
  }
  col.codes.reserve(values.size());
  for (const auto& v : values)
    col.codes.push_back(static_cast<int>(std::lower_bound(col.levels.begin(), col.levels.end(), v) - col.levels.begin()));
  return col;
}

}  // namespace

SparseRowMatrix dummyDesign(const std::vector<CategoricalColumn>& factors, std::size_t rows,
                            std::vector<std::string>& names) {
  names = {"intercept"};
  std::vector<std::vector<int>> columnOf;
  for (const CategoricalColumn& f : factors) {
    std::vector<int> map(f.levels.size(), -1);
    for (std::size_t l = 0; l < f.levels.size(); ++l) {
      if (static_cast<int>(l) == f.reference) continue;
      map[l] = static_cast<int>(names.size());
      names.push_back(f.name + ":" + f.levels[l]);
    }
    columnOf.push_back(std::move(map));
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < rows; ++r) {
    trips.emplace_back(static_cast<int>(r), 0, 1.0);
    for (std::size_t k = 0; k < factors.size(); ++k) {
      const int col = columnOf[k][static_cast<std::size_t>(factors[k].codes.at(r))];
      if (col >= 0) trips.emplace_back(static_cast<int>(r), col, 1.0);
    }
  }
  SparseRowMatrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
  x.setFromTriplets(trips.begin(), trips.end());
  return x;
}

EncodedDataset buildDataset(const std::vector<EventRecord>& records, const RegionSet& regions,
                            const EncodingConfig& config) {
  EncodedDataset d;
  d.report.parsed = records.size();
  std::vector<std::size_t> kept;
  std::vector<double> pops;
  std::set<std::pair<std::string, int>> missing;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EventRecord& r = records[i];
    std::optional<RegionHit> hit;
    try {
      hit = locateRegion(regions, r.point, r.year);
    } catch (const Error&) {
      // The containing region exists but lacks this year.
      for (const Region& reg : regions.regions)
        if (pointInRings(reg.rings, r.point)) {
          missing.insert({reg.name, r.year});
          break;
        }
      continue;
    }
    if (!hit) {
      if (!config.dropUnresolved)
        throw Error("record " + std::to_string(i) + " at (" + std::to_string(r.point.lon) + ", " +
                    std::to_string(r.point.lat) + ") lies in no region");
      d.report.dropped.push_back({i, "no containing region"});
      continue;
    }
    kept.push_back(i);
    pops.push_back(hit->population);
    d.regions.push_back(hit->name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& [name, year] : missing) list += (list.empty() ? "" : ", ") + name + "/" + std::to_string(year);
    throw Error("population missing for region/year pairs: " + list);
  }
  d.report.kept = kept.size();
  if (kept.empty()) throw Error("no records left after region matching");

  std::vector<std::string> types, seasons, groups;
  for (std::size_t i : kept) {
    const EventRecord& r = records[i];
    d.points.push_back(r.point);
    d.years.push_back(r.year);
    d.y.push_back(r.fatalities);
    types.push_back(r.eventType);
    seasons.push_back(to_string(encodeSeason(r.month)));
    groups.push_back(r.group.value_or(config.noGroupLabel));
  }
  d.offset.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) d.offset[static_cast<Eigen::Index>(k)] = std::log(pops[k]);
  d.factors.push_back(makeFactor("event_type", types, config.eventTypeReference));
  d.factors.push_back(makeFactor("season", seasons, "Autumn"));
  d.factors.push_back(makeFactor("group", groups, config.groupReference));
  d.design = dummyDesign(d.factors, kept.size(), d.columnNames);
  return d;
}

double oddsReduction(double beta) { return 1.0 - std::exp(beta); }

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void writeEventsCsv(std::ostream& out, const std::vector<EventRecord>& records) {
  out << "event_date,year,month,event_type,notes,fatalities,latitude,longitude\n";
  char buf[64];
  for (const EventRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%04d-%02d-15", r.year, r.month);
    out << buf << ',' << r.year << ',' << r.month << ',' << quote(r.eventType) << ',' << quote(r.notes) << ','
        << r.fatalities << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.point.lat, r.point.lon);
    out << buf << '\n';
  }
}

}  // namespace stzi
