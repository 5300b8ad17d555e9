#include <cmath>
#include <sstream>

#include "doctest.h"
#include "stzi/data.hpp"
#include "stzi/error.hpp"
#include "stzi/simulate.hpp"

using namespace stzi;

namespace {

RegionSet twoRegions() {
  RegionSet rs;
  Region west{"West", {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}, {{2000, 1000.0}, {2001, 1100.0}}};
  Region east{"East", {{{1, 0}, {2, 0}, {2, 1}, {1, 1}}}, {{2000, 500.0}}};
  rs.regions = {west, east};
  return rs;
}

}  // namespace

TEST_CASE("season coding") {
  CHECK(encodeSeason(12) == Season::Winter);
  CHECK(encodeSeason(1) == Season::Winter);
  CHECK(encodeSeason(2) == Season::Winter);
  CHECK(encodeSeason(3) == Season::Spring);
  CHECK(encodeSeason(5) == Season::Spring);
  CHECK(encodeSeason(6) == Season::Summer);
  CHECK(encodeSeason(8) == Season::Summer);
  CHECK(encodeSeason(9) == Season::Autumn);
  CHECK(encodeSeason(11) == Season::Autumn);
  CHECK_THROWS_AS(encodeSeason(0), Error);
  CHECK_THROWS_AS(encodeSeason(13), Error);
}

TEST_CASE("group extraction") {
  const GroupLexicon lex = defaultLexicon();
  CHECK(extractGroup("Clashes between ENDF and OLA near the town", lex).value() == "EDF");
  CHECK(extractGroup("The Oromo Liberation Army attacked an ENDF post", lex).value() == "OLA");
  CHECK(extractGroup("tplf fighters moved north", lex).value() == "TPLF");
  CHECK_FALSE(extractGroup("Unidentified armed men", lex).has_value());
  // Aliases must match whole words.
  CHECK_FALSE(extractGroup("the SOLAR farm", lex).has_value());
  // Equal-length matches: earliest position wins.
  CHECK(extractGroup("ONLF and TPLF", GroupLexicon{{"B", {"TPLF"}}, {"A", {"ONLF"}}}).value() == "A");
  CHECK(extractGroup("ONLF and OLAX", GroupLexicon{{"A", {"OLAX"}}, {"B", {"ONLF"}}}).value() == "B");
}

TEST_CASE("events CSV parsing") {
  const std::string csv =
      "event_date,year,event_type,notes,fatalities,latitude,longitude\n"
      "2000-03-15,2000,Battles,\"ENDF, local militia\",3,0.5,0.5\n"
      "14 December 2000,2000,Riots,\"multi\nline\",0,0.5,1.5\n"
      "2000-07-01,2000,Battles,,x,0.5,0.5\n"
      "2000-07-01,2000,Battles,,2,95,0.5\n"
      "2000-07-01,2000,Battles,,2\n"
      "2001-10-02,2001,Protests,,-1,0.5,0.5\n"
      "2001-10-02,2001,Protests,,0,0.2,0.2\n";
  std::istringstream in(csv);
  const ParseResult r = parseEvents(in, SchemaConfig{}, defaultLexicon());
  REQUIRE(r.records.size() == 3);
  REQUIRE(r.errors.size() == 4);
  CHECK(r.errors[0].line == 5);
  CHECK(r.errors[1].line == 6);
  CHECK(r.errors[2].line == 7);
  CHECK(r.errors[3].line == 8);
  CHECK(r.records[0].month == 3);
  CHECK(r.records[0].group.value() == "EDF");
  CHECK(r.records[1].month == 12);
  CHECK(r.records[1].notes == "multi\nline");
  CHECK(r.records[2].year == 2001);

  std::istringstream missing("year,event_type,fatalities,latitude,longitude\n2000,Battles,0,1,1\n");
  CHECK_THROWS_AS(parseEvents(missing, SchemaConfig{}, defaultLexicon()), Error);

  SchemaConfig strict;
  strict.eventTypes = {"Battles"};
  std::istringstream in2(csv);
  CHECK(parseEvents(in2, strict, defaultLexicon()).records.size() == 1);
}

TEST_CASE("dataset encoding") {
  std::vector<EventRecord> recs(4);
  recs[0] = {{0.5, 0.5}, 2000, 1, "Battles", "EDF", 3, "", "", 0};
  recs[1] = {{1.5, 0.5}, 2000, 7, "Riots", std::nullopt, 0, "", "", 0};
  recs[2] = {{0.5, 0.5}, 2001, 10, "Protests", "OLA", 1, "", "", 0};
  recs[3] = {{5.0, 5.0}, 2001, 4, "Battles", std::nullopt, 0, "", "", 0};
  const EncodedDataset d = buildDataset(recs, twoRegions(), EncodingConfig{});
  REQUIRE(d.size() == 3);
  CHECK(d.report.dropped.size() == 1);
  CHECK(d.report.dropped[0].first == 3);
  CHECK(d.offset[0] == doctest::Approx(std::log(1000.0)));
  CHECK(d.offset[1] == doctest::Approx(std::log(500.0)));
  CHECK(d.offset[2] == doctest::Approx(std::log(1100.0)));
  CHECK(d.regions[1] == "East");
  // References: Battles (alphabetical), Autumn, EDF (alphabetical). No
  // spring record survives, so there is no spring column.
  const std::vector<std::string> names{"intercept",     "event_type:Protests", "event_type:Riots", "season:Summer",
                                       "season:Winter", "group:None",          "group:OLA"};
  CHECK(d.columnNames == names);
  const Eigen::MatrixXd x(d.design);
  CHECK(x.row(0).sum() == 2.0);  // intercept + winter
  CHECK(x(0, 4) == 1.0);
  CHECK(x(1, 2) == 1.0);
  CHECK(x(1, 3) == 1.0);
  CHECK(x(1, 5) == 1.0);
  CHECK(x(2, 1) == 1.0);
  CHECK(x(2, 6) == 1.0);
  CHECK(x.row(2).sum() == 3.0);

  EncodingConfig strict;
  strict.dropUnresolved = false;
  CHECK_THROWS_AS(buildDataset(recs, twoRegions(), strict), Error);

  recs[3] = {{1.5, 0.5}, 2001, 4, "Battles", std::nullopt, 0, "", "", 0};
  try {
    buildDataset(recs, twoRegions(), EncodingConfig{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("East/2001") != std::string::npos);
  }
}

TEST_CASE("odds reduction") { CHECK(oddsReduction(-0.221) == doctest::Approx(0.198).epsilon(1e-3)); }

TEST_CASE("synthetic sample round trip") {
  const SyntheticSample s = generateSyntheticSample(SampleConfig{});
  REQUIRE(s.records.size() == 8490);
  std::ostringstream csv, geo, pop;
  writeEventsCsv(csv, s.records);
  writeRegionsGeoJson(geo, s.regions);
  writePopulationCsv(pop, s.regions);
  std::istringstream in(csv.str());
  const ParseResult r = parseEvents(in, SchemaConfig{}, defaultLexicon());
  CHECK(r.errors.empty());
  CHECK(r.records.size() == 8490);
  std::istringstream gin(geo.str()), pin(pop.str());
  RegionSet regions = readRegionsGeoJson(gin);
  readPopulationCsv(pin, regions);
  CHECK(regions.regions.size() == 12);
  const EncodedDataset d = buildDataset(r.records, regions, EncodingConfig{});
  CHECK(d.size() >= 8400);
  std::size_t zeros = 0, grouped = 0;
  for (std::size_t i = 0; i < d.size(); ++i) zeros += d.y[i] == 0;
  for (const auto& rec : r.records) grouped += rec.group.has_value();
  CHECK(zeros > d.size() / 3);
  CHECK(zeros < d.size() * 9 / 10);
  CHECK(grouped > 3000);
  std::ostringstream again;
  writeEventsCsv(again, generateSyntheticSample(SampleConfig{}).records);
  CHECK(again.str() == csv.str());
}
