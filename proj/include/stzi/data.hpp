#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stzi/geometry.hpp"

namespace stzi {

enum class Season { Winter, Spring, Summer, Autumn };

std::string to_string(Season s);
// Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov autumn.
Season encodeSeason(int month);

struct EventRecord {
  Point point;
  int year = 0;
  int month = 1;
  std::string eventType;
  std::optional<std::string> group;
  std::int64_t fatalities = 0;
  std::string notes;
  std::string region;
  double populationOffset = 0.0;  // log population, filled by buildDataset
};

struct GroupAlias {
  std::string label;
  std::vector<std::string> aliases;
};
using GroupLexicon = std::vector<GroupAlias>;

GroupLexicon defaultLexicon();
// Longest alias found anywhere in `notes` (case-insensitive); ties go to the
// alias that appears first in the text, then to lexicon order.
std::optional<std::string> extractGroup(const std::string& notes, const GroupLexicon& lexicon);

struct SchemaConfig {
  std::string longitude = "longitude";
  std::string latitude = "latitude";
  std::string year = "year";
  std::string month = "month";
  std::string eventDate = "event_date";  // used when `month` is absent
  std::string eventType = "event_type";
  std::string fatalities = "fatalities";
  std::string notes = "notes";
  std::vector<std::string> eventTypes;  // empty accepts any label
  int firstYear = 1900;
  int lastYear = 2100;
};

struct RowError {
  std::size_t line;
  std::string message;
};

struct ParseResult {
  std::vector<EventRecord> records;
  std::vector<RowError> errors;
};

// Throws if the header lacks a required column; bad rows go to `errors`.
ParseResult parseEvents(std::istream& in, const SchemaConfig& schema, const GroupLexicon& lexicon);

struct CategoricalColumn {
  std::string name;
  std::vector<std::string> levels;  // sorted; levels[reference] has no column
  int reference = 0;
  std::vector<int> codes;  // per record, index into levels

  std::string decode(int code) const { return levels.at(static_cast<std::size_t>(code)); }
};

struct DropReport {
  std::size_t parsed = 0;
  std::size_t kept = 0;
  std::vector<std::pair<std::size_t, std::string>> dropped;  // record index, reason
};

struct EncodingConfig {
  std::string eventTypeReference;  // empty: alphabetically first level
  std::string groupReference;      // empty: alphabetically first level
  std::string noGroupLabel = "None";
  bool dropUnresolved = true;
};

struct EncodedDataset {
  SparseRowMatrix design;  // intercept + dummy columns
  std::vector<std::string> columnNames;
  std::vector<std::int64_t> y;
  Eigen::VectorXd offset;  // log population
  std::vector<Point> points;
  std::vector<int> years;
  std::vector<std::string> regions;
  std::vector<CategoricalColumn> factors;
  DropReport report;

  std::size_t size() const { return y.size(); }
};

EncodedDataset buildDataset(const std::vector<EventRecord>& records, const RegionSet& regions,
                            const EncodingConfig& config);

// Dummy coding of categorical columns plus an intercept.
SparseRowMatrix dummyDesign(const std::vector<CategoricalColumn>& factors, std::size_t rows,
                            std::vector<std::string>& names);

// 1 - exp(beta): relative reduction in odds for a coefficient.
double oddsReduction(double beta);

// ACLED-style CSV with the default schema column names.
void writeEventsCsv(std::ostream& out, const std::vector<EventRecord>& records);

}  // namespace stzi
