#pragma once
// Check records, plot tables and their on-disk forms: report.jsonl, one CSV
// per table (plus histograms of sample tables) and a manifest.

#include "paralab/harness/config.hpp"

#include <deque>
#include <iomanip>
#include <sstream>

namespace paralab::harness {

struct Record {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparator;  // "<=", ">=", "==", "info"
  bool pass = true;
  std::string anchor;      // the result checked, or "plumbing"
  json extra = json::object();
};

struct Table {
  std::string name;
  std::string kind;  // "curve", "fit" or "samples"
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
  std::string suite;
  json provenance = json::object();
  std::deque<Record> records;  // deque: references returned by le/ge/table stay valid
  std::deque<Table> tables;

  bool passed() const {
    return std::all_of(records.begin(), records.end(), [](const Record& r) { return r.pass; });
  }

  Record& le(std::string name, double value, double threshold, std::string anchor) {
    return add(std::move(name), value, threshold, "<=", std::isfinite(value) && value <= threshold, std::move(anchor));
  }
  Record& ge(std::string name, double value, double threshold, std::string anchor) {
    return add(std::move(name), value, threshold, ">=", std::isfinite(value) && value >= threshold, std::move(anchor));
  }
  Record& truth(std::string name, bool ok, std::string anchor) {
    return add(std::move(name), ok ? 1.0 : 0.0, 1.0, "==", ok, std::move(anchor));
  }
  Record& info(std::string name, double value, std::string anchor) {
    return add(std::move(name), value, 0.0, "info", true, std::move(anchor));
  }
  Table& table(std::string name, std::string kind, std::vector<std::string> columns) {
    tables.push_back({std::move(name), std::move(kind), std::move(columns), {}});
    return tables.back();
  }

 private:
  Record& add(std::string name, double value, double threshold, std::string cmp, bool pass, std::string anchor) {
    records.push_back({std::move(name), value, threshold, std::move(cmp), pass, std::move(anchor), json::object()});
    return records.back();
  }
};

inline json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const Record& r, const std::string& suite) {
  json j{{"type", "record"},          {"suite", suite},       {"name", r.name},
         {"value", number_json(r.value)}, {"threshold", number_json(r.threshold)},
         {"comparator", r.comparator}, {"pass", r.pass},       {"anchor", r.anchor}};
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

inline json to_json(const Table& t, const std::string& suite) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json a = json::array();
    for (double v : row) a.push_back(number_json(v));
    rows.push_back(a);
  }
  return {{"type", "table"}, {"suite", suite}, {"name", t.name}, {"kind", t.kind}, {"columns", t.columns}, {"rows", rows}};
}

/// JSON lines: provenance, records, tables. Byte-stable for a fixed config.
inline std::string serialize(const ExperimentReport& rep) {
  std::string out;
  json head = rep.provenance;
  head["type"] = "provenance";
  head["suite"] = rep.suite;
  out += head.dump() + "\n";
  for (const auto& r : rep.records) out += to_json(r, rep.suite).dump() + "\n";
  for (const auto& t : rep.tables) out += to_json(t, rep.suite).dump() + "\n";
  return out;
}

inline double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

/// Reads every report in a JSON-lines file (several suites may share one file).
inline std::vector<ExperimentReport> parse_reports(const std::string& text) {
  std::vector<ExperimentReport> out;
  std::istringstream in(text);
  std::string line;
  auto current = [&](const std::string& suite) -> ExperimentReport& {
    if (out.empty() || out.back().suite != suite) {
      out.emplace_back();
      out.back().suite = suite;
    }
    return out.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const auto type = j.at("type").get<std::string>();
    const auto suite = j.at("suite").get<std::string>();
    if (type == "provenance") {
      out.emplace_back();
      out.back().suite = suite;
      out.back().provenance = j;
      out.back().provenance.erase("type");
      out.back().provenance.erase("suite");
    } else if (type == "record") {
      Record r{j.at("name"), number_from(j.at("value")), number_from(j.at("threshold")), j.at("comparator"),
               j.at("pass"), j.at("anchor"), j.value("extra", json::object())};
      current(suite).records.push_back(std::move(r));
    } else if (type == "table") {
      Table t{j.at("name"), j.at("kind"), j.at("columns").get<std::vector<std::string>>(), {}};
      for (const auto& row : j.at("rows")) {
        std::vector<double> v;
        for (const auto& x : row) v.push_back(number_from(x));
        t.rows.push_back(std::move(v));
      }
      current(suite).tables.push_back(std::move(t));
    } else {
      throw InvalidArgument("report: unknown line type \"" + type + "\"");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// plot data

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline std::string csv_text(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_number(row[i]);
    out += "\n";
  }
  return out;
}

/// Histogram of the last column of a samples table: fixed bin count over the
/// sample range.
inline Table histogram(const Table& t, int bins = 20) {
  Table h{t.name + "_hist", "histogram", {"lo", "hi", "count"}, {}};
  std::vector<double> v;
  for (const auto& row : t.rows) {
    if (!row.empty() && std::isfinite(row.back())) v.push_back(row.back());
  }
  if (v.empty()) return h;
  const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  const double w = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
  for (double x : v) {
    const int b = std::clamp(static_cast<int>((x - lo) / w), 0, bins - 1);
    count[static_cast<std::size_t>(b)] += 1.0;
  }
  for (int b = 0; b < bins; ++b) h.rows.push_back({lo + b * w, lo + (b + 1) * w, count[static_cast<std::size_t>(b)]});
  return h;
}

/// Writes one CSV per table (and a histogram per samples table) into dir,
/// with manifest.json listing them. Returns the manifest.
inline json emit_plot_data(const std::vector<ExperimentReport>& reports, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json files = json::array();
  auto emit = [&](const std::string& suite, const Table& t) {
    const std::string file = suite + "_" + t.name + ".csv";
    io::write_text(dir / file, csv_text(t));
    files.push_back({{"file", file}, {"suite", suite}, {"table", t.name}, {"kind", t.kind}, {"columns", t.columns}});
  };
  for (const auto& rep : reports) {
    for (const auto& t : rep.tables) {
      emit(rep.suite, t);
      if (t.kind == "samples") emit(rep.suite, histogram(t));
    }
  }
  const json manifest{{"files", files}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace paralab::harness
