#pragma once
// Running suites to disk and refinement studies.

#include "paralab/harness/suites.hpp"

namespace paralab::harness {

/// Runs one suite and writes report.jsonl plus the plot data into out.
inline ExperimentReport run_to_dir(const ExperimentConfig& c, const std::filesystem::path& out) {
  ExperimentReport rep = run_suite(c);
  std::filesystem::create_directories(out);
  io::write_text(out / "report.jsonl", serialize(rep));
  emit_plot_data({rep}, out / "plots");
  return rep;
}

/// Reads every report.jsonl below dir.
inline std::vector<ExperimentReport> collect_reports(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() == "report.jsonl") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ExperimentReport> out;
  for (const auto& f : files) {
    const auto bytes = io::read_bytes(f);
    auto reps = parse_reports(std::string(bytes.begin(), bytes.end()));
    out.insert(out.end(), reps.begin(), reps.end());
  }
  return out;
}

enum class RefineAxis { N, q, trunc };

inline RefineAxis refine_axis_from(const std::string& s) {
  if (s == "N") return RefineAxis::N;
  if (s == "q") return RefineAxis::q;
  if (s == "trunc") return RefineAxis::trunc;
  throw InvalidArgument("refine: axis must be N, q or trunc, got \"" + s + "\"");
}

/// Config at refinement step i: N doubles the grids (and any size ladder),
/// q doubles the t-grid density, trunc widens the truncation to lo/4^i, hi*2^i.
inline ExperimentConfig refined(const ExperimentConfig& c, RefineAxis axis, int i) {
  ExperimentConfig r = c;
  const int f = 1 << i;
  switch (axis) {
    case RefineAxis::N:
      for (auto& k : r.cases) k = io::resized(k, k.space.dims.at(0) * f);
      if (r.params.contains("ladder")) {
        for (auto& v : r.params["ladder"]) v = v.get<int>() * f;
      }
      break;
    case RefineAxis::q:
      r.tgrid.q *= f;
      break;
    case RefineAxis::trunc:
      r.tgrid.lo /= double(f) * f;
      r.tgrid.hi *= f;
      if (r.tgrid.delta) {
        r.tgrid.delta = *r.tgrid.delta / (double(f) * f);
        r.tgrid.R = *r.tgrid.R * f;
      }
      break;
  }
  return r;
}

inline double refine_parameter(const ExperimentConfig& c, RefineAxis axis) {
  switch (axis) {
    case RefineAxis::N:
      return c.cases.empty() ? 0.0 : c.cases[0].space.dims.at(0);
    case RefineAxis::q:
      return c.tgrid.q;
    case RefineAxis::trunc:
      return c.tgrid.delta ? *c.tgrid.delta : c.tgrid.lo;
  }
  return 0.0;
}

/// The headline quantity of a report: its first checked record.
inline const Record& primary_record(const ExperimentReport& rep) {
  for (const auto& r : rep.records) {
    if (r.comparator != "info") return r;
  }
  throw InvalidArgument("report for " + rep.suite + " has no checked record");
}

/// Repeats the suite along one axis; the table holds the primary value per
/// step, its change from the previous step and the observed order
/// log2(delta_{i-1} / delta_i).
inline ExperimentReport refinement_study(const ExperimentConfig& c, RefineAxis axis, int steps) {
  if (steps < 2) throw InvalidArgument("refine: steps must be >= 2");
  if (c.suite == "determinism") throw InvalidArgument("refine: determinism has no refinement axis");
  ExperimentReport out;
  out.suite = c.suite;
  auto& t = out.table("refinement", "curve", {"step", "param", "value", "delta", "order"});
  std::string name;
  double prev = 0.0, prev_delta = 0.0;
  for (int i = 0; i < steps; ++i) {
    const ExperimentConfig ci = refined(c, axis, i);
    const ExperimentReport rep = run_suite(ci);
    const Record& r = primary_record(rep);
    if (i == 0) {
      name = r.name;
      out.provenance = rep.provenance;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double delta = i > 0 ? std::abs(r.value - prev) : nan;
    const double order = i > 1 && delta > 0.0 ? std::log2(prev_delta / delta) : nan;
    t.rows.push_back({double(i), refine_parameter(ci, axis), r.value, delta, order});
    out.info("value[step=" + std::to_string(i) + "]", r.value, name);
    prev = r.value;
    prev_delta = delta;
  }
  const char* axes[] = {"N", "q", "trunc"};
  out.provenance["refine_axis"] = axes[static_cast<int>(axis)];
  out.provenance["refine_steps"] = steps;
  out.provenance["refine_quantity"] = name;
  return out;
}

}  // namespace paralab::harness
