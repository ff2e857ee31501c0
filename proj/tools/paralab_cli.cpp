// paralab: run verification suites, refinement studies and summarize reports.
//
//   paralab run <config.json> [--suite S] [--seed N] [--out DIR]
//   paralab refine <config.json> --axis N|q|trunc --steps K [--out DIR]
//   paralab report <dir>
//
// Exit status: 0 when every check passes, 1 when any fails, 2 on bad input
// or an internal error. PARALAB_THREADS sets the worker count.

#include "paralab/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace paralab;
using namespace paralab::harness;

namespace {

void print_summary(const ExperimentReport& rep, std::ostream& os) {
  int fails = 0;
  for (const auto& r : rep.records) {
    if (r.comparator == "info") continue;
    fails += !r.pass;
    os << (r.pass ? "  pass  " : "  FAIL  ") << r.name << " = " << csv_number(r.value) << " " << r.comparator << " "
       << csv_number(r.threshold) << "\n";
  }
  os << rep.suite << ": " << (fails ? std::to_string(fails) + " failing check(s)" : std::string("all checks pass"))
     << "\n";
}

int run(const std::string& path, const std::string& suite, std::optional<std::uint64_t> seed,
        const std::string& out) {
  ExperimentConfig c = load_config(path);
  if (!suite.empty()) {
    if (!known_suite(suite)) throw InvalidArgument("unknown suite \"" + suite + "\"");
    c.suite = suite;
  }
  if (seed) c.seed = *seed;
  if (!out.empty()) c.out_dir = out;
  const auto rep = run_to_dir(c, c.out_dir);
  print_summary(rep, std::cout);
  std::cout << "report: " << (std::filesystem::path(c.out_dir) / "report.jsonl").string() << "\n";
  return rep.passed() ? 0 : 1;
}

int refine(const std::string& path, const std::string& axis, int steps, const std::string& out) {
  ExperimentConfig c = load_config(path);
  const auto rep = refinement_study(c, refine_axis_from(axis), steps);
  const std::filesystem::path dir = out.empty() ? std::filesystem::path(c.out_dir) / ("refine_" + axis) : std::filesystem::path(out);
  std::filesystem::create_directories(dir);
  io::write_text(dir / "report.jsonl", serialize(rep));
  emit_plot_data({rep}, dir / "plots");
  std::cout << csv_text(rep.tables.front());
  return 0;
}

int report(const std::string& dir) {
  if (!std::filesystem::exists(dir)) throw InvalidArgument("report: no such path " + dir);
  const auto reps = collect_reports(dir);
  bool ok = true;
  for (const auto& r : reps) {
    print_summary(r, std::cout);
    ok = ok && r.passed();
  }
  const std::filesystem::path base = std::filesystem::is_directory(dir) ? std::filesystem::path(dir)
                                                                        : std::filesystem::path(dir).parent_path();
  const json manifest = emit_plot_data(reps, base / "plots");
  std::cout << manifest.at("files").size() << " plot file(s) in " << (base / "plots").string() << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("PARALAB_THREADS")) {
    try {
      set_thread_count(std::stoi(t));
    } catch (const std::exception&) {
      std::cerr << "PARALAB_THREADS must be an integer\n";
      return 2;
    }
  }
  CLI::App app{"paralab verification harness"};
  app.require_subcommand(1);

  std::string config, suite, out, axis, dir;
  std::optional<std::uint64_t> seed;
  int steps = 3;

  auto* run_cmd = app.add_subcommand("run", "run the suite named in a config");
  run_cmd->add_option("config", config, "config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--suite", suite, "override the suite");
  run_cmd->add_option("--seed", seed, "override the seed");
  run_cmd->add_option("--out", out, "output directory");

  auto* refine_cmd = app.add_subcommand("refine", "refinement study along one axis");
  refine_cmd->add_option("config", config, "config JSON")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--axis", axis, "N, q or trunc")->required();
  refine_cmd->add_option("--steps", steps, "number of refinement steps (>= 2)");
  refine_cmd->add_option("--out", out, "output directory");

  auto* report_cmd = app.add_subcommand("report", "summarize report.jsonl files and emit plot data");
  report_cmd->add_option("dir", dir, "directory or report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*run_cmd) return run(config, suite, seed, out);
    if (*refine_cmd) return refine(config, axis, steps, out);
    return report(dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
