// wsurf: batch front end for the verification suites.
//
//   wsurf <density|surface|ibp|sde|invariants|all> [--config f] [--seed s] ...
//   wsurf run --suite <name> [...]
//   wsurf sample --out ensemble.bin [...]
//   wsurf describe ensemble.bin
//
// Exit status: 0 when no check failed, 1 when a check failed, 2 on bad input.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include "wsurf/wsurf.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths, steps, dim;
  std::optional<std::string> out, potential, suite;
  std::optional<unsigned> workers;
};

void add_run_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "key = value config file");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--paths", o.paths, "number of paths M");
  app->add_option("--steps", o.steps, "time steps N");
  app->add_option("--dim", o.dim, "dimension n");
  app->add_option("--out", o.out, "output directory (or file for sample)");
  app->add_option("--potential", o.potential, "zero | cos:<a> | bump:<a>");
  app->add_option("--workers", o.workers, "worker threads (never changes results)");
}

wsurf::RunConfig resolve(const Overrides& o) {
  wsurf::RunConfig cfg;
  if (!o.config.empty()) cfg.merge_file(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.paths) cfg.paths = *o.paths;
  if (o.steps) cfg.steps = *o.steps;
  if (o.dim) cfg.dim = *o.dim;
  if (o.out) cfg.out = *o.out;
  if (o.potential) cfg.potential = *o.potential;
  if (o.suite) cfg.suite = *o.suite;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

int run_suite(const wsurf::RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const wsurf::Report rep = wsurf::run(cfg, wsurf::parse_suite(cfg.suite));
  rep.write(cfg.out);
  for (const auto& c : rep.checks)
    std::cout << wsurf::to_string(c.status) << "  [" << c.suite << "] " << c.name << "  value=" << wsurf::fmt(c.value)
              << " threshold=" << wsurf::fmt(c.threshold) << (c.detail.empty() ? "" : "  " + c.detail) << "\n";
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << rep.count(wsurf::Status::pass) << " pass, " << rep.count(wsurf::Status::fail) << " fail, "
            << rep.count(wsurf::Status::inconclusive) << " inconclusive; report in " << cfg.out << " (" << secs << " s)\n";
  return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for surface measures on level sets of g = 1/2 |B|^2"};
  app.require_subcommand(1);
  Overrides o;
  std::string suite_name;
  for (const char* s : {"density", "surface", "ibp", "sde", "invariants", "all"}) {
    auto* sub = app.add_subcommand(s, std::string("run the ") + s + " suite");
    add_run_flags(sub, o);
  }
  auto* run = app.add_subcommand("run", "run the suite named by --suite");
  add_run_flags(run, o);
  run->add_option("--suite", o.suite, "density|surface|ibp|sde|invariants|all");
  auto* sample = app.add_subcommand("sample", "generate an ensemble and persist it");
  add_run_flags(sample, o);
  std::string file;
  auto* describe = app.add_subcommand("describe", "print the header of an ensemble file");
  describe->add_option("file", file, "ensemble file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "describe") {
      const auto h = wsurf::describe_ensemble(file);
      std::cout << "n=" << h.dim << " N=" << h.steps << " M=" << h.paths << " seed=" << h.seed
                << " batch_size=" << h.batch_size << "\n";
      return 0;
    }
    if (name == "sample") {
      wsurf::RunConfig cfg = resolve(o);
      if (!o.out) cfg.out = "ensemble.bin";
      const auto ens = wsurf::sample_ensemble(cfg.ensemble(), cfg.workers);
      wsurf::persist_ensemble(ens, cfg.out);
      std::cout << "wrote " << ens.size() << " paths to " << cfg.out << "\n";
      return 0;
    }
    if (name != "run") o.suite = name;
    return run_suite(resolve(o));
  } catch (const wsurf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
