// Reference-scale acceptance run: n = 3, N = 512, M = 10^6, all suites.
// Prints one PASS/FAIL line per criterion; an inconclusive criterion prints FAIL.
// Usage: acceptance [config-file] [report-dir]

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wsurf/runner.hpp"

using namespace wsurf;
namespace fs = std::filesystem;

namespace {

const char* kTitles[13] = {
    "",
    "Laplace transform matches (cosh sqrt(lambda))^(-n/2)",
    "kde / malliavin / inversion density triangulation",
    "<Dg,u> = gamma on every path",
    "|D gamma| <= 1 + 1e-6 at every node",
    "unit oracle on x(t) = t e1",
    "pathwise W(h~) identity error halves when N doubles",
    "Var(int t B1 dt) = 2/15",
    "gamma small-ball slope >= n - 0.5",
    "level-set integration by parts",
    "surface measure total mass and concentration",
    "Girsanov suite",
    "byte-identical reports across worker counts",
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  if (argc > 1) cfg.merge_file(argv[1]);
  const fs::path dir = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance-report");
  cfg.workers = 1;
  cfg.validate();
  std::cout << "config: " << cfg.serialized_line() << "\n";

  auto t0 = std::chrono::steady_clock::now();
  const Report rep = run(cfg, Suite::all);
  rep.write(dir / "workers-1");
  std::cout << "run 1 (1 worker): " << seconds_since(t0) << " s\n";

  RunConfig again = cfg;
  again.workers = 3;
  t0 = std::chrono::steady_clock::now();
  run(again, Suite::all).write(dir / "workers-3");
  std::cout << "run 2 (3 workers): " << seconds_since(t0) << " s\n";

  for (const auto& c : rep.checks)
    if (c.status != Status::pass)
      std::cout << "  " << to_string(c.status) << ": [" << c.suite << "] " << c.name << " value=" << fmt(c.value)
                << " threshold=" << fmt(c.threshold) << " " << c.detail << "\n";

  std::ostringstream verdicts;
  bool ok = true;
  for (int id = 1; id <= 11; ++id) {
    const auto s = rep.criterion(id);
    const bool pass = s && *s == Status::pass;
    ok = ok && pass;
    std::string worst;
    for (const auto& c : rep.checks)
      if (c.criterion == id && c.status != Status::pass) worst += " [" + std::string(to_string(c.status)) + ": " + c.name + "]";
    verdicts << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << kTitles[id]
              << (s ? "" : " [no checks ran]") << worst << "\n";
  }

  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(dir / "workers-1")) {
    ++files;
    const fs::path other = dir / "workers-3" / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
      ++differ;
      verdicts << "  differs: " << e.path().filename().string() << "\n";
    }
  }
  const bool same = files > 0 && differ == 0;
  ok = ok && same;
  verdicts << (same ? "PASS" : "FAIL") << " criterion 12: " << kTitles[12] << " (" << files << " files compared, "
           << differ << " differ)\n";
  std::cout << verdicts.str();
  std::ofstream(dir / "acceptance.txt", std::ios::binary) << verdicts.str();
  return ok ? 0 : 1;
}
