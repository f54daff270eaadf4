#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsurf/csv.hpp"
#include "wsurf/density.hpp"
#include "wsurf/errors.hpp"
#include "wsurf/malliavin.hpp"
#include "wsurf/path_engine.hpp"
#include "wsurf/sde.hpp"
#include "wsurf/stats.hpp"
#include "wsurf/surface.hpp"

namespace wsurf {

// ---------------------------------------------------------------- config

enum class Suite { density, surface, ibp, sde, invariants, all };

inline Suite parse_suite(const std::string& s) {
  if (s == "density") return Suite::density;
  if (s == "surface") return Suite::surface;
  if (s == "ibp") return Suite::ibp;
  if (s == "sde") return Suite::sde;
  if (s == "invariants") return Suite::invariants;
  if (s == "all") return Suite::all;
  throw ConfigError("unknown suite '" + s + "' (density|surface|ibp|sde|invariants|all)");
}

inline std::string to_string(Suite s) {
  switch (s) {
    case Suite::density: return "density";
    case Suite::surface: return "surface";
    case Suite::ibp: return "ibp";
    case Suite::sde: return "sde";
    case Suite::invariants: return "invariants";
    case Suite::all: return "all";
  }
  return "all";
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(to_double(key, part));
  return out;
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

}  // namespace detail

/// Every knob of a run. Keys of the text format equal the field names.
struct RunConfig {
  std::size_t dim = 3;
  std::size_t steps = 512;
  std::size_t paths = 1'000'000;
  std::size_t batch_size = 4096;
  std::uint64_t seed = 20261015;
  std::vector<double> r_grid;  // empty: r_points levels between the 2nd and 98th percentile
  std::size_t r_points = 32;
  std::vector<double> eps_ladder = default_eps_ladder();
  double bandwidth = 0.0;  // 0: Silverman
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  std::vector<double> laplace_dims{3, 4};
  std::string potential = "cos:0.5";
  std::string suite = "all";
  std::string out = "wsurf-report";
  unsigned workers = default_workers();
  std::size_t probe_paths = 100;       // pathwise N-refinement probes
  std::size_t refine_paths = 2000;     // ρ₁ N-refinement
  std::size_t crossval_paths = 100000; // independent Laplace cross-check
  std::size_t moment_paths = 100000;   // Var(Z), extra-potential martingale checks

  void set(const std::string& key, const std::string& value) {
    const std::string v = detail::trim(value);
    auto count = [&](std::size_t& f) { f = static_cast<std::size_t>(detail::to_u64(key, v)); };
    if (key == "dim") count(dim);
    else if (key == "steps") count(steps);
    else if (key == "paths") count(paths);
    else if (key == "batch_size") count(batch_size);
    else if (key == "seed") seed = detail::to_u64(key, v);
    else if (key == "r_grid") r_grid = (v == "auto" || v.empty()) ? std::vector<double>{} : detail::to_doubles(key, v);
    else if (key == "r_points") count(r_points);
    else if (key == "eps_ladder") eps_ladder = detail::to_doubles(key, v);
    else if (key == "bandwidth") bandwidth = (v == "silverman") ? 0.0 : detail::to_double(key, v);
    else if (key == "lambdas") lambdas = detail::to_doubles(key, v);
    else if (key == "laplace_dims") laplace_dims = detail::to_doubles(key, v);
    else if (key == "potential") potential = v;
    else if (key == "suite") suite = v;
    else if (key == "out") out = v;
    else if (key == "workers") workers = static_cast<unsigned>(detail::to_u64(key, v));
    else if (key == "probe_paths") count(probe_paths);
    else if (key == "refine_paths") count(refine_paths);
    else if (key == "crossval_paths") count(crossval_paths);
    else if (key == "moment_paths") count(moment_paths);
    else throw ConfigError("config: unknown key '" + key + "'");
  }

  /// "key = value" lines; '#' starts a comment.
  void merge_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
  }

  void merge_file(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read config file " + file.string());
    std::stringstream ss;
    ss << is.rdbuf();
    merge_text(ss.str());
  }

  void validate() const {
    ensemble().validate();
    if (!r_grid.empty()) {
      require_r_grid(r_grid);
      if (!(r_grid.front() > 0.0)) throw ConfigError("config: r_grid must be positive");
    }
    if (r_points < 2) throw ConfigError("config: r_points must be >= 2");
    require_eps_ladder(eps_ladder);
    if (bandwidth < 0.0) throw ConfigError("config: bandwidth must be positive (or silverman)");
    for (double l : lambdas)
      if (!(l >= 0.0)) throw ConfigError("config: lambdas must be >= 0");
    for (double d : laplace_dims)
      if (!(d >= 1.0) || d != std::floor(d)) throw ConfigError("config: laplace_dims must be positive integers");
    make_potential(potential, dim).validate();
    parse_suite(suite);
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (probe_paths < 2 || refine_paths < 2 || crossval_paths < 2 || moment_paths < 2)
      throw ConfigError("config: auxiliary path counts must be >= 2");
  }

  EnsembleSpec ensemble() const { return {dim, TimeGrid(steps), paths, batch_size, RngSpec{seed}}; }

  /// Everything that determines results (workers and out do not).
  std::vector<std::pair<std::string, std::string>> serialize() const {
    return {{"dim", fmt(dim)},
            {"steps", fmt(steps)},
            {"paths", fmt(paths)},
            {"batch_size", fmt(batch_size)},
            {"seed", std::to_string(seed)},
            {"r_grid", r_grid.empty() ? "auto" : detail::join(r_grid)},
            {"r_points", fmt(r_points)},
            {"eps_ladder", detail::join(eps_ladder)},
            {"bandwidth", bandwidth > 0.0 ? fmt(bandwidth) : "silverman"},
            {"lambdas", detail::join(lambdas)},
            {"laplace_dims", detail::join(laplace_dims)},
            {"potential", potential},
            {"suite", suite},
            {"probe_paths", fmt(probe_paths)},
            {"refine_paths", fmt(refine_paths)},
            {"crossval_paths", fmt(crossval_paths)},
            {"moment_paths", fmt(moment_paths)}};
  }

  std::string serialized_line() const {
    std::string s;
    for (const auto& [k, v] : serialize()) s += (s.empty() ? "" : "; ") + k + "=" + v;
    return s;
  }
};

/// Seed of an auxiliary pass, decorrelated from the main stream.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) { return mix64(seed ^ mix64(tag)); }

// ---------------------------------------------------------------- checks

enum class Status { pass, fail, inconclusive, info };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    case Status::inconclusive: return "inconclusive";
    case Status::info: return "info";
  }
  return "info";
}

/// One verified statement. criterion 0 marks auxiliary checks.
struct Check {
  std::string suite;
  std::string name;
  int criterion = 0;
  Status status = Status::info;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

inline Status status_of(bool ok) { return ok ? Status::pass : Status::fail; }

// ---------------------------------------------------------------- suite functionals

/// Test functionals shared by the density, surface and IBP suites.
struct SuiteFunctionals {
  std::vector<CylindricalFunctional> xs;                   // xs[0] is X ≡ 1
  std::vector<std::pair<std::string, GridFunctionH>> hs;
};

inline SuiteFunctionals default_functionals(std::size_t n, const TimeGrid& grid) {
  auto axis = [n](std::size_t i) { return i % n; };
  SuiteFunctionals s;
  s.xs.push_back(CylindricalFunctional::constant(1.0, "one"));
  s.xs.push_back(CylindricalFunctional::wiener(unit_direction(n, grid, 0), "W(e1)"));
  GridFunctionH k = make_grid_function(n, grid, [&](std::size_t i, double t) { return i == axis(1) ? 1.0 - t : 0.0; });
  s.xs.push_back({"cos(W(k))",
                  {k},
                  [](std::span<const double> y) { return std::cos(y[0]); },
                  [](std::span<const double> y, std::span<double> g) { g[0] = -std::sin(y[0]); }});
  s.hs.emplace_back("e1", unit_direction(n, grid, 0));
  s.hs.emplace_back("t*e2", make_grid_function(n, grid, [&](std::size_t i, double t) { return i == axis(1) ? t : 0.0; }));
  s.hs.emplace_back("sin(pi t)*e3", make_grid_function(n, grid, [&](std::size_t i, double t) {
                      return i == axis(2) ? std::sin(std::numbers::pi * t) : 0.0;
                    }));
  return s;
}

// ---------------------------------------------------------------- feature table

/// Per-path columns of the main pass, indexed by path.
struct FeatureTable {
  std::size_t size = 0;
  std::vector<double> g, gamma, delta_u, delta_u_over_gamma, z, max_dgamma, malliavin_gap, guarded;
  std::vector<std::vector<double>> dg_h, w_h;              // [h]
  std::vector<std::vector<double>> x, delta_x_u_over_gamma; // [X]
  std::vector<std::vector<std::vector<double>>> dx_h;      // [X][h]
  std::vector<double> g_u, log_inv_rho_b, log_rho_stoch, log_rho_repr;
  std::size_t degenerate = 0;
};

/// ∫₀¹ t x¹(t) dt, trapezoid.
inline double z_statistic(const BrownianPath& x) {
  const auto c = x.component(0);
  const TimeGrid& grid = x.grid();
  std::vector<double> f(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) f[k] = grid.node(k) * c[k];
  return quadrature(grid, f);
}

inline FeatureTable build_features(const EnsembleSpec& spec, const SuiteFunctionals& fx, const PotentialSpec& V,
                                   unsigned workers) {
  spec.validate();
  const std::size_t M = spec.paths, H = fx.hs.size(), X = fx.xs.size();
  FeatureTable t;
  t.size = M;
  for (auto* c : {&t.g, &t.gamma, &t.delta_u, &t.delta_u_over_gamma, &t.z, &t.max_dgamma, &t.malliavin_gap,
                  &t.guarded, &t.g_u, &t.log_inv_rho_b, &t.log_rho_stoch, &t.log_rho_repr})
    c->assign(M, 0.0);
  t.dg_h.assign(H, std::vector<double>(M));
  t.w_h.assign(H, std::vector<double>(M));
  t.x.assign(X, std::vector<double>(M));
  t.delta_x_u_over_gamma.assign(X, std::vector<double>(M));
  t.dx_h.assign(X, std::vector<std::vector<double>>(H, std::vector<double>(M)));
  for_each_path(spec, workers, [&](std::size_t m, const BrownianPath& path) {
    const MalliavinRecord rec = malliavin_record(path);
    t.g[m] = rec.g;
    t.gamma[m] = rec.gamma;
    t.delta_u[m] = rec.delta_u;
    t.delta_u_over_gamma[m] = rec.delta_u_over_gamma;
    t.z[m] = z_statistic(path);
    t.max_dgamma[m] = max_norm(rec.dgamma);
    t.malliavin_gap[m] = std::abs(inner(rec.dg, rec.u) - rec.gamma);
    t.guarded[m] = static_cast<double>(rec.guarded_nodes);
    for (std::size_t j = 0; j < H; ++j) {
      t.dg_h[j][m] = inner(rec.dg, fx.hs[j].second);
      t.w_h[j][m] = forward_ito(fx.hs[j].second, path);
    }
    for (std::size_t i = 0; i < X; ++i) {
      const CylindricalPoint p = evaluate_point(fx.xs[i], path);
      t.x[i][m] = p.value;
      t.delta_x_u_over_gamma[i][m] = rec.degenerate ? std::numeric_limits<double>::quiet_NaN()
                                                    : skorohod_X_u_over_gamma(fx.xs[i], rec, path);
      for (std::size_t j = 0; j < H; ++j) t.dx_h[i][j][m] = grad_dot(fx.xs[i], p, fx.hs[j].second);
    }
    const SdePath s = euler_maruyama(V, path);
    t.g_u[m] = eval_g(s.u);
    t.log_rho_stoch[m] = log_rho1_stochastic(s, path);
    t.log_rho_repr[m] = log_rho1_representation(V, s);
    t.log_inv_rho_b[m] = log_inv_rho1_of_B(path, V);
  });
  for (double d : t.delta_u_over_gamma) t.degenerate += std::isfinite(d) ? 0 : 1;
  return t;
}

/// g(B) only, for the Laplace passes.
inline std::vector<double> g_samples(const EnsembleSpec& spec, unsigned workers) {
  std::vector<double> g(spec.paths);
  for_each_path(spec, workers, [&](std::size_t m, const BrownianPath& p) { g[m] = eval_g(p); });
  return g;
}

// ---------------------------------------------------------------- report

struct NamedTable {
  std::string file;
  CsvTable table;
};

struct Report {
  RunConfig config;
  std::vector<Check> checks;
  std::vector<NamedTable> tables;

  CsvTable& table(const std::string& file, std::vector<std::string> header) {
    for (auto& t : tables)
      if (t.file == file) return t.table;
    tables.push_back({file, CsvTable(std::move(header))});
    return tables.back().table;
  }

  void add(Check c) { checks.push_back(std::move(c)); }

  std::size_t count(Status s) const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [s](const Check& c) { return c.status == s; }));
  }

  /// Combined verdict of one acceptance criterion: fail beats inconclusive beats pass.
  std::optional<Status> criterion(int id) const {
    std::optional<Status> s;
    for (const auto& c : checks) {
      if (c.criterion != id || c.status == Status::info) continue;
      if (!s || c.status == Status::fail || (c.status == Status::inconclusive && *s == Status::pass)) s = c.status;
    }
    return s;
  }

  /// 0 when no check failed, 1 otherwise.
  int exit_code() const { return count(Status::fail) == 0 ? 0 : 1; }

  CsvTable checks_table() const {
    CsvTable t({"suite", "check", "criterion", "status", "value", "threshold", "detail", "method", "n", "N", "M", "seed"});
    for (const auto& c : checks)
      t.add({c.suite, c.name, std::to_string(c.criterion), to_string(c.status), fmt(c.value), fmt(c.threshold),
             c.detail, c.criterion > 0 ? "acceptance" : "auxiliary", fmt(config.dim), fmt(config.steps), fmt(config.paths), std::to_string(config.seed)});
    return t;
  }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config.serialize()) cfg[k] = v;
    j["config"] = cfg;
    j["checks"] = {{"total", checks.size()},
                   {"pass", count(Status::pass)},
                   {"fail", count(Status::fail)},
                   {"inconclusive", count(Status::inconclusive)},
                   {"info", count(Status::info)}};
    nlohmann::ordered_json crit;
    for (int id = 1; id <= 12; ++id)
      if (auto s = criterion(id)) crit[std::to_string(id)] = to_string(*s);
    j["criteria"] = crit;
    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    for (const auto& c : checks)
      if (c.status == Status::fail) failures.push_back(c.suite + "/" + c.name);
    j["failures"] = failures;
    j["exit_code"] = exit_code();
    return j;
  }

  /// Writes every table, checks.csv and summary.json into `dir`.
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    const std::vector<std::string> preamble{"wsurf report", "config: " + config.serialized_line()};
    for (const auto& t : tables) t.table.write(dir / t.file, preamble);
    checks_table().write(dir / "checks.csv", preamble);
    std::ofstream js(dir / "summary.json", std::ios::binary);
    js << summary().dump(2) << "\n";
    if (!js) throw std::runtime_error("write failed for summary.json");
  }
};

// ---------------------------------------------------------------- lab

/// Holds the run configuration and caches the expensive passes.
class Lab {
public:
  explicit Lab(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    fx_ = default_functionals(cfg_.dim, TimeGrid(cfg_.steps));
    V_ = make_potential(cfg_.potential, cfg_.dim);
  }

  const RunConfig& config() const noexcept { return cfg_; }
  const SuiteFunctionals& functionals() const noexcept { return fx_; }
  const PotentialSpec& potential() const noexcept { return V_; }
  Provenance provenance() const { return {cfg_.dim, cfg_.steps, cfg_.paths, cfg_.seed}; }

  const FeatureTable& features() {
    if (!features_) features_ = std::make_unique<FeatureTable>(build_features(cfg_.ensemble(), fx_, V_, cfg_.workers));
    return *features_;
  }

  /// g(B) at dimension n from an independent stream (`tag`), cached.
  const std::vector<double>& g_only(std::size_t n, std::size_t paths, std::uint64_t tag) {
    const auto key = std::make_tuple(n, paths, tag);
    auto it = g_cache_.find(key);
    if (it == g_cache_.end()) {
      EnsembleSpec spec{n, TimeGrid(cfg_.steps), paths, cfg_.batch_size, RngSpec{derived_seed(cfg_.seed, tag)}};
      it = g_cache_.emplace(key, g_samples(spec, cfg_.workers)).first;
    }
    return it->second;
  }

  double bandwidth_for(std::span<const double> g) const {
    return cfg_.bandwidth > 0.0 ? cfg_.bandwidth : silverman_bandwidth(g);
  }

  std::vector<double> r_grid() {
    if (!cfg_.r_grid.empty()) return cfg_.r_grid;
    return default_r_grid(features().g, cfg_.r_points);
  }

  static std::vector<double> central_quantiles() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }
  static std::vector<double> level_quantiles() { return {0.3, 0.5, 0.7}; }

private:
  RunConfig cfg_;
  SuiteFunctionals fx_;
  PotentialSpec V_;
  std::unique_ptr<FeatureTable> features_;
  std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, std::vector<double>> g_cache_;
};

// ---------------------------------------------------------------- helpers for suites

namespace detail {

inline std::vector<std::string> prov_cells(const Provenance& p) {
  return {fmt(p.n), fmt(p.steps), fmt(p.paths), std::to_string(p.seed)};
}

inline void add_curve(Report& rep, const DensityCurve& c, const std::string& file = "density.csv") {
  auto& t = rep.table(file, {"method", "n", "N", "M", "seed", "r", "estimate", "stderr", "flags"});
  for (std::size_t j = 0; j < c.size(); ++j) {
    std::vector<std::string> row{c.method};
    for (auto& p : prov_cells(c.prov)) row.push_back(p);
    row.insert(row.end(), {fmt(c.r[j]), fmt(c.estimate[j]), fmt(c.se[j]), c.flags[j]});
    t.add(std::move(row));
  }
}

/// Fraction of samples outside [lo, hi] (tail allowance for grid normalization).
inline double outside_mass(std::span<const double> g, double lo, double hi, std::span<const double> w = {}) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] < lo || g[i] > hi) s += w.empty() ? 1.0 : w[i];
  return s / static_cast<double>(g.size());
}

inline double w_indicator(double w, double g, double r) { return (g > r && std::isfinite(w)) ? w : 0.0; }

inline std::string zdetail(double diff, double se) { return "z=" + fmt(z_score(diff, se)) + " diff=" + fmt(diff) + " se=" + fmt(se); }

}  // namespace detail

/// Values of (g, γ, δ(u), ⟨u,Dγ⟩, δ(u/γ)) on x(t) = t·e₁ in dimension n.
inline std::array<double, 5> unit_oracle_values(std::size_t n, std::size_t steps) {
  const BrownianPath x = make_path(n, TimeGrid(steps), [](std::size_t i, double t) { return i == 0 ? t : 0.0; });
  const MalliavinRecord r = malliavin_record(x);
  return {r.g, r.gamma, r.delta_u, r.u_dot_dgamma, r.delta_u_over_gamma};
}

/// max over paths of |⟨Dg,h⟩_H − W(h̃)| at the steps of each path.
inline double tilde_identity_error(const std::vector<BrownianPath>& paths, const GridFunctionH& h) {
  const GridFunctionH ht = tilde_transform(h);
  double worst = 0.0;
  for (const auto& p : paths) worst = std::max(worst, std::abs(inner(malliavin_derivative_g(p), h) - forward_ito(ht, p)));
  return worst;
}

// ---------------------------------------------------------------- suites

inline void run_invariants(Lab& lab, Report& rep) {
  const RunConfig& cfg = lab.config();
  const FeatureTable& F = lab.features();
  const std::string S = "invariants";
  const std::size_t n = cfg.dim;

  // Malliavin-condition identity on every path.
  {
    // ⟨Dg,u⟩ and γ differ only by guarded nodes (each below 1e-12·max|Dg|) and rounding.
    const double tol = 1e-8 + 1e-12;
    const double worst = *std::max_element(F.malliavin_gap.begin(), F.malliavin_gap.end());
    std::size_t bad = 0;
    for (double v : F.malliavin_gap) bad += v > tol ? 1 : 0;
    rep.add({S, "malliavin identity <Dg,u>=gamma on all paths", 3, status_of(bad == 0), worst, tol,
             "violations=" + fmt(bad) + " of " + fmt(F.size)});
  }
  {
    const double worst = *std::max_element(F.max_dgamma.begin(), F.max_dgamma.end());
    rep.add({S, "|D gamma| <= 1 at every node", 4, status_of(worst <= 1.0 + 1e-6), worst, 1.0 + 1e-6, ""});
  }
  // Deterministic unit oracle, dimension 1, refined N.
  {
    const std::array<double, 5> truth{1.0 / 6.0, 1.0 / 3.0, 1.0, 1.0 / 3.0, 6.0};
    const char* names[5] = {"g", "gamma", "delta_u", "u_dot_dgamma", "delta_u_over_gamma"};
    auto& t = rep.table("unit_oracle.csv", {"method", "n", "N", "M", "seed", "quantity", "value", "exact", "abs_error"});
    std::vector<double> err;
    for (std::size_t N : {256, 512, 1024}) {
      const auto v = unit_oracle_values(1, N);
      double e = 0.0;
      for (int q = 0; q < 5; ++q) {
        e = std::max(e, std::abs(v[q] - truth[q]));
        t.add({"deterministic-path", "1", fmt(N), "1", "0", names[q], fmt(v[q]), fmt(truth[q]), fmt(std::abs(v[q] - truth[q]))});
      }
      err.push_back(e);
    }
    const bool refined = err[2] <= err[1] && err[1] <= err[0];
    rep.add({S, "unit oracle on x(t)=t e1 (n=1) at N=512", 5, status_of(err[1] <= 1e-3 && refined), err[1], 1e-3,
             "max errors N=256,512,1024: " + fmt(err[0]) + "," + fmt(err[1]) + "," + fmt(err[2])});
    // Same path with n coordinates: δ(u) → 1 − 2(n−1)ln 2 and δ(u/γ) = 3δ(u) + 3.
    const double du = 1.0 - 2.0 * (static_cast<double>(n) - 1.0) * std::numbers::ln2;
    std::vector<double> e2;
    for (std::size_t N : {256, 512, 1024}) {
      const auto v = unit_oracle_values(n, N);
      e2.push_back(std::max(std::abs(v[2] - du), std::abs(v[4] - (3.0 * du + 3.0))));
      t.add({"deterministic-path", fmt(n), fmt(N), "1", "0", "delta_u", fmt(v[2]), fmt(du), fmt(std::abs(v[2] - du))});
      t.add({"deterministic-path", fmt(n), fmt(N), "1", "0", "delta_u_over_gamma", fmt(v[4]), fmt(3.0 * du + 3.0), fmt(std::abs(v[4] - 3.0 * du - 3.0))});
    }
    rep.add({S, "unit oracle on x(t)=t e1 in dimension n (trace term)", 0,
             status_of(e2[1] <= 5e-2 && e2[2] < e2[1] && e2[1] < e2[0]), e2[1], 5e-2,
             "errors N=256,512,1024: " + fmt(e2[0]) + "," + fmt(e2[1]) + "," + fmt(e2[2])});
  }
  // Pathwise ⟨Dg,h⟩ = W(h̃) under N-refinement on coupled paths.
  {
    EnsembleSpec fine{n, TimeGrid(2 * cfg.steps), cfg.probe_paths, cfg.batch_size, RngSpec{derived_seed(cfg.seed, 3)}};
    const PathEnsemble ens = sample_ensemble(fine, cfg.workers);
    std::vector<BrownianPath> coarse;
    for (const auto& p : ens.paths) coarse.push_back(coarsen(p, 2));
    const SuiteFunctionals fc = default_functionals(n, TimeGrid(cfg.steps));
    const SuiteFunctionals ff = default_functionals(n, TimeGrid(2 * cfg.steps));
    auto& t = rep.table("tilde_refinement.csv", {"method", "n", "N", "M", "seed", "h", "max_abs_error"});
    const std::string probe_seed = std::to_string(fine.rng.master_seed);
    for (std::size_t j = 0; j < fc.hs.size(); ++j) {
      const double ec = tilde_identity_error(coarse, fc.hs[j].second);
      const double ef = tilde_identity_error(ens.paths, ff.hs[j].second);
      t.add({"pathwise-probe", fmt(n), fmt(cfg.steps), fmt(cfg.probe_paths), probe_seed, fc.hs[j].first, fmt(ec)});
      t.add({"pathwise-probe", fmt(n), fmt(2 * cfg.steps), fmt(cfg.probe_paths), probe_seed, fc.hs[j].first, fmt(ef)});
      const double ratio = ef / ec;
      rep.add({S, "W(h~) identity error ratio N->2N, h=" + fc.hs[j].first, 6,
               status_of(ratio >= 0.35 && ratio <= 0.65), ratio, 0.5,
               "max error " + fmt(ec) + " -> " + fmt(ef) + "; accepted [0.35,0.65]"});
    }
  }
  // Var(Z) = 2/15.
  {
    const std::size_t m = std::min(cfg.moment_paths, F.size);
    const Estimate v = variance_estimate(std::span<const double>(F.z).first(m));
    const double d = v.value - 2.0 / 15.0;
    rep.add({S, "Var(int t B1 dt) = 2/15", 7, status_of(z_score(d, v.se) <= 4.0), z_score(d, v.se), 4.0,
             "var=" + fmt(v.value) + " se=" + fmt(v.se) + " M=" + fmt(m)});
  }
  // γ small-ball tail.
  {
    const auto eta = eta_ladder(0.2, 0.02, 10);
    const MomentReport tail = gamma_tail(F.gamma, eta);
    auto& t = rep.table("gamma_tail.csv", {"method", "n", "N", "M", "seed", "eta", "probability", "count", "flags"});
    for (const auto& row : tail.tail)
      t.add({"empirical-tail", fmt(n), fmt(cfg.steps), fmt(F.size), std::to_string(cfg.seed), fmt(row.eta), fmt(row.probability),
             fmt(row.count), row.zero_count ? "zero-count" : ""});
    const double need = static_cast<double>(n) - 0.5;
    const Status st = tail.slope_points < 3 ? Status::inconclusive : status_of(tail.slope >= need);
    rep.add({S, "gamma tail log-log slope >= n-0.5", 8, st, tail.slope, need,
             "slope_se=" + fmt(tail.slope_se) + " nonzero rungs=" + fmt(tail.slope_points)});
  }
  // Inverse moments of γ.
  {
    auto& t = rep.table("gamma_moments.csv", {"method", "n", "N", "M", "seed", "p", "estimate", "stderr", "top1_share", "se_stability", "flags"});
    for (double p : {1.0, 2.5}) {
      const MomentReport mr = inv_gamma_moments(F.gamma, p);
      t.add({"inverse-moment", fmt(n), fmt(cfg.steps), fmt(F.size), std::to_string(cfg.seed), fmt(p), fmt(mr.estimate), fmt(mr.se),
             fmt(mr.top_percent_share), fmt(mr.se_stability), mr.heavy_tail ? "heavy-tail" : ""});
      if (p == 1.0)
        rep.add({S, "E[1/gamma] finite and stable", 0, status_of(!mr.heavy_tail && mr.se_stability <= 1.5),
                 mr.se_stability, 1.5, "estimate=" + fmt(mr.estimate) + " top1=" + fmt(mr.top_percent_share)});
      else
        rep.add({S, "E[gamma^-2.5] tail diagnostic", 0, Status::info, mr.top_percent_share, 0.5,
                 std::string(mr.heavy_tail ? "heavy-tail warning; " : "") + "estimate=" + fmt(mr.estimate)});
    }
  }
  // Zero mean of the Skorohod integrals.
  {
    const Estimate a = mean_estimate(F.delta_u);
    rep.add({S, "E[delta(u)] = 0", 0, status_of(z_score(a.value, a.se) <= 4.0), z_score(a.value, a.se), 4.0,
             "mean=" + fmt(a.value) + " se=" + fmt(a.se)});
    const Estimate b = mean_of(F.size, [&](std::size_t i) { return detail::w_indicator(F.delta_u_over_gamma[i], 1.0, 0.0); });
    rep.add({S, "E[delta(u/gamma)] = 0", 0, status_of(z_score(b.value, b.se) <= 4.0), z_score(b.value, b.se), 4.0,
             "mean=" + fmt(b.value) + " se=" + fmt(b.se) + " degenerate=" + fmt(F.degenerate)});
    for (std::size_t i = 1; i < F.x.size(); ++i) {
      const Estimate c = mean_of(F.size, [&](std::size_t m) { return detail::w_indicator(F.delta_x_u_over_gamma[i][m], 1.0, 0.0); });
      rep.add({S, "E[delta(X u/gamma)] = 0, X=" + lab.functionals().xs[i].name, 0,
               status_of(z_score(c.value, c.se) <= 4.0), z_score(c.value, c.se), 4.0, "mean=" + fmt(c.value)});
    }
  }
  // Increment statistics on the first paths of the main stream.
  {
    EnsembleSpec spec = cfg.ensemble();
    spec.paths = std::min<std::size_t>(spec.paths, 10000);
    std::vector<RunningStats> mean(n), var(n);
    const double dt = spec.grid.dt();
    std::vector<std::vector<double>> inc(n);
    for_each_path(spec, 1, [&](std::size_t, const BrownianPath& p) {
      for (std::size_t i = 0; i < n; ++i) {
        auto c = p.component(i);
        for (std::size_t k = 0; k + 1 < c.size(); ++k) {
          const double z = (c[k + 1] - c[k]) / std::sqrt(dt);
          mean[i].push(z);
          var[i].push(z * z);
        }
      }
    });
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Estimate m = to_estimate(mean[i]), v = to_estimate(var[i]);
      worst = std::max({worst, z_score(m.value, m.se), z_score(v.value - 1.0, v.se)});
    }
    rep.add({S, "increment mean/variance per coordinate", 0, status_of(worst <= 4.0), worst, 4.0,
             "paths=" + fmt(spec.paths)});
  }
}

inline void run_density(Lab& lab, Report& rep) {
  const RunConfig& cfg = lab.config();
  const FeatureTable& F = lab.features();
  const std::string S = "density";
  const Provenance prov = lab.provenance();

  // Laplace transform against the closed form.
  {
    auto& t = rep.table("laplace.csv", {"method", "n", "N", "M", "seed", "lambda", "estimate", "stderr", "oracle", "z", "pass"});
    const double allowance = 2e-3;
    for (double nd : cfg.laplace_dims) {
      const auto n = static_cast<std::size_t>(nd);
      const std::vector<double>& g = (n == cfg.dim) ? F.g : lab.g_only(n, cfg.paths, 1);
      const std::uint64_t seed = (n == cfg.dim) ? cfg.seed : derived_seed(cfg.seed, 1);
      const std::vector<double>& gcv = lab.g_only(n, cfg.crossval_paths, 2);
      for (double lam : cfg.lambdas) {
        const double oracle = laplace_oracle(lam, n);
        const Estimate cv = laplace_mc(gcv, lam);
        const bool cv_ok = std::abs(cv.value - oracle) <= 3.0 * cv.se + allowance;
        const Estimate e = laplace_mc(g, lam);
        const bool ok = std::abs(e.value - oracle) <= 3.0 * e.se + allowance;
        t.add({"crossval", fmt(n), fmt(cfg.steps), fmt(cfg.crossval_paths), std::to_string(derived_seed(cfg.seed, 2)),
               fmt(lam), fmt(cv.value), fmt(cv.se), fmt(oracle), fmt(z_score(cv.value - oracle, cv.se)), cv_ok ? "1" : "0"});
        t.add({"mc", fmt(n), fmt(cfg.steps), fmt(g.size()), std::to_string(seed), fmt(lam), fmt(e.value), fmt(e.se),
               fmt(oracle), fmt(z_score(e.value - oracle, e.se)), ok ? "1" : "0"});
        rep.add({S, "Laplace oracle n=" + fmt(n) + " lambda=" + fmt(lam), 1, status_of(ok && cv_ok),
                 std::abs(e.value - oracle), 3.0 * e.se + allowance,
                 "mc=" + fmt(e.value) + " oracle=" + fmt(oracle) + " crossval=" + fmt(cv.value) + (cv_ok ? "" : " (crossval failed)")});
      }
    }
  }

  const double h = lab.bandwidth_for(F.g);
  const auto grid = lab.r_grid();
  const DensityCurve kde = kde_density(F.g, grid, h, prov);
  const DensityCurve mal = malliavin_density(F.g, F.delta_u_over_gamma, grid, prov);
  const DensityCurve inv = invert_laplace(cfg.dim, grid);
  detail::add_curve(rep, kde);
  detail::add_curve(rep, mal);
  detail::add_curve(rep, inv);

  // Normalization on the grid plus the sampled mass outside it.
  {
    const double out = detail::outside_mass(F.g, grid.front(), grid.back());
    const double mk = kde.integral() + out, mm = mal.integral() + out;
    rep.add({S, "kde integrates to 1 (grid + tail mass)", 0, status_of(std::abs(mk - 1.0) <= 0.02), mk, 0.02,
             "tail mass=" + fmt(out)});
    rep.add({S, "malliavin density integrates to 1 (grid + tail mass)", 0, status_of(std::abs(mm - 1.0) <= 0.02), mm,
             0.02, "tail mass=" + fmt(out)});
    bool nonneg = true;
    for (double v : kde.estimate) nonneg = nonneg && v >= 0.0;
    rep.add({S, "kde nonnegative", 0, status_of(nonneg), 0.0, 0.0, ""});
    std::vector<double> wide;
    for (int j = 1; j <= 1200; ++j) wide.push_back(0.005 * j);
    const DensityCurve iw = invert_laplace(cfg.dim, wide);
    const double mi = iw.integral();
    rep.add({S, "inverted density integrates to 1 on (0,6]", 0, status_of(std::abs(mi - 1.0) <= 0.01), mi, 0.01, ""});
    if (cfg.dim >= 3) {
      const double peak = *std::max_element(iw.estimate.begin(), iw.estimate.end());
      const double at = inverted_density(cfg.dim, 0.01);
      rep.add({S, "inverted density small at r=0.01", 0, status_of(at < 0.05 * peak), at, 0.05 * peak, ""});
    }
  }
  // Triangulation at central levels.
  const auto levels = quantile_levels(F.g, Lab::central_quantiles());
  {
    auto& t = rep.table("triangulation.csv", {"method", "n", "N", "M", "seed", "r", "a", "b", "diff", "combined_se", "tolerance", "pass"});
    const DensityCurve k5 = kde_density(F.g, levels, h, prov);
    const DensityCurve m5 = malliavin_density(F.g, F.delta_u_over_gamma, levels, prov);
    const DensityCurve i5 = invert_laplace(cfg.dim, levels);
    bool all = true;
    double worst = 0.0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double r = levels[j];
      const Estimate d = mean_of(F.size, [&](std::size_t i) {
        return gaussian_kernel(F.g[i] - r, h) - detail::w_indicator(F.delta_u_over_gamma[i], F.g[i], r);
      });
      auto row = [&](const std::string& pair, double a, double b, double se, double tol) {
        const bool ok = std::abs(a - b) <= tol;
        all = all && ok;
        std::vector<std::string> cells{pair};
        for (auto& p : detail::prov_cells(prov)) cells.push_back(p);
        cells.insert(cells.end(), {fmt(r), fmt(a), fmt(b), fmt(a - b), fmt(se), fmt(tol), ok ? "1" : "0"});
        t.add(std::move(cells));
      };
      row("kde-malliavin", k5.estimate[j], m5.estimate[j], d.se, 3.0 * d.se);
      worst = std::max(worst, z_score(k5.estimate[j] - m5.estimate[j], d.se));
      row("kde-inversion", k5.estimate[j], i5.estimate[j], 0.0, 0.05 * std::abs(i5.estimate[j]));
      row("malliavin-inversion", m5.estimate[j], i5.estimate[j], 0.0, 0.05 * std::abs(i5.estimate[j]));
    }
    rep.add({S, "density triangulation kde/malliavin/inversion at 5 central r", 2, status_of(all), worst, 3.0,
             "worst kde-malliavin z; inversion pairs at 5% relative; bandwidth=" + fmt(h)});
  }
  // f_X = E[X | g=r] f₁ for the cylindrical suite; X ≡ 1 reproduces f₁ exactly.
  {
    const auto& xs = lab.functionals().xs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      DensityCurve fx = malliavin_density_X(F.g, F.delta_x_u_over_gamma[i], grid, prov);
      if (i == 0) {
        rep.add({S, "f_X with X=1 equals f_1 bit-for-bit", 0, status_of(fx.estimate == mal.estimate && fx.se == mal.se),
                 0.0, 0.0, ""});
        continue;
      }
      fx.method = "malliavin-X:" + xs[i].name;
      detail::add_curve(rep, fx);
      DensityCurve cp{"conditional-product-X:" + xs[i].name, grid, {}, {}, {}, prov, {{"bandwidth", h}}};
      for (double r : grid) {
        try {
          const ProductEstimate p = conditional_product(F.x[i], F.g, r, h);
          cp.estimate.push_back(p.value);
          cp.se.push_back(p.se);
          cp.flags.emplace_back();
        } catch (const InsufficientLocalSamples&) {
          cp.estimate.push_back(0.0);
          cp.se.push_back(0.0);
          cp.flags.emplace_back("insufficient-local-samples");
        }
      }
      detail::add_curve(rep, cp);
      double worst = 0.0;
      bool inconclusive = false;
      for (double r : levels) {
        try {
          const ProductEstimate p = conditional_product(F.x[i], F.g, r, h);
          const Estimate a = mean_of(F.size, [&](std::size_t m) { return detail::w_indicator(F.delta_x_u_over_gamma[i][m], F.g[m], r); });
          const Estimate d = mean_of(F.size, [&](std::size_t m) {
            return detail::w_indicator(F.delta_x_u_over_gamma[i][m], F.g[m], r) - gaussian_kernel(F.g[m] - r, h) * F.x[i][m];
          });
          worst = std::max(worst, z_score(a.value - p.value, d.se));
        } catch (const InsufficientLocalSamples&) {
          inconclusive = true;
        }
      }
      rep.add({S, "f_X = E[X|g=r] f_1 at central r, X=" + xs[i].name, 0,
               inconclusive ? Status::inconclusive : status_of(worst <= 3.0), worst, 3.0, "worst z over 5 levels"});
    }
  }
  // ∫_a^b f₁ = F₁(b) − F₁(a) through the Malliavin weights.
  {
    const double a = quantile_levels(F.g, std::vector<double>{0.2})[0], b = quantile_levels(F.g, std::vector<double>{0.8})[0];
    const Estimate d = mean_of(F.size, [&](std::size_t i) {
      const double w = std::isfinite(F.delta_u_over_gamma[i]) ? F.delta_u_over_gamma[i] : 0.0;
      return w * std::clamp(F.g[i] - a, 0.0, b - a) - ((F.g[i] > a && F.g[i] <= b) ? 1.0 : 0.0);
    });
    rep.add({S, "integrated malliavin density reproduces the CDF", 0, status_of(z_score(d.value, d.se) <= 3.0),
             z_score(d.value, d.se), 3.0, detail::zdetail(d.value, d.se)});
  }
}

inline void run_surface(Lab& lab, Report& rep) {
  const RunConfig& cfg = lab.config();
  const FeatureTable& F = lab.features();
  const std::string S = "surface";
  const Provenance prov = lab.provenance();
  const double h = lab.bandwidth_for(F.g);
  const auto levels = quantile_levels(F.g, Lab::level_quantiles());
  auto& t = rep.table("surface.csv", {"suite", "X", "h", "r", "eps", "lhs", "rhs", "diff", "combined_se", "pass",
                                      "method", "n", "N", "M", "seed", "occupancy", "flags"});
  auto row = [&](const std::string& suite, const std::string& x, const std::string& eps, double r, double lhs, double rhs,
                 double se, const std::string& pass, const std::string& method, std::size_t occ, const std::string& flags) {
    std::vector<std::string> cells{suite, x, "-", fmt(r), eps, fmt(lhs), fmt(rhs), fmt(lhs - rhs), fmt(se), pass, method};
    for (auto& p : detail::prov_cells(prov)) cells.push_back(p);
    cells.insert(cells.end(), {fmt(occ), flags});
    t.add(std::move(cells));
  };
  const std::vector<double> ones(F.size, 1.0);
  bool mass_ok = true, conc_ok = true;
  double worst_mass = 0.0, worst_conc = 0.0;
  for (double r : levels) {
    const SurfaceEstimate s = surface_integral(ones, F.g, r, cfg.eps_ladder, h, "one");
    const Estimate f1 = mean_of(F.size, [&](std::size_t i) { return detail::w_indicator(F.delta_u_over_gamma[i], F.g[i], r); });
    const Estimate d = mean_of(F.size, [&](std::size_t i) {
      return s.slab.path_value(1.0, F.g[i]) - detail::w_indicator(F.delta_u_over_gamma[i], F.g[i], r);
    });
    const bool ok = z_score(s.slab.value - f1.value, d.se) <= 3.0;
    mass_ok = mass_ok && ok;
    worst_mass = std::max(worst_mass, z_score(s.slab.value - f1.value, d.se));
    for (const auto& rung : s.slab.rungs)
      row("mass", "one", fmt(rung.eps), r, rung.value, f1.value, rung.se, "", "slab", rung.occupancy, "");
    row("mass", "one", "extrap", r, s.slab.value, f1.value, d.se, ok ? "1" : "0", "slab-extrapolation", 0, s.slab.flags);
    row("mass", "one", "-", r, s.product, f1.value, s.product_se, "", "conditional-product", 0, s.flags);
    // Concentration: Lipschitz approximants of 1_{g≠r}.
    for (double delta : {0.1, 0.05, 0.025}) {
      const auto xc = concentration_column(F.g, r, delta);
      const SlabLadder L = slab_ladder(xc, F.g, r, cfg.eps_ladder);
      const bool cok = L.value <= 0.05 * f1.value;
      conc_ok = conc_ok && cok;
      worst_conc = std::max(worst_conc, L.value / f1.value);
      const std::string name = "conc(delta=" + fmt(delta) + ")";
      for (const auto& rung : L.rungs) row("concentration", name, fmt(rung.eps), r, rung.value, 0.0, rung.se, "", "slab", rung.occupancy, "");
      row("concentration", name, "extrap", r, L.value, 0.05 * f1.value, L.se, cok ? "1" : "0", "slab-extrapolation", 0, L.flags);
    }
  }
  rep.add({S, "surface total mass equals f1(r) at 3 levels", 10, status_of(mass_ok), worst_mass, 3.0, "worst z"});
  rep.add({S, "concentration probe <= 5% of f1(r)", 10, status_of(conc_ok), worst_conc, 0.05, "worst ratio to f1"});
  // Route consistency and positivity for the suite integrands.
  const auto& xs = lab.functionals().xs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double worst = 0.0;
    bool inconclusive = false, positive = true;
    bool nonneg_x = std::all_of(F.x[i].begin(), F.x[i].end(), [](double v) { return v >= 0.0; });
    for (double r : levels) {
      const SurfaceEstimate s = surface_integral(F.x[i], F.g, r, cfg.eps_ladder, h, xs[i].name);
      row("routes", xs[i].name, "extrap", r, s.slab.value, s.product, s.route_diff_se,
          std::isfinite(s.route_diff_se) && z_score(s.slab.value - s.product, s.route_diff_se) <= 3.0 ? "1" : "0",
          "slab-vs-product", 0, s.flags);
      if (!std::isfinite(s.route_diff_se)) inconclusive = true;
      else worst = std::max(worst, z_score(s.slab.value - s.product, s.route_diff_se));
      if (nonneg_x) positive = positive && s.slab.value >= 0.0 && s.product >= 0.0;
    }
    rep.add({S, "slab and conditional-product routes agree, X=" + xs[i].name, 0,
             inconclusive ? Status::inconclusive : status_of(worst <= 3.0), worst, 3.0, "worst z over 3 levels"});
    if (nonneg_x) rep.add({S, "nonnegative integrand gives nonnegative estimates, X=" + xs[i].name, 0, status_of(positive), 0, 0, ""});
  }
}

inline void run_ibp(Lab& lab, Report& rep) {
  const RunConfig& cfg = lab.config();
  const FeatureTable& F = lab.features();
  const std::string S = "ibp";
  const Provenance prov = lab.provenance();
  const auto levels = quantile_levels(F.g, Lab::level_quantiles());
  const auto& fx = lab.functionals();
  auto& t = rep.table("ibp.csv", {"suite", "X", "h", "r", "eps", "lhs", "rhs", "diff", "combined_se", "pass",
                                  "method", "n", "N", "M", "seed", "occupancy", "flags"});
  auto cells_for = [&](std::size_t paths) {
    IbpReport report;
    for (std::size_t i = 0; i < fx.xs.size(); ++i)
      for (std::size_t j = 0; j < fx.hs.size(); ++j) {
        IbpColumns c{std::span<const double>(F.g).first(paths), std::span<const double>(F.x[i]).first(paths),
                     std::span<const double>(F.dg_h[j]).first(paths), std::span<const double>(F.w_h[j]).first(paths),
                     std::span<const double>(F.dx_h[i][j]).first(paths)};
        for (double r : levels) report.cells.push_back(ibp_cell(c, r, cfg.eps_ladder, fx.xs[i].name, fx.hs[j].first));
      }
    return report;
  };
  const IbpReport full = cells_for(F.size);
  bool divergence_ok = true;
  for (const auto& c : full.cells) {
    for (const auto& rung : c.lhs.rungs) {
      std::vector<std::string> cells{"ibp", c.x_id, c.h_id, fmt(c.r), fmt(rung.eps), fmt(rung.value), fmt(c.rhs.value),
                                     fmt(rung.value - c.rhs.value), fmt(rung.se), "", "slab"};
      for (auto& p : detail::prov_cells(prov)) cells.push_back(p);
      cells.insert(cells.end(), {fmt(rung.occupancy), ""});
      t.add(std::move(cells));
    }
    std::vector<std::string> cells{"ibp", c.x_id, c.h_id, fmt(c.r), "extrap", fmt(c.lhs.value), fmt(c.rhs.value),
                                   fmt(c.diff), fmt(c.combined_se), c.pass ? "1" : "0", "slab-extrapolation"};
    for (auto& p : detail::prov_cells(prov)) cells.push_back(p);
    cells.insert(cells.end(), {"0", c.lhs.flags});
    t.add(std::move(cells));
    if (c.x_id == fx.xs[0].name) divergence_ok = divergence_ok && c.pass;
  }
  rep.add({S, "IBP suite cells within 3 combined SE", 9, status_of(full.pass_fraction() >= 0.95), full.pass_fraction(), 0.95,
           fmt(full.passed()) + " of " + fmt(full.cells.size()) + " cells; worst z=" + fmt(full.worst_z())});
  rep.add({S, "divergence-theorem row (X=1) passes for every h", 9, status_of(divergence_ok), divergence_ok ? 1.0 : 0.0, 1.0, ""});
  // Root-M scaling of the combined SE: a quarter of the paths doubles it.
  if (F.size >= 4000) {
    const IbpReport quarter = cells_for(F.size / 4);
    const double ratio = full.mean_combined_se() / quarter.mean_combined_se();
    rep.add({S, "combined SE halves when M quadruples", 0, status_of(ratio >= 0.35 && ratio <= 0.65), ratio, 0.5,
             "accepted [0.35,0.65]"});
  }
}

/// Pathwise gap between the two ρ₁ formulas at N, N/2, N/4 on coupled paths.
struct RhoRefinement {
  std::vector<std::size_t> steps;
  std::vector<double> median_gap;
  LineFit fit;  // log median against log Δt
};

inline RhoRefinement rho_refinement(const PotentialSpec& V, std::size_t n, std::size_t finest, std::size_t paths,
                                    std::size_t batch, std::uint64_t seed, unsigned workers) {
  EnsembleSpec spec{n, TimeGrid(finest), paths, batch, RngSpec{seed}};
  RhoRefinement out;
  out.steps = {finest / 4, finest / 2, finest};
  std::vector<std::vector<double>> gaps(3, std::vector<double>(paths));
  for_each_path(spec, workers, [&](std::size_t m, const BrownianPath& fine) {
    for (std::size_t l = 0; l < 3; ++l) {
      const BrownianPath p = l == 2 ? fine : coarsen(fine, l == 0 ? 4 : 2);
      const SdePath s = euler_maruyama(V, p);
      gaps[l][m] = std::abs(log_rho1_stochastic(s, p) - log_rho1_representation(V, s));
    }
  });
  std::vector<double> x, y;
  for (std::size_t l = 0; l < 3; ++l) {
    out.median_gap.push_back(median(gaps[l]));
    x.push_back(std::log(1.0 / static_cast<double>(out.steps[l])));
    y.push_back(std::log(out.median_gap.back()));
  }
  out.fit = fit_line(x, y);
  return out;
}

inline void run_sde(Lab& lab, Report& rep) {
  const RunConfig& cfg = lab.config();
  const FeatureTable& F = lab.features();
  const std::string S = "sde";
  const Provenance prov = lab.provenance();
  const PotentialSpec& V = lab.potential();

  // Martingale normalization.
  {
    const Estimate e = mean_of(F.size, [&](std::size_t i) { return std::exp(F.log_rho_stoch[i]); });
    rep.add({S, "E[rho1(u)] = 1, V=" + V.name, 11, status_of(z_score(e.value - 1.0, e.se) <= 3.0),
             z_score(e.value - 1.0, e.se), 3.0, "mean=" + fmt(e.value) + " se=" + fmt(e.se)});
    for (const std::string pot : {"zero", "cos:0.25", "cos:0.5", "bump:0.5"}) {
      const PotentialSpec W = make_potential(pot, cfg.dim);
      EnsembleSpec spec{cfg.dim, TimeGrid(cfg.steps), cfg.moment_paths, cfg.batch_size, RngSpec{derived_seed(cfg.seed, 5)}};
      std::vector<double> rho(spec.paths);
      for_each_path(spec, cfg.workers, [&](std::size_t m, const BrownianPath& p) {
        rho[m] = rho1_stochastic(euler_maruyama(W, p), p);
      });
      const Estimate r = mean_estimate(rho);
      rep.add({S, "E[rho1(u)] = 1, V=" + W.name + " (M=" + fmt(spec.paths) + ")", 0,
               status_of(z_score(r.value - 1.0, r.se) <= 3.0), z_score(r.value - 1.0, r.se), 3.0, "mean=" + fmt(r.value)});
    }
  }
  // Representation vs stochastic integral under refinement.
  {
    const RhoRefinement rr = rho_refinement(V, cfg.dim, 2 * cfg.steps, cfg.refine_paths, cfg.batch_size,
                                            derived_seed(cfg.seed, 4), cfg.workers);
    auto& t = rep.table("rho_refinement.csv", {"method", "n", "N", "M", "seed", "potential", "median_abs_log_gap"});
    for (std::size_t l = 0; l < rr.steps.size(); ++l)
      t.add({"refinement", fmt(cfg.dim), fmt(rr.steps[l]), fmt(cfg.refine_paths), std::to_string(derived_seed(cfg.seed, 4)), V.name,
             fmt(rr.median_gap[l])});
    const bool trivially_equal = std::all_of(rr.median_gap.begin(), rr.median_gap.end(), [](double v) { return v == 0.0; });
    rep.add({S, "median |log rho_stoch - log rho_repr| decays with N", 11,
             trivially_equal ? Status::pass : status_of(rr.fit.slope > 0.0), rr.fit.slope, 0.0,
             "fitted order in dt; slope_se=" + fmt(rr.fit.slope_se)});
  }
  // φ₁ (conditional product) vs KDE of g(u), shared bandwidth.
  const double h = lab.bandwidth_for(F.g);
  std::vector<double> inv_rho(F.size);
  for (std::size_t i = 0; i < F.size; ++i) inv_rho[i] = std::exp(F.log_inv_rho_b[i]);
  {
    const auto grid = lab.r_grid();
    const DensityCurve phi = phi1_density(F.g, inv_rho, grid, h, prov);
    const DensityCurve emp = empirical_density_gu(F.g_u, grid, h, prov);
    detail::add_curve(rep, phi, "sde_density.csv");
    detail::add_curve(rep, emp, "sde_density.csv");
    const double out_phi = detail::outside_mass(F.g, grid.front(), grid.back(), inv_rho);
    const double out_emp = detail::outside_mass(F.g_u, grid.front(), grid.back());
    const bool flagged = std::any_of(phi.flags.begin(), phi.flags.end(), [](const std::string& f) { return !f.empty(); });
    rep.add({S, "phi1 integrates to 1 (grid + tail mass)", 0,
             flagged ? Status::inconclusive : status_of(std::abs(phi.integral() + out_phi - 1.0) <= 0.03),
             phi.integral() + out_phi, 0.03, flagged ? "grid points without enough local samples" : ""});
    rep.add({S, "KDE of g(u) integrates to 1 (grid + tail mass)", 0,
             status_of(std::abs(emp.integral() + out_emp - 1.0) <= 0.02), emp.integral() + out_emp, 0.02, ""});
  }
  {
    const auto levels = quantile_levels(F.g_u, Lab::central_quantiles());
    const DensityCurve phi = phi1_density(F.g, inv_rho, levels, h, prov);
    const DensityCurve emp = empirical_density_gu(F.g_u, levels, h, prov);
    auto& t = rep.table("sde_triangulation.csv", {"method", "potential", "n", "N", "M", "seed", "r", "phi1", "empirical", "diff", "combined_se", "pass"});
    double worst = 0.0;
    bool inconclusive = false;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double r = levels[j];
      const Estimate d = mean_of(F.size, [&](std::size_t i) {
        return gaussian_kernel(F.g[i] - r, h) * inv_rho[i] - gaussian_kernel(F.g_u[i] - r, h);
      });
      if (!phi.flags[j].empty()) inconclusive = true;
      const double z = z_score(phi.estimate[j] - emp.estimate[j], d.se);
      worst = std::max(worst, z);
      t.add({"phi1-vs-empirical", V.name, fmt(cfg.dim), fmt(cfg.steps), fmt(cfg.paths), std::to_string(cfg.seed), fmt(r), fmt(phi.estimate[j]),
             fmt(emp.estimate[j]), fmt(phi.estimate[j] - emp.estimate[j]), fmt(d.se), z <= 3.0 ? "1" : "0"});
    }
    rep.add({S, "phi1 matches KDE of g(u) at 5 central r, V=" + V.name, 11,
             inconclusive ? Status::inconclusive : status_of(worst <= 3.0), worst, 3.0,
             "worst z; same kernel and bandwidth on both sides, so no smoothing allowance; bandwidth=" + fmt(h)});
    // Change of measure on distribution functions.
    double wz = 0.0;
    for (double r : levels) {
      const Estimate d = mean_of(F.size, [&](std::size_t i) {
        return (F.g_u[i] <= r ? 1.0 : 0.0) - (F.g[i] <= r ? inv_rho[i] : 0.0);
      });
      wz = std::max(wz, z_score(d.value, d.se));
    }
    rep.add({S, "P(g(u)<=r) = E[1{g(B)<=r} / rho1(B)]", 0, status_of(wz <= 3.0), wz, 3.0, "worst z over 5 levels"});
    // θ_r total mass.
    double tz = 0.0;
    bool texact = true;
    const std::vector<double> ones(F.size, 1.0);
    for (double r : quantile_levels(F.g_u, Lab::level_quantiles())) {
      const SlabLadder L = theta_slab(ones, F.g_u, r, cfg.eps_ladder);
      const Estimate d = mean_of(F.size, [&](std::size_t i) {
        return L.path_value(1.0, F.g_u[i]) - gaussian_kernel(F.g[i] - r, h) * inv_rho[i];
      });
      const double phi_r = mean_of(F.size, [&](std::size_t i) { return gaussian_kernel(F.g[i] - r, h) * inv_rho[i]; }).value;
      tz = std::max(tz, z_score(L.value - phi_r, d.se));
      texact = texact && L.value >= 0.0;
    }
    rep.add({S, "theta_r total mass equals phi1(r)", 0, status_of(tz <= 3.0 && texact), tz, 3.0, "worst z over 3 levels"});
    // Bounds from the potential constants.
    const ExponentRange R = representation_range(V);
    std::size_t outside = 0;
    for (std::size_t i = 0; i < F.size; ++i) {
      const double a = -F.log_inv_rho_b[i], b = F.log_rho_repr[i];
      outside += (a < R.lo || a > R.hi || b < R.lo || b > R.hi) ? 1 : 0;
    }
    rep.add({S, "rho1 representations within the potential's bounds", 0, status_of(outside == 0),
             static_cast<double>(outside), 0.0, "exponent range [" + fmt(R.lo) + "," + fmt(R.hi) + "]"});
  }
  // V ≡ 0 collapses everything onto the Brownian quantities on the same noise.
  {
    EnsembleSpec spec = cfg.ensemble();
    spec.paths = std::min<std::size_t>(cfg.paths, 4096);
    const PotentialSpec Z = zero_potential(cfg.dim);
    std::vector<double> gb(spec.paths), gu(spec.paths), ir(spec.paths);
    bool exact = true;
    for_each_path(spec, 1, [&](std::size_t m, const BrownianPath& p) {
      const SdePath s = euler_maruyama(Z, p);
      exact = exact && s.u == p && rho1_stochastic(s, p) == 1.0 && rho1_representation(Z, s) == 1.0;
      gb[m] = eval_g(p);
      gu[m] = eval_g(s.u);
      ir[m] = inv_rho1_of_B(p, Z);
      exact = exact && ir[m] == 1.0;
    });
    const double hz = lab.bandwidth_for(gb);
    const auto levels = quantile_levels(gb, Lab::level_quantiles());
    const Provenance pz{cfg.dim, cfg.steps, spec.paths, cfg.seed};
    const DensityCurve k = kde_density(gb, levels, hz, pz);
    const DensityCurve phi = phi1_density(gb, ir, levels, hz, pz);
    const DensityCurve emp = empirical_density_gu(gu, levels, hz, pz);
    exact = exact && phi.estimate == k.estimate && emp.estimate == k.estimate && emp.se == k.se;
    const std::vector<double> ones(spec.paths, 1.0);
    for (double r : levels) {
      try {
        const SlabLadder a = theta_slab(ones, gu, r, cfg.eps_ladder);
        const SlabLadder b = slab_ladder(ones, gb, r, cfg.eps_ladder);
        exact = exact && a.value == b.value && a.se == b.se;
      } catch (const EmptySlab&) {
      }
    }
    rep.add({S, "V=0 collapses onto the Brownian quantities bit-for-bit", 11, status_of(exact), exact ? 1.0 : 0.0, 1.0,
             "paths=" + fmt(spec.paths)});
  }
}

/// Runs the requested suite(s) and returns the report (nothing written).
inline Report run(const RunConfig& cfg, Suite suite) {
  Report rep;
  rep.config = cfg;
  rep.config.suite = to_string(suite);
  Lab lab(rep.config);
  const bool all = suite == Suite::all;
  if (all || suite == Suite::invariants) run_invariants(lab, rep);
  if (all || suite == Suite::density) run_density(lab, rep);
  if (all || suite == Suite::surface) run_surface(lab, rep);
  if (all || suite == Suite::ibp) run_ibp(lab, rep);
  if (all || suite == Suite::sde) run_sde(lab, rep);
  return rep;
}

}  // namespace wsurf
