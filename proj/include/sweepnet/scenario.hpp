#pragma once

// Config-driven scenarios: YAML in, CSV tables and a YAML manifest out.
// The schema is documented in README.md.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sweepnet/adiabatic.hpp"
#include "sweepnet/dynamics.hpp"
#include "sweepnet/network.hpp"

#ifndef SWEEPNET_VERSION
#define SWEEPNET_VERSION "0.0.0"
#endif

namespace sweepnet {

inline constexpr const char* kVersion = SWEEPNET_VERSION;

// Relative bound on |I_operator - I_splitting| checked for every emitted run.
inline constexpr double kIdentityTolerance = 1e-8;

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ScenarioKind { injection, induction, decay, adiabatic_scan };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::injection: return "injection";
    case ScenarioKind::induction: return "induction";
    case ScenarioKind::decay: return "decay";
    case ScenarioKind::adiabatic_scan: return "adiabatic-scan";
  }
  return "unknown";
}

struct OutputSpec {
  std::string prefix = "run";
  Index stride = 1;
  std::set<std::string> series{"p", "q", "I_op", "I_split", "Q", "G"};
  bool wants(const std::string& s) const { return series.count(s) > 0; }
};

struct ScanSpec {
  std::string parameter;  // dotted path into the config, e.g. protocol.rate
  std::vector<double> values;
};

struct ScenarioConfig {
  std::string source;
  YAML::Node root;

  std::string builder;
  std::optional<NetworkModel> model;  // absent for level-form builders
  SpectralDecomposition decomposition;
  std::optional<std::pair<double, double>> ring_ends;  // (Ca, Cb) for ring builders

  ScenarioKind kind = ScenarioKind::injection;
  Index level = -1;   // induction start level
  Index branch = -1;  // adiabatic-scan branch
  bool start_on_branch = true;

  SweepProtocol protocol;
  PropagationOptions solver;
  double quadrature_tolerance = 1e-8;  // decay reference profile
  OutputSpec outputs;
  std::optional<ScanSpec> scan;
};

namespace detail {

inline std::string where(const std::string& source, const YAML::Node& n) {
  const auto m = n.Mark();
  std::string s = source.empty() ? std::string("config") : source;
  if (m.line >= 0) s += ":" + std::to_string(m.line + 1);
  return s;
}

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& path, const std::string& what) const {
    throw ConfigError(where(source_, at) + ": field '" + path + "': " + what);
  }

  YAML::Node child(const YAML::Node& parent, const std::string& key, const std::string& path,
                   bool required) const {
    if (!parent.IsMap()) fail(parent, path, "parent is not a mapping");
    YAML::Node n = parent[key];
    if (!n && required) fail(parent, path, "is required");
    return n;
  }

  template <class T>
  T get(const YAML::Node& parent, const std::string& key, const std::string& path) const {
    return as<T>(child(parent, key, path, true), path);
  }

  template <class T>
  T get_or(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) const {
    const YAML::Node n = child(parent, key, path, false);
    return n ? as<T>(n, path) : fallback;
  }

  template <class T>
  T as(const YAML::Node& n, const std::string& path) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, path, "has the wrong type");
    }
  }

  Vec vec(const YAML::Node& parent, const std::string& key, const std::string& path) const {
    const YAML::Node n = child(parent, key, path, true);
    if (!n.IsSequence() || n.size() == 0) fail(n, path, "must be a non-empty list");
    Vec v(static_cast<Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) v(static_cast<Index>(i)) = as<double>(n[i], path);
    return v;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

inline std::optional<Index> tagged_of(const Reader& r, const YAML::Node& m) {
  if (!r.child(m, "tagged", "model.tagged", false)) return std::nullopt;
  return r.get<Index>(m, "tagged", "model.tagged");
}

inline void parse_model(const Reader& r, const YAML::Node& root, ScenarioConfig& c) {
  const YAML::Node m = r.child(root, "model", "model", true);
  c.builder = r.get<std::string>(m, "builder", "model.builder");
  std::optional<EnergyWindow> window;
  if (const YAML::Node w = r.child(m, "window", "model.window", false)) {
    if (!w.IsSequence() || w.size() != 2) r.fail(w, "model.window", "must be [lo, hi]");
    window = EnergyWindow{r.as<double>(w[0], "model.window"), r.as<double>(w[1], "model.window")};
  }
  try {
    if (c.builder == "star") {
      const Vec e = r.vec(m, "levels", "model.levels");
      const Vec k = r.vec(m, "couplings", "model.couplings");
      if (e.size() != k.size()) r.fail(m, "model.couplings", "must match model.levels in length");
      c.model = build_star(e, k, tagged_of(r, m));
    } else if (c.builder == "star_comb") {
      const Index n = r.get<Index>(m, "count", "model.count");
      if (n < 1) r.fail(m, "model.count", "must be positive");
      const double spacing = r.get_or<double>(m, "spacing", "model.spacing", 1.0);
      const double offset = r.get_or<double>(m, "offset", "model.offset", 0.0);
      Vec e(n);
      for (Index k = 0; k < n; ++k) e(k) = offset + spacing * static_cast<double>(k);
      c.model = build_star(e, Vec::Constant(n, r.get<double>(m, "coupling", "model.coupling")), tagged_of(r, m));
    } else if (c.builder == "dot_wire_ring") {
      const double ca = r.get<double>(m, "ca", "model.ca"), cb = r.get<double>(m, "cb", "model.cb");
      c.model = build_dot_wire_ring(r.get<Index>(m, "sites", "model.sites"),
                                    r.get_or<double>(m, "hopping", "model.hopping", 1.0), ca, cb);
      c.ring_ends = {ca, cb};
    } else if (c.builder == "ring_comb") {
      const Index n = r.get<Index>(m, "levels", "model.levels");
      const double spacing = r.get_or<double>(m, "spacing", "model.spacing", 1.0);
      const double ca = r.get<double>(m, "ca", "model.ca"), cb = r.get<double>(m, "cb", "model.cb");
      const auto form = r.get_or<std::string>(m, "form", "model.form", "level");
      if (form == "level") {
        c.decomposition = ring_comb_spectrum(n, spacing, ca, cb);
        if (window) c.decomposition.window = *window;
        c.decomposition.mean_spacing = detail::spacing_in_window(c.decomposition.levels, c.decomposition.window);
      } else if (form == "sites") {
        c.model = build_ring_comb(n, spacing, ca, cb);
      } else {
        r.fail(m["form"], "model.form", "must be 'level' or 'sites'");
      }
      c.ring_ends = {ca, cb};
    } else if (c.builder == "random") {
      c.model = build_random_network(r.get<Index>(m, "sites", "model.sites"),
                                     r.get<std::uint64_t>(m, "seed", "model.seed"));
    } else {
      r.fail(m["builder"], "model.builder", "unknown builder '" + c.builder + "'");
    }
  } catch (const InvalidModel& e) {
    throw ConfigError(where(r.source(), m) + ": model: " + e.what());
  }
  if (c.model) c.decomposition = decompose(*c.model, window);
}

inline void parse_protocol(const Reader& r, const YAML::Node& root, ScenarioConfig& c) {
  const YAML::Node p = r.child(root, "protocol", "protocol", true);
  const auto kind = r.get_or<std::string>(p, "kind", "protocol.kind", "linear");
  const Index samples = r.get_or<Index>(p, "samples", "protocol.samples", 201);
  if (samples < 2) r.fail(p, "protocol.samples", "must be at least 2");
  try {
    if (kind == "linear") {
      const double u0 = r.get<double>(p, "u_start", "protocol.u_start");
      const double u1 = r.get<double>(p, "u_end", "protocol.u_end");
      if (c.kind == ScenarioKind::adiabatic_scan) {
        // Only the u grid matters; the rate is optional.
        const double rate = r.get_or<double>(p, "rate", "protocol.rate", u1 > u0 ? 1.0 : -1.0);
        c.protocol = SweepProtocol::linear(u0, u1, rate, samples);
      } else {
        const double rate = r.get<double>(p, "rate", "protocol.rate");
        if (rate == 0.0) r.fail(p["rate"], "protocol.rate", "must be nonzero (use kind: hold)");
        if ((u1 - u0) * rate <= 0.0) r.fail(p["rate"], "protocol.rate", "sign must match u_end - u_start");
        c.protocol = SweepProtocol::linear(u0, u1, rate, samples);
      }
    } else if (kind == "hold") {
      const double duration = r.get<double>(p, "duration", "protocol.duration");
      if (!(duration > 0.0)) r.fail(p["duration"], "protocol.duration", "must be positive");
      c.protocol = SweepProtocol::hold(r.get<double>(p, "u", "protocol.u"), duration, samples);
    } else if (kind == "tabulated") {
      c.protocol = SweepProtocol::tabulated(r.vec(p, "times", "protocol.times"),
                                            r.vec(p, "values", "protocol.values"), samples);
    } else {
      r.fail(p["kind"], "protocol.kind", "must be linear, hold or tabulated");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where(r.source(), p) + ": protocol: " + e.what());
  }
}

inline ScenarioConfig resolve(const YAML::Node& root, const std::string& source) {
  Reader r(source);
  if (!root || !root.IsMap()) throw ConfigError(where(source, root) + ": config must be a mapping");
  ScenarioConfig c;
  c.source = source;
  c.root = root;

  const YAML::Node s = r.child(root, "scenario", "scenario", true);
  const std::string kind = s.IsMap() ? r.get<std::string>(s, "kind", "scenario.kind") : r.as<std::string>(s, "scenario");
  if (kind == "injection") c.kind = ScenarioKind::injection;
  else if (kind == "induction") c.kind = ScenarioKind::induction;
  else if (kind == "decay") c.kind = ScenarioKind::decay;
  else if (kind == "adiabatic-scan") c.kind = ScenarioKind::adiabatic_scan;
  else r.fail(s, "scenario.kind", "must be injection, induction, decay or adiabatic-scan");

  parse_model(r, root, c);
  parse_protocol(r, root, c);

  const Index n = c.decomposition.size();
  if (c.kind == ScenarioKind::induction) {
    if (!s.IsMap()) r.fail(s, "scenario.level", "is required for induction");
    c.level = r.get<Index>(s, "level", "scenario.level");
    if (c.level < 0 || c.level >= n) r.fail(s["level"], "scenario.level", "is out of range");
  }
  if (c.kind == ScenarioKind::adiabatic_scan) {
    if (!s.IsMap()) r.fail(s, "scenario.branch", "is required for adiabatic-scan");
    c.branch = r.get<Index>(s, "branch", "scenario.branch");
    if (c.branch < 0 || c.branch > static_cast<Index>(c.decomposition.coupled_levels().size()))
      r.fail(s["branch"], "scenario.branch", "is out of range");
  }
  if (c.kind == ScenarioKind::injection && s.IsMap()) {
    const auto start = r.get_or<std::string>(s, "start", "scenario.start", "branch");
    if (start != "branch" && start != "dot") r.fail(s["start"], "scenario.start", "must be 'branch' or 'dot'");
    c.start_on_branch = start == "branch";
  }

  if (const YAML::Node sv = r.child(root, "solver", "solver", false)) {
    c.solver.tolerance = r.get_or<double>(sv, "tolerance", "solver.tolerance", c.solver.tolerance);
    if (!(c.solver.tolerance > 0.0)) r.fail(sv["tolerance"], "solver.tolerance", "must be positive");
    c.quadrature_tolerance =
        r.get_or<double>(sv, "quadrature_tolerance", "solver.quadrature_tolerance", c.quadrature_tolerance);
    if (!(c.quadrature_tolerance > 0.0))
      r.fail(sv["quadrature_tolerance"], "solver.quadrature_tolerance", "must be positive");
    c.solver.max_step = r.get_or<double>(sv, "max_step", "solver.max_step", c.solver.max_step);
    const auto b = r.get_or<std::string>(sv, "backend", "solver.backend", "automatic");
    if (b == "automatic") c.solver.backend = Backend::automatic;
    else if (b == "site") c.solver.backend = Backend::site_dense;
    else if (b == "level") c.solver.backend = Backend::level;
    else r.fail(sv["backend"], "solver.backend", "must be automatic, site or level");
  }
  if (!c.model && c.solver.backend == Backend::site_dense)
    throw ConfigError(where(source, root) + ": field 'solver.backend': level-form models need the level backend");
  c.solver.tag = to_string(c.kind);

  if (const YAML::Node o = r.child(root, "outputs", "outputs", false)) {
    c.outputs.prefix = r.get_or<std::string>(o, "prefix", "outputs.prefix", c.outputs.prefix);
    c.outputs.stride = r.get_or<Index>(o, "stride", "outputs.stride", 1);
    if (c.outputs.stride < 1) r.fail(o["stride"], "outputs.stride", "must be at least 1");
    if (const YAML::Node series = r.child(o, "series", "outputs.series", false)) {
      static const std::set<std::string> known{"p", "q", "I_op", "I_split", "Q", "G"};
      if (!series.IsSequence()) r.fail(series, "outputs.series", "must be a list");
      c.outputs.series.clear();
      for (const auto& x : series) {
        const auto name = r.as<std::string>(x, "outputs.series");
        if (!known.count(name)) r.fail(x, "outputs.series", "unknown series '" + name + "'");
        c.outputs.series.insert(name);
      }
    }
  }

  if (const YAML::Node sc = r.child(root, "scan", "scan", false)) {
    ScanSpec spec;
    spec.parameter = r.get<std::string>(sc, "parameter", "scan.parameter");
    const YAML::Node vals = r.child(sc, "values", "scan.values", true);
    if (!vals.IsSequence()) r.fail(vals, "scan.values", "must be a list");
    if (vals.size() == 0) r.fail(vals, "scan.values", "must not be empty");
    for (const auto& v : vals) spec.values.push_back(r.as<double>(v, "scan.values"));
    c.scan = spec;
  }
  return c;
}

// Copy of `root` with the scalar at a dotted path replaced.
inline YAML::Node with_override(const YAML::Node& root, const std::string& path, double value,
                                const std::string& source) {
  YAML::Node copy = YAML::Clone(root);
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  if (keys.empty()) throw ConfigError(source + ": field 'scan.parameter': is empty");
  YAML::Node cur = copy;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!cur[keys[i]] || !cur[keys[i]].IsMap())
      throw ConfigError(source + ": field 'scan.parameter': no mapping '" + keys[i] + "' in path " + path);
    cur.reset(cur[keys[i]]);
  }
  if (cur[keys.back()] && !cur[keys.back()].IsScalar())
    throw ConfigError(source + ": field 'scan.parameter': " + path + " is not a scalar");
  if (keys.back() == "level" || keys.back() == "branch" || keys.back() == "count" || keys.back() == "sites" ||
      keys.back() == "levels" || keys.back() == "samples" || keys.back() == "seed")
    cur[keys.back()] = static_cast<long long>(std::llround(value));
  else
    cur[keys.back()] = value;
  return copy;
}

}  // namespace detail

inline ScenarioConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError(path + ": cannot open config");
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ":" + std::to_string(e.mark.line + 1) + ": parse error: " + e.msg);
  }
  return detail::resolve(root, path);
}

inline ScenarioConfig parse_config(const std::string& text, const std::string& source = "config") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": parse error: " + e.msg);
  }
  return detail::resolve(root, source);
}

// Effective single coupling for the regime boundaries: rms over coupled levels.
inline double rms_coupling(const SpectralDecomposition& d) {
  double s = 0.0;
  Index n = 0;
  for (Index k = 0; k < d.size(); ++k)
    if (d.is_coupled(k)) {
      s += d.couplings(k) * d.couplings(k);
      ++n;
    }
  return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

// Splitting ratios of magnitude at least this are reported as near-singular.
inline constexpr double kSingularRatio = 10.0;

struct ScenarioResult {
  ScenarioKind kind = ScenarioKind::injection;
  std::optional<CurrentRecord> record;
  ChargeResult charge;
  // adiabatic-scan
  Vec u, energy, p, G, G_collective, p_lorentzian;
  // decay
  Vec q_wigner;
  double gamma = 0.0;
  std::optional<RegimeResult> regime;
  bool near_singular = false;
  bool identity_ok = true;
};

inline ScenarioResult run_scenario(const ScenarioConfig& c) {
  const auto& d = c.decomposition;
  ScenarioResult res;
  res.kind = c.kind;
  const double c_eff = rms_coupling(d);
  if (c.protocol.kind == SweepKind::linear && c.protocol.rate != 0.0 && c_eff > 0.0 && d.mean_spacing > 0.0)
    res.regime = classify_regime(c_eff, d.mean_spacing, std::abs(c.protocol.rate));
  for (Index k = 0; k < d.size(); ++k) {
    if (d.has_ratio(k) && std::abs(d.ratios(k)) >= kSingularRatio) res.near_singular = true;
    if (!d.is_coupled(k) && d.tagged_overlap.size() && std::abs(d.tagged_overlap(k)) > 1e-12)
      res.near_singular = true;
  }

  if (c.kind == ScenarioKind::adiabatic_scan) {
    const Vec grid = Vec::LinSpaced(c.protocol.t_grid.size(), c.protocol.u_start, c.protocol.u_end);
    StarView view(d);
    const Index m = grid.size();
    res.u = grid;
    res.energy.resize(m);
    res.p.resize(m);
    res.G.resize(m);
    std::optional<double> guess;
    for (Index i = 0; i < m; ++i) {
      const auto b = branch_occupations(view, grid(i), c.branch, guess);
      guess = b.energy;
      res.energy(i) = b.energy;
      res.p(i) = b.p;
      res.G(i) = splitting_G(view, c.branch, grid(i), guess);
    }
    double integral = 0.0;
    for (Index i = 1; i < m; ++i) integral += 0.5 * (grid(i) - grid(i - 1)) * (res.G(i) + res.G(i - 1));
    res.charge = {integral, res.G.size() ? view.decomposition().weighted_occupation(branch_occupations(view, grid(m - 1), c.branch).q) -
                                               view.decomposition().weighted_occupation(branch_occupations(view, grid(0), c.branch).q)
                                         : 0.0};
    // Collective lineshape overlay, centred between the levels bracketing the branch.
    if (c.ring_ends && c.branch > 0 && c.branch < view.branch_count() - 1 && d.mean_spacing > 0.0) {
      const auto cp = ContinuumParams::from_ring(c.ring_ends->first, c.ring_ends->second, d.mean_spacing);
      const Index lo = view.level_of(c.branch - 1), hi = view.level_of(c.branch);
      const double centre = 0.5 * (d.levels(lo) + d.levels(hi));
      res.G_collective.resize(m);
      res.p_lorentzian.resize(m);
      for (Index i = 0; i < m; ++i) {
        res.G_collective(i) = collective_peak_G(cp, d.ratios(hi), d.ratios(lo), grid(i), centre);
        res.p_lorentzian(i) = cp.Delta * distorted_lorentzian(grid(i) - centre, cp.Gamma, cp.theta);
      }
    }
    return res;
  }

  WaveState init;
  const Index n = d.size();
  switch (c.kind) {
    case ScenarioKind::injection: {
      if (c.start_on_branch) {
        const Index top = static_cast<Index>(d.coupled_levels().size());
        const bool up = c.protocol.u(c.protocol.duration) >= c.protocol.u(0.0);
        init = branch_state(d, c.protocol.u(0.0), up ? 0 : top);
      } else {
        init = dot_state(n, Basis::level);
      }
      break;
    }
    case ScenarioKind::induction: init = level_state(d, c.level); break;
    case ScenarioKind::decay: init = dot_state(n, Basis::level); break;
    default: break;
  }
  CurrentRecord rec = c.model ? propagate(*c.model, d, c.protocol, init, c.solver)
                              : propagate(d, c.protocol, init, c.solver);
  res.charge = integrated_charge(rec);
  res.identity_ok = rec.relative_identity_residual() <= kIdentityTolerance;

  if (c.kind == ScenarioKind::decay) {
    if (!(d.mean_spacing > 0.0)) throw Error("decay needs a positive mean level spacing");
    res.gamma = 2.0 * kPi * c_eff * c_eff / d.mean_spacing;
    const double rate = c.protocol.kind == SweepKind::linear ? c.protocol.rate : 0.0;
    const Vec eps = (d.levels.array() - c.protocol.u(0.0)).matrix();
    res.q_wigner = wigner_decay_profile(eps, d.couplings, res.gamma, rate, c.protocol.duration, c.quadrature_tolerance);
  }
  res.record = std::move(rec);
  return res;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Csv {
 public:
  Csv(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline std::vector<Index> sample_rows(Index n, Index stride) {
  std::vector<Index> rows;
  for (Index i = 0; i < n; i += stride) rows.push_back(i);
  if (rows.empty() || rows.back() != n - 1) rows.push_back(n - 1);
  return rows;
}

}  // namespace detail

// Writes the tables of one run; returns the file names written.
inline std::vector<std::string> write_outputs(const ScenarioConfig& c, const ScenarioResult& r,
                                              const std::filesystem::path& dir) {
  using detail::num;
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  const auto& d = c.decomposition;
  const auto& o = c.outputs;

  if (r.kind == ScenarioKind::adiabatic_scan) {
    std::vector<std::string> head{"u", "energy"};
    if (o.wants("p")) head.push_back("p");
    if (o.wants("G")) head.push_back("G");
    const bool overlay = r.G_collective.size() > 0;
    if (overlay && o.wants("G")) head.push_back("G_collective");
    if (overlay && o.wants("p")) head.push_back("p_lorentzian");
    const std::string name = o.prefix + "_adiabatic.csv";
    detail::Csv csv(dir / name, head);
    for (Index i : detail::sample_rows(r.u.size(), o.stride)) {
      std::vector<std::string> row{num(r.u(i)), num(r.energy(i))};
      if (o.wants("p")) row.push_back(num(r.p(i)));
      if (o.wants("G")) row.push_back(num(r.G(i)));
      if (overlay && o.wants("G")) row.push_back(num(r.G_collective(i)));
      if (overlay && o.wants("p")) row.push_back(num(r.p_lorentzian(i)));
      csv.row(row);
    }
    files.push_back(name);
    return files;
  }

  const auto& rec = *r.record;
  const auto rows = detail::sample_rows(rec.samples(), o.stride);
  {
    std::vector<std::string> head{"t", "u"};
    for (const char* s : {"p", "I_op", "I_split", "Q"})
      if (o.wants(s)) head.push_back(s);
    const std::string name = o.prefix + "_series.csv";
    detail::Csv csv(dir / name, head);
    for (Index i : rows) {
      std::vector<std::string> row{num(rec.times(i)), num(rec.u(i))};
      if (o.wants("p")) row.push_back(num(rec.p(i)));
      if (o.wants("I_op")) row.push_back(num(rec.I_operator(i)));
      if (o.wants("I_split")) row.push_back(num(rec.I_splitting(i)));
      if (o.wants("Q")) row.push_back(num(rec.Q_cumulative(i) - rec.Q_cumulative(0)));
      csv.row(row);
    }
    files.push_back(name);
  }
  if (o.wants("q")) {
    // One row per level, one column per sampled time.
    std::vector<std::string> head{"level", "energy", "lambda"};
    for (Index i : rows) head.push_back("q_t" + num(rec.times(i)));
    const std::string name = o.prefix + "_occupations.csv";
    detail::Csv csv(dir / name, head);
    for (Index k = 0; k < d.size(); ++k) {
      std::vector<std::string> row{std::to_string(k), num(d.levels(k)), num(d.ratios(k))};
      for (Index i : rows) row.push_back(num(rec.q(i, k)));
      csv.row(row);
    }
    files.push_back(name);
  }
  if (r.kind == ScenarioKind::decay) {
    const std::string name = o.prefix + "_decay.csv";
    detail::Csv csv(dir / name, {"level", "energy", "q_final", "q_wigner"});
    const Index last = rec.samples() - 1;
    for (Index k = 0; k < d.size(); ++k)
      csv.row({std::to_string(k), num(d.levels(k)), num(rec.q(last, k)), num(r.q_wigner(k))});
    files.push_back(name);
  }
  return files;
}

inline void emit_result(YAML::Emitter& y, const ScenarioConfig& c, const ScenarioResult& r) {
  const auto& d = c.decomposition;
  y << YAML::Key << "resolved" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "scenario" << YAML::Value << to_string(c.kind);
  y << YAML::Key << "levels" << YAML::Value << d.size();
  y << YAML::Key << "mean_spacing" << YAML::Value << d.mean_spacing;
  y << YAML::Key << "rms_coupling" << YAML::Value << rms_coupling(d);
  y << YAML::Key << "lambda_ground" << YAML::Value << d.ratios(0);
  y << YAML::Key << "duration" << YAML::Value << c.protocol.duration;
  y << YAML::Key << "tolerance" << YAML::Value << c.solver.tolerance;
  y << YAML::Key << "identity_tolerance" << YAML::Value << kIdentityTolerance;
  y << YAML::EndMap;
  y << YAML::Key << "results" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "Q_time_integral" << YAML::Value << r.charge.time_integral;
  y << YAML::Key << "Q_endpoint" << YAML::Value << r.charge.endpoint;
  if (r.regime) {
    y << YAML::Key << "regime" << YAML::Value << to_string(r.regime->regime);
    y << YAML::Key << "regime_boundary" << YAML::Value << r.regime->boundary;
  }
  y << YAML::Key << "near_singular" << YAML::Value << r.near_singular;
  if (r.record) {
    const auto& rec = *r.record;
    y << YAML::Key << "identity_residual" << YAML::Value << rec.max_identity_residual;
    y << YAML::Key << "identity_relative" << YAML::Value << rec.relative_identity_residual();
    y << YAML::Key << "identity_ok" << YAML::Value << r.identity_ok;
    y << YAML::Key << "norm_drift" << YAML::Value << rec.max_norm_drift;
    y << YAML::Key << "probability_defect" << YAML::Value << rec.max_probability_defect();
    y << YAML::Key << "steps" << YAML::Value << rec.steps;
    y << YAML::Key << "rejected_steps" << YAML::Value << rec.rejected_steps;
  }
  if (r.kind == ScenarioKind::decay) y << YAML::Key << "gamma" << YAML::Value << r.gamma;
  y << YAML::EndMap;
}

inline void write_manifest(const std::filesystem::path& path, const ScenarioConfig& c,
                           const std::function<void(YAML::Emitter&)>& body) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  y << YAML::BeginMap;
  y << YAML::Key << "sweepnet_version" << YAML::Value << kVersion;
  y << YAML::Key << "config" << YAML::Value << c.source;
  y << YAML::Key << "input" << YAML::Value << c.root;
  body(y);
  y << YAML::EndMap;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << y.c_str() << "\n";
}

struct RunSummary {
  std::vector<std::string> files;
  bool identity_ok = true;
};

inline RunSummary run_to_directory(const ScenarioConfig& c, const std::filesystem::path& dir) {
  const auto r = run_scenario(c);
  RunSummary s;
  s.files = write_outputs(c, r, dir);
  const std::string manifest = c.outputs.prefix + "_manifest.yaml";
  write_manifest(dir / manifest, c, [&](YAML::Emitter& y) { emit_result(y, c, r); });
  s.files.push_back(manifest);
  s.identity_ok = r.identity_ok;
  return s;
}

struct ScanRow {
  double value = 0.0;
  ScenarioResult result;
};

// Runs every scan value; rows keep the order of the values whatever the
// thread count. The first failure is rethrown after all workers finish.
inline std::vector<ScanRow> run_scan(const ScenarioConfig& c, unsigned threads = 1) {
  if (!c.scan) throw ConfigError(c.source + ": field 'scan': is required for scan");
  const auto& spec = *c.scan;
  if (spec.values.empty()) throw ConfigError(c.source + ": field 'scan.values': must not be empty");
  std::vector<ScenarioConfig> configs;
  for (double v : spec.values)
    configs.push_back(detail::resolve(detail::with_override(c.root, spec.parameter, v, c.source), c.source));

  std::vector<ScanRow> rows(spec.values.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        rows[i] = {spec.values[i], run_scenario(configs[i])};
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

inline RunSummary scan_to_directory(const ScenarioConfig& c, const std::filesystem::path& dir, unsigned threads) {
  using detail::num;
  const auto rows = run_scan(c, threads);
  std::filesystem::create_directories(dir);
  RunSummary s;
  const std::string name = c.outputs.prefix + "_scan.csv";
  detail::Csv csv(dir / name, {c.scan->parameter, "Q", "Q_endpoint", "regime", "regime_boundary", "near_singular",
                               "identity_relative"});
  for (const auto& row : rows) {
    const auto& r = row.result;
    csv.row({num(row.value), num(r.charge.time_integral), num(r.charge.endpoint),
             r.regime ? to_string(r.regime->regime) : "n/a", r.regime && r.regime->boundary ? "1" : "0",
             r.near_singular ? "1" : "0", r.record ? num(r.record->relative_identity_residual()) : "0"});
    s.identity_ok = s.identity_ok && r.identity_ok;
  }
  s.files.push_back(name);
  const std::string manifest = c.outputs.prefix + "_manifest.yaml";
  write_manifest(dir / manifest, c, [&](YAML::Emitter& y) {
    y << YAML::Key << "scan" << YAML::Value << YAML::BeginSeq;
    for (const auto& row : rows) {
      y << YAML::BeginMap << YAML::Key << "value" << YAML::Value << row.value;
      emit_result(y, c, row.result);
      y << YAML::EndMap;
    }
    y << YAML::EndSeq;
  });
  s.files.push_back(manifest);
  return s;
}

}  // namespace sweepnet
