#include "ufilter/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "ufilter/errors.hpp"

namespace ufilter {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing field '") + key + "'");
  return j.at(key);
}

double real(const json& j, const std::string& where, bool allow_inf = false) {
  if (j.is_number()) return j.get<double>();
  if (allow_inf && j.is_string() && j.get<std::string>() == "inf") return kInf;
  fail(where, allow_inf ? "expected a number or \"inf\"" : "expected a number");
}

std::size_t count(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail(where, "expected a nonnegative integer");
  return j.get<std::size_t>();
}

std::vector<double> reals(const json& j, const std::string& where, bool allow_inf = false) {
  if (!j.is_array()) fail(where, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(real(j[i], where + "[" + std::to_string(i) + "]", allow_inf));
  return out;
}

std::vector<std::vector<double>> rows(const json& j, const std::string& where, bool allow_inf = false) {
  if (!j.is_array()) fail(where, "expected an array of arrays");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(reals(j[i], where + "[" + std::to_string(i) + "]", allow_inf));
  return out;
}

Matrix matrix(const json& j, const std::string& where, std::size_t r, std::size_t c) {
  const auto m = rows(j, where);
  if (m.size() != r) fail(where, "expected " + std::to_string(r) + " rows");
  for (const auto& row : m)
    if (row.size() != c) fail(where, "expected " + std::to_string(c) + " columns");
  return Matrix::from_rows(m);
}

std::vector<double> belief(const json& j, const std::string& where, std::size_t n) {
  auto b = reals(j, where);
  if (b.size() != n) fail(where, "expected " + std::to_string(n) + " entries");
  double sum = 0.0;
  for (double v : b) {
    if (v < 0.0) fail(where, "belief entries must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(where, "belief must sum to one");
  return b;
}

std::size_t index(const json& j, const std::string& where, std::size_t bound) {
  const std::size_t i = count(j, where);
  if (i >= bound) fail(where, "index out of range");
  return i;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(where, "unknown field '" + key + "'");
}

PriorShape parse_prior(const json& j, std::size_t n) {
  const std::string where = "prior";
  if (!j.is_object()) fail(where, "expected an object");
  const auto& shape = require(j, "shape", where);
  if (!shape.is_string()) fail(where + ".shape", "expected a string");
  const auto s = shape.get<std::string>();
  PriorShape p;
  if (s == "zero") {
    p.kind = PriorShape::Kind::Zero;
  } else if (s == "point-mass") {
    p.kind = PriorShape::Kind::PointMass;
    p.belief = belief(require(j, "belief", where), where + ".belief", n);
  } else if (s == "abs-log-odds") {
    p.kind = PriorShape::Kind::AbsLogOdds;
    if (j.contains("scale")) p.scale = real(j["scale"], where + ".scale");
    if (!(p.scale >= 0.0)) fail(where + ".scale", "must be nonnegative");
  } else if (s == "quadratic") {
    p.kind = PriorShape::Kind::Quadratic;
    p.belief = belief(require(j, "center", where), where + ".center", n);
    if (j.contains("scale")) p.scale = real(j["scale"], where + ".scale");
    if (!(p.scale >= 0.0)) fail(where + ".scale", "must be nonnegative");
  } else if (s == "table") {
    p.kind = PriorShape::Kind::Table;
    p.table = reals(require(j, "values", where), where + ".values", true);
    for (double v : p.table)
      if (v < 0.0) fail(where + ".values", "penalties must be nonnegative");
  } else {
    fail(where + ".shape", "unknown shape '" + s + "'");
  }
  return p;
}

}  // namespace

std::function<double(std::span<const double>)> PriorShape::function() const {
  switch (kind) {
    case Kind::Zero:
      return [](std::span<const double>) { return 0.0; };
    case Kind::PointMass:
      return [b = belief](std::span<const double> q) {
        for (std::size_t i = 0; i < q.size(); ++i)
          if (std::abs(q[i] - b[i]) > 1e-12) return kInf;
        return 0.0;
      };
    case Kind::AbsLogOdds:
      return [s = scale](std::span<const double> q) {
        const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
        if (*lo <= 0.0) return kInf;
        return s * std::log(*hi / *lo);
      };
    case Kind::Quadratic:
      return [s = scale, b = belief](std::span<const double> q) {
        double sum = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) sum += (q[i] - b[i]) * (q[i] - b[i]);
        return s * sum;
      };
    case Kind::Table:
      break;
  }
  throw ValidationError("a tabulated prior has no functional form");
}

std::vector<double> PriorShape::on_grid(const SimplexGrid& grid) const {
  if (kind == Kind::Table) {
    if (table.size() != grid.size())
      throw ValidationError("prior.values: expected " + std::to_string(grid.size()) + " entries for the grid");
    return table;
  }
  if (kind == Kind::PointMass) {
    std::vector<double> v(grid.size(), kInf);
    v[grid.nearest(belief)] = 0.0;
    return v;
  }
  const auto f = function();
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid.belief(i));
  return v;
}

GeneratorGrid RunConfig::generator_grid() const {
  GeneratorGrid g(generators, generator_penalty);
  if (control) g.set_control_penalties(control->generator_penalties);
  return g;
}

PriorSpec RunConfig::prior_spec(const SimplexGrid& grid) const {
  return PriorSpec{prior.on_grid(grid), scope, framework};
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  check_keys(j,
             {"states", "symbols", "horizon", "grid_resolution", "framework", "uncertainty", "generators", "prior",
              "exact_prior", "observations", "simulation", "filter", "expectation", "control", "convergence",
              "oracle", "description"},
             "config");

  RunConfig c;
  c.states = count(require(j, "states", "config"), "states");
  c.symbols = count(require(j, "symbols", "config"), "symbols");
  c.horizon = count(require(j, "horizon", "config"), "horizon");
  if (c.states < 1 || c.symbols < 1) fail("config", "states and symbols must be positive");
  if (j.contains("grid_resolution")) c.grid_resolution = count(j["grid_resolution"], "grid_resolution");
  if (c.grid_resolution < 1) fail("grid_resolution", "must be positive");

  const auto& fw = require(j, "framework", "config");
  if (!fw.is_string()) fail("framework", "expected a string");
  const auto f = fw.get<std::string>();
  if (f == "static-up") {
    c.scope = GeneratorScope::Static, c.framework = Framework::UncertainPrior;
  } else if (f == "dynamic-up") {
    c.scope = GeneratorScope::Dynamic, c.framework = Framework::UncertainPrior;
  } else if (f == "static-dr") {
    c.scope = GeneratorScope::Static, c.framework = Framework::DivergenceRobust;
  } else if (f == "dynamic-dr") {
    c.scope = GeneratorScope::Dynamic, c.framework = Framework::DivergenceRobust;
  } else {
    fail("framework", "unknown framework '" + f + "'");
  }

  if (j.contains("uncertainty")) {
    const auto& u = j["uncertainty"];
    check_keys(u, {"k", "k_exp"}, "uncertainty");
    c.params = UncertaintyParams::make(real(require(u, "k", "uncertainty"), "uncertainty.k"),
                                       real(require(u, "k_exp", "uncertainty"), "uncertainty.k_exp", true));
  }

  const auto& gens = require(j, "generators", "config");
  if (!gens.is_array() || gens.empty()) fail("generators", "expected a nonempty array");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string where = "generators[" + std::to_string(i) + "]";
    check_keys(gens[i], {"transition", "emission", "penalty", "name"}, where);
    Matrix a = matrix(require(gens[i], "transition", where), where + ".transition", c.states, c.states);
    Matrix e = matrix(require(gens[i], "emission", where), where + ".emission", c.states, c.symbols);
    try {
      c.generators.emplace_back(std::move(a), std::move(e));
    } catch (const ValidationError& err) {
      fail(where, err.what());
    }
    c.generator_penalty.push_back(gens[i].contains("penalty") ? real(gens[i]["penalty"], where + ".penalty", true) : 0.0);
    if (c.generator_penalty.back() < 0.0) fail(where + ".penalty", "must be nonnegative");
  }
  if (*std::min_element(c.generator_penalty.begin(), c.generator_penalty.end()) == kInf)
    fail("generators", "every generator penalty is inf");

  c.prior = parse_prior(require(j, "prior", "config"), c.states);
  if (c.prior.kind == PriorShape::Kind::Table) {
    const auto n = SimplexGrid::point_count(c.states, c.grid_resolution);
    if (c.prior.table.size() != n) fail("prior.values", "expected " + std::to_string(n) + " entries for the grid");
  }

  if (j.contains("exact_prior")) {
    const auto& e = j["exact_prior"];
    check_keys(e, {"beliefs", "values"}, "exact_prior");
    const auto& bs = require(e, "beliefs", "exact_prior");
    if (!bs.is_array() || bs.empty()) fail("exact_prior.beliefs", "expected a nonempty array");
    std::vector<std::vector<double>> beliefs;
    for (std::size_t i = 0; i < bs.size(); ++i)
      beliefs.push_back(belief(bs[i], "exact_prior.beliefs[" + std::to_string(i) + "]", c.states));
    auto values = reals(require(e, "values", "exact_prior"), "exact_prior.values", true);
    if (values.size() != beliefs.size()) fail("exact_prior.values", "one value per belief expected");
    c.exact_prior = make_exact_prior(c.states, std::move(beliefs), std::move(values));
  }

  if (j.contains("observations")) {
    const auto& o = j["observations"];
    if (!o.is_array()) fail("observations", "expected an array");
    ObsSequence obs;
    for (std::size_t i = 0; i < o.size(); ++i)
      obs.push_back(ObsSymbol{index(o[i], "observations[" + std::to_string(i) + "]", c.symbols)});
    if (obs.size() != c.horizon) fail("observations", "length must equal the horizon");
    c.observations = std::move(obs);
  }

  if (j.contains("simulation")) {
    const auto& s = j["simulation"];
    check_keys(s, {"generator", "initial_belief", "seed"}, "simulation");
    SimulationSpec sim;
    sim.generator = index(require(s, "generator", "simulation"), "simulation.generator", c.generators.size());
    sim.initial_belief = belief(require(s, "initial_belief", "simulation"), "simulation.initial_belief", c.states);
    sim.seed = count(require(s, "seed", "simulation"), "simulation.seed");
    c.simulation = std::move(sim);
  }

  if (j.contains("filter")) {
    const auto& s = j["filter"];
    check_keys(s, {"generator", "initial_belief"}, "filter");
    FilterSpec fs;
    fs.generator = index(require(s, "generator", "filter"), "filter.generator", c.generators.size());
    fs.initial_belief = belief(require(s, "initial_belief", "filter"), "filter.initial_belief", c.states);
    c.filter = std::move(fs);
  }

  if (j.contains("expectation")) {
    const auto& e = j["expectation"];
    check_keys(e, {"phi"}, "expectation");
    auto phi = reals(require(e, "phi", "expectation"), "expectation.phi");
    if (phi.size() != c.states) fail("expectation.phi", "one value per state expected");
    c.phi = std::move(phi);
  }

  if (j.contains("control")) {
    const auto& k = j["control"];
    check_keys(k,
               {"controls", "generator_penalties", "running_cost", "terminal_cost", "penalize_generators",
                "terminal_rule", "state_cap"},
               "control");
    ControlSpec cs;
    cs.controls = count(require(k, "controls", "control"), "control.controls");
    if (cs.controls == 0) fail("control.controls", "control set is empty");
    cs.generator_penalties = rows(require(k, "generator_penalties", "control"), "control.generator_penalties", true);
    if (cs.generator_penalties.size() != cs.controls) fail("control.generator_penalties", "one row per control expected");
    for (const auto& row : cs.generator_penalties) {
      if (row.size() != c.generators.size()) fail("control.generator_penalties", "one entry per generator expected");
      if (*std::min_element(row.begin(), row.end()) == kInf) fail("control.generator_penalties", "row is all inf");
      for (double v : row)
        if (v < 0.0) fail("control.generator_penalties", "penalties must be nonnegative");
    }
    cs.running_cost = rows(require(k, "running_cost", "control"), "control.running_cost");
    if (cs.running_cost.size() != c.horizon) fail("control.running_cost", "one row per time step expected");
    for (const auto& row : cs.running_cost)
      if (row.size() != cs.controls) fail("control.running_cost", "one entry per control expected");
    cs.terminal_cost = reals(require(k, "terminal_cost", "control"), "control.terminal_cost");
    if (cs.terminal_cost.size() != c.states) fail("control.terminal_cost", "one entry per state expected");
    if (k.contains("penalize_generators")) {
      if (!k["penalize_generators"].is_boolean()) fail("control.penalize_generators", "expected a boolean");
      cs.penalize_generators = k["penalize_generators"].get<bool>();
    }
    if (k.contains("terminal_rule")) {
      const auto& r = k["terminal_rule"];
      if (r == "upper") {
        cs.terminal_rule = TerminalRule::UpperExpectation;
      } else if (r == "printed-infimum") {
        cs.terminal_rule = TerminalRule::PrintedInfimum;
      } else {
        fail("control.terminal_rule", "expected \"upper\" or \"printed-infimum\"");
      }
    }
    if (k.contains("state_cap")) cs.state_cap = count(k["state_cap"], "control.state_cap");
    c.control = std::move(cs);
  }

  if (j.contains("convergence")) {
    const auto& v = j["convergence"];
    check_keys(v, {"resolutions", "exact_support_resolution"}, "convergence");
    ConvergenceSpec cs;
    const auto& r = require(v, "resolutions", "convergence");
    if (!r.is_array() || r.empty()) fail("convergence.resolutions", "expected a nonempty array");
    for (std::size_t i = 0; i < r.size(); ++i) {
      cs.resolutions.push_back(count(r[i], "convergence.resolutions[" + std::to_string(i) + "]"));
      if (cs.resolutions.back() == 0) fail("convergence.resolutions", "resolutions must be positive");
    }
    cs.exact_support_resolution =
        count(require(v, "exact_support_resolution", "convergence"), "convergence.exact_support_resolution");
    if (cs.exact_support_resolution == 0) fail("convergence.exact_support_resolution", "must be positive");
    if (c.prior.kind == PriorShape::Kind::Table) fail("convergence", "needs a prior with a functional form");
    c.convergence = std::move(cs);
  }

  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    check_keys(o, {"phi_samples", "seed", "tolerance"}, "oracle");
    if (o.contains("phi_samples")) c.oracle.phi_samples = count(o["phi_samples"], "oracle.phi_samples");
    if (o.contains("seed")) c.oracle.seed = count(o["seed"], "oracle.seed");
    if (o.contains("tolerance")) c.oracle.tolerance = real(o["tolerance"], "oracle.tolerance");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ControlProblem make_control_problem(const RunConfig& c) {
  if (!c.control) throw ValidationError("config: control needs a 'control' block");
  const ControlSpec& k = *c.control;
  ControlProblem p;
  p.grid = std::make_shared<const SimplexGrid>(c.states, c.grid_resolution);
  p.gens = std::make_shared<const GeneratorGrid>(c.generator_grid());
  p.controls = k.controls;
  p.initial_penalty = c.prior.on_grid(*p.grid);
  p.framework = c.framework;
  p.params = c.params;
  p.horizon = c.horizon;
  p.running_cost = [table = k.running_cost](std::size_t t, std::span<const ObsSymbol>, std::size_t u) {
    return table[t][u];
  };
  p.terminal_cost = constant_in_history(k.terminal_cost);
  p.penalize_generators = k.penalize_generators;
  p.terminal_rule = k.terminal_rule;
  p.state_cap = k.state_cap;
  return p;
}

}  // namespace ufilter
