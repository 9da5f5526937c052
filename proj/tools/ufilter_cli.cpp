#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ufilter/config.hpp"
#include "ufilter/control.hpp"
#include "ufilter/errors.hpp"
#include "ufilter/expectation.hpp"
#include "ufilter/io.hpp"
#include "ufilter/oracles.hpp"
#include "ufilter/parallel.hpp"
#include "ufilter/penalty.hpp"

using namespace ufilter;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kMismatch = 1, kValidation = 2, kInfeasible = 3, kCap = 4 };

struct Run {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<double> m_t;
  ordered_json extra = ordered_json::object();
  int exit_code = kOk;

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return io::format_double(v);
}

ObsSequence observations(const RunConfig& c) {
  if (c.observations) return *c.observations;
  if (c.simulation) {
    std::vector<Generator> seq(c.horizon, c.generators[c.simulation->generator]);
    return simulate_path(seq, FilterState(c.simulation->initial_belief), c.horizon, c.simulation->seed).observed;
  }
  throw ValidationError("config: needs 'observations' or a 'simulation' block");
}

Run run_simulate(const RunConfig& c) {
  if (!c.simulation) throw ValidationError("config: simulate needs a 'simulation' block");
  std::vector<Generator> seq(c.horizon, c.generators[c.simulation->generator]);
  const Path path = simulate_path(seq, FilterState(c.simulation->initial_belief), c.horizon, c.simulation->seed);
  std::ostringstream out;
  out << "t,hidden,observed\n";
  for (std::size_t t = 0; t < path.hidden.size(); ++t) {
    out << t << ',' << path.hidden[t] << ',';
    if (t > 0) out << path.observed[t - 1].index;
    out << '\n';
  }
  Run r;
  r.add("path.csv", out.str());
  r.extra["seed"] = path.seed;
  return r;
}

Run run_filter(const RunConfig& c) {
  if (!c.filter) throw ValidationError("config: filter needs a 'filter' block");
  const auto obs = observations(c);
  const Generator& gen = c.generators[c.filter->generator];
  FilterState p(c.filter->initial_belief);
  std::ostringstream out;
  out << "t,observed";
  for (std::size_t i = 1; i <= c.states; ++i) out << ",p_" << i;
  out << '\n';
  auto row = [&](std::size_t t, const FilterState& q, std::string y) {
    out << t << ',' << y;
    for (double v : q.probs()) out << ',' << io::format_double(v);
    out << '\n';
  };
  row(0, p, "");
  for (std::size_t t = 1; t <= obs.size(); ++t) {
    p = filter_step(p, gen, obs[t - 1]);
    row(t, p, std::to_string(obs[t - 1].index));
  }
  Run r;
  r.add("filter.csv", out.str());
  return r;
}

Run run_penalty_evolve(const RunConfig& c) {
  const auto obs = observations(c);
  const auto grid = std::make_shared<const SimplexGrid>(c.states, c.grid_resolution);
  const GeneratorGrid gens = c.generator_grid();
  const auto result = evolve(c.prior_spec(*grid), gens, obs, grid);
  Run r;
  for (std::size_t t = 0; t < result.kappa.size(); ++t) {
    const bool dyn = c.scope == GeneratorScope::Dynamic;
    std::span<const Provenance> prov;
    if (dyn && t > 0) prov = result.reports[t - 1].argmin_provenance;
    r.add("kappa_t" + std::to_string(t) + ".csv", io::surface_csv(result.kappa[t], prov));
    if (!dyn) {
      std::span<const Provenance> kprov;
      if (t > 0) kprov = result.reports[t - 1].argmin_provenance;
      r.add("K_t" + std::to_string(t) + ".csv", io::extended_surface_csv(result.extended[t], kprov));
    }
  }
  r.add("reports.csv", io::step_reports_csv(result.reports));
  for (const auto& rep : result.reports) r.m_t.push_back(rep.m_t);

  if (c.exact_prior) {
    const auto exact = evolve_exact_tree(*c.exact_prior, gens, obs, c.framework, c.scope);
    for (std::size_t t = 0; t < exact.kappa.size(); ++t)
      r.add("exact_kappa_t" + std::to_string(t) + ".csv", io::belief_map_csv(exact.kappa[t].view()));
  }
  if (c.convergence) {
    const SimplexGrid support(c.states, c.convergence->exact_support_resolution);
    const auto f = c.prior.function();
    std::vector<std::vector<double>> beliefs;
    std::vector<double> values;
    for (std::size_t i = 0; i < support.size(); ++i) {
      const auto b = support.belief(i);
      beliefs.emplace_back(b.begin(), b.end());
      values.push_back(f(b));
    }
    const auto exact_prior = make_exact_prior(c.states, std::move(beliefs), std::move(values));
    const auto rep = grid_convergence(f, exact_prior, gens, obs, c.framework, c.convergence->resolutions);
    std::ostringstream out;
    out << "resolution,sup_error,holes\n";
    ordered_json errs = ordered_json::array();
    for (std::size_t i = 0; i < rep.resolutions.size(); ++i) {
      out << rep.resolutions[i] << ',' << io::format_double(rep.sup_errors[i]) << ',' << rep.holes[i] << '\n';
      errs.push_back(number(rep.sup_errors[i]));
    }
    r.add("grid_convergence.csv", out.str());
    r.extra["grid_convergence"] = {{"resolutions", rep.resolutions},
                                   {"sup_errors", errs},
                                   {"holes", rep.holes},
                                   {"monotone", rep.monotone},
                                   {"final_error", number(rep.sup_errors.back())}};
  }
  return r;
}

Run run_expect(const RunConfig& c) {
  if (!c.phi) throw ValidationError("config: expect needs an 'expectation' block");
  ExpectationSetup setup;
  setup.grid = std::make_shared<const SimplexGrid>(c.states, c.grid_resolution);
  setup.gens = std::make_shared<const GeneratorGrid>(c.generator_grid());
  setup.prior = c.prior_spec(*setup.grid);
  setup.params = c.params;
  setup.horizon = c.horizon;
  auto tree = backward_expectation(constant_in_history(*c.phi), setup);
  const double residual = bsde_decompose(tree, setup);
  Run r;
  r.add("tree.json", io::tree_json(tree, "surfaces"));
  for (std::size_t i = 0; i < tree.size(); ++i)
    r.add("surfaces/kappa_" + io::history_string(tree[i].history) + ".csv", io::surface_csv(tree[i].kappa));
  r.extra["root_value"] = number(tree[0].xi);
  r.extra["bsde_residual"] = number(residual);
  return r;
}

Run run_control(const RunConfig& c) {
  if (!c.control) throw ValidationError("config: control needs a 'control' block");
  if (c.scope != GeneratorScope::Dynamic) throw ValidationError("control: only dynamic generator frameworks are supported");
  const ControlProblem problem = make_control_problem(c);
  const auto sol = solve(problem);
  Run r;
  r.add("policy.json", io::policy_json(sol.graph, sol.policy));
  r.add("values.json", io::values_json(sol.graph, sol.values));
  r.add("kappa_states.csv", io::kappa_states_csv(sol.graph));
  r.extra["root_value"] = number(sol.root_value());
  r.extra["kappa_states"] = sol.graph.states.size();
  return r;
}

Run run_oracle_check(const RunConfig& c) {
  if (!c.exact_prior) throw ValidationError("config: oracle-check needs an 'exact_prior' block");
  const auto obs = observations(c);
  const GeneratorGrid gens = c.generator_grid();
  const auto tracker = oracle::BeliefTracker::exact();
  std::vector<oracle::OracleReport> reports;
  double worst = 0.0;
  const std::pair<std::string, std::pair<Framework, GeneratorScope>> frameworks[] = {
      {"static-up", {Framework::UncertainPrior, GeneratorScope::Static}},
      {"dynamic-up", {Framework::UncertainPrior, GeneratorScope::Dynamic}},
      {"static-dr", {Framework::DivergenceRobust, GeneratorScope::Static}},
      {"dynamic-dr", {Framework::DivergenceRobust, GeneratorScope::Dynamic}},
  };
  Run r;
  for (const auto& [name, fs] : frameworks) {
    const auto engine = evolve_exact_tree(*c.exact_prior, gens, obs, fs.first, fs.second);
    const auto& kappa = engine.kappa.back();
    const auto ref = oracle::oracle_penalty(*c.exact_prior, gens, obs, fs.first, fs.second, tracker);
    if (fs.first == c.framework && fs.second == c.scope) r.m_t = engine.m;
    std::vector<char> matched(ref.size(), 0);
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      if (kappa.values[i] == kInf) continue;
      const long j = ref.find(kappa.belief(i), 1e-9);
      const double ov = j < 0 ? kInf : ref.values[static_cast<std::size_t>(j)];
      if (j >= 0) matched[static_cast<std::size_t>(j)] = 1;
      std::ostringstream inst;
      inst << name << " belief";
      for (double p : kappa.belief(i)) inst << ' ' << io::format_double(p);
      reports.push_back(oracle::make_report("penalty", ov, kappa.values[i], inst.str()));
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (matched[j]) continue;
      std::ostringstream inst;
      inst << name << " belief";
      for (double p : ref.belief(j)) inst << ' ' << io::format_double(p);
      reports.push_back(oracle::make_report("penalty", ref.values[j], kInf, inst.str()));
    }
  }
  const auto engine = evolve_exact_tree(*c.exact_prior, gens, obs, c.framework, c.scope);
  std::mt19937_64 rng(c.oracle.seed);
  for (std::size_t s = 0; s < c.oracle.phi_samples; ++s) {
    std::vector<double> phi(c.states);
    for (double& v : phi) v = 2.0 * unit_uniform(rng) - 1.0;
    const double ev = dr_expectation(phi, engine.kappa.back().view(), c.params).value;
    const double ov = oracle::oracle_dr_direct(phi, *c.exact_prior, gens, obs, c.framework, c.scope, c.params.k,
                                               c.params.k_exp, tracker);
    reports.push_back(oracle::make_report("dr_expectation", ov, ev, "phi sample " + std::to_string(s)));
  }
  for (const auto& rep : reports) worst = std::max(worst, rep.abs_diff);
  std::ostringstream csv;
  oracle::write_reports_csv(csv, reports);
  r.add("oracle_report.csv", csv.str());
  r.extra["max_abs_diff"] = number(worst);
  r.extra["tolerance"] = c.oracle.tolerance;
  if (!(worst <= c.oracle.tolerance)) r.exit_code = kMismatch;
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust filtering experiments: penalties, nonlinear expectations and control on finite HMMs"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  unsigned threads = 0;
  std::size_t resolution = 0;
  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Sample a hidden/observed path"},
      {"filter", "Run the Bayes filter over the observations"},
      {"penalty-evolve", "Propagate the penalty surface over the observations"},
      {"expect", "Backward nonlinear expectation over all observation histories"},
      {"control", "Solve the robust control problem"},
      {"oracle-check", "Compare engines with brute-force oracles"},
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON configuration")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--threads", threads, "Worker threads (0: UFILTER_THREADS or hardware)");
    sub->add_option("--grid-resolution", resolution, "Override the simplex grid resolution");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto start = std::chrono::steady_clock::now();
    const std::string text = read_file(config_path);
    RunConfig config = parse_config(text);
    if (resolution > 0) {
      config.grid_resolution = resolution;
      if (config.prior.kind == PriorShape::Kind::Table)
        config.prior.on_grid(SimplexGrid(config.states, config.grid_resolution));
    }
    set_thread_count(threads);

    Run run;
    if (command == "simulate") run = run_simulate(config);
    else if (command == "filter") run = run_filter(config);
    else if (command == "penalty-evolve") run = run_penalty_evolve(config);
    else if (command == "expect") run = run_expect(config);
    else if (command == "control") run = run_control(config);
    else run = run_oracle_check(config);

    const std::filesystem::path out(out_dir);
    ordered_json files = ordered_json::array();
    for (const auto& [name, content] : run.files) {
      io::write_atomic(out / name, content);
      files.push_back(name);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ordered_json manifest;
    manifest["subcommand"] = command;
    manifest["version"] = kVersion;
    manifest["config"] = config_path;
    manifest["config_hash"] = io::fnv1a_hex(text);
    manifest["grid_resolution"] = config.grid_resolution;
    ordered_json mt = ordered_json::array();
    for (double m : run.m_t) mt.push_back(number(m));
    manifest["m_t"] = std::move(mt);
    for (auto& [k, v] : run.extra.items()) manifest[k] = v;
    manifest["files"] = std::move(files);
    manifest["wall_time_seconds"] = wall;
    manifest["timestamp"] = utc_timestamp();
    io::write_atomic(out / "manifest.json", manifest.dump(2) + "\n");
    if (run.exit_code == kMismatch) std::cerr << "oracle mismatch above tolerance\n";
    return run.exit_code;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const DegenerateObservation& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const CapExceeded& e) {
    std::cerr << "cap exceeded: " << e.what() << '\n';
    return kCap;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
}
