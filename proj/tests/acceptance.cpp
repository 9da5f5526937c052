#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ufilter/config.hpp"
#include "ufilter/control.hpp"
#include "ufilter/errors.hpp"
#include "ufilter/expectation.hpp"
#include "ufilter/oracles.hpp"
#include "ufilter/parallel.hpp"
#include "ufilter/penalty.hpp"

using namespace ufilter;
namespace fs = std::filesystem;

namespace {

constexpr double kPenaltyTol = 1e-12;
constexpr double kDrTol = 1e-9;
constexpr double kClosedFormTol = 1e-9;
constexpr double kAxiomTol = 1e-9;
constexpr double kConsistencyTol = 1e-12;
constexpr double kBsdeTol = 1e-9;
constexpr double kControlTol = 1e-9;
constexpr double kCoincidenceTol = 1e-12;
constexpr double kMatchTol = 1e-9;  // locating a belief in the oracle map
constexpr double kLearnedFloor = 1e-9;
constexpr double kPenaltySeconds = 5.0;
constexpr double kControlSeconds = 30.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string config(const std::string& name) { return std::string(UFILTER_CONFIG_DIR) + "/" + name; }

double diff(double a, double b) {
  if (a == b) return 0.0;
  const double d = std::abs(a - b);
  return std::isnan(d) ? kInf : d;
}

const std::pair<Framework, GeneratorScope> kFrameworks[] = {
    {Framework::UncertainPrior, GeneratorScope::Static},
    {Framework::UncertainPrior, GeneratorScope::Dynamic},
    {Framework::DivergenceRobust, GeneratorScope::Static},
    {Framework::DivergenceRobust, GeneratorScope::Dynamic},
};

Outcome oracle_penalties() {
  const auto c = load_config(config("oracle_instance.json"));
  const auto gens = c.generator_grid();
  const auto& y = *c.observations;
  double worst = 0.0;
  std::size_t compared = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (auto [f, scope] : kFrameworks) {
    const auto exact = evolve_exact_tree(*c.exact_prior, gens, y, f, scope);
    for (std::size_t t = 1; t <= y.size(); ++t) {
      const auto map = oracle::oracle_penalty(*c.exact_prior, gens, std::span(y).first(t), f, scope,
                                              oracle::BeliefTracker::exact());
      const auto& k = exact.kappa[t];
      if (map.size() != k.size()) worst = kInf;
      for (std::size_t i = 0; i < k.size(); ++i) {
        const long j = map.find(k.belief(i), kMatchTol);
        worst = std::max(worst, j < 0 ? kInf : diff(k.values[i], map.values[j]));
        ++compared;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kPenaltyTol && secs < kPenaltySeconds,
          "max|diff| " + fmt(worst) + " over " + std::to_string(compared) + " beliefs (tol " + fmt(kPenaltyTol) +
              "), " + fmt(secs) + " s (limit " + fmt(kPenaltySeconds) + ")"};
}

Outcome oracle_dr() {
  const auto c = load_config(config("oracle_instance.json"));
  const auto gens = c.generator_grid();
  const auto& y = *c.observations;
  std::mt19937_64 rng(c.oracle.seed);
  double worst = 0.0;
  std::size_t draws = 0;
  std::vector<ExactEvolveResult> trees;
  for (auto [f, scope] : kFrameworks) trees.push_back(evolve_exact_tree(*c.exact_prior, gens, y, f, scope));
  for (std::size_t n = 0; n < c.oracle.phi_samples; ++n) {
    std::vector<double> phi(c.states);
    for (double& v : phi) v = 2.0 * unit_uniform(rng) - 1.0;
    for (std::size_t i = 0; i < 4; ++i) {
      auto [f, scope] = kFrameworks[i];
      const double engine = dr_expectation(phi, trees[i].kappa.back().view(), c.params).value;
      const double direct = oracle::oracle_dr_direct(phi, *c.exact_prior, gens, y, f, scope, c.params.k,
                                                     c.params.k_exp, oracle::BeliefTracker::exact());
      worst = std::max(worst, diff(engine, direct));
      ++draws;
    }
  }
  return {worst <= kDrTol && c.oracle.phi_samples == 50,
          "max|diff| " + fmt(worst) + " over " + std::to_string(draws) + " (phi, framework) pairs (tol " + fmt(kDrTol) + ")"};
}

Outcome bernoulli_closed_form_check() {
  const auto c = load_config(config("bernoulli_chain.json"));
  const double a = c.generators[0].emission()(0, 0);
  const double b = c.generators[0].emission()(1, 0);
  const double scale = c.prior.scale;
  auto kappa0 = [scale](double ell) { return scale * std::abs(ell); };
  const std::vector<ObsSequence> sequences = {
      {ObsSymbol{0}},
      {ObsSymbol{0}, ObsSymbol{0}, ObsSymbol{1}, ObsSymbol{0}, ObsSymbol{1}, ObsSymbol{1}},
      {ObsSymbol{1}, ObsSymbol{1}, ObsSymbol{0}, ObsSymbol{1}, ObsSymbol{1}, ObsSymbol{1}, ObsSymbol{0}, ObsSymbol{1},
       ObsSymbol{1}, ObsSymbol{0}},
  };
  // symmetric emissions: every observation moves the log-odds by +-log(a/b)
  const double step = std::log(a / b);
  std::vector<std::vector<double>> beliefs;
  std::vector<double> values;
  for (int j = -12; j <= 12; ++j) {
    const double ell = 0.25 + j * step;
    const double p = 1.0 / (1.0 + std::exp(-ell));
    beliefs.push_back({p, 1.0 - p});
    values.push_back(kappa0(ell));
  }
  const auto prior = make_exact_prior(2, beliefs, values);
  const GeneratorGrid gens(c.generators[0]);
  double worst = 0.0;
  for (const auto& y : sequences) {
    const auto cf = oracle::bernoulli_closed_forms(a, b, y, kappa0);
    for (auto f : {Framework::UncertainPrior, Framework::DivergenceRobust}) {
      const auto exact = evolve_exact_tree(prior, gens, y, f, GeneratorScope::Static);
      const auto& k = exact.kappa.back();
      std::vector<double> ells;
      for (std::size_t i = 0; i < k.size(); ++i) ells.push_back(std::log(k.belief(i)[0] / k.belief(i)[1]));
      const auto expected = f == Framework::UncertainPrior ? cf.up(ells) : cf.dr(ells);
      for (std::size_t i = 0; i < k.size(); ++i) worst = std::max(worst, diff(k.values[i], expected[i]));
    }
  }
  return {worst <= kClosedFormTol, "max|diff| " + fmt(worst) + " over 3 sequences, UP and DR (tol " + fmt(kClosedFormTol) + ")"};
}

Outcome axioms() {
  std::mt19937_64 rng(7);
  auto grid = std::make_shared<const SimplexGrid>(3, 8);
  GeneratorGrid gens({Generator(Matrix{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}},
                                Matrix{{0.7, 0.2, 0.1}, {0.3, 0.4, 0.3}, {0.1, 0.2, 0.7}}),
                      Generator(Matrix{{0.6, 0.3, 0.2}, {0.2, 0.5, 0.2}, {0.2, 0.2, 0.6}},
                                Matrix{{0.5, 0.3, 0.2}, {0.2, 0.6, 0.2}, {0.3, 0.3, 0.4}})},
                     {0.0, 0.4});
  const double gammas[] = {0.0, 0.4};
  auto rand_vec = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 4.0 * unit_uniform(rng) - 2.0;
    return v;
  };
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<double> kv(grid->size());
    for (double& v : kv) v = unit_uniform(rng) < 0.25 ? kInf : 2.0 * unit_uniform(rng);
    kv[draw % kv.size()] = 0.0;
    const auto kappa = surface_from_values(kv, grid);
    const auto params = UncertaintyParams::make(0.5 + unit_uniform(rng), draw % 10 == 0 ? kInf : 1.0 + 2.0 * unit_uniform(rng));
    const std::function<double(std::span<const double>)> ops[] = {
        [&](std::span<const double> phi) { return dr_expectation(phi, kappa, params).value; },
        [&](std::span<const double> xi) { return one_step_expectation(xi, kappa, gens, gammas, params); },
    };
    for (const auto& E : ops) {
      auto x = rand_vec(3), z = rand_vec(3);
      const double c = 4.0 * unit_uniform(rng) - 2.0;
      auto hi = x;
      for (std::size_t i = 0; i < 3; ++i) hi[i] = std::max(x[i], z[i]);
      worst = std::max(worst, E(x) - E(hi));
      worst = std::max(worst, std::abs(E(std::vector<double>(3, c)) - c));
      auto shifted = x;
      for (double& v : shifted) v += c;
      worst = std::max(worst, std::abs(E(shifted) - E(x) - c));
      auto mid = x;
      for (std::size_t i = 0; i < 3; ++i) mid[i] = 0.5 * (x[i] + z[i]);
      worst = std::max(worst, E(mid) - 0.5 * (E(x) + E(z)));
    }
  }
  return {worst <= kAxiomTol, "max violation " + fmt(worst) + " over 100 draws x 2 operators (tol " + fmt(kAxiomTol) + ")"};
}

ExpectationSetup oracle_setup() {
  const auto c = load_config(config("oracle_instance.json"));
  ExpectationSetup s;
  s.grid = std::make_shared<const SimplexGrid>(c.states, c.grid_resolution);
  s.gens = std::make_shared<const GeneratorGrid>(c.generator_grid());
  s.prior = c.prior_spec(*s.grid);
  s.params = c.params;
  s.horizon = c.horizon;
  return s;
}

Outcome dynamic_consistency() {
  double worst = 0.0;
  for (auto [f, scope] : kFrameworks) {
    auto s = oracle_setup();
    s.prior.framework = f;
    s.prior.generator_mode = scope;
    const std::vector<double> phi{1.0, -0.5};
    auto tree = backward_expectation(constant_in_history(phi), s);
    const std::size_t T = tree.horizon();
    std::vector<double> xi(tree.size());
    for (std::size_t i = tree.level_begin(T); i < tree.level_end(T); ++i)
      xi[i] = tree[i].extended ? dr_expectation(phi, tree[i].extended->collapse(), s.params).value
                               : dr_expectation(phi, tree[i].kappa, s.params).value;
    for (std::size_t depth = T; depth-- > 0;) {
      for (std::size_t i = tree.level_begin(depth); i < tree.level_end(depth); ++i) {
        std::vector<double> next;
        for (std::size_t y = 0; y < tree.symbols(); ++y) next.push_back(xi[tree.child(i, y)]);
        xi[i] = OneStepExpectation(node_joint_penalty(tree, i, s), *s.gens, s.params)(next).value;
      }
    }
    for (std::size_t i = 0; i < tree.size(); ++i) worst = std::max(worst, diff(xi[i], tree[i].xi));
    for (std::size_t depth = 1; depth < T; ++depth) {
      std::vector<double> level;
      for (std::size_t i = tree.level_begin(depth); i < tree.level_end(depth); ++i) level.push_back(tree[i].xi);
      const auto again = backward_from_level(tree, depth, level, s);
      for (std::size_t i = 0; i < again.size(); ++i) worst = std::max(worst, diff(again[i], tree[i].xi));
    }
  }
  return {worst <= kConsistencyTol, "max|diff| " + fmt(worst) + " over every node, 4 frameworks (tol " + fmt(kConsistencyTol) + ")"};
}

Outcome bsde() {
  std::mt19937_64 rng(99);
  double residual = 0.0, zero_driver = 0.0, shift = 0.0;
  for (auto [f, scope] : kFrameworks) {
    auto s = oracle_setup();
    s.prior.framework = f;
    s.prior.generator_mode = scope;
    auto tree = backward_expectation(constant_in_history({1.0, -0.5}), s);
    residual = std::max(residual, bsde_decompose(tree, s));
    for (std::size_t i = 0; i < tree.level_end(tree.horizon() - 1); ++i) {
      const OneStepExpectation op(node_joint_penalty(tree, i, s), *s.gens, s.params);
      const std::vector<double> zero(tree.symbols(), 0.0);
      zero_driver = std::max(zero_driver, std::abs(op.driver(zero)));
      const double base = op.driver(tree[i].z);
      for (int n = 0; n < 20; ++n) {
        const double c = 10.0 * unit_uniform(rng) - 5.0;
        auto z = tree[i].z;
        for (double& v : z) v += c;
        shift = std::max(shift, diff(op.driver(z), base));
      }
    }
  }
  return {residual <= kBsdeTol && zero_driver == 0.0 && shift <= kBsdeTol,
          "reconstruction " + fmt(residual) + ", |f(0)| " + fmt(zero_driver) + ", shift " + fmt(shift) + " (tol " +
              fmt(kBsdeTol) + ", f(0) exact)"};
}

Outcome control_dp() {
  const auto problem = make_control_problem(load_config(config("control_instance.json")));
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = solve(problem);
  const double brute = brute_force(problem, sol.graph);
  const double dp = dp_identity_residual(problem, sol);
  const double secs = seconds_since(t0);
  std::size_t decision_nodes = 0;
  for (std::size_t n = 0; n < sol.graph.nodes.size(); ++n) decision_nodes += sol.graph.level_of(n) < sol.graph.depth();
  const double gap = diff(brute, sol.root_value());
  return {gap <= kControlTol && dp <= kControlTol && secs < kControlSeconds && problem.controls == 2 &&
              decision_nodes == 7,
          "solve " + fmt(sol.root_value()) + " vs brute force over 2^" + std::to_string(decision_nodes) + " policies " +
              fmt(brute) + ", |diff| " + fmt(gap) + ", DP residual " + fmt(dp) + " (tol " + fmt(kControlTol) + "), " +
              fmt(secs) + " s"};
}

Outcome up_dr_coincidence() {
  auto grid = std::make_shared<const SimplexGrid>(3, 12);
  GeneratorGrid gens({Generator(Matrix{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}}, Matrix(3, 2, 0.5)),
                      Generator(Matrix{{0.5, 0.3, 0.2}, {0.3, 0.4, 0.2}, {0.2, 0.3, 0.6}}, Matrix(3, 2, 0.5))},
                     {0.0, 0.6});
  std::vector<double> pi(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const auto p = grid->belief(i);
    pi[i] = (p[0] - 0.2) * (p[0] - 0.2) + 2.0 * (p[2] - 0.5) * (p[2] - 0.5);
  }
  ObsSequence y;
  for (std::size_t t = 0; t < 8; ++t) y.push_back(ObsSymbol{t % 3 == 0 ? 1u : 0u});
  const auto up = evolve({pi, GeneratorScope::Dynamic, Framework::UncertainPrior}, gens, y, grid);
  const auto dr = evolve({pi, GeneratorScope::Dynamic, Framework::DivergenceRobust}, gens, y, grid);
  double worst = 0.0;
  for (std::size_t t = 0; t < up.kappa.size(); ++t)
    for (std::size_t i = 0; i < grid->size(); ++i) worst = std::max(worst, diff(up.kappa[t].values[i], dr.kappa[t].values[i]));
  return {worst <= kCoincidenceTol, "max|diff| " + fmt(worst) + " over " + std::to_string(y.size()) + " steps (tol " + fmt(kCoincidenceTol) + ")"};
}

Outcome learning_dichotomy() {
  const GeneratorGrid gens(Generator(Matrix::identity(2), Matrix{{0.8, 0.2}, {0.3, 0.7}}));
  auto grid = std::make_shared<const SimplexGrid>(2, 40);
  ObsSequence y;
  for (std::size_t t = 0; t < 10; ++t) y.push_back(ObsSymbol{(t * 7) % 3 == 0 ? 0u : 1u});
  std::vector<std::vector<double>> support;
  for (std::size_t i = 0; i < grid->size(); ++i) support.emplace_back(grid->belief(i).begin(), grid->belief(i).end());
  const auto exact_prior = make_exact_prior(2, support, std::vector<double>(support.size(), 0.0));

  double up_max = 0.0;
  for (auto scope : {GeneratorScope::Static, GeneratorScope::Dynamic}) {
    const auto g = evolve({std::vector<double>(grid->size(), 0.0), scope, Framework::UncertainPrior}, gens, y, grid);
    for (const auto& k : g.kappa)
      for (double v : k.values)
        if (v != kInf) up_max = std::max(up_max, v);
    const auto e = evolve_exact_tree(exact_prior, gens, y, Framework::UncertainPrior, scope);
    for (const auto& k : e.kappa)
      for (double v : k.values) up_max = std::max(up_max, v);
  }
  double dr_min = kInf;
  const auto g = evolve({std::vector<double>(grid->size(), 0.0), GeneratorScope::Static, Framework::DivergenceRobust}, gens, y, grid);
  const auto e = evolve_exact_tree(exact_prior, gens, y, Framework::DivergenceRobust, GeneratorScope::Static);
  for (std::size_t t = 1; t <= y.size(); ++t) {
    double gm = 0.0, em = 0.0;
    for (double v : g.kappa[t].values)
      if (v != kInf) gm = std::max(gm, v);
    for (double v : e.kappa[t].values) em = std::max(em, v);
    dr_min = std::min({dr_min, gm, em});
  }
  return {up_max == 0.0 && dr_min > kLearnedFloor,
          "UP max kappa_t " + fmt(up_max) + " for t <= 10; StaticDR min_t max_p kappa_t " + fmt(dr_min) + " > " + fmt(kLearnedFloor) + " (grid and exact)"};
}

Outcome grid_convergence_check(const std::string& cli, const fs::path& work) {
  const auto c = load_config(config("convergence_instance.json"));
  const SimplexGrid support(c.states, c.convergence->exact_support_resolution);
  const auto f = c.prior.function();
  std::vector<std::vector<double>> beliefs;
  std::vector<double> values;
  for (std::size_t i = 0; i < support.size(); ++i) {
    beliefs.emplace_back(support.belief(i).begin(), support.belief(i).end());
    values.push_back(f(support.belief(i)));
  }
  const auto rep = grid_convergence(f, make_exact_prior(c.states, beliefs, values), c.generator_grid(),
                                    *c.observations, c.framework, c.convergence->resolutions);
  std::string errs;
  for (std::size_t i = 0; i < rep.sup_errors.size(); ++i)
    errs += (i ? ", " : "") + std::string("m=") + std::to_string(rep.resolutions[i]) + ": " + fmt(rep.sup_errors[i]);

  const fs::path out = work / "convergence";
  const std::string cmd = "\"" + cli + "\" penalty-evolve --config \"" + config("convergence_instance.json") +
                          "\" --out \"" + out.string() + "\" > /dev/null 2>&1";
  bool reported = false;
  if (std::system(cmd.c_str()) == 0) {
    std::ifstream in(out / "manifest.json");
    const auto manifest = nlohmann::json::parse(in, nullptr, false);
    reported = !manifest.is_discarded() && manifest.contains("grid_convergence") &&
               manifest["grid_convergence"].contains("final_error") &&
               manifest["grid_convergence"]["final_error"].is_number() &&
               manifest["grid_convergence"]["final_error"].get<double>() == rep.sup_errors.back();
  }
  const bool expected_grid = rep.resolutions == std::vector<std::size_t>{10, 20, 40};
  return {rep.monotone && expected_grid && reported,
          "sup errors " + errs + (rep.monotone ? ", non-increasing" : ", NOT monotone") +
              (reported ? ", final error in manifest" : ", final error missing from manifest")};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string comparable(const fs::path& p) {
  if (p.filename() != "manifest.json") return read_bytes(p);
  auto j = nlohmann::ordered_json::parse(read_bytes(p));
  j.erase("timestamp");
  j.erase("wall_time_seconds");
  return j.dump();
}

std::vector<fs::path> listing(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  const std::pair<const char*, const char*> runs[] = {
      {"simulate", "oracle_instance.json"},       {"filter", "oracle_instance.json"},
      {"penalty-evolve", "oracle_instance.json"}, {"penalty-evolve", "convergence_instance.json"},
      {"expect", "oracle_instance.json"},         {"control", "control_instance.json"},
      {"oracle-check", "oracle_instance.json"},
  };
  std::size_t files = 0;
  std::string failures;
  for (std::size_t r = 0; r < std::size(runs); ++r) {
    const auto [sub, cfg] = runs[r];
    fs::path dirs[2];
    bool ok = true;
    for (int k = 0; k < 2; ++k) {
      dirs[k] = work / ("det_" + std::to_string(r) + (k ? "_t8" : "_t1"));
      const std::string cmd = "\"" + cli + "\" " + sub + " --config \"" + config(cfg) + "\" --out \"" +
                              dirs[k].string() + "\" --threads " + (k ? "8" : "1") + " > /dev/null 2>&1";
      ok = ok && std::system(cmd.c_str()) == 0;
    }
    if (ok) {
      const auto a = listing(dirs[0]), b = listing(dirs[1]);
      ok = a == b && !a.empty();
      for (std::size_t i = 0; ok && i < a.size(); ++i) ok = comparable(dirs[0] / a[i]) == comparable(dirs[1] / b[i]);
      files += a.size();
    }
    if (!ok) failures += std::string(failures.empty() ? "" : ", ") + sub + "(" + cfg + ")";
  }
  return {failures.empty(), failures.empty() ? std::to_string(std::size(runs)) + " runs, " + std::to_string(files) +
                                                   " artifacts identical at 1 and 8 threads (manifest timestamp and wall time excluded)"
                                             : "differing or failing runs: " + failures};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : UFILTER_CLI_PATH;
  const fs::path work = fs::temp_directory_path() / "ufilter_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"oracle equivalence, penalties", oracle_penalties},
      {"oracle equivalence, DR expectation", oracle_dr},
      {"Bernoulli chain closed forms", bernoulli_closed_form_check},
      {"nonlinear expectation axioms", axioms},
      {"dynamic consistency", dynamic_consistency},
      {"BSDE reconstruction", bsde},
      {"control dynamic programming", control_dp},
      {"UP/DR coincidence", up_dr_coincidence},
      {"learning dichotomy", learning_dichotomy},
      {"grid convergence", [&] { return grid_convergence_check(cli, work); }},
      {"determinism", [&] { return determinism(cli, work); }},
  };
  int failed = 0;
  int id = 0;
  for (const auto& [name, run] : criteria) {
    ++id;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << std::endl;
  }
  std::cout << (id - failed) << " of " << id << " criteria passed" << std::endl;
  fs::remove_all(work);
  return failed == 0 ? 0 : 1;
}
