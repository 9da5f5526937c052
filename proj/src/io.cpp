#include "ufilter/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ufilter/errors.hpp"

namespace ufilter::io {

using nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string history_string(std::span<const ObsSymbol> history) {
  if (history.empty()) return "root";
  std::string s;
  for (const auto& y : history) {
    if (!s.empty() && y.index > 9) s += '.';
    s += std::to_string(y.index);
  }
  return s;
}

namespace {

void header_coords(std::ostringstream& out, std::size_t n) {
  for (std::size_t i = 1; i <= n; ++i) out << "x_" << i << ',';
  for (std::size_t i = 1; i <= n; ++i) out << "p_" << i << ',';
}

void row_coords(std::ostringstream& out, const SimplexGrid& grid, std::size_t cell) {
  for (int x : grid.coords(cell)) out << x << ',';
  for (double p : grid.belief(cell)) out << format_double(p) << ',';
}

ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

ordered_json numbers(std::span<const double> v) {
  auto arr = ordered_json::array();
  for (double x : v) arr.push_back(number(x));
  return arr;
}

}  // namespace

std::string surface_csv(const PenaltySurface& surface, std::span<const Provenance> provenance) {
  const SimplexGrid& grid = *surface.grid;
  std::ostringstream out;
  header_coords(out, grid.dimension());
  out << "value";
  if (!provenance.empty()) out << ",src_cell,src_generator";
  out << '\n';
  for (std::size_t c = 0; c < grid.size(); ++c) {
    row_coords(out, grid, c);
    out << format_double(surface.values[c]);
    if (!provenance.empty()) out << ',' << provenance[c].source << ',' << provenance[c].generator;
    out << '\n';
  }
  return out.str();
}

std::string extended_surface_csv(const ExtendedPenaltySurface& surface, std::span<const Provenance> provenance) {
  const SimplexGrid& grid = *surface.grid;
  std::ostringstream out;
  header_coords(out, grid.dimension());
  out << "generator,value";
  if (!provenance.empty()) out << ",src_cell,src_generator";
  out << '\n';
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (std::size_t g = 0; g < surface.generators; ++g) {
      row_coords(out, grid, c);
      out << g << ',' << format_double(surface.at(c, g));
      if (!provenance.empty()) {
        const auto& p = provenance[c * surface.generators + g];
        out << ',' << p.source << ',' << p.generator;
      }
      out << '\n';
    }
  }
  return out.str();
}

std::string belief_map_csv(const BeliefPenaltyView& view) {
  std::ostringstream out;
  for (std::size_t i = 1; i <= view.dimension; ++i) out << "p_" << i << ',';
  out << "value\n";
  for (std::size_t i = 0; i < view.size(); ++i) {
    for (double p : view.belief(i)) out << format_double(p) << ',';
    out << format_double(view.values[i]) << '\n';
  }
  return out.str();
}

std::string step_reports_csv(std::span<const StepReport> reports) {
  std::ostringstream out;
  out << "t,m_t,infeasible_cells\n";
  for (std::size_t t = 0; t < reports.size(); ++t)
    out << t + 1 << ',' << format_double(reports[t].m_t) << ',' << reports[t].infeasible_cells << '\n';
  return out.str();
}

std::string tree_json(const ObservationTree& tree, std::string_view surface_dir) {
  ordered_json nodes = ordered_json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& n = tree[i];
    const auto h = history_string(n.history);
    ordered_json j;
    j["history"] = h;
    j["depth"] = n.history.size();
    j["xi"] = number(n.xi);
    if (!n.z.empty()) {
      j["z"] = numbers(n.z);
      j["f"] = number(n.driver);
    }
    j["m_t"] = number(n.m_t);
    j["surface"] = std::string(surface_dir) + "/kappa_" + h + ".csv";
    nodes.push_back(std::move(j));
  }
  ordered_json doc;
  doc["symbols"] = tree.symbols();
  doc["horizon"] = tree.horizon();
  doc["root_value"] = number(tree[0].xi);
  doc["nodes"] = std::move(nodes);
  return doc.dump(2) + "\n";
}

std::string policy_json(const ControlGraph& graph, const PolicyTree& policy) {
  ordered_json doc = ordered_json::object();
  for (const auto& node : graph.nodes) {
    ordered_json per_state = ordered_json::object();
    for (std::size_t s : node.states)
      if (policy.control[s] >= 0) per_state[std::to_string(s)] = policy.control[s];
    if (!per_state.empty()) doc[history_string(node.history)] = std::move(per_state);
  }
  return doc.dump(2) + "\n";
}

std::string values_json(const ControlGraph& graph, const ValueRecord& values) {
  ordered_json doc = ordered_json::object();
  for (const auto& node : graph.nodes) {
    ordered_json per_state = ordered_json::object();
    for (std::size_t s : node.states) {
      const auto& v = values.states[s];
      if (std::isnan(v.value)) continue;
      ordered_json j;
      j["value"] = number(v.value);
      if (v.control >= 0) j["control"] = v.control;
      if (!v.q_values.empty()) j["q"] = numbers(v.q_values);
      per_state[std::to_string(s)] = std::move(j);
    }
    doc[history_string(node.history)] = std::move(per_state);
  }
  return doc.dump(2) + "\n";
}

std::string kappa_states_csv(const ControlGraph& graph) {
  std::ostringstream out;
  if (graph.states.empty()) return "state,history,cell,value\n";
  const SimplexGrid& grid = *graph.states.front().kappa.grid;
  out << "state,history,cell,";
  for (std::size_t i = 1; i <= grid.dimension(); ++i) out << "p_" << i << ',';
  out << "value\n";
  for (std::size_t s = 0; s < graph.states.size(); ++s) {
    const auto& st = graph.states[s];
    const auto h = history_string(graph.nodes[st.node].history);
    for (std::size_t c = 0; c < grid.size(); ++c) {
      out << s << ',' << h << ',' << c << ',';
      for (double p : grid.belief(c)) out << format_double(p) << ',';
      out << format_double(st.kappa.values[c]) << '\n';
    }
  }
  return out.str();
}

}  // namespace ufilter::io
