#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ufilter/control.hpp"
#include "ufilter/expectation.hpp"
#include "ufilter/penalty.hpp"

namespace ufilter::io {

/// Shortest text that parses back to the same double; "inf", "-inf", "nan".
std::string format_double(double v);

/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a of `bytes`, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Symbols joined without separators; "root" for the empty history.
std::string history_string(std::span<const ObsSymbol> history);

/// Header: x_1..x_N, p_1..p_N, value[, src_cell, src_generator].
std::string surface_csv(const PenaltySurface& surface, std::span<const Provenance> provenance = {});

/// Header: x_1..x_N, p_1..p_N, generator, value[, src_cell, src_generator].
std::string extended_surface_csv(const ExtendedPenaltySurface& surface, std::span<const Provenance> provenance = {});

/// Header: p_1..p_N, value.
std::string belief_map_csv(const BeliefPenaltyView& view);

/// Header: t, m_t, infeasible_cells.
std::string step_reports_csv(std::span<const StepReport> reports);

/// One entry per node: history, depth, xi, z, f, surface file.
std::string tree_json(const ObservationTree& tree, std::string_view surface_dir);

/// Policy keyed by history string then kappa-state id.
std::string policy_json(const ControlGraph& graph, const PolicyTree& policy);

/// Values keyed by history string then kappa-state id.
std::string values_json(const ControlGraph& graph, const ValueRecord& values);

/// Header: state, history, cell, p_1..p_N, value.
std::string kappa_states_csv(const ControlGraph& graph);

}  // namespace ufilter::io
