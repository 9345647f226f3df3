#pragma once

#include <string>

#include "stmpc/sim.hpp"

namespace stmpc {

/// Full closed-loop trace, one row per time step; event columns are empty
/// between sampling instants.
std::string trace_csv(const SimResult& result);

/// Solver diagnostics stream, one row per sampling instant.
std::string diagnostics_csv(const SimResult& result);

/// Flat key=value digest of a run.
std::string summary_text(const SimResult& result, const SimConfig& config);

/// Gnuplot script plotting every state component of one or two trace CSVs.
std::string state_plot_script(const std::string& robust_csv,
                              const std::string& nominal_csv, int n, int m);

/// Gnuplot stem plot of the chosen intervals, received and lost marked.
std::string interval_plot_script(const std::string& csv, int n, int m);

}  // namespace stmpc
