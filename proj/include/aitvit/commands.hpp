#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include "aitvit/run_config.hpp"

namespace aitvit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int exit_code_for(const std::exception& e);

const std::vector<std::string>& command_names();

// Each command writes its artifacts under the configured paths and logs
// progress to `out`. Errors propagate as exceptions.
void gen_data(const RunConfig& rc, std::ostream& out);
void pretrain(const RunConfig& rc, std::ostream& out);
void advtrain(const RunConfig& rc, std::ostream& out);
void attack(const RunConfig& rc, std::ostream& out);
void evaluate(const RunConfig& rc, std::ostream& out);
void viz(const RunConfig& rc, std::ostream& out);

// Dispatches by name and maps exceptions onto exit codes, reporting the
// message on `err`.
int run(const std::string& command, const RunConfig& rc, std::ostream& out, std::ostream& err);

struct Series {
  std::string name;
  std::vector<double> y;
};

// Minimal SVG line plot of one or more series over shared x values.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::vector<double>& x, const std::vector<Series>& series);

}  // namespace aitvit::cli
