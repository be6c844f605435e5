#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kgan/config.hpp"
#include "kgan/evaluation.hpp"

namespace kgan::cli {

/// Runs one subcommand (prepare, kge-train, train, eval, ablate, noise,
/// cases, stats). `args` excludes the program name. Returns the process exit
/// status: 0 success, 2 config error, 3 data error, 4 numeric failure,
/// 5 failed check.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Builds the inputs of `config`, reusing <output_dir>/prepared when its
/// manifest matches the current input files. Progress goes to `log`.
evaluation::ExperimentInputs prepare_inputs(const config::RunConfig& config, std::ostream& log);

int main(int argc, char** argv);

}  // namespace kgan::cli
