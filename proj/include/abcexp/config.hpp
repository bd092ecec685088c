#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "abcexp/oracle.hpp"
#include "abcexp/prob.hpp"
#include "abcexp/solver.hpp"

// Run configuration: a single human-editable key/value file with nested
// sections. Everything a run needs is captured in the file; there is no
// environment-variable configuration. See README for the schema.

namespace abcexp {

struct ConfigError : std::runtime_error {
    int line;
    std::string field;
    ConfigError(int line_, std::string field_, const std::string& msg)
        : std::runtime_error("config error at line " + std::to_string(line_) +
                             ", field '" + field_ + "': " + msg),
          line(line_),
          field(std::move(field_)) {}
};

enum class RunMode { exponents, oracle, simulate, reproduce_figures };

std::string to_string(RunMode m);

struct RunConfig {
    RunMode mode = RunMode::exponents;
    std::string out = "out";
    std::uint64_t seed = 1;
    int workers = 0;  // 0 = library default

    ChannelModel channel;

    std::vector<double> r1s{0.0}, r2s{0.0}, ts{0.0};
    std::vector<EnsembleKind> kinds{EnsembleKind::iid};
    Terminal terminal = Terminal::Y;

    OracleProblem oracle_problem = OracleProblem::psi_a;
    GridSpec grid;

    int sim_n = 8;
    std::uint64_t sim_trials = 100000;

    void validate() const;  // throws ConfigError
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

}  // namespace abcexp
