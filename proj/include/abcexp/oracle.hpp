#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abcexp/functionals.hpp"
#include "abcexp/prob.hpp"

// Brute-force minimization over discretized simplices: the independent
// ground-truth generator for Psi and s0 values on small alphabets. The outer
// variable qhat ranges over rational distributions with denominator k; inner
// conditionals are enumerated per conditioning symbol (per y, or per (u,y)),
// so the search space is a product of small simplices instead of one large
// one. Constraints are checked with slack delta = c/k; the |.|_+ forms are
// evaluated directly with no case split, deliberately a different code path
// from the solver. Alongside the slack value, the strict value (delta = 0)
// is tracked in the same pass: restricted to the lattice it upper-bounds the
// true minimum, so a converged solver must not exceed it.

namespace abcexp {

struct GridSpec {
    int k = 16;             // lattice denominator, >= 4
    double slack_c = 2.0;   // constraint relaxation delta = slack_c / k
    void validate() const;
};

enum class OracleProblem { psi_a, psi_b, psi_c, s0 };

struct OracleOptions {
    std::uint64_t max_evaluations = 3'000'000'000ULL;  // refuse above this
    bool parallel = true;
};

struct OracleResult {
    bool refused = false;
    std::uint64_t evaluations_estimate = 0;
    bool feasible = false;          // some lattice point satisfied constraints
    double value = inf();           // with slack delta
    double value_strict = inf();    // with delta = 0 (upper bound on truth)
    JointDist3 qhat;                // slack witness
    JointDist3 q;                   // composed inner witness (psi problems)
    double s0_at_witness = 0.0;     // psi_c only
};

// For problem == s0, qhat_uy must be provided and the outer enumeration is
// skipped; `value` is then the lattice s0 and `q` the composed Qtilde.
OracleResult oracle_min(OracleProblem problem, const ChannelModel& inst,
                        const RatePoint& rates, const GridSpec& grid,
                        EnsembleKind kind, const OracleOptions& opt = {},
                        const std::optional<std::vector<double>>& qhat_uy =
                            std::nullopt);

// Serial reference implementation; identical results, no OpenMP.
OracleResult oracle_min_serial(OracleProblem problem, const ChannelModel& inst,
                               const RatePoint& rates, const GridSpec& grid,
                               EnsembleKind kind, const OracleOptions& opt = {},
                               const std::optional<std::vector<double>>& qhat_uy =
                                   std::nullopt);

}  // namespace abcexp
