#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abcexp/functionals.hpp"
#include "abcexp/prob.hpp"

// Monte Carlo and exact-enumeration verification of the operational model:
// random superposition codebooks and threshold-test erasure decoders.
// Likelihood arithmetic is done entirely in the log domain (channel powers
// underflow past n of a few dozen); competitor sums use log-sum-exp.
// Reproducibility contract: identical (seed, parameters) give identical
// estimates bit for bit, serial or parallel, via per-trial substreams derived
// from (seed, trial index).

namespace abcexp {

struct SuperpositionCodebook {
    int n = 0;
    std::uint64_t m1 = 1, m2 = 1;       // M1 = ceil(e^{n R1}), M2 = ceil(e^{n R2})
    EnsembleKind kind = EnsembleKind::iid;
    std::uint64_t seed = 0;
    std::vector<uint8_t> clouds;        // m2 x n symbols over U
    std::vector<uint8_t> satellites;    // (m1*m2) x n over X; row m1*m2_index
    int cloud(int m2_idx, int pos) const { return clouds[m2_idx * n + pos]; }
    int sat(int m1_idx, int m2_idx, int pos) const {
        return satellites[(static_cast<size_t>(m1_idx) * m2 + m2_idx) * n + pos];
    }
};

// Smallest blocklength making n * P_UX integral (within 1e-9), or 0 if none
// up to the cap.
int smallest_constant_composition_n(const ChannelModel& inst, int cap = 100000);

SuperpositionCodebook generate_codebook(const ChannelModel& inst, int n,
                                        const RatePoint& rates,
                                        EnsembleKind kind, std::uint64_t seed);

struct PairDecode {
    bool erased = true;
    int m1 = -1, m2 = -1;
};

// Threshold test on the pair: decode (m1,m2) iff its likelihood beats the sum
// of all competitors by e^{nT}; exact ties resolve to erasure. When there is
// no competitor, the lone pair is returned whenever its likelihood is
// positive.
PairDecode decode_pair(const std::vector<uint8_t>& y,
                       const SuperpositionCodebook& cb,
                       const ChannelModel& inst, double t);

// Message decoder j in {1,2}: subcodebook-averaged likelihoods.
// Returns the message index or -1 for erasure.
int decode_message(int j, const std::vector<uint8_t>& y,
                   const SuperpositionCodebook& cb, const ChannelModel& inst,
                   double t);

// Number of candidates whose region claims y (should never exceed 1 for
// T >= 0; used by the disjointness property tests).
int pair_claim_count(const std::vector<uint8_t>& y,
                     const SuperpositionCodebook& cb, const ChannelModel& inst,
                     double t);
int message_claim_count(int j, const std::vector<uint8_t>& y,
                        const SuperpositionCodebook& cb,
                        const ChannelModel& inst, double t);

// Exact ties at the threshold resolve to erasure; each occurrence is counted
// here for inspection.
std::uint64_t tie_log_count();
void reset_tie_log();

struct Interval {
    double lo = 0.0, hi = 0.0;
};

struct ErrorEstimate {
    enum class Mode { monte_carlo, exact_enumeration };
    Mode mode = Mode::monte_carlo;
    std::uint64_t trials = 0;
    double e1t = 0, e1u = 0, e2t = 0, e2u = 0, eYt = 0, eYu = 0;
    Interval e1t_ci, e1u_ci, e2t_ci, e2u_ci, eYt_ci, eYu_ci;  // Wilson 95%
    // exact mode only: worst deviation of correct+erased+undetected from 1,
    // over decoders and sent pairs
    double partition_residual = 0.0;
};

struct SimOptions {
    bool parallel = true;
    std::uint64_t max_exact_outputs = 1'000'000;  // |Y|^n budget for exact mode
};

// Monte Carlo: each trial draws a fresh codebook, a uniform message pair and
// a channel output, then runs all three decoders.
ErrorEstimate estimate_errors(const ChannelModel& inst, int n,
                              const RatePoint& rates, EnsembleKind kind,
                              std::uint64_t trials, std::uint64_t seed,
                              const SimOptions& opt = {});
ErrorEstimate estimate_errors_serial(const ChannelModel& inst, int n,
                                     const RatePoint& rates, EnsembleKind kind,
                                     std::uint64_t trials, std::uint64_t seed,
                                     const SimOptions& opt = {});

// Monte Carlo on one fixed codebook (used to compare against exact mode).
ErrorEstimate estimate_errors_fixed_codebook(const SuperpositionCodebook& cb,
                                             const ChannelModel& inst, double t,
                                             std::uint64_t trials,
                                             std::uint64_t seed,
                                             const SimOptions& opt = {});

// Exact conditional error probabilities for a fixed codebook by summing
// W^n(y|x) over all output sequences; throws std::invalid_argument when the
// |Y|^n budget is exceeded.
ErrorEstimate exact_errors_small(const ChannelModel& inst,
                                 const SuperpositionCodebook& cb, double t,
                                 const SimOptions& opt = {});
ErrorEstimate exact_errors_small_serial(const ChannelModel& inst,
                                        const SuperpositionCodebook& cb,
                                        double t, const SimOptions& opt = {});

}  // namespace abcexp
