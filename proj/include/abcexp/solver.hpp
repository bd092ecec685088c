#pragma once

#include <string>
#include <vector>

#include "abcexp/convex.hpp"
#include "abcexp/functionals.hpp"
#include "abcexp/prob.hpp"

// Evaluates Psi_a, Psi_b, Psi_c (and their constant-composition variants) via
// the convex decomposition, and assembles the six exponents of the two main
// theorems. Each subproblem is posed jointly in (qhat_UXY, Q_UXY) with the
// linear coupling Q_Y = qhat_Y (Q_UY = qhat_UY for Psi_b), which makes
// objective and constraints jointly convex case by case. The clamp |.|_+
// inside constraint right-hand sides is handled by case enumeration, never by
// smoothing. Psi_c's outer problem is nonconvex through s0(qhat_UY); it runs
// multi-start descent with the s0 constraint re-linearized per iterate.

namespace abcexp {

struct ExponentQuery {
    ChannelModel inst;
    RatePoint rates;
    EnsembleKind kind = EnsembleKind::iid;
    Terminal terminal = Terminal::Y;
};

struct SubproblemInfo {
    std::string name;
    double value = inf();          // +inf when infeasible
    bool feasible = false;
    bool counted = false;          // enters the min per the activity rule
    double beta_at_witness = 0.0;
    double gamma_at_witness = 0.0;
    SolveStatus status = SolveStatus::numerical_trouble;
    int iterations = 0;
    double kkt_residual = 0.0;
    double max_violation = 0.0;
    JointDist3 qhat, q;            // witnesses (valid when feasible)
};

struct PsiValue {
    double value = inf();
    std::string active;            // branch achieving the reported value
    bool reliable = false;
    std::vector<SubproblemInfo> branches;
};

struct SolverOptions {
    SolveOptions convex;
    double activity_tol = 1e-9;    // sign tolerance for branch activity
    int psi_c_starts = 32;
    int psi_c_grid_k = 8;
    int psi_c_max_rounds = 16;
    double psi_c_skip_margin = 0.1;  // skip descent from clearly bad seeds
};

struct ExponentReport {
    RatePoint rates;
    EnsembleKind kind = EnsembleKind::iid;
    Terminal terminal = Terminal::Y;
    PsiValue psi_a, psi_b, psi_c;
    double E1t = 0, E1u = 0, EYt = 0, EYu = 0, E2t = 0, E2u = 0;
    std::string e2_branch;         // "psi_a" or "psi_c"; ties break to psi_a
    bool reliable = false;
    std::string status;            // "ok" or a short diagnostic
};

PsiValue solve_psi_a(const ChannelModel& inst, double r1, double r2, double t,
                     EnsembleKind kind, const SolverOptions& opt = {});
PsiValue solve_psi_b(const ChannelModel& inst, double r1, double t,
                     EnsembleKind kind, const SolverOptions& opt = {});
PsiValue solve_psi_c(const ChannelModel& inst, double r1, double r2, double t,
                     EnsembleKind kind, const SolverOptions& opt = {});

ExponentReport compute_exponents(const ExponentQuery& query,
                                 const SolverOptions& opt = {});

}  // namespace abcexp
