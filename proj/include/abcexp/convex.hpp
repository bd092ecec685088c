#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abcexp/prob.hpp"

// First-order solver for convex programs over products of probability
// simplices. Objectives and constraints are sums of KL-type terms and linear
// terms, which is all the exponent subproblems need. Inequality and equality
// constraints are handled by an augmented Lagrangian; the inner minimization
// is entropic mirror descent with multiplicative updates and a backtracking
// step size. Exact marginal pins (e.g. Q_UX = P_UX) are enforced by
// proportional rescaling after every update, so their residual stays at
// floating-point level.

namespace abcexp {

enum class SolveStatus { ok, max_iterations, infeasible, numerical_trouble };

std::string to_string(SolveStatus s);

struct SimplexVar {
    int size = 0;
    std::vector<uint8_t> mask;   // cells allowed to carry mass (empty = all)
    std::vector<double> init;    // starting point (empty = uniform on mask)
};

// w * D(z_v || ref), ref fixed. Off-mask ref cells are ignored.
struct KlToFixedTerm {
    int var = 0;
    double weight = 1.0;
    std::vector<double> ref;
};

// D(Q_{X|UY} || P_{X|U} | Q_UY) of a joint block z_v shaped like Alphabets.
// Convex in the joint (relative entropy against a linear image of z).
struct BetaTerm {
    int var = 0;
    Alphabets shape;
    std::vector<double> log_p_x_given_u;  // u*X + x; cells off-mask unused
};

// D(Q_UY || P_U x Q_Y) of a joint block z_v.
struct GammaTerm {
    int var = 0;
    Alphabets shape;
    std::vector<double> log_p_u;
};

struct LinearTerm {
    int var = 0;
    std::vector<double> coef;
};

struct Expr {
    double constant = 0.0;
    std::vector<LinearTerm> linear;
    std::vector<KlToFixedTerm> kl;
    std::vector<BetaTerm> beta;
    std::vector<GammaTerm> gamma;
};

struct Constraint {
    Expr expr;       // expr == 0 (equality) or expr <= 0 (inequality)
    bool equality = false;
    std::string name;
};

// After each accepted step, block `var` is rescaled so that the sums over
// `groups` match `target` exactly. Groups partition the masked cells.
struct MarginalPin {
    int var = 0;
    std::vector<int> group_of_cell;   // size = var size; -1 for off-mask
    std::vector<double> target;       // per group, sums to 1
};

struct Program {
    std::vector<SimplexVar> vars;
    Expr objective;
    std::vector<Constraint> constraints;
    std::vector<MarginalPin> pins;
};

struct SolveOptions {
    int max_iterations = 200000;      // total inner iterations across outer loop
    int max_outer = 60;
    double tol_constraint = 1e-9;     // max violation target
    double tol_kkt = 1e-7;            // stationarity (Frank-Wolfe gap) target
    double rel_obj_tol = 1e-9;        // relative objective change over window
    int stall_window = 50;
    double rho0 = 10.0;
    double rho_growth = 4.0;
    double rho_max = 1e12;
    double infeasible_violation = 1e-6;  // declare infeasible above this at the end
};

struct SolveResult {
    SolveStatus status = SolveStatus::numerical_trouble;
    double objective = 0.0;                 // exact objective at the witness
    std::vector<std::vector<double>> z;     // per-variable witness
    std::vector<double> multipliers;        // per-constraint estimate
    double max_violation = 0.0;             // max |h| / positive part of g
    double kkt_residual = 0.0;              // max(violation, FW gap)
    int iterations = 0;
    int outer_iterations = 0;
};

double eval_expr(const Expr& e, const std::vector<std::vector<double>>& z);

SolveResult solve(const Program& p, const SolveOptions& opt = {});

}  // namespace abcexp
