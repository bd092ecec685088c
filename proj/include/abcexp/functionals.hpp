#pragma once

#include <vector>

#include "abcexp/convex.hpp"
#include "abcexp/prob.hpp"

// The scalar functionals of a joint distribution that drive every exponent:
// beta, gamma, the clamp compositions Phi and Delta, the threshold functional
// Omega, and the subcodebook growth rate s0.

namespace abcexp {

struct RatePoint {
    double r1 = 0.0;
    double r2 = 0.0;
    double t = 0.0;   // erasure threshold, T >= 0
    void validate() const;  // throws on negative rates or T
};

enum class EnsembleKind { iid, constant_composition };
enum class Terminal { Y, Z };

std::string to_string(EnsembleKind k);

// |x|_+ = max(x, 0)
inline double clamp_pos(double x) { return x > 0.0 ? x : 0.0; }

// beta(Q, R1) = D(Q_{X|U} || P_{X|U} | Q_U) + I_Q(X;Y|U) - R1, evaluated via
// the algebraically equal form D(Q_{X|UY} || P_{X|U} | Q_UY) - R1, which is
// convex in the joint. +inf sentinel when Q needs mass where P_{X|U} has none
// (or P_U(u) = 0 on Q's support).
double beta(const JointDist3& q, double r1, const ChannelModel& inst);

// The definition read literally; used to cross-check the identity form.
double beta_definition(const JointDist3& q, double r1, const ChannelModel& inst);

// gamma(Q, R2) = D(Q_U || P_U) + I_Q(U;Y) - R2; depends only on Q_UY.
double gamma_uy(const std::vector<double>& q_uy, int U, int Y, double r2,
                const ChannelModel& inst);
double gamma(const JointDist3& q, double r2, const ChannelModel& inst);

// Phi = | gamma + |beta|_+ |_+ and Delta = | |-gamma|_+ - beta |_+ .
double phi_from(double gamma_val, double beta_val);
double delta_from(double gamma_val, double beta_val);
double phi(const JointDist3& q, double r1, double r2, const ChannelModel& inst);
double delta(const JointDist3& q, double r1, double r2, const ChannelModel& inst);

// Omega(Q; qhat, T) = E_Q ln(1/W_Y) + E_qhat ln W_Y - T.
double omega(const JointDist3& q, const JointDist3& qhat, double t,
             const ChannelModel& inst);

// s0(qhat_UY, R1) = -min{ beta(Qt,R1) - E_Qt ln W_Y :
//                         Qt = Qt_{X|UY} qhat_UY, beta(Qt,R1) <= 0 }.
// The constant-composition variant additionally pins Qt_UX = P_UX; its
// feasible set is empty exactly when qhat_U != P_U, reported via the flag
// (minimum over an empty set is +inf, so the value is -inf there).
struct S0Result {
    double value = 0.0;
    bool feasible = true;
    std::vector<double> witness_x_given_uy;  // (u*Y + y)*X + x
    std::vector<double> supergradient_uy;    // d s0 / d qhat_UY (envelope)
    SolveStatus status = SolveStatus::ok;
    int iterations = 0;
    double kkt_residual = 0.0;
};

struct S0Options {
    double tol = 1e-8;          // objective tolerance of the inner program
    bool want_supergradient = false;
};

S0Result s0(const std::vector<double>& qhat_uy, double r1,
            const ChannelModel& inst, EnsembleKind kind,
            const S0Options& opt = {});

}  // namespace abcexp
