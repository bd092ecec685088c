#include "abcexp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace abcexp {

namespace {

constexpr int kQhat = 0;  // variable ids in the joint programs
constexpr int kQ = 1;

struct Ctx {
    const ChannelModel* inst = nullptr;
    Alphabets a;
    JointDist3 P;
    std::vector<uint8_t> mask;      // support of P_UXY
    std::vector<double> logpxg;     // u*X + x
    std::vector<double> logpu;
    std::vector<double> lnw;        // per cell: ln W(y|x), -inf off channel support
};

Ctx make_ctx(const ChannelModel& inst) {
    Ctx c;
    c.inst = &inst;
    c.a = inst.alph;
    c.P = inst.p_uxy();
    c.mask.assign(c.a.cells(), 0);
    for (int i = 0; i < c.a.cells(); ++i)
        c.mask[i] = c.P.mass()[i] > 0.0 ? 1 : 0;
    const auto pxg = inst.p_x_given_u();
    const auto pu = inst.p_u();
    c.logpxg.resize(pxg.size());
    for (size_t i = 0; i < pxg.size(); ++i)
        c.logpxg[i] = pxg[i] > 0.0 ? std::log(pxg[i]) : -inf();
    c.logpu.resize(pu.size());
    for (size_t i = 0; i < pu.size(); ++i)
        c.logpu[i] = pu[i] > 0.0 ? std::log(pu[i]) : -inf();
    c.lnw.assign(c.a.cells(), -inf());
    for (int u = 0; u < c.a.U; ++u)
        for (int x = 0; x < c.a.X; ++x)
            for (int y = 0; y < c.a.Y; ++y) {
                const double w = inst.w_y[x * c.a.Y + y];
                if (w > 0.0) c.lnw[c.a.idx(u, x, y)] = std::log(w);
            }
    return c;
}

void add_beta_term(Expr& e, const Ctx& c, int var, double r1) {
    e.beta.push_back(BetaTerm{var, c.a, c.logpxg});
    e.constant -= r1;
}

void add_gamma_term(Expr& e, const Ctx& c, int var, double r2) {
    e.gamma.push_back(GammaTerm{var, c.a, c.logpu});
    e.constant -= r2;
}

// scale * sum_cells z(cell) * ln W(y|x); scale = -1 gives E ln(1/W)
void add_lnw_term(Expr& e, const Ctx& c, int var, double scale) {
    LinearTerm lt;
    lt.var = var;
    lt.coef.resize(c.a.cells());
    for (int i = 0; i < c.a.cells(); ++i) lt.coef[i] = scale * c.lnw[i];
    e.linear.push_back(std::move(lt));
}

Expr expr_obj_D(const Ctx& c) {
    Expr e;
    e.kl.push_back(KlToFixedTerm{kQhat, 1.0, c.P.mass()});
    return e;
}

// Omega(qhat, Q) = E_Q ln(1/W) + E_qhat ln W - T
Expr expr_omega(const Ctx& c, double t) {
    Expr e;
    add_lnw_term(e, c, kQ, -1.0);
    add_lnw_term(e, c, kQhat, 1.0);
    e.constant = -t;
    return e;
}

MarginalPin ux_pin(const Ctx& c, int var) {
    MarginalPin pin;
    pin.var = var;
    pin.group_of_cell.assign(c.a.cells(), -1);
    pin.target.assign(static_cast<size_t>(c.a.U) * c.a.X, 0.0);
    for (int u = 0; u < c.a.U; ++u)
        for (int x = 0; x < c.a.X; ++x) {
            pin.target[u * c.a.X + x] = c.inst->p_ux[u * c.a.X + x];
            for (int y = 0; y < c.a.Y; ++y) {
                const int i = c.a.idx(u, x, y);
                if (c.mask[i] && c.inst->p_ux[u * c.a.X + x] > 0.0)
                    pin.group_of_cell[i] = u * c.a.X + x;
            }
        }
    return pin;
}

MarginalPin y_pin(const Ctx& c, int var, const std::vector<double>& target_y) {
    MarginalPin pin;
    pin.var = var;
    pin.group_of_cell.assign(c.a.cells(), -1);
    pin.target = target_y;
    for (int u = 0; u < c.a.U; ++u)
        for (int x = 0; x < c.a.X; ++x)
            for (int y = 0; y < c.a.Y; ++y) {
                const int i = c.a.idx(u, x, y);
                if (c.mask[i]) pin.group_of_cell[i] = y;
            }
    return pin;
}

enum class Coupling { y, uy };

// Two joint blocks with the shared-marginal equality coupling.
Program joint_program(const Ctx& c, Coupling cp, EnsembleKind kind,
                      const std::vector<double>& qhat_init,
                      const std::vector<double>& q_init) {
    Program p;
    SimplexVar vh;
    vh.size = c.a.cells();
    vh.mask = c.mask;
    vh.init = qhat_init;
    p.vars.push_back(vh);
    SimplexVar vq;
    vq.size = c.a.cells();
    vq.mask = c.mask;
    vq.init = q_init;
    p.vars.push_back(vq);

    const int nslices = cp == Coupling::y ? c.a.Y : c.a.U * c.a.Y;
    for (int s = 0; s + 1 < nslices; ++s) {  // last slice is redundant
        Constraint con;
        con.equality = true;
        con.name = "couple";
        LinearTerm ltq, lth;
        ltq.var = kQ;
        ltq.coef.assign(c.a.cells(), 0.0);
        lth.var = kQhat;
        lth.coef.assign(c.a.cells(), 0.0);
        for (int u = 0; u < c.a.U; ++u)
            for (int x = 0; x < c.a.X; ++x)
                for (int y = 0; y < c.a.Y; ++y) {
                    const int slice = cp == Coupling::y ? y : u * c.a.Y + y;
                    if (slice != s) continue;
                    const int i = c.a.idx(u, x, y);
                    ltq.coef[i] = 1.0;
                    lth.coef[i] = -1.0;
                }
        con.expr.linear.push_back(std::move(ltq));
        con.expr.linear.push_back(std::move(lth));
        p.constraints.push_back(std::move(con));
    }

    if (kind == EnsembleKind::constant_composition) {
        p.pins.push_back(ux_pin(c, kQhat));
        p.pins.push_back(ux_pin(c, kQ));
    }
    return p;
}

std::vector<double> masked_normalized(const Ctx& c, std::vector<double> w) {
    double tot = 0.0;
    for (int i = 0; i < c.a.cells(); ++i) {
        if (!c.mask[i]) w[i] = 0.0;
        tot += w[i];
    }
    if (tot <= 0.0) return c.P.mass();
    for (auto& v : w) v /= tot;
    return w;
}

// Q seed with X independent of Y given nothing: P_UX x P_Y (masked).
std::vector<double> independent_seed(const Ctx& c) {
    const auto py = c.P.marginal_y();
    std::vector<double> w(c.a.cells(), 0.0);
    for (int u = 0; u < c.a.U; ++u)
        for (int x = 0; x < c.a.X; ++x)
            for (int y = 0; y < c.a.Y; ++y)
                w[c.a.idx(u, x, y)] = c.inst->p_ux[u * c.a.X + x] * py[y];
    return masked_normalized(c, std::move(w));
}

// Q seed with Q_{X|UY} = P_{X|U} on base P_UY (masked); beta = -R1 there.
std::vector<double> conditional_seed(const Ctx& c) {
    const auto puy = c.P.marginal_uy();
    const auto pxg = c.inst->p_x_given_u();
    std::vector<double> w(c.a.cells(), 0.0);
    for (int u = 0; u < c.a.U; ++u)
        for (int x = 0; x < c.a.X; ++x)
            for (int y = 0; y < c.a.Y; ++y)
                w[c.a.idx(u, x, y)] = pxg[u * c.a.X + x] * puy[u * c.a.Y + y];
    return masked_normalized(c, std::move(w));
}

struct CaseDef {
    std::string name;
    bool obj_beta = false;
    bool obj_gamma = false;
};

SubproblemInfo finish_case(const CaseDef& def, const Ctx& c, double r1, double r2,
                           const SolveResult& sr) {
    SubproblemInfo info;
    info.name = def.name;
    info.status = sr.status;
    info.iterations = sr.iterations;
    info.kkt_residual = sr.kkt_residual;
    info.max_violation = sr.max_violation;
    if (sr.status == SolveStatus::infeasible) {
        info.feasible = false;
        info.value = inf();
        return info;
    }
    info.feasible = sr.max_violation <= 1e-7;
    info.qhat = JointDist3::from_weights(c.a, sr.z[kQhat]);
    info.q = JointDist3::from_weights(c.a, sr.z[kQ]);
    info.beta_at_witness = beta(info.q, r1, *c.inst);
    info.gamma_at_witness = gamma(info.q, r2, *c.inst);
    double v = kl_divergence(info.qhat.mass(), c.P.mass());
    if (def.obj_beta) v += info.beta_at_witness;
    if (def.obj_gamma) v += info.gamma_at_witness;
    info.value = v;
    return info;
}

SubproblemInfo feasible_point_candidate(const Ctx& c, double r1, double r2,
                                        bool use_phi) {
    // Q = qhat = P is feasible for L1 and L2 at T >= 0; its cost bounds the
    // optimum from above and guards against solver mishaps.
    SubproblemInfo info;
    info.name = use_phi ? "feasible_point_P(phi)" : "feasible_point_P(beta+)";
    info.status = SolveStatus::ok;
    info.feasible = true;
    info.counted = true;
    info.qhat = c.P;
    info.q = c.P;
    info.beta_at_witness = beta(c.P, r1, *c.inst);
    info.gamma_at_witness = gamma(c.P, r2, *c.inst);
    info.value = use_phi ? phi_from(info.gamma_at_witness, info.beta_at_witness)
                         : clamp_pos(info.beta_at_witness);
    return info;
}

void assemble(PsiValue& out, double activity_tol) {
    out.value = inf();
    out.active = "none";
    for (const auto& b : out.branches) {
        if (b.counted && b.value < out.value) {
            out.value = b.value;
            out.active = b.name;
        }
    }
    out.reliable = true;
    for (const auto& b : out.branches)
        if (b.counted && b.status != SolveStatus::ok &&
            b.status != SolveStatus::infeasible)
            out.reliable = false;
    (void)activity_tol;
}

}  // namespace

PsiValue solve_psi_a(const ChannelModel& inst, double r1, double r2, double t,
                     EnsembleKind kind, const SolverOptions& opt) {
    const Ctx c = make_ctx(inst);
    const double tol = opt.activity_tol;
    PsiValue out;

    {   // merged cases 1 and 3: min gamma+beta s.t. Omega <= 0
        CaseDef def{"psi_a.a5", true, true};
        Program p = joint_program(c, Coupling::y, kind, c.P.mass(), c.P.mass());
        p.objective = expr_obj_D(c);
        add_beta_term(p.objective, c, kQ, r1);
        add_gamma_term(p.objective, c, kQ, r2);
        p.constraints.push_back({expr_omega(c, t), false, "omega<=0"});
        auto info = finish_case(def, c, r1, r2, solve(p, opt.convex));
        const double b = info.beta_at_witness, g = info.gamma_at_witness;
        info.counted = info.feasible &&
                       ((b >= -tol && g >= -tol) || (g <= tol && g + b >= -tol));
        out.branches.push_back(std::move(info));
    }
    {   // case 2 with the nonconvex gamma >= 0 removed
        CaseDef def{"psi_a.a2", false, true};
        Program p = joint_program(c, Coupling::y, kind, c.P.mass(),
                                  conditional_seed(c));
        p.objective = expr_obj_D(c);
        add_gamma_term(p.objective, c, kQ, r2);
        Expr om_beta = expr_omega(c, t);
        add_beta_term(om_beta, c, kQ, r1);
        p.constraints.push_back({om_beta, false, "omega+beta<=0"});
        Expr bneg;
        add_beta_term(bneg, c, kQ, r1);
        p.constraints.push_back({bneg, false, "beta<=0"});
        auto info = finish_case(def, c, r1, r2, solve(p, opt.convex));
        info.counted = info.feasible && info.gamma_at_witness >= -tol;
        out.branches.push_back(std::move(info));
    }
    {   // case 4: zero objective on its region
        CaseDef def{"psi_a.a4", false, false};
        Program p = joint_program(c, Coupling::y, kind, c.P.mass(),
                                  independent_seed(c));
        p.objective = expr_obj_D(c);
        Expr om_gb = expr_omega(c, t);
        add_beta_term(om_gb, c, kQ, r1);
        add_gamma_term(om_gb, c, kQ, r2);
        p.constraints.push_back({om_gb, false, "omega+gamma+beta<=0"});
        Expr gneg;
        add_gamma_term(gneg, c, kQ, r2);
        p.constraints.push_back({gneg, false, "gamma<=0"});
        Expr gbneg;
        add_beta_term(gbneg, c, kQ, r1);
        add_gamma_term(gbneg, c, kQ, r2);
        p.constraints.push_back({gbneg, false, "gamma+beta<=0"});
        auto info = finish_case(def, c, r1, r2, solve(p, opt.convex));
        info.counted = info.feasible;
        out.branches.push_back(std::move(info));
    }
    out.branches.push_back(feasible_point_candidate(c, r1, r2, true));
    assemble(out, tol);
    return out;
}

PsiValue solve_psi_b(const ChannelModel& inst, double r1, double t,
                     EnsembleKind kind, const SolverOptions& opt) {
    const Ctx c = make_ctx(inst);
    const double tol = opt.activity_tol;
    PsiValue out;

    {   // modified Psi_b1: drop beta >= 0, active only if the witness keeps it
        CaseDef def{"psi_b.b1", true, false};
        Program p = joint_program(c, Coupling::uy, kind, c.P.mass(), c.P.mass());
        p.objective = expr_obj_D(c);
        add_beta_term(p.objective, c, kQ, r1);
        p.constraints.push_back({expr_omega(c, t), false, "omega<=0"});
        auto info = finish_case(def, c, r1, 0.0, solve(p, opt.convex));
        info.counted = info.feasible && info.beta_at_witness >= -tol;
        out.branches.push_back(std::move(info));
    }
    {   // Psi_b2: pure divergence cost with an L22 certificate block
        CaseDef def{"psi_b.b2", false, false};
        Program p = joint_program(c, Coupling::uy, kind, c.P.mass(),
                                  conditional_seed(c));
        p.objective = expr_obj_D(c);
        Expr om_beta = expr_omega(c, t);
        add_beta_term(om_beta, c, kQ, r1);
        p.constraints.push_back({om_beta, false, "omega+beta<=0"});
        Expr bneg;
        add_beta_term(bneg, c, kQ, r1);
        p.constraints.push_back({bneg, false, "beta<=0"});
        auto info = finish_case(def, c, r1, 0.0, solve(p, opt.convex));
        info.counted = info.feasible;
        out.branches.push_back(std::move(info));
    }
    out.branches.push_back(feasible_point_candidate(c, r1, 0.0, false));
    assemble(out, tol);
    return out;
}

namespace {

// ---------- Psi_c: nested evaluation and CCP outer descent ----------

struct InnerEval {
    double inner = inf();         // min over counted cases of the inner value
    double s0_value = 0.0;
    bool s0_feasible = true;
    std::string case_name = "none";
    JointDist3 q;                 // inner witness
    SolveStatus status = SolveStatus::ok;
    int iterations = 0;
    double kkt = 0.0, viol = 0.0;
};

// Exact inner minimization over Q for fixed qhat: the three convex cases of
// the L3 problem with s0(qhat_UY) as a constant threshold.
InnerEval psi_c_inner(const Ctx& c, const JointDist3& qhat, double r1, double r2,
                      double t, EnsembleKind kind, const SolverOptions& opt,
                      const S0Result& s0r) {
    InnerEval ev;
    ev.s0_value = s0r.value;
    ev.s0_feasible = s0r.feasible;
    if (!s0r.feasible) {
        ev.inner = inf();
        ev.status = SolveStatus::infeasible;
        return ev;
    }
    const auto qhat_y = qhat.marginal_y();
    const bool omega_void = std::isinf(ev.s0_value) && ev.s0_value < 0;

    auto q_only = [&](const std::vector<double>& qinit) {
        Program p;
        SimplexVar vq;
        vq.size = c.a.cells();
        vq.mask = c.mask;
        vq.init = qinit;
        p.vars.push_back(vq);
        p.pins.push_back(y_pin(c, 0, qhat_y));
        if (kind == EnsembleKind::constant_composition)
            p.pins.push_back(ux_pin(c, 0));
        return p;
    };
    auto omega_c = [&](double extra_const) {
        Expr e;
        LinearTerm lt;
        lt.var = 0;
        lt.coef.resize(c.a.cells());
        for (int i = 0; i < c.a.cells(); ++i) lt.coef[i] = -c.lnw[i];
        e.linear.push_back(std::move(lt));
        e.constant = ev.s0_value - t + extra_const;
        return e;
    };
    struct Cand {
        double val;
        std::string name;
        SolveResult sr;
        bool ok;
    };
    std::vector<Cand> cands;
    const double tol = opt.activity_tol;

    {   // c5
        Program p = q_only(masked_normalized(c, qhat.mass()));
        Expr obj;
        add_beta_term(obj, c, 0, r1);
        add_gamma_term(obj, c, 0, r2);
        p.objective = obj;
        if (!omega_void) p.constraints.push_back({omega_c(0.0), false, "omega_c<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible && sr.max_violation <= 1e-7) {
            JointDist3 q = JointDist3::from_weights(c.a, sr.z[0]);
            const double b = beta(q, r1, *c.inst), g = gamma(q, r2, *c.inst);
            if ((b >= -tol && g >= -tol) || (g <= tol && g + b >= -tol))
                cands.push_back({g + b, "c5", std::move(sr), true});
        }
    }
    {   // c2 (gamma >= 0 dropped)
        Program p = q_only(conditional_seed(c));
        Expr obj;
        add_gamma_term(obj, c, 0, r2);
        p.objective = obj;
        Expr om_b = omega_void ? Expr{} : omega_c(0.0);
        if (!omega_void) {
            add_beta_term(om_b, c, 0, r1);
            p.constraints.push_back({om_b, false, "omega_c+beta<=0"});
        }
        Expr bneg;
        add_beta_term(bneg, c, 0, r1);
        p.constraints.push_back({bneg, false, "beta<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible && sr.max_violation <= 1e-7) {
            JointDist3 q = JointDist3::from_weights(c.a, sr.z[0]);
            const double g = gamma(q, r2, *c.inst);
            if (g >= -tol) cands.push_back({g, "c2", std::move(sr), true});
        }
    }
    {   // c4: feasibility of the zero region
        Program p = q_only(independent_seed(c));
        p.objective = Expr{};
        if (!omega_void) {
            Expr om_gb = omega_c(0.0);
            add_beta_term(om_gb, c, 0, r1);
            add_gamma_term(om_gb, c, 0, r2);
            p.constraints.push_back({om_gb, false, "omega_c+gamma+beta<=0"});
        }
        Expr gneg;
        add_gamma_term(gneg, c, 0, r2);
        p.constraints.push_back({gneg, false, "gamma<=0"});
        Expr gbneg;
        add_beta_term(gbneg, c, 0, r1);
        add_gamma_term(gbneg, c, 0, r2);
        p.constraints.push_back({gbneg, false, "gamma+beta<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible && sr.max_violation <= 1e-7)
            cands.push_back({0.0, "c4", std::move(sr), true});
    }

    for (auto& cand : cands) {
        if (cand.val < ev.inner) {
            ev.inner = cand.val;
            ev.case_name = cand.name;
            ev.q = JointDist3::from_weights(c.a, cand.sr.z[0]);
            ev.status = cand.sr.status;
            ev.iterations = cand.sr.iterations;
            ev.kkt = cand.sr.kkt_residual;
            ev.viol = cand.sr.max_violation;
        }
    }
    return ev;
}

struct CPoint {
    double value = inf();
    JointDist3 qhat;
    InnerEval inner;
};

CPoint psi_c_eval(const Ctx& c, const JointDist3& qhat, double r1, double r2,
                  double t, EnsembleKind kind, const SolverOptions& opt) {
    CPoint pt;
    pt.qhat = qhat;
    S0Options so;
    so.tol = 1e-8;
    const auto s0r = s0(qhat.marginal_uy(), r1, *c.inst, kind, so);
    pt.inner = psi_c_inner(c, qhat, r1, r2, t, kind, opt, s0r);
    if (std::isinf(pt.inner.inner)) {
        pt.value = inf();
        return pt;
    }
    pt.value = kl_divergence(qhat.mass(), c.P.mass()) + pt.inner.inner;
    return pt;
}

// One CCP move: replace s0(qhat_UY) by its tangent at the current point
// (s0 is concave, so the tangent overestimates it and the linearized
// constraint is conservative), then solve the three joint convex cases.
std::vector<JointDist3> psi_c_ccp_candidates(const Ctx& c, const JointDist3& qhat,
                                             double r1, double r2, double t,
                                             EnsembleKind kind,
                                             const SolverOptions& opt) {
    std::vector<JointDist3> cands;
    S0Options so;
    so.tol = 1e-8;
    so.want_supergradient = true;
    const auto s0r = s0(qhat.marginal_uy(), r1, *c.inst, kind, so);
    if (!s0r.feasible || (std::isinf(s0r.value) && s0r.value < 0)) return cands;

    const auto quy = qhat.marginal_uy();
    double const_part = s0r.value - t;
    for (int u = 0; u < c.a.U; ++u)
        for (int y = 0; y < c.a.Y; ++y)
            const_part -= s0r.supergradient_uy[u * c.a.Y + y] * quy[u * c.a.Y + y];

    auto omega_lin = [&]() {
        Expr e;
        LinearTerm ltq;
        ltq.var = kQ;
        ltq.coef.resize(c.a.cells());
        for (int i = 0; i < c.a.cells(); ++i) ltq.coef[i] = -c.lnw[i];
        e.linear.push_back(std::move(ltq));
        LinearTerm lth;
        lth.var = kQhat;
        lth.coef.assign(c.a.cells(), 0.0);
        for (int u = 0; u < c.a.U; ++u)
            for (int x = 0; x < c.a.X; ++x)
                for (int yy = 0; yy < c.a.Y; ++yy)
                    lth.coef[c.a.idx(u, x, yy)] =
                        s0r.supergradient_uy[u * c.a.Y + yy];
        e.linear.push_back(std::move(lth));
        e.constant = const_part;
        return e;
    };

    {   // c5-shaped move
        Program p = joint_program(c, Coupling::y, kind, qhat.mass(), qhat.mass());
        p.objective = expr_obj_D(c);
        add_beta_term(p.objective, c, kQ, r1);
        add_gamma_term(p.objective, c, kQ, r2);
        p.constraints.push_back({omega_lin(), false, "omega_lin<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible)
            cands.push_back(JointDist3::from_weights(c.a, sr.z[kQhat]));
    }
    {   // c2-shaped move
        Program p = joint_program(c, Coupling::y, kind, qhat.mass(),
                                  conditional_seed(c));
        p.objective = expr_obj_D(c);
        add_gamma_term(p.objective, c, kQ, r2);
        Expr om_b = omega_lin();
        add_beta_term(om_b, c, kQ, r1);
        p.constraints.push_back({om_b, false, "omega_lin+beta<=0"});
        Expr bneg;
        add_beta_term(bneg, c, kQ, r1);
        p.constraints.push_back({bneg, false, "beta<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible)
            cands.push_back(JointDist3::from_weights(c.a, sr.z[kQhat]));
    }
    {   // c4-shaped move
        Program p = joint_program(c, Coupling::y, kind, qhat.mass(),
                                  independent_seed(c));
        p.objective = expr_obj_D(c);
        Expr om_gb = omega_lin();
        add_beta_term(om_gb, c, kQ, r1);
        add_gamma_term(om_gb, c, kQ, r2);
        p.constraints.push_back({om_gb, false, "omega_lin+gamma+beta<=0"});
        Expr gneg;
        add_gamma_term(gneg, c, kQ, r2);
        p.constraints.push_back({gneg, false, "gamma<=0"});
        Expr gbneg;
        add_beta_term(gbneg, c, kQ, r1);
        add_gamma_term(gbneg, c, kQ, r2);
        p.constraints.push_back({gbneg, false, "gamma+beta<=0"});
        auto sr = solve(p, opt.convex);
        if (sr.status != SolveStatus::infeasible)
            cands.push_back(JointDist3::from_weights(c.a, sr.z[kQhat]));
    }
    return cands;
}

void lattice_recurse(int cell, int remaining, std::vector<int>& counts,
                     const std::function<void(const std::vector<int>&)>& emit) {
    const int n = static_cast<int>(counts.size());
    if (cell == n - 1) {
        counts[cell] = remaining;
        emit(counts);
        return;
    }
    for (int v = 0; v <= remaining; ++v) {
        counts[cell] = v;
        lattice_recurse(cell + 1, remaining - v, counts, emit);
    }
}

std::vector<JointDist3> psi_c_seeds(const Ctx& c, EnsembleKind kind,
                                    const SolverOptions& opt) {
    std::vector<JointDist3> seeds;
    auto push = [&](std::vector<double> w) {
        seeds.push_back(JointDist3(c.a, masked_normalized(c, std::move(w))));
    };
    push(c.P.mass());
    push(independent_seed(c));
    push(conditional_seed(c));
    auto mix = [&](const std::vector<double>& wa, const std::vector<double>& wb,
                   double lam) {
        std::vector<double> w(wa.size());
        for (size_t i = 0; i < w.size(); ++i)
            w[i] = (1.0 - lam) * wa[i] + lam * wb[i];
        return w;
    };
    push(mix(c.P.mass(), independent_seed(c), 0.5));
    push(mix(c.P.mass(), conditional_seed(c), 0.5));

    // Grid-seeded restarts from a coarse lattice, mixed with P to stay in the
    // interior of the support (pure lattice faces trap multiplicative updates).
    const int want = std::max(0, opt.psi_c_starts - static_cast<int>(seeds.size()));
    if (want > 0) {
        std::vector<int> cells;
        for (int i = 0; i < c.a.cells(); ++i)
            if (c.mask[i]) cells.push_back(i);
        const int k = opt.psi_c_grid_k;
        std::vector<std::pair<double, std::vector<double>>> scored;
        std::vector<int> counts(cells.size(), 0);
        lattice_recurse(0, k, counts, [&](const std::vector<int>& cnt) {
            std::vector<double> w(c.a.cells(), 0.0);
            for (size_t j = 0; j < cells.size(); ++j)
                w[cells[j]] = static_cast<double>(cnt[j]) / k;
            if (kind == EnsembleKind::constant_composition) {
                // one proportional-fit pass toward the UX pin
                std::vector<double> m(static_cast<size_t>(c.a.U) * c.a.X, 0.0);
                for (int u = 0; u < c.a.U; ++u)
                    for (int x = 0; x < c.a.X; ++x)
                        for (int y = 0; y < c.a.Y; ++y)
                            m[u * c.a.X + x] += w[c.a.idx(u, x, y)];
                for (int u = 0; u < c.a.U; ++u)
                    for (int x = 0; x < c.a.X; ++x)
                        for (int y = 0; y < c.a.Y; ++y) {
                            const int i = c.a.idx(u, x, y);
                            const double target = c.inst->p_ux[u * c.a.X + x];
                            if (m[u * c.a.X + x] > 0)
                                w[i] *= target / m[u * c.a.X + x];
                            else
                                w[i] = 0.0;
                        }
            }
            std::vector<double> mixed(c.a.cells());
            double tot = 0.0;
            for (int i = 0; i < c.a.cells(); ++i) tot += w[i];
            if (tot <= 0.0) return;
            for (int i = 0; i < c.a.cells(); ++i)
                mixed[i] = 0.9 * w[i] / tot + 0.1 * c.P.mass()[i];
            const double d = kl_divergence(mixed, c.P.mass());
            if (std::isfinite(d)) scored.push_back({d, std::move(mixed)});
        });
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        // take a spread: the closest few plus evenly strided samples
        const int n = static_cast<int>(scored.size());
        std::vector<int> picks;
        for (int i = 0; i < std::min(want / 2, n); ++i) picks.push_back(i);
        for (int j = 0; j < want - static_cast<int>(picks.size()) && n > 0; ++j) {
            const int idx = static_cast<int>(
                (static_cast<long long>(j + 1) * n) / (want + 1));
            picks.push_back(std::min(idx, n - 1));
        }
        std::sort(picks.begin(), picks.end());
        picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
        for (int idx : picks)
            seeds.push_back(JointDist3(c.a, masked_normalized(c, scored[idx].second)));
    }
    if (static_cast<int>(seeds.size()) > opt.psi_c_starts + 5)
        seeds.resize(opt.psi_c_starts + 5);
    return seeds;
}

}  // namespace

PsiValue solve_psi_c(const ChannelModel& inst, double r1, double r2, double t,
                     EnsembleKind kind, const SolverOptions& opt) {
    const Ctx c = make_ctx(inst);
    PsiValue out;

    auto seeds = psi_c_seeds(c, kind, opt);
    std::vector<CPoint> evals;
    evals.reserve(seeds.size());
    CPoint best;
    for (const auto& s : seeds) {
        auto pt = psi_c_eval(c, s, r1, r2, t, kind, opt);
        if (pt.value < best.value) best = pt;
        evals.push_back(std::move(pt));
    }

    int descents = 0;
    std::sort(evals.begin(), evals.end(),
              [](const CPoint& a, const CPoint& b) { return a.value < b.value; });
    for (auto& start : evals) {
        if (descents >= opt.psi_c_starts) break;
        if (start.value > best.value + opt.psi_c_skip_margin) continue;
        ++descents;
        CPoint cur = start;
        for (int round = 0; round < opt.psi_c_max_rounds; ++round) {
            auto cands =
                psi_c_ccp_candidates(c, cur.qhat, r1, r2, t, kind, opt);
            CPoint next;
            for (const auto& qh : cands) {
                auto pt = psi_c_eval(c, qh, r1, r2, t, kind, opt);
                if (pt.value < next.value) next = pt;
            }
            if (next.value < cur.value - 1e-10) {
                cur = next;
                if (cur.value < best.value) best = cur;
            } else {
                break;
            }
        }
        if (cur.value < best.value) best = cur;
    }

    SubproblemInfo info;
    info.name = "psi_c." + best.inner.case_name;
    info.value = best.value;
    info.feasible = std::isfinite(best.value);
    info.counted = info.feasible;
    info.status = best.inner.status;
    info.iterations = best.inner.iterations;
    info.kkt_residual = best.inner.kkt;
    info.max_violation = best.inner.viol;
    if (info.feasible) {
        info.qhat = best.qhat;
        info.q = best.inner.q;
        info.beta_at_witness = beta(info.q, r1, inst);
        info.gamma_at_witness = gamma(info.q, r2, inst);
    }
    out.branches.push_back(std::move(info));
    assemble(out, opt.activity_tol);
    return out;
}

ExponentReport compute_exponents(const ExponentQuery& query,
                                 const SolverOptions& opt) {
    query.rates.validate();
    query.inst.validate();
    ExponentReport rep;
    rep.rates = query.rates;
    rep.kind = query.kind;
    rep.terminal = query.terminal;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    const ChannelModel inst = query.terminal == Terminal::Z
                                  ? query.inst.terminal_z_view()
                                  : query.inst;
    const double r1 = query.rates.r1, r2 = query.rates.r2, t = query.rates.t;

    rep.psi_a = solve_psi_a(inst, r1, r2, t, query.kind, opt);
    rep.psi_c = solve_psi_c(inst, r1, r2, t, query.kind, opt);
    if (query.terminal == Terminal::Y) {
        rep.psi_b = solve_psi_b(inst, r1, t, query.kind, opt);
        rep.E1t = std::min(rep.psi_a.value, rep.psi_b.value);
        rep.EYt = rep.E1t;
        rep.E1u = rep.E1t + t;
        rep.EYu = rep.EYt + t;
    } else {
        rep.E1t = rep.E1u = rep.EYt = rep.EYu = nan;
    }
    // ties break toward psi_a and are recorded
    if (rep.psi_a.value >= rep.psi_c.value) {
        rep.E2t = rep.psi_a.value;
        rep.e2_branch = "psi_a";
    } else {
        rep.E2t = rep.psi_c.value;
        rep.e2_branch = "psi_c";
    }
    rep.E2u = rep.E2t + t;

    rep.reliable = rep.psi_a.reliable && rep.psi_c.reliable &&
                   (query.terminal == Terminal::Z || rep.psi_b.reliable);
    rep.status = rep.reliable ? "ok" : "unreliable";
    return rep;
}

}  // namespace abcexp
