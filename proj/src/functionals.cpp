#include "abcexp/functionals.hpp"

#include <cmath>
#include <stdexcept>

namespace abcexp {

void RatePoint::validate() const {
    if (!(r1 >= 0.0) || !(r2 >= 0.0))
        throw std::invalid_argument("rates must be nonnegative");
    if (!(t >= 0.0))
        throw std::invalid_argument("threshold T must be nonnegative (erasure mode)");
}

std::string to_string(EnsembleKind k) {
    return k == EnsembleKind::iid ? "iid" : "cc";
}

double beta(const JointDist3& q, double r1, const ChannelModel& inst) {
    const auto& a = q.dims();
    if (!(a == inst.alph))
        throw std::invalid_argument("beta: alphabet mismatch");
    const auto pu = inst.p_u();
    const auto pxg = inst.p_x_given_u();
    const auto quy = q.marginal_uy();
    double s = 0.0;
    for (int u = 0; u < a.U; ++u)
        for (int x = 0; x < a.X; ++x)
            for (int y = 0; y < a.Y; ++y) {
                const double v = q(u, x, y);
                if (v <= 0.0) continue;
                if (pu[u] <= 0.0 || pxg[u * a.X + x] <= 0.0) return inf();
                s += v * std::log(v / (quy[u * a.Y + y] * pxg[u * a.X + x]));
            }
    return s - r1;
}

double beta_definition(const JointDist3& q, double r1, const ChannelModel& inst) {
    const auto& a = q.dims();
    const auto pu = inst.p_u();
    const auto pxg = inst.p_x_given_u();
    const auto qu = q.marginal_u();
    const auto qux = q.marginal_ux();
    double dterm = 0.0;
    for (int u = 0; u < a.U; ++u) {
        if (qu[u] <= 0.0) continue;
        if (pu[u] <= 0.0) return inf();
        for (int x = 0; x < a.X; ++x) {
            const double c = qux[u * a.X + x] / qu[u];
            if (c <= 0.0) continue;
            if (pxg[u * a.X + x] <= 0.0) return inf();
            dterm += qu[u] * c * std::log(c / pxg[u * a.X + x]);
        }
    }
    return dterm + conditional_mutual_information(q) - r1;
}

double gamma_uy(const std::vector<double>& q_uy, int U, int Y, double r2,
                const ChannelModel& inst) {
    if (static_cast<int>(q_uy.size()) != U * Y)
        throw std::invalid_argument("gamma_uy: size mismatch");
    const auto pu = inst.p_u();
    std::vector<double> qy(Y, 0.0);
    for (int u = 0; u < U; ++u)
        for (int y = 0; y < Y; ++y) qy[y] += q_uy[u * Y + y];
    double s = 0.0;
    for (int u = 0; u < U; ++u)
        for (int y = 0; y < Y; ++y) {
            const double v = q_uy[u * Y + y];
            if (v <= 0.0) continue;
            if (pu[u] <= 0.0) return inf();
            s += v * std::log(v / (pu[u] * qy[y]));
        }
    return s - r2;
}

double gamma(const JointDist3& q, double r2, const ChannelModel& inst) {
    return gamma_uy(q.marginal_uy(), q.dims().U, q.dims().Y, r2, inst);
}

double phi_from(double gamma_val, double beta_val) {
    return clamp_pos(gamma_val + clamp_pos(beta_val));
}

double delta_from(double gamma_val, double beta_val) {
    if (std::isinf(beta_val) && beta_val > 0) return 0.0;  // |..-inf|_+ = 0
    return clamp_pos(clamp_pos(-gamma_val) - beta_val);
}

double phi(const JointDist3& q, double r1, double r2, const ChannelModel& inst) {
    return phi_from(gamma(q, r2, inst), beta(q, r1, inst));
}

double delta(const JointDist3& q, double r1, double r2, const ChannelModel& inst) {
    return delta_from(gamma(q, r2, inst), beta(q, r1, inst));
}

double omega(const JointDist3& q, const JointDist3& qhat, double t,
             const ChannelModel& inst) {
    const double eq = expected_log_channel(q, inst.w_y, inst.alph.Y);
    if (std::isinf(eq)) return inf();        // E_Q ln(1/W) = +inf
    const double eh = expected_log_channel(qhat, inst.w_y, inst.alph.Y);
    if (std::isinf(eh)) return -inf();
    return -eq + eh - t;
}

S0Result s0(const std::vector<double>& qhat_uy, double r1,
            const ChannelModel& inst, EnsembleKind kind, const S0Options& opt) {
    const auto& a = inst.alph;
    if (static_cast<int>(qhat_uy.size()) != a.U * a.Y)
        throw std::invalid_argument("s0: qhat_UY size mismatch");
    const auto pu = inst.p_u();
    const auto pxg = inst.p_x_given_u();

    S0Result res;
    res.witness_x_given_uy.assign(static_cast<size_t>(a.U) * a.Y * a.X, 0.0);
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y)
            for (int x = 0; x < a.X; ++x)
                res.witness_x_given_uy[(u * a.Y + y) * a.X + x] = pxg[u * a.X + x];

    // Constant composition needs Qt_UX = P_UX, which forces qhat_U = P_U.
    if (kind == EnsembleKind::constant_composition) {
        for (int u = 0; u < a.U; ++u) {
            double qu = 0.0;
            for (int y = 0; y < a.Y; ++y) qu += qhat_uy[u * a.Y + y];
            if (std::abs(qu - pu[u]) > 1e-9) {
                res.feasible = false;
                res.value = -inf();   // minimum over an empty set is +inf
                res.status = SolveStatus::infeasible;
                return res;
            }
        }
    }

    // One simplex block per conditioning pair (u,y) with qhat mass.
    std::vector<int> row_block(static_cast<size_t>(a.U) * a.Y, -1);
    Program prog;
    Expr obj;     // beta + f  (then s0 = -optimum)
    Expr betacon; // beta <= 0
    obj.constant = -r1;
    betacon.constant = -r1;
    bool impossible_row = false;
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y) {
            const double w = qhat_uy[u * a.Y + y];
            if (w <= 0.0) continue;
            SimplexVar v;
            v.size = a.X;
            v.mask.assign(a.X, 0);
            int alive = 0;
            for (int x = 0; x < a.X; ++x)
                if (pxg[u * a.X + x] > 0.0 && inst.w_y[x * a.Y + y] > 0.0) {
                    v.mask[x] = 1;
                    ++alive;
                }
            if (alive == 0) { impossible_row = true; continue; }
            v.init.assign(a.X, 0.0);
            double tot = 0.0;
            for (int x = 0; x < a.X; ++x)
                if (v.mask[x]) tot += pxg[u * a.X + x];
            for (int x = 0; x < a.X; ++x)
                if (v.mask[x]) v.init[x] = pxg[u * a.X + x] / tot;
            const int b = static_cast<int>(prog.vars.size());
            row_block[u * a.Y + y] = b;
            prog.vars.push_back(std::move(v));

            KlToFixedTerm kt;
            kt.var = b;
            kt.weight = w;
            kt.ref.assign(pxg.begin() + u * a.X, pxg.begin() + (u + 1) * a.X);
            obj.kl.push_back(kt);
            betacon.kl.push_back(kt);

            LinearTerm lt;
            lt.var = b;
            lt.coef.assign(a.X, 0.0);
            for (int x = 0; x < a.X; ++x) {
                const double wv = inst.w_y[x * a.Y + y];
                lt.coef[x] = wv > 0.0 ? -w * std::log(wv) : inf();
            }
            obj.linear.push_back(std::move(lt));
        }

    if (impossible_row) {
        // Some conditioning pair admits no x with positive channel mass:
        // every beta-feasible point has f = +inf, so the minimum is +inf.
        res.value = -inf();
        res.feasible = true;
        res.status = SolveStatus::ok;
        return res;
    }

    prog.objective = obj;
    Constraint bc;
    bc.expr = betacon;
    bc.equality = false;
    bc.name = "beta<=0";
    prog.constraints.push_back(bc);

    if (kind == EnsembleKind::constant_composition) {
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x) {
                Constraint pin;
                pin.equality = true;
                pin.name = "Qt_UX pin";
                pin.expr.constant = -inst.p_ux[u * a.X + x];
                for (int y = 0; y < a.Y; ++y) {
                    const int b = row_block[u * a.Y + y];
                    if (b < 0) continue;
                    LinearTerm lt;
                    lt.var = b;
                    lt.coef.assign(a.X, 0.0);
                    lt.coef[x] = qhat_uy[u * a.Y + y];
                    pin.expr.linear.push_back(std::move(lt));
                }
                prog.constraints.push_back(std::move(pin));
            }
    }

    SolveOptions sopt;
    sopt.tol_kkt = opt.tol;
    sopt.tol_constraint = 1e-10;
    auto sr = solve(prog, sopt);
    res.status = sr.status;
    res.iterations = sr.iterations;
    res.kkt_residual = sr.kkt_residual;
    if (sr.status == SolveStatus::infeasible) {
        res.feasible = false;
        res.value = -inf();
        return res;
    }
    res.value = -sr.objective;
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y) {
            const int b = row_block[u * a.Y + y];
            if (b < 0) continue;
            for (int x = 0; x < a.X; ++x)
                res.witness_x_given_uy[(u * a.Y + y) * a.X + x] = sr.z[b][x];
        }

    if (opt.want_supergradient) {
        res.supergradient_uy.assign(static_cast<size_t>(a.U) * a.Y, 0.0);
        const double mu = sr.multipliers.empty() ? 0.0 : std::max(0.0, sr.multipliers[0]);
        for (int u = 0; u < a.U; ++u)
            for (int y = 0; y < a.Y; ++y) {
                const int b = row_block[u * a.Y + y];
                std::vector<double> c(a.X, 0.0);
                if (b >= 0)
                    c.assign(sr.z[b].begin(), sr.z[b].end());
                else
                    for (int x = 0; x < a.X; ++x) c[x] = pxg[u * a.X + x];
                double B = 0.0, F = 0.0;
                for (int x = 0; x < a.X; ++x) {
                    if (c[x] <= 0.0) continue;
                    B += c[x] * std::log(c[x] / pxg[u * a.X + x]);
                    const double wv = inst.w_y[x * a.Y + y];
                    F += wv > 0.0 ? -c[x] * std::log(wv) : inf();
                }
                res.supergradient_uy[u * a.Y + y] = -(1.0 + mu) * B - F;
            }
    }
    return res;
}

}  // namespace abcexp
