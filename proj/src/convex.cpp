#include "abcexp/convex.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace abcexp {

namespace {

constexpr double kZFloor = 1e-300;   // mass below this is treated as zero
constexpr double kLogFloor = 1e-18;  // clamp for log ratios in gradients

double safe_log(double v) { return std::log(std::max(v, kLogFloor)); }

// Evaluates expressions and gradients with preallocated scratch, so the inner
// loop does no heap work.
class Evaluator {
public:
    explicit Evaluator(const Program& p) : p_(p) {
        int maxUY = 1, maxY = 1;
        auto grow = [&](const Alphabets& a) {
            maxUY = std::max(maxUY, a.U * a.Y);
            maxY = std::max(maxY, a.Y);
        };
        auto scan = [&](const Expr& e) {
            for (const auto& t : e.beta) grow(t.shape);
            for (const auto& t : e.gamma) grow(t.shape);
        };
        scan(p.objective);
        for (const auto& c : p.constraints) scan(c.expr);
        m_uy_.assign(maxUY, 0.0);
        m_y_.assign(maxY, 0.0);
    }

    double value(const Expr& e, const std::vector<std::vector<double>>& z) {
        double s = e.constant;
        for (const auto& t : e.linear) {
            const auto& v = z[t.var];
            for (size_t i = 0; i < v.size(); ++i)
                if (v[i] > kZFloor) {
                    if (!std::isfinite(t.coef[i])) return t.coef[i] > 0 ? inf() : -inf();
                    s += t.coef[i] * v[i];
                }
        }
        for (const auto& t : e.kl) {
            const auto& v = z[t.var];
            double d = 0.0;
            for (size_t i = 0; i < v.size(); ++i)
                if (v[i] > kZFloor) {
                    if (t.ref[i] <= 0.0) return inf();
                    d += v[i] * std::log(v[i] / t.ref[i]);
                }
            s += t.weight * d;
        }
        for (const auto& t : e.beta) s += beta_value(t, z[t.var]);
        for (const auto& t : e.gamma) s += gamma_value(t, z[t.var]);
        return s;
    }

    void add_grad(const Expr& e, const std::vector<std::vector<double>>& z,
                  double w, std::vector<std::vector<double>>& g) {
        if (w == 0.0) return;
        for (const auto& t : e.linear) {
            auto& gv = g[t.var];
            for (size_t i = 0; i < gv.size(); ++i) {
                const double c = t.coef[i];
                gv[i] += w * (std::isfinite(c) ? c : (c > 0 ? 700.0 : -700.0));
            }
        }
        for (const auto& t : e.kl) {
            const auto& v = z[t.var];
            auto& gv = g[t.var];
            for (size_t i = 0; i < v.size(); ++i)
                gv[i] += w * t.weight * (safe_log(v[i]) - safe_log(t.ref[i]) + 1.0);
        }
        for (const auto& t : e.beta) beta_grad(t, z[t.var], w, g[t.var]);
        for (const auto& t : e.gamma) gamma_grad(t, z[t.var], w, g[t.var]);
    }

private:
    void marginals(const Alphabets& a, const std::vector<double>& z) {
        std::fill(m_uy_.begin(), m_uy_.begin() + a.U * a.Y, 0.0);
        std::fill(m_y_.begin(), m_y_.begin() + a.Y, 0.0);
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x)
                for (int y = 0; y < a.Y; ++y) {
                    const double v = z[a.idx(u, x, y)];
                    m_uy_[u * a.Y + y] += v;
                    m_y_[y] += v;
                }
    }

    double beta_value(const BetaTerm& t, const std::vector<double>& z) {
        const Alphabets& a = t.shape;
        marginals(a, z);
        double s = 0.0;
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x) {
                const double lp = t.log_p_x_given_u[u * a.X + x];
                for (int y = 0; y < a.Y; ++y) {
                    const double v = z[a.idx(u, x, y)];
                    if (v > kZFloor) {
                        if (!std::isfinite(lp)) return inf();
                        s += v * (std::log(v / m_uy_[u * a.Y + y]) - lp);
                    }
                }
            }
        return s;
    }

    void beta_grad(const BetaTerm& t, const std::vector<double>& z, double w,
                   std::vector<double>& g) {
        const Alphabets& a = t.shape;
        marginals(a, z);
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x) {
                const double lp = t.log_p_x_given_u[u * a.X + x];
                const double lpc = std::isfinite(lp) ? lp : -700.0;
                for (int y = 0; y < a.Y; ++y) {
                    const int i = a.idx(u, x, y);
                    g[i] += w * (safe_log(z[i]) - safe_log(m_uy_[u * a.Y + y]) - lpc);
                }
            }
    }

    double gamma_value(const GammaTerm& t, const std::vector<double>& z) {
        const Alphabets& a = t.shape;
        marginals(a, z);
        double s = 0.0;
        for (int u = 0; u < a.U; ++u) {
            const double lp = t.log_p_u[u];
            for (int y = 0; y < a.Y; ++y) {
                const double v = m_uy_[u * a.Y + y];
                if (v > kZFloor) {
                    if (!std::isfinite(lp)) return inf();
                    s += v * (std::log(v / m_y_[y]) - lp);
                }
            }
        }
        return s;
    }

    void gamma_grad(const GammaTerm& t, const std::vector<double>& z, double w,
                    std::vector<double>& g) {
        const Alphabets& a = t.shape;
        marginals(a, z);
        for (int u = 0; u < a.U; ++u) {
            const double lp = t.log_p_u[u];
            const double lpc = std::isfinite(lp) ? lp : -700.0;
            for (int y = 0; y < a.Y; ++y) {
                const double gv =
                    safe_log(m_uy_[u * a.Y + y]) - safe_log(m_y_[y]) - lpc;
                for (int x = 0; x < a.X; ++x) g[a.idx(u, x, y)] += w * gv;
            }
        }
    }

    const Program& p_;
    std::vector<double> m_uy_, m_y_;
};

struct AlState {
    std::vector<double> lambda;  // eq: lambda; ineq: mu >= 0
    double rho = 10.0;
};

double al_value(Evaluator& ev, const Program& p,
                const std::vector<std::vector<double>>& z, const AlState& s,
                std::vector<double>& cvals) {
    double L = ev.value(p.objective, z);
    cvals.resize(p.constraints.size());
    for (size_t j = 0; j < p.constraints.size(); ++j) {
        const double h = ev.value(p.constraints[j].expr, z);
        cvals[j] = h;
        if (!std::isfinite(h)) {
            if (h > 0 || p.constraints[j].equality) L = inf();
            continue;
        }
        if (p.constraints[j].equality) {
            L += s.lambda[j] * h + 0.5 * s.rho * h * h;
        } else {
            const double m = std::max(0.0, s.lambda[j] + s.rho * h);
            L += (m * m - s.lambda[j] * s.lambda[j]) / (2.0 * s.rho);
        }
    }
    return L;
}

// pure = use the stored multipliers only (the Lagrangian proper); this is the
// stationarity measure reported as the KKT residual, immune to rho-scaled
// floating-point noise in nearly-satisfied constraints
void al_grad(Evaluator& ev, const Program& p,
             const std::vector<std::vector<double>>& z, const AlState& s,
             const std::vector<double>& cvals,
             std::vector<std::vector<double>>& g, bool pure = false) {
    for (size_t b = 0; b < g.size(); ++b)
        std::fill(g[b].begin(), g[b].end(), 0.0);
    ev.add_grad(p.objective, z, 1.0, g);
    for (size_t j = 0; j < p.constraints.size(); ++j) {
        const double h = cvals[j];
        const double rho = pure ? 0.0 : s.rho;
        double w;
        if (p.constraints[j].equality)
            w = s.lambda[j] + rho * (std::isfinite(h) ? h : 0.0);
        else
            w = std::max(0.0, s.lambda[j] + rho * (std::isfinite(h) ? h : 1.0));
        ev.add_grad(p.constraints[j].expr, z, w, g);
    }
}

void apply_pins(const Program& p, std::vector<std::vector<double>>& z) {
    for (const auto& pin : p.pins) {
        auto& v = z[pin.var];
        const int ngroups = static_cast<int>(pin.target.size());
        double sums[256];
        int gsize[256];
        std::fill(sums, sums + ngroups, 0.0);
        std::fill(gsize, gsize + ngroups, 0);
        for (size_t i = 0; i < v.size(); ++i) {
            const int gi = pin.group_of_cell[i];
            if (gi >= 0) {
                sums[gi] += v[i];
                gsize[gi]++;
            }
        }
        for (size_t i = 0; i < v.size(); ++i) {
            const int gi = pin.group_of_cell[i];
            if (gi < 0) continue;
            if (sums[gi] > kZFloor)
                v[i] *= pin.target[gi] / sums[gi];
            else
                v[i] = pin.target[gi] / gsize[gi];
        }
    }
}

void normalize_block(const SimplexVar& var, std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (s <= kZFloor) {
        int n = 0;
        for (size_t i = 0; i < v.size(); ++i)
            if (var.mask.empty() || var.mask[i]) ++n;
        for (size_t i = 0; i < v.size(); ++i)
            v[i] = (var.mask.empty() || var.mask[i]) ? 1.0 / n : 0.0;
        return;
    }
    for (double& x : v) x /= s;
}

double fw_gap(const Program& p, const std::vector<std::vector<double>>& z,
              const std::vector<std::vector<double>>& g) {
    double gap = 0.0;
    for (size_t b = 0; b < z.size(); ++b) {
        double ip = 0.0, gmin = inf();
        for (size_t i = 0; i < z[b].size(); ++i) {
            if (!p.vars[b].mask.empty() && !p.vars[b].mask[i]) continue;
            ip += g[b][i] * z[b][i];
            gmin = std::min(gmin, g[b][i]);
        }
        gap += std::max(0.0, ip - gmin);
    }
    return gap;
}

double constraint_violation(const Program& p, const std::vector<double>& cvals) {
    double v = 0.0;
    for (size_t j = 0; j < cvals.size(); ++j) {
        const double h = std::isfinite(cvals[j]) ? cvals[j] : 1.0;
        if (p.constraints[j].equality)
            v = std::max(v, std::abs(h));
        else
            v = std::max(v, std::max(0.0, h));
    }
    return v;
}

}  // namespace

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::ok: return "ok";
        case SolveStatus::max_iterations: return "max_iterations";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::numerical_trouble: return "numerical_trouble";
    }
    return "unknown";
}

double eval_expr(const Expr& e, const std::vector<std::vector<double>>& z) {
    Program dummy;
    dummy.objective = e;
    Evaluator ev(dummy);
    return ev.value(e, z);
}

SolveResult solve(const Program& p, const SolveOptions& opt) {
    static const bool trace = std::getenv("ABCEXP_SOLVE_TRACE") != nullptr;
    const int nvars = static_cast<int>(p.vars.size());
    std::vector<std::vector<double>> z(nvars);
    for (int b = 0; b < nvars; ++b) {
        const auto& var = p.vars[b];
        if (!var.init.empty()) {
            z[b] = var.init;
        } else {
            z[b].assign(var.size, 0.0);
        }
        if (!var.mask.empty())
            for (int i = 0; i < var.size; ++i)
                if (!var.mask[i]) z[b][i] = 0.0;
        normalize_block(var, z[b]);
    }
    apply_pins(p, z);

    Evaluator ev(p);
    AlState st;
    st.rho = opt.rho0;
    st.lambda.assign(p.constraints.size(), 0.0);

    std::vector<std::vector<double>> g(nvars), ztrial(nvars);
    for (int b = 0; b < nvars; ++b) {
        g[b].assign(p.vars[b].size, 0.0);
        ztrial[b].assign(p.vars[b].size, 0.0);
    }

    std::vector<double> cvals, ctrial, window;
    int iters = 0;
    double viol_prev = inf();
    double eps_inner = 1e-4;
    double gap = inf(), viol = inf();
    int outer = 0;
    double eta = 0.5;
    double L_prev_outer = inf();
    int stable_outers = 0;

    for (outer = 0; outer < opt.max_outer && iters < opt.max_iterations; ++outer) {
        double L = al_value(ev, p, z, st, cvals);
        window.clear();
        while (iters < opt.max_iterations) {
            ++iters;
            al_grad(ev, p, z, st, cvals, g);
            gap = fw_gap(p, z, g);
            if (gap <= eps_inner) break;

            bool accepted = false;
            for (int bt = 0; bt < 60 && !accepted; ++bt) {
                for (int b = 0; b < nvars; ++b) {
                    const auto& var = p.vars[b];
                    double gmin = inf();
                    for (int i = 0; i < var.size; ++i)
                        if (var.mask.empty() || var.mask[i])
                            gmin = std::min(gmin, g[b][i]);
                    for (int i = 0; i < var.size; ++i) {
                        if (!var.mask.empty() && !var.mask[i]) {
                            ztrial[b][i] = 0.0;
                            continue;
                        }
                        const double e =
                            std::clamp(-eta * (g[b][i] - gmin), -700.0, 700.0);
                        ztrial[b][i] = z[b][i] * std::exp(e);
                    }
                    normalize_block(var, ztrial[b]);
                }
                apply_pins(p, ztrial);
                const double Lt = al_value(ev, p, ztrial, st, ctrial);
                if (Lt < L) {
                    z.swap(ztrial);
                    cvals.swap(ctrial);
                    L = Lt;
                    eta = std::min(eta * 1.3, 1e3);
                    accepted = true;
                } else {
                    eta *= 0.5;
                    if (eta < 1e-14) break;
                }
            }
            if (!accepted) {
                // Multiplicative updates cannot regrow cells that underflowed
                // to zero; a Frank-Wolfe step toward the best vertex can.
                for (int b = 0; b < nvars && !accepted; ++b) {
                    const auto& var = p.vars[b];
                    int jmin = -1;
                    double gmin = inf();
                    for (int i = 0; i < var.size; ++i)
                        if ((var.mask.empty() || var.mask[i]) && g[b][i] < gmin) {
                            gmin = g[b][i];
                            jmin = i;
                        }
                    if (jmin < 0) continue;
                    double theta = 0.5;
                    for (int bt = 0; bt < 50; ++bt) {
                        for (int bb = 0; bb < nvars; ++bb) ztrial[bb] = z[bb];
                        for (int i = 0; i < var.size; ++i)
                            ztrial[b][i] = (1.0 - theta) * z[b][i];
                        ztrial[b][jmin] += theta;
                        apply_pins(p, ztrial);
                        const double Lt = al_value(ev, p, ztrial, st, ctrial);
                        if (Lt < L) {
                            z.swap(ztrial);
                            cvals.swap(ctrial);
                            L = Lt;
                            accepted = true;
                            break;
                        }
                        theta *= 0.5;
                        if (theta < 1e-13) break;
                    }
                }
                if (!accepted) break;
                eta = std::max(eta, 1e-4);
            }

            window.push_back(L);
            const int w = opt.stall_window;
            if (static_cast<int>(window.size()) > w) {
                const double then = window[window.size() - w - 1];
                // objective-stability exit, but keep grinding while the
                // stationarity gap is clearly above target
                if (std::abs(then - L) <=
                        opt.rel_obj_tol * std::max(1.0, std::abs(L)) &&
                    gap <= 100.0 * eps_inner)
                    break;
                if (static_cast<int>(window.size()) > 4 * w)
                    window.erase(window.begin(), window.end() - 2 * w);
            }
        }

        viol = constraint_violation(p, cvals);
        al_grad(ev, p, z, st, cvals, g, /*pure=*/true);
        const double gap_pure = fw_gap(p, z, g);
        if (trace)
            std::fprintf(stderr,
                         "[solve] outer=%d iters=%d L=%.12g gap=%.3e "
                         "gap_pure=%.3e viol=%.3e rho=%.1e eta=%.1e\n",
                         outer, iters, L, gap, gap_pure, viol, st.rho, eta);
        gap = gap_pure;
        const double L_now = eval_expr(p.objective, z);
        if (std::abs(L_now - L_prev_outer) <=
            std::max(1e-12, 0.1 * opt.rel_obj_tol * std::max(1.0, std::abs(L_now))))
            ++stable_outers;
        else
            stable_outers = 0;
        L_prev_outer = L_now;
        if (viol <= opt.tol_constraint && gap_pure <= opt.tol_kkt) break;
        if (viol <= opt.tol_constraint && stable_outers >= 3) break;

        for (size_t j = 0; j < p.constraints.size(); ++j) {
            const double h = std::isfinite(cvals[j]) ? cvals[j] : 1.0;
            if (p.constraints[j].equality)
                st.lambda[j] += st.rho * h;
            else
                st.lambda[j] = std::max(0.0, st.lambda[j] + st.rho * h);
        }
        // grow rho only while the violation is genuinely above target;
        // otherwise rho-scaled noise swamps the inner gradients
        if (viol > 0.25 * viol_prev && viol > 10.0 * opt.tol_constraint)
            st.rho = std::min(st.rho * opt.rho_growth, opt.rho_max);
        viol_prev = viol;
        eps_inner = std::clamp(0.05 * viol, 0.3 * opt.tol_kkt, 1e-4);
        eta = std::max(eta, 1e-6);
    }

    SolveResult r;
    r.z = z;
    r.multipliers = st.lambda;
    r.iterations = iters;
    r.outer_iterations = outer;
    r.objective = eval_expr(p.objective, z);
    std::vector<double> cv;
    al_value(ev, p, z, st, cv);
    const double final_viol = constraint_violation(p, cv);
    r.max_violation = final_viol;
    r.kkt_residual = std::max(final_viol, gap);
    if (final_viol <= std::max(opt.tol_constraint * 10.0, 1e-8) &&
        (gap <= opt.tol_kkt * 10.0 || stable_outers >= 3))
        r.status = SolveStatus::ok;
    else if (final_viol > opt.infeasible_violation && st.rho >= opt.rho_max * 0.99)
        r.status = SolveStatus::infeasible;
    else if (final_viol <= 1e-7)
        r.status = SolveStatus::max_iterations;
    else
        r.status = SolveStatus::numerical_trouble;
    return r;
}

}  // namespace abcexp
