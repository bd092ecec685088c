#include "abcexp/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace abcexp {

namespace {

void for_each_composition(int parts, int total,
                          const std::function<void(const std::vector<int>&)>& emit) {
    if (parts <= 0) return;
    std::vector<int> cnt(parts, 0);
    std::function<void(int, int)> rec = [&](int i, int rem) {
        if (i == parts - 1) {
            cnt[i] = rem;
            emit(cnt);
            return;
        }
        for (int v = 0; v <= rem; ++v) {
            cnt[i] = v;
            rec(i + 1, rem - v);
        }
    };
    rec(0, total);
}

std::uint64_t composition_count(int parts, int total) {
    if (parts <= 0) return 0;
    long double r = 1.0L;
    for (int i = 1; i < parts; ++i) r = r * (total + i) / i;
    return static_cast<std::uint64_t>(r + 0.5L);
}

// Conditionals Q_{UX|Y}(.|y), one lattice point per composition over the
// admissible (u,x) cells. Coordinates are unweighted slice contributions
// (gamma part, beta part, E ln(1/W) part); scaling by qhat_Y(y) preserves
// dominance, so the Pareto-minimal subset is computed once per slice.
struct SliceA {
    int y = 0;
    std::vector<int> cells;                  // u*X + x
    std::vector<std::array<double, 3>> pts;  // g, b, w
    std::vector<std::vector<uint8_t>> comp;
    std::vector<int> pruned;
    std::array<double, 3> mins{0, 0, 0};
};

// Conditionals Q_{X|UY}(.|u,y); coordinates (beta part, E ln(1/W) part).
struct SliceB {
    int u = 0, y = 0;
    std::vector<int> cells;                  // x
    std::vector<std::array<double, 2>> pts;
    std::vector<std::vector<uint8_t>> comp;
    std::vector<int> pruned;
    std::array<double, 2> mins{0, 0};
};

struct Tables {
    const ChannelModel* inst = nullptr;
    Alphabets a;
    JointDist3 P{Alphabets{1, 1, 1}, {1.0}};
    int k = 16;
    std::vector<double> pu, pxg;
    std::vector<SliceA> sa;   // per y
    std::vector<SliceB> sb;   // index u*Y + y
};

SliceA build_slice_a(const Tables& tb, int y) {
    const auto& a = tb.a;
    SliceA s;
    s.y = y;
    for (int u = 0; u < a.U; ++u)
        for (int x = 0; x < a.X; ++x)
            if (tb.inst->p_ux[u * a.X + x] > 0.0 &&
                tb.inst->w_y[x * a.Y + y] > 0.0)
                s.cells.push_back(u * a.X + x);
    const int m = static_cast<int>(s.cells.size());
    for_each_composition(m, tb.k, [&](const std::vector<int>& cnt) {
        std::vector<double> mu(a.U, 0.0);
        for (int j = 0; j < m; ++j)
            mu[s.cells[j] / a.X] += static_cast<double>(cnt[j]) / tb.k;
        double g = 0.0, b = 0.0, w = 0.0;
        for (int j = 0; j < m; ++j) {
            const double c = static_cast<double>(cnt[j]) / tb.k;
            if (c <= 0.0) continue;
            const int u = s.cells[j] / a.X, x = s.cells[j] % a.X;
            b += c * std::log(c / (mu[u] * tb.pxg[u * a.X + x]));
            w -= c * std::log(tb.inst->w_y[x * a.Y + y]);
        }
        for (int u = 0; u < a.U; ++u)
            if (mu[u] > 0.0) g += mu[u] * std::log(mu[u] / tb.pu[u]);
        s.pts.push_back({g, b, w});
        s.comp.emplace_back(cnt.begin(), cnt.end());
    });
    const int n = static_cast<int>(s.pts.size());
    std::vector<char> dom(n, 0);
    for (int i = 0; i < n; ++i) {
        if (dom[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (i == j || dom[j]) continue;
            if (s.pts[i][0] <= s.pts[j][0] && s.pts[i][1] <= s.pts[j][1] &&
                s.pts[i][2] <= s.pts[j][2] &&
                (s.pts[i][0] < s.pts[j][0] || s.pts[i][1] < s.pts[j][1] ||
                 s.pts[i][2] < s.pts[j][2] || i < j))
                dom[j] = 1;
        }
    }
    for (int i = 0; i < n; ++i)
        if (!dom[i]) s.pruned.push_back(i);
    s.mins = {inf(), inf(), inf()};
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) s.mins[c] = std::min(s.mins[c], s.pts[i][c]);
    if (n == 0) s.mins = {0, 0, 0};
    return s;
}

SliceB build_slice_b(const Tables& tb, int u, int y) {
    const auto& a = tb.a;
    SliceB s;
    s.u = u;
    s.y = y;
    for (int x = 0; x < a.X; ++x)
        if (tb.pxg[u * a.X + x] > 0.0 && tb.inst->w_y[x * a.Y + y] > 0.0)
            s.cells.push_back(x);
    const int m = static_cast<int>(s.cells.size());
    for_each_composition(m, tb.k, [&](const std::vector<int>& cnt) {
        double b = 0.0, w = 0.0;
        for (int j = 0; j < m; ++j) {
            const double c = static_cast<double>(cnt[j]) / tb.k;
            if (c <= 0.0) continue;
            const int x = s.cells[j];
            b += c * std::log(c / tb.pxg[u * a.X + x]);
            w -= c * std::log(tb.inst->w_y[x * a.Y + y]);
        }
        s.pts.push_back({b, w});
        s.comp.emplace_back(cnt.begin(), cnt.end());
    });
    const int n = static_cast<int>(s.pts.size());
    std::vector<char> dom(n, 0);
    for (int i = 0; i < n; ++i) {
        if (dom[i]) continue;
        for (int j = 0; j < n; ++j) {
            if (i == j || dom[j]) continue;
            if (s.pts[i][0] <= s.pts[j][0] && s.pts[i][1] <= s.pts[j][1] &&
                (s.pts[i][0] < s.pts[j][0] || s.pts[i][1] < s.pts[j][1] || i < j))
                dom[j] = 1;
        }
    }
    for (int i = 0; i < n; ++i)
        if (!dom[i]) s.pruned.push_back(i);
    s.mins = {inf(), inf()};
    for (const auto& p : s.pts)
        for (int c = 0; c < 2; ++c) s.mins[c] = std::min(s.mins[c], p[c]);
    if (s.pts.empty()) s.mins = {0, 0};
    return s;
}

Tables build_tables(const ChannelModel& inst, int k, bool need_a, bool need_b) {
    Tables tb;
    tb.inst = &inst;
    tb.a = inst.alph;
    tb.P = inst.p_uxy();
    tb.k = k;
    tb.pu = inst.p_u();
    tb.pxg = inst.p_x_given_u();
    if (need_a)
        for (int y = 0; y < tb.a.Y; ++y) tb.sa.push_back(build_slice_a(tb, y));
    if (need_b)
        for (int u = 0; u < tb.a.U; ++u)
            for (int y = 0; y < tb.a.Y; ++y)
                tb.sb.push_back(build_slice_b(tb, u, y));
    return tb;
}

// ---------- lattice s0 and its dual upper bound ----------

struct S0Grid {
    double value = -inf();     // -inf when no lattice point is feasible
    std::vector<int> pick;     // per active slice, aligned with `active`
    std::vector<int> active;   // slice index u*Y + y
};

S0Grid s0_grid(const Tables& tb, const std::vector<double>& quy, double r1,
               double delta, EnsembleKind kind) {
    const auto& a = tb.a;
    S0Grid out;
    std::vector<const SliceB*> act;
    std::vector<double> wgt;
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y)
            if (quy[u * a.Y + y] > 0.0) {
                act.push_back(&tb.sb[u * a.Y + y]);
                wgt.push_back(quy[u * a.Y + y]);
                out.active.push_back(u * a.Y + y);
            }
    const int ns = static_cast<int>(act.size());
    for (int i = 0; i < ns; ++i)
        if (act[i]->pts.empty()) return out;  // impossible slice
    std::vector<double> minrest_b(ns + 1, 0.0), minrest_bw(ns + 1, 0.0);
    for (int i = ns - 1; i >= 0; --i) {
        minrest_b[i] = minrest_b[i + 1] + wgt[i] * act[i]->mins[0];
        minrest_bw[i] =
            minrest_bw[i + 1] + wgt[i] * (act[i]->mins[0] + act[i]->mins[1]);
    }
    const bool cc = kind == EnsembleKind::constant_composition;
    std::vector<double> acc_ux(cc ? a.U * a.X : 0, 0.0);
    double best = inf();
    std::vector<int> pick(ns, -1), bestpick;
    std::function<void(int, double, double)> rec = [&](int i, double bsum,
                                                       double bwsum) {
        if (bsum + minrest_b[i] - r1 > delta + 1e-15) return;
        if (bwsum + minrest_bw[i] - r1 >= best) return;
        if (i == ns) {
            if (cc)
                for (int cidx = 0; cidx < a.U * a.X; ++cidx)
                    if (std::abs(acc_ux[cidx] - tb.inst->p_ux[cidx]) >
                        delta + 1e-12)
                        return;
            best = bwsum - r1;
            bestpick = pick;
            return;
        }
        const auto& sl = *act[i];
        const int npts = static_cast<int>(sl.pts.size());
        for (int t = 0; t < npts; ++t) {
            pick[i] = t;
            if (cc)
                for (size_t j = 0; j < sl.cells.size(); ++j)
                    acc_ux[sl.u * a.X + sl.cells[j]] +=
                        wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
            rec(i + 1, bsum + wgt[i] * sl.pts[t][0],
                bwsum + wgt[i] * (sl.pts[t][0] + sl.pts[t][1]));
            if (cc)
                for (size_t j = 0; j < sl.cells.size(); ++j)
                    acc_ux[sl.u * a.X + sl.cells[j]] -=
                        wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
        }
        pick[i] = -1;
    };
    rec(0, 0.0, 0.0);
    if (std::isfinite(best)) {
        out.value = -best;
        out.pick = bestpick;
    }
    return out;
}

// Weak-duality upper bound on the true s0(qhat_UY, R1): for mu >= 0 the inner
// minimum over each conditional has the closed soft-min form, so every mu
// yields a lower bound on min[beta + f]; ternary search tightens it. The
// strict oracle uses this so its psi_c value upper-bounds the truth (also
// valid for constant composition, whose feasible set is smaller).
double s0_dual_upper(const Tables& tb, const std::vector<double>& quy, double r1) {
    const auto& a = tb.a;
    auto dual = [&](double mu) {
        double s = 0.0;
        for (int u = 0; u < a.U; ++u)
            for (int y = 0; y < a.Y; ++y) {
                const double q = quy[u * a.Y + y];
                if (q <= 0.0) continue;
                double z = 0.0;
                for (int x = 0; x < a.X; ++x) {
                    const double p = tb.pxg[u * a.X + x];
                    const double w = tb.inst->w_y[x * a.Y + y];
                    if (p > 0.0 && w > 0.0) z += p * std::pow(w, 1.0 / (1.0 + mu));
                }
                if (z <= 0.0) return -inf();
                s -= q * (1.0 + mu) * std::log(z);
            }
        return s - mu * r1 - r1;
    };
    double lo = 0.0, hi = 64.0;
    for (int it = 0; it < 72; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (dual(m1) < dual(m2))
            lo = m1;
        else
            hi = m2;
    }
    const double lb = std::max(dual(0.0), dual(0.5 * (lo + hi)));
    return -lb;
}

// ---------- inner scans over products of slice lattices ----------

struct InnerBest {
    double val = inf();
    std::vector<int> pick;
    std::vector<int> active;  // slice ids (y, or u*Y+y)
};

// psi_a / psi_c inner: minimize Phi subject to w + omega_const <= Delta + delta.
void scan_inner_a(const Tables& tb, const std::vector<double>& qy,
                  double omega_const, double r1, double r2, double delta,
                  bool cc_pin, double pin_delta, double ub, InnerBest& out) {
    const auto& a = tb.a;
    std::vector<const SliceA*> act;
    std::vector<double> wgt;
    out.active.clear();
    for (int y = 0; y < a.Y; ++y)
        if (qy[y] > 0.0) {
            act.push_back(&tb.sa[y]);
            wgt.push_back(qy[y]);
            out.active.push_back(y);
        }
    const int ns = static_cast<int>(act.size());
    for (int i = 0; i < ns; ++i)
        if (act[i]->pts.empty()) return;  // no admissible conditional
    std::vector<std::array<double, 3>> minrest(ns + 1, {0.0, 0.0, 0.0});
    for (int i = ns - 1; i >= 0; --i)
        for (int c = 0; c < 3; ++c)
            minrest[i][c] = minrest[i + 1][c] + wgt[i] * act[i]->mins[c];

    std::vector<int> pick(ns, -1);
    std::vector<double> acc_ux(cc_pin ? a.U * a.X : 0, 0.0);
    double best = std::min(ub, out.val);
    std::function<void(int, double, double, double)> rec =
        [&](int i, double g, double b, double w) {
            const double glb = g + minrest[i][0] - r2;
            const double blb = b + minrest[i][1] - r1;
            const double wlb = w + minrest[i][2] + omega_const;
            if (phi_from(glb, blb) >= best) return;
            if (wlb > delta_from(glb, blb) + delta + 1e-15) return;
            if (i == ns) {
                if (cc_pin)
                    for (int cidx = 0; cidx < a.U * a.X; ++cidx)
                        if (std::abs(acc_ux[cidx] - tb.inst->p_ux[cidx]) >
                            pin_delta + 1e-12)
                            return;
                const double gam = g - r2, bet = b - r1;
                if (w + omega_const > delta_from(gam, bet) + delta + 1e-15)
                    return;
                const double v = phi_from(gam, bet);
                if (v < best) {
                    best = v;
                    out.val = v;
                    out.pick = pick;
                }
                return;
            }
            const auto& sl = *act[i];
            const bool use_pruned = !cc_pin;
            const int npts = use_pruned ? static_cast<int>(sl.pruned.size())
                                        : static_cast<int>(sl.pts.size());
            for (int tt = 0; tt < npts; ++tt) {
                const int t = use_pruned ? sl.pruned[tt] : tt;
                if (cc_pin) {
                    bool bad = false;
                    for (size_t j = 0; j < sl.cells.size() && !bad; ++j) {
                        const double add =
                            wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
                        if (acc_ux[sl.cells[j]] + add >
                            tb.inst->p_ux[sl.cells[j]] + pin_delta + 1e-12)
                            bad = true;
                    }
                    if (bad) continue;
                    for (size_t j = 0; j < sl.cells.size(); ++j)
                        acc_ux[sl.cells[j]] +=
                            wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
                }
                pick[i] = t;
                rec(i + 1, g + wgt[i] * sl.pts[t][0], b + wgt[i] * sl.pts[t][1],
                    w + wgt[i] * sl.pts[t][2]);
                if (cc_pin)
                    for (size_t j = 0; j < sl.cells.size(); ++j)
                        acc_ux[sl.cells[j]] -=
                            wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
            }
            pick[i] = -1;
        };
    rec(0, 0.0, 0.0, 0.0);
}

// psi_b inner: minimize |beta|_+ subject to w + omega_const <= |-beta|_+ + delta.
void scan_inner_b(const Tables& tb, const std::vector<double>& quy,
                  double omega_const, double r1, double delta, bool cc_pin,
                  double pin_delta, double ub, InnerBest& out) {
    const auto& a = tb.a;
    std::vector<const SliceB*> act;
    std::vector<double> wgt;
    out.active.clear();
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y)
            if (quy[u * a.Y + y] > 0.0) {
                act.push_back(&tb.sb[u * a.Y + y]);
                wgt.push_back(quy[u * a.Y + y]);
                out.active.push_back(u * a.Y + y);
            }
    const int ns = static_cast<int>(act.size());
    for (int i = 0; i < ns; ++i)
        if (act[i]->pts.empty()) return;
    std::vector<std::array<double, 2>> minrest(ns + 1, {0.0, 0.0});
    for (int i = ns - 1; i >= 0; --i)
        for (int c = 0; c < 2; ++c)
            minrest[i][c] = minrest[i + 1][c] + wgt[i] * act[i]->mins[c];

    std::vector<int> pick(ns, -1);
    std::vector<double> acc_ux(cc_pin ? a.U * a.X : 0, 0.0);
    double best = std::min(ub, out.val);
    std::function<void(int, double, double)> rec = [&](int i, double b, double w) {
        const double blb = b + minrest[i][0] - r1;
        const double wlb = w + minrest[i][1] + omega_const;
        if (clamp_pos(blb) >= best) return;
        if (wlb > clamp_pos(-blb) + delta + 1e-15) return;
        if (i == ns) {
            if (cc_pin)
                for (int cidx = 0; cidx < a.U * a.X; ++cidx)
                    if (std::abs(acc_ux[cidx] - tb.inst->p_ux[cidx]) >
                        pin_delta + 1e-12)
                        return;
            const double bet = b - r1;
            if (w + omega_const > clamp_pos(-bet) + delta + 1e-15) return;
            const double v = clamp_pos(bet);
            if (v < best) {
                best = v;
                out.val = v;
                out.pick = pick;
            }
            return;
        }
        const auto& sl = *act[i];
        const bool use_pruned = !cc_pin;
        const int npts = use_pruned ? static_cast<int>(sl.pruned.size())
                                    : static_cast<int>(sl.pts.size());
        for (int tt = 0; tt < npts; ++tt) {
            const int t = use_pruned ? sl.pruned[tt] : tt;
            if (cc_pin) {
                bool bad = false;
                for (size_t j = 0; j < sl.cells.size() && !bad; ++j) {
                    const double add =
                        wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
                    if (acc_ux[sl.u * a.X + sl.cells[j]] + add >
                        tb.inst->p_ux[sl.u * a.X + sl.cells[j]] + pin_delta + 1e-12)
                        bad = true;
                }
                if (bad) continue;
                for (size_t j = 0; j < sl.cells.size(); ++j)
                    acc_ux[sl.u * a.X + sl.cells[j]] +=
                        wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
            }
            pick[i] = t;
            rec(i + 1, b + wgt[i] * sl.pts[t][0], w + wgt[i] * sl.pts[t][1]);
            if (cc_pin)
                for (size_t j = 0; j < sl.cells.size(); ++j)
                    acc_ux[sl.u * a.X + sl.cells[j]] -=
                        wgt[i] * sl.comp[t][j] / static_cast<double>(tb.k);
        }
        pick[i] = -1;
    };
    rec(0, 0.0, 0.0);
}

// ---------- witness composition ----------

JointDist3 compose_witness_a(const Tables& tb, const std::vector<double>& qy,
                             const InnerBest& ib) {
    const auto& a = tb.a;
    std::vector<double> m(a.cells(), 0.0);
    for (size_t i = 0; i < ib.active.size(); ++i) {
        const int y = ib.active[i];
        const auto& sl = tb.sa[y];
        const auto& comp = sl.comp[ib.pick[i]];
        for (size_t j = 0; j < sl.cells.size(); ++j) {
            const int u = sl.cells[j] / a.X, x = sl.cells[j] % a.X;
            m[a.idx(u, x, y)] =
                qy[y] * static_cast<double>(comp[j]) / static_cast<double>(tb.k);
        }
    }
    return JointDist3::from_weights(a, std::move(m));
}

JointDist3 compose_witness_b(const Tables& tb, const std::vector<double>& quy,
                             const InnerBest& ib) {
    const auto& a = tb.a;
    std::vector<double> m(a.cells(), 0.0);
    for (size_t i = 0; i < ib.active.size(); ++i) {
        const int u = ib.active[i] / a.Y, y = ib.active[i] % a.Y;
        const auto& sl = tb.sb[ib.active[i]];
        const auto& comp = sl.comp[ib.pick[i]];
        for (size_t j = 0; j < sl.cells.size(); ++j)
            m[a.idx(u, sl.cells[j], y)] = quy[u * a.Y + y] *
                                          static_cast<double>(comp[j]) /
                                          static_cast<double>(tb.k);
    }
    return JointDist3::from_weights(a, std::move(m));
}

struct OuterBest {
    double val = inf();
    long qidx = -1;
    InnerBest inner;
    double s0val = 0.0;
};

void merge_outer(OuterBest& a, const OuterBest& b) {
    if (b.val < a.val || (b.val == a.val && b.qidx >= 0 &&
                          (a.qidx < 0 || b.qidx < a.qidx)))
        a = b;
}

OracleResult run_oracle(OracleProblem problem, const ChannelModel& inst,
                        const RatePoint& rates, const GridSpec& grid,
                        EnsembleKind kind, const OracleOptions& opt,
                        const std::optional<std::vector<double>>& qhat_uy,
                        bool parallel) {
    grid.validate();
    rates.validate();
    inst.validate();
    const auto& a = inst.alph;
    const double delta = grid.slack_c / grid.k;
    const bool cc = kind == EnsembleKind::constant_composition;

    const bool need_a =
        problem == OracleProblem::psi_a || problem == OracleProblem::psi_c;
    const bool need_b = problem == OracleProblem::psi_b ||
                        problem == OracleProblem::psi_c ||
                        problem == OracleProblem::s0;
    Tables tb = build_tables(inst, grid.k, need_a, need_b);

    OracleResult res;

    if (problem == OracleProblem::s0) {
        if (!qhat_uy)
            throw std::invalid_argument("oracle_min(s0) needs qhat_uy");
        std::uint64_t est = 1;
        for (const auto& sl : tb.sb)
            est = std::min<std::uint64_t>(
                est * std::max<size_t>(1, sl.pts.size()), (std::uint64_t)1 << 62);
        res.evaluations_estimate = est;
        if (est > opt.max_evaluations) {
            res.refused = true;
            return res;
        }
        auto sg = s0_grid(tb, *qhat_uy, rates.r1, delta, kind);
        auto sg0 = s0_grid(tb, *qhat_uy, rates.r1, 0.0, kind);
        res.value = sg.value;
        res.value_strict = sg0.value;
        res.feasible = std::isfinite(sg.value);
        if (res.feasible) {
            InnerBest ib;
            ib.pick = sg.pick;
            ib.active = sg.active;
            res.q = compose_witness_b(tb, *qhat_uy, ib);
        }
        return res;
    }

    // outer lattice over the support of P_UXY
    std::vector<int> mask_cells;
    for (int i = 0; i < a.cells(); ++i)
        if (tb.P.mass()[i] > 0.0) mask_cells.push_back(i);
    const int m = static_cast<int>(mask_cells.size());
    const std::uint64_t outer_n = composition_count(m, grid.k);

    const std::uint64_t sat = 4'000'000'000'000'000'000ULL;
    auto mul_sat = [sat](std::uint64_t x, std::uint64_t y) {
        if (y != 0 && x > sat / y) return sat;
        return x * y;
    };
    // bound-based pruning collapses the naive product of slice sizes; charge
    // each outer point for scaling its slice tables, which is the cost floor
    std::uint64_t inner_cost = 1;
    if (need_a)
        for (const auto& sl : tb.sa)
            inner_cost += cc ? sl.pts.size() : sl.pruned.size();
    else
        for (const auto& sl : tb.sb)
            inner_cost += cc ? sl.pts.size() : sl.pruned.size();
    res.evaluations_estimate = mul_sat(outer_n, inner_cost);
    if (res.evaluations_estimate > opt.max_evaluations) {
        res.refused = true;
        return res;
    }

    std::vector<std::vector<uint8_t>> outer;
    outer.reserve(outer_n);
    for_each_composition(m, grid.k, [&](const std::vector<int>& cnt) {
        outer.emplace_back(cnt.begin(), cnt.end());
    });
    // P itself is always a candidate, whether or not it sits on the lattice:
    // the restricted minimum stays an upper bound and the feasible-point
    // anchor keeps the oracle from drifting on coarse grids
    std::vector<std::vector<double>> outer_extra;
    {
        std::vector<double> pvec(m);
        for (int j = 0; j < m; ++j) pvec[j] = tb.P.mass()[mask_cells[j]];
        outer_extra.push_back(std::move(pvec));
    }

    const auto pmass = tb.P.mass();
    OuterBest best_slack, best_strict;
    std::atomic<double> shared_slack{inf()}, shared_strict{inf()};
    auto atomic_min = [](std::atomic<double>& target, double v) {
        double cur = target.load(std::memory_order_relaxed);
        while (v < cur &&
               !target.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
        }
    };

    const long n_lattice = static_cast<long>(outer.size());
    const long n_outer = n_lattice + static_cast<long>(outer_extra.size());
    int nthreads = 1;
#ifdef _OPENMP
    nthreads = parallel ? omp_get_max_threads() : 1;
#else
    (void)parallel;
#endif
    std::vector<OuterBest> tl_slack(nthreads), tl_strict(nthreads);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 256) num_threads(nthreads) \
    if (parallel && nthreads > 1)
#endif
    for (long qi = 0; qi < n_outer; ++qi) {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        OuterBest& bs = tl_slack[tid];
        OuterBest& bt = tl_strict[tid];
        std::vector<double> qcell(m);
        if (qi < n_lattice) {
            const auto& cnt = outer[qi];
            for (int j = 0; j < m; ++j)
                qcell[j] = static_cast<double>(cnt[j]) / grid.k;
        } else {
            const auto& ex = outer_extra[qi - n_lattice];
            for (int j = 0; j < m; ++j) qcell[j] = ex[j];
        }

        double D = 0.0;
        for (int j = 0; j < m; ++j) {
            if (qcell[j] <= 0.0) continue;
            D += qcell[j] * std::log(qcell[j] / pmass[mask_cells[j]]);
        }
        const double hint =
            std::min({bs.val, bt.val, shared_slack.load(std::memory_order_relaxed),
                      shared_strict.load(std::memory_order_relaxed)});
        if (D >= hint) continue;

        // marginals of this outer candidate
        std::vector<double> qy(a.Y, 0.0), quy(static_cast<size_t>(a.U) * a.Y, 0.0),
            qux(static_cast<size_t>(a.U) * a.X, 0.0);
        double eqlnw = 0.0;
        for (int j = 0; j < m; ++j) {
            if (qcell[j] <= 0.0) continue;
            const int cell = mask_cells[j];
            const int y = cell % a.Y;
            const int x = (cell / a.Y) % a.X;
            const int u = cell / (a.X * a.Y);
            const double q = qcell[j];
            qy[y] += q;
            quy[u * a.Y + y] += q;
            qux[u * a.X + x] += q;
            eqlnw += q * std::log(inst.w_y[x * a.Y + y]);
        }
        double pin_dev = 0.0;
        if (cc)
            for (int cidx = 0; cidx < a.U * a.X; ++cidx)
                pin_dev = std::max(pin_dev,
                                   std::abs(qux[cidx] - inst.p_ux[cidx]));
        const bool slack_outer_ok = !cc || pin_dev <= delta + 1e-12;
        const bool strict_outer_ok = !cc || pin_dev <= 1e-12;
        if (!slack_outer_ok && !strict_outer_ok) continue;

        auto eval_pass = [&](double dlt, double omega_const, double pin_dlt,
                             OuterBest& acc, std::atomic<double>& shared_hint) {
            const double need =
                std::min(acc.val, shared_hint.load(std::memory_order_relaxed)) - D;
            if (need <= 0.0) return;
            InnerBest ib;
            if (problem == OracleProblem::psi_b)
                scan_inner_b(tb, quy, omega_const, rates.r1, dlt, cc, pin_dlt,
                             need, ib);
            else
                scan_inner_a(tb, qy, omega_const, rates.r1, rates.r2, dlt, cc,
                             pin_dlt, need, ib);
            if (std::isfinite(ib.val) &&
                (D + ib.val < acc.val ||
                 (D + ib.val == acc.val && (acc.qidx < 0 || qi < acc.qidx)))) {
                acc.val = D + ib.val;
                acc.qidx = qi;
                acc.inner = std::move(ib);
                atomic_min(shared_hint, acc.val);
            }
        };

        if (problem == OracleProblem::psi_a || problem == OracleProblem::psi_b) {
            const double om = eqlnw - rates.t;
            if (slack_outer_ok) eval_pass(delta, om, delta, bs, shared_slack);
            if (strict_outer_ok) eval_pass(0.0, om, 0.0, bt, shared_strict);
        } else {  // psi_c
            if (slack_outer_ok) {
                const auto sg = s0_grid(tb, quy, rates.r1, delta, kind);
                const double om =
                    std::isfinite(sg.value) ? sg.value - rates.t : -inf();
                const double before = bs.val;
                eval_pass(delta, om, delta, bs, shared_slack);
                if (bs.val < before) bs.s0val = sg.value;
            }
            if (strict_outer_ok) {
                const double om = s0_dual_upper(tb, quy, rates.r1) - rates.t;
                eval_pass(0.0, om, 0.0, bt, shared_strict);
            }
        }
    }

    for (int t = 0; t < nthreads; ++t) {
        merge_outer(best_slack, tl_slack[t]);
        merge_outer(best_strict, tl_strict[t]);
    }

    res.value = best_slack.val;
    res.value_strict = best_strict.val;
    res.feasible = std::isfinite(best_slack.val);
    if (res.feasible) {
        std::vector<double> w(a.cells(), 0.0);
        std::vector<double> qy(a.Y, 0.0), quy(static_cast<size_t>(a.U) * a.Y, 0.0);
        for (int j = 0; j < m; ++j) {
            const double q =
                best_slack.qidx < n_lattice
                    ? static_cast<double>(outer[best_slack.qidx][j]) / grid.k
                    : outer_extra[best_slack.qidx - n_lattice][j];
            w[mask_cells[j]] = q;
            const int cell = mask_cells[j];
            const int y = cell % a.Y;
            const int u = cell / (a.X * a.Y);
            qy[y] += q;
            quy[u * a.Y + y] += q;
        }
        res.qhat = JointDist3::from_weights(a, std::move(w));
        if (problem == OracleProblem::psi_b)
            res.q = compose_witness_b(tb, quy, best_slack.inner);
        else
            res.q = compose_witness_a(tb, qy, best_slack.inner);
        res.s0_at_witness = best_slack.s0val;
    }
    return res;
}

}  // namespace

void GridSpec::validate() const {
    if (k < 4) throw std::invalid_argument("grid k must be >= 4");
    if (slack_c < 0.0) throw std::invalid_argument("grid slack must be >= 0");
}

OracleResult oracle_min(OracleProblem problem, const ChannelModel& inst,
                        const RatePoint& rates, const GridSpec& grid,
                        EnsembleKind kind, const OracleOptions& opt,
                        const std::optional<std::vector<double>>& qhat_uy) {
    return run_oracle(problem, inst, rates, grid, kind, opt, qhat_uy,
                      opt.parallel);
}

OracleResult oracle_min_serial(OracleProblem problem, const ChannelModel& inst,
                               const RatePoint& rates, const GridSpec& grid,
                               EnsembleKind kind, const OracleOptions& opt,
                               const std::optional<std::vector<double>>& qhat_uy) {
    return run_oracle(problem, inst, rates, grid, kind, opt, qhat_uy, false);
}

}  // namespace abcexp
