#include "abcexp/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace abcexp {

namespace {

std::atomic<std::uint64_t> g_tie_count{0};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Per-trial substream: parallel and serial runs see identical draws.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(stream + 1)));
}

int sample_discrete(const double* p, int m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    for (int i = 0; i < m; ++i) {
        u -= p[i];
        if (u <= 0.0) return i;
    }
    for (int i = m - 1; i >= 0; --i)
        if (p[i] > 0.0) return i;
    return m - 1;
}

std::uint64_t codebook_size(double rate, int n) {
    const double raw = std::exp(static_cast<double>(n) * rate);
    if (raw > 4e6) throw std::invalid_argument("codebook size exceeds budget");
    return static_cast<std::uint64_t>(std::ceil(raw - 1e-12));
}

void generate_into(SuperpositionCodebook& cb, const ChannelModel& inst,
                   std::mt19937_64& rng) {
    const auto& a = inst.alph;
    const int n = cb.n;
    const auto pu = inst.p_u();
    const auto pxg = inst.p_x_given_u();
    cb.clouds.assign(cb.m2 * n, 0);
    cb.satellites.assign(cb.m1 * cb.m2 * n, 0);

    if (cb.kind == EnsembleKind::iid) {
        for (std::uint64_t j = 0; j < cb.m2; ++j)
            for (int i = 0; i < n; ++i)
                cb.clouds[j * n + i] =
                    static_cast<uint8_t>(sample_discrete(pu.data(), a.U, rng));
        for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
            for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2)
                for (int i = 0; i < n; ++i) {
                    const int u = cb.clouds[m2 * n + i];
                    cb.satellites[(m1 * cb.m2 + m2) * n + i] = static_cast<uint8_t>(
                        sample_discrete(pxg.data() + u * a.X, a.X, rng));
                }
        return;
    }

    // constant composition: permute a fixed type-realizing template, per cloud
    // and per conditional shell
    std::vector<int> nu(a.U, 0);
    std::vector<int> nux(static_cast<size_t>(a.U) * a.X, 0);
    for (int u = 0; u < a.U; ++u) {
        for (int x = 0; x < a.X; ++x) {
            const double v = n * inst.p_ux[u * a.X + x];
            const int r = static_cast<int>(std::llround(v));
            if (std::abs(v - r) > 1e-9) {
                const int good = smallest_constant_composition_n(inst);
                throw std::invalid_argument(
                    "constant composition requires n*P_UX integral; smallest "
                    "compatible n is " +
                    std::to_string(good));
            }
            nux[u * a.X + x] = r;
            nu[u] += r;
        }
    }

    std::vector<uint8_t> cloud_template;
    for (int u = 0; u < a.U; ++u)
        cloud_template.insert(cloud_template.end(), nu[u], static_cast<uint8_t>(u));

    auto shuffle_tail = [&](std::vector<uint8_t>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::uniform_int_distribution<size_t> d(0, i - 1);
            std::swap(v[i - 1], v[d(rng)]);
        }
    };

    std::vector<uint8_t> buf;
    for (std::uint64_t j = 0; j < cb.m2; ++j) {
        buf = cloud_template;
        shuffle_tail(buf);
        std::copy(buf.begin(), buf.end(), cb.clouds.begin() + j * n);
    }
    std::vector<std::vector<int>> positions(a.U);
    std::vector<uint8_t> shell;
    for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2) {
        for (auto& p : positions) p.clear();
        for (int i = 0; i < n; ++i)
            positions[cb.clouds[m2 * n + i]].push_back(i);
        for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1) {
            uint8_t* row = cb.satellites.data() + (m1 * cb.m2 + m2) * n;
            for (int u = 0; u < a.U; ++u) {
                if (nu[u] == 0) continue;
                shell.clear();
                for (int x = 0; x < a.X; ++x)
                    shell.insert(shell.end(), nux[u * a.X + x],
                                 static_cast<uint8_t>(x));
                shuffle_tail(shell);
                for (size_t i = 0; i < positions[u].size(); ++i)
                    row[positions[u][i]] = shell[i];
            }
        }
    }
}

double loglik(const std::vector<uint8_t>& y, const uint8_t* xrow, int n,
              const ChannelModel& inst) {
    const auto& a = inst.alph;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = inst.w_y[xrow[i] * a.Y + y[i]];
        if (w <= 0.0) return -inf();
        s += std::log(w);
    }
    return s;
}

// log(sum_i exp(l_i)) with max shift; empty or all -inf gives -inf
double logsumexp(const std::vector<double>& l) {
    double m = -inf();
    for (double v : l) m = std::max(m, v);
    if (!std::isfinite(m)) return -inf();
    double s = 0.0;
    for (double v : l) s += std::isfinite(v) ? std::exp(v - m) : 0.0;
    return m + std::log(s);
}

// log(sum - exp(own)) given the shifted linear sum; -inf when no competitor
// carries mass
double log_excluding(double m, double shifted_sum, double own) {
    const double rest =
        shifted_sum - (std::isfinite(own) ? std::exp(own - m) : 0.0);
    if (rest <= 0.0) return -inf();
    return m + std::log(rest);
}

struct Tally {
    // per decoder: 0 correct, 1 erased, 2 undetected
    double d1[3] = {0, 0, 0};
    double d2[3] = {0, 0, 0};
    double dp[3] = {0, 0, 0};
};

Interval wilson(std::uint64_t hits, std::uint64_t n) {
    if (n == 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    const double p = static_cast<double>(hits) / n;
    const double z2n = z * z / n;
    const double center = (p + z2n / 2.0) / (1.0 + z2n);
    const double half =
        z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n);
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct DecodeOutcome {
    PairDecode pair;
    int m1 = -1, m2 = -1;  // message decoders; -1 = erasure
};

DecodeOutcome decode_all(const std::vector<uint8_t>& y,
                         const SuperpositionCodebook& cb,
                         const ChannelModel& inst, double t) {
    DecodeOutcome out;
    out.pair = decode_pair(y, cb, inst, t);
    out.m1 = decode_message(1, y, cb, inst, t);
    out.m2 = decode_message(2, y, cb, inst, t);
    return out;
}

}  // namespace

int smallest_constant_composition_n(const ChannelModel& inst, int cap) {
    for (int n = 1; n <= cap; ++n) {
        bool ok = true;
        for (double p : inst.p_ux) {
            const double v = n * p;
            if (std::abs(v - std::llround(v)) > 1e-9) {
                ok = false;
                break;
            }
        }
        if (ok) return n;
    }
    return 0;
}

SuperpositionCodebook generate_codebook(const ChannelModel& inst, int n,
                                        const RatePoint& rates,
                                        EnsembleKind kind, std::uint64_t seed) {
    inst.validate();
    rates.validate();
    if (n < 1) throw std::invalid_argument("blocklength must be >= 1");
    SuperpositionCodebook cb;
    cb.n = n;
    cb.kind = kind;
    cb.seed = seed;
    cb.m1 = codebook_size(rates.r1, n);
    cb.m2 = codebook_size(rates.r2, n);
    if (cb.m1 * cb.m2 > 4'000'000ULL)
        throw std::invalid_argument("codebook size exceeds budget");
    auto rng = substream(seed, 0);
    generate_into(cb, inst, rng);
    return cb;
}

PairDecode decode_pair(const std::vector<uint8_t>& y,
                       const SuperpositionCodebook& cb,
                       const ChannelModel& inst, double t) {
    const std::uint64_t npairs = cb.m1 * cb.m2;
    std::vector<double> l(npairs);
    for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
        for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2)
            l[m1 * cb.m2 + m2] =
                loglik(y, cb.satellites.data() + (m1 * cb.m2 + m2) * cb.n, cb.n,
                       inst);
    PairDecode out;
    if (npairs == 1) {
        // no competitor: declare the lone pair whenever its likelihood is
        // positive (documented convention)
        if (std::isfinite(l[0])) out = {false, 0, 0};
        return out;
    }
    double m = -inf();
    for (double v : l) m = std::max(m, v);
    if (!std::isfinite(m)) return out;
    double s = 0.0;
    for (double v : l) s += std::isfinite(v) ? std::exp(v - m) : 0.0;
    const double thr = cb.n * t;
    for (std::uint64_t i = 0; i < npairs; ++i) {
        if (!std::isfinite(l[i])) continue;
        const double den = log_excluding(m, s, l[i]);
        if (std::isfinite(den) && l[i] - den == thr)
            g_tie_count.fetch_add(1, std::memory_order_relaxed);
        const bool win = std::isfinite(den) ? (l[i] - den > thr) : true;
        if (win) {
            out.erased = false;
            out.m1 = static_cast<int>(i / cb.m2);
            out.m2 = static_cast<int>(i % cb.m2);
            return out;  // at most one pair can clear the threshold for T >= 0
        }
    }
    return out;
}

int pair_claim_count(const std::vector<uint8_t>& y,
                     const SuperpositionCodebook& cb, const ChannelModel& inst,
                     double t) {
    const std::uint64_t npairs = cb.m1 * cb.m2;
    std::vector<double> l(npairs);
    for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
        for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2)
            l[m1 * cb.m2 + m2] =
                loglik(y, cb.satellites.data() + (m1 * cb.m2 + m2) * cb.n, cb.n,
                       inst);
    if (npairs == 1) return std::isfinite(l[0]) ? 1 : 0;
    double m = -inf();
    for (double v : l) m = std::max(m, v);
    if (!std::isfinite(m)) return 0;
    double s = 0.0;
    for (double v : l) s += std::isfinite(v) ? std::exp(v - m) : 0.0;
    const double thr = cb.n * t;
    int claims = 0;
    for (std::uint64_t i = 0; i < npairs; ++i) {
        if (!std::isfinite(l[i])) continue;
        const double den = log_excluding(m, s, l[i]);
        if (std::isfinite(den) ? (l[i] - den > thr) : true) ++claims;
    }
    return claims;
}

int decode_message(int j, const std::vector<uint8_t>& y,
                   const SuperpositionCodebook& cb, const ChannelModel& inst,
                   double t) {
    if (j != 1 && j != 2) throw std::invalid_argument("decoder index must be 1 or 2");
    const std::uint64_t mj = j == 1 ? cb.m1 : cb.m2;
    const std::uint64_t mo = j == 1 ? cb.m2 : cb.m1;
    std::vector<double> lsub(mj);
    std::vector<double> tmp(mo);
    for (std::uint64_t a = 0; a < mj; ++a) {
        for (std::uint64_t b = 0; b < mo; ++b) {
            const std::uint64_t m1 = j == 1 ? a : b;
            const std::uint64_t m2 = j == 1 ? b : a;
            tmp[b] = loglik(y, cb.satellites.data() + (m1 * cb.m2 + m2) * cb.n,
                            cb.n, inst);
        }
        lsub[a] = logsumexp(tmp);  // 1/M factors cancel in the ratio
    }
    if (mj == 1) return std::isfinite(lsub[0]) ? 0 : -1;
    double m = -inf();
    for (double v : lsub) m = std::max(m, v);
    if (!std::isfinite(m)) return -1;
    double s = 0.0;
    for (double v : lsub) s += std::isfinite(v) ? std::exp(v - m) : 0.0;
    const double thr = cb.n * t;
    for (std::uint64_t i = 0; i < mj; ++i) {
        if (!std::isfinite(lsub[i])) continue;
        const double den = log_excluding(m, s, lsub[i]);
        if (std::isfinite(den) && lsub[i] - den == thr)
            g_tie_count.fetch_add(1, std::memory_order_relaxed);
        const bool win = std::isfinite(den) ? (lsub[i] - den > thr) : true;
        if (win) return static_cast<int>(i);
    }
    return -1;
}

int message_claim_count(int j, const std::vector<uint8_t>& y,
                        const SuperpositionCodebook& cb,
                        const ChannelModel& inst, double t) {
    if (j != 1 && j != 2) throw std::invalid_argument("decoder index must be 1 or 2");
    const std::uint64_t mj = j == 1 ? cb.m1 : cb.m2;
    const std::uint64_t mo = j == 1 ? cb.m2 : cb.m1;
    std::vector<double> lsub(mj), tmp(mo);
    for (std::uint64_t a = 0; a < mj; ++a) {
        for (std::uint64_t b = 0; b < mo; ++b) {
            const std::uint64_t m1 = j == 1 ? a : b;
            const std::uint64_t m2 = j == 1 ? b : a;
            tmp[b] = loglik(y, cb.satellites.data() + (m1 * cb.m2 + m2) * cb.n,
                            cb.n, inst);
        }
        lsub[a] = logsumexp(tmp);
    }
    if (mj == 1) return std::isfinite(lsub[0]) ? 1 : 0;
    double m = -inf();
    for (double v : lsub) m = std::max(m, v);
    if (!std::isfinite(m)) return 0;
    double s = 0.0;
    for (double v : lsub) s += std::isfinite(v) ? std::exp(v - m) : 0.0;
    const double thr = cb.n * t;
    int claims = 0;
    for (std::uint64_t i = 0; i < mj; ++i) {
        if (!std::isfinite(lsub[i])) continue;
        const double den = log_excluding(m, s, lsub[i]);
        if (std::isfinite(den) ? (lsub[i] - den > thr) : true) ++claims;
    }
    return claims;
}

std::uint64_t tie_log_count() {
    return g_tie_count.load(std::memory_order_relaxed);
}

void reset_tie_log() { g_tie_count.store(0, std::memory_order_relaxed); }

namespace {

ErrorEstimate mc_core(const ChannelModel& inst, int n, const RatePoint& rates,
                      EnsembleKind kind, std::uint64_t trials,
                      std::uint64_t seed, const SimOptions& opt,
                      const SuperpositionCodebook* fixed, double fixed_t) {
    const auto& a = inst.alph;
    const double t = fixed ? fixed_t : rates.t;
    std::uint64_t c1t = 0, c1u = 0, c2t = 0, c2u = 0, cyt = 0, cyu = 0;

    const long nt = static_cast<long>(trials);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (opt.parallel) \
    reduction(+ : c1t, c1u, c2t, c2u, cyt, cyu)
#endif
    for (long trial = 0; trial < nt; ++trial) {
        auto rng = substream(seed, static_cast<std::uint64_t>(trial) + 1);
        SuperpositionCodebook local;
        const SuperpositionCodebook* cb = fixed;
        if (!fixed) {
            local.n = n;
            local.kind = kind;
            local.m1 = codebook_size(rates.r1, n);
            local.m2 = codebook_size(rates.r2, n);
            generate_into(local, inst, rng);
            cb = &local;
        }
        std::uniform_int_distribution<std::uint64_t> dm1(0, cb->m1 - 1),
            dm2(0, cb->m2 - 1);
        const std::uint64_t m1 = dm1(rng), m2 = dm2(rng);
        std::vector<uint8_t> y(cb->n);
        const uint8_t* xrow = cb->satellites.data() + (m1 * cb->m2 + m2) * cb->n;
        for (int i = 0; i < cb->n; ++i)
            y[i] = static_cast<uint8_t>(
                sample_discrete(inst.w_y.data() + xrow[i] * a.Y, a.Y, rng));

        const auto d = decode_all(y, *cb, inst, t);
        if (d.m1 != static_cast<int>(m1)) {
            ++c1t;
            if (d.m1 >= 0) ++c1u;
        }
        if (d.m2 != static_cast<int>(m2)) {
            ++c2t;
            if (d.m2 >= 0) ++c2u;
        }
        const bool pair_ok = !d.pair.erased &&
                             d.pair.m1 == static_cast<int>(m1) &&
                             d.pair.m2 == static_cast<int>(m2);
        if (!pair_ok) {
            ++cyt;
            if (!d.pair.erased) ++cyu;
        }
    }

    ErrorEstimate e;
    e.mode = ErrorEstimate::Mode::monte_carlo;
    e.trials = trials;
    const double nt_d = static_cast<double>(std::max<std::uint64_t>(1, trials));
    e.e1t = c1t / nt_d;
    e.e1u = c1u / nt_d;
    e.e2t = c2t / nt_d;
    e.e2u = c2u / nt_d;
    e.eYt = cyt / nt_d;
    e.eYu = cyu / nt_d;
    e.e1t_ci = wilson(c1t, trials);
    e.e1u_ci = wilson(c1u, trials);
    e.e2t_ci = wilson(c2t, trials);
    e.e2u_ci = wilson(c2u, trials);
    e.eYt_ci = wilson(cyt, trials);
    e.eYu_ci = wilson(cyu, trials);
    return e;
}

ErrorEstimate exact_core(const ChannelModel& inst,
                         const SuperpositionCodebook& cb, double t,
                         const SimOptions& opt, bool parallel) {
    const auto& a = inst.alph;
    double total_outputs = 1.0;
    for (int i = 0; i < cb.n; ++i) total_outputs *= a.Y;
    if (total_outputs > static_cast<double>(opt.max_exact_outputs))
        throw std::invalid_argument(
            "exact enumeration budget exceeded: |Y|^n = " +
            std::to_string(total_outputs) + " outputs");
    const std::uint64_t ny = static_cast<std::uint64_t>(total_outputs + 0.5);
    const std::uint64_t npairs = cb.m1 * cb.m2;

    // fixed-size chunks with in-order reduction keep the result identical for
    // any thread count
    const std::uint64_t chunk = 4096;
    const std::uint64_t nchunks = (ny + chunk - 1) / chunk;
    std::vector<std::vector<Tally>> partial(
        nchunks, std::vector<Tally>(npairs));

    const long nc = static_cast<long>(nchunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (long ci = 0; ci < nc; ++ci) {
        std::vector<uint8_t> y(cb.n);
        auto& part = partial[ci];
        const std::uint64_t lo = static_cast<std::uint64_t>(ci) * chunk;
        const std::uint64_t hi = std::min(ny, lo + chunk);
        for (std::uint64_t yi = lo; yi < hi; ++yi) {
            std::uint64_t v = yi;
            for (int i = 0; i < cb.n; ++i) {
                y[i] = static_cast<uint8_t>(v % a.Y);
                v /= a.Y;
            }
            const auto d = decode_all(y, cb, inst, t);
            for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
                for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2) {
                    const double ll = loglik(
                        y, cb.satellites.data() + (m1 * cb.m2 + m2) * cb.n,
                        cb.n, inst);
                    if (!std::isfinite(ll)) continue;
                    const double w = std::exp(ll);
                    auto& tl = part[m1 * cb.m2 + m2];
                    // decoder 1
                    if (d.m1 == static_cast<int>(m1))
                        tl.d1[0] += w;
                    else if (d.m1 < 0)
                        tl.d1[1] += w;
                    else
                        tl.d1[2] += w;
                    // decoder 2
                    if (d.m2 == static_cast<int>(m2))
                        tl.d2[0] += w;
                    else if (d.m2 < 0)
                        tl.d2[1] += w;
                    else
                        tl.d2[2] += w;
                    // pair decoder
                    if (!d.pair.erased && d.pair.m1 == static_cast<int>(m1) &&
                        d.pair.m2 == static_cast<int>(m2))
                        tl.dp[0] += w;
                    else if (d.pair.erased)
                        tl.dp[1] += w;
                    else
                        tl.dp[2] += w;
                }
        }
    }

    std::vector<Tally> sum(npairs);
    for (std::uint64_t ci = 0; ci < nchunks; ++ci)
        for (std::uint64_t pidx = 0; pidx < npairs; ++pidx)
            for (int k = 0; k < 3; ++k) {
                sum[pidx].d1[k] += partial[ci][pidx].d1[k];
                sum[pidx].d2[k] += partial[ci][pidx].d2[k];
                sum[pidx].dp[k] += partial[ci][pidx].dp[k];
            }

    ErrorEstimate e;
    e.mode = ErrorEstimate::Mode::exact_enumeration;
    e.trials = ny;
    for (std::uint64_t pidx = 0; pidx < npairs; ++pidx) {
        e.e1t += sum[pidx].d1[1] + sum[pidx].d1[2];
        e.e1u += sum[pidx].d1[2];
        e.e2t += sum[pidx].d2[1] + sum[pidx].d2[2];
        e.e2u += sum[pidx].d2[2];
        e.eYt += sum[pidx].dp[1] + sum[pidx].dp[2];
        e.eYu += sum[pidx].dp[2];
        for (const double* d : {sum[pidx].d1, sum[pidx].d2, sum[pidx].dp})
            e.partition_residual = std::max(
                e.partition_residual, std::abs(d[0] + d[1] + d[2] - 1.0));
    }
    const double scale = 1.0 / static_cast<double>(npairs);
    e.e1t *= scale;
    e.e1u *= scale;
    e.e2t *= scale;
    e.e2u *= scale;
    e.eYt *= scale;
    e.eYu *= scale;
    return e;
}

}  // namespace

ErrorEstimate estimate_errors(const ChannelModel& inst, int n,
                              const RatePoint& rates, EnsembleKind kind,
                              std::uint64_t trials, std::uint64_t seed,
                              const SimOptions& opt) {
    return mc_core(inst, n, rates, kind, trials, seed, opt, nullptr, 0.0);
}

ErrorEstimate estimate_errors_serial(const ChannelModel& inst, int n,
                                     const RatePoint& rates, EnsembleKind kind,
                                     std::uint64_t trials, std::uint64_t seed,
                                     const SimOptions& opt) {
    SimOptions o = opt;
    o.parallel = false;
    return mc_core(inst, n, rates, kind, trials, seed, o, nullptr, 0.0);
}

ErrorEstimate estimate_errors_fixed_codebook(const SuperpositionCodebook& cb,
                                             const ChannelModel& inst, double t,
                                             std::uint64_t trials,
                                             std::uint64_t seed,
                                             const SimOptions& opt) {
    RatePoint dummy;
    return mc_core(inst, cb.n, dummy, cb.kind, trials, seed, opt, &cb, t);
}

ErrorEstimate exact_errors_small(const ChannelModel& inst,
                                 const SuperpositionCodebook& cb, double t,
                                 const SimOptions& opt) {
    return exact_core(inst, cb, t, opt, opt.parallel);
}

ErrorEstimate exact_errors_small_serial(const ChannelModel& inst,
                                        const SuperpositionCodebook& cb,
                                        double t, const SimOptions& opt) {
    return exact_core(inst, cb, t, opt, false);
}

}  // namespace abcexp
