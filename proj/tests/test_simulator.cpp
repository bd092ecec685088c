#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "abcexp/simulator.hpp"
#include "doctest.h"

using namespace abcexp;

namespace {

const ChannelModel kBsc = ChannelModel::bsc_example(0.2, 0.1);

// independent naive pair decoder: linear-domain double loop
PairDecode naive_pair(const std::vector<uint8_t>& y,
                      const SuperpositionCodebook& cb, const ChannelModel& inst,
                      double t) {
    const auto& a = inst.alph;
    const std::uint64_t np = cb.m1 * cb.m2;
    std::vector<double> w(np, 1.0);
    for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
        for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2)
            for (int i = 0; i < cb.n; ++i)
                w[m1 * cb.m2 + m2] *=
                    inst.w_y[cb.sat(static_cast<int>(m1), static_cast<int>(m2), i) * a.Y +
                             y[i]];
    PairDecode out;
    const double thr = std::exp(cb.n * t);
    for (std::uint64_t i = 0; i < np; ++i) {
        double rest = 0;
        for (std::uint64_t j = 0; j < np; ++j)
            if (j != i) rest += w[j];
        const bool win = rest > 0 ? (w[i] / rest > thr) : (w[i] > 0);
        if (win) {
            out = {false, static_cast<int>(i / cb.m2),
                   static_cast<int>(i % cb.m2)};
            return out;
        }
    }
    return out;
}

std::vector<uint8_t> digits(std::uint64_t v, int n, int base) {
    std::vector<uint8_t> y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = static_cast<uint8_t>(v % base);
        v /= base;
    }
    return y;
}

}  // namespace

TEST_CASE("codebook sizes and reproducibility") {
    RatePoint zero{0.0, 0.0, 0.0};
    const auto cb = generate_codebook(kBsc, 6, zero, EnsembleKind::iid, 5);
    CHECK(cb.m1 == 1);
    CHECK(cb.m2 == 1);

    RatePoint r{0.3, 0.25, 0.0};
    const auto c1 = generate_codebook(kBsc, 10, r, EnsembleKind::iid, 42);
    const auto c2 = generate_codebook(kBsc, 10, r, EnsembleKind::iid, 42);
    CHECK(c1.clouds == c2.clouds);
    CHECK(c1.satellites == c2.satellites);
    const auto c3 = generate_codebook(kBsc, 10, r, EnsembleKind::iid, 43);
    CHECK(c1.satellites != c3.satellites);
    CHECK(c1.m1 == static_cast<std::uint64_t>(std::ceil(std::exp(10 * 0.3))));
}

TEST_CASE("constant composition codebooks have exact types") {
    RatePoint r{0.1, 0.1, 0.0};
    const auto cb =
        generate_codebook(kBsc, 20, r, EnsembleKind::constant_composition, 7);
    for (std::uint64_t j = 0; j < cb.m2; ++j) {
        int zeros = 0;
        for (int i = 0; i < 20; ++i)
            if (cb.cloud(static_cast<int>(j), i) == 0) ++zeros;
        CHECK(zeros == 10);  // n * P_U(0) = 10
    }
    for (std::uint64_t m1 = 0; m1 < cb.m1; ++m1)
        for (std::uint64_t m2 = 0; m2 < cb.m2; ++m2) {
            int flips = 0;
            for (int i = 0; i < 20; ++i)
                if (cb.sat(static_cast<int>(m1), static_cast<int>(m2), i) !=
                    cb.cloud(static_cast<int>(m2), i))
                    ++flips;
            CHECK(flips == 2);  // n * q = 2 positions differ from the cloud
        }

    // integrality violation names the smallest compatible blocklength
    CHECK(smallest_constant_composition_n(kBsc) == 20);
    try {
        generate_codebook(kBsc, 7, r, EnsembleKind::constant_composition, 7);
        CHECK(false);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("20") != std::string::npos);
    }
}

TEST_CASE("iid clouds have empirical type near P_U") {
    RatePoint r{0.0, 0.0, 0.0};
    int good = 0;
    for (int seed = 0; seed < 100; ++seed) {
        const auto cb = generate_codebook(kBsc, 1000, r, EnsembleKind::iid, seed);
        int ones = 0;
        for (int i = 0; i < 1000; ++i) ones += cb.cloud(0, i);
        const double tv = std::abs(ones / 1000.0 - 0.5);
        if (tv <= 0.05) ++good;
    }
    CHECK(good >= 99);
}

TEST_CASE("pair decoder matches a naive reimplementation exhaustively") {
    RatePoint r{0.2, 0.2, 0.0};  // ceil(e^{0.6}) = 2 codewords per layer
    const auto cb = generate_codebook(kBsc, 3, r, EnsembleKind::iid, 11);
    REQUIRE(cb.m1 == 2);
    REQUIRE(cb.m2 == 2);
    for (double t : {0.0, 0.05, 0.2}) {
        for (std::uint64_t yi = 0; yi < 8; ++yi) {
            const auto y = digits(yi, 3, 2);
            const auto fast = decode_pair(y, cb, kBsc, t);
            const auto slow = naive_pair(y, cb, kBsc, t);
            CHECK(fast.erased == slow.erased);
            CHECK(fast.m1 == slow.m1);
            CHECK(fast.m2 == slow.m2);
        }
    }
}

TEST_CASE("message decoder consistency with the pair decoder") {
    // if the pair decoder declares (m1,m2), the message decoder returns the
    // same message or erases, never a different one
    for (int seed = 0; seed < 5; ++seed) {
        RatePoint r{0.3, 0.3, 0.0};
        const auto cb = generate_codebook(kBsc, 4, r, EnsembleKind::iid, seed);
        for (double t : {0.0, 0.1}) {
            for (std::uint64_t yi = 0; yi < 16; ++yi) {
                const auto y = digits(yi, 4, 2);
                const auto pd = decode_pair(y, cb, kBsc, t);
                const int d1 = decode_message(1, y, cb, kBsc, t);
                const int d2 = decode_message(2, y, cb, kBsc, t);
                if (!pd.erased) {
                    CHECK((d1 == pd.m1 || d1 == -1));
                    CHECK((d2 == pd.m2 || d2 == -1));
                }
            }
        }
    }
}

TEST_CASE("decoding regions are disjoint") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ut(0.0, 0.3);
    for (int seed = 0; seed < 20; ++seed) {
        RatePoint r{0.35, 0.3, 0.0};
        const auto cb = generate_codebook(kBsc, 4, r, EnsembleKind::iid, seed);
        const double t = ut(rng);
        for (std::uint64_t yi = 0; yi < 16; ++yi) {
            const auto y = digits(yi, 4, 2);
            CHECK(pair_claim_count(y, cb, kBsc, t) <= 1);
            CHECK(message_claim_count(1, y, cb, kBsc, t) <= 1);
            CHECK(message_claim_count(2, y, cb, kBsc, t) <= 1);
        }
    }
}

TEST_CASE("single-codeword convention") {
    RatePoint zero{0.0, 0.0, 0.0};
    const auto cb = generate_codebook(kBsc, 4, zero, EnsembleKind::iid, 1);
    const auto e = exact_errors_small(kBsc, cb, 0.0);
    CHECK(e.eYt == doctest::Approx(0.0));
    CHECK(e.eYu == doctest::Approx(0.0));
    CHECK(e.e1t == doctest::Approx(0.0));
}

TEST_CASE("noiseless channel with distinct codewords decodes perfectly") {
    ChannelModel clean;
    clean.alph = Alphabets{1, 2, 2};
    clean.w_y = {1.0, 0.0, 0.0, 1.0};
    clean.p_ux = {0.5, 0.5};
    clean.validate();
    SuperpositionCodebook cb;
    cb.n = 2;
    cb.m1 = 2;
    cb.m2 = 2;
    cb.kind = EnsembleKind::iid;
    cb.clouds = {0, 0, 0, 0, 0, 0, 0, 0};
    // four distinct rows over X^2: 00, 01, 10, 11
    cb.satellites = {0, 0, 0, 1, 1, 0, 1, 1};
    const auto e = exact_errors_small(clean, cb, 0.0);
    CHECK(e.e1t == doctest::Approx(0.0));
    CHECK(e.e2t == doctest::Approx(0.0));
    CHECK(e.eYt == doctest::Approx(0.0));
    const auto mc = estimate_errors_fixed_codebook(cb, clean, 0.0, 2000, 9);
    CHECK(mc.eYt == doctest::Approx(0.0));
}

TEST_CASE("exact mode: partition, undetected subset, erasure monotone in T") {
    RatePoint r{0.3, 0.25, 0.0};
    const auto cb = generate_codebook(kBsc, 6, r, EnsembleKind::iid, 21);
    const auto e0 = exact_errors_small(kBsc, cb, 0.0);
    CHECK(e0.partition_residual <= 1e-12);
    CHECK(e0.e1u <= e0.e1t + 1e-15);
    CHECK(e0.e2u <= e0.e2t + 1e-15);
    CHECK(e0.eYu <= e0.eYt + 1e-15);

    const auto e2 = exact_errors_small(kBsc, cb, 0.2);
    CHECK(e2.partition_residual <= 1e-12);
    // erasure probability = total minus undetected, non-decreasing in T
    CHECK(e2.e1t - e2.e1u >= e0.e1t - e0.e1u - 1e-12);
    CHECK(e2.e2t - e2.e2u >= e0.e2t - e0.e2u - 1e-12);
    CHECK(e2.eYt - e2.eYu >= e0.eYt - e0.eYu - 1e-12);

    // budget refusal
    CHECK_THROWS_AS(exact_errors_small(kBsc, generate_codebook(kBsc, 24, r,
                                                               EnsembleKind::iid, 2),
                                       0.0),
                    std::invalid_argument);
}

TEST_CASE("monte carlo agrees with exact enumeration on a fixed codebook") {
    RatePoint r{0.3, 0.25, 0.0};
    const auto cb = generate_codebook(kBsc, 4, r, EnsembleKind::iid, 33);
    const double t = 0.05;
    const auto ex = exact_errors_small(kBsc, cb, t);
    const auto mc = estimate_errors_fixed_codebook(cb, kBsc, t, 100000, 12345);
    auto within3 = [](double exact, const Interval& ci) {
        const double half = (ci.hi - ci.lo) / 2.0;
        const double mid = (ci.hi + ci.lo) / 2.0;
        return std::abs(exact - mid) <= 3.0 * half + 1e-12;
    };
    CHECK(within3(ex.e1t, mc.e1t_ci));
    CHECK(within3(ex.e1u, mc.e1u_ci));
    CHECK(within3(ex.e2t, mc.e2t_ci));
    CHECK(within3(ex.e2u, mc.e2u_ci));
    CHECK(within3(ex.eYt, mc.eYt_ci));
    CHECK(within3(ex.eYu, mc.eYu_ci));
}

TEST_CASE("undetected errors never exceed total errors in monte carlo") {
    RatePoint r{0.05, 0.05, 0.1};
    const auto e = estimate_errors(kBsc, 12, r, EnsembleKind::iid, 20000, 77);
    CHECK(e.e1u <= e.e1t + 1e-15);
    CHECK(e.e2u <= e.e2t + 1e-15);
    CHECK(e.eYu <= e.eYt + 1e-15);
}

TEST_CASE("estimates are bit-for-bit reproducible") {
    RatePoint r{0.2, 0.2, 0.05};
    const auto a = estimate_errors(kBsc, 8, r, EnsembleKind::iid, 30000, 99);
    const auto b = estimate_errors(kBsc, 8, r, EnsembleKind::iid, 30000, 99);
    CHECK(a.e1t == b.e1t);
    CHECK(a.e1u == b.e1u);
    CHECK(a.e2t == b.e2t);
    CHECK(a.e2u == b.e2u);
    CHECK(a.eYt == b.eYt);
    CHECK(a.eYu == b.eYu);
}

TEST_CASE("threshold ties resolve to erasure and are logged") {
    // two identical codewords tie exactly at T = 0: the ratio is 1 = e^{nT}
    ChannelModel clean;
    clean.alph = Alphabets{1, 2, 2};
    clean.w_y = {0.8, 0.2, 0.2, 0.8};
    clean.p_ux = {0.5, 0.5};
    clean.validate();
    SuperpositionCodebook cb;
    cb.n = 2;
    cb.m1 = 2;
    cb.m2 = 1;
    cb.kind = EnsembleKind::iid;
    cb.clouds = {0, 0};
    cb.satellites = {0, 1, 0, 1};  // identical rows
    reset_tie_log();
    const std::vector<uint8_t> y = {0, 1};
    const auto d = decode_pair(y, cb, clean, 0.0);
    CHECK(d.erased);
    CHECK(tie_log_count() > 0);
}
