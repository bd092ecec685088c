#include <cmath>
#include <random>
#include <stdexcept>

#include "abcexp/prob.hpp"
#include "doctest.h"

using namespace abcexp;

namespace {

double hb(double p) {  // binary entropy, nats
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log(p) - (1 - p) * std::log(1 - p);
}

JointDist3 random_dist(Alphabets a, std::mt19937_64& rng) {
    std::vector<double> w(a.cells());
    std::exponential_distribution<double> ex(1.0);
    for (auto& v : w) v = ex(rng);
    return JointDist3::from_weights(a, std::move(w));
}

const ChannelModel kBsc = ChannelModel::bsc_example(0.2, 0.1);

}  // namespace

TEST_CASE("kl divergence basics") {
    CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // ln2 - h(0.26), independently evaluated binary entropy
    CHECK(kl_divergence({0.26, 0.74}, {0.5, 0.5}) ==
          doctest::Approx(std::log(2.0) - hb(0.26)).epsilon(1e-12));
    CHECK(kl_divergence({0.26, 0.74}, {0.5, 0.5}) ==
          doctest::Approx(0.1201).epsilon(1e-3));
    CHECK(std::isinf(kl_divergence({0.5, 0.5}, {1.0, 0.0})));
    CHECK_THROWS_AS(kl_divergence({1.0}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("kl divergence is nonnegative, zero iff equal") {
    std::mt19937_64 rng(1);
    std::exponential_distribution<double> ex(1.0);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> q(5), p(5);
        double sq = 0, sp = 0;
        for (int i = 0; i < 5; ++i) {
            q[i] = ex(rng);
            p[i] = ex(rng) + 1e-3;
            sq += q[i];
            sp += p[i];
        }
        for (int i = 0; i < 5; ++i) {
            q[i] /= sq;
            p[i] /= sp;
        }
        const double d = kl_divergence(q, p);
        CHECK(d >= 0.0);
        double tv = 0;
        for (int i = 0; i < 5; ++i) tv += std::abs(q[i] - p[i]);
        if (d <= 1e-12) CHECK(tv < 1e-5);
    }
}

TEST_CASE("mutual information on the example instance") {
    const auto p = kBsc.p_uxy();
    // product distribution -> 0
    std::vector<double> prod = {0.25, 0.25, 0.25, 0.25};
    CHECK(mutual_information(prod, 2, 2) == doctest::Approx(0.0));
    // I(X;Y) = 0.19, I(U;Y) = 0.12 (paper rounds to 2 decimals)
    CHECK(mutual_information(p.marginal_xy(), 2, 2) ==
          doctest::Approx(0.19).epsilon(0.0265));
    CHECK(std::abs(mutual_information(p.marginal_xy(), 2, 2) - 0.19) < 0.005);
    CHECK(std::abs(mutual_information(p.marginal_uy(), 2, 2) - 0.12) < 0.005);
    // closed forms
    CHECK(mutual_information(p.marginal_xy(), 2, 2) ==
          doctest::Approx(std::log(2.0) - hb(0.2)).epsilon(1e-12));
    CHECK(mutual_information(p.marginal_uy(), 2, 2) ==
          doctest::Approx(std::log(2.0) - hb(0.26)).epsilon(1e-12));
}

TEST_CASE("conditional mutual information") {
    const auto p = kBsc.p_uxy();
    CHECK(std::abs(conditional_mutual_information(p) - 0.07) < 0.005);
    CHECK(conditional_mutual_information(p) ==
          doctest::Approx(hb(0.26) - hb(0.2)).epsilon(1e-12));

    // X independent of Y given U -> 0
    Alphabets a{2, 2, 2};
    std::vector<double> w(a.cells());
    for (int u = 0; u < 2; ++u)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y)
                w[a.idx(u, x, y)] =
                    (u ? 0.7 : 0.3) * (x ? 0.2 : 0.8) * (y ? 0.6 : 0.4);
    CHECK(conditional_mutual_information(JointDist3::from_weights(a, w)) ==
          doctest::Approx(0.0).epsilon(1e-12));

    // random distribution: matches the defining triple sum evaluated directly
    std::mt19937_64 rng(7);
    const auto q = random_dist(a, rng);
    const auto quy = q.marginal_uy();
    const auto qu = q.marginal_u();
    const auto qux = q.marginal_ux();
    double direct = 0.0;
    for (int u = 0; u < 2; ++u)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) {
                const double v = q(u, x, y);
                if (v > 0)
                    direct += v * std::log(v * qu[u] /
                                           (qux[u * 2 + x] * quy[u * 2 + y]));
            }
    CHECK(conditional_mutual_information(q) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("expected log channel") {
    const auto p = kBsc.p_uxy();
    CHECK(expected_log_channel(p, kBsc.w_y, 2) ==
          doctest::Approx(-hb(0.2)).epsilon(1e-12));

    // deterministic channel with support on its 1-cells -> 0
    Alphabets a{1, 2, 2};
    std::vector<double> w_det = {1.0, 0.0, 0.0, 1.0};
    std::vector<double> mass = {0.5, 0.0, 0.0, 0.5};
    CHECK(expected_log_channel(JointDist3(a, mass), w_det, 2) ==
          doctest::Approx(0.0));

    // an atom where W = 0 gives the -inf sentinel
    std::vector<double> bad = {0.25, 0.25, 0.25, 0.25};
    const double v = expected_log_channel(JointDist3(a, bad), w_det, 2);
    CHECK(std::isinf(v));
    CHECK(v < 0);

    CHECK_THROWS_AS(expected_log_channel(p, {0.5, 0.5}, 2),
                    std::invalid_argument);
}

TEST_CASE("marginalization and conditioning") {
    Alphabets a{2, 3, 2};
    std::mt19937_64 rng(3);
    const auto q = random_dist(a, rng);

    // q_Y(y) equals the direct double sum
    const auto my = q.marginal_y();
    for (int y = 0; y < a.Y; ++y) {
        double s = 0;
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x) s += q(u, x, y);
        CHECK(my[y] == doctest::Approx(s).epsilon(1e-14));
    }

    // conditional times marginal reconstructs the joint
    const auto cond = q.conditional_x_given_uy();
    const auto muy = q.marginal_uy();
    for (int u = 0; u < a.U; ++u)
        for (int x = 0; x < a.X; ++x)
            for (int y = 0; y < a.Y; ++y)
                CHECK(cond.p[(u * a.Y + y) * a.X + x] * muy[u * a.Y + y] ==
                      doctest::Approx(q(u, x, y)).epsilon(1e-12));

    // uniform joint -> uniform marginals
    const auto uni = JointDist3::uniform(a);
    for (double v : uni.marginal_u()) CHECK(v == doctest::Approx(1.0 / a.U));
    for (double v : uni.marginal_y()) CHECK(v == doctest::Approx(1.0 / a.Y));

    // zero-probability conditioning rows are defaulted and flagged
    std::vector<double> m(a.cells(), 0.0);
    m[a.idx(0, 0, 0)] = 1.0;
    const auto degenerate = JointDist3(a, m).conditional_x_given_uy();
    CHECK(degenerate.defaulted[0 * a.Y + 1] == 1);
    CHECK(degenerate.defaulted[0 * a.Y + 0] == 0);
}

TEST_CASE("measures are invariant under relabeling") {
    Alphabets a{2, 2, 3};
    std::mt19937_64 rng(11);
    const auto q = random_dist(a, rng);
    // swap the two u symbols and permute y cyclically
    std::vector<double> w(a.cells());
    for (int u = 0; u < 2; ++u)
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 3; ++y)
                w[a.idx(1 - u, x, (y + 1) % 3)] = q(u, x, y);
    const auto qr = JointDist3(a, w);
    CHECK(conditional_mutual_information(qr) ==
          doctest::Approx(conditional_mutual_information(q)).epsilon(1e-12));
    CHECK(mutual_information(qr.marginal_uy(), 2, 3) ==
          doctest::Approx(mutual_information(q.marginal_uy(), 2, 3))
              .epsilon(1e-12));
}

TEST_CASE("mutual information equals kl to the product of marginals") {
    Alphabets a{2, 2, 2};
    std::mt19937_64 rng(5);
    for (int it = 0; it < 50; ++it) {
        const auto q = random_dist(a, rng);
        const auto quy = q.marginal_uy();
        const auto qu = q.marginal_u();
        const auto qy = q.marginal_y();
        std::vector<double> prod(4);
        for (int u = 0; u < 2; ++u)
            for (int y = 0; y < 2; ++y) prod[u * 2 + y] = qu[u] * qy[y];
        CHECK(mutual_information(quy, 2, 2) ==
              doctest::Approx(kl_divergence(quy, prod)).epsilon(1e-12));
    }
}

TEST_CASE("alphabet and distribution validation") {
    CHECK_THROWS_AS(JointDist3(Alphabets{0, 1, 1}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(JointDist3(Alphabets{17, 1, 1}, std::vector<double>(17, 1.0 / 17)),
                    std::invalid_argument);
    CHECK_THROWS_AS(JointDist3(Alphabets{1, 1, 2}, {0.6, 0.5}),
                    std::invalid_argument);
    CHECK_THROWS_AS(JointDist3(Alphabets{1, 1, 2}, {-0.1, 1.1}),
                    std::invalid_argument);
    ChannelModel bad = ChannelModel::bsc_example(0.2, 0.1);
    bad.w_y[0] = 0.9;  // row no longer sums to 1
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
