#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcexp/config.hpp"
#include "abcexp/sweep.hpp"
#include "doctest.h"

using namespace abcexp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kBaseConfig = R"(
mode = exponents
out = {OUT}
seed = 7
workers = 2

[channel]
bsc_p = 0.2
bsc_q = 0.1

[sweep]
r1 = 0.02 0.08
r2 = 0.05
t = 0
kind = iid
)";

std::string with_out(const std::string& dir) {
    std::string s = kBaseConfig;
    const auto pos = s.find("{OUT}");
    s.replace(pos, 5, dir);
    return s;
}

}  // namespace

TEST_CASE("config parsing: BSC shorthand, ranges, kinds") {
    auto cfg = parse_config_text(with_out("/tmp/abcexp_test_cfg"));
    CHECK(cfg.mode == RunMode::exponents);
    CHECK(cfg.seed == 7);
    CHECK(cfg.workers == 2);
    CHECK(cfg.channel.alph.U == 2);
    CHECK(cfg.channel.w_y[0] == doctest::Approx(0.8));
    CHECK(cfg.channel.p_ux[0] == doctest::Approx(0.45));
    CHECK(cfg.r1s.size() == 2);

    auto ranged = parse_config_text(
        "mode = exponents\n[channel]\nbsc_p = 0.2\nbsc_q = 0.1\n"
        "[sweep]\nr2 = 0:0.02:0.005\nkind = both\n");
    CHECK(ranged.r2s.size() == 5);
    CHECK(ranged.r2s[4] == doctest::Approx(0.02));
    CHECK(ranged.kinds.size() == 2);
}

TEST_CASE("config parsing: explicit channel matrices and w_z") {
    auto cfg = parse_config_text(
        "mode = exponents\n"
        "[channel]\nsizes = 2 2 2\n"
        "w_y = 0.8 0.2 ; 0.2 0.8\n"
        "p_ux = 0.45 0.05 ; 0.05 0.45\n"
        "w_z = 0.7 0.3 ; 0.3 0.7\n"
        "[sweep]\nterminal = Z\n");
    CHECK(cfg.channel.has_z());
    CHECK(cfg.channel.w_z[0] == doctest::Approx(0.7));
    CHECK(cfg.terminal == Terminal::Z);
}

TEST_CASE("config errors carry line and field diagnostics") {
    // empty sweep list names the field
    try {
        parse_config_text(
            "mode = exponents\n[channel]\nbsc_p = 0.2\nbsc_q = 0.1\n"
            "[sweep]\nr1 =\n");
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(e.field == "sweep.r1");
    }
    // unknown keys are rejected, naming line and key
    try {
        parse_config_text(
            "mode = exponents\ntypo_key = 3\n[channel]\nbsc_p = 0.2\n"
            "bsc_q = 0.1\n");
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(e.field == "typo_key");
        CHECK(e.line == 2);
    }
    // bad mode
    CHECK_THROWS_AS(parse_config_text("mode = nonsense\n"), ConfigError);
    // invalid probabilities surface the channel field
    try {
        parse_config_text(
            "mode = exponents\n[channel]\nsizes = 1 2 2\n"
            "w_y = 0.9 0.2 ; 0.2 0.8\np_ux = 0.5 0.5\n");
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(e.field == "channel");
    }
    // terminal Z without w_z
    CHECK_THROWS_AS(
        parse_config_text("mode = exponents\n[channel]\nbsc_p = 0.2\n"
                          "bsc_q = 0.1\n[sweep]\nterminal = Z\n"),
        ConfigError);
}

TEST_CASE("csv numbers use 12 significant digits") {
    CHECK(csv_number(0.123456789012345) == "0.123456789012");
    CHECK(csv_number(2.0) == "2");
    CHECK(csv_number(1e-9) == "1e-09");
}

TEST_CASE("exponents run: stable columns, re-parse, determinism") {
    const std::string out1 = "/tmp/abcexp_cli_run1";
    const std::string out2 = "/tmp/abcexp_cli_run2";
    std::filesystem::remove_all(out1);
    std::filesystem::remove_all(out2);

    auto cfg = parse_config_text(with_out(out1));
    const auto res1 = run(cfg);
    CHECK(res1.exit_code == 0);
    const auto table = read_csv(out1 + "/exponents.csv");
    const std::vector<std::string> expect = {
        "R1",  "R2",  "T",   "kind", "psi_a", "psi_b", "psi_c",
        "E1t", "E1u", "E2t", "E2u",  "EYt",   "EYu",   "status"};
    CHECK(table.header == expect);
    REQUIRE(table.rows.size() == 2);
    // lexicographic order in the sweep axes
    CHECK(table.num(0, table.col("R1")) == doctest::Approx(0.02));
    CHECK(table.num(1, table.col("R1")) == doctest::Approx(0.08));
    // E1t = min(psi_a, psi_b) survives the round trip at 12 digits
    for (size_t row = 0; row < 2; ++row) {
        const double e1t = table.num(row, table.col("E1t"));
        const double mn = std::min(table.num(row, table.col("psi_a")),
                                   table.num(row, table.col("psi_b")));
        CHECK(e1t == doctest::Approx(mn).epsilon(1e-9));
    }

    cfg.out = out2;
    run(cfg);
    CHECK(slurp(out1 + "/exponents.csv") == slurp(out2 + "/exponents.csv"));
    CHECK(!slurp(out1 + "/diagnostics.jsonl").empty());
}

TEST_CASE("simulate run emits interval columns") {
    const std::string out = "/tmp/abcexp_cli_sim";
    std::filesystem::remove_all(out);
    auto cfg = parse_config_text(
        "mode = simulate\nout = " + out +
        "\nseed = 3\n[channel]\nbsc_p = 0.2\nbsc_q = 0.1\n"
        "[sweep]\nr1 = 0.1\nr2 = 0.1\nt = 0.05\n"
        "[simulate]\nn = 6\ntrials = 5000\n");
    const auto res = run(cfg);
    CHECK(res.exit_code == 0);
    const auto table = read_csv(out + "/simulate.csv");
    REQUIRE(table.rows.size() == 1);
    const int lo = table.col("eYt_lo"), hi = table.col("eYt_hi"),
              mid = table.col("eYt");
    REQUIRE(lo >= 0);
    CHECK(table.num(0, lo) <= table.num(0, mid));
    CHECK(table.num(0, mid) <= table.num(0, hi));
}

TEST_CASE("oracle run mode") {
    const std::string out = "/tmp/abcexp_cli_oracle";
    std::filesystem::remove_all(out);
    auto cfg = parse_config_text(
        "mode = oracle\nout = " + out +
        "\n[channel]\nbsc_p = 0.2\nbsc_q = 0.1\n"
        "[sweep]\nr1 = 0.02\nr2 = 0.05\nt = 0\n"
        "[oracle]\nproblem = psi_a\nk = 8\nslack_c = 2.0\n");
    const auto res = run(cfg);
    CHECK(res.exit_code == 0);
    const auto table = read_csv(out + "/oracle.csv");
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0][table.col("status")] == "ok");
    CHECK(table.num(0, table.col("value")) >= 0.0);
}
