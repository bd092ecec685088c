#include "abcexp/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcexp/simulator.hpp"
#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace abcexp {

namespace {

using nlohmann::json;

struct Point {
    EnsembleKind kind;
    double r1, r2, t;
};

std::vector<Point> make_points(const RunConfig& cfg) {
    std::vector<Point> pts;
    for (auto kind : cfg.kinds)
        for (double r1 : cfg.r1s)
            for (double r2 : cfg.r2s)
                for (double t : cfg.ts) pts.push_back({kind, r1, r2, t});
    return pts;
}

json psi_json(const PsiValue& p) {
    json branches = json::array();
    for (const auto& b : p.branches)
        branches.push_back({{"name", b.name},
                            {"value", b.value},
                            {"counted", b.counted},
                            {"feasible", b.feasible},
                            {"status", to_string(b.status)},
                            {"iterations", b.iterations},
                            {"kkt", b.kkt_residual},
                            {"violation", b.max_violation}});
    return json{{"value", p.value},
                {"active", p.active},
                {"reliable", p.reliable},
                {"branches", branches}};
}

void set_workers(const RunConfig& cfg) {
#ifdef _OPENMP
    if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
#else
    (void)cfg;
#endif
}

std::string kind_str(EnsembleKind k) { return to_string(k); }

}  // namespace

std::string csv_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int CsvTable::col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

double CsvTable::num(size_t row, int c) const {
    return std::stod(rows.at(row).at(static_cast<size_t>(c)));
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open CSV '" + path + "'");
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

namespace {

RunOutput run_exponents(const RunConfig& cfg) {
    const auto pts = make_points(cfg);
    std::vector<ExponentReport> reports(pts.size());
    SolverOptions sopt;

    const long n = static_cast<long>(pts.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < n; ++i) {
        ExponentQuery q;
        q.inst = cfg.channel;
        q.rates = RatePoint{pts[i].r1, pts[i].r2, pts[i].t};
        q.kind = pts[i].kind;
        q.terminal = cfg.terminal;
        reports[i] = compute_exponents(q, sopt);
    }

    std::filesystem::create_directories(cfg.out);
    const std::string csv_path = cfg.out + "/exponents.csv";
    const std::string diag_path = cfg.out + "/diagnostics.jsonl";
    std::ofstream csv(csv_path);
    std::ofstream diag(diag_path);
    csv << "R1,R2,T,kind,psi_a,psi_b,psi_c,E1t,E1u,E2t,E2u,EYt,EYu,status\n";
    for (size_t i = 0; i < pts.size(); ++i) {
        const auto& r = reports[i];
        csv << csv_number(pts[i].r1) << ',' << csv_number(pts[i].r2) << ','
            << csv_number(pts[i].t) << ',' << kind_str(pts[i].kind) << ','
            << csv_number(r.psi_a.value) << ',' << csv_number(r.psi_b.value)
            << ',' << csv_number(r.psi_c.value) << ',' << csv_number(r.E1t)
            << ',' << csv_number(r.E1u) << ',' << csv_number(r.E2t) << ','
            << csv_number(r.E2u) << ',' << csv_number(r.EYt) << ','
            << csv_number(r.EYu) << ',' << r.status << '\n';
        json j{{"mode", "exponents"},
               {"R1", pts[i].r1},
               {"R2", pts[i].r2},
               {"T", pts[i].t},
               {"kind", kind_str(pts[i].kind)},
               {"terminal", cfg.terminal == Terminal::Y ? "Y" : "Z"},
               {"psi_a", psi_json(r.psi_a)},
               {"psi_b", psi_json(r.psi_b)},
               {"psi_c", psi_json(r.psi_c)},
               {"E1t", r.E1t},
               {"E1u", r.E1u},
               {"E2t", r.E2t},
               {"E2u", r.E2u},
               {"EYt", r.EYt},
               {"EYu", r.EYu},
               {"e2_branch", r.e2_branch},
               {"status", r.status}};
        diag << j.dump() << '\n';
    }
    return {0, {csv_path, diag_path}};
}

RunOutput run_oracle_mode(const RunConfig& cfg) {
    const auto pts = make_points(cfg);
    std::vector<OracleResult> results(pts.size());

    // the oracle parallelizes internally; points run serially
    for (size_t i = 0; i < pts.size(); ++i) {
        RatePoint r{pts[i].r1, pts[i].r2, pts[i].t};
        results[i] = oracle_min(cfg.oracle_problem, cfg.channel, r, cfg.grid,
                                pts[i].kind);
    }

    std::filesystem::create_directories(cfg.out);
    const std::string csv_path = cfg.out + "/oracle.csv";
    const std::string diag_path = cfg.out + "/diagnostics.jsonl";
    std::ofstream csv(csv_path);
    std::ofstream diag(diag_path);
    std::string pname = cfg.oracle_problem == OracleProblem::psi_a ? "psi_a"
                        : cfg.oracle_problem == OracleProblem::psi_b
                            ? "psi_b"
                            : "psi_c";
    csv << "R1,R2,T,kind,problem,k,slack_c,value,value_strict,status\n";
    for (size_t i = 0; i < pts.size(); ++i) {
        const auto& r = results[i];
        const std::string status =
            r.refused ? "refused" : (r.feasible ? "ok" : "infeasible");
        csv << csv_number(pts[i].r1) << ',' << csv_number(pts[i].r2) << ','
            << csv_number(pts[i].t) << ',' << kind_str(pts[i].kind) << ','
            << pname << ',' << cfg.grid.k << ',' << csv_number(cfg.grid.slack_c)
            << ',' << csv_number(r.value) << ',' << csv_number(r.value_strict)
            << ',' << status << '\n';
        json j{{"mode", "oracle"},
               {"R1", pts[i].r1},
               {"R2", pts[i].r2},
               {"T", pts[i].t},
               {"kind", kind_str(pts[i].kind)},
               {"problem", pname},
               {"k", cfg.grid.k},
               {"value", r.value},
               {"value_strict", r.value_strict},
               {"evaluations_estimate", r.evaluations_estimate},
               {"status", status}};
        diag << j.dump() << '\n';
    }
    return {0, {csv_path, diag_path}};
}

RunOutput run_simulate(const RunConfig& cfg) {
    const auto pts = make_points(cfg);
    std::vector<ErrorEstimate> results(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        RatePoint r{pts[i].r1, pts[i].r2, pts[i].t};
        results[i] = estimate_errors(cfg.channel, cfg.sim_n, r, pts[i].kind,
                                     cfg.sim_trials, cfg.seed);
    }

    std::filesystem::create_directories(cfg.out);
    const std::string csv_path = cfg.out + "/simulate.csv";
    const std::string diag_path = cfg.out + "/diagnostics.jsonl";
    std::ofstream csv(csv_path);
    std::ofstream diag(diag_path);
    csv << "R1,R2,T,kind,n,trials,"
           "e1t,e1t_lo,e1t_hi,e1u,e1u_lo,e1u_hi,"
           "e2t,e2t_lo,e2t_hi,e2u,e2u_lo,e2u_hi,"
           "eYt,eYt_lo,eYt_hi,eYu,eYu_lo,eYu_hi\n";
    for (size_t i = 0; i < pts.size(); ++i) {
        const auto& e = results[i];
        csv << csv_number(pts[i].r1) << ',' << csv_number(pts[i].r2) << ','
            << csv_number(pts[i].t) << ',' << kind_str(pts[i].kind) << ','
            << cfg.sim_n << ',' << cfg.sim_trials << ','
            << csv_number(e.e1t) << ',' << csv_number(e.e1t_ci.lo) << ','
            << csv_number(e.e1t_ci.hi) << ',' << csv_number(e.e1u) << ','
            << csv_number(e.e1u_ci.lo) << ',' << csv_number(e.e1u_ci.hi) << ','
            << csv_number(e.e2t) << ',' << csv_number(e.e2t_ci.lo) << ','
            << csv_number(e.e2t_ci.hi) << ',' << csv_number(e.e2u) << ','
            << csv_number(e.e2u_ci.lo) << ',' << csv_number(e.e2u_ci.hi) << ','
            << csv_number(e.eYt) << ',' << csv_number(e.eYt_ci.lo) << ','
            << csv_number(e.eYt_ci.hi) << ',' << csv_number(e.eYu) << ','
            << csv_number(e.eYu_ci.lo) << ',' << csv_number(e.eYu_ci.hi)
            << '\n';
        json j{{"mode", "simulate"}, {"R1", pts[i].r1},
               {"R2", pts[i].r2},    {"T", pts[i].t},
               {"kind", kind_str(pts[i].kind)}, {"n", cfg.sim_n},
               {"trials", cfg.sim_trials},      {"e1t", e.e1t},
               {"e1u", e.e1u},       {"e2t", e.e2t},
               {"e2u", e.e2u},       {"eYt", e.eYt},
               {"eYu", e.eYu},       {"seed", cfg.seed}};
        diag << j.dump() << '\n';
    }
    return {0, {csv_path, diag_path}};
}

RunOutput run_figures(const RunConfig& cfg) {
    // figure grids reproduce the numerical example; they also cover every
    //点 the downstream region/threshold checks read back out of the CSVs
    struct Q {
        double r1, r2, t;
    };
    std::vector<Q> queries;
    auto add = [&](double r1, double r2, double t) {
        for (const auto& q : queries)
            if (std::abs(q.r1 - r1) < 1e-12 && std::abs(q.r2 - r2) < 1e-12 &&
                std::abs(q.t - t) < 1e-12)
                return;
        queries.push_back({r1, r2, t});
    };
    std::vector<double> fig1_r1{0.02, 0.08};
    std::vector<double> fig1_r2;
    for (int i = 0; i <= 40; ++i) fig1_r2.push_back(i * 0.005);
    std::vector<double> fig2_r2{0.05, 0.15};
    std::vector<double> fig2_r1;
    for (int i = 0; i <= 20; ++i) fig2_r1.push_back(i * 0.005);
    std::vector<std::pair<double, double>> fig34_pairs{{0.02, 0.05},
                                                       {0.06, 0.10}};
    std::vector<double> fig34_t;
    for (int i = 0; i <= 10; ++i) fig34_t.push_back(i * 0.02);

    for (double r1 : fig1_r1)
        for (double r2 : fig1_r2) add(r1, r2, 0.0);
    for (double r2 : fig2_r2)
        for (double r1 : fig2_r1) add(r1, r2, 0.0);
    for (auto [r1, r2] : fig34_pairs)
        for (double t : fig34_t) add(r1, r2, t);

    std::vector<ExponentReport> reports(queries.size());
    SolverOptions sopt;
    const long n = static_cast<long>(queries.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < n; ++i) {
        ExponentQuery q;
        q.inst = cfg.channel;
        q.rates = RatePoint{queries[i].r1, queries[i].r2, queries[i].t};
        q.kind = EnsembleKind::iid;
        q.terminal = Terminal::Y;
        reports[i] = compute_exponents(q, sopt);
    }
    auto find = [&](double r1, double r2, double t) -> const ExponentReport& {
        for (size_t i = 0; i < queries.size(); ++i)
            if (std::abs(queries[i].r1 - r1) < 1e-12 &&
                std::abs(queries[i].r2 - r2) < 1e-12 &&
                std::abs(queries[i].t - t) < 1e-12)
                return reports[i];
        throw std::logic_error("figure query missing");
    };

    std::filesystem::create_directories(cfg.out);
    std::vector<std::string> files;
    const std::string diag_path = cfg.out + "/diagnostics.jsonl";
    std::ofstream diag(diag_path);
    for (size_t i = 0; i < queries.size(); ++i) {
        json j{{"mode", "reproduce_figures"},
               {"R1", queries[i].r1},
               {"R2", queries[i].r2},
               {"T", queries[i].t},
               {"E1t", reports[i].E1t},
               {"E2t", reports[i].E2t},
               {"status", reports[i].status}};
        diag << j.dump() << '\n';
    }

    {
        const std::string p = cfg.out + "/fig1.csv";
        std::ofstream f(p);
        f << "R1,R2,T,E1t,E2t\n";
        for (double r1 : fig1_r1)
            for (double r2 : fig1_r2) {
                const auto& r = find(r1, r2, 0.0);
                f << csv_number(r1) << ',' << csv_number(r2) << ",0,"
                  << csv_number(r.E1t) << ',' << csv_number(r.E2t) << '\n';
            }
        files.push_back(p);
    }
    {
        const std::string p = cfg.out + "/fig2.csv";
        std::ofstream f(p);
        f << "R1,R2,T,E1t,E2t\n";
        for (double r2 : fig2_r2)
            for (double r1 : fig2_r1) {
                const auto& r = find(r1, r2, 0.0);
                f << csv_number(r1) << ',' << csv_number(r2) << ",0,"
                  << csv_number(r.E1t) << ',' << csv_number(r.E2t) << '\n';
            }
        files.push_back(p);
    }
    {
        const std::string p = cfg.out + "/fig3.csv";
        std::ofstream f(p);
        f << "R1,R2,T,E1t,E1u\n";
        for (auto [r1, r2] : fig34_pairs)
            for (double t : fig34_t) {
                const auto& r = find(r1, r2, t);
                f << csv_number(r1) << ',' << csv_number(r2) << ','
                  << csv_number(t) << ',' << csv_number(r.E1t) << ','
                  << csv_number(r.E1u) << '\n';
            }
        files.push_back(p);
    }
    {
        const std::string p = cfg.out + "/fig4.csv";
        std::ofstream f(p);
        f << "R1,R2,T,E2t,E2u\n";
        for (auto [r1, r2] : fig34_pairs)
            for (double t : fig34_t) {
                const auto& r = find(r1, r2, t);
                f << csv_number(r1) << ',' << csv_number(r2) << ','
                  << csv_number(t) << ',' << csv_number(r.E2t) << ','
                  << csv_number(r.E2u) << '\n';
            }
        files.push_back(p);
    }
    files.push_back(diag_path);
    return {0, files};
}

}  // namespace

RunOutput run(const RunConfig& cfg) {
    cfg.validate();
    set_workers(cfg);
    switch (cfg.mode) {
        case RunMode::exponents: return run_exponents(cfg);
        case RunMode::oracle: return run_oracle_mode(cfg);
        case RunMode::simulate: return run_simulate(cfg);
        case RunMode::reproduce_figures: return run_figures(cfg);
    }
    return {1, {}};
}

}  // namespace abcexp
