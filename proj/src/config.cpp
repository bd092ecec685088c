#include "abcexp/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace abcexp {

namespace {

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& v, int line,
                               const std::string& field) {
    // either "a b c" or "start:end:step"
    std::vector<double> out;
    if (v.find(':') != std::string::npos) {
        double a, b, st;
        char c1, c2;
        std::istringstream is(v);
        if (!(is >> a >> c1 >> b >> c2 >> st) || c1 != ':' || c2 != ':' ||
            st <= 0.0)
            throw ConfigError(line, field, "bad range, want start:end:step");
        for (int i = 0;; ++i) {
            const double x = a + i * st;
            if (x > b + st * 0.5) break;
            out.push_back(x);
            if (i > 1000000) throw ConfigError(line, field, "range too long");
        }
    } else {
        std::istringstream is(v);
        double x;
        while (is >> x) out.push_back(x);
        if (!is.eof()) throw ConfigError(line, field, "expected numbers");
    }
    return out;
}

std::vector<double> parse_matrix(const std::string& v, int rows, int cols,
                                 int line, const std::string& field) {
    // rows separated by ';'
    std::vector<double> out;
    std::istringstream rs(v);
    std::string row;
    int r = 0;
    while (std::getline(rs, row, ';')) {
        std::istringstream is(row);
        double x;
        int c = 0;
        while (is >> x) {
            out.push_back(x);
            ++c;
        }
        if (c != cols)
            throw ConfigError(line, field,
                              "row " + std::to_string(r) + " has " +
                                  std::to_string(c) + " entries, want " +
                                  std::to_string(cols));
        ++r;
    }
    if (r != rows)
        throw ConfigError(line, field, "want " + std::to_string(rows) + " rows");
    return out;
}

}  // namespace

std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::exponents: return "exponents";
        case RunMode::oracle: return "oracle";
        case RunMode::simulate: return "simulate";
        case RunMode::reproduce_figures: return "reproduce_figures";
    }
    return "?";
}

void RunConfig::validate() const {
    if (r1s.empty()) throw ConfigError(0, "sweep.r1", "sweep list is empty");
    if (r2s.empty()) throw ConfigError(0, "sweep.r2", "sweep list is empty");
    if (ts.empty()) throw ConfigError(0, "sweep.t", "sweep list is empty");
    if (kinds.empty()) throw ConfigError(0, "sweep.kind", "sweep list is empty");
    for (double v : r1s)
        if (v < 0) throw ConfigError(0, "sweep.r1", "rates must be >= 0");
    for (double v : r2s)
        if (v < 0) throw ConfigError(0, "sweep.r2", "rates must be >= 0");
    for (double v : ts)
        if (v < 0) throw ConfigError(0, "sweep.t", "thresholds must be >= 0");
    try {
        channel.validate();
    } catch (const std::exception& e) {
        throw ConfigError(0, "channel", e.what());
    }
    if (terminal == Terminal::Z && !channel.has_z())
        throw ConfigError(0, "sweep.terminal", "terminal Z needs channel.w_z");
    try {
        grid.validate();
    } catch (const std::exception& e) {
        throw ConfigError(0, "oracle.k", e.what());
    }
    if (sim_n < 1) throw ConfigError(0, "simulate.n", "blocklength must be >= 1");
    if (sim_trials < 1)
        throw ConfigError(0, "simulate.trials", "need at least one trial");
}

RunConfig parse_config_text(const std::string& text) {
    std::map<std::string, Section> sections;
    std::istringstream is(text);
    std::string raw;
    std::string cur = "";
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(lineno, line, "unterminated section header");
            cur = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(lineno, line, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(lineno, line, "empty key");
        sections[cur][key] = Entry{val, lineno, false};
    }

    RunConfig cfg;
    auto get = [&](const std::string& sec, const std::string& key) -> Entry* {
        auto its = sections.find(sec);
        if (its == sections.end()) return nullptr;
        auto itk = its->second.find(key);
        if (itk == its->second.end()) return nullptr;
        itk->second.used = true;
        return &itk->second;
    };
    auto field_name = [](const std::string& sec, const std::string& key) {
        return sec.empty() ? key : sec + "." + key;
    };

    if (auto* e = get("", "mode")) {
        if (e->value == "exponents") cfg.mode = RunMode::exponents;
        else if (e->value == "oracle") cfg.mode = RunMode::oracle;
        else if (e->value == "simulate") cfg.mode = RunMode::simulate;
        else if (e->value == "reproduce_figures")
            cfg.mode = RunMode::reproduce_figures;
        else
            throw ConfigError(e->line, "mode",
                              "unknown mode '" + e->value + "'");
    }
    if (auto* e = get("", "out")) cfg.out = e->value;
    if (auto* e = get("", "seed")) {
        try {
            cfg.seed = std::stoull(e->value);
        } catch (...) {
            throw ConfigError(e->line, "seed", "expected an unsigned integer");
        }
    }
    if (auto* e = get("", "workers")) {
        try {
            cfg.workers = std::stoi(e->value);
        } catch (...) {
            throw ConfigError(e->line, "workers", "expected an integer");
        }
    }

    // ----- channel -----
    const Entry* bp = get("channel", "bsc_p");
    const Entry* bq = get("channel", "bsc_q");
    if (bp || bq) {
        if (!bp || !bq)
            throw ConfigError(bp ? bp->line : bq->line, "channel.bsc_p",
                              "bsc_p and bsc_q must be given together");
        double p, q;
        try {
            p = std::stod(bp->value);
            q = std::stod(bq->value);
        } catch (...) {
            throw ConfigError(bp->line, "channel.bsc_p", "expected numbers");
        }
        cfg.channel = ChannelModel::bsc_example(p, q);
    } else {
        const Entry* sizes = get("channel", "sizes");
        if (!sizes)
            throw ConfigError(0, "channel.sizes",
                              "need channel.sizes = U X Y (or the BSC shorthand "
                              "bsc_p/bsc_q)");
        std::istringstream ss(sizes->value);
        int U, X, Y;
        if (!(ss >> U >> X >> Y))
            throw ConfigError(sizes->line, "channel.sizes", "want three sizes");
        cfg.channel.alph = Alphabets{U, X, Y};
        const Entry* wy = get("channel", "w_y");
        const Entry* pux = get("channel", "p_ux");
        if (!wy || !pux)
            throw ConfigError(sizes->line, "channel.w_y",
                              "need channel.w_y and channel.p_ux");
        cfg.channel.w_y = parse_matrix(wy->value, X, Y, wy->line, "channel.w_y");
        cfg.channel.p_ux =
            parse_matrix(pux->value, U, X, pux->line, "channel.p_ux");
    }
    if (auto* e = get("channel", "w_z")) {
        // rows per x; column count inferred from the first row
        std::istringstream rs(e->value);
        std::string row;
        std::getline(rs, row, ';');
        std::istringstream is2(row);
        int cols = 0;
        double x;
        while (is2 >> x) ++cols;
        if (cols < 1) throw ConfigError(e->line, "channel.w_z", "empty matrix");
        cfg.channel.z_size = cols;
        cfg.channel.w_z = parse_matrix(e->value, cfg.channel.alph.X, cols,
                                       e->line, "channel.w_z");
    }

    // ----- sweep -----
    if (auto* e = get("sweep", "r1"))
        cfg.r1s = parse_list(e->value, e->line, "sweep.r1");
    if (auto* e = get("sweep", "r2"))
        cfg.r2s = parse_list(e->value, e->line, "sweep.r2");
    if (auto* e = get("sweep", "t"))
        cfg.ts = parse_list(e->value, e->line, "sweep.t");
    if (auto* e = get("sweep", "kind")) {
        cfg.kinds.clear();
        if (e->value == "iid") cfg.kinds = {EnsembleKind::iid};
        else if (e->value == "cc")
            cfg.kinds = {EnsembleKind::constant_composition};
        else if (e->value == "both")
            cfg.kinds = {EnsembleKind::iid, EnsembleKind::constant_composition};
        else
            throw ConfigError(e->line, "sweep.kind", "want iid, cc or both");
    }
    if (auto* e = get("sweep", "terminal")) {
        if (e->value == "Y") cfg.terminal = Terminal::Y;
        else if (e->value == "Z") cfg.terminal = Terminal::Z;
        else
            throw ConfigError(e->line, "sweep.terminal", "want Y or Z");
    }

    // ----- oracle -----
    if (auto* e = get("oracle", "problem")) {
        if (e->value == "psi_a") cfg.oracle_problem = OracleProblem::psi_a;
        else if (e->value == "psi_b") cfg.oracle_problem = OracleProblem::psi_b;
        else if (e->value == "psi_c") cfg.oracle_problem = OracleProblem::psi_c;
        else
            throw ConfigError(e->line, "oracle.problem",
                              "want psi_a, psi_b or psi_c");
    }
    if (auto* e = get("oracle", "k")) {
        try {
            cfg.grid.k = std::stoi(e->value);
        } catch (...) {
            throw ConfigError(e->line, "oracle.k", "expected an integer");
        }
    }
    if (auto* e = get("oracle", "slack_c")) {
        try {
            cfg.grid.slack_c = std::stod(e->value);
        } catch (...) {
            throw ConfigError(e->line, "oracle.slack_c", "expected a number");
        }
    }

    // ----- simulate -----
    if (auto* e = get("simulate", "n")) {
        try {
            cfg.sim_n = std::stoi(e->value);
        } catch (...) {
            throw ConfigError(e->line, "simulate.n", "expected an integer");
        }
    }
    if (auto* e = get("simulate", "trials")) {
        try {
            cfg.sim_trials = std::stoull(e->value);
        } catch (...) {
            throw ConfigError(e->line, "simulate.trials", "expected an integer");
        }
    }

    // reject unknown keys so typos do not silently change a run
    for (const auto& [sec, entries] : sections)
        for (const auto& [key, entry] : entries)
            if (!entry.used)
                throw ConfigError(entry.line, field_name(sec, key),
                                  "unknown key");

    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw ConfigError(0, "config", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace abcexp
