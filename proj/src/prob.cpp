#include "abcexp/prob.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace abcexp {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void Alphabets::validate() const {
    require(U >= 1 && X >= 1 && Y >= 1, "alphabet sizes must be >= 1");
    require(U <= kAlphabetCap && X <= kAlphabetCap && Y <= kAlphabetCap,
            "alphabet size exceeds cap of " + std::to_string(kAlphabetCap));
}

JointDist3::JointDist3(Alphabets a, std::vector<double> mass)
    : a_(a), m_(std::move(mass)) {
    a_.validate();
    require(static_cast<int>(m_.size()) == a_.cells(),
            "mass size does not match alphabet cells");
    validate();
}

JointDist3 JointDist3::uniform(Alphabets a) {
    a.validate();
    return JointDist3(a, std::vector<double>(a.cells(), 1.0 / a.cells()));
}

JointDist3 JointDist3::from_weights(Alphabets a, std::vector<double> w) {
    a.validate();
    require(static_cast<int>(w.size()) == a.cells(), "weight size mismatch");
    double tot = 0.0;
    for (double v : w) {
        require(v >= 0.0 && std::isfinite(v), "weights must be finite and nonnegative");
        tot += v;
    }
    require(tot > 0.0, "weights sum to zero");
    for (double& v : w) v /= tot;
    return JointDist3(a, std::move(w));
}

void JointDist3::validate() const {
    double s = 0.0;
    for (double v : m_) {
        require(v >= 0.0 && std::isfinite(v), "probabilities must be finite and >= 0");
        s += v;
    }
    require(std::abs(s - 1.0) <= kSumTol, "probabilities must sum to 1");
}

std::vector<double> JointDist3::marginal_u() const {
    std::vector<double> m(a_.U, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[u] += (*this)(u, x, y);
    return m;
}

std::vector<double> JointDist3::marginal_x() const {
    std::vector<double> m(a_.X, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[x] += (*this)(u, x, y);
    return m;
}

std::vector<double> JointDist3::marginal_y() const {
    std::vector<double> m(a_.Y, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[y] += (*this)(u, x, y);
    return m;
}

std::vector<double> JointDist3::marginal_uy() const {
    std::vector<double> m(static_cast<size_t>(a_.U) * a_.Y, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[u * a_.Y + y] += (*this)(u, x, y);
    return m;
}

std::vector<double> JointDist3::marginal_ux() const {
    std::vector<double> m(static_cast<size_t>(a_.U) * a_.X, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[u * a_.X + x] += (*this)(u, x, y);
    return m;
}

std::vector<double> JointDist3::marginal_xy() const {
    std::vector<double> m(static_cast<size_t>(a_.X) * a_.Y, 0.0);
    for (int u = 0; u < a_.U; ++u)
        for (int x = 0; x < a_.X; ++x)
            for (int y = 0; y < a_.Y; ++y) m[x * a_.Y + y] += (*this)(u, x, y);
    return m;
}

JointDist3::ConditionalFamily JointDist3::conditional_x_given_uy() const {
    ConditionalFamily f;
    f.rows = a_.U * a_.Y;
    f.cols = a_.X;
    f.p.assign(static_cast<size_t>(f.rows) * f.cols, 0.0);
    f.defaulted.assign(f.rows, 0);
    const auto uy = marginal_uy();
    for (int u = 0; u < a_.U; ++u)
        for (int y = 0; y < a_.Y; ++y) {
            const int r = u * a_.Y + y;
            if (uy[r] > 0.0) {
                for (int x = 0; x < a_.X; ++x)
                    f.p[r * f.cols + x] = (*this)(u, x, y) / uy[r];
            } else {
                f.defaulted[r] = 1;
                for (int x = 0; x < a_.X; ++x) f.p[r * f.cols + x] = 1.0 / a_.X;
            }
        }
    return f;
}

JointDist3::ConditionalFamily JointDist3::conditional_ux_given_y() const {
    ConditionalFamily f;
    f.rows = a_.Y;
    f.cols = a_.U * a_.X;
    f.p.assign(static_cast<size_t>(f.rows) * f.cols, 0.0);
    f.defaulted.assign(f.rows, 0);
    const auto my = marginal_y();
    for (int y = 0; y < a_.Y; ++y) {
        if (my[y] > 0.0) {
            for (int u = 0; u < a_.U; ++u)
                for (int x = 0; x < a_.X; ++x)
                    f.p[y * f.cols + (u * a_.X + x)] = (*this)(u, x, y) / my[y];
        } else {
            f.defaulted[y] = 1;
            for (int c = 0; c < f.cols; ++c) f.p[y * f.cols + c] = 1.0 / f.cols;
        }
    }
    return f;
}

JointDist3 compose_ux_given_y(const Alphabets& a,
                              const std::vector<double>& cond,
                              const std::vector<double>& base_y) {
    require(static_cast<int>(cond.size()) == a.Y * a.U * a.X, "conditional size mismatch");
    require(static_cast<int>(base_y.size()) == a.Y, "base marginal size mismatch");
    std::vector<double> m(a.cells(), 0.0);
    for (int y = 0; y < a.Y; ++y)
        for (int u = 0; u < a.U; ++u)
            for (int x = 0; x < a.X; ++x)
                m[a.idx(u, x, y)] = cond[y * (a.U * a.X) + u * a.X + x] * base_y[y];
    return JointDist3(a, std::move(m));
}

JointDist3 compose_x_given_uy(const Alphabets& a,
                              const std::vector<double>& cond,
                              const std::vector<double>& base_uy) {
    require(static_cast<int>(cond.size()) == a.U * a.Y * a.X, "conditional size mismatch");
    require(static_cast<int>(base_uy.size()) == a.U * a.Y, "base marginal size mismatch");
    std::vector<double> m(a.cells(), 0.0);
    for (int u = 0; u < a.U; ++u)
        for (int y = 0; y < a.Y; ++y)
            for (int x = 0; x < a.X; ++x)
                m[a.idx(u, x, y)] = cond[(u * a.Y + y) * a.X + x] * base_uy[u * a.Y + y];
    return JointDist3(a, std::move(m));
}

void ChannelModel::validate() const {
    alph.validate();
    require(static_cast<int>(w_y.size()) == alph.X * alph.Y, "W_Y shape mismatch");
    require(static_cast<int>(p_ux.size()) == alph.U * alph.X, "P_UX shape mismatch");
    for (int x = 0; x < alph.X; ++x) {
        double row = 0.0;
        for (int y = 0; y < alph.Y; ++y) {
            require(w_y[x * alph.Y + y] >= 0.0, "W_Y entries must be >= 0");
            row += w_y[x * alph.Y + y];
        }
        require(std::abs(row - 1.0) <= kSumTol, "W_Y row must sum to 1");
    }
    double s = 0.0;
    for (double v : p_ux) {
        require(v >= 0.0, "P_UX entries must be >= 0");
        s += v;
    }
    require(std::abs(s - 1.0) <= kSumTol, "P_UX must sum to 1");
    if (z_size > 0) {
        require(z_size <= kAlphabetCap, "Z alphabet exceeds cap");
        require(static_cast<int>(w_z.size()) == alph.X * z_size, "W_Z shape mismatch");
        for (int x = 0; x < alph.X; ++x) {
            double row = 0.0;
            for (int z = 0; z < z_size; ++z) {
                require(w_z[x * z_size + z] >= 0.0, "W_Z entries must be >= 0");
                row += w_z[x * z_size + z];
            }
            require(std::abs(row - 1.0) <= kSumTol, "W_Z row must sum to 1");
        }
    }
}

std::vector<double> ChannelModel::p_u() const {
    std::vector<double> m(alph.U, 0.0);
    for (int u = 0; u < alph.U; ++u)
        for (int x = 0; x < alph.X; ++x) m[u] += p_ux[u * alph.X + x];
    return m;
}

std::vector<double> ChannelModel::p_x_given_u() const {
    const auto pu = p_u();
    std::vector<double> c(static_cast<size_t>(alph.U) * alph.X, 0.0);
    for (int u = 0; u < alph.U; ++u)
        for (int x = 0; x < alph.X; ++x)
            c[u * alph.X + x] =
                pu[u] > 0.0 ? p_ux[u * alph.X + x] / pu[u] : 1.0 / alph.X;
    return c;
}

JointDist3 ChannelModel::p_uxy() const {
    std::vector<double> m(alph.cells(), 0.0);
    for (int u = 0; u < alph.U; ++u)
        for (int x = 0; x < alph.X; ++x)
            for (int y = 0; y < alph.Y; ++y)
                m[alph.idx(u, x, y)] = p_ux[u * alph.X + x] * w_y[x * alph.Y + y];
    return JointDist3(alph, std::move(m));
}

ChannelModel ChannelModel::terminal_z_view() const {
    require(has_z(), "terminal Z requested but W_Z is absent");
    ChannelModel c;
    c.alph = Alphabets{alph.U, alph.X, z_size};
    c.w_y = w_z;
    c.p_ux = p_ux;
    c.validate();
    return c;
}

ChannelModel ChannelModel::bsc_example(double p, double q) {
    require(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0,
            "BSC parameters must lie in [0,1]");
    ChannelModel c;
    c.alph = Alphabets{2, 2, 2};
    c.w_y = {1.0 - p, p, p, 1.0 - p};
    c.p_ux = {0.5 * (1.0 - q), 0.5 * q, 0.5 * q, 0.5 * (1.0 - q)};
    c.validate();
    return c;
}

double kl_divergence(const std::vector<double>& q, const std::vector<double>& p) {
    require(q.size() == p.size(), "kl_divergence: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
        if (q[i] > 0.0) {
            if (p[i] <= 0.0) return inf();
            s += q[i] * std::log(q[i] / p[i]);
        }
    }
    return s;
}

double mutual_information(const std::vector<double>& q_ab, int A, int B) {
    require(static_cast<int>(q_ab.size()) == A * B, "mutual_information: size mismatch");
    std::vector<double> qa(A, 0.0), qb(B, 0.0);
    for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b) {
            qa[a] += q_ab[a * B + b];
            qb[b] += q_ab[a * B + b];
        }
    double s = 0.0;
    for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b) {
            const double v = q_ab[a * B + b];
            if (v > 0.0) s += v * std::log(v / (qa[a] * qb[b]));
        }
    return std::max(0.0, s);
}

double conditional_mutual_information(const JointDist3& q) {
    const auto& a = q.dims();
    const auto qu = q.marginal_u();
    double s = 0.0;
    for (int u = 0; u < a.U; ++u) {
        if (qu[u] <= 0.0) continue;
        std::vector<double> slice(static_cast<size_t>(a.X) * a.Y, 0.0);
        for (int x = 0; x < a.X; ++x)
            for (int y = 0; y < a.Y; ++y) slice[x * a.Y + y] = q(u, x, y) / qu[u];
        s += qu[u] * mutual_information(slice, a.X, a.Y);
    }
    return s;
}

double expected_log_channel(const JointDist3& q, const std::vector<double>& w,
                            int y_size) {
    const auto& a = q.dims();
    require(y_size == a.Y, "expected_log_channel: Y size mismatch");
    require(static_cast<int>(w.size()) == a.X * y_size,
            "expected_log_channel: channel shape mismatch");
    double s = 0.0;
    for (int u = 0; u < a.U; ++u)
        for (int x = 0; x < a.X; ++x)
            for (int y = 0; y < a.Y; ++y) {
                const double v = q(u, x, y);
                if (v > 0.0) {
                    const double wv = w[x * y_size + y];
                    if (wv <= 0.0) return -inf();
                    s += v * std::log(wv);
                }
            }
    return s;
}

}  // namespace abcexp
