#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

// Finite-alphabet probability objects and information measures.
// All quantities are in nats. Convention: 0*ln(0) = 0; absolute-continuity
// violations return an infinity sentinel instead of throwing, since exponent
// minimizations legitimately prune such points.

namespace abcexp {

inline constexpr double kSumTol = 1e-12;     // mass must sum to 1 within this
inline constexpr int kAlphabetCap = 16;      // keeps 3-way joints <= 4096 cells

inline constexpr double inf() { return std::numeric_limits<double>::infinity(); }

struct Alphabets {
    int U = 1;
    int X = 1;
    int Y = 1;

    int cells() const { return U * X * Y; }
    int idx(int u, int x, int y) const { return (u * X + x) * Y + y; }
    void validate() const;  // throws std::invalid_argument on bad sizes
    bool operator==(const Alphabets&) const = default;
};

// Dense joint pmf over U x X x Y. Houses Q_UXY, Qhat_UXY, P_UXY alike.
class JointDist3 {
public:
    JointDist3() = default;
    JointDist3(Alphabets a, std::vector<double> mass);  // validates nonneg + sum

    static JointDist3 uniform(Alphabets a);
    // Normalizes nonnegative weights; throws if total weight is 0.
    static JointDist3 from_weights(Alphabets a, std::vector<double> w);

    const Alphabets& dims() const { return a_; }
    const std::vector<double>& mass() const { return m_; }
    double operator()(int u, int x, int y) const { return m_[a_.idx(u, x, y)]; }
    double& at(int u, int x, int y) { return m_[a_.idx(u, x, y)]; }

    std::vector<double> marginal_u() const;
    std::vector<double> marginal_x() const;
    std::vector<double> marginal_y() const;
    std::vector<double> marginal_uy() const;  // index u*Y + y
    std::vector<double> marginal_ux() const;  // index u*X + x
    std::vector<double> marginal_xy() const;  // index x*Y + y

    // Conditional family with rows indexed by the conditioning event.
    // Rows conditioned on a zero-probability event default to uniform and are
    // flagged, so callers can treat them as unconstrained.
    struct ConditionalFamily {
        int rows = 0, cols = 0;
        std::vector<double> p;            // rows x cols, row-major
        std::vector<uint8_t> defaulted;   // per row
    };
    ConditionalFamily conditional_x_given_uy() const;   // rows (u*Y+y), cols x
    ConditionalFamily conditional_ux_given_y() const;   // rows y, cols (u*X+x)

    void validate() const;  // nonneg, sums to 1 within kSumTol

private:
    Alphabets a_;
    std::vector<double> m_;
};

// Compose a conditional family back onto a base marginal:
//   q(u,x,y) = cond_{UX|Y}(u,x | y) * base_y(y).
JointDist3 compose_ux_given_y(const Alphabets& a,
                              const std::vector<double>& cond_ux_given_y,
                              const std::vector<double>& base_y);
//   q(u,x,y) = cond_{X|UY}(x | u,y) * base_uy(u,y).
JointDist3 compose_x_given_uy(const Alphabets& a,
                              const std::vector<double>& cond_x_given_uy,
                              const std::vector<double>& base_uy);

// Problem instance: channel W_Y (optionally W_Z) plus input ensemble P_UX.
struct ChannelModel {
    Alphabets alph;                          // U, X, Y sizes
    std::vector<double> w_y;                 // x*Y + y; each row sums to 1
    std::vector<double> p_ux;                // u*X + x; sums to 1
    int z_size = 0;                          // 0 when W_Z absent
    std::vector<double> w_z;                 // x*z_size + z when present

    void validate() const;
    bool has_z() const { return z_size > 0; }

    std::vector<double> p_u() const;
    // P_{X|U}(x|u), row-major u*X + x. Rows with P_U(u) = 0 are filled
    // uniformly; functionals consuming them must apply the infinity sentinel.
    std::vector<double> p_x_given_u() const;
    JointDist3 p_uxy() const;                // P_UX(u,x) * W_Y(y|x)

    // Channel with W_Z substituted for W_Y (terminal-Z reuse).
    ChannelModel terminal_z_view() const;

    // The numerical-example instance: U ~ Bern(1/2), X = U xor Bern(q),
    // Y = X xor Bern(p).
    static ChannelModel bsc_example(double p, double q);
};

// D(q || p) over a common finite set; +inf when q puts mass where p does not.
double kl_divergence(const std::vector<double>& q, const std::vector<double>& p);

// I(A;B) of a joint over A x B (row-major a*B + b): D(q_AB || q_A x q_B).
double mutual_information(const std::vector<double>& q_ab, int A, int B);

// I(X;Y|U) = sum_u q_U(u) * I(X;Y under q(.,.|u)).
double conditional_mutual_information(const JointDist3& q);

// E_q[ln W(Y|X)]; -inf when q puts mass where W(y|x) = 0.
double expected_log_channel(const JointDist3& q, const std::vector<double>& w,
                            int y_size);

}  // namespace abcexp
