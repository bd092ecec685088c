// Timing comparison between the OpenMP kernels and their serial reference
// implementations: grid-oracle enumeration, Monte Carlo trials and exact
// decoder enumeration.

#include <chrono>
#include <cstdio>

#include "abcexp/oracle.hpp"
#include "abcexp/simulator.hpp"

using namespace abcexp;

namespace {

template <typename F>
double time_ms(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main() {
    const auto inst = ChannelModel::bsc_example(0.2, 0.1);
    std::printf("%-34s %10s %10s %8s\n", "kernel", "serial ms", "openmp ms",
                "speedup");

    {
        GridSpec grid{10, 2.0};
        RatePoint r{0.02, 0.05, 0.0};
        double vs = 0, vp = 0;
        const double ts = time_ms([&] {
            vs = oracle_min_serial(OracleProblem::psi_a, inst, r, grid,
                                   EnsembleKind::iid)
                     .value;
        });
        const double tp = time_ms([&] {
            vp = oracle_min(OracleProblem::psi_a, inst, r, grid,
                            EnsembleKind::iid)
                     .value;
        });
        std::printf("%-34s %10.1f %10.1f %7.2fx   (values %.6f / %.6f)\n",
                    "oracle psi_a k=10", ts, tp, ts / tp, vs, vp);
    }
    {
        GridSpec grid{10, 2.0};
        RatePoint r{0.02, 0.05, 0.0};
        double vs = 0, vp = 0;
        const double ts = time_ms([&] {
            vs = oracle_min_serial(OracleProblem::psi_b, inst, r, grid,
                                   EnsembleKind::iid)
                     .value;
        });
        const double tp = time_ms([&] {
            vp = oracle_min(OracleProblem::psi_b, inst, r, grid,
                            EnsembleKind::iid)
                     .value;
        });
        std::printf("%-34s %10.1f %10.1f %7.2fx   (values %.6f / %.6f)\n",
                    "oracle psi_b k=10", ts, tp, ts / tp, vs, vp);
    }
    {
        RatePoint r{0.1, 0.1, 0.05};
        ErrorEstimate es, ep;
        const double ts = time_ms([&] {
            es = estimate_errors_serial(inst, 10, r, EnsembleKind::iid, 40000, 7);
        });
        const double tp = time_ms(
            [&] { es = estimate_errors(inst, 10, r, EnsembleKind::iid, 40000, 7); });
        (void)ep;
        std::printf("%-34s %10.1f %10.1f %7.2fx\n",
                    "monte carlo 40k trials n=10", ts, tp, ts / tp);
    }
    {
        RatePoint r{0.2, 0.2, 0.0};
        const auto cb = generate_codebook(inst, 16, r, EnsembleKind::iid, 11);
        ErrorEstimate es, ep;
        const double ts =
            time_ms([&] { es = exact_errors_small_serial(inst, cb, 0.05); });
        const double tp = time_ms([&] { ep = exact_errors_small(inst, cb, 0.05); });
        std::printf("%-34s %10.1f %10.1f %7.2fx   (eYt %.8f / %.8f)\n",
                    "exact enumeration n=16", ts, tp, ts / tp, es.eYt, ep.eYt);
    }
    return 0;
}
