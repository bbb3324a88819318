#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/levy.hpp"
#include "volterra/path_engine.hpp"

namespace volterra {

// Second-order kernel of the anticipative integral int_0^t Y dX, where
// Y(s) = int_0^s h dX is itself a Volterra integral of a deterministic h and
// X has kernel g, a standard Brownian driver and unit volatility. The
// integral equals a double Wiener integral with kernel Ktilde plus the
// deterministic trace of Ktilde on the diagonal:
//
//   Ktilde(s, v) = K_g(h)(s, v) g(s, s) + int_s^t K_g(h)(u, v) g(du, s)   (v <= s)
//   Ktilde(s, v) =                        int_v^t K_g(h)(u, v) g(du, s)   (v > s)
//
// The first line is the finite-diagonal rearrangement of the operator K_g
// applied to u -> K_g(h)(u, v) at (t, s), so kernels whose diagonal blows up
// are rejected at construction (SingularDiagonalError). The horizon t is
// baked into the kernel: evaluations at a different horizon describe a
// different function and need a separate instance.
//
// Thread safety: all evaluation entry points are const; the node-matrix and
// trace caches are built under a lock on first use and read lock-free after,
// so one instance can serve concurrent Monte Carlo paths.
class KtildeKernel {
public:
    // General integrand h (evaluated through the operator K_g pointwise;
    // every kernel entry then costs a nested quadrature, so this form is
    // only practical on coarse grids).
    KtildeKernel(KernelSpec g, std::function<double(double)> h, double t);

    // h == 1, the int_0^t X dX case: the inner operator values collapse to
    // kernel evaluations and the matrix build is cheap.
    KtildeKernel(KernelSpec g, double t);

    KtildeKernel(const KtildeKernel&) = delete;
    KtildeKernel& operator=(const KtildeKernel&) = delete;

    const KernelSpec& kernel() const { return kernel_; }
    double horizon() const { return t_; }

    // Ktilde(s, v) for 0 <= s, v < horizon; v == s delegates to diagonal().
    double operator()(double s, double v) const;

    // Ktilde(s, s) = h(s) g(s,s)^2 + int_s^t K_g(h)(u, s) g(du, s); a zero
    // kernel diagonal kills the first term.
    double diagonal(double s) const;

    // int_0^t Ktilde(s, s) ds; computed once and cached.
    double trace() const;

    // Symmetrized kernel values on the nodes of `grid`, as a strict
    // row-major lower triangle: at(j, k) = Ktilde(t_j, t_k) + Ktilde(t_k, t_j)
    // for 0 <= k < j < m, where m is the index of the horizon node. Built
    // once per grid and shared read-only afterwards. Throws
    // std::invalid_argument when the horizon is not a node of `grid`.
    // Kernels whose sections blow up at s = 0 (the fbm bracket for H > 1/2)
    // have no finite value at the first node and propagate the kernel's
    // domain_error; they admit pointwise Ktilde evaluation for v > 0 only.
    struct NodeMatrix {
        int m = 0;
        std::vector<double> sym;  // size m (m - 1) / 2

        double at(int j, int k) const {
            return sym[static_cast<std::size_t>(j) * (static_cast<std::size_t>(j) - 1) / 2 +
                       static_cast<std::size_t>(k)];
        }
    };
    std::shared_ptr<const NodeMatrix> node_matrix(const SimulationGrid& grid) const;

private:
    void init();
    double inner(double u, double v) const;  // K_g(h)(u, v), u >= v
    double diagonal_value(double s) const;   // g(s, s) with the zero case folded in

    KernelSpec kernel_;
    std::function<double(double)> h_;  // empty in the h == 1 fast path
    double t_;
    QuadOptions outer_opts_;
    QuadOptions inner_opts_;

    mutable std::mutex cache_mutex_;
    mutable std::optional<double> trace_;
    mutable std::vector<std::pair<SimulationGrid, std::shared_ptr<const NodeMatrix>>> matrix_cache_;
};

// Pointwise Ktilde evaluation (same as kern(s, v)).
double ktilde(const KtildeKernel& kern, double s, double v);

// The zeroth-chaos trace int_0^t Ktilde(s, s) ds. `t` must equal the horizon
// the kernel was built with (the kernel itself depends on it).
double trace_term(const KtildeKernel& kern, double t);

// Discretization of the anticipative integral on the path's grid:
//
//   sum_{k < j} [Ktilde(t_j, t_k) + Ktilde(t_k, t_j)] dB_j dB_k + trace.
//
// The diagonal never enters the double sum; its contribution is exactly the
// trace term, so the expectation over paths equals trace_term at every grid
// resolution. `t` must equal the kernel horizon and be a node of the path's
// grid. The DriverPath overload reads the raw per-cell Gaussian increments
// as standard Brownian and throws RequiresBrownianError when the path
// carries jumps, subordinator mass, or a compensator; the process overload
// additionally requires a standard Brownian driver (unit variance, no drift)
// and unit path volatility (RequiresUnitVolatilityError).
double second_chaos_integral(const KtildeKernel& kern, const DriverPath& path, double t);
double second_chaos_integral(const KtildeKernel& kern, const VmlvProcess& process,
                             const VmlvPath& path, double t);

// The h == 1, g-weighted square functional
//
//   sum_{k < j} g(t, t_j) g(t, t_k) dB_j dB_k + (1/2) int_0^t g(t, s)^2 ds,
//
// the discrete second-chaos expansion of X(t)^2 / 2. Evaluated with prefix
// sums in O(n). Same Brownian/unit-volatility requirements as above.
double half_square_chaos(const KernelSpec& g, const DriverPath& path, double t);
double half_square_chaos(const VmlvProcess& process, const VmlvPath& path, double t);

}  // namespace volterra
