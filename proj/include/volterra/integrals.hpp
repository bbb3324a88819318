#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "volterra/grid.hpp"
#include "volterra/kernels.hpp"
#include "volterra/path_engine.hpp"

namespace volterra {

enum class IntegralMethod { KgDeterministic, SimpleSum, SemimartingalePathwise };

struct IntegralResult {
    double value = 0.0;
    IntegralMethod method = IntegralMethod::KgDeterministic;
    SimulationGrid discretization;
};

// Right-continuous step function: values[i] on [breaks[i], breaks[i+1]),
// zero outside [breaks.front(), breaks.back()). breaks must be strictly
// increasing and one longer than values.
struct StepFunction {
    std::vector<double> breaks;
    std::vector<double> values;

    double operator()(double u) const;
};

// K_g(h)(t, s) for a step function h. The Stieltjes tail telescopes into
// kernel values at the break points, so the result involves no quadrature
// and indicator identities hold at machine precision. The segment adjacent
// to s always carries h(s+) = h(s), so the diagonal value g(s, s) is never
// touched even for singular kernels.
double kg_step(const KernelSpec& kernel, const StepFunction& h, double t, double s);

// Precomputed K_g(h)(t, .) on one grid: cell averages for the diffuse cell
// sums plus a point evaluator for exact jump times. The cell averages match
// the cell-averaged kernel weights the path engine uses, which is what makes
// the exact identities of the integral (h == 1 recovers X(t), indicators
// recover increments) survive discretisation instead of holding only up to
// O(dt). Build once per (kernel, h, t, grid) and reuse across Monte Carlo
// paths; the table owns copies of the kernel and the integrand, so it stays
// valid after the originals are gone.
struct KgTable {
    SimulationGrid grid;
    double t = 0.0;  // right endpoint; must be a grid node
    int j_t = 0;     // node index of t
    std::vector<double> cell_avg;          // (1/dt) int_cell K_g(h)(t,s) ds, cell k < j_t
    std::function<double(double)> point;   // s -> K_g(h)(t,s) at exact jump times
};

// Generic integrands: cell averages by adaptive quadrature over operator
// values (the cell next to t switches to a power substitution when the
// kernel diagonal is singular). Discontinuous h belongs in the StepFunction
// overload, where averages are exact.
KgTable make_kg_table(const KernelSpec& kernel, const std::function<double(double)>& h, double t,
                      const SimulationGrid& grid);
KgTable make_kg_table(const KernelSpec& kernel, const StepFunction& h, double t,
                      const SimulationGrid& grid);

// The anticipative integral int_0^t h(s) dX(s) for a deterministic h,
// discretised as sum_k Kbar_k sigma_k dL_k over the diffuse cell increments,
// plus K_g(h)(t, tau) sigma z for every jump (tau, z) at its exact arrival
// time. The compensator of a compensated jump driver rides inside the
// diffuse increments, which makes the compensator term exactly
// -rate * m1 * int_0^t Kbar(s) sigma(s) ds. Throws std::invalid_argument
// when t is not a positive grid node or the table grid differs from the
// path grid.
IntegralResult integrate_deterministic(const KgTable& table, const VmlvProcess& process,
                                       const VmlvPath& path);
IntegralResult integrate_deterministic(const std::function<double(double)>& h,
                                       const VmlvProcess& process, const VmlvPath& path, double t);
IntegralResult integrate_deterministic(const StepFunction& h, const VmlvProcess& process,
                                       const VmlvPath& path, double t);

// Simple-process integral sum_i Z_i (X(t_{i+1}) - X(t_i)): Z_i is the factor
// frozen on [partition[i], partition[i+1]). Partition times must be grid
// nodes (PartitionMisalignedError otherwise) and strictly increasing. Z may
// be random per path (e.g. recorded path values); no adaptedness is assumed.
IntegralResult integrate_simple(const std::vector<double>& partition, const std::vector<double>& Z,
                                const VmlvPath& path);

// Pathwise route through the semimartingale split X = M + D:
// int h dX = sum_k h(t_k) (dM_k + dD_k), left-point on the grid. Defined
// only for semimartingale kernels; decompose()'s exceptions propagate.
IntegralResult semimartingale_pathwise(const std::function<double(double)>& h,
                                       const VmlvProcess& process, const VmlvPath& path, double t);

// Solves the Langevin equation Y(t) = X(t) - alpha int_0^t Y(v) dv node by
// node, using Y(t_j) = int_0^{t_j} e^{-alpha (t_j - s)} dX(s) with the
// resolvent-form lag function
//     K(w) = e^{-alpha w} (g(w) + int_0^w (e^{alpha x} - 1) g(dx)).
// Cell averages of K come from the identity K' = g' - alpha K, so the lag
// table needs K only at the n node lags; it is cached per grid and shared
// across paths (thread-safe). Jumps are weighted by K at their exact lag,
// each costing one Stieltjes quadrature per downstream node - exact but
// slow, so jump-heavy drivers pay for it. Requires a shift-invariant kernel
// (NotShiftInvariantError) and alpha != 0. The process must outlive the
// solver.
class OuSolver {
public:
    OuSolver(const VmlvProcess& process, double alpha);

    const VmlvProcess& process() const { return *process_; }
    double alpha() const { return alpha_; }

    // Y at every grid node, Y[0] = 0. Left-point discretization: diffuse
    // increments carry the lag function at whole-node lags, jumps its value at
    // the exact jump lag. First-order accurate under grid refinement.
    std::vector<double> solve(const VmlvPath& path) const;

    // The K_g-form integral at every node with cell-averaged lag weights —
    // the discretization integrate_deterministic uses, so entry j equals
    // integrate_deterministic(e^{-alpha (t_j - .)}, ., t_j) to machine
    // precision. solve() and integral_path() agree to O(dt).
    std::vector<double> integral_path(const VmlvPath& path) const;

    // the lag function K(w) itself, w > 0 (exposed for cross-checks)
    double lag_value(double w) const;

private:
    struct LagTable {
        std::vector<double> point;     // K(m dt), m in [1, n]
        std::vector<double> cell_avg;  // (1/dt) int_((m-1)dt, m dt] K(w) dw, m in [1, n]
    };
    std::shared_ptr<const LagTable> table_for(const SimulationGrid& grid) const;
    std::vector<double> lag_convolution(const VmlvPath& path,
                                        const std::vector<double>& lag_weights) const;

    const VmlvProcess* process_;
    double alpha_;
    mutable std::mutex mu_;
    mutable std::vector<std::pair<SimulationGrid, std::shared_ptr<const LagTable>>> cache_;
};

// One-shot convenience around OuSolver (rebuilds the lag table every call;
// Monte Carlo loops should hold an OuSolver instead).
std::vector<double> ou_solution(double alpha, const VmlvProcess& process, const VmlvPath& path);

// sup over nodes of |Y(t_j) + alpha * trapezoid(Y, [0, t_j]) - X(t_j)|: how
// well Y solves the Langevin equation against X on the same grid.
double ou_residual(const std::vector<double>& Y, const std::vector<double>& X, double alpha,
                   const SimulationGrid& grid);

}  // namespace volterra
