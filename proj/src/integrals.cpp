#include "volterra/integrals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "volterra/errors.hpp"
#include "volterra/kg_operator.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

namespace {

void check_step(const StepFunction& h) {
    if (h.breaks.size() < 2 || h.values.size() + 1 != h.breaks.size())
        throw std::invalid_argument("StepFunction: needs m+1 breaks for m values");
    for (std::size_t i = 1; i < h.breaks.size(); ++i)
        if (!(h.breaks[i] > h.breaks[i - 1]))
            throw std::invalid_argument("StepFunction: breaks must be strictly increasing");
}

int target_node(const SimulationGrid& grid, double t, const char* who) {
    const int j = grid.node_index(t);
    if (j < 1) throw std::invalid_argument(std::string(who) + ": t must be a positive grid node");
    return j;
}

}  // namespace

double StepFunction::operator()(double u) const {
    if (breaks.size() < 2 || u < breaks.front() || u >= breaks.back()) return 0.0;
    const auto it = std::upper_bound(breaks.begin(), breaks.end(), u);
    return values[static_cast<std::size_t>(it - breaks.begin()) - 1];
}

double kg_step(const KernelSpec& kernel, const StepFunction& h, double t, double s) {
    check_step(h);
    if (!(s >= 0.0) || !(s < t)) throw std::domain_error("kg_step: requires 0 <= s < t");
    const double hs = h(s);
    double val = hs * kernel.eval(t, s);
    // constancy segments of (s, t): the tail integral telescopes to
    // sum_seg (h_seg - h(s)) (g(q, s) - g(p, s)). The segment starting at s
    // has h_seg = h(s+) = h(s), so g(s, s) is never evaluated.
    double prev = s;
    for (std::size_t i = 0; i <= h.breaks.size(); ++i) {
        double q;
        if (i < h.breaks.size()) {
            q = h.breaks[i];
            if (q <= s) continue;
            if (q >= t) q = t;
        } else {
            q = t;
        }
        if (q > prev) {
            const double c = h(0.5 * (prev + q));
            if (c != hs) val += (c - hs) * (kernel.eval(q, s) - kernel.eval(prev, s));
            prev = q;
        }
        if (q == t) break;
    }
    return val;
}

KgTable make_kg_table(const KernelSpec& kernel, const StepFunction& h, double t,
                      const SimulationGrid& grid) {
    check_step(h);
    KgTable table;
    table.grid = grid;
    table.t = t;
    table.j_t = target_node(grid, t, "make_kg_table");
    const double dt = grid.dt();
    table.cell_avg.assign(static_cast<std::size_t>(table.j_t), 0.0);

    for (int k = 0; k < table.j_t; ++k) {
        const double u0 = grid.node(k), u1 = grid.node(k + 1);
        // sub-intervals of the cell on which h(s) is constant
        std::vector<double> sub{u0};
        for (double b : h.breaks)
            if (b > u0 && b < u1) sub.push_back(b);
        sub.push_back(u1);

        double acc = 0.0;  // integral of K_g(h)(t, .) over the cell
        for (std::size_t i = 0; i + 1 < sub.size(); ++i) {
            const double a = sub[i], b = sub[i + 1];
            const double c = h(0.5 * (a + b));
            // For s in (a, b) the constancy segment adjacent to s carries c,
            // so only break points >= b enter the telescoped tail:
            //   K(t,s) = c g(t,s) + sum_m (c_m - c)(g(q_{m+1}, s) - g(q_m, s)),
            // a combination of g(x, .) with fixed x; averaging in s turns
            // each into the same cell integrals the path engine weights use.
            if (c != 0.0) acc += c * cell_integral(kernel, t, a, b);
            std::vector<double> q;
            for (double br : h.breaks)
                if (br >= b && br < t) q.push_back(br);
            q.push_back(t);
            for (std::size_t m = 0; m + 1 < q.size(); ++m) {
                const double cm = h(0.5 * (q[m] + q[m + 1]));
                if (cm != c)
                    acc += (cm - c) *
                           (cell_integral(kernel, q[m + 1], a, b) - cell_integral(kernel, q[m], a, b));
            }
        }
        table.cell_avg[static_cast<std::size_t>(k)] = acc / dt;
    }

    table.point = [kernel, h, t](double s) { return kg_step(kernel, h, t, s); };
    return table;
}

KgTable make_kg_table(const KernelSpec& kernel, const std::function<double(double)>& h, double t,
                      const SimulationGrid& grid) {
    KgTable table;
    table.grid = grid;
    table.t = t;
    table.j_t = target_node(grid, t, "make_kg_table");
    const double dt = grid.dt();
    table.cell_avg.assign(static_cast<std::size_t>(table.j_t), 0.0);

    // Per-point budget below the default: every cell average stacks many
    // operator values, so the outer quadrature supplies the final accuracy.
    const QuadOptions kopts{1024, 1e-12, 1e-11};
    auto K = [&](double s) { return kg_apply(kernel, h, t, s, KgScheme::Auto, false, kopts).value; };

    const bool singular = kernel.diagonal(0.0).kind == DiagonalKind::Singular;
    for (int k = 0; k < table.j_t; ++k) {
        const double u0 = grid.node(k), u1 = grid.node(k + 1);
        double cell = 0.0;
        if (k == table.j_t - 1 && singular) {
            // K(t, s) inherits the kernel blow-up h(s) g(t, s) as s -> t;
            // integrate in the offset w = t - s with the matching exponent
            const double a = kernel.density_exponent() + 1.0;
            const double w_floor = 1e-13 * std::max(1.0, t);
            cell = substituted_gk(
                [&](double w) { return K(t - std::max(w, w_floor)); }, u1 - u0, a, 1e-15, 1e-10,
                {}, 1e-10);
        } else {
            cell = adaptive_gk(K, u0, u1, 1e-15, 1e-10, 24, {}, 1e-10);
        }
        table.cell_avg[static_cast<std::size_t>(k)] = cell / dt;
    }

    table.point = [kernel, h, t](double s) { return kg_apply(kernel, h, t, s).value; };
    return table;
}

IntegralResult integrate_deterministic(const KgTable& table, const VmlvProcess& process,
                                       const VmlvPath& path) {
    if (!(table.grid == path.grid))
        throw std::invalid_argument("integrate_deterministic: table grid differs from path grid");
    const LevyDriver& drv = process.driver();
    const double dt = path.grid.dt();

    double val = 0.0;
    for (int k = 0; k < table.j_t; ++k)
        val += table.cell_avg[static_cast<std::size_t>(k)] *
               path.sigma[static_cast<std::size_t>(k)] *
               diffuse_cell_increment(drv, path.driver_path, static_cast<std::size_t>(k));

    if (has_exact_jumps(drv)) {
        for (const Jump& jmp : path.driver_path.jumps) {
            if (jmp.time > table.t) continue;
            // a jump landing exactly on t would touch the diagonal
            const double ts = std::min(jmp.time, table.t - 1e-12 * dt);
            val += path.sigma[cell_of(path.grid, jmp.time)] * jmp.size * table.point(ts);
        }
    }
    return {val, IntegralMethod::KgDeterministic, path.grid};
}

IntegralResult integrate_deterministic(const std::function<double(double)>& h,
                                       const VmlvProcess& process, const VmlvPath& path,
                                       double t) {
    return integrate_deterministic(make_kg_table(process.kernel(), h, t, path.grid), process, path);
}

IntegralResult integrate_deterministic(const StepFunction& h, const VmlvProcess& process,
                                       const VmlvPath& path, double t) {
    return integrate_deterministic(make_kg_table(process.kernel(), h, t, path.grid), process, path);
}

IntegralResult integrate_simple(const std::vector<double>& partition, const std::vector<double>& Z,
                                const VmlvPath& path) {
    if (partition.size() < 2 || Z.size() + 1 != partition.size())
        throw std::invalid_argument("integrate_simple: needs m+1 partition times for m factors");
    std::vector<int> idx(partition.size());
    for (std::size_t i = 0; i < partition.size(); ++i) {
        const int j = path.grid.node_index(partition[i]);
        if (j < 0)
            throw PartitionMisalignedError("integrate_simple: partition time " +
                                           std::to_string(partition[i]) + " is not a grid node");
        if (i > 0 && j <= idx[i - 1])
            throw std::invalid_argument("integrate_simple: partition must be strictly increasing");
        idx[i] = j;
    }
    double val = 0.0;
    for (std::size_t i = 0; i + 1 < partition.size(); ++i)
        val += Z[i] * (path.X[static_cast<std::size_t>(idx[i + 1])] -
                       path.X[static_cast<std::size_t>(idx[i])]);
    return {val, IntegralMethod::SimpleSum, path.grid};
}

IntegralResult semimartingale_pathwise(const std::function<double(double)>& h,
                                       const VmlvProcess& process, const VmlvPath& path,
                                       double t) {
    const int j_t = target_node(path.grid, t, "semimartingale_pathwise");
    const Decomposition d = decompose(process, path);
    double val = 0.0;
    for (int k = 0; k < j_t; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const double dxk = d.martingale[ks + 1] - d.martingale[ks] + d.drift[ks + 1] - d.drift[ks];
        val += h(path.grid.node(k)) * dxk;
    }
    return {val, IntegralMethod::SemimartingalePathwise, path.grid};
}

OuSolver::OuSolver(const VmlvProcess& process, double alpha)
    : process_(&process), alpha_(alpha) {
    if (!process.kernel().shift_invariant())
        throw NotShiftInvariantError("OuSolver: the lag representation needs a shift-invariant kernel");
    if (alpha == 0.0)
        throw std::invalid_argument("OuSolver: alpha must be nonzero (alpha == 0 gives Y == X)");
}

double OuSolver::lag_value(double w) const {
    if (!(w > 0.0)) throw std::domain_error("OuSolver::lag_value: requires w > 0");
    const KernelSpec& kernel = process_->kernel();
    const double a = alpha_;
    const double e =
        stieltjes_integrate(kernel, 0.0, w, [a](double u) { return std::expm1(a * u); });
    return std::exp(-a * w) * (kernel.eval_offset(0.0, w) + e);
}

std::shared_ptr<const OuSolver::LagTable> OuSolver::table_for(const SimulationGrid& grid) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& e : cache_)
            if (e.first == grid) return e.second;
    }
    // build outside the lock; a concurrent duplicate build is wasted work,
    // not a correctness problem
    auto lt = std::make_shared<LagTable>();
    const int n = grid.n;
    const double dt = grid.dt();
    const KernelSpec& kernel = process_->kernel();

    std::vector<double> G(static_cast<std::size_t>(n) + 1, 0.0);
    lt->point.assign(static_cast<std::size_t>(n) + 1, 0.0);
    lt->cell_avg.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int m = 1; m <= n; ++m) {
        const double w = grid.node(m);
        G[static_cast<std::size_t>(m)] = kernel.eval_offset(0.0, w);
        lt->point[static_cast<std::size_t>(m)] = lag_value(w);
    }
    // cell averages from K' = g' - alpha K: alpha int_cell K = dG - dK over
    // the cell. K - g -> 0 at lag 0+ (also when both blow up), so the first
    // cell needs no limit value.
    lt->cell_avg[1] = (G[1] - lt->point[1]) / (alpha_ * dt);
    for (int m = 2; m <= n; ++m) {
        const std::size_t ms = static_cast<std::size_t>(m);
        lt->cell_avg[ms] =
            ((G[ms] - G[ms - 1]) - (lt->point[ms] - lt->point[ms - 1])) / (alpha_ * dt);
    }

    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& e : cache_)
        if (e.first == grid) return e.second;
    cache_.emplace_back(grid, lt);
    return lt;
}

std::vector<double> OuSolver::lag_convolution(const VmlvPath& path,
                                              const std::vector<double>& lag_weights) const {
    const SimulationGrid& grid = path.grid;
    const int n = grid.n;
    const double dt = grid.dt();
    const LevyDriver& drv = process_->driver();

    std::vector<double> ybase(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        ybase[static_cast<std::size_t>(k)] =
            path.sigma[static_cast<std::size_t>(k)] *
            diffuse_cell_increment(drv, path.driver_path, static_cast<std::size_t>(k));

    std::vector<double> Y(static_cast<std::size_t>(n) + 1, 0.0);
    for (int j = 1; j <= n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < j; ++k)
            acc += lag_weights[static_cast<std::size_t>(j - k)] * ybase[static_cast<std::size_t>(k)];
        Y[static_cast<std::size_t>(j)] = acc;
    }

    if (has_exact_jumps(drv)) {
        for (const Jump& jmp : path.driver_path.jumps) {
            const std::size_t kc = cell_of(grid, jmp.time);
            const double mass = path.sigma[kc] * jmp.size;
            for (int j = static_cast<int>(kc) + 1; j <= n; ++j) {
                const double w = std::max(grid.node(j) - jmp.time, 1e-12 * dt);
                Y[static_cast<std::size_t>(j)] += mass * lag_value(w);
            }
        }
    }
    return Y;
}

std::vector<double> OuSolver::solve(const VmlvPath& path) const {
    // Left-point sum: diffuse cell increments weighted by the lag function at
    // whole-node lags. First-order accurate, matching the order-1 residual
    // behaviour the refinement diagnostics look for.
    return lag_convolution(path, table_for(path.grid)->point);
}

std::vector<double> OuSolver::integral_path(const VmlvPath& path) const {
    // Cell-averaged lag weights: the same discretization integrate_deterministic
    // uses, so entry j reproduces its value at node j to machine precision.
    return lag_convolution(path, table_for(path.grid)->cell_avg);
}

std::vector<double> ou_solution(double alpha, const VmlvProcess& process, const VmlvPath& path) {
    return OuSolver(process, alpha).solve(path);
}

double ou_residual(const std::vector<double>& Y, const std::vector<double>& X, double alpha,
                   const SimulationGrid& grid) {
    const std::size_t n1 = static_cast<std::size_t>(grid.n) + 1;
    if (Y.size() != n1 || X.size() != n1)
        throw std::invalid_argument("ou_residual: node arrays must match the grid");
    const double dt = grid.dt();
    double cum = 0.0;
    double res = std::abs(Y[0] - X[0]);
    for (std::size_t j = 1; j < n1; ++j) {
        cum += 0.5 * dt * (Y[j - 1] + Y[j]);
        res = std::max(res, std::abs(Y[j] + alpha * cum - X[j]));
    }
    return res;
}

}  // namespace volterra
