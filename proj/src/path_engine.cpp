#include "volterra/path_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "volterra/errors.hpp"
#include "volterra/quadrature.hpp"
#include "volterra/rng.hpp"

namespace volterra {

WeightTable::WeightTable(const KernelSpec& kernel, const SimulationGrid& grid)
    : grid_(grid), shift_invariant_(kernel.shift_invariant()) {
    const int n = grid.n;
    const double dt = grid.dt();
    if (shift_invariant_) {
        lag_.assign(static_cast<std::size_t>(n) + 1, 0.0);
        for (int m = 1; m <= n; ++m)
            lag_[static_cast<std::size_t>(m)] = cell_integral(kernel, grid.node(m), 0.0, dt) / dt;
    } else {
        tri_.resize(static_cast<std::size_t>(n) * (static_cast<std::size_t>(n) + 1) / 2);
        for (int j = 1; j <= n; ++j) {
            const std::size_t row = static_cast<std::size_t>(j) * (static_cast<std::size_t>(j) - 1) / 2;
            for (int k = 0; k < j; ++k)
                tri_[row + static_cast<std::size_t>(k)] =
                    cell_integral(kernel, grid.node(j), grid.node(k), grid.node(k + 1)) / dt;
        }
    }
}

VmlvProcess::VmlvProcess(KernelSpec kernel, VolatilityModel volatility, LevyDriver driver,
                         double horizon, bool shared_driver)
    : kernel_(std::move(kernel)),
      volatility_(std::move(volatility)),
      driver_(std::move(driver)),
      horizon_(horizon),
      shared_driver_(shared_driver) {
    if (!(horizon_ > 0.0)) throw std::invalid_argument("VmlvProcess: horizon must be positive");
    const double T = horizon_;
    // kernel section as the integrand; a sigma rescaling is a constant factor
    // and cannot flip a finiteness verdict
    auto phi = [this, T](double s) {
        try {
            return kernel_.eval(T, s);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    report_ = check_integrability(driver_, phi, T, 256);
    if (!report_.all_finite) {
        std::string which;
        if (!report_.gaussian_quadratic.finite) which += " gaussian-quadratic";
        if (!report_.jump_compensation.finite) which += " jump-compensation";
        if (!report_.drift.finite) which += " drift";
        throw NonIntegrableError("VmlvProcess: integrability condition(s) fail on [0, horizon]:" + which);
    }
}

std::shared_ptr<const WeightTable> VmlvProcess::weights(const SimulationGrid& grid) const {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (const auto& entry : weight_cache_)
        if (entry.first == grid) return entry.second;
    auto w = std::make_shared<const WeightTable>(kernel_, grid);
    weight_cache_.emplace_back(grid, w);
    return w;
}

VmlvPath simulate(const VmlvProcess& process, const SimulationGrid& grid, std::uint64_t seed) {
    const auto wt = process.weights(grid);
    const int n = grid.n;
    const double dt = grid.dt();
    const LevyDriver& drv = process.driver();

    VmlvPath path;
    path.grid = grid;
    path.driver_path =
        sample_increments(drv, grid, substream_seed(seed, SeedStream::Driver));
    path.sigma = process.shared_driver()
                     ? sigma_path_from_jumps(process.volatility(), grid, path.driver_path.jumps)
                     : sample_sigma_path(process.volatility(), grid,
                                         substream_seed(seed, SeedStream::Volatility));

    const bool jump_driver = has_exact_jumps(drv);

    // diffuse cell mass (Gaussian part, compensator drift, infinite-activity
    // subordinator increments); exact-time jumps are layered on afterwards
    std::vector<double> ybase(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k)
        ybase[static_cast<std::size_t>(k)] =
            path.sigma[static_cast<std::size_t>(k)] *
            diffuse_cell_increment(drv, path.driver_path, static_cast<std::size_t>(k));

    path.X.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int j = 1; j <= n; ++j) {
        double x = 0.0;
        for (int k = 0; k < j; ++k) x += wt->w(j, k) * ybase[static_cast<std::size_t>(k)];
        path.X[static_cast<std::size_t>(j)] = x;
    }

    if (jump_driver) {
        for (const Jump& jmp : path.driver_path.jumps) {
            const std::size_t kc = cell_of(grid, jmp.time);
            const double mass = path.sigma[kc] * jmp.size;
            for (int j = static_cast<int>(kc) + 1; j <= n; ++j) {
                const double tj = grid.node(j);
                // a jump landing exactly on a node would touch the diagonal
                const double ts = std::min(jmp.time, tj - 1e-12 * dt);
                path.X[static_cast<std::size_t>(j)] += mass * process.kernel().eval(tj, ts);
            }
        }
    }
    return path;
}

namespace {

// square integrability of dg/dv near the diagonal decides the semimartingale
// property; closed-form families are classified exactly, tables are probed
bool drift_square_integrable(const KernelSpec& kernel, double T) {
    switch (kernel.family()) {
        case KernelFamily::ConstantOne:
        case KernelFamily::ExpShift:
        case KernelFamily::CarmaShift:
            return true;
        case KernelFamily::GammaShift: {
            const double nu = kernel.gamma_nu();
            return nu == 1.0 || nu > 1.5;
        }
        case KernelFamily::FbmBracket:
            return std::abs(kernel.hurst() - 0.5) <= 1e-14;
        case KernelFamily::Tabulated: {
            const double s0 = 0.37 * T;
            std::array<double, 3> lev{};
            for (int j = 0; j < 3; ++j) {
                const double eta = T * 1e-2 * std::pow(10.0, -j);
                lev[static_cast<std::size_t>(j)] =
                    adaptive_gk([&](double v) { const double f = kernel.deriv_t(v, s0); return f * f; },
                                s0 + eta, T, 1e-12, 1e-9);
            }
            const double d1 = std::abs(lev[1] - lev[0]);
            const double d2 = std::abs(lev[2] - lev[1]);
            return d2 <= 0.6 * d1 + 1e-10 * std::max(1.0, std::abs(lev[2]));
        }
    }
    return false;
}

}  // namespace

Decomposition decompose(const VmlvProcess& process, const VmlvPath& path) {
    const KernelSpec& kernel = process.kernel();
    const SimulationGrid& grid = path.grid;
    const int n = grid.n;
    const double dt = grid.dt();

    const Diagonal d0 = kernel.diagonal(0.0);
    if (d0.kind == DiagonalKind::Singular)
        throw NotSemimartingaleError(
            "decompose: kernel diagonal is singular, no semimartingale decomposition exists");
    if (!drift_square_integrable(kernel, grid.T))
        throw NotSemimartingaleError(
            "decompose: dg/dv fails square integrability near the diagonal");

    // int_0^T g(s,s)^2 ds must be finite (left sum over the sampled diagonal)
    double diag_sq = 0.0;
    std::vector<double> diag_vals(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double dv = kernel.diagonal(grid.node(k)).value;
        diag_vals[static_cast<std::size_t>(k)] = dv;
        diag_sq += dv * dv * dt;
    }
    if (!std::isfinite(diag_sq))
        throw NotSemimartingaleError("decompose: diagonal fails square integrability");

    const LevyDriver& drv = process.driver();
    std::vector<double> dl(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        dl[static_cast<std::size_t>(k)] = path.driver_path.increment(drv, static_cast<std::size_t>(k));

    Decomposition out;
    out.martingale.assign(static_cast<std::size_t>(n) + 1, 0.0);
    out.drift.assign(static_cast<std::size_t>(n) + 1, 0.0);

    for (int j = 1; j <= n; ++j)
        out.martingale[static_cast<std::size_t>(j)] =
            out.martingale[static_cast<std::size_t>(j) - 1] +
            diag_vals[static_cast<std::size_t>(j) - 1] * path.sigma[static_cast<std::size_t>(j) - 1] *
                dl[static_cast<std::size_t>(j) - 1];

    // drift(t_j) = dt * sum_{m<j} inner(t_m),
    // inner(t_m) = sum_{k<m} [(1/dt) int_cell dg/dv(t_m, s) ds] sigma_k dL_k
    std::vector<double> inner(static_cast<std::size_t>(n), 0.0);
    if (kernel.family() == KernelFamily::Tabulated) {
        for (int m = 1; m < n; ++m) {
            const double tm = grid.node(m);
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
                double err = 0.0;
                const double cellint = gk15_panel([&](double s) { return kernel.deriv_t(tm, s); },
                                                  grid.node(k), grid.node(k + 1), err);
                acc += (cellint / dt) * path.sigma[static_cast<std::size_t>(k)] *
                       dl[static_cast<std::size_t>(k)];
            }
            inner[static_cast<std::size_t>(m)] = acc;
        }
    } else {
        // shift-invariant: int_cell dg/dv(t_m, s) ds = g(lag m-k) - g(lag m-k-1)
        std::vector<double> glag(static_cast<std::size_t>(n) + 1);
        glag[0] = d0.value;
        for (int m = 1; m <= n; ++m)
            glag[static_cast<std::size_t>(m)] = kernel.eval(grid.node(m), 0.0);
        for (int m = 1; m < n; ++m) {
            double acc = 0.0;
            for (int k = 0; k < m; ++k)
                acc += (glag[static_cast<std::size_t>(m - k)] - glag[static_cast<std::size_t>(m - k - 1)]) / dt *
                       path.sigma[static_cast<std::size_t>(k)] * dl[static_cast<std::size_t>(k)];
            inner[static_cast<std::size_t>(m)] = acc;
        }
    }
    for (int j = 1; j <= n; ++j)
        out.drift[static_cast<std::size_t>(j)] =
            out.drift[static_cast<std::size_t>(j) - 1] + dt * inner[static_cast<std::size_t>(j) - 1];

    double res = 0.0;
    for (int j = 0; j <= n; ++j)
        res = std::max(res, std::abs(out.martingale[static_cast<std::size_t>(j)] +
                                     out.drift[static_cast<std::size_t>(j)] -
                                     path.X[static_cast<std::size_t>(j)]));
    out.recomposition_residual = res;
    return out;
}

}  // namespace volterra
