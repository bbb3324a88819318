#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "volterra/grid.hpp"
#include "volterra/kernels.hpp"
#include "volterra/levy.hpp"
#include "volterra/volatility.hpp"

namespace volterra {

// Cell-averaged kernel weights w_{jk} = (1/dt) int_{t_k}^{t_{k+1}} g(t_j, u) du
// for every target node j and cell k < j. Shift-invariant kernels collapse to
// a lag vector; the rest store the lower triangle. Built once per
// (kernel, grid) and shared read-only across Monte Carlo paths.
class WeightTable {
public:
    WeightTable(const KernelSpec& kernel, const SimulationGrid& grid);

    // weight of cell k in the sum for X(t_j); requires 0 <= k < j <= n
    double w(int j, int k) const {
        return shift_invariant_ ? lag_[static_cast<std::size_t>(j - k)]
                                : tri_[static_cast<std::size_t>(j) * (static_cast<std::size_t>(j) - 1) / 2 +
                                       static_cast<std::size_t>(k)];
    }
    const SimulationGrid& grid() const { return grid_; }

private:
    SimulationGrid grid_;
    bool shift_invariant_;
    std::vector<double> lag_;  // lag_[m] = weight at lag m = j - k, m in [1, n]
    std::vector<double> tri_;  // row-major lower triangle
};

struct VmlvPath {
    SimulationGrid grid;
    std::vector<double> X;      // node values, X[0] = 0, size n + 1
    std::vector<double> sigma;  // left-point sigma per cell, size n
    DriverPath driver_path;
};

// The process X(t) = int_0^t g(t,s) sigma(s) dL(s). Construction verifies the
// driver/kernel integrability conditions on [0, horizon]; a constant sigma
// rescaling cannot flip those verdicts, so the check runs on the kernel
// section alone.
class VmlvProcess {
public:
    VmlvProcess(KernelSpec kernel, VolatilityModel volatility, LevyDriver driver,
                double horizon = 1.0, bool shared_driver = false);

    const KernelSpec& kernel() const { return kernel_; }
    const VolatilityModel& volatility() const { return volatility_; }
    const LevyDriver& driver() const { return driver_; }
    double horizon() const { return horizon_; }
    bool shared_driver() const { return shared_driver_; }
    const IntegrabilityReport& integrability() const { return report_; }

    // cached weight table for a grid (thread-safe; built on first use)
    std::shared_ptr<const WeightTable> weights(const SimulationGrid& grid) const;

private:
    KernelSpec kernel_;
    VolatilityModel volatility_;
    LevyDriver driver_;
    double horizon_;
    bool shared_driver_;
    IntegrabilityReport report_;

    mutable std::mutex cache_mutex_;
    mutable std::vector<std::pair<SimulationGrid, std::shared_ptr<const WeightTable>>> weight_cache_;
};

// One path of X on the grid. sigma uses the volatility substream and the
// driver the driver substream of `seed`, so the pair is reproducible per
// (process, grid, seed) regardless of how many paths run concurrently.
// Compound-Poisson jumps are weighted by the exact kernel value at their own
// arrival time; all diffuse cell mass uses the cell-averaged weights.
VmlvPath simulate(const VmlvProcess& process, const SimulationGrid& grid, std::uint64_t seed);

struct Decomposition {
    std::vector<double> martingale;  // node values, size n + 1
    std::vector<double> drift;       // node values, size n + 1
    double recomposition_residual;   // sup_j |martingale + drift - X|
};

// Semimartingale split X = int g(s,s) sigma dL + int_0^t (int_0^v dg/dv(v,s)
// sigma(s) dL(s)) dv. Kernels with a singular diagonal, or whose time
// derivative fails square integrability near the diagonal, do not admit this
// and raise NotSemimartingaleError.
Decomposition decompose(const VmlvProcess& process, const VmlvPath& path);

}  // namespace volterra
