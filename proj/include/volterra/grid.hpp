#pragma once

#include <cmath>
#include <stdexcept>

namespace volterra {

// Uniform time grid on [0, T] with a power-of-two cell count, so refinement
// studies nest exactly.
struct SimulationGrid {
    double T = 1.0;
    int n = 2;

    SimulationGrid() = default;
    SimulationGrid(double horizon, int cells) : T(horizon), n(cells) {
        if (!(T > 0.0)) throw std::invalid_argument("SimulationGrid: T must be positive");
        if (n < 2 || (n & (n - 1)) != 0)
            throw std::invalid_argument("SimulationGrid: n must be a power of two >= 2");
    }

    double dt() const { return T / n; }
    double node(int k) const { return T * static_cast<double>(k) / n; }

    // Index j with node(j) == t, or -1 when t is not a grid node.
    int node_index(double t) const {
        double x = t / dt();
        int j = static_cast<int>(std::lround(x));
        if (j < 0 || j > n) return -1;
        if (std::abs(node(j) - t) > 1e-12 * std::max(1.0, T)) return -1;
        return j;
    }

    bool operator==(const SimulationGrid& o) const { return T == o.T && n == o.n; }
};

}  // namespace volterra
