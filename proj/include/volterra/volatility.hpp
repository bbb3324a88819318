#pragma once

#include <cstdint>
#include <vector>

#include "volterra/grid.hpp"
#include "volterra/levy.hpp"

namespace volterra {

enum class VolModelKind { Constant, LevyOU, TwoSidedStationaryOU };
enum class OuInit { Zero, Stationary };

// Volatility models producing nonnegative, predictable per-cell sigma values.
// The OU variants square-root a subordinator-driven Ornstein-Uhlenbeck
// variance process d(sigma^2) = -beta sigma^2 dt + dL(t).
class VolatilityModel {
public:
    static VolatilityModel constant(double value);
    static VolatilityModel levy_ou(double beta, LevyDriver subordinator, OuInit init);
    // Stationary on all of [0, T]: the driving jumps extend back to -burn_in
    // (default 10/beta), truncating the exact moving-average window.
    static VolatilityModel two_sided_stationary_ou(double beta, LevyDriver subordinator,
                                                   double burn_in = -1.0);

    VolModelKind kind() const { return kind_; }
    double constant_value() const { return value_; }
    double beta() const { return beta_; }
    OuInit init() const { return init_; }
    double burn_in() const { return burn_in_; }
    const LevyDriver& subordinator() const;

    // E sigma^2 in the stationary regime (value^2 for Constant)
    double stationary_mean() const;
    // mass dropped by cutting the stationary window at -burn_in:
    // e^{-beta burn_in} * stationary_mean; zero for Constant and Zero-start OU
    double truncation_tail_bound() const;

private:
    VolatilityModel() = default;
    VolModelKind kind_ = VolModelKind::Constant;
    double value_ = 0.0;
    double beta_ = 0.0;
    OuInit init_ = OuInit::Zero;
    double burn_in_ = 0.0;
    std::vector<LevyDriver> sub_;  // empty for Constant
};

// Left-endpoint sigma values sigma(t_0), ..., sigma(t_{n-1}): entry k is the
// value frozen over cell k, so it never depends on jumps at or after t_k.
std::vector<double> sample_sigma_path(const VolatilityModel& model, const SimulationGrid& grid,
                                      std::uint64_t seed);

// Same recursion but driven by an externally supplied jump stream (the
// shared-driver case where sigma and the integrator L move together). Starts
// from sigma^2(0) = 0; jump sizes must be nonnegative.
std::vector<double> sigma_path_from_jumps(const VolatilityModel& model, const SimulationGrid& grid,
                                          const std::vector<Jump>& jumps);

}  // namespace volterra
