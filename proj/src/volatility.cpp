#include "volterra/volatility.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "volterra/rng.hpp"

namespace volterra {

VolatilityModel VolatilityModel::constant(double value) {
    if (!(value >= 0.0) || !std::isfinite(value))
        throw std::invalid_argument("VolatilityModel::constant: value must be nonnegative");
    VolatilityModel m;
    m.kind_ = VolModelKind::Constant;
    m.value_ = value;
    return m;
}

VolatilityModel VolatilityModel::levy_ou(double beta, LevyDriver subordinator, OuInit init) {
    if (!(beta > 0.0)) throw std::invalid_argument("VolatilityModel::levy_ou: beta must be positive");
    if (!subordinator.is_subordinator())
        throw std::invalid_argument("VolatilityModel::levy_ou: driver must be a subordinator");
    VolatilityModel m;
    m.kind_ = VolModelKind::LevyOU;
    m.beta_ = beta;
    m.init_ = init;
    m.burn_in_ = (init == OuInit::Stationary) ? 10.0 / beta : 0.0;
    m.sub_.push_back(std::move(subordinator));
    return m;
}

VolatilityModel VolatilityModel::two_sided_stationary_ou(double beta, LevyDriver subordinator,
                                                         double burn_in) {
    if (!(beta > 0.0))
        throw std::invalid_argument("VolatilityModel::two_sided_stationary_ou: beta must be positive");
    if (!subordinator.is_subordinator())
        throw std::invalid_argument(
            "VolatilityModel::two_sided_stationary_ou: driver must be a subordinator");
    if (burn_in < 0.0) burn_in = 10.0 / beta;
    if (!(burn_in > 0.0))
        throw std::invalid_argument("VolatilityModel::two_sided_stationary_ou: burn_in must be positive");
    VolatilityModel m;
    m.kind_ = VolModelKind::TwoSidedStationaryOU;
    m.beta_ = beta;
    m.init_ = OuInit::Stationary;
    m.burn_in_ = burn_in;
    m.sub_.push_back(std::move(subordinator));
    return m;
}

const LevyDriver& VolatilityModel::subordinator() const {
    if (sub_.empty()) throw std::logic_error("VolatilityModel::subordinator: constant model has none");
    return sub_.front();
}

double VolatilityModel::stationary_mean() const {
    if (kind_ == VolModelKind::Constant) return value_ * value_;
    return sub_.front().moments().first / beta_;
}

double VolatilityModel::truncation_tail_bound() const {
    if (kind_ == VolModelKind::Constant || init_ == OuInit::Zero) return 0.0;
    return std::exp(-beta_ * burn_in_) * stationary_mean();
}

namespace {

// sigma^2(0) for a stationary start: the moving-average integral
// int_{-B}^0 e^{beta u} dL(u), sampled exactly for compound-Poisson
// subordinators and by a fine cell recursion otherwise.
double stationary_initial_state(const VolatilityModel& model, std::uint64_t seed) {
    const LevyDriver& sub = model.subordinator();
    const double beta = model.beta();
    const double B = model.burn_in();
    std::mt19937_64 eng = make_engine(seed);
    if (sub.subordinator_family() == SubordinatorFamily::CompoundPoissonPositive) {
        const JumpLaw& law = sub.cp_law();
        const std::uint64_t count = samplers::poisson(eng, sub.cp_rate() * B);
        std::vector<double> offsets(count);  // time before 0
        for (auto& u : offsets) u = samplers::uniform01(eng) * B;
        double state = 0.0;
        for (std::uint64_t i = 0; i < count; ++i) state += std::exp(-beta * offsets[i]) * law.sample(eng);
        return state;
    }
    // infinite-activity subordinator: recurse over a fine auxiliary grid with
    // each cell's mass arriving at the cell end
    const int aux_n = 1024;
    SimulationGrid aux(B, aux_n);
    DriverPath path = sample_increments(sub, aux, seed);
    const double decay = std::exp(-beta * aux.dt());
    double state = 0.0;
    for (int k = 0; k < aux_n; ++k) state = decay * state + path.subordinator_cells[static_cast<std::size_t>(k)];
    return state;
}

std::vector<double> ou_path_from_parts(const VolatilityModel& model, const SimulationGrid& grid,
                                       double initial_state, const DriverPath* driver_path,
                                       const std::vector<Jump>* raw_jumps) {
    const double beta = model.beta();
    const double dt = grid.dt();
    const double decay = std::exp(-beta * dt);
    const std::size_t n = static_cast<std::size_t>(grid.n);
    std::vector<double> sigma(n);
    double state = initial_state;

    const bool exact_jumps =
        raw_jumps != nullptr ||
        (driver_path != nullptr && !driver_path->jumps.empty());
    const std::vector<Jump>* jumps = raw_jumps ? raw_jumps : (driver_path ? &driver_path->jumps : nullptr);

    if (exact_jumps && jumps != nullptr) {
        // exact recursion: each jump decayed from its own arrival time
        std::size_t j = 0;
        for (std::size_t k = 0; k < n; ++k) {
            sigma[k] = std::sqrt(std::max(state, 0.0));
            const double t1 = grid.node(static_cast<int>(k) + 1);
            state *= decay;
            while (j < jumps->size() && (*jumps)[j].time <= t1) {
                state += std::exp(-beta * (t1 - (*jumps)[j].time)) * (*jumps)[j].size;
                ++j;
            }
        }
        return sigma;
    }

    // cell-increment recursion (Gamma / inverse-Gaussian subordinators):
    // the whole cell mass arrives at the cell end
    for (std::size_t k = 0; k < n; ++k) {
        sigma[k] = std::sqrt(std::max(state, 0.0));
        state = decay * state + (driver_path ? driver_path->subordinator_cells[k] : 0.0);
    }
    return sigma;
}

}  // namespace

std::vector<double> sample_sigma_path(const VolatilityModel& model, const SimulationGrid& grid,
                                      std::uint64_t seed) {
    const std::size_t n = static_cast<std::size_t>(grid.n);
    if (model.kind() == VolModelKind::Constant)
        return std::vector<double>(n, model.constant_value());

    // fixed sub-seed split: 0 drives the on-grid jumps, 1 the stationary start
    const std::uint64_t main_seed = derive_seed(seed, 0);
    const std::uint64_t init_seed = derive_seed(seed, 1);

    double initial = 0.0;
    if (model.init() == OuInit::Stationary) initial = stationary_initial_state(model, init_seed);

    DriverPath path = sample_increments(model.subordinator(), grid, main_seed);
    return ou_path_from_parts(model, grid, initial, &path, nullptr);
}

std::vector<double> sigma_path_from_jumps(const VolatilityModel& model, const SimulationGrid& grid,
                                          const std::vector<Jump>& jumps) {
    if (model.kind() == VolModelKind::Constant)
        return std::vector<double>(static_cast<std::size_t>(grid.n), model.constant_value());
    for (const Jump& j : jumps)
        if (!(j.size >= 0.0))
            throw std::invalid_argument("sigma_path_from_jumps: jump sizes must be nonnegative");
    std::vector<Jump> sorted = jumps;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Jump& a, const Jump& b) { return a.time < b.time; });
    return ou_path_from_parts(model, grid, 0.0, nullptr, &sorted);
}

}  // namespace volterra
