#include "volterra/chaos.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "volterra/errors.hpp"
#include "volterra/kg_operator.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

namespace {

void check_horizon(double t, double horizon, const char* who) {
    if (t != horizon)
        throw std::invalid_argument(std::string(who) +
                                    ": t must equal the horizon the kernel was built with");
}

void check_gaussian_path(const DriverPath& path, const char* who) {
    if (path.gaussian.empty() || !path.jumps.empty() || !path.subordinator_cells.empty() ||
        path.compensator_rate != 0.0)
        throw RequiresBrownianError(std::string(who) +
                                    " needs a pure Gaussian driver path (no jumps, no "
                                    "subordinator mass, no compensator)");
}

void check_standard_brownian(const LevyDriver& driver, const VmlvPath& path, const char* who) {
    if (driver.kind() != DriverKind::Brownian || driver.brownian_c2() != 1.0 ||
        driver.drift_gamma() != 0.0)
        throw RequiresBrownianError(std::string(who) +
                                    " needs a standard Brownian driver (c2 == 1, no drift)");
    for (double sv : path.sigma)
        if (sv != 1.0)
            throw RequiresUnitVolatilityError(std::string(who) + " needs sigma identically 1");
}

}  // namespace

void KtildeKernel::init() {
    if (!(t_ > 0.0)) throw std::invalid_argument("KtildeKernel: horizon must be positive");
    if (kernel_.diagonal().kind == DiagonalKind::Singular)
        throw SingularDiagonalError(kernel_.name() +
                                    ": the second-chaos kernel needs a finite kernel diagonal");
    outer_opts_ = QuadOptions{512, 1e-11, 1e-10};
    inner_opts_ = QuadOptions{256, 1e-10, 1e-9};
}

KtildeKernel::KtildeKernel(KernelSpec g, std::function<double(double)> h, double t)
    : kernel_(std::move(g)), h_(std::move(h)), t_(t) {
    if (!h_) throw std::invalid_argument("KtildeKernel: integrand h is empty");
    init();
}

KtildeKernel::KtildeKernel(KernelSpec g, double t) : kernel_(std::move(g)), h_(), t_(t) { init(); }

double KtildeKernel::diagonal_value(double s) const {
    const Diagonal d = kernel_.diagonal(s);
    return d.kind == DiagonalKind::Finite ? d.value : 0.0;
}

double KtildeKernel::inner(double u, double v) const {
    if (!h_) return kernel_.eval(u, v);
    if (u <= v) return h_(v) * diagonal_value(v);  // operator value on the diagonal
    return kg_apply(kernel_, h_, u, v, KgScheme::Auto, false, inner_opts_).value;
}

double KtildeKernel::operator()(double s, double v) const {
    if (!(s >= 0.0 && v >= 0.0 && s < t_ && v < t_))
        throw std::domain_error("KtildeKernel: needs 0 <= s, v < horizon");
    if (v == s) return diagonal(s);
    if (v < s) {
        return inner(s, v) * diagonal_value(s) +
               stieltjes_integrate(
                   kernel_, s, t_, [&](double u) { return inner(u, v); }, outer_opts_);
    }
    return stieltjes_integrate_from(
        kernel_, s, v, t_, [&](double u) { return inner(u, v); }, outer_opts_);
}

double KtildeKernel::diagonal(double s) const {
    if (!(s >= 0.0 && s < t_))
        throw std::domain_error("KtildeKernel::diagonal: needs 0 <= s < horizon");
    const double dval = diagonal_value(s);
    const double hs = h_ ? h_(s) : 1.0;
    return hs * dval * dval +
           stieltjes_integrate(
               kernel_, s, t_, [&](double u) { return inner(u, s); }, outer_opts_);
}

double KtildeKernel::trace() const {
    {
        std::lock_guard<std::mutex> lk(cache_mutex_);
        if (trace_) return *trace_;
    }
    // diagonal() is quadrature-backed, so hand the outer integrator its
    // noise level instead of letting it chase phantom digits
    const double val = adaptive_gk([this](double s) { return diagonal(s); }, 0.0, t_, 1e-10,
                                   1e-9, 24, {}, 1e-9);
    std::lock_guard<std::mutex> lk(cache_mutex_);
    if (!trace_) trace_ = val;
    return *trace_;
}

std::shared_ptr<const KtildeKernel::NodeMatrix> KtildeKernel::node_matrix(
    const SimulationGrid& grid) const {
    const int m = grid.node_index(t_);
    if (m < 1)
        throw std::invalid_argument("KtildeKernel::node_matrix: horizon is not a node of the grid");
    {
        std::lock_guard<std::mutex> lk(cache_mutex_);
        for (const auto& e : matrix_cache_)
            if (e.first == grid) return e.second;
    }

    auto mat = std::make_shared<NodeMatrix>();
    mat->m = m;
    mat->sym.resize(static_cast<std::size_t>(m) * (static_cast<std::size_t>(m) - 1) / 2);
    std::size_t idx = 0;
    for (int j = 1; j < m; ++j) {
        const double s = grid.node(j);
        const double dval = diagonal_value(s);
        for (int k = 0; k < j; ++k, ++idx) {
            const double v = grid.node(k);
            // Ktilde(t_j, t_k): the node pair sits below the diagonal
            const double below =
                inner(s, v) * dval +
                stieltjes_integrate(
                    kernel_, s, t_, [&](double u) { return inner(u, v); }, outer_opts_);
            // Ktilde(t_k, t_j): measure anchored at t_k, domain starts at t_j
            const double above = stieltjes_integrate_from(
                kernel_, v, s, t_, [&](double u) { return inner(u, s); }, outer_opts_);
            mat->sym[idx] = below + above;
        }
    }

    std::lock_guard<std::mutex> lk(cache_mutex_);
    for (const auto& e : matrix_cache_)
        if (e.first == grid) return e.second;  // another thread won the build
    matrix_cache_.emplace_back(grid, mat);
    return mat;
}

double ktilde(const KtildeKernel& kern, double s, double v) { return kern(s, v); }

double trace_term(const KtildeKernel& kern, double t) {
    check_horizon(t, kern.horizon(), "trace_term");
    return kern.trace();
}

double second_chaos_integral(const KtildeKernel& kern, const DriverPath& path, double t) {
    check_horizon(t, kern.horizon(), "second_chaos_integral");
    check_gaussian_path(path, "second_chaos_integral");
    const auto mat = kern.node_matrix(path.grid);
    const int m = mat->m;
    double acc = 0.0;
    const double* sym = mat->sym.data();
    for (int j = 1; j < m; ++j) {
        const double* row = sym + static_cast<std::size_t>(j) * (static_cast<std::size_t>(j) - 1) / 2;
        double rowsum = 0.0;
        for (int k = 0; k < j; ++k) rowsum += row[k] * path.gaussian[static_cast<std::size_t>(k)];
        acc += rowsum * path.gaussian[static_cast<std::size_t>(j)];
    }
    return acc + kern.trace();
}

double second_chaos_integral(const KtildeKernel& kern, const VmlvProcess& process,
                             const VmlvPath& path, double t) {
    check_standard_brownian(process.driver(), path, "second_chaos_integral");
    return second_chaos_integral(kern, path.driver_path, t);
}

double half_square_chaos(const KernelSpec& g, const DriverPath& path, double t) {
    check_gaussian_path(path, "half_square_chaos");
    const int m = path.grid.node_index(t);
    if (m < 1) throw std::invalid_argument("half_square_chaos: t must be a positive grid node");
    // strict lower triangle of the rank-one weight matrix via prefix sums
    double acc = 0.0;
    double prefix = 0.0;
    double prev = g.eval(t, path.grid.node(0)) * path.gaussian[0];
    for (int j = 1; j < m; ++j) {
        prefix += prev;
        const double wj = g.eval(t, path.grid.node(j)) * path.gaussian[static_cast<std::size_t>(j)];
        acc += wj * prefix;
        prev = wj;
    }
    return acc + 0.5 * l2_norm_sq(g, t);
}

double half_square_chaos(const VmlvProcess& process, const VmlvPath& path, double t) {
    check_standard_brownian(process.driver(), path, "half_square_chaos");
    return half_square_chaos(process.kernel(), path.driver_path, t);
}

}  // namespace volterra
