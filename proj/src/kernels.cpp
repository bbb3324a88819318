#include "volterra/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "volterra/errors.hpp"

namespace volterra {

namespace {

// Cache for the fbm bracket kernel's inner integral. The kernel is not
// shift-invariant, so values are keyed on the full (H, t-s, s) triple; one
// cache per thread keeps evaluation lock-free.
struct FbmKey {
    std::uint64_t h_bits, tau_bits, s_bits;
    bool operator==(const FbmKey&) const = default;
};

struct FbmKeyHash {
    std::size_t operator()(const FbmKey& k) const noexcept {
        std::uint64_t x = 1469598103934665603ull;
        auto mix = [&](std::uint64_t v) {
            x ^= v;
            x *= 1099511628211ull;
        };
        mix(k.h_bits);
        mix(k.tau_bits);
        mix(k.s_bits);
        return static_cast<std::size_t>(x);
    }
};

thread_local std::unordered_map<FbmKey, double, FbmKeyHash> fbm_cache;
constexpr std::size_t kFbmCacheCap = 2'000'000;

// relative noise carried by eval() when it is itself quadrature-backed;
// outer integrals over eval() cannot resolve detail below this level
constexpr double kFbmEvalNoise = 1e-11;

double fbm_constant(double h) {
    return std::sqrt(2.0 * h * std::tgamma(1.5 - h) /
                     (std::tgamma(h + 0.5) * std::tgamma(2.0 - 2.0 * h)));
}

// index of the segment containing x in a strictly increasing grid, clamped
// to [0, size-2] so edge queries extrapolate as constants
std::size_t locate(const std::vector<double>& grid, double x) {
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::ptrdiff_t i = (it - grid.begin()) - 1;
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(grid.size()) - 2);
    return static_cast<std::size_t>(i);
}

double clamped_theta(const std::vector<double>& grid, std::size_t i, double x) {
    double th = (x - grid[i]) / (grid[i + 1] - grid[i]);
    return std::clamp(th, 0.0, 1.0);
}

}  // namespace

Eigen::MatrixXd expm_pade(const Eigen::MatrixXd& A) {
    static const double c[7] = {1.0,         1.0 / 2.0,     5.0 / 44.0,    1.0 / 66.0,
                                1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
    const Eigen::Index n = A.rows();
    double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = 1 + static_cast<int>(std::floor(std::log2(norm)));
    Eigen::MatrixXd As = A / std::ldexp(1.0, squarings);

    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd num = c[0] * power;
    Eigen::MatrixXd den = c[0] * power;
    double sign = 1.0;
    for (int k = 1; k <= 6; ++k) {
        power = (power * As).eval();
        sign = -sign;
        num += c[k] * power;
        den += sign * c[k] * power;
    }
    Eigen::MatrixXd f = den.partialPivLu().solve(num);
    for (int i = 0; i < squarings; ++i) f = (f * f).eval();
    return f;
}

KernelSpec KernelSpec::constant_one() {
    KernelSpec k;
    k.family_ = KernelFamily::ConstantOne;
    k.name_ = "constant_one";
    return k;
}

KernelSpec KernelSpec::exp_shift(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("exp_shift: alpha must be positive");
    KernelSpec k;
    k.family_ = KernelFamily::ExpShift;
    k.alpha_ = alpha;
    std::ostringstream os;
    os << "exp_shift(alpha=" << alpha << ")";
    k.name_ = os.str();
    return k;
}

KernelSpec KernelSpec::gamma_shift(double nu, double lambda) {
    if (!(nu > 0.5)) throw std::invalid_argument("gamma_shift: nu must exceed 1/2");
    if (!(lambda > 0.0)) throw std::invalid_argument("gamma_shift: lambda must be positive");
    KernelSpec k;
    k.family_ = KernelFamily::GammaShift;
    k.nu_ = nu;
    k.lambda_ = lambda;
    std::ostringstream os;
    os << "gamma_shift(nu=" << nu << ",lambda=" << lambda << ")";
    k.name_ = os.str();
    return k;
}

KernelSpec KernelSpec::carma_shift(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    if (A.rows() < 1 || A.rows() != A.cols())
        throw std::invalid_argument("carma_shift: A must be square and non-empty");
    if (b.size() != A.rows())
        throw std::invalid_argument("carma_shift: b must match the dimension of A");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (!(es.eigenvalues()[i].real() < 0.0))
            throw std::invalid_argument(
                "carma_shift: every eigenvalue of A must have negative real part");
    }
    KernelSpec k;
    k.family_ = KernelFamily::CarmaShift;
    k.A_ = A;
    k.b_ = b;
    std::ostringstream os;
    os << "carma_shift(p=" << A.rows() << ")";
    k.name_ = os.str();
    return k;
}

KernelSpec KernelSpec::fbm_bracket(double hurst) {
    if (!(hurst > 0.0) || !(hurst < 1.0))
        throw std::invalid_argument("fbm_bracket: H must lie in (0, 1)");
    KernelSpec k;
    k.family_ = KernelFamily::FbmBracket;
    k.hurst_ = hurst;
    k.c_h_ = fbm_constant(hurst);
    if (std::abs(hurst - 0.5) >= 1e-14) {
        // H-only constants of the rescaled inner integral (see eval_fbm_offset)
        double hm = hurst - 0.5;
        auto f01 = [&](double v) {
            return std::pow(v, hurst - 1.5) * (-std::expm1(hm * std::log1p(v)));
        };
        auto ftail = [&](double r) {
            return std::pow(r, -2.0 * hurst) * std::expm1(hm * std::log1p(r));
        };
        k.fbm_j0_1_ = substituted_gk(f01, 1.0, hm, 1e-16, 1e-13);
        k.fbm_r1_ = substituted_gk(ftail, 1.0, 1.0 - 2.0 * hurst, 1e-16, 1e-13);
    }
    std::ostringstream os;
    os << "fbm_bracket(H=" << hurst << ")";
    k.name_ = os.str();
    return k;
}

KernelSpec KernelSpec::tabulated(std::vector<double> t_grid, std::vector<double> s_grid,
                                 Eigen::MatrixXd values, bool allow_fd_deriv) {
    if (t_grid.size() < 2 || s_grid.size() < 2)
        throw std::invalid_argument("tabulated: grids need at least two nodes");
    if (values.rows() != static_cast<Eigen::Index>(t_grid.size()) ||
        values.cols() != static_cast<Eigen::Index>(s_grid.size()))
        throw std::invalid_argument("tabulated: value matrix must be (t nodes) x (s nodes)");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1]))
            throw std::invalid_argument("tabulated: t grid must increase strictly");
    for (std::size_t i = 1; i < s_grid.size(); ++i)
        if (!(s_grid[i] > s_grid[i - 1]))
            throw std::invalid_argument("tabulated: s grid must increase strictly");
    KernelSpec k;
    k.family_ = KernelFamily::Tabulated;
    k.t_grid_ = std::move(t_grid);
    k.s_grid_ = std::move(s_grid);
    k.values_ = std::move(values);
    k.allow_fd_deriv_ = allow_fd_deriv;
    std::ostringstream os;
    os << "tabulated(" << k.t_grid_.size() << "x" << k.s_grid_.size() << ")";
    k.name_ = os.str();
    return k;
}

bool KernelSpec::shift_invariant() const {
    switch (family_) {
        case KernelFamily::ConstantOne:
        case KernelFamily::ExpShift:
        case KernelFamily::GammaShift:
        case KernelFamily::CarmaShift:
            return true;
        case KernelFamily::FbmBracket:
        case KernelFamily::Tabulated:
            return false;
    }
    return false;
}

Diagonal KernelSpec::diagonal(double s) const {
    switch (family_) {
        case KernelFamily::ConstantOne:
            return {DiagonalKind::Finite, 1.0};
        case KernelFamily::ExpShift:
            return {DiagonalKind::Finite, 1.0};
        case KernelFamily::GammaShift:
            if (nu_ < 1.0) return {DiagonalKind::Singular, 0.0};
            if (nu_ == 1.0) return {DiagonalKind::Finite, 1.0};
            return {DiagonalKind::Zero, 0.0};
        case KernelFamily::CarmaShift: {
            double v = b_[b_.size() - 1];
            if (v == 0.0) return {DiagonalKind::Zero, 0.0};
            return {DiagonalKind::Finite, v};
        }
        case KernelFamily::FbmBracket:
            if (hurst_ < 0.5) return {DiagonalKind::Singular, 0.0};
            if (hurst_ == 0.5) return {DiagonalKind::Finite, 1.0};
            return {DiagonalKind::Zero, 0.0};
        case KernelFamily::Tabulated: {
            std::size_t i = locate(t_grid_, s);
            std::size_t j = locate(s_grid_, s);
            double tt = clamped_theta(t_grid_, i, s);
            double ts = clamped_theta(s_grid_, j, s);
            double v = (1 - tt) * (1 - ts) * values_(i, j) + (1 - tt) * ts * values_(i, j + 1) +
                       tt * (1 - ts) * values_(i + 1, j) + tt * ts * values_(i + 1, j + 1);
            return {DiagonalKind::Finite, v};
        }
    }
    return {DiagonalKind::Finite, 0.0};
}

double KernelSpec::eval_fbm_offset(double s, double tau) const {
    const double h = hurst_;
    if (std::abs(h - 0.5) < 1e-14) return 1.0;
    if (s <= 0.0)
        throw std::domain_error("fbm_bracket: kernel is unbounded at s = 0");

    FbmKey key{std::bit_cast<std::uint64_t>(h), std::bit_cast<std::uint64_t>(tau),
               std::bit_cast<std::uint64_t>(s)};
    if (auto it = fbm_cache.find(key); it != fbm_cache.end()) return it->second;

    // g(t,s) = c_H [ tau^{H-1/2} + (1/2-H) I ] with
    //   I = int_0^tau w^{H-3/2} (1 - (s/(s+w))^{1/2-H}) dw.
    // Rescaling v = w/s gives I = s^{H-1/2} J(tau/s) with an s-free profile
    //   J(x) = int_0^x v^{H-3/2} (1 - (1+v)^{H-1/2}) dv.
    // A single power substitution cannot tame both asymptotic regimes of J
    // when x is huge (s near 0), so for x > 1 the tail is reduced to closed
    // power-law terms plus two bounded smooth integrals via v -> 1/r:
    //   J(x) = J(1) + (x^{hm}-1)/hm - (1 - x^{2H-1})/(1-2H) - r1 + tail(1/x),
    //   r1 = int_0^1 r^{-2H}((1+r)^{hm}-1) dr,  tail(e) = same integrand on (0,e].
    // expm1/log1p keep the brackets at full relative precision where they
    // cancel (v << 1 resp. r << 1).
    const double hm = h - 0.5;
    const double x = tau / s;
    auto f01 = [&](double v) {
        return std::pow(v, h - 1.5) * (-std::expm1(hm * std::log1p(v)));
    };
    double j;
    if (x <= 1.0) {
        j = substituted_gk(f01, x, hm, 1e-16, 1e-13);
    } else {
        auto ftail = [&](double r) {
            return std::pow(r, -2.0 * h) * std::expm1(hm * std::log1p(r));
        };
        double closed_mid = (std::pow(x, hm) - 1.0) / hm;
        double closed_far = (1.0 - std::pow(x, 2.0 * h - 1.0)) / (1.0 - 2.0 * h);
        double tail = substituted_gk(ftail, 1.0 / x, 1.0 - 2.0 * h, 1e-18, 1e-13);
        j = fbm_j0_1_ + closed_mid - closed_far - fbm_r1_ + tail;
    }
    double inner = std::pow(s, hm) * j;
    double g = c_h_ * (std::pow(tau, hm) + (0.5 - h) * inner);

    if (fbm_cache.size() >= kFbmCacheCap) fbm_cache.clear();
    fbm_cache.emplace(key, g);
    return g;
}

double KernelSpec::eval(double t, double s) const {
    if (s < 0.0 || t < s) throw std::domain_error("kernel eval needs 0 <= s <= t");
    return eval_offset(s, t - s);
}

double KernelSpec::eval_offset(double s, double w) const {
    if (s < 0.0 || w < 0.0) throw std::domain_error("kernel eval needs 0 <= s, 0 <= w");
    if (w == 0.0) {
        Diagonal d = diagonal(s);
        if (d.kind == DiagonalKind::Singular)
            throw SingularDiagonalError(name_ + ": diagonal is singular");
        return d.value;
    }
    switch (family_) {
        case KernelFamily::ConstantOne:
            return 1.0;
        case KernelFamily::ExpShift:
            return std::exp(-alpha_ * w);
        case KernelFamily::GammaShift:
            return std::pow(w, nu_ - 1.0) * std::exp(-lambda_ * w);
        case KernelFamily::CarmaShift: {
            Eigen::MatrixXd e = expm_pade(A_ * w);
            return b_.dot(e.col(e.cols() - 1));
        }
        case KernelFamily::FbmBracket:
            return eval_fbm_offset(s, w);
        case KernelFamily::Tabulated: {
            const double t = s + w;
            std::size_t i = locate(t_grid_, t);
            std::size_t j = locate(s_grid_, s);
            double tt = clamped_theta(t_grid_, i, t);
            double ts = clamped_theta(s_grid_, j, s);
            return (1 - tt) * (1 - ts) * values_(i, j) + (1 - tt) * ts * values_(i, j + 1) +
                   tt * (1 - ts) * values_(i + 1, j) + tt * ts * values_(i + 1, j + 1);
        }
    }
    return 0.0;
}

double KernelSpec::deriv_t(double t, double s) const {
    if (s < 0.0 || t < s) throw std::domain_error("kernel deriv_t needs 0 <= s <= t");
    const double tau = t - s;
    switch (family_) {
        case KernelFamily::ConstantOne:
            return 0.0;
        case KernelFamily::ExpShift:
            return -alpha_ * std::exp(-alpha_ * tau);
        case KernelFamily::GammaShift:
            // d/dt [tau^{nu-1} e^{-lambda tau}]
            return std::pow(tau, nu_ - 2.0) * ((nu_ - 1.0) - lambda_ * tau) *
                   std::exp(-lambda_ * tau);
        case KernelFamily::CarmaShift: {
            Eigen::MatrixXd e = expm_pade(A_ * tau);
            return (A_.transpose() * b_).dot(e.col(e.cols() - 1));
        }
        case KernelFamily::FbmBracket: {
            const double h = hurst_;
            if (std::abs(h - 0.5) < 1e-14) return 0.0;
            if (s <= 0.0)
                throw std::domain_error("fbm_bracket: derivative is unbounded at s = 0");
            // the bracket collapses when differentiated in t, leaving a pure power law
            return c_h_ * (h - 0.5) * std::pow(tau, h - 1.5) * std::pow(s / t, 0.5 - h);
        }
        case KernelFamily::Tabulated: {
            if (!allow_fd_deriv_)
                throw SchemeUnavailableError(
                    "tabulated kernel has no derivative; construct with allow_fd_deriv to use "
                    "first differences");
            std::size_t i = locate(t_grid_, t);
            std::size_t j = locate(s_grid_, s);
            double ts = clamped_theta(s_grid_, j, s);
            double lo = (1 - ts) * values_(i, j) + ts * values_(i, j + 1);
            double hi = (1 - ts) * values_(i + 1, j) + ts * values_(i + 1, j + 1);
            return (hi - lo) / (t_grid_[i + 1] - t_grid_[i]);
        }
    }
    return 0.0;
}

double KernelSpec::stieltjes_density(double s, double w) const {
    switch (family_) {
        case KernelFamily::ConstantOne:
            return 0.0;
        case KernelFamily::ExpShift:
            return -alpha_ * std::exp(-alpha_ * w);
        case KernelFamily::GammaShift:
            if (nu_ == 1.0) return -lambda_ * std::exp(-lambda_ * w);
            return std::pow(w, nu_ - 2.0) * ((nu_ - 1.0) - lambda_ * w) * std::exp(-lambda_ * w);
        case KernelFamily::CarmaShift: {
            Eigen::MatrixXd e = expm_pade(A_ * w);
            return (A_.transpose() * b_).dot(e.col(e.cols() - 1));
        }
        case KernelFamily::FbmBracket: {
            const double h = hurst_;
            if (std::abs(h - 0.5) < 1e-14) return 0.0;
            // same power law as deriv_t, written without forming t = s + w
            // until after the singular factor
            return c_h_ * (h - 0.5) * std::pow(w, h - 1.5) * std::pow(s / (s + w), 0.5 - h);
        }
        case KernelFamily::Tabulated: {
            double u = s + w;
            std::size_t i = locate(t_grid_, u);
            if (u < t_grid_.front() || u > t_grid_.back()) return 0.0;  // clamped => constant
            std::size_t j = locate(s_grid_, s);
            double ts = clamped_theta(s_grid_, j, s);
            double lo = (1 - ts) * values_(i, j) + ts * values_(i, j + 1);
            double hi = (1 - ts) * values_(i + 1, j) + ts * values_(i + 1, j + 1);
            return (hi - lo) / (t_grid_[i + 1] - t_grid_[i]);
        }
    }
    return 0.0;
}

double KernelSpec::density_exponent() const {
    switch (family_) {
        case KernelFamily::ConstantOne:
            return 0.0;
        case KernelFamily::ExpShift:
            return 0.0;
        case KernelFamily::GammaShift:
            return nu_ == 1.0 ? 0.0 : nu_ - 2.0;
        case KernelFamily::CarmaShift:
            return 0.0;
        case KernelFamily::FbmBracket:
            return std::abs(hurst_ - 0.5) < 1e-14 ? 0.0 : hurst_ - 1.5;
        case KernelFamily::Tabulated:
            return 0.0;
    }
    return 0.0;
}

double KernelSpec::exp_rate() const {
    if (family_ != KernelFamily::ExpShift) throw std::logic_error("exp_rate: wrong family");
    return alpha_;
}

double KernelSpec::gamma_nu() const {
    if (family_ != KernelFamily::GammaShift) throw std::logic_error("gamma_nu: wrong family");
    return nu_;
}

double KernelSpec::gamma_lambda() const {
    if (family_ != KernelFamily::GammaShift) throw std::logic_error("gamma_lambda: wrong family");
    return lambda_;
}

double KernelSpec::hurst() const {
    if (family_ != KernelFamily::FbmBracket) throw std::logic_error("hurst: wrong family");
    return hurst_;
}

double KernelSpec::fbm_scale() const {
    if (family_ != KernelFamily::FbmBracket) throw std::logic_error("fbm_scale: wrong family");
    return c_h_;
}

const Eigen::MatrixXd& KernelSpec::carma_A() const {
    if (family_ != KernelFamily::CarmaShift) throw std::logic_error("carma_A: wrong family");
    return A_;
}

const Eigen::VectorXd& KernelSpec::carma_b() const {
    if (family_ != KernelFamily::CarmaShift) throw std::logic_error("carma_b: wrong family");
    return b_;
}

const std::vector<double>& KernelSpec::tab_t_grid() const {
    if (family_ != KernelFamily::Tabulated) throw std::logic_error("tab_t_grid: wrong family");
    return t_grid_;
}

const std::vector<double>& KernelSpec::tab_s_grid() const {
    if (family_ != KernelFamily::Tabulated) throw std::logic_error("tab_s_grid: wrong family");
    return s_grid_;
}

namespace {

// piecewise-linear-in-t measure of a tabulated kernel, integrated against f
// over (from, t] (from == s for the full operator domain)
double tabulated_stieltjes(const KernelSpec& k, const std::vector<double>& t_grid, double s,
                           double from, double t, const std::function<double(double)>& f) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
        double lo = std::max(from, t_grid[i]);
        double hi = std::min(t, t_grid[i + 1]);
        if (hi <= lo) continue;
        double mid = 0.5 * (t_grid[i] + t_grid[i + 1]);
        double slope = k.stieltjes_density(s, mid - s);
        if (slope == 0.0) continue;
        double err = 0.0;
        total += slope * gk15_panel(f, lo, hi, err);
    }
    return total;
}

}  // namespace

double stieltjes_integrate(const KernelSpec& kernel, double s, double t,
                           const std::function<double(double)>& f, const QuadOptions& opts) {
    if (s < 0.0 || t < s) throw std::domain_error("stieltjes_integrate needs 0 <= s <= t");
    const double L = t - s;
    if (L == 0.0) return 0.0;

    switch (kernel.family()) {
        case KernelFamily::ConstantOne:
            return 0.0;  // the measure vanishes
        case KernelFamily::FbmBracket:
            if (std::abs(kernel.hurst() - 0.5) < 1e-14) return 0.0;
            break;
        case KernelFamily::Tabulated:
            // piecewise-linear surface: the measure is a step density in t
            return tabulated_stieltjes(kernel, kernel.tab_t_grid(), s, s, t, f);
        default:
            break;
    }

    // Probe whether f cancels the density at the left endpoint: the operator
    // integrands all vanish at u = s, which buys one extra power of w.
    const double f0 = f(s);
    const double fm = f(s + 0.5 * L);
    const double f1 = f(t);
    double fscale = std::max({std::abs(f0), std::abs(fm), std::abs(f1)});
    if (fscale == 0.0) {
        fscale = std::max(std::abs(f(s + 0.25 * L)), std::abs(f(s + 0.75 * L)));
        if (fscale == 0.0) return 0.0;
    }
    const bool cancelled = std::abs(f0) <= 1e-9 * fscale;

    // Credit the rate at which f actually vanishes at s: Lipschitz integrands
    // gain a full power of the offset, kernel sections with a fractional
    // exponent (t - s)^q gain less, and grading for the wrong exponent makes
    // the refinement trend unreadable. Measured from two interior probes;
    // unusable measurements fall back to the Lipschitz credit.
    double gain = 0.0;
    if (cancelled) {
        const double fa = f(s + 1e-4 * L);
        const double fb = f(s + 1e-2 * L);
        gain = 1.0;
        if (fa != 0.0 && fb != 0.0 && (fa > 0.0) == (fb > 0.0) && std::abs(fb) > std::abs(fa))
            gain = std::min(1.0, std::log(std::abs(fb) / std::abs(fa)) / std::log(100.0));
    }

    const double a_raw = kernel.density_exponent();
    const double a_eff = a_raw + gain;
    const bool divergent_exponent = a_eff <= -1.0 + 1e-12;

    double p;
    if (divergent_exponent) {
        // moderate grading keeps the refinement trend finite so the
        // divergence check below can see it grow
        p = 12.0;
    } else {
        p = grading_exponent_for(a_eff);
        if (kernel.family() == KernelFamily::GammaShift && kernel.gamma_nu() < 1.0 && cancelled) {
            double nu = kernel.gamma_nu();
            p = std::max(p, std::max(2.0, 2.0 / (2.0 * nu - 1.0)));
        }
    }

    const double d0 = kernel.stieltjes_density(s, 0.0);
    double node0 = 0.0;
    if (!cancelled && std::isfinite(d0)) node0 = f0 * d0;

    auto integrand = [&](double w) { return f(s + w) * kernel.stieltjes_density(s, w); };
    GradedResult res = graded_refined(integrand, L, p, opts.n_nodes, node0,
                                      std::max(10.0 * opts.rel_tol, 1e-11));
    if (!res.converged) {
        std::ostringstream os;
        os << kernel.name() << ": integral of f against g(du, s) on (" << s << ", " << t
           << "] shows a divergence trend across refinement levels (" << res.levels[0] << ", "
           << res.levels[1] << ", " << res.levels[2] << ")";
        throw NonIntegrableError(os.str());
    }
    return res.value;
}

double stieltjes_integrate_from(const KernelSpec& kernel, double s, double from, double t,
                                const std::function<double(double)>& f, const QuadOptions& opts) {
    if (s < 0.0 || from < s || t < from)
        throw std::domain_error("stieltjes_integrate_from needs 0 <= s <= from <= t");
    if (from == s) return stieltjes_integrate(kernel, s, t, f, opts);
    if (t - from == 0.0) return 0.0;

    switch (kernel.family()) {
        case KernelFamily::ConstantOne:
            return 0.0;
        case KernelFamily::FbmBracket:
            if (std::abs(kernel.hurst() - 0.5) < 1e-14) return 0.0;
            break;
        case KernelFamily::Tabulated:
            return tabulated_stieltjes(kernel, kernel.tab_t_grid(), s, from, t, f);
        default:
            break;
    }

    // The density's singularity sits at u = s, strictly left of the domain,
    // so no grading is needed; the quadrature only has to track the possibly
    // steep but smooth decay away from the anchor.
    auto integrand = [&](double u) { return f(u) * kernel.stieltjes_density(s, u - s); };
    return adaptive_gk(integrand, from, t, opts.abs_tol, opts.rel_tol, 24, {},
                       std::max(10.0 * opts.rel_tol, 1e-11));
}

double l2_norm_sq(const KernelSpec& kernel, double t, const QuadOptions& opts) {
    if (!(t > 0.0)) throw std::domain_error("l2_norm_sq needs t > 0");
    switch (kernel.family()) {
        case KernelFamily::ConstantOne:
            return t;
        case KernelFamily::ExpShift: {
            double a = kernel.exp_rate();
            return (1.0 - std::exp(-2.0 * a * t)) / (2.0 * a);
        }
        case KernelFamily::GammaShift: {
            double nu = kernel.gamma_nu();
            double lam = kernel.gamma_lambda();
            auto F = [&](double w) { return std::pow(w, 2.0 * nu - 2.0) * std::exp(-2.0 * lam * w); };
            return substituted_gk(F, t, 2.0 * nu - 2.0, opts.abs_tol, opts.rel_tol);
        }
        case KernelFamily::CarmaShift: {
            auto F = [&](double w) {
                double v = kernel.eval(w, 0.0);
                return v * v;
            };
            return adaptive_gk(F, 0.0, t, opts.abs_tol, opts.rel_tol);
        }
        case KernelFamily::FbmBracket: {
            double h = kernel.hurst();
            if (std::abs(h - 0.5) < 1e-14) return t;
            // the integrand is itself quadrature-backed, so demanding less
            // than its own noise floor would stall the outer integrator
            double at = std::max(opts.abs_tol, 1e-12);
            double rt = std::max(opts.rel_tol, 1e-10);
            // blow-up s^{-2|H-1/2|} at s = 0 and (t-s)^{2H-1} at s = t:
            // split at t/2 and substitute at each end
            auto left = [&](double s) {
                double v = kernel.eval(t, s);
                return v * v;
            };
            auto right = [&](double w) {
                // guard the rounding t - w == t: near the diagonal the
                // kernel is c_H w^{H-1/2} to leading order
                double v = (t - w < t) ? kernel.eval(t, t - w)
                                       : kernel.fbm_scale() * std::pow(w, h - 0.5);
                return v * v;
            };
            double a_left = -2.0 * std::abs(h - 0.5);
            double a_right = std::min(2.0 * h - 1.0, 0.0);
            double i_left = substituted_gk(left, 0.5 * t, a_left, at, rt, {}, kFbmEvalNoise);
            // substituted_gk integrates over (0, L]; shift so the singular
            // end sits at the origin: right part covers s in [t/2, t)
            double i_right = substituted_gk(right, 0.5 * t, a_right, at, rt, {}, kFbmEvalNoise);
            return i_left + i_right;
        }
        case KernelFamily::Tabulated: {
            auto F = [&](double s) {
                double v = kernel.eval(t, s);
                return v * v;
            };
            return adaptive_gk(F, 0.0, t, opts.abs_tol, opts.rel_tol);
        }
    }
    return 0.0;
}

double cell_integral(const KernelSpec& kernel, double t, double u0, double u1,
                     const QuadOptions& opts) {
    if (!(u0 >= 0.0) || !(u1 > u0) || !(u1 <= t))
        throw std::domain_error("cell_integral needs 0 <= u0 < u1 <= t");
    switch (kernel.family()) {
        case KernelFamily::ConstantOne:
            return u1 - u0;
        case KernelFamily::ExpShift: {
            double a = kernel.exp_rate();
            return (std::exp(-a * (t - u1)) - std::exp(-a * (t - u0))) / a;
        }
        case KernelFamily::GammaShift: {
            double nu = kernel.gamma_nu();
            double lam = kernel.gamma_lambda();
            auto F = [&](double w) { return std::pow(w, nu - 1.0) * std::exp(-lam * w); };
            double w0 = t - u1;
            double w1 = t - u0;
            if (w0 <= 0.0) return substituted_gk(F, w1, nu - 1.0, opts.abs_tol, opts.rel_tol);
            if (nu >= 1.0 || w0 > 1e-3 * w1)
                return adaptive_gk(F, w0, w1, opts.abs_tol, opts.rel_tol);
            return substituted_gk(F, w1, nu - 1.0, opts.abs_tol, opts.rel_tol) -
                   substituted_gk(F, w0, nu - 1.0, opts.abs_tol, opts.rel_tol);
        }
        case KernelFamily::CarmaShift: {
            // int b' e^{A w} e_p dw has the exact antiderivative b' A^{-1} e^{A w} e_p
            const Eigen::MatrixXd& A = kernel.carma_A();
            Eigen::MatrixXd diff = expm_pade(A * (t - u0)) - expm_pade(A * (t - u1));
            Eigen::VectorXd last = diff.col(diff.cols() - 1);
            return kernel.carma_b().dot(A.partialPivLu().solve(last));
        }
        case KernelFamily::FbmBracket: {
            double h = kernel.hurst();
            if (std::abs(h - 0.5) < 1e-14) return u1 - u0;
            // see l2_norm_sq: keep the outer budget above the eval noise
            double at = std::max(opts.abs_tol, 1e-12);
            double rt = std::max(opts.rel_tol, 1e-10);
            bool left_singular = (u0 == 0.0);
            bool right_singular = (u1 == t);
            auto G = [&](double u) { return kernel.eval(t, u); };
            auto from_right = [&](double w) {
                return (t - w < t) ? kernel.eval(t, t - w)
                                   : kernel.fbm_scale() * std::pow(w, h - 0.5);
            };
            if (left_singular && right_singular) {
                double m = 0.5 * (u0 + u1);
                double a0 = -std::abs(h - 0.5);
                return substituted_gk(G, m, a0, at, rt, {}, kFbmEvalNoise) +
                       substituted_gk(from_right, t - m, h - 0.5, at, rt, {}, kFbmEvalNoise);
            }
            if (left_singular) {
                double a0 = -std::abs(h - 0.5);
                return substituted_gk(G, u1, a0, at, rt, {}, kFbmEvalNoise);
            }
            if (right_singular) {
                return substituted_gk(from_right, t - u0, h - 0.5, at, rt, {}, kFbmEvalNoise);
            }
            return adaptive_gk(G, u0, u1, at, rt, 24, {}, kFbmEvalNoise);
        }
        case KernelFamily::Tabulated: {
            auto G = [&](double u) { return kernel.eval(t, u); };
            return adaptive_gk(G, u0, u1, opts.abs_tol, opts.rel_tol);
        }
    }
    return 0.0;
}

}  // namespace volterra
