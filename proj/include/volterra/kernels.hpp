#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "volterra/quadrature.hpp"

namespace volterra {

// Behaviour of the kernel on the diagonal t == s.
enum class DiagonalKind { Finite, Zero, Singular };

struct Diagonal {
    DiagonalKind kind = DiagonalKind::Finite;
    double value = 0.0;  // meaningful for Finite; 0 for Zero; unused for Singular
};

enum class KernelFamily { ConstantOne, ExpShift, GammaShift, CarmaShift, FbmBracket, Tabulated };

struct QuadOptions {
    int n_nodes = 4096;     // base refinement of the graded trapezoid rule
    double abs_tol = 1e-13;
    double rel_tol = 1e-12;
};

// A Volterra kernel g(t, s) on 0 <= s <= t together with the structural
// information the integrators need: its diagonal behaviour, the density of
// the measure g(du, s), and the small-offset exponent of that density.
//
// All evaluation entry points are const and safe to call concurrently.
class KernelSpec {
public:
    static KernelSpec constant_one();
    static KernelSpec exp_shift(double alpha);
    static KernelSpec gamma_shift(double nu, double lambda);
    // g(t, s) = b' exp(A (t-s)) e_p; every eigenvalue of A must have a
    // negative real part (checked at construction).
    static KernelSpec carma_shift(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);
    static KernelSpec fbm_bracket(double hurst);
    // Bilinear interpolation of `values` (rows indexed by t_grid, columns by
    // s_grid); evaluation clamps to the table edges. deriv_t is available
    // only when allow_fd_deriv is set (first differences in t).
    static KernelSpec tabulated(std::vector<double> t_grid, std::vector<double> s_grid,
                                Eigen::MatrixXd values, bool allow_fd_deriv = false);

    KernelFamily family() const { return family_; }
    const std::string& name() const { return name_; }
    bool shift_invariant() const;
    Diagonal diagonal(double s = 0.0) const;

    // Kernel value; throws std::domain_error off the admissible set
    // (s < 0 or t < s), and SingularDiagonalError at t == s when the
    // diagonal blows up.
    double eval(double t, double s) const;

    // g(s + w, s) with the offset supplied directly. Required near the
    // diagonal, where reconstructing w as (s + w) - s underflows on graded
    // quadrature meshes. w == 0 follows the diagonal rules of eval.
    double eval_offset(double s, double w) const;

    // Partial derivative in the first argument. Throws SchemeUnavailableError
    // for tabulated kernels constructed without the finite-difference flag.
    double deriv_t(double t, double s) const;

    // Density of the measure g(du, s) with respect to du, written in offset
    // coordinates: stieltjes_density(s, w) = (d/du) g(u, s) at u = s + w.
    // The offset form matters: callers must never reconstruct u - s by
    // subtraction, which underflows for graded meshes near the diagonal.
    // At w == 0 returns the one-sided limit (+-inf when the density blows up).
    double stieltjes_density(double s, double w) const;

    // Exponent a such that stieltjes_density(s, w) ~ C w^a as w -> 0+.
    double density_exponent() const;

    // Family parameter accessors (checked against the actual family).
    double exp_rate() const;      // ExpShift alpha
    double gamma_nu() const;      // GammaShift nu
    double gamma_lambda() const;  // GammaShift lambda
    double hurst() const;         // FbmBracket H
    double fbm_scale() const;     // FbmBracket normalisation constant
    const Eigen::MatrixXd& carma_A() const;
    const Eigen::VectorXd& carma_b() const;
    const std::vector<double>& tab_t_grid() const;
    const std::vector<double>& tab_s_grid() const;

private:
    KernelSpec() = default;

    double eval_fbm_offset(double s, double tau) const;

    KernelFamily family_ = KernelFamily::ConstantOne;
    std::string name_ = "constant_one";

    // scalar parameters (meaning depends on family)
    double alpha_ = 0.0;   // ExpShift
    double nu_ = 0.0;      // GammaShift
    double lambda_ = 0.0;  // GammaShift
    double hurst_ = 0.0;   // FbmBracket
    double c_h_ = 0.0;     // FbmBracket normalisation
    double fbm_j0_1_ = 0.0;  // FbmBracket: int_0^1 v^{H-3/2}(1-(1+v)^{H-1/2}) dv
    double fbm_r1_ = 0.0;    // FbmBracket: int_0^1 r^{-2H}((1+r)^{H-1/2}-1) dr

    Eigen::MatrixXd A_;  // CarmaShift
    Eigen::VectorXd b_;  // CarmaShift

    std::vector<double> t_grid_, s_grid_;  // Tabulated
    Eigen::MatrixXd values_;               // Tabulated
    bool allow_fd_deriv_ = false;
};

// Integral of f against the measure g(du, s) over (s, t]:
//     I = f(s) g(s, s) contribution handled by the caller's form;
// this routine computes  int_s^t f(u) g(du, s)  with the singularity-graded
// extrapolated trapezoid rule, probing whether f cancels the density at the
// left endpoint to pick the grading exponent. Throws NonIntegrableError when
// refinement shows a divergence trend (e.g. f(s) != 0 against a gamma-family
// density with nu < 1).
double stieltjes_integrate(const KernelSpec& kernel, double s, double t,
                           const std::function<double(double)>& f,
                           const QuadOptions& opts = {});

// Partial Stieltjes integral  int_from^t f(u) g(du, s)  with the measure
// anchored at s but the domain starting at from >= s. With from == s this is
// stieltjes_integrate; with from > s the diagonal singularity of the measure
// lies outside the domain and plain adaptive quadrature of the density
// applies. Intended for from - s at grid-cell scale or larger: u - s is
// reconstructed by subtraction, which loses relative precision as from -> s.
double stieltjes_integrate_from(const KernelSpec& kernel, double s, double from, double t,
                                const std::function<double(double)>& f,
                                const QuadOptions& opts = {});

// Squared L2 norm  int_0^t g(t, s)^2 ds, by singularity-aware quadrature
// (closed forms for the constant and exponential families).
double l2_norm_sq(const KernelSpec& kernel, double t, const QuadOptions& opts = {});

// Integral of g(t, u) du over one cell [u0, u1] with 0 <= u0 < u1 <= t.
// Handles endpoint singularities (first cell of the fbm bracket kernel, and
// diagonal cells where u1 == t) by power substitution.
double cell_integral(const KernelSpec& kernel, double t, double u0, double u1,
                     const QuadOptions& opts = {});

// Matrix exponential by Pade(6,6) with scaling and squaring.
Eigen::MatrixXd expm_pade(const Eigen::MatrixXd& A);

}  // namespace volterra
