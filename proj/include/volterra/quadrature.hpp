#pragma once

#include <array>
#include <functional>
#include <vector>

namespace volterra {

struct QuadratureResult {
    double value = 0.0;
    double err_estimate = 0.0;
};

// Result of a graded-trapezoid integral evaluated at three nested refinements
// (N/2, N, 2N nodes). `value` is the Richardson extrapolation of the two
// finest levels; `converged` is false when the refinement differences fail to
// shrink, the signature of a divergent integrand.
struct GradedResult {
    double value = 0.0;
    double err_estimate = 0.0;
    std::array<double, 3> levels{};  // raw trapezoid values at N/2, N, 2N
    bool converged = true;
};

// Trapezoid rule on the graded mesh w_k = (k/N)^p * L for an integrand given
// in offset space F(w), w in (0, L]. The integrand is never evaluated at
// w = 0; `node0` supplies the limit value there (0 for integrands that vanish
// or blow up integrably at the left endpoint).
double graded_trapezoid(const std::function<double(double)>& F, double L, double p, int N,
                        double node0);

// `noise_rel`: refinement differences at or below noise_rel * |level| count as
// converged even without contraction — on strongly graded meshes a smooth
// integrand reaches the rounding floor before the 4x trend can show.
GradedResult graded_refined(const std::function<double(double)>& F, double L, double p, int N,
                            double node0, double noise_rel = 0.0);

// Adaptive Gauss-Kronrod 7-15 on [a, b]. `breaks` seeds the initial panel
// boundaries (useful for sharply peaked integrands); endpoints are never
// evaluated (all nodes are interior). `noise_rel` is the integrand's own
// relative noise level (nonzero when f is produced by another quadrature):
// a panel whose error estimate has reached noise_rel times its L1 mass
// cannot improve by splitting and is accepted.
double adaptive_gk(const std::function<double(double)>& f, double a, double b, double abs_tol,
                   double rel_tol, int max_depth = 24, const std::vector<double>& breaks = {},
                   double noise_rel = 0.0);

// Single 15-point Gauss-Kronrod panel; returns the Kronrod value and stores
// |Kronrod - Gauss| in err.
double gk15_panel(const std::function<double(double)>& f, double a, double b, double& err);

// Integrate F(w) dw over (0, L] where F ~ C * w^a near 0 (a > -1), by the
// power substitution w = y^q followed by adaptive Gauss-Kronrod in y.
// `breaks_w` seeds panel boundaries, given in offset coordinates; `noise_rel`
// as for adaptive_gk.
double substituted_gk(const std::function<double(double)>& F, double L, double a_exponent,
                      double abs_tol, double rel_tol, const std::vector<double>& breaks_w = {},
                      double noise_rel = 0.0);

// Grading exponent that makes the transformed integrand smooth enough for the
// extrapolated trapezoid rule at the stated tolerances.
double grading_exponent_for(double a_exponent);

}  // namespace volterra
