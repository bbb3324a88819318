#pragma once

#include <functional>

#include "volterra/kernels.hpp"

namespace volterra {

// Evaluation scheme for the kernel operator
//   K_g(h)(t,s) = h(s) g(t,s) + int_s^t (h(u) - h(s)) g(du, s).
// SingularSafe is that subtracted form (valid even when g(s,s) blows up);
// DiagonalForm rewrites it as h(s) g(s,s) + int_s^t h(u) g(du, s) when the
// diagonal is finite; AbsContinuousForm integrates against the density
// dg/du instead of the Stieltjes measure; ClosedForm covers the kernels
// where no quadrature is needed. Auto picks the natural scheme.
enum class KgScheme { Auto, SingularSafe, DiagonalForm, AbsContinuousForm, ClosedForm };

struct KgEvaluation {
    double value = 0.0;
    KgScheme scheme = KgScheme::SingularSafe;  // the scheme actually used
    double err_estimate = 0.0;
};

// Apply K_g to h at (t, s), 0 <= s < t. When the kernel diagonal is singular
// the operator needs h Lipschitz at s; unless `lipschitz_certified`, a probe
// of |h(s+d)-h(s)|/d at d in {1e-3, 1e-5} rejects integrands whose local
// slope grows toward s. `opts` tunes the quadrature budget (callers stacking
// many operator values inside an outer quadrature can afford looser
// per-point tolerances). Throws std::domain_error (s >= t, failed probe),
// SchemeUnavailableError (scheme cannot apply to this kernel), and
// propagates NonIntegrableError from quadrature.
KgEvaluation kg_apply(const KernelSpec& kernel, const std::function<double(double)>& h,
                      double t, double s, KgScheme scheme = KgScheme::Auto,
                      bool lipschitz_certified = false, const QuadOptions& opts = {});

// K_g for the exponential pair: integrand e^{-alpha (t-u)} against the
// kernel e^{-beta (t-s)}, as a function of tau = t - s:
//   alpha/(alpha-beta) e^{-alpha tau} - beta/(alpha-beta) e^{-beta tau},
// continued across beta == alpha by e^{-alpha tau}(1 - alpha tau).
double kg_exp_closed(double alpha, double beta, double tau);

// Shift-kernel reduction for shift-invariant kernels: evaluates
//   h(s) g(tau) + int_0^tau (h(s+u) - h(s)) g(du)
// with the measure anchored at the origin, equal to kg_apply(kernel, h,
// s+tau, s) by translation invariance. Throws NotShiftInvariantError.
double kg_shift(const KernelSpec& kernel, const std::function<double(double)>& h, double s,
                double tau);

// Residual of the resolvent identity
//   K_g(h_t)(t,s) + alpha int_s^t K_g(h_u)(u,s) du = g(t,s),
// where h_u(v) = e^{-alpha (u-v)} is re-anchored at the inner time. Computed
// by nested quadrature sharing one graded mesh between the inner Stieltjes
// sums and the outer integral; vanishes up to quadrature error whenever
// (1 - e^{-alpha (t-s)}) g(t,s) -> 0 as t -> s and the kernel section is
// square integrable.
double resolvent_residual(const KernelSpec& kernel, double alpha, double s, double t);

}  // namespace volterra
