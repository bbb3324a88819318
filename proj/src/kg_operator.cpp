#include "volterra/kg_operator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "volterra/errors.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

namespace {

// |h(s+d) - h(s)|/d must not grow as d shrinks; a growing quotient signals a
// sub-Lipschitz integrand, which the subtracted form cannot tame against a
// singular kernel measure.
void lipschitz_probe(const std::function<double(double)>& h, double s, double t) {
    const double hs = h(s);
    const double d1 = std::min(1e-3, 0.5 * (t - s));
    const double d2 = 1e-2 * d1;
    const double q1 = std::abs(h(s + d1) - hs) / d1;
    const double q2 = std::abs(h(s + d2) - hs) / d2;
    if (q2 > 2.0 * q1 + 1e-8 * (1.0 + std::abs(hs)))
        throw std::domain_error(
            "kg_apply: integrand slope grows toward s; a singular-diagonal kernel needs h "
            "Lipschitz at s");
}

}  // namespace

KgEvaluation kg_apply(const KernelSpec& kernel, const std::function<double(double)>& h, double t,
                      double s, KgScheme scheme, bool lipschitz_certified,
                      const QuadOptions& opts) {
    if (!(s >= 0.0) || !(s < t)) throw std::domain_error("kg_apply: requires 0 <= s < t");

    const Diagonal diag = kernel.diagonal(s);
    if (scheme == KgScheme::Auto) {
        if (kernel.family() == KernelFamily::ConstantOne)
            scheme = KgScheme::ClosedForm;
        else if (diag.kind == DiagonalKind::Singular)
            scheme = KgScheme::SingularSafe;
        else
            scheme = KgScheme::DiagonalForm;
    }
    if (diag.kind == DiagonalKind::Singular && !lipschitz_certified) lipschitz_probe(h, s, t);

    KgEvaluation out;
    out.scheme = scheme;
    switch (scheme) {
        case KgScheme::ClosedForm: {
            if (kernel.family() != KernelFamily::ConstantOne)
                throw SchemeUnavailableError(
                    "kg_apply: closed form exists only for the constant kernel");
            out.value = h(s);  // zero measure: K_g(h)(t,s) = h(s) g(t,s) = h(s)
            out.err_estimate = 0.0;
            return out;
        }
        case KgScheme::SingularSafe: {
            const double hs = h(s);
            const double tail =
                stieltjes_integrate(kernel, s, t, [&](double u) { return h(u) - hs; }, opts);
            out.value = hs * kernel.eval(t, s) + tail;
            break;
        }
        case KgScheme::DiagonalForm: {
            if (diag.kind == DiagonalKind::Singular)
                throw SchemeUnavailableError(
                    "kg_apply: diagonal form needs a finite kernel diagonal");
            const double tail = stieltjes_integrate(kernel, s, t, h, opts);
            out.value = h(s) * diag.value + tail;
            break;
        }
        case KgScheme::AbsContinuousForm: {
            if (kernel.family() == KernelFamily::Tabulated)
                throw SchemeUnavailableError(
                    "kg_apply: tabulated kernels have no continuous density in u");
            const double hs = h(s);
            // (h - h(s)) lifts the density exponent by one near the diagonal
            const double a = kernel.density_exponent() + 1.0;
            const double tail = substituted_gk(
                [&](double w) { return (h(s + w) - hs) * kernel.stieltjes_density(s, w); },
                t - s, a, opts.abs_tol, std::max(10.0 * opts.rel_tol, 1e-11));
            out.value = hs * kernel.eval(t, s) + tail;
            break;
        }
        case KgScheme::Auto:
            throw std::logic_error("unreachable");
    }
    out.err_estimate = 1e-10 * (1.0 + std::abs(out.value));
    return out;
}

double kg_exp_closed(double alpha, double beta, double tau) {
    // continuous continuation across the equal-rate line
    if (std::abs(alpha - beta) <= 1e-7 * std::max({alpha, beta, 1.0}))
        return std::exp(-alpha * tau) * (1.0 - alpha * tau);
    return (alpha * std::exp(-alpha * tau) - beta * std::exp(-beta * tau)) / (alpha - beta);
}

double kg_shift(const KernelSpec& kernel, const std::function<double(double)>& h, double s,
                double tau) {
    if (!kernel.shift_invariant())
        throw NotShiftInvariantError("kg_shift: kernel is not shift invariant");
    if (!(s >= 0.0) || !(tau > 0.0)) throw std::domain_error("kg_shift: requires s >= 0, tau > 0");
    const double hs = h(s);
    const double tail =
        stieltjes_integrate(kernel, 0.0, tau, [&](double u) { return h(s + u) - hs; });
    return hs * kernel.eval_offset(0.0, tau) + tail;
}

double resolvent_residual(const KernelSpec& kernel, double alpha, double s, double t) {
    if (!(s >= 0.0) || !(s < t)) throw std::domain_error("resolvent_residual: requires 0 <= s < t");

    const double L = t - s;
    const Diagonal diag = kernel.diagonal(s);
    const bool singular = diag.kind == DiagonalKind::Singular;
    // leading exponent of g(s+w, s) as w -> 0
    const double a_g =
        diag.kind == DiagonalKind::Finite ? 0.0 : kernel.density_exponent() + 1.0;
    const double p = grading_exponent_for(std::min(a_g, 1.0));

    // With h_u(v) = e^{-alpha (u-v)}, linearity gives
    //   K_g(h_u)(u,s) = e^{-alpha w} Ehat(w),  w = u - s,
    //   Ehat(w) = g(s+w, s) + int_0^w expm1(alpha x) g(dx, s),
    // so one cumulative pass over the mesh yields the inner operator at every
    // outer node, and the outer trapezoid reuses the very same mesh.
    auto level_value = [&](int N) {
        std::vector<double> w(static_cast<std::size_t>(N) + 1), G(w.size()), F(w.size());
        for (int i = 0; i <= N; ++i)
            w[static_cast<std::size_t>(i)] =
                L * std::pow(static_cast<double>(i) / N, p);
        G[0] = singular ? 0.0 : diag.value;  // placeholder for the singular case
        for (int i = 1; i <= N; ++i)
            G[static_cast<std::size_t>(i)] = kernel.eval_offset(s, w[static_cast<std::size_t>(i)]);

        double acc = 0.0;  // cumulative Stieltjes integral int_0^{w_i} expm1(alpha x) dG
        F[0] = singular ? 0.0 : G[0];
        for (int i = 1; i <= N; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            double cell;
            if (i == 1 && singular) {
                // power model g ~ C w^{a_g} on the first (microscopic) cell:
                // int_0^{w1} expm1(ax) dG ~ expm1(a w1) G1 a_g/(1 + a_g)
                cell = std::expm1(alpha * w[1]) * G[1] * a_g / (1.0 + a_g);
            } else {
                const double mid = 0.5 * (w[k - 1] + w[k]);
                cell = std::expm1(alpha * mid) * (G[k] - G[k - 1]);
            }
            acc += cell;
            F[k] = std::exp(-alpha * w[k]) * (G[k] + acc);
        }

        double outer;
        if (singular) {
            // first cell by the same power model; the grading makes it tiny
            outer = F[1] * w[1] / (1.0 + a_g);
        } else {
            outer = 0.5 * (F[0] + F[1]) * w[1];
        }
        for (int i = 1; i < N; ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            outer += 0.5 * (F[k] + F[k + 1]) * (w[k + 1] - w[k]);
        }
        return F[static_cast<std::size_t>(N)] + alpha * outer;
    };

    const double v1 = level_value(256);
    const double v2 = level_value(512);
    const double v3 = level_value(1024);
    // two Richardson stages: clear the O(N^-2) term, then the next order
    const double r1 = v2 + (v2 - v1) / 3.0;
    const double r2 = v3 + (v3 - v2) / 3.0;
    const double v_ext = r2 + (r2 - r1) / 15.0;
    return std::abs(v_ext - kernel.eval_offset(s, L));
}

}  // namespace volterra
