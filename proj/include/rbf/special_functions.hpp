#pragma once

namespace rbf {

// Error function family evaluated with Cody-style rational Chebyshev
// approximations, accurate to roughly 1 ulp over the double range.
//
// erf_approx(x)   = 2/sqrt(pi) * Integral_0^x exp(-u^2) du
// erfc_approx(x)  = 1 - erf_approx(x)
// erfcx_approx(x) = exp(x^2) * erfc_approx(x), the scaled complement,
//                   which stays representable far into the right tail.
// log_erfc(x)     = log(erfc_approx(x)) without underflow for large x.
double erf_approx(double x);
double erfc_approx(double x);
double erfcx_approx(double x);
double log_erfc(double x);

}  // namespace rbf
