#pragma once

#include <atomic>
#include <cmath>
#include <iostream>

#include "pltf/errors.hpp"

namespace pltf {

/// Digamma (derivative of log Gamma) via the shift recurrence and the
/// asymptotic Bernoulli series, good to ~1e-13 for arguments >= 1e-8.
/// Smaller arguments are clamped to 1e-8; gamma-posterior shapes stay
/// above the prior shape, so a sane model never reaches the floor.
inline double digamma(double x) {
    static std::atomic<bool> warned{false};
    if (x < 1e-8) {
        if (!warned.exchange(true))
            std::cerr << "pltf: digamma argument " << x
                      << " clamped to 1e-8\n";
        x = 1e-8;
    }
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double t = 1.0 / (x * x);
    double series =
        t * (1.0 / 12 -
             t * (1.0 / 120 -
                  t * (1.0 / 252 -
                       t * (1.0 / 240 -
                            t * (1.0 / 132 -
                                 t * (691.0 / 32760 - t * (1.0 / 12)))))));
    return result + std::log(x) - 0.5 / x - series;
}

/// log Gamma for positive arguments.
inline double log_gamma(double x) { return std::lgamma(x); }

/// KL divergence between Gamma(shape c, scale d) and Gamma(shape a, scale b).
inline double gamma_kl(double c, double d, double a, double b) {
    return (c - a) * digamma(c) - log_gamma(c) + log_gamma(a) +
           a * std::log(b / d) + c * (d - b) / b;
}

} // namespace pltf
