#pragma once

#include <cmath>
#include <optional>

#include "boostgp/errors.hpp"

namespace boostgp {

enum class LengthScalePrior { uniform, gamma };

/// Prior and proposal constants. Defaults follow the recommended vague
/// settings: Be(1,1) on the extra-zero proportion, Ga(0.001, 0.001) on the
/// dispersions, Be(0.1, 1.9) on the spatial proportion (5% a priori),
/// IG(3, 1) on the variance scale, h = 10 on the coefficient prior.
struct Hyperparameters {
    double a_pi = 1.0;
    double b_pi = 1.0;
    double a_phi = 0.001;
    double b_phi = 0.001;
    double a_omega = 0.1;
    double b_omega = 1.9;
    double a_sigma = 3.0;
    double b_sigma = 1.0;
    double h = 10.0;

    /// Random-walk step sizes. tau_lambda unset means scale-aware per-gene
    /// steps (0.1 times the sd of y/s, floored at 0.1); tau_l unset means
    /// 0.1 times the log width of the length-scale support.
    double tau_phi = 1.0;
    std::optional<double> tau_lambda;
    std::optional<double> tau_l;

    /// When on (default), requires a_omega + b_omega = 2.
    bool enforce_vague_omega = true;

    /// Length-scale prior: uniform on [t_min/2, 2*t_max] (default) or an
    /// untruncated Ga(shape, rate) on l.
    LengthScalePrior l_prior = LengthScalePrior::uniform;
    double l_gamma_shape = 0.001;
    double l_gamma_rate = 0.001;

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw validation_error(std::string("hyperparameter ") + name +
                                       " must be a positive finite real");
        };
        pos(a_pi, "a_pi");
        pos(b_pi, "b_pi");
        pos(a_phi, "a_phi");
        pos(b_phi, "b_phi");
        pos(a_omega, "a_omega");
        pos(b_omega, "b_omega");
        pos(a_sigma, "a_sigma");
        pos(b_sigma, "b_sigma");
        pos(h, "h");
        pos(tau_phi, "tau_phi");
        if (tau_lambda) pos(*tau_lambda, "tau_lambda");
        if (tau_l) pos(*tau_l, "tau_l");
        pos(l_gamma_shape, "l_gamma_shape");
        pos(l_gamma_rate, "l_gamma_rate");
        if (enforce_vague_omega && std::abs(a_omega + b_omega - 2.0) > 1e-12)
            throw validation_error("vague prior constraint requires a_omega + b_omega = 2 "
                                   "(disable enforce_vague_omega to override)");
    }
};

} // namespace boostgp
