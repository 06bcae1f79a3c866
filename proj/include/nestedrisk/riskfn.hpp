#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "nestedrisk/math.hpp"

namespace nestedrisk {

enum class RiskKind { Indicator, HockeyStick, Quadratic };

inline const char* risk_kind_name(RiskKind k) {
    switch (k) {
        case RiskKind::Indicator: return "indicator";
        case RiskKind::HockeyStick: return "hockey_stick";
        case RiskKind::Quadratic: return "quadratic";
    }
    return "?";
}

// Risk transform g applied to the loss; all kinds are the canonical
// zero-threshold forms shifted by x0, with the "x >= x0" branch closed.
struct RiskFunction {
    RiskKind kind = RiskKind::Indicator;
    double threshold = 0.0;  // x0, in loss units

    double eval(double x) const {
        const double y = x - threshold;
        switch (kind) {
            case RiskKind::Indicator: return y >= 0.0 ? 1.0 : 0.0;
            case RiskKind::HockeyStick: return y >= 0.0 ? y : 0.0;
            case RiskKind::Quadratic: return y * y;
        }
        return 0.0;
    }

    // Defined for the hockey-stick and quadratic kinds only; the indicator
    // has no usable derivative and its variance machinery goes through the
    // smooth approximation instead.
    double deriv(double x) const {
        const double y = x - threshold;
        switch (kind) {
            case RiskKind::HockeyStick: return y >= 0.0 ? 1.0 : 0.0;
            case RiskKind::Quadratic: return 2.0 * y;
            case RiskKind::Indicator:
                throw std::logic_error("RiskFunction::deriv called on indicator kind");
        }
        return 0.0;
    }
};

// Twice-differentiable ramp approximation of the indicator with bandwidth
// epsilon: 0 below x0 - 2*pi*eps, 1 above x0 + 2*pi*eps, and
// (1/4pi)[u - sin u] + 1/2 with u = (x - x0)/eps in between.
struct SmoothIndicator {
    double epsilon = 1.0;
    double threshold = 0.0;

    SmoothIndicator(double eps, double x0) : epsilon(eps), threshold(x0) {
        if (!(eps > 0.0)) throw std::invalid_argument("SmoothIndicator: epsilon must be > 0");
    }

    double eval(double x) const {
        const double u = (x - threshold) / epsilon;
        if (u >= 2.0 * kPi) return 1.0;
        if (u <= -2.0 * kPi) return 0.0;
        return (u - std::sin(u)) / (4.0 * kPi) + 0.5;
    }

    double deriv(double x) const {
        const double u = (x - threshold) / epsilon;
        if (std::abs(u) > 2.0 * kPi) return 0.0;
        return (1.0 - std::cos(u)) / (4.0 * kPi * epsilon);
    }

    double second(double x) const {
        const double u = (x - threshold) / epsilon;
        if (std::abs(u) > 2.0 * kPi) return 0.0;
        return std::sin(u) / (4.0 * kPi * epsilon * epsilon);
    }
};

}  // namespace nestedrisk
