#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestedrisk/riskfn.hpp"
#include "nestedrisk/rng.hpp"

namespace nestedrisk {

// Fully enumerable nested-estimation problem on finite supports: every
// quantity the continuous engine estimates has an exact counterpart here, so
// estimator behaviour can be checked against closed values.
struct DiscreteNestedProblem {
    std::vector<double> x_prob;                 // outer state probabilities
    std::vector<double> sampling_pmf;           // pooled sampling law f_tilde(y)
    std::vector<std::vector<double>> cond_pmf;  // f(y|x), indexed [x][y]
    std::vector<std::vector<double>> h_table;   // H(x, y)

    std::size_t x_states() const { return x_prob.size(); }
    std::size_t y_states() const { return sampling_pmf.size(); }

    void validate() const {
        if (x_prob.empty() || sampling_pmf.empty()) {
            throw std::invalid_argument("discrete: empty support");
        }
        auto check_pmf = [](const std::vector<double>& p, const std::string& name) {
            double total = 0.0;
            for (double v : p) {
                if (v < 0.0) throw std::invalid_argument("discrete: negative probability in " + name);
                total += v;
            }
            if (std::abs(total - 1.0) > 1e-12) {
                throw std::invalid_argument("discrete: " + name + " must sum to 1");
            }
        };
        check_pmf(x_prob, "x_prob");
        check_pmf(sampling_pmf, "sampling_pmf");
        if (cond_pmf.size() != x_states() || h_table.size() != x_states()) {
            throw std::invalid_argument("discrete: table row counts must match x support");
        }
        for (std::size_t x = 0; x < x_states(); ++x) {
            if (cond_pmf[x].size() != y_states() || h_table[x].size() != y_states()) {
                throw std::invalid_argument("discrete: table column counts must match y support");
            }
            check_pmf(cond_pmf[x], "cond_pmf[" + std::to_string(x) + "]");
            for (std::size_t y = 0; y < y_states(); ++y) {
                if (sampling_pmf[y] == 0.0 && h_table[x][y] * cond_pmf[x][y] != 0.0) {
                    throw std::invalid_argument(
                        "discrete: sampling_pmf vanishes where H*f does not (absolute continuity)");
                }
            }
        }
    }

    double likelihood_ratio(std::size_t x, std::size_t y) const {
        return cond_pmf[x][y] / sampling_pmf[y];
    }

    double exact_loss(std::size_t x) const {
        double v = 0.0;
        for (std::size_t y = 0; y < y_states(); ++y) v += cond_pmf[x][y] * h_table[x][y];
        return v;
    }

    // Default 2x3 instance with L(x0) < 2 < L(x1); the second row's weighted
    // outputs equal the first row's shifted by 3, which keeps the inner
    // variance identical across states.
    static DiscreteNestedProblem default_instance() {
        DiscreteNestedProblem p;
        p.x_prob = {0.5, 0.5};
        p.sampling_pmf = {0.3, 0.4, 0.3};
        p.cond_pmf = {{0.36, 0.4, 0.24}, {0.24, 0.4, 0.36}};
        p.h_table = {{0.0, 2.0, 4.0}, {3.75, 5.0, 31.0 / 6.0}};
        p.validate();
        return p;
    }

    // Instance with a wide weighted-output spread in the second state, which
    // makes the O(1/m) estimator bias large enough to measure directly.
    static DiscreteNestedProblem high_inner_variance_instance() {
        DiscreteNestedProblem p;
        p.x_prob = {0.6, 0.4};
        p.sampling_pmf = {0.3, 0.4, 0.3};
        p.cond_pmf = {{0.4, 0.4, 0.2}, {0.2, 0.3, 0.5}};
        p.h_table = {{1.0, 2.0, 3.0}, {2.0, 3.0, 5.0}};
        p.validate();
        return p;
    }
};

inline double exact_rho(const DiscreteNestedProblem& p, const RiskFunction& g) {
    double v = 0.0;
    for (std::size_t x = 0; x < p.x_states(); ++x) v += p.x_prob[x] * g.eval(p.exact_loss(x));
    return v;
}

// Exact bias constant of the pooled estimator under the quadratic risk
// function: Bias = (1/m) * sum_x P(x) Var[H LR | x].
inline double quadratic_bias_constant(const DiscreteNestedProblem& p) {
    double c = 0.0;
    for (std::size_t x = 0; x < p.x_states(); ++x) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t y = 0; y < p.y_states(); ++y) {
            const double hw = p.h_table[x][y] * p.likelihood_ratio(x, y);
            mean += p.sampling_pmf[y] * hw;
            sq += p.sampling_pmf[y] * hw * hw;
        }
        c += p.x_prob[x] * (sq - mean * mean);
    }
    return c;
}

namespace detail {

// Multinomial counts by sequential binomial splitting; O(#states) per draw.
inline std::vector<std::size_t> multinomial_counts(std::size_t total,
                                                   const std::vector<double>& pmf,
                                                   rng::Sequence& seq) {
    std::vector<std::size_t> counts(pmf.size(), 0);
    double remaining = 1.0;
    std::size_t left = total;
    for (std::size_t k = 0; k + 1 < pmf.size() && left > 0; ++k) {
        const double q = std::min(1.0, std::max(0.0, pmf[k] / remaining));
        std::binomial_distribution<long long> binom(static_cast<long long>(left), q);
        const auto c = static_cast<std::size_t>(binom(seq));
        counts[k] = c;
        left -= c;
        remaining -= pmf[k];
        if (remaining <= 0.0) break;
    }
    counts.back() += left;
    return counts;
}

}  // namespace detail

enum class NestedEstimatorChoice { Gns, Sns };

// Runs the chosen estimator on the discrete problem with categorical
// sampling. For the pooled estimator m is the shared inner sample size; for
// the standard one it is the per-scenario inner count m'.
inline double sample_problem(const DiscreteNestedProblem& p, NestedEstimatorChoice choice,
                             const RiskFunction& g, std::size_t n, std::size_t m,
                             rng::Sequence& seq) {
    if (n < 1 || m < 1) throw std::invalid_argument("sample_problem: n, m must be >= 1");
    if (choice == NestedEstimatorChoice::Gns) {
        const auto ycnt = detail::multinomial_counts(m, p.sampling_pmf, seq);
        const auto xcnt = detail::multinomial_counts(n, p.x_prob, seq);
        double acc = 0.0;
        for (std::size_t x = 0; x < p.x_states(); ++x) {
            if (xcnt[x] == 0) continue;
            double lm = 0.0;
            for (std::size_t y = 0; y < p.y_states(); ++y) {
                lm += static_cast<double>(ycnt[y]) * p.likelihood_ratio(x, y) * p.h_table[x][y];
            }
            lm /= static_cast<double>(m);
            acc += static_cast<double>(xcnt[x]) * g.eval(lm);
        }
        return acc / static_cast<double>(n);
    }
    const auto xcnt = detail::multinomial_counts(n, p.x_prob, seq);
    double acc = 0.0;
    for (std::size_t x = 0; x < p.x_states(); ++x) {
        for (std::size_t rep = 0; rep < xcnt[x]; ++rep) {
            const auto ycnt = detail::multinomial_counts(m, p.cond_pmf[x], seq);
            double lm = 0.0;
            for (std::size_t y = 0; y < p.y_states(); ++y) {
                lm += static_cast<double>(ycnt[y]) * p.h_table[x][y];
            }
            acc += g.eval(lm / static_cast<double>(m));
        }
    }
    return acc / static_cast<double>(n);
}

// Pooled-estimator value with the outer average replaced by its exact
// expectation over states; isolates the inner-sampling bias so the O(1/m)
// rate can be measured without outer noise.
inline double gns_outer_exact(const DiscreteNestedProblem& p, const RiskFunction& g,
                              std::size_t m, rng::Sequence& seq) {
    const auto ycnt = detail::multinomial_counts(m, p.sampling_pmf, seq);
    double acc = 0.0;
    for (std::size_t x = 0; x < p.x_states(); ++x) {
        double lm = 0.0;
        for (std::size_t y = 0; y < p.y_states(); ++y) {
            lm += static_cast<double>(ycnt[y]) * p.likelihood_ratio(x, y) * p.h_table[x][y];
        }
        acc += p.x_prob[x] * g.eval(lm / static_cast<double>(m));
    }
    return acc;
}

}  // namespace nestedrisk
