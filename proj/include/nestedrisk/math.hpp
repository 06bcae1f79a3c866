#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nestedrisk {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Inverse standard normal CDF, Wichura's PPND16 rational approximation
// (relative error below 1e-15 on (0,1)).
inline double normal_inv_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("normal_inv_cdf: p must lie in (0,1)");
    }
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num = (((((((2.5090809287301226727e+3 * r +
                                  3.3430575583588128105e+4) * r +
                                 6.7265770927008700853e+4) * r +
                                4.5921953931549871457e+4) * r +
                               1.3731693765509461125e+4) * r +
                              1.9715909503065514427e+3) * r +
                             1.3314166789178437745e+2) * r +
                            3.3871328727963666080e+0);
        const double den = (((((((5.2264952788528545610e+3 * r +
                                  2.8729085735721942674e+4) * r +
                                 3.9307895800092710610e+4) * r +
                                2.1213794301586595867e+4) * r +
                               5.3941960214247511077e+3) * r +
                              6.8718700749205790830e+2) * r +
                             4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        const double num = (((((((7.74545014278341407640e-4 * r +
                                  2.27238449892691845833e-2) * r +
                                 2.41780725177450611770e-1) * r +
                                1.27045825245236838258e+0) * r +
                               3.64784832476320460504e+0) * r +
                              5.76949722146069140550e+0) * r +
                             4.63033784615654529590e+0) * r +
                            1.42343711074968357734e+0);
        const double den = (((((((1.05075007164441684324e-9 * r +
                                  5.47593808499534494600e-4) * r +
                                 1.51986665636164571966e-2) * r +
                                1.48103976427480074590e-1) * r +
                               6.89767334985100004550e-1) * r +
                              1.67638483018380384940e+0) * r +
                             2.05319162663775882187e+0) * r + 1.0);
        value = num / den;
    } else {
        r -= 5.0;
        const double num = (((((((2.01033439929228813265e-7 * r +
                                  2.71155556874348757815e-5) * r +
                                 1.24266094738807843860e-3) * r +
                                2.65321895265761230930e-2) * r +
                               2.96560571828504891230e-1) * r +
                              1.78482653991729133580e+0) * r +
                             5.46378491116411436990e+0) * r +
                            6.65790464350110377720e+0);
        const double den = (((((((2.04426310338993978564e-15 * r +
                                  1.42151175831644588870e-7) * r +
                                 1.84631831751005468180e-5) * r +
                                7.86869131145613259100e-4) * r +
                               1.48753612908506148525e-2) * r +
                              1.36929880922735805310e-1) * r +
                             5.99832206555887937690e-1) * r + 1.0);
        value = num / den;
    }
    return (q < 0.0) ? -value : value;
}

// Deterministic pairwise sum; order depends only on element order.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty input");
    return pairwise_sum(v) / static_cast<double>(v.size());
}

// Population variance (divides by n), so mse == bias^2 + variance holds exactly.
inline double population_variance(std::span<const double> v, double mean) {
    if (v.empty()) throw std::invalid_argument("population_variance: empty input");
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - mean;
        sq[i] = d * d;
    }
    return pairwise_sum(sq) / static_cast<double>(v.size());
}

inline double sample_std(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) return 0.0;
    const double m = mean_of(v);
    return std::sqrt(population_variance(v, m) * static_cast<double>(n) /
                     static_cast<double>(n - 1));
}

// Empirical quantile: the ceil(q*n)-th order statistic (1-based), i.e. the
// smallest x with F_hat(x) >= q.
inline double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("empirical_quantile: q out of (0,1]");
    const std::size_t n = values.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
    return values[rank - 1];
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

// Ordinary least squares y = a + b x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw std::invalid_argument("fit_line: need >=2 paired points");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) throw NumericError("fit_line: degenerate abscissa spread");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_stderr = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

// Dense symmetric eigendecomposition by cyclic Jacobi rotations. Used for the
// minimum-norm least-squares solve below; matrices are small (tens of rows).
inline void jacobi_eigensymmetric(std::vector<double>& a, std::size_t p,
                                  std::vector<double>& eigvec,
                                  std::vector<double>& eigval) {
    eigvec.assign(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i) eigvec[i * p + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) off += std::abs(a[i * p + j]);
        if (off == 0.0) break;
        for (std::size_t i = 0; i + 1 < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                const double apq = a[i * p + j];
                if (apq == 0.0) continue;
                const double app = a[i * p + i];
                const double aqq = a[j * p + j];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < p; ++k) {
                    const double aki = a[k * p + i];
                    const double akj = a[k * p + j];
                    a[k * p + i] = c * aki - s * akj;
                    a[k * p + j] = s * aki + c * akj;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    const double aik = a[i * p + k];
                    const double ajk = a[j * p + k];
                    a[i * p + k] = c * aik - s * ajk;
                    a[j * p + k] = s * aik + c * ajk;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    const double vki = eigvec[k * p + i];
                    const double vkj = eigvec[k * p + j];
                    eigvec[k * p + i] = c * vki - s * vkj;
                    eigvec[k * p + j] = s * vki + c * vkj;
                }
            }
        }
    }
    eigval.resize(p);
    for (std::size_t i = 0; i < p; ++i) eigval[i] = a[i * p + i];
}

struct LeastSquaresResult {
    std::vector<double> coeffs;
    bool rank_deficient = false;
};

// Minimum-norm least squares via the pseudo-inverse of X'X (eigendecomposition
// with relative truncation of near-null directions).
inline LeastSquaresResult solve_least_squares(const std::vector<double>& design,
                                              std::size_t rows, std::size_t cols,
                                              std::span<const double> rhs) {
    if (rhs.size() != rows || design.size() != rows * cols) {
        throw std::invalid_argument("solve_least_squares: shape mismatch");
    }
    std::vector<double> xtx(cols * cols, 0.0);
    std::vector<double> xty(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = design.data() + r * cols;
        for (std::size_t i = 0; i < cols; ++i) {
            xty[i] += row[i] * rhs[r];
            for (std::size_t j = i; j < cols; ++j) xtx[i * cols + j] += row[i] * row[j];
        }
    }
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = 0; j < i; ++j) xtx[i * cols + j] = xtx[j * cols + i];

    std::vector<double> vec, val;
    jacobi_eigensymmetric(xtx, cols, vec, val);
    double vmax = 0.0;
    for (double v : val) vmax = std::max(vmax, std::abs(v));
    const double cutoff = vmax * 1e-12;

    LeastSquaresResult out;
    out.coeffs.assign(cols, 0.0);
    for (std::size_t k = 0; k < cols; ++k) {
        if (std::abs(val[k]) <= cutoff) {
            out.rank_deficient = true;
            continue;
        }
        double proj = 0.0;
        for (std::size_t i = 0; i < cols; ++i) proj += vec[i * cols + k] * xty[i];
        proj /= val[k];
        for (std::size_t i = 0; i < cols; ++i) out.coeffs[i] += vec[i * cols + k] * proj;
    }
    return out;
}

// Jarque-Bera normality statistic; reject at 1% when it exceeds 9.210.
inline double jarque_bera(std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    if (v.size() < 8) throw std::invalid_argument("jarque_bera: too few samples");
    const double m = mean_of(v);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double skew = m3 / std::pow(m2, 1.5);
    const double exkurt = m4 / (m2 * m2) - 3.0;
    return n / 6.0 * (skew * skew + exkurt * exkurt / 4.0);
}

}  // namespace nestedrisk
