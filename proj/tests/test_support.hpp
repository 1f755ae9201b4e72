#pragma once

// Shared helpers for the test suites: seeded random domain objects and
// reference implementations kept independent of the library code they check.

#include <cmath>
#include <string>
#include <vector>

#include "ctmc/core.hpp"
#include "ctmc/kernels.hpp"
#include "ctmc/matrix.hpp"
#include "ctmc/rng.hpp"

namespace test_support {

inline ctmc::StateSpace make_space(std::size_t k) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < k; ++i) labels.push_back("s" + std::to_string(i));
    return ctmc::StateSpace(labels);
}

/// Random valid generator with max |q_ij| <= max_rate: off-diagonals drawn
/// uniformly and the row rescaled so its exit rate stays below max_rate.
inline ctmc::GeneratorMatrix random_generator(std::size_t k, ctmc::Rng& rng,
                                              double max_rate = 1.0) {
    ctmc::Matrix q(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            q(i, j) = rng.uniform();
            row += q(i, j);
        }
        const double target = max_rate * (0.2 + 0.8 * rng.uniform());
        const double scale = row > 0.0 ? target / row : 0.0;
        double off = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            q(i, j) *= scale;
            off += q(i, j);
        }
        q(i, i) = -off;
    }
    return ctmc::GeneratorMatrix(make_space(k), std::move(q));
}

/// Matrix exponential by direct Taylor summation, no scaling: an independent
/// oracle for matrix_exp at moderate norms.
inline ctmc::Matrix taylor_exp_reference(const ctmc::Matrix& a, int terms = 80) {
    ctmc::Matrix sum = ctmc::Matrix::identity(a.rows());
    ctmc::Matrix term = ctmc::Matrix::identity(a.rows());
    for (int k = 1; k <= terms; ++k) {
        term = term * a;
        term *= 1.0 / k;
        sum += term;
    }
    return sum;
}

inline double max_abs_diff(const ctmc::Matrix& a, const ctmc::Matrix& b) {
    return (a - b).max_abs();
}

inline double mean(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace test_support
