// Small dense symmetric solvers. Systems here are (D+1)x(D+1) at most
// (surrogate regressions) or kernel Gram matrices of a few hundred rows,
// so a plain Cholesky is all that is needed.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "xuq/common.hpp"

namespace xuq::linalg {

// In-place lower Cholesky of a symmetric positive-definite matrix.
// Returns false when a pivot is not strictly positive.
inline bool cholesky(Matrix& a) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double l = std::sqrt(d);
        a(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / l;
        }
    }
    // zero the strict upper triangle so the factor is self-describing
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
    return true;
}

inline std::vector<double> cholesky_solve(const Matrix& chol, std::span<const double> b) {
    const std::size_t n = chol.rows();
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (std::size_t k = 0; k < i; ++k) s -= chol(i, k) * y[k];
        y[i] = s / chol(i, i);
    }
    for (std::size_t ii = n; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= chol(k, i) * y[k];
        y[i] = s / chol(i, i);
    }
    return y;
}

struct SpdSolveResult {
    std::vector<double> x;
    bool ridge_floored = false;  // system was singular; a 1e-8 diagonal floor was applied
};

// Solve a symmetric (near-)positive-definite system; on a singular factorization
// retries with a small diagonal floor.
inline SpdSolveResult solve_spd(Matrix a, std::span<const double> b, double ridge_floor = 1e-8) {
    Matrix attempt = a;
    if (cholesky(attempt)) return {cholesky_solve(attempt, b), false};
    double floor = ridge_floor;
    for (int tries = 0; tries < 40; ++tries) {
        attempt = a;
        for (std::size_t i = 0; i < attempt.rows(); ++i) attempt(i, i) += floor;
        if (cholesky(attempt)) return {cholesky_solve(attempt, b), true};
        floor *= 10.0;
    }
    throw domain_error("solve_spd: matrix not factorizable even with ridge floor");
}

// Diagonal of the inverse of an SPD matrix, from its Cholesky factor.
inline std::vector<double> spd_inverse_diagonal(const Matrix& chol) {
    const std::size_t n = chol.rows();
    std::vector<double> diag(n, 0.0);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) {
        // solve L y = e_j, then L^T x = y; diag_j = x_j
        for (std::size_t i = 0; i < n; ++i) {
            double s = (i == j) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) s -= chol(i, k) * col[k];
            col[i] = s / chol(i, i);
        }
        for (std::size_t ii = n; ii > 0; --ii) {
            const std::size_t i = ii - 1;
            double s = col[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= chol(k, i) * col[k];
            col[i] = s / chol(i, i);
        }
        diag[j] = col[j];
    }
    return diag;
}

}  // namespace xuq::linalg
