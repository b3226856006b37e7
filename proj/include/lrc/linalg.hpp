#pragma once

#include <vector>

#include "lrc/errors.hpp"

// Dense f64 linear algebra used everywhere else: matmul, Cholesky with a
// damping ladder, one-sided Jacobi SVD, triangular solves. Everything is a
// pure function; matrices are plain row-major buffers.
namespace lrc {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data((size_t)r * c, 0.0) {
        if (r < 0 || c < 0) throw shape_error("negative matrix dimension");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; i++) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return data[(size_t)i * cols + j]; }
    const double& operator()(int i, int j) const { return data[(size_t)i * cols + j]; }

    bool empty() const { return rows == 0 || cols == 0; }
    long param_count() const { return (long)rows * cols; }
};

// Throws input_error if any entry is NaN/Inf. Called at public-op entry.
void check_finite(const Matrix& m, const char* who);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix select_columns(const Matrix& a, const std::vector<int>& idx);
Matrix select_rows(const Matrix& a, const std::vector<int>& idx);
// a[idx, idx] — used for the marginal-neuron sub-Gram.
Matrix select_submatrix(const Matrix& a, const std::vector<int>& idx);

// Damping ladder for Cholesky on (possibly singular) Gram matrices. Each
// ladder entry is multiplied by trace(G)/dim so the policy is scale-free;
// the first rung that factorizes wins. pivot_rel_tol decides when a pivot
// counts as numerically positive (also relative to trace/dim).
struct DampingPolicy {
    std::vector<double> ladder{0.0, 1e-10, 1e-8, 1e-6, 1e-4};
    double pivot_rel_tol = 1e-12;
};

struct CholeskyFactor {
    Matrix l;                      // lower triangular, strictly zero above diagonal
    double damping_applied = 0.0;  // the lambda actually added to the diagonal
};

// Factors g + lambda*I = L*L^T with the smallest lambda from the policy
// ladder that succeeds. Throws shape_error on non-square/asymmetric input,
// numerical_error when even the largest rung fails.
CholeskyFactor cholesky(const Matrix& g, const DampingPolicy& policy = {});

struct SvdResult {
    Matrix u;                   // m x r, orthonormal columns
    std::vector<double> sigma;  // length r, descending, nonnegative
    Matrix vt;                  // r x n, orthonormal rows
};

// Full SVD via one-sided Jacobi, r = min(m,n). Deterministic: fixed cyclic
// sweep order and the sign convention that each left singular vector's
// largest-magnitude entry is nonnegative. Throws numerical_error if the
// off-diagonal energy hasn't fallen below 1e-12*|A|_F^2 after 100 sweeps.
SvdResult svd(const Matrix& a);

// Solves L*y = b (forward substitution). Throws numerical_error on a
// near-zero diagonal pivot.
Matrix solve_lower_triangular(const CholeskyFactor& chol, const Matrix& b);
// Solves L^T*y = b (back substitution on the transposed factor). This is
// how whitening is undone without ever forming an inverse.
Matrix solve_lower_transposed(const CholeskyFactor& chol, const Matrix& b);

}  // namespace lrc
