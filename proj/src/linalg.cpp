#include "lrc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lrc {

void check_finite(const Matrix& m, const char* who) {
    for (double v : m.data) {
        if (!std::isfinite(v)) throw input_error(std::string(who) + ": non-finite entry");
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw shape_error("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                          " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    if (a.empty() || b.empty()) throw shape_error("matmul: empty operand");
    check_finite(a, "matmul");
    check_finite(b, "matmul");
    Matrix c(a.rows, b.cols);
    const int n = b.cols;
    for (int i = 0; i < a.rows; i++) {
        const double* arow = &a.data[(size_t)i * a.cols];
        double* crow = &c.data[(size_t)i * n];
        for (int l = 0; l < a.cols; l++) {
            const double av = arow[l];
            const double* brow = &b.data[(size_t)l * n];
            for (int j = 0; j < n; j++) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; i++)
        for (int j = 0; j < a.cols; j++) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw shape_error("add: shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); i++) c.data[i] += b.data[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw shape_error("sub: shape mismatch");
    Matrix c = a;
    for (size_t i = 0; i < c.data.size(); i++) c.data[i] -= b.data[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data) v *= s;
    return c;
}

double frobenius_norm(const Matrix& a) {
    double sum = 0.0;
    for (double v : a.data) sum += v * v;
    return std::sqrt(sum);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw shape_error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); i++) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

Matrix select_columns(const Matrix& a, const std::vector<int>& idx) {
    Matrix c(a.rows, (int)idx.size());
    for (size_t j = 0; j < idx.size(); j++) {
        if (idx[j] < 0 || idx[j] >= a.cols) throw input_error("select_columns: index out of range");
        for (int i = 0; i < a.rows; i++) c(i, (int)j) = a(i, idx[j]);
    }
    return c;
}

Matrix select_rows(const Matrix& a, const std::vector<int>& idx) {
    Matrix c((int)idx.size(), a.cols);
    for (size_t i = 0; i < idx.size(); i++) {
        if (idx[i] < 0 || idx[i] >= a.rows) throw input_error("select_rows: index out of range");
        for (int j = 0; j < a.cols; j++) c((int)i, j) = a(idx[i], j);
    }
    return c;
}

Matrix select_submatrix(const Matrix& a, const std::vector<int>& idx) {
    if (a.rows != a.cols) throw shape_error("select_submatrix: square input required");
    Matrix c((int)idx.size(), (int)idx.size());
    for (size_t i = 0; i < idx.size(); i++)
        for (size_t j = 0; j < idx.size(); j++) {
            if (idx[i] >= a.rows || idx[j] >= a.rows || idx[i] < 0 || idx[j] < 0)
                throw input_error("select_submatrix: index out of range");
            c((int)i, (int)j) = a(idx[i], idx[j]);
        }
    return c;
}

// Attempts plain Cholesky-Banachiewicz on g + lambda*I. Pivots must stay
// above pivot_tol to count as numerically positive definite.
static bool try_cholesky(const Matrix& g, double lambda, double pivot_tol, Matrix& out) {
    const int n = g.rows;
    out = Matrix(n, n);
    for (int i = 0; i < n; i++) {
        for (int j = 0; j <= i; j++) {
            double sum = g(i, j) + (i == j ? lambda : 0.0);
            for (int k = 0; k < j; k++) sum -= out(i, k) * out(j, k);
            if (i == j) {
                if (!(sum > pivot_tol)) return false;
                out(i, i) = std::sqrt(sum);
            } else {
                out(i, j) = sum / out(j, j);
            }
        }
    }
    return true;
}

CholeskyFactor cholesky(const Matrix& g, const DampingPolicy& policy) {
    if (g.rows != g.cols || g.empty()) throw shape_error("cholesky: square input required");
    check_finite(g, "cholesky");
    double asym = 0.0;
    for (int i = 0; i < g.rows; i++)
        for (int j = i + 1; j < g.cols; j++) asym = std::max(asym, std::fabs(g(i, j) - g(j, i)));
    if (asym > 1e-10) throw shape_error("cholesky: input asymmetric beyond 1e-10");

    double trace = 0.0;
    for (int i = 0; i < g.rows; i++) trace += g(i, i);
    const double unit = std::max(trace / g.rows, 0.0);  // scale-free damping unit
    const double pivot_tol = policy.pivot_rel_tol * unit;

    Matrix l;
    for (double rung : policy.ladder) {
        const double lambda = rung * unit;
        if (try_cholesky(g, lambda, pivot_tol, l)) return CholeskyFactor{std::move(l), lambda};
    }
    throw numerical_error("cholesky: not positive definite even at maximum damping");
}

namespace {

// Column-major workspace for the one-sided Jacobi iteration.
struct JacobiWork {
    int m, n;
    std::vector<double> b;  // m x n, column-major: the rotating copy of A
    std::vector<double> v;  // n x n, column-major: accumulated right rotations

    double* bcol(int j) { return &b[(size_t)j * m]; }
    double* vcol(int j) { return &v[(size_t)j * n]; }
};

// SVD of a tall-or-square matrix (m >= n). Returns U (m x n), sigma, V (n x n),
// all unsorted and without the sign convention; the caller finishes up.
void jacobi_tall(const Matrix& a, Matrix& u, std::vector<double>& sigma, Matrix& v) {
    const int m = a.rows, n = a.cols;
    JacobiWork w{m, n, std::vector<double>((size_t)m * n), std::vector<double>((size_t)n * n, 0.0)};
    for (int j = 0; j < n; j++) {
        for (int i = 0; i < m; i++) w.bcol(j)[i] = a(i, j);
        w.vcol(j)[j] = 1.0;
    }

    double fro2 = 0.0;
    for (double x : w.b) fro2 += x * x;
    const double off_target = 1e-12 * fro2;

    const int sweep_limit = 100;
    bool converged = (fro2 == 0.0);
    for (int sweep = 0; sweep < sweep_limit && !converged; sweep++) {
        double off2 = 0.0;  // sum of squared off-diagonal entries of B^T B (upper half)
        int rotations = 0;
        for (int p = 0; p < n - 1; p++) {
            for (int q = p + 1; q < n; q++) {
                double* bp = w.bcol(p);
                double* bq = w.bcol(q);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < m; i++) {
                    alpha += bp[i] * bp[i];
                    beta += bq[i] * bq[i];
                    gamma += bp[i] * bq[i];
                }
                off2 += gamma * gamma;
                // Per-pair relative criterion: near-null columns must also end
                // up mutually orthogonal, or U would not be an orthonormal
                // frame; the global energy threshold alone can't see them.
                if (gamma == 0.0 || std::fabs(gamma) <= 1e-14 * std::sqrt(alpha * beta)) continue;
                rotations++;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; i++) {
                    const double x = bp[i], y = bq[i];
                    bp[i] = c * x - s * y;
                    bq[i] = s * x + c * y;
                }
                double* vp = w.vcol(p);
                double* vq = w.vcol(q);
                for (int i = 0; i < n; i++) {
                    const double x = vp[i], y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        // off-diagonal Frobenius mass of B^T B (both halves), plus a clean
        // (rotation-free) sweep
        converged = rotations == 0 && std::sqrt(2.0 * off2) <= off_target;
    }
    if (!converged) throw numerical_error("svd: no convergence within 100 sweeps");

    sigma.assign(n, 0.0);
    u = Matrix(m, n);
    v = Matrix(n, n);
    double sigma_max = 0.0;
    for (int j = 0; j < n; j++) {
        double norm2 = 0.0;
        for (int i = 0; i < m; i++) norm2 += w.bcol(j)[i] * w.bcol(j)[i];
        sigma[j] = std::sqrt(norm2);
        sigma_max = std::max(sigma_max, sigma[j]);
        for (int i = 0; i < n; i++) v(i, j) = w.vcol(j)[i];
    }
    for (int j = 0; j < n; j++) {
        if (sigma[j] > 0.0) {
            for (int i = 0; i < m; i++) u(i, j) = w.bcol(j)[i] / sigma[j];
        }
        // exactly-zero columns are filled in by the caller's completion pass
    }
}

// Replaces zero columns of u with unit vectors orthonormal to all other
// columns (Gram-Schmidt against canonical basis candidates). Keeps U a
// valid orthonormal frame when A is rank-deficient.
void complete_zero_columns(Matrix& u, const std::vector<double>& sigma) {
    const int m = u.rows, n = u.cols;
    for (int j = 0; j < n; j++) {
        if (sigma[j] > 0.0) continue;
        for (int cand = 0; cand < m; cand++) {
            std::vector<double> vec(m, 0.0);
            vec[cand] = 1.0;
            for (int k = 0; k < n; k++) {
                if (k == j || (sigma[k] == 0.0 && k > j)) continue;  // project on filled columns
                double dot = 0.0;
                for (int i = 0; i < m; i++) dot += vec[i] * u(i, k);
                for (int i = 0; i < m; i++) vec[i] -= dot * u(i, k);
            }
            double norm2 = 0.0;
            for (double x : vec) norm2 += x * x;
            if (norm2 > 0.25) {  // safely independent of the existing frame
                const double inv = 1.0 / std::sqrt(norm2);
                for (int i = 0; i < m; i++) u(i, j) = vec[i] * inv;
                break;
            }
        }
    }
}

}  // namespace

SvdResult svd(const Matrix& a) {
    if (a.empty()) throw shape_error("svd: empty input");
    check_finite(a, "svd");

    const bool transposed = a.rows < a.cols;
    Matrix work = transposed ? transpose(a) : a;

    Matrix u1;
    std::vector<double> sig;
    Matrix v1;
    jacobi_tall(work, u1, sig, v1);

    // Descending sigma, ties by original column index (stable).
    const int r = (int)sig.size();
    std::vector<int> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return sig[x] > sig[y]; });

    Matrix u_s(u1.rows, r), v_s(v1.rows, r);
    std::vector<double> sigma(r);
    for (int j = 0; j < r; j++) {
        sigma[j] = sig[order[j]];
        for (int i = 0; i < u1.rows; i++) u_s(i, j) = u1(i, order[j]);
        for (int i = 0; i < v1.rows; i++) v_s(i, j) = v1(i, order[j]);
    }
    complete_zero_columns(u_s, sigma);

    SvdResult out;
    if (!transposed) {
        out.u = std::move(u_s);
        out.vt = transpose(v_s);
    } else {
        // a^T = u1 * S * v1^T  =>  a = v1 * S * u1^T
        out.u = std::move(v_s);
        out.vt = transpose(u_s);
    }
    out.sigma = std::move(sigma);

    // Sign convention: largest-magnitude entry of each left singular vector
    // is nonnegative; first index wins ties. Applied after any transpose so
    // it always refers to the left vectors of the original input.
    for (int j = 0; j < r; j++) {
        int arg = 0;
        double best = -1.0;
        for (int i = 0; i < out.u.rows; i++) {
            const double mag = std::fabs(out.u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (int i = 0; i < out.u.rows; i++) out.u(i, j) = -out.u(i, j);
            for (int i = 0; i < out.vt.cols; i++) out.vt(j, i) = -out.vt(j, i);
        }
    }
    return out;
}

Matrix solve_lower_triangular(const CholeskyFactor& chol, const Matrix& b) {
    const Matrix& l = chol.l;
    if (l.rows != b.rows) throw shape_error("solve_lower_triangular: row mismatch");
    double max_diag = 0.0;
    for (int i = 0; i < l.rows; i++) max_diag = std::max(max_diag, std::fabs(l(i, i)));
    const double tol = 1e-15 * max_diag;

    Matrix y = b;
    const int n = l.rows, w = b.cols;
    for (int i = 0; i < n; i++) {
        double* yi = &y.data[(size_t)i * w];
        for (int k = 0; k < i; k++) {
            const double lik = l(i, k);
            if (lik == 0.0) continue;
            const double* yk = &y.data[(size_t)k * w];
            for (int j = 0; j < w; j++) yi[j] -= lik * yk[j];
        }
        const double piv = l(i, i);
        if (!(std::fabs(piv) > tol)) throw numerical_error("solve_lower_triangular: near-zero pivot");
        for (int j = 0; j < w; j++) yi[j] /= piv;
    }
    return y;
}

Matrix solve_lower_transposed(const CholeskyFactor& chol, const Matrix& b) {
    const Matrix& l = chol.l;
    if (l.rows != b.rows) throw shape_error("solve_lower_transposed: row mismatch");
    double max_diag = 0.0;
    for (int i = 0; i < l.rows; i++) max_diag = std::max(max_diag, std::fabs(l(i, i)));
    const double tol = 1e-15 * max_diag;

    Matrix y = b;
    const int n = l.rows, w = b.cols;
    for (int i = n - 1; i >= 0; i--) {
        double* yi = &y.data[(size_t)i * w];
        for (int k = i + 1; k < n; k++) {
            const double lki = l(k, i);  // (L^T)(i,k)
            if (lki == 0.0) continue;
            const double* yk = &y.data[(size_t)k * w];
            for (int j = 0; j < w; j++) yi[j] -= lki * yk[j];
        }
        const double piv = l(i, i);
        if (!(std::fabs(piv) > tol)) throw numerical_error("solve_lower_transposed: near-zero pivot");
        for (int j = 0; j < w; j++) yi[j] /= piv;
    }
    return y;
}

}  // namespace lrc
