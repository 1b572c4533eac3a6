#include "oul/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "oul/error.hpp"

namespace oul::linalg {

namespace {

constexpr int kMaxSweeps = 60;
constexpr double kRotTol = 1e-12;     // relative off-diagonal threshold
constexpr double kTinyRel = 1e-13;    // columns below this (relative) get completed directions

// One-sided Jacobi on a tall matrix (rows >= cols): orthogonalizes the
// columns of `a` in place while accumulating the right rotations into `v`.
// Returns true on convergence.
bool jacobi_orthogonalize(Matrix& a, Matrix& v) {
    const std::size_t m = a.rows(), n = a.cols();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double worst = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double aii = 0.0, ajj = 0.0, aij = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double x = a(k, i), y = a(k, j);
                    aii += x * x;
                    ajj += y * y;
                    aij += x * y;
                }
                const double denom = std::sqrt(aii * ajj);
                const double rel = denom > 0.0 ? std::abs(aij) / denom : 0.0;
                worst = std::max(worst, rel);
                if (rel <= kRotTol) continue;

                const double zeta = (ajj - aii) / (2.0 * aij);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double x = a(k, i), y = a(k, j);
                    a(k, i) = c * x - s * y;
                    a(k, j) = s * x + c * y;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double x = v(k, i), y = v(k, j);
                    v(k, i) = c * x - s * y;
                    v(k, j) = s * x + c * y;
                }
            }
        }
        if (worst <= kRotTol) return true;
    }
    return false;
}

// Deterministic completion: replace column `col` of u with the first
// standard basis vector whose residual against the existing columns stays
// above 1e-3 after two orthogonalization passes.
void complete_column(Matrix& u, std::size_t col) {
    const std::size_t m = u.rows();
    for (std::size_t cand = 0; cand < m; ++cand) {
        std::vector<double> w(m, 0.0);
        w[cand] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < col; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < m; ++k) dot += u(k, j) * w[k];
                for (std::size_t k = 0; k < m; ++k) w[k] -= dot * u(k, j);
            }
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-3) {
            for (std::size_t k = 0; k < m; ++k) u(k, col) = w[k] / norm;
            return;
        }
    }
    throw numeric_error("svd: failed to complete an orthonormal basis column");
}

SvdResult svd_tall(const Matrix& input) {
    Matrix a = input;
    const std::size_t m = a.rows(), n = a.cols();
    Matrix v = Matrix::identity(n);
    if (!jacobi_orthogonalize(a, v)) {
        throw numeric_error("svd: Jacobi failed to converge within " +
                            std::to_string(kMaxSweeps) + " sweeps");
    }

    std::vector<double> norms(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) acc += a(k, j) * a(k, j);
        norms[j] = std::sqrt(acc);
    }
    const double s_max = *std::max_element(norms.begin(), norms.end());

    // descending stable order; equal values keep column-index order
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

    SvdResult out;
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    out.s.resize(n);
    std::vector<std::size_t> needs_completion;
    for (std::size_t jo = 0; jo < n; ++jo) {
        const std::size_t src = order[jo];
        out.s[jo] = norms[src];
        for (std::size_t k = 0; k < n; ++k) out.v(k, jo) = v(k, src);
        if (norms[src] > s_max * kTinyRel && norms[src] > 0.0) {
            for (std::size_t k = 0; k < m; ++k) out.u(k, jo) = a(k, src) / norms[src];
        } else {
            out.s[jo] = 0.0;
            needs_completion.push_back(jo);
        }
    }
    for (std::size_t jo : needs_completion) complete_column(out.u, jo);

    // sign convention: largest-magnitude entry of each u column positive
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double mag = std::abs(out.u(k, j));
            if (mag > best) {
                best = mag;
                arg = k;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (std::size_t k = 0; k < m; ++k) out.u(k, j) = -out.u(k, j);
            for (std::size_t k = 0; k < n; ++k) out.v(k, j) = -out.v(k, j);
        }
    }
    return out;
}

} // namespace

SvdResult svd(const Matrix& m) {
    if (m.empty()) throw std::invalid_argument("svd: empty matrix");
    ensure_finite(m, "svd input");
    if (m.rows() >= m.cols()) return svd_tall(m);
    SvdResult t = svd_tall(transpose(m));
    return SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
}

Matrix orthonormalize_against(const Matrix& candidate, const Matrix& basis, double tol) {
    if (!basis.empty() && candidate.rows() != basis.rows()) {
        throw std::invalid_argument("orthonormalize_against: row mismatch");
    }
    const std::size_t m = candidate.rows();
    std::vector<std::vector<double>> kept;
    for (std::size_t jc = 0; jc < candidate.cols(); ++jc) {
        std::vector<double> w(m);
        for (std::size_t k = 0; k < m; ++k) w[k] = candidate(k, jc);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t jb = 0; jb < basis.cols(); ++jb) {
                double dot = 0.0;
                for (std::size_t k = 0; k < m; ++k) dot += basis(k, jb) * w[k];
                for (std::size_t k = 0; k < m; ++k) w[k] -= dot * basis(k, jb);
            }
            for (const auto& q : kept) {
                double dot = 0.0;
                for (std::size_t k = 0; k < m; ++k) dot += q[k] * w[k];
                for (std::size_t k = 0; k < m; ++k) w[k] -= dot * q[k];
            }
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < tol) continue;
        for (double& x : w) x /= norm;
        kept.push_back(std::move(w));
    }
    Matrix out(m, kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j)
        for (std::size_t k = 0; k < m; ++k) out(k, j) = kept[j][k];
    return out;
}

Matrix projector_from_basis(const Matrix& basis, std::size_t dim) {
    if (!basis.empty() && basis.rows() != dim) {
        throw std::invalid_argument("projector_from_basis: basis rows do not match dim");
    }
    if (!basis.empty()) {
        const Matrix gram = matmul(transpose(basis), basis);
        const Matrix residual = gram - Matrix::identity(basis.cols());
        if (max_abs(residual) > 1e-8) {
            throw std::invalid_argument("projector_from_basis: basis columns not orthonormal");
        }
    }
    Matrix p = Matrix::identity(dim);
    if (basis.empty()) return p;
    return p - matmul(basis, transpose(basis));
}

} // namespace oul::linalg
