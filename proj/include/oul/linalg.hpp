#pragma once

#include <vector>

#include "oul/matrix.hpp"

namespace oul::linalg {

/// Thin SVD m = u * diag(s) * v^T with p = min(rows, cols) columns.
/// u and v have orthonormal columns; s is non-negative and descending.
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

/// One-sided cyclic Jacobi, deterministic: fixed sweep order, sign fixed so
/// the largest-magnitude entry of each u column is positive, ties among
/// equal singular values broken by column index. Throws numeric_error if
/// the rotation residual has not dropped below 1e-12 after 60 sweeps.
SvdResult svd(const Matrix& m);

/// Removes from `candidate` its projection onto span(basis) by modified
/// Gram-Schmidt with one re-pass, re-orthonormalizing the survivors.
/// Columns whose residual norm falls below `tol` are dropped; the result
/// may have zero columns. `basis` must have orthonormal columns.
Matrix orthonormalize_against(const Matrix& candidate, const Matrix& basis, double tol);

/// P = I - Q Q^T for an orthonormal basis Q with `dim` rows. The empty
/// basis yields the identity. Rejects a non-orthonormal basis.
Matrix projector_from_basis(const Matrix& basis, std::size_t dim);

} // namespace oul::linalg
