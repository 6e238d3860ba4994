#pragma once

#include "expected.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace stiffkalman
{
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Square matrix with zeros above the diagonal. Produced by the factorization
// kernels below; the wrapping keeps the pattern from being lost by accident.
class LowerTriangular final
{
        Matrix m_;

        explicit LowerTriangular(Matrix m, int /*trusted*/)
                : m_(std::move(m))
        {
        }

public:
        LowerTriangular() = default;

        // Validates the pattern; entries above the diagonal must be exactly zero.
        static LowerTriangular from_matrix(Matrix m)
        {
                if (m.rows() != m.cols())
                {
                        throw std::invalid_argument("lower-triangular factor must be square");
                }
                for (Eigen::Index j = 1; j < m.cols(); ++j)
                {
                        for (Eigen::Index i = 0; i < j; ++i)
                        {
                                if (m(i, j) != 0)
                                {
                                        throw std::invalid_argument("matrix is not lower triangular");
                                }
                        }
                }
                return LowerTriangular(std::move(m), 0);
        }

        static LowerTriangular from_matrix_unchecked(Matrix m)
        {
                return LowerTriangular(std::move(m), 0);
        }

        static LowerTriangular identity(const Eigen::Index n)
        {
                return LowerTriangular(Matrix::Identity(n, n), 0);
        }

        static LowerTriangular diagonal(const Vector& d)
        {
                return LowerTriangular(Matrix(d.asDiagonal()), 0);
        }

        [[nodiscard]] Eigen::Index dim() const noexcept
        {
                return m_.rows();
        }

        [[nodiscard]] const Matrix& matrix() const noexcept
        {
                return m_;
        }

        [[nodiscard]] double operator()(const Eigen::Index i, const Eigen::Index j) const
        {
                return m_(i, j);
        }

        // L * L^T
        [[nodiscard]] Matrix gram() const
        {
                return m_ * m_.transpose();
        }
};

struct CholeskyError final
{
        enum class Kind
        {
                NotPositiveDefinite,
                NotSymmetric
        };

        Kind kind;
        // Column at which a non-positive (or NaN) pivot appeared; -1 for NotSymmetric.
        Eigen::Index pivot_index;
};

struct SingularFactor final
{
        Eigen::Index diagonal_index;
};

inline double max_abs(const Matrix& m)
{
        return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline Matrix symmetrized(const Matrix& m)
{
        return 0.5 * (m + m.transpose());
}

inline constexpr double ASYMMETRY_TOLERANCE = 1e-8;

// Unpivoted Cholesky. The input is symmetrized first; an asymmetry beyond
// 1e-8 * max|M| is rejected. No jitter or repair is attempted: a failed
// pivot is reported to the caller.
inline Expected<LowerTriangular, CholeskyError> cholesky_lower(const Matrix& m)
{
        if (m.rows() != m.cols())
        {
                throw std::invalid_argument("cholesky_lower requires a square matrix");
        }
        const Eigen::Index n = m.rows();

        const double scale = max_abs(m);
        if (max_abs(m - m.transpose()) > ASYMMETRY_TOLERANCE * scale)
        {
                return unexpected(CholeskyError{.kind = CholeskyError::Kind::NotSymmetric, .pivot_index = -1});
        }

        const Matrix a = symmetrized(m);
        Matrix l = Matrix::Zero(n, n);

        for (Eigen::Index j = 0; j < n; ++j)
        {
                double d = a(j, j);
                for (Eigen::Index k = 0; k < j; ++k)
                {
                        d -= l(j, k) * l(j, k);
                }
                if (!(d > 0) || !std::isfinite(d))
                {
                        return unexpected(
                                CholeskyError{.kind = CholeskyError::Kind::NotPositiveDefinite, .pivot_index = j});
                }
                const double ljj = std::sqrt(d);
                l(j, j) = ljj;
                for (Eigen::Index i = j + 1; i < n; ++i)
                {
                        double s = a(i, j);
                        for (Eigen::Index k = 0; k < j; ++k)
                        {
                                s -= l(i, k) * l(j, k);
                        }
                        l(i, j) = s / ljj;
                }
        }

        return LowerTriangular::from_matrix_unchecked(std::move(l));
}

// Given a wide n x p matrix A (p >= n), returns the n x n lower-triangular S
// with non-negative diagonal such that S * S^T = A * A^T.
//
// Householder QR of A^T = Q R gives A = R^T Q^T, so S = R^T after flipping
// the sign of every row of R with a negative diagonal entry.
inline LowerTriangular triangularize(const Matrix& a)
{
        const Eigen::Index n = a.rows();
        const Eigen::Index p = a.cols();
        if (p < n)
        {
                throw std::invalid_argument("triangularize requires cols >= rows");
        }

        Matrix r = a.transpose();
        Vector v(p);

        for (Eigen::Index k = 0; k < n; ++k)
        {
                const Eigen::Index len = p - k;
                auto x = r.col(k).tail(len);

                const double norm = x.norm();
                if (norm == 0)
                {
                        continue;
                }

                // v = x + sign(x0) |x| e0, chosen to avoid cancellation
                const double alpha = (x(0) >= 0) ? -norm : norm;
                auto vk = v.head(len);
                vk = x;
                vk(0) -= alpha;
                const double vnorm2 = vk.squaredNorm();
                if (vnorm2 == 0)
                {
                        continue;
                }

                x.setZero();
                x(0) = alpha;

                for (Eigen::Index j = k + 1; j < n; ++j)
                {
                        auto col = r.col(j).tail(len);
                        const double f = 2 * vk.dot(col) / vnorm2;
                        col -= f * vk;
                }
        }

        Matrix s = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
                const double sign = (r(i, i) < 0) ? -1.0 : 1.0;
                for (Eigen::Index j = i; j < n; ++j)
                {
                        s(j, i) = sign * r(i, j);
                }
        }
        return LowerTriangular::from_matrix_unchecked(std::move(s));
}

struct BlockTriangular final
{
        LowerTriangular re_sqrt;
        Matrix cross;
        LowerTriangular p_sqrt;
};

// Lower-triangularizes the two-block pre-array
//
//   [ top    ]   (m x p)        [ re_sqrt  0      ]
//   [ bottom ]   (n x p)   ->   [ cross    p_sqrt ]
//
// by an orthogonal transformation from the right.
inline BlockTriangular block_triangularize(const Matrix& top, const Matrix& bottom)
{
        if (top.cols() != bottom.cols())
        {
                throw std::invalid_argument("block_triangularize: column counts differ");
        }
        const Eigen::Index m = top.rows();
        const Eigen::Index n = bottom.rows();

        Matrix pre(m + n, top.cols());
        pre.topRows(m) = top;
        pre.bottomRows(n) = bottom;

        const LowerTriangular post = triangularize(pre);
        const Matrix& s = post.matrix();

        return BlockTriangular{
                .re_sqrt = LowerTriangular::from_matrix_unchecked(s.topLeftCorner(m, m)),
                .cross = s.bottomLeftCorner(n, m),
                .p_sqrt = LowerTriangular::from_matrix_unchecked(s.bottomRightCorner(n, n))};
}

inline constexpr double SINGULAR_DIAGONAL = 1e-300;

// Solves X * L = B for X, L lower triangular.
inline Expected<Matrix, SingularFactor> solve_triangular_right(const Matrix& b, const LowerTriangular& l)
{
        const Eigen::Index n = l.dim();
        if (b.cols() != n)
        {
                throw std::invalid_argument("solve_triangular_right: dimension mismatch");
        }
        for (Eigen::Index i = 0; i < n; ++i)
        {
                if (!(std::abs(l(i, i)) >= SINGULAR_DIAGONAL))
                {
                        return unexpected(SingularFactor{.diagonal_index = i});
                }
        }

        // Column j of X*L is sum_{k >= j} X(:,k) L(k,j); solve from the last column back.
        Matrix x(b.rows(), n);
        for (Eigen::Index j = n - 1; j >= 0; --j)
        {
                Vector col = b.col(j);
                for (Eigen::Index k = j + 1; k < n; ++k)
                {
                        col -= x.col(k) * l(k, j);
                }
                x.col(j) = col / l(j, j);
        }
        return x;
}
}
