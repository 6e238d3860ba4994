#pragma once

#include "expected.hpp"
#include "matkernels.hpp"
#include "sde_model.hpp"

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string_view>

namespace stiffkalman
{
struct GaussianBelief final
{
        Vector mean;
        Matrix cov;
};

struct SqrtBelief final
{
        Vector mean;
        LowerTriangular cov_sqrt;

        [[nodiscard]] GaussianBelief to_gaussian() const
        {
                return {.mean = mean, .cov = cov_sqrt.gram()};
        }
};

struct FilterDivergence final
{
        enum class Cause
        {
                CholeskyFailure,
                ModelSingularity,
                NonFinite
        };

        Cause cause;
        // 1-based sampling instant at which the failure happened (0 = initialization).
        std::size_t sample_index = 0;
        // Time-update substep, empty when the failure is in the measurement update.
        std::optional<std::size_t> substep = std::nullopt;
};

inline std::string_view to_string(const FilterDivergence::Cause c)
{
        switch (c)
        {
        case FilterDivergence::Cause::CholeskyFailure:
                return "cholesky_failure";
        case FilterDivergence::Cause::ModelSingularity:
                return "model_singularity";
        case FilterDivergence::Cause::NonFinite:
                return "non_finite";
        }
        return "unknown";
}

inline FilterDivergence divergence_from(const ModelEvalError& e, std::optional<std::size_t> substep)
{
        return {.cause = e.kind() == ModelEvalError::Kind::SingularState ? FilterDivergence::Cause::ModelSingularity
                                                                         : FilterDivergence::Cause::NonFinite,
                .sample_index = 0,
                .substep = substep};
}

template <typename T>
using FilterResult = Expected<T, FilterDivergence>;

namespace filter_detail
{
inline FilterResult<Matrix> checked_symmetric(const Matrix& p, std::optional<std::size_t> substep)
{
        if (!p.allFinite())
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite, .substep = substep});
        }
        return symmetrized(p);
}

// tau = delta / m
inline double substep_size(const double delta, const std::size_t m)
{
        if (!(delta > 0) || m < 1)
        {
                throw std::invalid_argument("time update needs delta > 0 and m >= 1");
        }
        return delta / static_cast<double>(m);
}

// Gt and Gt Gt^T, constant for a model.
struct NoiseTerms final
{
        Matrix gt;
        Matrix gram;

        explicit NoiseTerms(const SdeModel& model)
                : gt(gtilde(model)),
                  gram(gt * gt.transpose())
        {
        }
};

// Inverse of a symmetric positive definite matrix through its Cholesky factor.
inline std::optional<Matrix> spd_inverse(const Matrix& a)
{
        const auto l = cholesky_lower(a);
        if (!l)
        {
                return std::nullopt;
        }
        const auto l_inv_t = solve_triangular_right(Matrix::Identity(a.rows(), a.rows()), *l);
        if (!l_inv_t)
        {
                return std::nullopt;
        }
        // X L = I gives X = L^{-1}; A^{-1} = L^{-T} L^{-1}
        return Matrix(l_inv_t->transpose() * *l_inv_t);
}
}
}
