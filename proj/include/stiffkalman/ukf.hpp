#pragma once

#include "discretization.hpp"
#include "filter_types.hpp"
#include "matkernels.hpp"
#include "sde_model.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

namespace stiffkalman
{
// Unscented transform weights for alpha = 1, beta = 0, lambda = 3 - n.
//
// w_mean[0] = lambda / (n + lambda), w_cov[0] = w_mean[0] + 1 - alpha^2 + beta,
// w_mean[i] = w_cov[i] = 1 / (2 (n + lambda)) for i >= 1.
//
// w_matrix is (I - W_m 1^T) diag(w_cov) (I - W_m 1^T)^T, so that Y w_matrix Y^T
// is the weighted covariance of the columns of Y about their weighted mean.
struct UtWeights final
{
        double lambda = 0;
        Vector w_mean;
        Vector w_cov;
        Matrix w_matrix;
};

inline constexpr double UT_ALPHA = 1.0;
inline constexpr double UT_BETA = 0.0;

inline Matrix ut_weight_matrix(const Vector& w_mean, const Vector& w_cov)
{
        const Eigen::Index count = w_mean.size();
        const Matrix centering = Matrix::Identity(count, count) - w_mean * Vector::Ones(count).transpose();
        return centering * w_cov.asDiagonal() * centering.transpose();
}

inline UtWeights ut_weights(const Eigen::Index n)
{
        if (n < 1)
        {
                throw std::invalid_argument("unscented transform needs n >= 1");
        }
        const double nd = static_cast<double>(n);
        const double lambda = 3 - nd;
        const Eigen::Index count = 2 * n + 1;

        UtWeights w;
        w.lambda = lambda;
        w.w_mean = Vector::Constant(count, 1 / (2 * (nd + lambda)));
        w.w_mean(0) = lambda / (nd + lambda);
        w.w_cov = w.w_mean;
        w.w_cov(0) = w.w_mean(0) + 1 - UT_ALPHA * UT_ALPHA + UT_BETA;
        w.w_matrix = ut_weight_matrix(w.w_mean, w.w_cov);
        return w;
}

// Columns x, x + sqrt(n + lambda) S e_i, x - sqrt(n + lambda) S e_i, where
// n + lambda = 3.
inline Matrix sigma_points(const Vector& mean, const LowerTriangular& s)
{
        const Eigen::Index n = mean.size();
        const double scale = std::sqrt(3.0);
        Matrix pts(n, 2 * n + 1);
        pts.col(0) = mean;
        for (Eigen::Index i = 0; i < n; ++i)
        {
                pts.col(1 + i) = mean + scale * s.matrix().col(i);
                pts.col(1 + n + i) = mean - scale * s.matrix().col(i);
        }
        return pts;
}

// Unscented time update on the IT-1.5 mesh. The covariance is refactorized
// by Cholesky at every substep; loss of positive definiteness stops the run.
inline FilterResult<GaussianBelief> ukf_time_update(const SdeModel& model, const GaussianBelief& belief,
                                                    const double t_prev, const double delta, const std::size_t m,
                                                    const UtWeights& weights)
{
        const double tau = filter_detail::substep_size(delta, m);
        const Eigen::Index n = model.dim();
        const Eigen::Index count = 2 * n + 1;
        const filter_detail::NoiseTerms noise(model);

        Vector x = belief.mean;
        Matrix p = belief.cov;
        Matrix propagated(n, count);
        std::size_t l = 0;
        try
        {
                for (; l < m; ++l)
                {
                        const double t = t_prev + static_cast<double>(l) * tau;
                        const auto s = cholesky_lower(p);
                        if (!s)
                        {
                                return unexpected(FilterDivergence{
                                        .cause = FilterDivergence::Cause::CholeskyFailure, .substep = l});
                        }
                        const Matrix pts = sigma_points(x, *s);
                        for (Eigen::Index i = 0; i < count; ++i)
                        {
                                propagated.col(i) = it15_drift_with_gram(model, t, pts.col(i), tau, noise.gram);
                        }
                        const Vector next = propagated * weights.w_mean;

                        const It15NoiseBlocks blocks = it15_noise_blocks_with_gtilde(model, t, x, tau, noise.gt);
                        const Matrix next_cov =
                                propagated * weights.w_matrix * propagated.transpose() + blocks.covariance();

                        // No finiteness check here: a covariance that blew up is
                        // caught by the factorization at the start of the next
                        // substep (or of the measurement update).
                        p = symmetrized(next_cov);
                        x = next;
                }
        }
        catch (const ModelEvalError& e)
        {
                return unexpected(divergence_from(e, l));
        }
        return GaussianBelief{.mean = std::move(x), .cov = std::move(p)};
}

inline FilterResult<GaussianBelief> ukf_time_update(const SdeModel& model, const GaussianBelief& belief,
                                                    const double t_prev, const double delta, const std::size_t m)
{
        return ukf_time_update(model, belief, t_prev, delta, m, ut_weights(model.dim()));
}

// Unscented measurement update:
//   Pzz = Z W Z^T + R,  Pxz = X W Z^T,  K = Pxz Pzz^{-1},
//   x <- x + K (z - z_hat),  P <- P - K Pzz K^T
inline FilterResult<GaussianBelief> ukf_measurement_update(const MeasurementModel& measurement,
                                                           const GaussianBelief& predicted, const Vector& z,
                                                           const UtWeights& weights)
{
        const Eigen::Index n = predicted.mean.size();
        const Eigen::Index count = 2 * n + 1;

        const auto s = cholesky_lower(predicted.cov);
        if (!s)
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::CholeskyFailure});
        }
        const Matrix pts = sigma_points(predicted.mean, *s);
        Matrix zpts(measurement.dim(), count);
        for (Eigen::Index i = 0; i < count; ++i)
        {
                zpts.col(i) = measurement.measure(pts.col(i));
        }
        const Vector z_hat = zpts * weights.w_mean;
        const Matrix wz = weights.w_matrix * zpts.transpose();
        const Matrix pzz = zpts * wz + measurement.noise_cov();
        const Matrix pxz = pts * wz;

        const auto pzz_inv = filter_detail::spd_inverse(pzz);
        if (!pzz_inv)
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }
        const Matrix gain = pxz * *pzz_inv;

        Vector mean = predicted.mean + gain * (z - z_hat);
        auto cov = filter_detail::checked_symmetric(predicted.cov - gain * pzz * gain.transpose(), std::nullopt);
        if (!cov || !mean.allFinite())
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }
        return GaussianBelief{.mean = std::move(mean), .cov = std::move(cov).value()};
}

inline FilterResult<GaussianBelief> ukf_measurement_update(const MeasurementModel& measurement,
                                                           const GaussianBelief& predicted, const Vector& z)
{
        return ukf_measurement_update(measurement, predicted, z, ut_weights(predicted.mean.size()));
}
}
