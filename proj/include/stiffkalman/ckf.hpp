#pragma once

#include "discretization.hpp"
#include "filter_types.hpp"
#include "matkernels.hpp"
#include "sde_model.hpp"

#include <cmath>
#include <cstddef>
#include <optional>

namespace stiffkalman
{
// Third-degree spherical-radial rule: columns sqrt(n) e_i and -sqrt(n) e_i.
inline Matrix cubature_nodes(const Eigen::Index n)
{
        if (n < 1)
        {
                throw std::invalid_argument("cubature rule needs n >= 1");
        }
        const double r = std::sqrt(static_cast<double>(n));
        Matrix xi = Matrix::Zero(n, 2 * n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
                xi(i, i) = r;
                xi(i, n + i) = -r;
        }
        return xi;
}

namespace ckf_detail
{
// Columns S xi_i + x
inline Matrix cubature_points(const Vector& mean, const LowerTriangular& s, const Matrix& nodes)
{
        Matrix pts = s.matrix() * nodes;
        pts.colwise() += mean;
        return pts;
}
}

// Square-root cubature time update on the IT-1.5 mesh. Each substep maps the
// cubature points through F_d, takes their average as the new mean and
// lower-triangularizes [Ycentered | sqrt(tau)(Gt + Fh) | sqrt(tau/3) Fh].
inline FilterResult<SqrtBelief> ckf_time_update(const SdeModel& model, const SqrtBelief& belief,
                                                const double t_prev, const double delta, const std::size_t m)
{
        const double tau = filter_detail::substep_size(delta, m);
        const Eigen::Index n = model.dim();
        const Eigen::Index q = model.noise_dim();
        const Eigen::Index count = 2 * n;
        const filter_detail::NoiseTerms noise(model);
        const Matrix nodes = cubature_nodes(n);
        const double centered_scale = 1 / std::sqrt(static_cast<double>(count));

        Vector x = belief.mean;
        LowerTriangular s = belief.cov_sqrt;
        Matrix propagated(n, count);
        Matrix pre(n, count + 2 * q);
        std::size_t l = 0;
        try
        {
                for (; l < m; ++l)
                {
                        const double t = t_prev + static_cast<double>(l) * tau;
                        const Matrix pts = ckf_detail::cubature_points(x, s, nodes);
                        for (Eigen::Index i = 0; i < count; ++i)
                        {
                                propagated.col(i) = it15_drift_with_gram(model, t, pts.col(i), tau, noise.gram);
                        }
                        const Vector next = propagated.rowwise().mean();

                        const It15NoiseBlocks blocks = it15_noise_blocks_with_gtilde(model, t, x, tau, noise.gt);

                        pre.leftCols(count) = (propagated.colwise() - next) * centered_scale;
                        pre.middleCols(count, q) = blocks.block_a;
                        pre.rightCols(q) = blocks.block_b;
                        if (!pre.allFinite())
                        {
                                return unexpected(
                                        FilterDivergence{.cause = FilterDivergence::Cause::NonFinite, .substep = l});
                        }
                        s = triangularize(pre);
                        x = next;
                }
        }
        catch (const ModelEvalError& e)
        {
                return unexpected(divergence_from(e, l));
        }
        return SqrtBelief{.mean = std::move(x), .cov_sqrt = std::move(s)};
}

// Square-root cubature measurement update through the block pre-array
//   [ Zc  R^{1/2} ]        [ Re^{1/2}  0        ]
//   [ Xc  0       ]  -->   [ Pxz       P^{1/2}  ]
inline FilterResult<SqrtBelief> ckf_measurement_update(const MeasurementModel& measurement,
                                                       const SqrtBelief& predicted, const Vector& z)
{
        const Eigen::Index n = predicted.mean.size();
        const Eigen::Index mdim = measurement.dim();
        const Eigen::Index count = 2 * n;
        const double centered_scale = 1 / std::sqrt(static_cast<double>(count));

        const Matrix pts = ckf_detail::cubature_points(predicted.mean, predicted.cov_sqrt, cubature_nodes(n));
        Matrix zpts(mdim, count);
        for (Eigen::Index i = 0; i < count; ++i)
        {
                zpts.col(i) = measurement.measure(pts.col(i));
        }
        const Vector z_hat = zpts.rowwise().mean();

        Matrix top = Matrix::Zero(mdim, count + mdim);
        Matrix bottom = Matrix::Zero(n, count + mdim);
        top.leftCols(count) = (zpts.colwise() - z_hat) * centered_scale;
        top.rightCols(mdim) = measurement.noise_sqrt().matrix();
        bottom.leftCols(count) = (pts.colwise() - predicted.mean) * centered_scale;
        if (!top.allFinite() || !bottom.allFinite())
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }

        BlockTriangular post = block_triangularize(top, bottom);
        const auto gain = solve_triangular_right(post.cross, post.re_sqrt);
        if (!gain)
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }

        // Re = Re^{1/2} Re^{T/2} and Pxz = Pxz_bar Re^{T/2}, so the gain
        // Pxz Re^{-1} is Pxz_bar Re^{-1/2}.
        Vector mean = predicted.mean + *gain * (z - z_hat);
        if (!mean.allFinite() || !post.p_sqrt.matrix().allFinite())
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }
        return SqrtBelief{.mean = std::move(mean), .cov_sqrt = std::move(post.p_sqrt)};
}
}
