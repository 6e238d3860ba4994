#pragma once

#include "filter_types.hpp"
#include "matkernels.hpp"
#include "sde_model.hpp"

#include <cstddef>
#include <optional>

namespace stiffkalman
{
// Extended Kalman filter time update on the Euler-Maruyama mesh with m steps
// of size tau = delta / m:
//   M = I + tau dF/dx(t, x),  x <- x + tau F(t, x),  P <- M P M^T + tau G Q G^T
inline FilterResult<GaussianBelief> ekf_time_update(const SdeModel& model, const GaussianBelief& belief,
                                                    const double t_prev, const double delta, const std::size_t m)
{
        const double tau = filter_detail::substep_size(delta, m);
        const Eigen::Index n = model.dim();
        const filter_detail::NoiseTerms noise(model);
        const Matrix process_cov = tau * noise.gram;
        const Matrix identity = Matrix::Identity(n, n);

        Vector x = belief.mean;
        Matrix p = belief.cov;
        Matrix mp(n, n);
        std::size_t l = 0;
        try
        {
                for (; l < m; ++l)
                {
                        const double t = t_prev + static_cast<double>(l) * tau;
                        const Matrix step = identity + tau * model.drift_jacobian(t, x);
                        x += tau * model.drift(t, x);
                        mp.noalias() = step * p;
                        p.noalias() = mp * step.transpose();
                        p += process_cov;
                        if (!p.allFinite())
                        {
                                return unexpected(
                                        FilterDivergence{.cause = FilterDivergence::Cause::NonFinite, .substep = l});
                        }
                }
                require_finite_state(t_prev + delta, x);
        }
        catch (const ModelEvalError& e)
        {
                return unexpected(divergence_from(e, l < m ? std::optional(l) : std::optional<std::size_t>(m - 1)));
        }
        return GaussianBelief{.mean = std::move(x), .cov = symmetrized(p)};
}

inline FilterResult<GaussianBelief> ekf_measurement_update(const MeasurementModel& measurement,
                                                           const GaussianBelief& predicted, const Vector& z)
{
        const Matrix h = measurement.jacobian(predicted.mean);
        const Matrix ph_t = predicted.cov * h.transpose();
        const Matrix re = measurement.noise_cov() + h * ph_t;

        const auto re_inv = filter_detail::spd_inverse(re);
        if (!re_inv)
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }
        const Matrix gain = ph_t * *re_inv;

        GaussianBelief out;
        out.mean = predicted.mean + gain * (z - measurement.measure(predicted.mean));
        auto cov = filter_detail::checked_symmetric(predicted.cov - gain * h * predicted.cov, std::nullopt);
        if (!cov || !out.mean.allFinite())
        {
                return unexpected(FilterDivergence{.cause = FilterDivergence::Cause::NonFinite});
        }
        out.cov = std::move(cov).value();
        return out;
}
}
