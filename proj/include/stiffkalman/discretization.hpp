#pragma once

#include "expected.hpp"
#include "matkernels.hpp"
#include "random.hpp"
#include "sde_model.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace stiffkalman
{
// x + tau F(t, x) + G dw, with dw ~ N(0, tau Q) drawn by the caller.
inline Vector euler_step(const SdeModel& model, const double t, const Vector& x, const double tau,
                         const Vector& noise_increment)
{
        return x + tau * model.drift(t, x) + model.diffusion() * noise_increment;
}

// Deterministic part of the order-1.5 Ito-Taylor map:
//   F_d(t, x) = x + tau F(t, x) + tau^2 / 2 L_0 F(t, x)
inline Vector it15_drift_with_gram(const SdeModel& model, const double t, const Vector& x, const double tau,
                                   const Matrix& gram)
{
        const Vector f = model.drift(t, x);
        const Vector l0 = model.drift_time_derivative(t, x) + model.drift_jacobian(t, x) * f
                          + model.hessian_contract(t, x, gram);
        return x + tau * f + (0.5 * tau * tau) * l0;
}

inline Vector it15_drift(const SdeModel& model, const double t, const Vector& x, const double tau)
{
        const Matrix gt = gtilde(model);
        return it15_drift_with_gram(model, t, x, tau, gt * gt.transpose());
}

struct It15Noise final
{
        Vector w1;
        Vector w2;
};

// w1 = sqrt(tau) nu1,  w2 = tau^{3/2} (nu1 + nu2 / sqrt(3)) / 2
// so that Var w1 = tau I, Cov(w1, w2) = tau^2 / 2 I, Var w2 = tau^3 / 3 I.
inline It15Noise sample_it15_noise(const double tau, const Eigen::Index q, Rng& rng)
{
        if (tau < 0)
        {
                throw std::invalid_argument("step size must be non-negative");
        }
        const Vector nu1 = standard_normal(rng, q);
        const Vector nu2 = standard_normal(rng, q);
        return {.w1 = std::sqrt(tau) * nu1, .w2 = (tau * std::sqrt(tau) / 2) * (nu1 + nu2 / std::sqrt(3.0))};
}

// Square-root factors of the one-step IT-1.5 process noise
//   Gt w1 + LF w2.
// With F_half = tau/2 LF,
//   block_a = sqrt(tau) (Gt + F_half),  block_b = sqrt(tau/3) F_half,
// and block_a block_a^T + block_b block_b^T equals
//   tau Gt Gt^T + tau^2/2 (Gt LF^T + LF Gt^T) + tau^3/3 LF LF^T.
struct It15NoiseBlocks final
{
        Matrix f_half;
        Matrix block_a;
        Matrix block_b;

        [[nodiscard]] Matrix covariance() const
        {
                return block_a * block_a.transpose() + block_b * block_b.transpose();
        }
};

inline It15NoiseBlocks it15_noise_blocks_with_gtilde(const SdeModel& model, const double t, const Vector& x,
                                                     const double tau, const Matrix& gt)
{
        Matrix f_half = (tau / 2) * ito_lf(model, t, x, gt);
        Matrix a = std::sqrt(tau) * (gt + f_half);
        Matrix b = std::sqrt(tau / 3) * f_half;
        return {.f_half = std::move(f_half), .block_a = std::move(a), .block_b = std::move(b)};
}

inline It15NoiseBlocks it15_noise_blocks(const SdeModel& model, const double t, const Vector& x,
                                         const double tau)
{
        return it15_noise_blocks_with_gtilde(model, t, x, tau, gtilde(model));
}

// Closed form of the one-step IT-1.5 noise covariance, for checking the blocks.
inline Matrix it15_noise_covariance(const Matrix& gt, const Matrix& lf, const double tau)
{
        return tau * gt * gt.transpose() + (tau * tau / 2) * (gt * lf.transpose() + lf * gt.transpose())
               + (tau * tau * tau / 3) * lf * lf.transpose();
}

// K = [(t_end - t0) / delta], the integer part, with instants t_k = t0 + k delta.
inline std::vector<double> sampling_instants(const double t0, const double t_end, const double delta)
{
        if (!(delta > 0))
        {
                throw std::invalid_argument("sampling interval must be positive");
        }
        const auto k_count = static_cast<std::size_t>(std::floor((t_end - t0) / delta + 1e-9));
        std::vector<double> times;
        times.reserve(k_count);
        for (std::size_t k = 1; k <= k_count; ++k)
        {
                times.push_back(t0 + static_cast<double>(k) * delta);
        }
        return times;
}

struct Trajectory final
{
        std::vector<double> times;
        std::vector<Vector> states;
};

// Number of Euler steps in an interval of the given length: the requested
// step is rounded so that interval endpoints are hit exactly.
inline std::size_t substep_count(const double interval, const double step)
{
        if (!(step > 0))
        {
                throw std::invalid_argument("step must be positive");
        }
        const double c = std::round(interval / step);
        return c < 1 ? 1 : static_cast<std::size_t>(c);
}

// Euler-Maruyama path through the given sampling instants. Each interval
// [t_{k-1}, t_k] is split into substeps[k] equal steps and noise(step_size)
// returns the Brownian increment of one step.
template <typename NoiseSource>
Expected<Trajectory, ModelEvalError> simulate_path(const SdeModel& model, Vector x0,
                                                   const std::vector<double>& sampling_times,
                                                   const std::vector<std::size_t>& substeps, NoiseSource&& noise)
{
        if (substeps.size() != sampling_times.size())
        {
                throw std::invalid_argument("one substep count per sampling interval is required");
        }
        Trajectory traj;
        traj.times = sampling_times;
        traj.states.reserve(sampling_times.size());

        Vector x = std::move(x0);
        double t_prev = model.t_start();
        try
        {
                for (std::size_t k = 0; k < sampling_times.size(); ++k)
                {
                        const double t_next = sampling_times[k];
                        if (!(t_next > t_prev))
                        {
                                throw std::invalid_argument("sampling times must be strictly increasing");
                        }
                        const std::size_t count = substeps[k];
                        const double h = (t_next - t_prev) / static_cast<double>(count);
                        for (std::size_t s = 0; s < count; ++s)
                        {
                                const double t = t_prev + static_cast<double>(s) * h;
                                x = euler_step(model, t, x, h, noise(h));
                        }
                        require_finite_state(t_next, x);
                        traj.states.push_back(x);
                        t_prev = t_next;
                }
        }
        catch (const ModelEvalError& e)
        {
                return unexpected(e);
        }
        return traj;
}

// Reference solution by Euler-Maruyama with (approximately) the step h_truth.
inline Expected<Trajectory, ModelEvalError> simulate_truth(const SdeModel& model, Vector x0, const double h_truth,
                                                           const std::vector<double>& sampling_times, Rng& rng)
{
        std::vector<std::size_t> substeps;
        substeps.reserve(sampling_times.size());
        double t_prev = model.t_start();
        for (const double t : sampling_times)
        {
                substeps.push_back(substep_count(t - t_prev, h_truth));
                t_prev = t;
        }

        const Matrix& q_sqrt = model.noise_sqrt().matrix();
        const Eigen::Index q = model.noise_dim();
        return simulate_path(model, std::move(x0), sampling_times, substeps,
                             [&](const double h) -> Vector
                             {
                                     return std::sqrt(h) * (q_sqrt * standard_normal(rng, q));
                             });
}

// z_k = h(x_ref(t_k)) + R^{1/2} nu_k for every recorded instant.
inline std::vector<Vector> generate_measurements(const MeasurementModel& measurement, const Trajectory& trajectory,
                                                 Rng& rng)
{
        std::vector<Vector> z;
        z.reserve(trajectory.states.size());
        const Matrix& r_sqrt = measurement.noise_sqrt().matrix();
        for (const Vector& x : trajectory.states)
        {
                z.push_back(measurement.measure(x) + r_sqrt * standard_normal(rng, measurement.dim()));
        }
        return z;
}
}
