#pragma once

#include "ckf.hpp"
#include "ekf.hpp"
#include "filter_types.hpp"
#include "ukf.hpp"

#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stiffkalman
{
enum class FilterKind
{
        EKF,
        CKF,
        UKF
};

inline constexpr std::array<FilterKind, 3> ALL_FILTERS{FilterKind::EKF, FilterKind::CKF, FilterKind::UKF};

inline std::string_view to_string(const FilterKind k)
{
        switch (k)
        {
        case FilterKind::EKF:
                return "EKF";
        case FilterKind::CKF:
                return "CKF";
        case FilterKind::UKF:
                return "UKF";
        }
        return "?";
}

// Case-insensitive.
inline std::optional<FilterKind> parse_filter_kind(std::string_view s)
{
        std::string upper(s);
        for (char& c : upper)
        {
                c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        for (const FilterKind k : ALL_FILTERS)
        {
                if (upper == to_string(k))
                {
                        return k;
                }
        }
        return std::nullopt;
}

struct FilterRun final
{
        // Filtered beliefs at t_1 .. t_j, where j is the last completed instant.
        std::vector<GaussianBelief> estimates;
        std::optional<FilterDivergence> divergence;

        [[nodiscard]] bool completed() const noexcept
        {
                return !divergence.has_value();
        }
};

namespace run_detail
{
template <typename Belief, typename TimeUpdate, typename MeasurementUpdate, typename ToGaussian>
FilterRun run_loop(Belief belief, const std::vector<Vector>& measurements, const double t0, const double delta,
                   TimeUpdate&& time_update, MeasurementUpdate&& measurement_update, ToGaussian&& to_gaussian)
{
        FilterRun run;
        run.estimates.reserve(measurements.size());
        for (std::size_t k = 1; k <= measurements.size(); ++k)
        {
                const double t_prev = t0 + static_cast<double>(k - 1) * delta;
                auto predicted = time_update(belief, t_prev);
                if (!predicted)
                {
                        run.divergence = predicted.error();
                        run.divergence->sample_index = k;
                        return run;
                }
                auto filtered = measurement_update(*predicted, measurements[k - 1]);
                if (!filtered)
                {
                        run.divergence = filtered.error();
                        run.divergence->sample_index = k;
                        return run;
                }
                belief = std::move(filtered).value();
                run.estimates.push_back(to_gaussian(belief));
        }
        return run;
}
}

// Runs the chosen filter over z_1 .. z_K taken at t_k = t_start + k delta,
// with m substeps per sampling interval. Divergence ends the run and is
// reported together with the estimates produced before it.
inline FilterRun run_filter(const FilterKind kind, const SdeModel& model, const MeasurementModel& measurement,
                            const std::vector<Vector>& measurements, const double delta, const std::size_t m,
                            const GaussianBelief& init)
{
        if (!(delta > 0) || m < 1)
        {
                throw std::invalid_argument("run_filter needs delta > 0 and m >= 1");
        }
        const double t0 = model.t_start();

        switch (kind)
        {
        case FilterKind::EKF:
                return run_detail::run_loop(
                        init, measurements, t0, delta,
                        [&](const GaussianBelief& b, const double t)
                        {
                                return ekf_time_update(model, b, t, delta, m);
                        },
                        [&](const GaussianBelief& b, const Vector& z)
                        {
                                return ekf_measurement_update(measurement, b, z);
                        },
                        [](const GaussianBelief& b)
                        {
                                return b;
                        });
        case FilterKind::CKF:
        {
                const auto s0 = cholesky_lower(init.cov);
                if (!s0)
                {
                        FilterRun run;
                        run.divergence = FilterDivergence{.cause = FilterDivergence::Cause::CholeskyFailure};
                        return run;
                }
                return run_detail::run_loop(
                        SqrtBelief{.mean = init.mean, .cov_sqrt = *s0}, measurements, t0, delta,
                        [&](const SqrtBelief& b, const double t)
                        {
                                return ckf_time_update(model, b, t, delta, m);
                        },
                        [&](const SqrtBelief& b, const Vector& z)
                        {
                                return ckf_measurement_update(measurement, b, z);
                        },
                        [](const SqrtBelief& b)
                        {
                                return b.to_gaussian();
                        });
        }
        case FilterKind::UKF:
        {
                const UtWeights weights = ut_weights(model.dim());
                return run_detail::run_loop(
                        init, measurements, t0, delta,
                        [&](const GaussianBelief& b, const double t)
                        {
                                return ukf_time_update(model, b, t, delta, m, weights);
                        },
                        [&](const GaussianBelief& b, const Vector& z)
                        {
                                return ukf_measurement_update(measurement, b, z, weights);
                        },
                        [](const GaussianBelief& b)
                        {
                                return b;
                        });
        }
        }
        throw std::invalid_argument("unknown filter kind");
}

inline GaussianBelief initial_belief(const SdeModel& model)
{
        return {.mean = model.initial_mean(), .cov = model.initial_cov_sqrt().gram()};
}
}
