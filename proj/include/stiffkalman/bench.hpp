#pragma once

#include "discretization.hpp"
#include "expected.hpp"
#include "models.hpp"
#include "random.hpp"
#include "run_filter.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

namespace stiffkalman
{
enum class ModelId
{
        VanDerPol,
        Artificial,
        LinearOracle
};

inline std::string_view to_string(const ModelId id)
{
        switch (id)
        {
        case ModelId::VanDerPol:
                return "van_der_pol";
        case ModelId::Artificial:
                return "artificial";
        case ModelId::LinearOracle:
                return "linear_oracle";
        }
        return "?";
}

inline std::optional<ModelId> parse_model_id(const std::string_view s)
{
        if (s == "van_der_pol" || s == "vdp")
        {
                return ModelId::VanDerPol;
        }
        if (s == "artificial")
        {
                return ModelId::Artificial;
        }
        if (s == "linear_oracle" || s == "linear")
        {
                return ModelId::LinearOracle;
        }
        return std::nullopt;
}

inline ModelPair make_models(const ModelId id, const double lambda)
{
        switch (id)
        {
        case ModelId::VanDerPol:
                return make_van_der_pol(lambda);
        case ModelId::Artificial:
                return make_artificial(lambda);
        case ModelId::LinearOracle:
                return make_default_linear_oracle();
        }
        throw std::invalid_argument("unknown model");
}

enum class Preset
{
        Desk,
        Paper
};

struct PresetValues final
{
        std::size_t mc_runs;
        std::size_t substeps;
        double truth_step;
};

inline PresetValues preset_values(const Preset p)
{
        switch (p)
        {
        case Preset::Desk:
                return {.mc_runs = 50, .substeps = 1024, .truth_step = 1e-4};
        case Preset::Paper:
                return {.mc_runs = 100, .substeps = 200'000, .truth_step = 1e-5};
        }
        throw std::invalid_argument("unknown preset");
}

inline std::vector<double> default_delta_grid()
{
        return {0.2, 0.3, 0.4, 0.5, 0.6};
}

struct ExperimentConfig final
{
        ModelId model = ModelId::VanDerPol;
        double lambda = 10;
        std::vector<double> deltas = default_delta_grid();
        std::size_t substeps = 1024;
        double truth_step = 1e-4;
        std::size_t mc_runs = 50;
        std::uint64_t base_seed = 1;
        std::vector<FilterKind> filters{ALL_FILTERS.begin(), ALL_FILTERS.end()};
        // When false every run starts the truth at the prior mean.
        bool sample_truth_x0 = true;

        bool operator==(const ExperimentConfig&) const = default;
};

// Smallest power of two >= v.
inline std::size_t next_pow2(const double v)
{
        std::size_t p = 1;
        while (static_cast<double>(p) < v)
        {
                p *= 2;
        }
        return p;
}

// Explicit steps stay inside the stability region when lambda * step <= 0.1.
inline constexpr double STABLE_LAMBDA_STEP = 0.1;

// The desk preset tightens the truth step and raises m when lambda * step
// would exceed STABLE_LAMBDA_STEP; for lambda = 10 the plain desk values hold.
// The artificial model starts the truth at the prior mean: its third state is
// unobservable and grows like exp(25 t), so a sampled start drowns every
// filter difference in prior noise.
inline ExperimentConfig make_config(const Preset p, const ModelId model, const double lambda,
                                    const std::uint64_t seed)
{
        const PresetValues v = preset_values(p);
        ExperimentConfig c;
        c.model = model;
        c.lambda = lambda;
        c.substeps = v.substeps;
        c.truth_step = v.truth_step;
        c.mc_runs = v.mc_runs;
        c.base_seed = seed;
        c.sample_truth_x0 = model != ModelId::Artificial;
        if (p == Preset::Desk && model != ModelId::LinearOracle)
        {
                const double max_delta = *std::max_element(c.deltas.begin(), c.deltas.end());
                c.truth_step = std::min(c.truth_step, STABLE_LAMBDA_STEP / lambda);
                c.substeps = std::max(c.substeps, next_pow2(max_delta * lambda / STABLE_LAMBDA_STEP));
        }
        return c;
}

// Throws std::invalid_argument naming the offending field.
inline void validate(const ExperimentConfig& c)
{
        if (!(c.lambda > 0) || !std::isfinite(c.lambda))
        {
                throw std::invalid_argument("lambda must be positive");
        }
        if (c.deltas.empty())
        {
                throw std::invalid_argument("delta grid is empty");
        }
        const ModelPair models = make_models(c.model, c.lambda);
        const double span = models.process->t_end() - models.process->t_start();
        for (const double d : c.deltas)
        {
                if (!(d > 0) || d > span)
                {
                        throw std::invalid_argument("delta " + std::to_string(d) + " outside (0, "
                                                    + std::to_string(span) + "]");
                }
        }
        if (c.substeps < 1)
        {
                throw std::invalid_argument("substeps must be >= 1");
        }
        if (!(c.truth_step > 0))
        {
                throw std::invalid_argument("truth step must be positive");
        }
        if (c.mc_runs < 1)
        {
                throw std::invalid_argument("mc_runs must be >= 1");
        }
        if (c.filters.empty())
        {
                throw std::invalid_argument("no filters selected");
        }
}

struct DimensionMismatch final
{
        std::string what;
};

// ARMSE = sqrt( 1/(L K) sum_l sum_k sum_i (x_ref - x_hat)^2 ); the squared
// errors are summed over state components without dividing by n.
inline Expected<double, DimensionMismatch> armse(const std::vector<Trajectory>& reference,
                                                 const std::vector<std::vector<Vector>>& estimates)
{
        if (reference.size() != estimates.size() || reference.empty())
        {
                return unexpected(DimensionMismatch{"run counts differ or are zero"});
        }
        const std::size_t k_count = reference.front().states.size();
        if (k_count == 0)
        {
                return unexpected(DimensionMismatch{"no sampling instants"});
        }
        const Eigen::Index n = reference.front().states.front().size();

        double sum = 0;
        for (std::size_t l = 0; l < reference.size(); ++l)
        {
                const auto& ref = reference[l].states;
                const auto& est = estimates[l];
                if (ref.size() != k_count || est.size() != k_count)
                {
                        return unexpected(DimensionMismatch{"instant counts differ in run " + std::to_string(l)});
                }
                for (std::size_t k = 0; k < k_count; ++k)
                {
                        if (ref[k].size() != n || est[k].size() != n)
                        {
                                return unexpected(DimensionMismatch{"state sizes differ"});
                        }
                        sum += (ref[k] - est[k]).squaredNorm();
                }
        }
        return std::sqrt(sum / static_cast<double>(reference.size() * k_count));
}

struct FilterOutcome final
{
        FilterKind filter;
        FilterRun run;
        double seconds = 0;
};

struct DeltaRun final
{
        double delta;
        std::optional<ModelEvalError> truth_failure;
        Trajectory reference;
        std::vector<Vector> measurements;
        std::vector<FilterOutcome> filters;
};

struct SingleRun final
{
        std::size_t run_index;
        Vector truth_x0;
        std::vector<DeltaRun> deltas;
};

// One Monte Carlo run: truth x0 ~ N(x0_bar, P0), one truth path and one
// measurement sequence per delta, and every requested filter fed the same data.
inline SingleRun run_single(const ExperimentConfig& config, const ModelPair& models, const std::size_t r)
{
        if (r >= config.mc_runs)
        {
                throw std::out_of_range("run index exceeds mc_runs");
        }
        const SdeModel& process = *models.process;

        SingleRun out;
        out.run_index = r;
        {
                Rng rng = make_stream(config.base_seed, r, Stream::TruthInitialState);
                out.truth_x0 = process.initial_mean();
                if (config.sample_truth_x0)
                {
                        out.truth_x0 += process.initial_cov_sqrt().matrix() * standard_normal(rng, process.dim());
                }
        }

        const GaussianBelief init = initial_belief(process);
        for (const double delta : config.deltas)
        {
                DeltaRun dr{.delta = delta, .truth_failure = std::nullopt, .reference = {}, .measurements = {},
                            .filters = {}};
                const std::vector<double> times = sampling_instants(process.t_start(), process.t_end(), delta);

                Rng path_rng = make_stream(config.base_seed, r, Stream::TruthPath);
                auto truth = simulate_truth(process, out.truth_x0, config.truth_step, times, path_rng);
                if (!truth)
                {
                        dr.truth_failure = truth.error();
                        out.deltas.push_back(std::move(dr));
                        continue;
                }
                dr.reference = std::move(truth).value();

                Rng meas_rng = make_stream(config.base_seed, r, Stream::MeasurementNoise);
                dr.measurements = generate_measurements(*models.measurement, dr.reference, meas_rng);

                for (const FilterKind kind : config.filters)
                {
                        const auto start = std::chrono::steady_clock::now();
                        FilterRun fr = run_filter(kind, process, *models.measurement, dr.measurements, delta,
                                                  config.substeps, init);
                        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
                        dr.filters.push_back({.filter = kind, .run = std::move(fr), .seconds = elapsed.count()});
                }
                out.deltas.push_back(std::move(dr));
        }
        return out;
}

inline SingleRun run_single(const ExperimentConfig& config, const std::size_t r)
{
        return run_single(config, make_models(config.model, config.lambda), r);
}

struct RunFailure final
{
        std::size_t run;
        // True when the reference simulation itself failed.
        bool in_truth = false;
        FilterDivergence divergence;
};

struct ReportRow final
{
        std::string model;
        double lambda = 0;
        double delta = 0;
        FilterKind filter = FilterKind::EKF;
        std::optional<double> armse;
        std::size_t runs_completed = 0;
        std::size_t divergence_count = 0;
        double wall_time_s = 0;
        std::vector<RunFailure> failures;

        [[nodiscard]] bool completed() const noexcept
        {
                return armse.has_value();
        }
};

struct ArmseReport final
{
        ExperimentConfig config;
        std::vector<ReportRow> rows;

        [[nodiscard]] const ReportRow* find(const double delta, const FilterKind f) const
        {
                for (const ReportRow& r : rows)
                {
                        if (r.filter == f && std::abs(r.delta - delta) < 1e-12)
                        {
                                return &r;
                        }
                }
                return nullptr;
        }
};

inline constexpr std::string_view THREADS_ENV = "STIFFKALMAN_THREADS";

// STIFFKALMAN_THREADS caps the worker count; 0 or unset means hardware concurrency.
inline unsigned thread_count_from_env()
{
        unsigned requested = 0;
        if (const char* v = std::getenv(std::string(THREADS_ENV).c_str()))
        {
                try
                {
                        requested = static_cast<unsigned>(std::stoul(v));
                }
                catch (const std::exception&)
                {
                        requested = 0;
                }
        }
        if (requested == 0)
        {
                requested = std::max(1u, std::thread::hardware_concurrency());
        }
        return requested;
}

// Runs all Monte Carlo runs (possibly in parallel) and reduces them in run
// order, so the report does not depend on the thread count.
inline ArmseReport run_experiment(const ExperimentConfig& config, const unsigned threads)
{
        validate(config);
        const ModelPair models = make_models(config.model, config.lambda);

        std::vector<std::optional<SingleRun>> runs(config.mc_runs);
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;

        const auto worker = [&]
        {
                for (std::size_t r = next++; r < config.mc_runs; r = next++)
                {
                        try
                        {
                                runs[r] = run_single(config, models, r);
                        }
                        catch (...)
                        {
                                const std::lock_guard lock(failure_mutex);
                                if (!failure)
                                {
                                        failure = std::current_exception();
                                }
                        }
                }
        };

        const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(config.mc_runs)));
        if (workers == 1)
        {
                worker();
        }
        else
        {
                std::vector<std::thread> pool;
                pool.reserve(workers);
                for (unsigned i = 0; i < workers; ++i)
                {
                        pool.emplace_back(worker);
                }
                for (std::thread& t : pool)
                {
                        t.join();
                }
        }
        if (failure)
        {
                std::rethrow_exception(failure);
        }

        ArmseReport report;
        report.config = config;
        for (std::size_t d = 0; d < config.deltas.size(); ++d)
        {
                for (std::size_t f = 0; f < config.filters.size(); ++f)
                {
                        ReportRow row;
                        row.model = std::string(to_string(config.model));
                        row.lambda = config.lambda;
                        row.delta = config.deltas[d];
                        row.filter = config.filters[f];

                        std::vector<Trajectory> refs;
                        std::vector<std::vector<Vector>> ests;
                        for (const auto& run : runs)
                        {
                                const DeltaRun& dr = run->deltas[d];
                                if (dr.truth_failure)
                                {
                                        row.failures.push_back(
                                                {.run = run->run_index,
                                                 .in_truth = true,
                                                 .divergence = divergence_from(*dr.truth_failure, std::nullopt)});
                                        continue;
                                }
                                const FilterOutcome& fo = dr.filters[f];
                                row.wall_time_s += fo.seconds;
                                if (!fo.run.completed())
                                {
                                        row.failures.push_back(
                                                {.run = run->run_index, .in_truth = false, .divergence = *fo.run.divergence});
                                        continue;
                                }
                                ++row.runs_completed;
                                refs.push_back(dr.reference);
                                std::vector<Vector> means;
                                means.reserve(fo.run.estimates.size());
                                for (const GaussianBelief& b : fo.run.estimates)
                                {
                                        means.push_back(b.mean);
                                }
                                ests.push_back(std::move(means));
                        }
                        row.divergence_count = row.failures.size();
                        if (row.failures.empty())
                        {
                                const auto value = armse(refs, ests);
                                if (value)
                                {
                                        row.armse = *value;
                                }
                        }
                        report.rows.push_back(std::move(row));
                }
        }

        std::sort(report.rows.begin(), report.rows.end(),
                  [](const ReportRow& a, const ReportRow& b)
                  {
                          return std::tie(a.model, a.lambda, a.delta, a.filter)
                                 < std::tie(b.model, b.lambda, b.delta, b.filter);
                  });
        return report;
}

inline ArmseReport run_experiment(const ExperimentConfig& config)
{
        return run_experiment(config, thread_count_from_env());
}
}
