// Filters one simulated Van der Pol path with all three filters and prints
// the squared error of each estimate at the final sampling instant.

#include <stiffkalman/bench.hpp>

#include <iostream>

int main()
{
        using namespace stiffkalman;

        const ModelPair models = make_van_der_pol(10);
        const SdeModel& process = *models.process;
        const double delta = 0.2;
        const std::size_t substeps = 256;

        const auto times = sampling_instants(process.t_start(), process.t_end(), delta);
        Rng path_rng = make_stream(7, 0, Stream::TruthPath);
        const auto truth = simulate_truth(process, process.initial_mean(), 1e-4, times, path_rng);
        if (!truth)
        {
                std::cerr << "reference simulation failed: " << truth.error().what() << '\n';
                return 1;
        }
        Rng noise_rng = make_stream(7, 0, Stream::MeasurementNoise);
        const auto z = generate_measurements(*models.measurement, *truth, noise_rng);

        for (const FilterKind kind : ALL_FILTERS)
        {
                const FilterRun run = run_filter(kind, process, *models.measurement, z, delta, substeps,
                                                 initial_belief(process));
                if (!run.completed())
                {
                        std::cout << to_string(kind) << ": diverged (" << to_string(run.divergence->cause) << ")\n";
                        continue;
                }
                const Vector err = run.estimates.back().mean - truth->states.back();
                std::cout << to_string(kind) << ": x(2) = " << run.estimates.back().mean.transpose()
                          << ", squared error " << err.squaredNorm() << '\n';
        }
        return 0;
}
