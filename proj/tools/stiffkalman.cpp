#include <stiffkalman/bench.hpp>
#include <stiffkalman/cli.hpp>
#include <stiffkalman/report.hpp>
#include <stiffkalman/selfcheck.hpp>

#include <exception>
#include <iostream>

namespace
{
using namespace stiffkalman;

int list_models()
{
        std::cout << "van_der_pol    (alias vdp)     n=2  Van der Pol oscillator, x1 measured, lambda sets stiffness\n"
                  << "artificial                     n=3  x2 measured, x3 unobservable and growing, lambda sets stiffness\n"
                  << "linear_oracle  (alias linear)  n=2  damped linear oscillator, all filters agree up to discretization\n";
        return cli::EXIT_OK;
}

int verify(const cli::CliInvocation& inv)
{
        const selfcheck::Options opt{.quick = inv.quick, .ut_weight_perturbation = inv.sabotage_ut_weight};
        for (const auto& check : selfcheck::all_checks())
        {
                const selfcheck::CheckResult r = check(opt);
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
                if (!r.passed)
                {
                        std::cerr << "verification failed: " << r.name << '\n';
                        return cli::EXIT_VERIFY;
                }
        }
        return cli::EXIT_OK;
}

int run(const cli::CliInvocation& inv)
{
        const ArmseReport report = run_experiment(inv.config);
        const auto emitted = emit_report(report, inv.format, inv.out, inv.timing);
        if (!emitted)
        {
                std::cerr << "error: " << emitted.error().path << ": " << emitted.error().message << '\n';
                return cli::EXIT_IO;
        }
        for (const ReportRow& r : report.rows)
        {
                std::cerr << r.model << " lambda=" << r.lambda << " delta=" << r.delta << ' ' << to_string(r.filter)
                          << ": ";
                if (r.armse)
                {
                        std::cerr << "ARMSE " << *r.armse << '\n';
                }
                else
                {
                        std::cerr << "diverged in " << r.divergence_count << " run(s), first "
                                  << to_string(r.failures.front().divergence.cause)
                                  << (r.failures.front().in_truth ? " (reference)" : "") << '\n';
                }
        }
        std::cerr << "wrote " << emitted->data.string() << " and " << emitted->plot.string() << '\n';
        return cli::EXIT_OK;
}
}

int main(const int argc, char** argv)
{
        const auto parsed = cli::parse_args(argc, argv);
        if (!parsed)
        {
                (parsed.error().exit_code == cli::EXIT_OK ? std::cout : std::cerr) << parsed.error().message;
                return parsed.error().exit_code;
        }
        try
        {
                switch (parsed->command)
                {
                case cli::Subcommand::ListModels:
                        return list_models();
                case cli::Subcommand::Verify:
                        return verify(*parsed);
                case cli::Subcommand::Run:
                        return run(*parsed);
                }
        }
        catch (const std::exception& e)
        {
                std::cerr << "error: " << e.what() << '\n';
                return cli::EXIT_USAGE;
        }
        return cli::EXIT_USAGE;
}
