#pragma once

#include "bench.hpp"
#include "expected.hpp"
#include "report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stiffkalman::cli
{
inline constexpr int EXIT_OK = 0;
inline constexpr int EXIT_USAGE = 1;
inline constexpr int EXIT_IO = 2;
inline constexpr int EXIT_VERIFY = 3;

enum class Subcommand
{
        Run,
        Verify,
        ListModels
};

struct CliInvocation final
{
        Subcommand command = Subcommand::Run;
        ExperimentConfig config;
        std::optional<Preset> preset;
        std::string out;
        OutputFormat format = OutputFormat::Csv;
        bool timing = false;
        bool quick = false;
        double sabotage_ut_weight = 0;
};

// A parse that did not produce an invocation: help text (exit 0) or a usage
// error (exit 1), with the text to print.
struct ParseStop final
{
        int exit_code;
        std::string message;
};

namespace detail
{
inline std::optional<Preset> parse_preset(const std::string& s)
{
        if (s == "desk")
        {
                return Preset::Desk;
        }
        if (s == "paper")
        {
                return Preset::Paper;
        }
        return std::nullopt;
}

inline ParseStop usage(const CLI::App& app, const std::string& message)
{
        return {EXIT_USAGE, "error: " + message + "\n\n" + app.help()};
}
}

inline Expected<CliInvocation, ParseStop> parse_args(const std::vector<std::string>& args)
{
        CLI::App app{"Continuous-discrete EKF / CKF / UKF benchmark on stiff SDE models", "stiffkalman"};
        app.require_subcommand(1);

        std::string model_name = "vdp";
        std::optional<double> lambda;
        std::vector<double> deltas;
        std::optional<std::size_t> substeps;
        std::optional<double> truth_step;
        std::optional<std::size_t> mc_runs;
        std::optional<std::uint64_t> seed;
        std::vector<std::string> filter_names;
        std::string preset_name;
        std::string config_path;
        std::string format_name = "csv";
        std::optional<bool> sample_truth_x0;
        CliInvocation inv;

        CLI::App* run = app.add_subcommand("run", "Run a Monte Carlo ARMSE experiment");
        run->add_option("--model", model_name, "van_der_pol (vdp), artificial, linear_oracle (linear)")
                ->capture_default_str();
        run->add_option("--lambda", lambda, "Stiffness parameter (default 10)");
        run->add_option("--delta", deltas, "Sampling intervals, repeatable or comma separated")->delimiter(',');
        run->add_option("--substeps", substeps, "Filter substeps m per sampling interval");
        run->add_option("--truth-step", truth_step, "Euler-Maruyama step of the reference solution");
        run->add_option("--mc-runs", mc_runs, "Monte Carlo runs");
        run->add_option("--seed", seed, "Base seed");
        run->add_option("--filters", filter_names, "Subset of EKF,CKF,UKF")->delimiter(',');
        run->add_option("--preset", preset_name, "desk (default) or paper");
        run->add_option("--config", config_path, "JSON experiment config; explicit flags override it");
        run->add_option("--out", inv.out, "Output table path (a .gp plot script is written next to it)")
                ->required();
        run->add_option("--format", format_name, "csv or json")->capture_default_str();
        run->add_flag("--timing", inv.timing, "Record per-row wall time");
        run->add_option("--sample-truth-x0", sample_truth_x0, "Draw the truth initial state from the prior (true/false)");

        CLI::App* verify = app.add_subcommand("verify", "Run the built-in numerical self-checks");
        verify->add_flag("--quick", inv.quick, "Reduced sample counts");
        verify->add_option("--sabotage-ut-weight", inv.sabotage_ut_weight)->group("");

        app.add_subcommand("list-models", "List the available models");

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try
        {
                app.parse(reversed);
        }
        catch (const CLI::CallForHelp&)
        {
                return unexpected(ParseStop{EXIT_OK, app.help()});
        }
        catch (const CLI::CallForAllHelp&)
        {
                return unexpected(ParseStop{EXIT_OK, app.help("", CLI::AppFormatMode::All)});
        }
        catch (const CLI::ParseError& e)
        {
                return unexpected(detail::usage(app, e.what()));
        }

        if (verify->parsed())
        {
                inv.command = Subcommand::Verify;
                return inv;
        }
        if (!run->parsed())
        {
                inv.command = Subcommand::ListModels;
                return inv;
        }
        inv.command = Subcommand::Run;

        const auto model = parse_model_id(model_name);
        if (!model)
        {
                return unexpected(detail::usage(app, "unknown model '" + model_name + "'"));
        }
        const auto format = parse_output_format(format_name);
        if (!format)
        {
                return unexpected(detail::usage(app, "unknown format '" + format_name + "'"));
        }
        inv.format = *format;
        if (!preset_name.empty() && !config_path.empty())
        {
                return unexpected(detail::usage(app, "--preset and --config are mutually exclusive"));
        }

        try
        {
                const double lam = lambda.value_or(10.0);
                if (!config_path.empty())
                {
                        std::ifstream f(config_path);
                        if (!f)
                        {
                                return unexpected(detail::usage(app, "cannot read config '" + config_path + "'"));
                        }
                        nlohmann::json j;
                        try
                        {
                                j = nlohmann::json::parse(f);
                        }
                        catch (const nlohmann::json::exception& e)
                        {
                                return unexpected(detail::usage(app, "config '" + config_path + "': " + e.what()));
                        }
                        inv.config = config_from_json(j);
                        if (run->count("--model") > 0)
                        {
                                inv.config.model = *model;
                        }
                        if (lambda)
                        {
                                inv.config.lambda = *lambda;
                        }
                }
                else
                {
                        std::optional<Preset> preset = Preset::Desk;
                        if (!preset_name.empty())
                        {
                                preset = detail::parse_preset(preset_name);
                                if (!preset)
                                {
                                        return unexpected(detail::usage(app, "unknown preset '" + preset_name + "'"));
                                }
                        }
                        inv.preset = preset;
                        inv.config = make_config(*preset, *model, lam, seed.value_or(1));
                }

                if (!deltas.empty())
                {
                        inv.config.deltas = deltas;
                }
                if (substeps)
                {
                        inv.config.substeps = *substeps;
                }
                if (truth_step)
                {
                        inv.config.truth_step = *truth_step;
                }
                if (mc_runs)
                {
                        inv.config.mc_runs = *mc_runs;
                }
                if (seed)
                {
                        inv.config.base_seed = *seed;
                }
                if (sample_truth_x0)
                {
                        inv.config.sample_truth_x0 = *sample_truth_x0;
                }
                if (!filter_names.empty())
                {
                        inv.config.filters.clear();
                        for (const std::string& name : filter_names)
                        {
                                const auto k = parse_filter_kind(name);
                                if (!k)
                                {
                                        return unexpected(detail::usage(app, "unknown filter '" + name + "'"));
                                }
                                if (std::find(inv.config.filters.begin(), inv.config.filters.end(), *k)
                                    != inv.config.filters.end())
                                {
                                        return unexpected(detail::usage(app, "filter '" + name + "' given twice"));
                                }
                                inv.config.filters.push_back(*k);
                        }
                }
                validate(inv.config);
        }
        catch (const std::invalid_argument& e)
        {
                return unexpected(detail::usage(app, e.what()));
        }
        return inv;
}

inline Expected<CliInvocation, ParseStop> parse_args(const int argc, const char* const* argv)
{
        std::vector<std::string> args;
        for (int i = 1; i < argc; ++i)
        {
                args.emplace_back(argv[i]);
        }
        return parse_args(args);
}
}
