#pragma once

#include "bench.hpp"
#include "expected.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stiffkalman
{
enum class OutputFormat
{
        Csv,
        Json
};

inline std::optional<OutputFormat> parse_output_format(const std::string_view s)
{
        if (s == "csv")
        {
                return OutputFormat::Csv;
        }
        if (s == "json")
        {
                return OutputFormat::Json;
        }
        return std::nullopt;
}

// 17 significant digits: enough to round-trip any double.
inline std::string format_double(const double v)
{
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
}

inline constexpr std::string_view CSV_HEADER =
        "model,lambda,delta,filter,status,armse,runs_completed,divergence_count,wall_time_s";

// wall_time_s is left empty unless timing is requested, so that repeated
// invocations produce identical bytes.
inline std::string to_csv(const ArmseReport& report, const bool timing = false)
{
        std::ostringstream out;
        out << CSV_HEADER << '\n';
        for (const ReportRow& r : report.rows)
        {
                out << r.model << ',' << format_double(r.lambda) << ',' << format_double(r.delta) << ','
                    << to_string(r.filter) << ',' << (r.completed() ? "completed" : "diverged") << ','
                    << (r.armse ? format_double(*r.armse) : "") << ',' << r.runs_completed << ','
                    << r.divergence_count << ',' << (timing ? format_double(r.wall_time_s) : "") << '\n';
        }
        return out.str();
}

inline nlohmann::json config_to_json(const ExperimentConfig& c)
{
        nlohmann::json filters = nlohmann::json::array();
        for (const FilterKind f : c.filters)
        {
                filters.push_back(std::string(to_string(f)));
        }
        return {{"model", std::string(to_string(c.model))},
                {"lambda", c.lambda},
                {"deltas", c.deltas},
                {"substeps", c.substeps},
                {"truth_step", c.truth_step},
                {"mc_runs", c.mc_runs},
                {"base_seed", c.base_seed},
                {"filters", filters},
                {"sample_truth_x0", c.sample_truth_x0}};
}

// Missing fields keep the values already in `base`; unknown fields and
// malformed values throw std::invalid_argument.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {})
{
        if (!j.is_object())
        {
                throw std::invalid_argument("config must be a JSON object");
        }
        try
        {
                for (const auto& [key, value] : j.items())
                {
                        if (key == "model")
                        {
                                const auto id = parse_model_id(value.get<std::string>());
                                if (!id)
                                {
                                        throw std::invalid_argument("unknown model '" + value.get<std::string>() + "'");
                                }
                                base.model = *id;
                        }
                        else if (key == "lambda")
                        {
                                base.lambda = value.get<double>();
                        }
                        else if (key == "deltas")
                        {
                                base.deltas = value.get<std::vector<double>>();
                        }
                        else if (key == "substeps")
                        {
                                base.substeps = value.get<std::size_t>();
                        }
                        else if (key == "truth_step")
                        {
                                base.truth_step = value.get<double>();
                        }
                        else if (key == "mc_runs")
                        {
                                base.mc_runs = value.get<std::size_t>();
                        }
                        else if (key == "base_seed")
                        {
                                base.base_seed = value.get<std::uint64_t>();
                        }
                        else if (key == "filters")
                        {
                                base.filters.clear();
                                for (const auto& f : value)
                                {
                                        const auto k = parse_filter_kind(f.get<std::string>());
                                        if (!k)
                                        {
                                                throw std::invalid_argument("unknown filter '" + f.get<std::string>()
                                                                            + "'");
                                        }
                                        base.filters.push_back(*k);
                                }
                        }
                        else if (key == "sample_truth_x0")
                        {
                                base.sample_truth_x0 = value.get<bool>();
                        }
                        else
                        {
                                throw std::invalid_argument("unknown config field '" + key + "'");
                        }
                }
        }
        catch (const nlohmann::json::exception& e)
        {
                throw std::invalid_argument(std::string("malformed config: ") + e.what());
        }
        return base;
}

inline std::string to_json(const ArmseReport& report, const bool timing = false)
{
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const ReportRow& r : report.rows)
        {
                nlohmann::ordered_json failures = nlohmann::ordered_json::array();
                for (const RunFailure& f : r.failures)
                {
                        nlohmann::ordered_json entry{{"run", f.run},
                                                     {"in_truth", f.in_truth},
                                                     {"cause", std::string(to_string(f.divergence.cause))},
                                                     {"sample_index", f.divergence.sample_index}};
                        entry["substep"] = f.divergence.substep ? nlohmann::ordered_json(*f.divergence.substep)
                                                                : nlohmann::ordered_json(nullptr);
                        failures.push_back(std::move(entry));
                }
                nlohmann::ordered_json row{{"model", r.model},
                                           {"lambda", r.lambda},
                                           {"delta", r.delta},
                                           {"filter", std::string(to_string(r.filter))},
                                           {"status", r.completed() ? "completed" : "diverged"}};
                row["armse"] = r.armse ? nlohmann::ordered_json(*r.armse) : nlohmann::ordered_json(nullptr);
                row["runs_completed"] = r.runs_completed;
                row["divergence_count"] = r.divergence_count;
                row["wall_time_s"] = timing ? nlohmann::ordered_json(r.wall_time_s) : nlohmann::ordered_json(nullptr);
                row["failures"] = std::move(failures);
                rows.push_back(std::move(row));
        }
        nlohmann::ordered_json doc;
        doc["config"] = config_to_json(report.config);
        doc["rows"] = std::move(rows);
        return doc.dump(2) + "\n";
}

// True when the completed ARMSE values span more than two decades.
inline bool needs_log_scale(const ArmseReport& report)
{
        double lo = HUGE_VAL;
        double hi = 0;
        for (const ReportRow& r : report.rows)
        {
                if (r.armse && *r.armse > 0)
                {
                        lo = std::min(lo, *r.armse);
                        hi = std::max(hi, *r.armse);
                }
        }
        return hi > 0 && hi / lo > 100;
}

// gnuplot script drawing ARMSE against delta, one curve per filter. With CSV
// output the script reads the CSV next to it; with JSON output the values are
// embedded. Diverged cells are absent points.
inline std::string plot_script(const ArmseReport& report, const std::string& data_file, const OutputFormat format,
                               const std::string& image_file)
{
        std::ostringstream out;
        const ExperimentConfig& c = report.config;
        out << "set terminal pngcairo size 800,600\n";
        out << "set output '" << image_file << "'\n";
        out << "set title '" << to_string(c.model) << ", lambda = " << format_double(c.lambda) << "'\n";
        out << "set xlabel 'sampling interval delta'\n";
        out << "set ylabel 'ARMSE'\n";
        out << "set key top left\n";
        if (needs_log_scale(report))
        {
                out << "set logscale y\n";
        }

        if (format == OutputFormat::Json)
        {
                for (const FilterKind f : c.filters)
                {
                        out << "$" << to_string(f) << " << EOD\n";
                        for (const ReportRow& r : report.rows)
                        {
                                if (r.filter == f && r.armse)
                                {
                                        out << format_double(r.delta) << ' ' << format_double(*r.armse) << '\n';
                                }
                        }
                        out << "EOD\n";
                }
                out << "plot ";
                for (std::size_t i = 0; i < c.filters.size(); ++i)
                {
                        const std::string_view name = to_string(c.filters[i]);
                        out << (i ? ", \\\n     " : "") << "$" << name << " using 1:2 with linespoints title '" << name
                            << "'";
                }
                out << '\n';
                return out.str();
        }

        out << "set datafile separator ','\n";
        out << "set datafile missing ''\n";
        out << "plot ";
        for (std::size_t i = 0; i < c.filters.size(); ++i)
        {
                const std::string_view name = to_string(c.filters[i]);
                out << (i ? ", \\\n     " : "") << "'" << data_file << "' every ::1 using 3:(strcol(4) eq '" << name
                    << "' && strcol(5) eq 'completed' ? $6 : NaN) with linespoints title '" << name << "'";
        }
        out << '\n';
        return out.str();
}

struct IoError final
{
        std::string path;
        std::string message;
};

struct Emitted final
{
        std::filesystem::path data;
        std::filesystem::path plot;
};

namespace report_detail
{
inline std::optional<IoError> write_file(const std::filesystem::path& path, const std::string& content)
{
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f)
        {
                return IoError{path.string(), "cannot open for writing"};
        }
        f << content;
        f.close();
        if (!f)
        {
                return IoError{path.string(), "write failed"};
        }
        return std::nullopt;
}
}

// Writes the table to `path` and the plot script to the same path with the
// extension replaced by .gp.
inline Expected<Emitted, IoError> emit_report(const ArmseReport& report, const OutputFormat format,
                                              const std::filesystem::path& path, const bool timing = false)
{
        const std::string content = format == OutputFormat::Csv ? to_csv(report, timing) : to_json(report, timing);
        if (auto e = report_detail::write_file(path, content))
        {
                return unexpected(std::move(*e));
        }
        std::filesystem::path plot = path;
        plot.replace_extension(".gp");
        std::filesystem::path image = path.filename();
        image.replace_extension(".png");
        if (auto e = report_detail::write_file(
                    plot, plot_script(report, path.filename().string(), format, image.string())))
        {
                return unexpected(std::move(*e));
        }
        return Emitted{.data = path, .plot = plot};
}
}
