#include "test_support.hpp"

#include <stiffkalman/bench.hpp>
#include <stiffkalman/report.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace stiffkalman
{
namespace
{
Vector vec(std::initializer_list<double> v)
{
        Vector out(static_cast<Eigen::Index>(v.size()));
        Eigen::Index i = 0;
        for (const double x : v)
        {
                out(i++) = x;
        }
        return out;
}

Trajectory traj_of(std::vector<Vector> states)
{
        Trajectory t;
        for (std::size_t k = 0; k < states.size(); ++k)
        {
                t.times.push_back(0.2 * static_cast<double>(k + 1));
        }
        t.states = std::move(states);
        return t;
}

TEST(Armse, PerfectEstimatesGiveZero)
{
        const Trajectory ref = traj_of({vec({1, 2}), vec({3, 4})});
        EXPECT_EQ(*armse({ref}, {ref.states}), 0);
}

TEST(Armse, ConstantErrorScalesWithSqrtN)
{
        for (const Eigen::Index n : {1, 2, 3})
        {
                std::vector<Trajectory> refs;
                std::vector<std::vector<Vector>> ests;
                for (int l = 0; l < 3; ++l)
                {
                        refs.push_back(traj_of({Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)}));
                        ests.emplace_back(4, Vector::Constant(n, 0.7));
                }
                EXPECT_NEAR(*armse(refs, ests), 0.7 * std::sqrt(static_cast<double>(n)), 1e-15);
        }
}

TEST(Armse, Pythagorean)
{
        EXPECT_DOUBLE_EQ(*armse({traj_of({vec({0, 0})})}, {{vec({3, 4})}}), 5);
}

TEST(Armse, DimensionMismatch)
{
        EXPECT_FALSE(armse({traj_of({vec({0, 0})})}, {{vec({3, 4}), vec({1, 1})}}));
        EXPECT_FALSE(armse({traj_of({vec({0, 0})})}, {{vec({3})}}));
        EXPECT_FALSE(armse({traj_of({vec({0, 0})})}, {}));
}

TEST(Armse, PermutationInvariantAndMonotone)
{
        std::mt19937_64 rng(61);
        std::vector<Trajectory> refs;
        std::vector<std::vector<Vector>> ests;
        for (int l = 0; l < 5; ++l)
        {
                refs.push_back(traj_of({test::random_vector(rng, 2), test::random_vector(rng, 2)}));
                ests.push_back({test::random_vector(rng, 2), test::random_vector(rng, 2)});
        }
        const double base = *armse(refs, ests);
        std::reverse(refs.begin(), refs.end());
        std::reverse(ests.begin(), ests.end());
        EXPECT_NEAR(*armse(refs, ests), base, 1e-14);

        // A run whose mean squared error exceeds the current average raises the value.
        refs.push_back(traj_of({vec({0, 0}), vec({0, 0})}));
        ests.push_back({vec({10, 0}), vec({0, 10})});
        EXPECT_GE(*armse(refs, ests), base);
}

ExperimentConfig small_config(const ModelId model)
{
        ExperimentConfig c;
        c.model = model;
        c.deltas = {0.2, 0.4};
        c.substeps = 32;
        c.truth_step = 1e-3;
        c.mc_runs = 3;
        c.base_seed = 9;
        return c;
}

TEST(SingleRun, ReplayIsBitIdentical)
{
        const ExperimentConfig c = small_config(ModelId::VanDerPol);
        const SingleRun a = run_single(c, 1);
        const SingleRun b = run_single(c, 1);
        EXPECT_EQ(a.truth_x0, b.truth_x0);
        for (std::size_t d = 0; d < c.deltas.size(); ++d)
        {
                EXPECT_EQ(a.deltas[d].measurements, b.deltas[d].measurements);
                for (std::size_t f = 0; f < c.filters.size(); ++f)
                {
                        const auto& x = a.deltas[d].filters[f].run.estimates;
                        const auto& y = b.deltas[d].filters[f].run.estimates;
                        ASSERT_EQ(x.size(), y.size());
                        for (std::size_t k = 0; k < x.size(); ++k)
                        {
                                EXPECT_EQ(x[k].mean, y[k].mean);
                                EXPECT_EQ(x[k].cov, y[k].cov);
                        }
                }
        }
}

TEST(SingleRun, ScenarioDataIndependentOfFilterSet)
{
        ExperimentConfig c = small_config(ModelId::VanDerPol);
        const SingleRun all = run_single(c, 2);
        c.filters = {FilterKind::UKF};
        const SingleRun one = run_single(c, 2);
        EXPECT_EQ(all.truth_x0, one.truth_x0);
        for (std::size_t d = 0; d < c.deltas.size(); ++d)
        {
                EXPECT_EQ(all.deltas[d].measurements, one.deltas[d].measurements);
                EXPECT_EQ(all.deltas[d].reference.states, one.deltas[d].reference.states);
        }
}

TEST(SingleRun, NoiseStreamsIndependentOfLambda)
{
        // Zero drift difference cannot be arranged, but the truth x0 draw and
        // the stream seeds do not involve lambda.
        ExperimentConfig c = small_config(ModelId::VanDerPol);
        const SingleRun a = run_single(c, 0);
        c.lambda = 20;
        const SingleRun b = run_single(c, 0);
        EXPECT_EQ(a.truth_x0, b.truth_x0);
        Rng x = make_stream(c.base_seed, 0, Stream::MeasurementNoise);
        Rng y = make_stream(c.base_seed, 0, Stream::MeasurementNoise);
        EXPECT_EQ(x(), y());
}

TEST(SingleRun, LinearOracleFiltersAgree)
{
        ExperimentConfig c = small_config(ModelId::LinearOracle);
        c.substeps = 4096;
        c.mc_runs = 1;
        c.deltas = {0.2};
        const ArmseReport r = run_experiment(c, 1);
        ASSERT_EQ(r.rows.size(), 3u);
        const double ekf = *r.find(0.2, FilterKind::EKF)->armse;
        const double ckf = *r.find(0.2, FilterKind::CKF)->armse;
        const double ukf = *r.find(0.2, FilterKind::UKF)->armse;
        EXPECT_NEAR(ckf, ukf, 1e-9 * ckf);
        EXPECT_NEAR(ekf, ckf, 1e-4 * ckf);
}

TEST(Experiment, KForDeltaPointTwo)
{
        const SingleRun r = run_single(small_config(ModelId::VanDerPol), 0);
        EXPECT_EQ(r.deltas[0].reference.states.size(), 10u);
        EXPECT_EQ(r.deltas[0].filters[0].run.estimates.size(), 10u);
        EXPECT_EQ(r.deltas[1].reference.states.size(), 5u);
}

TEST(Experiment, RowsSortedAndComplete)
{
        const ArmseReport r = run_experiment(small_config(ModelId::VanDerPol), 2);
        ASSERT_EQ(r.rows.size(), 6u);
        for (std::size_t i = 1; i < r.rows.size(); ++i)
        {
                const auto& a = r.rows[i - 1];
                const auto& b = r.rows[i];
                EXPECT_TRUE(std::tie(a.delta, a.filter) < std::tie(b.delta, b.filter));
        }
        for (const ReportRow& row : r.rows)
        {
                EXPECT_TRUE(row.completed());
                EXPECT_EQ(row.runs_completed, 3u);
        }
}

TEST(Experiment, ThreadCountDoesNotChangeResults)
{
        const ExperimentConfig c = small_config(ModelId::VanDerPol);
        EXPECT_EQ(to_csv(run_experiment(c, 1)), to_csv(run_experiment(c, 4)));
}

TEST(Experiment, StiffUkfDivergesWhileOthersComplete)
{
        ExperimentConfig c = make_config(Preset::Desk, ModelId::VanDerPol, 1e4, 1);
        c.mc_runs = 1;
        c.deltas = {0.2};
        const ArmseReport r = run_experiment(c, 1);
        const ReportRow* ukf = r.find(0.2, FilterKind::UKF);
        EXPECT_FALSE(ukf->completed());
        EXPECT_EQ(ukf->failures.front().divergence.cause, FilterDivergence::Cause::CholeskyFailure);
        EXPECT_TRUE(r.find(0.2, FilterKind::EKF)->completed());
        EXPECT_TRUE(r.find(0.2, FilterKind::CKF)->completed());
}

TEST(Experiment, UnstableTruthIsRecordedPerRun)
{
        ExperimentConfig c = small_config(ModelId::VanDerPol);
        c.lambda = 1e4;
        c.mc_runs = 2;
        c.deltas = {0.2};
        const ArmseReport r = run_experiment(c, 1);
        for (const ReportRow& row : r.rows)
        {
                EXPECT_FALSE(row.completed());
                EXPECT_EQ(row.divergence_count, 2u);
                EXPECT_TRUE(row.failures.front().in_truth);
        }
}

TEST(Config, PresetValues)
{
        const ExperimentConfig desk = make_config(Preset::Desk, ModelId::VanDerPol, 10, 42);
        EXPECT_EQ(desk.mc_runs, 50u);
        EXPECT_EQ(desk.substeps, 1024u);
        EXPECT_EQ(desk.truth_step, 1e-4);
        EXPECT_EQ(desk.deltas, default_delta_grid());
        EXPECT_EQ(desk.base_seed, 42u);

        const ExperimentConfig paper = make_config(Preset::Paper, ModelId::VanDerPol, 1e4, 42);
        EXPECT_EQ(paper.mc_runs, 100u);
        EXPECT_EQ(paper.substeps, 200000u);
        EXPECT_EQ(paper.truth_step, 1e-5);
}

TEST(Config, DeskPresetStaysStableWhenStiff)
{
        const ExperimentConfig c = make_config(Preset::Desk, ModelId::VanDerPol, 1e4, 1);
        EXPECT_LE(c.lambda * c.truth_step, STABLE_LAMBDA_STEP + 1e-15);
        EXPECT_LE(c.lambda * 0.6 / static_cast<double>(c.substeps), STABLE_LAMBDA_STEP);
        EXPECT_EQ(c.mc_runs, 50u);
}

TEST(Config, ValidateRejectsBadValues)
{
        ExperimentConfig c;
        c.deltas = {0};
        EXPECT_THROW(validate(c), std::invalid_argument);
        c.deltas = {3};
        EXPECT_THROW(validate(c), std::invalid_argument);
        c = {};
        c.mc_runs = 0;
        EXPECT_THROW(validate(c), std::invalid_argument);
        c = {};
        c.filters.clear();
        EXPECT_THROW(validate(c), std::invalid_argument);
        EXPECT_NO_THROW(validate(ExperimentConfig{}));
}

TEST(Config, JsonRoundTrip)
{
        ExperimentConfig c = make_config(Preset::Desk, ModelId::Artificial, 1e4, 123456789012345ULL);
        c.deltas = {0.2, 0.35};
        c.filters = {FilterKind::UKF, FilterKind::EKF};
        const nlohmann::json j = nlohmann::json::parse(config_to_json(c).dump());
        EXPECT_EQ(config_from_json(j), c);
}

TEST(Config, JsonRejectsUnknownField)
{
        EXPECT_THROW(config_from_json(nlohmann::json{{"lamda", 3}}), std::invalid_argument);
        EXPECT_THROW(config_from_json(nlohmann::json{{"lambda", "x"}}), std::invalid_argument);
}

ArmseReport one_row_report(std::optional<double> value)
{
        ArmseReport r;
        r.config.deltas = {0.2};
        r.config.filters = {FilterKind::UKF};
        ReportRow row;
        row.model = "van_der_pol";
        row.lambda = 10;
        row.delta = 0.2;
        row.filter = FilterKind::UKF;
        row.armse = value;
        row.runs_completed = value ? 1 : 0;
        row.divergence_count = value ? 0 : 1;
        if (!value)
        {
                row.failures.push_back({.run = 0, .in_truth = false,
                                        .divergence = {.cause = FilterDivergence::Cause::CholeskyFailure}});
        }
        r.rows.push_back(row);
        return r;
}

std::string slurp(const std::filesystem::path& p)
{
        std::ifstream f(p, std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        return s.str();
}

TEST(Report, CsvRow)
{
        const std::string csv = to_csv(one_row_report(0.1));
        EXPECT_EQ(csv, std::string(CSV_HEADER) + "\nvan_der_pol,10,0.20000000000000001,UKF,completed,"
                               "0.10000000000000001,1,0,\n");
}

TEST(Report, DivergedRowHasEmptyArmse)
{
        const std::string csv = to_csv(one_row_report(std::nullopt));
        EXPECT_NE(csv.find("UKF,diverged,,0,1,"), std::string::npos);
}

TEST(Report, EmitWritesTableAndPlotScript)
{
        const auto dir = std::filesystem::temp_directory_path() / "stiffkalman_report_test";
        std::filesystem::create_directories(dir);
        const auto path = dir / "r.csv";
        const auto e = emit_report(one_row_report(0.1), OutputFormat::Csv, path);
        ASSERT_TRUE(e);
        EXPECT_TRUE(std::filesystem::exists(dir / "r.gp"));
        const std::string first = slurp(path);
        const std::string first_plot = slurp(dir / "r.gp");
        EXPECT_NE(first_plot.find("'r.csv'"), std::string::npos);
        EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 2);

        ASSERT_TRUE(emit_report(one_row_report(0.1), OutputFormat::Csv, path));
        EXPECT_EQ(slurp(path), first);
        EXPECT_EQ(slurp(dir / "r.gp"), first_plot);
        std::filesystem::remove_all(dir);
}

TEST(Report, UnwritablePathIsAnIoError)
{
        const auto e = emit_report(one_row_report(0.1), OutputFormat::Csv, "/nonexistent/dir/r.csv");
        ASSERT_FALSE(e);
        EXPECT_EQ(e.error().path, "/nonexistent/dir/r.csv");
}

TEST(Report, LogScaleWhenValuesSpanTwoDecades)
{
        ArmseReport r = one_row_report(0.1);
        EXPECT_FALSE(needs_log_scale(r));
        ReportRow big = r.rows.front();
        big.delta = 0.4;
        big.armse = 50;
        r.rows.push_back(big);
        EXPECT_TRUE(needs_log_scale(r));
        EXPECT_NE(plot_script(r, "r.csv", OutputFormat::Csv, "r.png").find("set logscale y"), std::string::npos);
}

TEST(Report, JsonPlotOmitsDivergedPoints)
{
        ArmseReport r = one_row_report(std::nullopt);
        const std::string gp = plot_script(r, "r.json", OutputFormat::Json, "r.png");
        EXPECT_NE(gp.find("$UKF << EOD\nEOD"), std::string::npos);
        const auto doc = nlohmann::json::parse(to_json(r));
        EXPECT_TRUE(doc["rows"][0]["armse"].is_null());
        EXPECT_EQ(doc["rows"][0]["failures"][0]["cause"], "cholesky_failure");
}
}
}
