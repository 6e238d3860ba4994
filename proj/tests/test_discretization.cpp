#include "test_support.hpp"

#include <stiffkalman/discretization.hpp>
#include <stiffkalman/models.hpp>
#include <stiffkalman/random.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

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

LinearModel pure_diffusion()
{
        return {Matrix::Zero(2, 2), Matrix::Identity(2, 2), LowerTriangular::identity(2), vec({0, 0}),
                LowerTriangular::identity(2)};
}

TEST(EulerStep, VanDerPolNoiseFree)
{
        const VanDerPol m(10);
        EXPECT_LE(max_abs(euler_step(m, 0, vec({2, 0}), 0.1, vec({0, 0})) - vec({2, -2})), 1e-14);
}

TEST(EulerStep, PureDiffusion)
{
        const LinearModel m = pure_diffusion();
        EXPECT_EQ(euler_step(m, 0, vec({1, 2}), 0.1, vec({0.3, -0.4})), vec({1.3, 1.6}));
}

TEST(It15Drift, VanDerPol)
{
        const VanDerPol m(10);
        EXPECT_LE(max_abs(it15_drift(m, 0, vec({2, 0}), 0.01) - vec({1.999, -0.17})), 1e-13);
}

TEST(It15Drift, LinearIsSecondOrderTaylorOfExponential)
{
        Matrix a(2, 2);
        a << -1, 2, 0.5, -3;
        const LinearModel m(a, Matrix::Identity(2, 2), LowerTriangular::identity(2), vec({0, 0}),
                            LowerTriangular::identity(2));
        const double tau = 0.05;
        const Vector x = vec({0.7, -1.1});
        const Matrix i2 = Matrix::Identity(2, 2);
        EXPECT_LE(max_abs(it15_drift(m, 0, x, tau) - (i2 + tau * a + tau * tau / 2 * a * a) * x), 1e-15);
}

TEST(SampleIt15Noise, ZeroStep)
{
        Rng rng(1);
        const It15Noise w = sample_it15_noise(0, 2, rng);
        EXPECT_EQ(max_abs(w.w1), 0);
        EXPECT_EQ(max_abs(w.w2), 0);
}

TEST(SampleIt15Noise, ReplayIsIdentical)
{
        Rng a = make_stream(5, 3, Stream::TruthPath);
        Rng b = make_stream(5, 3, Stream::TruthPath);
        const It15Noise wa = sample_it15_noise(0.1, 3, a);
        const It15Noise wb = sample_it15_noise(0.1, 3, b);
        EXPECT_EQ(wa.w1, wb.w1);
        EXPECT_EQ(wa.w2, wb.w2);
}

TEST(SampleIt15Noise, MonteCarloMoments)
{
        Rng rng(77);
        const double tau = 0.2;
        const int count = 200000;
        double s11 = 0;
        double s12 = 0;
        double s22 = 0;
        double m1 = 0;
        double m2 = 0;
        for (int i = 0; i < count; ++i)
        {
                const It15Noise w = sample_it15_noise(tau, 1, rng);
                m1 += w.w1(0);
                m2 += w.w2(0);
                s11 += w.w1(0) * w.w1(0);
                s12 += w.w1(0) * w.w2(0);
                s22 += w.w2(0) * w.w2(0);
        }
        // five standard errors of each estimator
        const double n = count;
        EXPECT_NEAR(m1 / n, 0, 5 * std::sqrt(tau / n));
        EXPECT_NEAR(m2 / n, 0, 5 * std::sqrt(tau * tau * tau / 3 / n));
        EXPECT_NEAR(s11 / n, tau, 5 * tau * std::sqrt(2 / n));
        EXPECT_NEAR(s12 / n, tau * tau / 2, 5 * tau * tau * std::sqrt(1 / n));
        EXPECT_NEAR(s22 / n, tau * tau * tau / 3, 5 * tau * tau * tau / 3 * std::sqrt(2 / n));
}

TEST(NoiseBlocks, ReduceToEulerWhenLfVanishes)
{
        const LinearModel m(Matrix::Zero(2, 2), Matrix::Identity(2, 2), LowerTriangular::diagonal(vec({1, 2})),
                            vec({0, 0}), LowerTriangular::identity(2));
        const double tau = 0.1;
        const It15NoiseBlocks b = it15_noise_blocks(m, 0, vec({1, 1}), tau);
        const Matrix gt = gtilde(m);
        EXPECT_LE(max_abs(b.covariance() - tau * gt * gt.transpose()), 1e-15);
}

TEST(NoiseBlocks, MatchExactCovarianceOnRandomMatrices)
{
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 200; ++trial)
        {
                const Eigen::Index n = 1 + trial % 4;
                const Eigen::Index q = 1 + trial % 3;
                const double tau = std::pow(10.0, -1 - trial % 5);
                const Matrix a = test::random_matrix(rng, n, n);
                const Matrix g = test::random_matrix(rng, n, q);
                const auto q_sqrt = cholesky_lower(test::random_spd(rng, q));
                ASSERT_TRUE(q_sqrt);
                const LinearModel m(a, g, *q_sqrt, Vector::Zero(n), LowerTriangular::identity(n));
                const Vector x = test::random_vector(rng, n);

                const It15NoiseBlocks b = it15_noise_blocks(m, 0, x, tau);
                const Matrix oracle = it15_noise_covariance(gtilde(m), ito_lf(m, 0, x), tau);
                EXPECT_LE(test::rel_diff(b.covariance(), oracle), 1e-12);
        }
}

TEST(NoiseBlocks, ExactCovarianceOfSampledIncrement)
{
        // Gt w1 + LF w2 with sample_it15_noise, covariance estimated by Monte Carlo.
        const VanDerPol m(10);
        const Vector x = vec({1.2, -0.4});
        const double tau = 0.05;
        const Matrix gt = gtilde(m);
        const Matrix lf = ito_lf(m, 0, x);
        const Matrix exact = it15_noise_covariance(gt, lf, tau);
        Rng rng(8);
        Matrix acc = Matrix::Zero(2, 2);
        const int count = 200000;
        for (int i = 0; i < count; ++i)
        {
                const It15Noise w = sample_it15_noise(tau, 2, rng);
                const Vector d = gt * w.w1 + lf * w.w2;
                acc += d * d.transpose();
        }
        acc /= count;
        EXPECT_LE(test::rel_diff(acc, exact), 0.02);
}

TEST(SamplingInstants, TenForDeltaPointTwo)
{
        const auto t = sampling_instants(0, 2, 0.2);
        ASSERT_EQ(t.size(), 10u);
        EXPECT_DOUBLE_EQ(t.back(), 2.0);
        EXPECT_EQ(sampling_instants(0, 2, 0.3).size(), 6u);
        EXPECT_EQ(sampling_instants(0, 2, 0.6).size(), 3u);
}

// Deterministic Van der Pol (lambda = 10) integrated to t = 0.5 with steps
// h, h/2, h/4; the ratio (e(h) - e(h/2)) / (e(h/2) - e(h/4)) estimates 2^p.
template <typename Step>
double richardson_ratio(Step&& step, const double h)
{
        const VanDerPol m(10);
        const auto solve = [&](const double dt)
        {
                Vector x = m.initial_mean();
                const int count = static_cast<int>(std::lround(0.5 / dt));
                for (int i = 0; i < count; ++i)
                {
                        x = step(m, i * dt, x, dt);
                }
                return x;
        };
        const Vector a = solve(h);
        const Vector b = solve(h / 2);
        const Vector c = solve(h / 4);
        return (a - b).norm() / (b - c).norm();
}

TEST(ConvergenceOrder, EulerIsFirstOrder)
{
        const double ratio = richardson_ratio(
                [](const SdeModel& m, const double t, const Vector& x, const double dt)
                {
                        return euler_step(m, t, x, dt, Vector::Zero(2));
                },
                1.0 / 2000);
        EXPECT_GE(ratio, 1.7);
        EXPECT_LE(ratio, 2.3);
}

TEST(ConvergenceOrder, It15DriftIsSecondOrder)
{
        const double ratio = richardson_ratio(
                [](const SdeModel& m, const double t, const Vector& x, const double dt)
                {
                        return it15_drift(m, t, x, dt);
                },
                1.0 / 400);
        EXPECT_GE(ratio, 3.4);
        EXPECT_LE(ratio, 4.6);
}

TEST(ConvergenceOrder, EulerHalvingShrinksErrorAgainstFineReference)
{
        const VanDerPol m(10);
        const auto solve = [&](const int count)
        {
                Vector x = m.initial_mean();
                const double dt = 0.5 / count;
                for (int i = 0; i < count; ++i)
                {
                        x = euler_step(m, i * dt, x, dt, Vector::Zero(2));
                }
                return x;
        };
        const Vector reference = solve(1 << 20);
        const double e1 = (solve(1000) - reference).norm();
        const double e2 = (solve(2000) - reference).norm();
        const double e3 = (solve(4000) - reference).norm();
        EXPECT_NEAR(e1 / e2, 2, 0.3);
        EXPECT_NEAR(e2 / e3, 2, 0.3);
}

TEST(SimulateTruth, ZeroDriftZeroDiffusionIsConstant)
{
        const LinearModel m(Matrix::Zero(2, 2), Matrix::Zero(2, 1), LowerTriangular::identity(1), vec({1, 2}),
                            LowerTriangular::identity(2));
        Rng rng(1);
        const auto traj = simulate_truth(m, vec({1, 2}), 1e-2, sampling_instants(0, 2, 0.5), rng);
        ASSERT_TRUE(traj);
        ASSERT_EQ(traj->states.size(), 4u);
        for (const Vector& x : traj->states)
        {
                EXPECT_EQ(x, vec({1, 2}));
        }
}

TEST(SimulateTruth, NoiseFreeVanDerPolMatchesFineReference)
{
        // Q = 0 removes the diffusion; compare against an IT-1.5 (second-order)
        // solution on a much finer grid.
        const VanDerPol base(10);
        struct Deterministic final : ModelBase
        {
                const VanDerPol& v;

                explicit Deterministic(const VanDerPol& model)
                        : ModelBase(Matrix::Zero(2, 2), LowerTriangular::identity(2), model.initial_mean(),
                                    model.initial_cov_sqrt(), 0, 2),
                          v(model)
                {
                }

                Vector drift(double t, const Vector& x) const override
                {
                        return v.drift(t, x);
                }

                Matrix drift_jacobian(double t, const Vector& x) const override
                {
                        return v.drift_jacobian(t, x);
                }

                Vector hessian_contract(double t, const Vector& x, const Matrix& m) const override
                {
                        return v.hessian_contract(t, x, m);
                }
        } m(base);

        Rng rng(1);
        const double h = 1e-4;
        const auto traj = simulate_truth(m, m.initial_mean(), h, sampling_instants(0, 2, 2), rng);
        ASSERT_TRUE(traj);

        Vector ref = m.initial_mean();
        const int fine = 200000;
        for (int i = 0; i < fine; ++i)
        {
                ref = it15_drift(m, i * (2.0 / fine), ref, 2.0 / fine);
        }
        // first-order global error: C h with C of the order of the solution's
        // second derivative over the interval
        EXPECT_LE((traj->states.back() - ref).norm(), 1e3 * h);
        EXPECT_GT((traj->states.back() - ref).norm(), 0);
}

TEST(SimulateTruth, ReplayIsBitIdentical)
{
        const VanDerPol m(10);
        Rng a = make_stream(3, 0, Stream::TruthPath);
        Rng b = make_stream(3, 0, Stream::TruthPath);
        const auto t = sampling_instants(0, 2, 0.2);
        const auto x = simulate_truth(m, m.initial_mean(), 1e-3, t, a);
        const auto y = simulate_truth(m, m.initial_mean(), 1e-3, t, b);
        ASSERT_TRUE(x && y);
        for (std::size_t k = 0; k < t.size(); ++k)
        {
                EXPECT_EQ(x->states[k], y->states[k]);
        }
}

TEST(SimulateTruth, SingularityIsReported)
{
        const ArtificialModel m(10);
        Rng rng(1);
        const auto traj = simulate_truth(m, vec({1, 0, 0}), 1e-3, sampling_instants(0, 2, 0.2), rng);
        ASSERT_FALSE(traj);
        EXPECT_EQ(traj.error().kind(), ModelEvalError::Kind::SingularState);
}

TEST(SimulateTruth, InstabilityIsReportedAsNonFinite)
{
        // lambda h = 3 is outside the explicit Euler stability region
        const VanDerPol m(1e4);
        Rng rng(1);
        const auto traj = simulate_truth(m, m.initial_mean(), 3e-4, sampling_instants(0, 2, 0.2), rng);
        ASSERT_FALSE(traj);
        EXPECT_EQ(traj.error().kind(), ModelEvalError::Kind::NonFinite);
}

TEST(SimulatePath, StrongConvergenceUnderRefinement)
{
        // Coarse Brownian increments are sums of the fine ones. RMS differences
        // between successive refinements shrink by about sqrt(2) per halving.
        const VanDerPol m(10);
        const std::vector<double> times{1.0};
        const int paths = 200;
        const int levels = 4;
        const int finest = 1 << 12;
        std::vector<double> sq(levels - 1, 0);
        Rng rng(99);
        for (int p = 0; p < paths; ++p)
        {
                std::vector<Vector> dw(finest);
                const double h = 1.0 / finest;
                for (Vector& w : dw)
                {
                        w = std::sqrt(h) * standard_normal(rng, 2);
                }
                std::vector<Vector> ends;
                for (int level = 0; level < levels; ++level)
                {
                        const int count = finest >> (levels - 1 - level);
                        const int group = finest / count;
                        std::size_t next = 0;
                        const auto path = simulate_path(m, m.initial_mean(), times,
                                                        {static_cast<std::size_t>(count)},
                                                        [&](double) -> Vector
                                                        {
                                                                Vector s = Vector::Zero(2);
                                                                for (int g = 0; g < group; ++g)
                                                                {
                                                                        s += dw[next++];
                                                                }
                                                                return s;
                                                        });
                        ASSERT_TRUE(path);
                        ends.push_back(path->states.back());
                }
                for (int level = 0; level + 1 < levels; ++level)
                {
                        sq[level] += (ends[level] - ends[level + 1]).squaredNorm();
                }
        }
        for (int level = 0; level + 1 < levels - 1; ++level)
        {
                EXPECT_GE(std::sqrt(sq[level] / sq[level + 1]), 1.3) << "level " << level;
        }
}

TEST(GenerateMeasurements, NoiselessReproducesState)
{
        const VanDerPol m(10);
        const auto meas = LinearMeasurement::noiseless(Matrix::Identity(1, 2));
        Trajectory traj{.times = {0.2, 0.4}, .states = {vec({1, 2}), vec({3, 4})}};
        Rng rng(1);
        const auto z = generate_measurements(*meas, traj, rng);
        ASSERT_EQ(z.size(), 2u);
        EXPECT_EQ(z[0](0), 1);
        EXPECT_EQ(z[1](0), 3);
}

TEST(GenerateMeasurements, ReplayIsIdentical)
{
        const ModelPair p = make_van_der_pol(10);
        Trajectory traj{.times = {0.2, 0.4}, .states = {vec({1, 2}), vec({3, 4})}};
        Rng a = make_stream(1, 2, Stream::MeasurementNoise);
        Rng b = make_stream(1, 2, Stream::MeasurementNoise);
        EXPECT_EQ(generate_measurements(*p.measurement, traj, a), generate_measurements(*p.measurement, traj, b));
}

TEST(Streams, KindsAndRunsAreDistinct)
{
        Rng a = make_stream(1, 0, Stream::TruthPath);
        Rng b = make_stream(1, 0, Stream::MeasurementNoise);
        Rng c = make_stream(1, 1, Stream::TruthPath);
        const auto x = a();
        EXPECT_NE(x, b());
        EXPECT_NE(x, c());
}
}
}
