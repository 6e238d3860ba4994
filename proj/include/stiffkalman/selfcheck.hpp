#pragma once

#include "ckf.hpp"
#include "discretization.hpp"
#include "models.hpp"
#include "random.hpp"
#include "run_filter.hpp"
#include "ukf.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace stiffkalman::selfcheck
{
struct CheckResult final
{
        std::string name;
        bool passed = false;
        std::string detail;
};

struct Options final
{
        bool quick = false;
        // Perturbation of the central UT mean weight, used to prove that the
        // checks can fail.
        double ut_weight_perturbation = 0;
};

inline constexpr double MOMENT_TOLERANCE = 1e-12;
inline constexpr double NOISE_BLOCK_TOLERANCE = 1e-12;
inline constexpr double CKF_UKF_TOLERANCE = 1e-9;

namespace detail
{
inline Matrix uniform_matrix(Rng& rng, const Eigen::Index rows, const Eigen::Index cols)
{
        std::uniform_real_distribution<double> u(-1, 1);
        Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
        {
                for (Eigen::Index i = 0; i < rows; ++i)
                {
                        m(i, j) = u(rng);
                }
        }
        return m;
}

inline Matrix spd(Rng& rng, const Eigen::Index n)
{
        const Matrix a = uniform_matrix(rng, n, n + 2);
        return a * a.transpose() + 0.1 * Matrix::Identity(n, n);
}

inline double rel(const Matrix& a, const Matrix& b)
{
        const double scale = std::max({max_abs(a), max_abs(b), 1e-300});
        return max_abs(a - b) / scale;
}

inline UtWeights weights_for(const Eigen::Index n, const Options& opt)
{
        UtWeights w = ut_weights(n);
        if (opt.ut_weight_perturbation != 0)
        {
                w.w_mean(0) += opt.ut_weight_perturbation;
                w.w_matrix = ut_weight_matrix(w.w_mean, w.w_cov);
        }
        return w;
}

inline CheckResult verdict(std::string name, const double worst, const double tol)
{
        std::ostringstream d;
        d << "worst relative error " << worst << " (tolerance " << tol << ")";
        return {std::move(name), worst <= tol, d.str()};
}
}

// Identity-map propagation of sigma points reproduces mean and covariance.
inline CheckResult ut_moment_matching(const Options& opt)
{
        Rng rng(101);
        const int trials = opt.quick ? 20 : 200;
        double worst = 0;
        for (int t = 0; t < trials; ++t)
        {
                const Eigen::Index n = 1 + t % 3;
                const Vector mean = detail::uniform_matrix(rng, n, 1).col(0);
                const Matrix p = detail::spd(rng, n);
                const UtWeights w = detail::weights_for(n, opt);
                const Matrix pts = sigma_points(mean, *cholesky_lower(p));
                worst = std::max(worst, detail::rel(pts * w.w_mean, mean));
                worst = std::max(worst, detail::rel(pts * w.w_matrix * pts.transpose(), p));
        }
        return detail::verdict("ut_moment_matching", worst, MOMENT_TOLERANCE);
}

inline CheckResult cubature_moment_matching(const Options& opt)
{
        Rng rng(102);
        const int trials = opt.quick ? 20 : 200;
        double worst = 0;
        for (int t = 0; t < trials; ++t)
        {
                const Eigen::Index n = 1 + t % 4;
                const Vector mean = detail::uniform_matrix(rng, n, 1).col(0);
                const Matrix p = detail::spd(rng, n);
                Matrix pts = cholesky_lower(p)->matrix() * cubature_nodes(n);
                pts.colwise() += mean;
                const Vector m = pts.rowwise().mean();
                const Matrix c = pts.colwise() - m;
                worst = std::max(worst, detail::rel(m, mean));
                worst = std::max(worst, detail::rel(c * c.transpose() / static_cast<double>(2 * n), p));
        }
        return detail::verdict("cubature_moment_matching", worst, MOMENT_TOLERANCE);
}

// Square-root noise blocks against the expanded IT-1.5 noise covariance.
inline CheckResult noise_block_identity(const Options& opt)
{
        Rng rng(103);
        const int trials = opt.quick ? 20 : 200;
        double worst = 0;
        for (int t = 0; t < trials; ++t)
        {
                const Eigen::Index n = 1 + t % 3;
                const Eigen::Index q = 1 + t % 2;
                const double tau = 0.1 / (1 + t % 7);
                const LinearModel m(detail::uniform_matrix(rng, n, n), detail::uniform_matrix(rng, n, q),
                                    *cholesky_lower(detail::spd(rng, q)), Vector::Zero(n),
                                    LowerTriangular::identity(n));
                const Vector x = detail::uniform_matrix(rng, n, 1).col(0);
                const Matrix gt = gtilde(m);
                const Matrix lf = ito_lf(m, 0, x, gt);
                worst = std::max(worst, detail::rel(it15_noise_blocks(m, 0, x, tau).covariance(),
                                                    it15_noise_covariance(gt, lf, tau)));
        }
        return detail::verdict("noise_block_identity", worst, NOISE_BLOCK_TOLERANCE);
}

// CKF and UKF filtered beliefs on random stable linear models.
inline CheckResult linear_equivalence(const Options& opt)
{
        Rng rng(104);
        const int models = opt.quick ? 2 : 5;
        const double delta = 0.2;
        const std::size_t m = opt.quick ? 64 : 256;
        double worst = 0;
        for (int t = 0; t < models; ++t)
        {
                const Eigen::Index n = 2 + t % 2;
                Matrix a = detail::uniform_matrix(rng, n, n);
                a -= (Eigen::EigenSolver<Matrix>(a, false).eigenvalues().real().maxCoeff() + 0.5)
                     * Matrix::Identity(n, n);
                const ModelPair p = make_linear_oracle(a, detail::uniform_matrix(rng, n, 1), LowerTriangular::identity(1),
                                                       detail::uniform_matrix(rng, 1, n), Matrix::Constant(1, 1, 0.04),
                                                       Vector::Zero(n), *cholesky_lower(0.1 * detail::spd(rng, n)));
                const auto truth = simulate_truth(*p.process, Vector::Zero(n), 1e-3,
                                                  sampling_instants(0, p.process->t_end(), delta), rng);
                const std::vector<Vector> z = generate_measurements(*p.measurement, *truth, rng);

                const GaussianBelief init = initial_belief(*p.process);
                const FilterRun c = run_filter(FilterKind::CKF, *p.process, *p.measurement, z, delta, m, init);
                const FilterRun u = run_filter(FilterKind::UKF, *p.process, *p.measurement, z, delta, m, init);
                if (!c.completed() || !u.completed())
                {
                        return {"linear_equivalence", false, "a filter diverged on a linear model"};
                }
                for (std::size_t k = 0; k < c.estimates.size(); ++k)
                {
                        worst = std::max(worst, detail::rel(c.estimates[k].mean, u.estimates[k].mean));
                        worst = std::max(worst, detail::rel(c.estimates[k].cov, u.estimates[k].cov));
                }
        }
        return detail::verdict("linear_equivalence", worst, CKF_UKF_TOLERANCE);
}

inline std::vector<std::function<CheckResult(const Options&)>> all_checks()
{
        return {ut_moment_matching, cubature_moment_matching, noise_block_identity, linear_equivalence};
}
}
