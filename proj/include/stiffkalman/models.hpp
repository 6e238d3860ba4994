#pragma once

#include "matkernels.hpp"
#include "sde_model.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace stiffkalman
{
// h(x) = H x
class LinearMeasurement final : public MeasurementModel
{
        Matrix h_;
        Matrix r_;
        LowerTriangular r_sqrt_;

public:
        LinearMeasurement(Matrix h, Matrix r)
                : h_(std::move(h)),
                  r_(std::move(r))
        {
                if (r_.rows() != h_.rows() || r_.cols() != h_.rows())
                {
                        throw std::invalid_argument("measurement noise covariance has wrong size");
                }
                auto f = cholesky_lower(r_);
                if (!f)
                {
                        throw std::invalid_argument("measurement noise covariance is not positive definite");
                }
                r_sqrt_ = std::move(f).value();
        }

        // Noise-free variant: R = 0, only usable for generating exact measurements.
        static std::shared_ptr<const LinearMeasurement> noiseless(Matrix h)
        {
                return std::shared_ptr<const LinearMeasurement>(new LinearMeasurement(std::move(h)));
        }

        [[nodiscard]] Eigen::Index dim() const override
        {
                return h_.rows();
        }

        [[nodiscard]] Vector measure(const Vector& x) const override
        {
                return h_ * x;
        }

        [[nodiscard]] Matrix jacobian(const Vector& /*x*/) const override
        {
                return h_;
        }

        [[nodiscard]] const Matrix& noise_cov() const override
        {
                return r_;
        }

        [[nodiscard]] const LowerTriangular& noise_sqrt() const override
        {
                return r_sqrt_;
        }

private:
        explicit LinearMeasurement(Matrix h)
                : h_(std::move(h)),
                  r_(Matrix::Zero(h_.rows(), h_.rows())),
                  r_sqrt_(LowerTriangular::from_matrix_unchecked(Matrix::Zero(h_.rows(), h_.rows())))
        {
        }
};

// Shared storage for the constant parts of a model.
class ModelBase : public SdeModel
{
protected:
        Matrix g_;
        LowerTriangular q_sqrt_;
        Vector x0_;
        LowerTriangular p0_sqrt_;
        double t0_;
        double t_end_;

        ModelBase(Matrix g, LowerTriangular q_sqrt, Vector x0, LowerTriangular p0_sqrt, const double t0,
                  const double t_end)
                : g_(std::move(g)),
                  q_sqrt_(std::move(q_sqrt)),
                  x0_(std::move(x0)),
                  p0_sqrt_(std::move(p0_sqrt)),
                  t0_(t0),
                  t_end_(t_end)
        {
        }

public:
        [[nodiscard]] Eigen::Index dim() const override
        {
                return x0_.size();
        }

        [[nodiscard]] Eigen::Index noise_dim() const override
        {
                return g_.cols();
        }

        [[nodiscard]] const Matrix& diffusion() const override
        {
                return g_;
        }

        [[nodiscard]] const LowerTriangular& noise_sqrt() const override
        {
                return q_sqrt_;
        }

        [[nodiscard]] const Vector& initial_mean() const override
        {
                return x0_;
        }

        [[nodiscard]] const LowerTriangular& initial_cov_sqrt() const override
        {
                return p0_sqrt_;
        }

        [[nodiscard]] double t_start() const override
        {
                return t0_;
        }

        [[nodiscard]] double t_end() const override
        {
                return t_end_;
        }

        [[nodiscard]] Vector drift_time_derivative(const double /*t*/, const Vector& x) const override
        {
                return Vector::Zero(x.size());
        }
};

// Van der Pol oscillator rescaled so that the period does not depend on the
// stiffness parameter:
//   dx1 = x2 dt
//   dx2 = lambda ((1 - x1^2) x2 - x1) dt + dw2
class VanDerPol final : public ModelBase
{
        double lambda_;

        static Matrix make_g()
        {
                Matrix g = Matrix::Zero(2, 2);
                g(1, 1) = 1;
                return g;
        }

public:
        explicit VanDerPol(const double lambda)
                : ModelBase(make_g(), LowerTriangular::identity(2), Vector::Zero(2),
                            LowerTriangular::diagonal(Vector::Constant(2, std::sqrt(0.1))), 0.0, 2.0),
                  lambda_(lambda)
        {
                if (!(lambda > 0))
                {
                        throw std::invalid_argument("stiffness parameter must be positive");
                }
                x0_ << 2, 0;
        }

        [[nodiscard]] double lambda() const noexcept
        {
                return lambda_;
        }

        [[nodiscard]] Vector drift(const double t, const Vector& x) const override
        {
                require_finite_state(t, x);
                Vector f(2);
                f << x(1), lambda_ * ((1 - x(0) * x(0)) * x(1) - x(0));
                return f;
        }

        [[nodiscard]] Matrix drift_jacobian(const double t, const Vector& x) const override
        {
                require_finite_state(t, x);
                Matrix j(2, 2);
                j << 0, 1, lambda_ * (-2 * x(0) * x(1) - 1), lambda_ * (1 - x(0) * x(0));
                return j;
        }

        // Only F2 is curved: d2F2/dx1^2 = -2 lambda x2, d2F2/dx1dx2 = -2 lambda x1,
        // d2F2/dx2^2 = 0. With the model's own Gt Gt^T = diag(0, 1) the
        // contraction is zero.
        [[nodiscard]] Vector hessian_contract(const double t, const Vector& x, const Matrix& m) const override
        {
                require_finite_state(t, x);
                Vector c = Vector::Zero(2);
                c(1) = 0.5 * (m(0, 0) * (-2 * lambda_ * x(1)) + (m(0, 1) + m(1, 0)) * (-2 * lambda_ * x(0)));
                return c;
        }
};

// Three-state test system with a stiff first component:
//   dx1 = (lambda (x2^2 - x1) + 2 x1 / x2) dt + dw1
//   dx2 = (x1 - x2^2 + 1) dt
//   dx3 = -50 (x2 - 2) x3 dt
class ArtificialModel final : public ModelBase
{
        double lambda_;

        static Matrix make_g()
        {
                Matrix g = Matrix::Zero(3, 3);
                g(0, 0) = 1;
                return g;
        }

public:
        static constexpr double SINGULAR_X2 = 1e-8;

        explicit ArtificialModel(const double lambda)
                : ModelBase(make_g(), LowerTriangular::identity(3), Vector::Zero(3),
                            LowerTriangular::diagonal(Vector::Constant(3, 1e-2)), 0.0, 2.0),
                  lambda_(lambda)
        {
                if (!(lambda > 0))
                {
                        throw std::invalid_argument("stiffness parameter must be positive");
                }
                x0_ << 1, 1, std::exp(-25.0);
        }

        [[nodiscard]] double lambda() const noexcept
        {
                return lambda_;
        }

        [[nodiscard]] Vector drift(const double t, const Vector& x) const override
        {
                check(t, x);
                Vector f(3);
                f << lambda_ * (x(1) * x(1) - x(0)) + 2 * x(0) / x(1), x(0) - x(1) * x(1) + 1,
                        -50 * (x(1) - 2) * x(2);
                return f;
        }

        [[nodiscard]] Matrix drift_jacobian(const double t, const Vector& x) const override
        {
                check(t, x);
                const double x2 = x(1);
                Matrix j(3, 3);
                j << -lambda_ + 2 / x2, 2 * lambda_ * x2 - 2 * x(0) / (x2 * x2), 0, 1, -2 * x2, 0, 0, -50 * x(2),
                        -50 * (x2 - 2);
                return j;
        }

        // Nonzero second derivatives:
        //   F1: d2/dx1dx2 = -2 / x2^2,  d2/dx2^2 = 2 lambda + 4 x1 / x2^3
        //   F2: d2/dx2^2 = -2
        //   F3: d2/dx2dx3 = -50
        // The model's Gt Gt^T is nonzero only at (1,1), where every F_i is
        // affine, so the contraction used by L_0 vanishes.
        [[nodiscard]] Vector hessian_contract(const double t, const Vector& x, const Matrix& m) const override
        {
                check(t, x);
                const double x2 = x(1);
                const double m12 = m(0, 1) + m(1, 0);
                const double m23 = m(1, 2) + m(2, 1);
                Vector c(3);
                c(0) = 0.5 * (m12 * (-2 / (x2 * x2)) + m(1, 1) * (2 * lambda_ + 4 * x(0) / (x2 * x2 * x2)));
                c(1) = 0.5 * m(1, 1) * -2;
                c(2) = 0.5 * m23 * -50;
                return c;
        }

private:
        static void check(const double t, const Vector& x)
        {
                require_finite_state(t, x);
                if (std::abs(x(1)) < SINGULAR_X2)
                {
                        throw ModelEvalError(ModelEvalError::Kind::SingularState, t, x);
                }
        }
};

// F(t, x) = A x. Every filter is exact (up to discretization) on this model,
// which makes it the reference for cross-filter checks.
class LinearModel final : public ModelBase
{
        Matrix a_;

public:
        LinearModel(Matrix a, Matrix g, LowerTriangular q_sqrt, Vector x0, LowerTriangular p0_sqrt,
                    const double t0 = 0.0, const double t_end = 2.0)
                : ModelBase(std::move(g), std::move(q_sqrt), std::move(x0), std::move(p0_sqrt), t0, t_end),
                  a_(std::move(a))
        {
                const Eigen::Index n = x0_.size();
                if (a_.rows() != n || a_.cols() != n || g_.rows() != n || q_sqrt_.dim() != g_.cols()
                    || p0_sqrt_.dim() != n)
                {
                        throw std::invalid_argument("linear model: inconsistent dimensions");
                }
                if (!(t_end > t0))
                {
                        throw std::invalid_argument("linear model: empty simulation interval");
                }
        }

        [[nodiscard]] const Matrix& system_matrix() const noexcept
        {
                return a_;
        }

        [[nodiscard]] Vector drift(const double t, const Vector& x) const override
        {
                require_finite_state(t, x);
                return a_ * x;
        }

        [[nodiscard]] Matrix drift_jacobian(const double /*t*/, const Vector& /*x*/) const override
        {
                return a_;
        }

        [[nodiscard]] Vector hessian_contract(const double /*t*/, const Vector& x, const Matrix& /*m*/) const override
        {
                return Vector::Zero(x.size());
        }
};

struct ModelPair final
{
        std::shared_ptr<const SdeModel> process;
        std::shared_ptr<const MeasurementModel> measurement;
};

inline ModelPair make_van_der_pol(const double lambda)
{
        Matrix h = Matrix::Zero(1, 2);
        h(0, 0) = 1;
        return {std::make_shared<const VanDerPol>(lambda),
                std::make_shared<const LinearMeasurement>(std::move(h), Matrix::Constant(1, 1, 0.04))};
}

inline ModelPair make_artificial(const double lambda)
{
        Matrix h = Matrix::Zero(1, 3);
        h(0, 1) = 1;
        return {std::make_shared<const ArtificialModel>(lambda),
                std::make_shared<const LinearMeasurement>(std::move(h), Matrix::Constant(1, 1, 0.04))};
}

inline ModelPair make_linear_oracle(Matrix a, Matrix g, LowerTriangular q_sqrt, Matrix h, Matrix r, Vector x0,
                                    LowerTriangular p0_sqrt, const double t0 = 0.0, const double t_end = 2.0)
{
        if (h.cols() != x0.size())
        {
                throw std::invalid_argument("linear model: measurement matrix has wrong width");
        }
        return {std::make_shared<const LinearModel>(std::move(a), std::move(g), std::move(q_sqrt), std::move(x0),
                                                    std::move(p0_sqrt), t0, t_end),
                std::make_shared<const LinearMeasurement>(std::move(h), std::move(r))};
}

// Fixed damped oscillator used when the harness is asked for the linear model.
inline ModelPair make_default_linear_oracle()
{
        Matrix a(2, 2);
        a << 0, 1, -1, -0.5;
        Matrix g(2, 1);
        g << 0, 1;
        Matrix h(1, 2);
        h << 1, 0;
        Vector x0(2);
        x0 << 1, 0;
        return make_linear_oracle(std::move(a), std::move(g), LowerTriangular::identity(1), std::move(h),
                                  Matrix::Constant(1, 1, 0.04), std::move(x0),
                                  LowerTriangular::diagonal(Vector::Constant(2, std::sqrt(0.1))));
}
}
