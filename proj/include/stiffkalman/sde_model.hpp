#pragma once

#include "matkernels.hpp"

#include <Eigen/Core>

#include <exception>
#include <string>
#include <utility>

namespace stiffkalman
{
// Raised from inside drift / measurement evaluation. Filters and the truth
// simulator catch it and turn it into a divergence record.
class ModelEvalError final : public std::exception
{
public:
        enum class Kind
        {
                SingularState,
                NonFinite
        };

private:
        Kind kind_;
        double time_;
        Vector state_;
        std::string message_;

public:
        ModelEvalError(const Kind kind, const double time, Vector state)
                : kind_(kind),
                  time_(time),
                  state_(std::move(state)),
                  message_(std::string(kind == Kind::SingularState ? "singular state" : "non-finite state")
                           + " at t=" + std::to_string(time))
        {
        }

        [[nodiscard]] Kind kind() const noexcept
        {
                return kind_;
        }

        [[nodiscard]] double time() const noexcept
        {
                return time_;
        }

        [[nodiscard]] const Vector& state() const noexcept
        {
                return state_;
        }

        [[nodiscard]] const char* what() const noexcept override
        {
                return message_.c_str();
        }
};

inline void require_finite_state(const double t, const Vector& x)
{
        if (!x.allFinite())
        {
                throw ModelEvalError(ModelEvalError::Kind::NonFinite, t, x);
        }
}

// dx = F(t, x) dt + G dw,  w a Brownian motion with constant diffusion Q.
//
// G and Q are constant; the IT-1.5 based filters depend on it. Derivative
// callbacks are analytic.
class SdeModel
{
public:
        virtual ~SdeModel() = default;

        [[nodiscard]] virtual Eigen::Index dim() const = 0;
        [[nodiscard]] virtual Eigen::Index noise_dim() const = 0;

        [[nodiscard]] virtual Vector drift(double t, const Vector& x) const = 0;
        [[nodiscard]] virtual Matrix drift_jacobian(double t, const Vector& x) const = 0;
        [[nodiscard]] virtual Vector drift_time_derivative(double t, const Vector& x) const = 0;

        // Component i is 0.5 * sum_{p,r} M(p,r) * d2F_i / dx_p dx_r.
        [[nodiscard]] virtual Vector hessian_contract(double t, const Vector& x, const Matrix& m) const = 0;

        [[nodiscard]] virtual const Matrix& diffusion() const = 0;
        [[nodiscard]] virtual const LowerTriangular& noise_sqrt() const = 0;

        [[nodiscard]] virtual const Vector& initial_mean() const = 0;
        [[nodiscard]] virtual const LowerTriangular& initial_cov_sqrt() const = 0;

        [[nodiscard]] virtual double t_start() const = 0;
        [[nodiscard]] virtual double t_end() const = 0;
};

// z_k = h(x_k) + v_k,  v_k ~ N(0, R)
class MeasurementModel
{
public:
        virtual ~MeasurementModel() = default;

        [[nodiscard]] virtual Eigen::Index dim() const = 0;
        [[nodiscard]] virtual Vector measure(const Vector& x) const = 0;
        [[nodiscard]] virtual Matrix jacobian(const Vector& x) const = 0;
        [[nodiscard]] virtual const Matrix& noise_cov() const = 0;
        [[nodiscard]] virtual const LowerTriangular& noise_sqrt() const = 0;
};

// G * Q^{1/2}
inline Matrix gtilde(const SdeModel& model)
{
        return model.diffusion() * model.noise_sqrt().matrix();
}

// Matrix whose (i, j) entry is L_j F_i = sum_p Gt(p, j) dF_i/dx_p, i.e. dF/dx * Gt.
inline Matrix ito_lf(const SdeModel& model, const double t, const Vector& x, const Matrix& gt)
{
        return model.drift_jacobian(t, x) * gt;
}

inline Matrix ito_lf(const SdeModel& model, const double t, const Vector& x)
{
        return ito_lf(model, t, x, gtilde(model));
}

// L_0 F = dF/dt + dF/dx * F + 0.5 * sum Gt Gt^T : d2F, with gram = Gt Gt^T
// supplied by the caller.
inline Vector ito_l0_with_gram(const SdeModel& model, const double t, const Vector& x, const Matrix& gram)
{
        const Vector f = model.drift(t, x);
        return model.drift_time_derivative(t, x) + model.drift_jacobian(t, x) * f
               + model.hessian_contract(t, x, gram);
}

inline Vector ito_l0(const SdeModel& model, const double t, const Vector& x)
{
        const Matrix gt = gtilde(model);
        return ito_l0_with_gram(model, t, x, gt * gt.transpose());
}
}
