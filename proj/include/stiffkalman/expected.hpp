#pragma once

#include <stdexcept>
#include <utility>
#include <variant>

namespace stiffkalman
{
template <typename E>
struct Unexpected final
{
        E error;
};

template <typename E>
Unexpected<std::decay_t<E>> unexpected(E&& e)
{
        return {std::forward<E>(e)};
}

class BadExpectedAccess final : public std::logic_error
{
public:
        BadExpectedAccess()
                : std::logic_error("value() called on an Expected holding an error")
        {
        }
};

// Minimal value-or-error holder. Numerical failures are part of the
// experimental outcome here, so they travel as values rather than exceptions.
template <typename T, typename E>
class Expected final
{
        std::variant<T, E> data_;

public:
        using value_type = T;
        using error_type = E;

        Expected(T value)
                : data_(std::in_place_index<0>, std::move(value))
        {
        }

        template <typename G>
        Expected(Unexpected<G> e)
                : data_(std::in_place_index<1>, E(std::move(e.error)))
        {
        }

        [[nodiscard]] bool has_value() const noexcept
        {
                return data_.index() == 0;
        }

        explicit operator bool() const noexcept
        {
                return has_value();
        }

        [[nodiscard]] const T& value() const&
        {
                if (!has_value())
                {
                        throw BadExpectedAccess();
                }
                return std::get<0>(data_);
        }

        [[nodiscard]] T& value() &
        {
                if (!has_value())
                {
                        throw BadExpectedAccess();
                }
                return std::get<0>(data_);
        }

        [[nodiscard]] T&& value() &&
        {
                if (!has_value())
                {
                        throw BadExpectedAccess();
                }
                return std::get<0>(std::move(data_));
        }

        [[nodiscard]] const E& error() const&
        {
                return std::get<1>(data_);
        }

        const T& operator*() const&
        {
                return value();
        }

        T& operator*() &
        {
                return value();
        }

        const T* operator->() const
        {
                return &value();
        }

        T* operator->()
        {
                return &value();
        }
};
}
