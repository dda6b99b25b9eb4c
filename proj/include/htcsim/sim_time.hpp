#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace htcsim {

/// Simulated time as an integer count of milliseconds.
///
/// Fixed point keeps replays bit-exact. Values are never negative; the
/// largest representable value doubles as "unbounded" and saturates under
/// addition.
class SimTime {
public:
    constexpr SimTime() = default;

    static constexpr SimTime from_ms(std::int64_t ms) {
        if (ms < 0) throw std::invalid_argument("SimTime cannot be negative");
        SimTime t;
        t.ms_ = ms;
        return t;
    }
    static SimTime from_seconds(double s) { return from_ms(round_ms(s * 1e3)); }
    static SimTime from_minutes(double m) { return from_ms(round_ms(m * 60e3)); }
    static SimTime from_hours(double h) { return from_ms(round_ms(h * 3600e3)); }
    static SimTime from_days(double d) { return from_ms(round_ms(d * 86400e3)); }
    static constexpr SimTime infinite() { return from_ms(std::numeric_limits<std::int64_t>::max()); }
    static constexpr SimTime zero() { return SimTime{}; }

    constexpr std::int64_t ms() const { return ms_; }
    constexpr bool is_infinite() const { return ms_ == std::numeric_limits<std::int64_t>::max(); }
    double seconds() const { return is_infinite() ? INFINITY : static_cast<double>(ms_) / 1e3; }
    double hours() const { return is_infinite() ? INFINITY : static_cast<double>(ms_) / 3600e3; }
    double days() const { return is_infinite() ? INFINITY : static_cast<double>(ms_) / 86400e3; }

    friend constexpr auto operator<=>(SimTime, SimTime) = default;

    friend constexpr SimTime operator+(SimTime a, SimTime b) {
        if (a.is_infinite() || b.is_infinite()) return infinite();
        if (a.ms_ > std::numeric_limits<std::int64_t>::max() - b.ms_) return infinite();
        return from_ms(a.ms_ + b.ms_);
    }
    /// Requires a >= b. An unbounded minuend stays unbounded.
    friend constexpr SimTime operator-(SimTime a, SimTime b) {
        if (a.is_infinite()) return infinite();
        if (a.ms_ < b.ms_) throw std::invalid_argument("SimTime subtraction underflow");
        return from_ms(a.ms_ - b.ms_);
    }
    SimTime& operator+=(SimTime o) { return *this = *this + o; }

    /// Difference clamped at zero.
    static constexpr SimTime saturating_sub(SimTime a, SimTime b) {
        return a <= b ? SimTime{} : a - b;
    }

    std::string to_string() const { return is_infinite() ? "inf" : std::to_string(ms_); }

private:
    static std::int64_t round_ms(double v) {
        if (std::isinf(v) && v > 0) return std::numeric_limits<std::int64_t>::max();
        if (!(v >= 0)) throw std::invalid_argument("SimTime cannot be negative");
        if (v >= 9.2e18) return std::numeric_limits<std::int64_t>::max();
        return std::llround(v);
    }

    std::int64_t ms_ = 0;
};

}  // namespace htcsim
