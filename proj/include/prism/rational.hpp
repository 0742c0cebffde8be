#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace prism {

/// Exact rational on int64 with 128-bit intermediates. Utilities and
/// potentials in the game module use it so "delta-u equals delta-Phi" is
/// an equality, not a tolerance.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT implicit
    Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    double to_double() const {
        return static_cast<double>(num_) / static_cast<double>(den_);
    }

    friend Rational operator+(const Rational& a, const Rational& b) {
        return make(i128(a.num_) * b.den_ + i128(b.num_) * a.den_,
                    i128(a.den_) * b.den_);
    }
    friend Rational operator-(const Rational& a, const Rational& b) {
        return make(i128(a.num_) * b.den_ - i128(b.num_) * a.den_,
                    i128(a.den_) * b.den_);
    }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return make(i128(a.num_) * b.num_, i128(a.den_) * b.den_);
    }
    Rational operator-() const { return make(-i128(num_), i128(den_)); }

    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num_ == b.num_ && a.den_ == b.den_;
    }
    friend bool operator!=(const Rational& a, const Rational& b) {
        return !(a == b);
    }
    friend bool operator<(const Rational& a, const Rational& b) {
        return i128(a.num_) * b.den_ < i128(b.num_) * a.den_;
    }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) {
        return !(b < a);
    }
    friend bool operator>=(const Rational& a, const Rational& b) {
        return !(a < b);
    }

    Rational abs() const { return num_ < 0 ? -*this : *this; }

    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    /// Exact value of a decimal literal such as "0.15" or "-3/7".
    static Rational parse(const std::string& text);

private:
    using i128 = __int128;

    static Rational make(i128 n, i128 d) {
        if (d == 0) throw std::domain_error("Rational: zero denominator");
        if (d < 0) {
            n = -n;
            d = -d;
        }
        const i128 g = gcd128(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX) {
            throw std::overflow_error("Rational: value out of int64 range");
        }
        Rational r;
        r.num_ = static_cast<std::int64_t>(n);
        r.den_ = static_cast<std::int64_t>(d);
        return r;
    }

    static i128 gcd128(i128 a, i128 b) {
        while (b != 0) {
            const i128 t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }

    void normalize() { *this = make(num_, den_); }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

inline Rational Rational::parse(const std::string& text) {
    if (const auto slash = text.find('/'); slash != std::string::npos) {
        return Rational(std::stoll(text.substr(0, slash)),
                        std::stoll(text.substr(slash + 1)));
    }
    const auto dot = text.find('.');
    if (dot == std::string::npos) return Rational(std::stoll(text));
    const std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    std::int64_t den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) den *= 10;
    return Rational(std::stoll(digits), den);
}

}  // namespace prism
