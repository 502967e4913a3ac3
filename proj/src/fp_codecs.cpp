#include "soarq/fp_codecs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace soarq {

namespace {

// Round half to even, exact for the magnitudes handled here (|t| < 2^52).
double round_even(double t) {
    double f = std::floor(t);
    double d = t - f;  // exact: Sterbenz-style subtraction
    if (d < 0.5) return f;
    if (d > 0.5) return f + 1.0;
    return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

void require_finite(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
}

void require_positive_finite(double x) {
    require_finite(x);
    if (x <= 0.0) throw std::invalid_argument("input must be positive");
}

}  // namespace

// ---------------------------------------------------------------- E2M1 ----

// Magnitude per exponent/mantissa pair: exp==0 is the subnormal pair
// {0, 0.5}, otherwise 2^(exp-1) * (1 + mant/2).
static const double kE2M1Mag[8] = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};

double decode_e2m1(Fp4Code code) {
    double mag = kE2M1Mag[code.bits & 0x7];
    return (code.bits & 0x8) ? -mag : mag;
}

Fp4Code quantize_e2m1(double x) {
    require_finite(x);
    double m = std::fabs(x);
    // Threshold chain over the midpoints between adjacent magnitudes; the
    // comparison direction at each midpoint encodes the tie-to-even choice
    // (0.25->0, 0.75->1, 1.25->1, 1.75->2, 2.5->2, 3.5->4, 5->4).
    std::uint8_t mag;
    if (m <= 0.25)
        mag = 0x0;  // 0
    else if (m < 0.75)
        mag = 0x1;  // 0.5
    else if (m <= 1.25)
        mag = 0x2;  // 1
    else if (m < 1.75)
        mag = 0x3;  // 1.5
    else if (m <= 2.5)
        mag = 0x4;  // 2
    else if (m < 3.5)
        mag = 0x5;  // 3
    else if (m <= 5.0)
        mag = 0x6;  // 4
    else
        mag = 0x7;  // 6
    if (mag == 0) return Fp4Code{0};  // zero is always +0, never 0b1000
    return Fp4Code{static_cast<std::uint8_t>((std::signbit(x) ? 0x8 : 0x0) | mag)};
}

double piecewise_round(double t) {
    require_finite(t);
    double m = std::fabs(t);
    double r;
    if (m < 2.0)
        r = 0.5 * round_even(2.0 * t);
    else if (m < 4.0)
        r = round_even(t);
    else if (m <= 6.0)
        r = 2.0 * round_even(0.5 * t);
    else
        r = std::copysign(6.0, t);
    return r == 0.0 ? 0.0 : r;  // canonicalize -0
}

const std::array<std::pair<Fp4Code, double>, 15>& e2m1_codebook() {
    static const std::array<std::pair<Fp4Code, double>, 15> table = [] {
        std::array<std::pair<Fp4Code, double>, 15> t{};
        int n = 0;
        for (int bits = 0; bits < 16; ++bits) {
            if (bits == 0x8) continue;  // negative zero
            t[n++] = {Fp4Code{static_cast<std::uint8_t>(bits)},
                      decode_e2m1(Fp4Code{static_cast<std::uint8_t>(bits)})};
        }
        std::sort(t.begin(), t.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        return t;
    }();
    return table;
}

// ---------------------------------------------------------------- E4M3 ----

namespace {

// Positive magnitudes indexed by code 0x00..0x7e (0x7f is NaN); the value is
// monotone in the code, so the index doubles as the magnitude code.
const std::array<double, 127>& e4m3_magnitudes() {
    static const std::array<double, 127> table = [] {
        std::array<double, 127> t{};
        for (int code = 0; code < 127; ++code) {
            int exp = code >> 3;
            int mant = code & 0x7;
            t[code] = exp == 0 ? std::ldexp(mant, -9)
                               : std::ldexp(1.0 + mant / 8.0, exp - 7);
        }
        return t;
    }();
    return table;
}

}  // namespace

double decode_e4m3(E4M3Value v) {
    int exp = (v.bits >> 3) & 0xf;
    int mant = v.bits & 0x7;
    if (exp == 0xf && mant == 0x7) throw std::invalid_argument("E4M3 NaN encoding");
    double mag = exp == 0 ? std::ldexp(mant, -9) : std::ldexp(1.0 + mant / 8.0, exp - 7);
    return (v.bits & 0x80) ? -mag : mag;
}

E4M3Value quantize_e4m3(double x) {
    require_finite(x);
    const auto& mags = e4m3_magnitudes();
    double m = std::fabs(x);
    std::uint8_t code;
    if (m >= kE4M3Max) {
        code = 126;  // saturate at 448
    } else {
        // Bracket m between adjacent magnitudes; the midpoint is exact in a
        // double, so the tie comparison is exact too.
        auto it = std::upper_bound(mags.begin(), mags.end(), m);
        int hi = static_cast<int>(it - mags.begin());  // first value > m
        if (hi == 0) {
            code = 0;
        } else {
            int lo = hi - 1;
            double mid = 0.5 * (mags[lo] + mags[hi]);
            if (m < mid)
                code = static_cast<std::uint8_t>(lo);
            else if (m > mid)
                code = static_cast<std::uint8_t>(hi);
            else
                code = static_cast<std::uint8_t>((lo & 1) == 0 ? lo : hi);  // tie to even
        }
    }
    if (code == 0) return E4M3Value{0};  // both zeros map to +0
    return E4M3Value{static_cast<std::uint8_t>((std::signbit(x) ? 0x80 : 0x00) | code)};
}

std::vector<E4M3Value> e4m3_neighbors(double x, int count) {
    require_positive_finite(x);
    if (count < 1) throw std::invalid_argument("neighbor count must be >= 1");
    const auto& mags = e4m3_magnitudes();
    // Codes 1..126 are the 126 positive values.
    std::vector<std::uint8_t> codes(126);
    for (int i = 0; i < 126; ++i) codes[i] = static_cast<std::uint8_t>(i + 1);
    std::sort(codes.begin(), codes.end(), [&](std::uint8_t a, std::uint8_t b) {
        double da = std::fabs(mags[a] - x);
        double db = std::fabs(mags[b] - x);
        if (da != db) return da < db;
        return mags[a] < mags[b];
    });
    int n = std::min<int>(count, 126);
    std::vector<E4M3Value> out(n);
    for (int i = 0; i < n; ++i) out[i] = E4M3Value{codes[i]};
    return out;
}

// ---------------------------------------------------------------- E8M0 ----

double decode_e8m0(E8M0Scale s) { return std::ldexp(1.0, s.exponent); }

E8M0Scale quantize_e8m0(double x) {
    require_positive_finite(x);
    int e;
    std::frexp(x, &e);  // x = m * 2^e with m in [0.5, 1), so floor(log2 x) = e - 1
    int exp = e - 1;
    exp = std::max(kE8M0MinExp, std::min(kE8M0MaxExp, exp));
    return E8M0Scale{static_cast<std::int16_t>(exp)};
}

std::vector<E8M0Scale> e8m0_neighbors(double x, int count) {
    require_positive_finite(x);
    if (count < 1) throw std::invalid_argument("neighbor count must be >= 1");
    std::vector<std::int16_t> exps(kE8M0MaxExp - kE8M0MinExp + 1);
    for (size_t i = 0; i < exps.size(); ++i)
        exps[i] = static_cast<std::int16_t>(kE8M0MinExp + static_cast<int>(i));
    std::sort(exps.begin(), exps.end(), [&](std::int16_t a, std::int16_t b) {
        double da = std::fabs(std::ldexp(1.0, a) - x);
        double db = std::fabs(std::ldexp(1.0, b) - x);
        if (da != db) return da < db;
        return a < b;
    });
    int n = std::min<int>(count, static_cast<int>(exps.size()));
    std::vector<E8M0Scale> out(n);
    for (int i = 0; i < n; ++i) out[i] = E8M0Scale{exps[i]};
    return out;
}

}  // namespace soarq
