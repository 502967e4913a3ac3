#pragma once

// Scalar codecs for the three microscaling element/scale formats:
//
//   E2M1  4-bit float (sign, 2 exponent bits, 1 mantissa bit), the element
//         format of both NVFP4 and MXFP4 blocks.  Magnitudes:
//         0, 0.5, 1, 1.5, 2, 3, 4, 6.
//   E4M3  8-bit float (sign, 4 exponent bits bias 7, 3 mantissa bits),
//         the NVFP4 per-block dequant scale.  Subnormals supported, max 448,
//         no infinities; the NaN encodings are rejected.
//   E8M0  power-of-two scale with a signed exponent in [-127, 127], the
//         MXFP4 per-block scale.
//
// Every decoded value is exactly representable in a double, so all codec
// arithmetic below is exact and round-trips are bit-faithful.

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace soarq {

// ---------------------------------------------------------------- E2M1 ----

// One packed FP4 code, low nibble only: [sign][e1][e0][m].
struct Fp4Code {
    std::uint8_t bits = 0;

    friend bool operator==(Fp4Code a, Fp4Code b) { return a.bits == b.bits; }
    friend bool operator!=(Fp4Code a, Fp4Code b) { return a.bits != b.bits; }
};

constexpr double kFp4Max = 6.0;  // largest E2M1 magnitude

// Decoded value of a 4-bit code.  Total over all 16 nibbles; 0b1000 decodes
// to -0.0 but is never produced by quantize_e2m1.
double decode_e2m1(Fp4Code code);

// Nearest codebook value with ties rounded to even significand on the local
// grid; saturates at +-6, maps both zeros to +0.  Throws on non-finite input.
Fp4Code quantize_e2m1(double x);

// Branch form of the same rounding: half-unit grid below 2, unit grid in
// [2,4), two-unit grid in [4,6], saturation beyond.  Agreeing with
// decode(quantize_e2m1(t)) everywhere is a tested property of the build.
double piecewise_round(double t);

// The 15 distinct codebook values (negative zero excluded), sorted ascending
// by value.  Stable across calls.
const std::array<std::pair<Fp4Code, double>, 15>& e2m1_codebook();

// ---------------------------------------------------------------- E4M3 ----

// One 8-bit E4M3 scale value.
struct E4M3Value {
    std::uint8_t bits = 0;

    friend bool operator==(E4M3Value a, E4M3Value b) { return a.bits == b.bits; }
    friend bool operator!=(E4M3Value a, E4M3Value b) { return a.bits != b.bits; }
};

constexpr double kE4M3Max = 448.0;
constexpr double kE4M3MinSubnormal = 0x1p-9;  // smallest positive value
constexpr double kE4M3MinNormal = 0x1p-6;     // smallest positive normal

// Decoded value of an E4M3 byte.  Throws on the NaN encodings (0x7f, 0xff).
double decode_e4m3(E4M3Value v);

// Nearest finite E4M3 value, IEEE round-half-to-even on the mantissa grid,
// saturating at +-448.  Both zeros map to +0.  Throws on non-finite input.
E4M3Value quantize_e4m3(double x);

// The `count` positive E4M3 values closest to x, sorted by distance then by
// value; includes x itself when representable.  x must be positive finite.
std::vector<E4M3Value> e4m3_neighbors(double x, int count);

// ---------------------------------------------------------------- E8M0 ----

// Power-of-two scale 2^exponent with exponent in [-127, 127].
struct E8M0Scale {
    std::int16_t exponent = 0;

    friend bool operator==(E8M0Scale a, E8M0Scale b) { return a.exponent == b.exponent; }
    friend bool operator!=(E8M0Scale a, E8M0Scale b) { return a.exponent != b.exponent; }
};

constexpr int kE8M0MinExp = -127;
constexpr int kE8M0MaxExp = 127;

double decode_e8m0(E8M0Scale s);

// Largest representable power of two <= x (floor semantics), clamped at the
// exponent range ends.  x must be positive finite.
E8M0Scale quantize_e8m0(double x);

// The `count` E8M0 scales closest to x, sorted by distance then by value.
// x must be positive finite.
std::vector<E8M0Scale> e8m0_neighbors(double x, int count);

// Which representable set constrains a reconstruction-side block scale.
enum class ScaleDomain { e4m3, e8m0 };

}  // namespace soarq
