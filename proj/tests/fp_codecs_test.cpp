#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "soarq/fp_codecs.hpp"

using namespace soarq;

// ---------------------------------------------------------------------------
// Reference oracles, written independently of the implementation.
// ---------------------------------------------------------------------------

// Frozen E2M1 codebook: every nonnegative magnitude, mirrored.
static const double kRefFp4[15] = {-6, -4, -3, -2, -1.5, -1, -0.5, 0,
                                   0.5, 1,  1.5, 2,  3,   4,  6};

// Grid spacing of the codebook around a magnitude (used by the tie rule).
static double ref_fp4_spacing(double mag) {
    if (mag < 2.0) return 0.5;
    if (mag < 4.0) return 1.0;
    return 2.0;
}

// Brute-force nearest codebook value; exact ties resolved toward the value
// whose significand (value / local spacing) is even.
static double ref_nearest_fp4(double x) {
    double best = kRefFp4[0];
    double bestd = std::fabs(x - best);
    for (double v : kRefFp4) {
        double d = std::fabs(x - v);
        if (d < bestd) {
            best = v;
            bestd = d;
        } else if (d == bestd && v != best) {
            double lo = std::min(std::fabs(v), std::fabs(best));
            double step = ref_fp4_spacing(lo);
            double sig_v = std::fabs(v) / step;
            double sig_b = std::fabs(best) / step;
            if (std::fmod(sig_v, 2.0) == 0.0 && std::fmod(sig_b, 2.0) != 0.0) best = v;
        }
    }
    return best == 0.0 ? 0.0 : best;
}

// Independent E4M3 value enumeration straight from the bit layout.
static std::vector<double> ref_e4m3_all_finite() {
    std::vector<double> vals;
    for (int bits = 0; bits < 256; ++bits) {
        int exp = (bits >> 3) & 0xf;
        int mant = bits & 0x7;
        if (exp == 0xf && mant == 0x7) continue;  // NaN encodings
        double mag = exp == 0 ? mant * std::pow(2.0, -9.0)
                              : std::pow(2.0, exp - 7) * (1.0 + mant / 8.0);
        vals.push_back((bits & 0x80) ? -mag : mag);
    }
    return vals;
}

// Brute-force nearest finite E4M3 value with IEEE ties-to-even: on an exact
// tie the value whose magnitude is an even multiple of the local step wins.
static double ref_nearest_e4m3(double x) {
    static const std::vector<double> all = ref_e4m3_all_finite();
    if (x > 448.0) return 448.0;
    if (x < -448.0) return -448.0;
    double best = all[0];
    double bestd = std::fabs(x - best);
    for (double v : all) {
        double d = std::fabs(x - v);
        if (d < bestd) {
            best = v;
            bestd = d;
        } else if (d == bestd && v != best) {
            // Adjacent values: step is their gap; even multiple of it wins.
            double step = std::fabs(v - best);
            bool v_even = std::fmod(std::fabs(v) / step, 2.0) == 0.0;
            bool b_even = std::fmod(std::fabs(best) / step, 2.0) == 0.0;
            if (v_even && !b_even) best = v;
        }
    }
    return best == 0.0 ? 0.0 : best;
}

// ---------------------------------------------------------------------------

TEST_CASE("e2m1 codebook matches the frozen enumeration") {
    const auto& cb = e2m1_codebook();
    REQUIRE(cb.size() == 15);
    for (int i = 0; i < 15; ++i) {
        CHECK(cb[i].second == kRefFp4[i]);
        CHECK(decode_e2m1(cb[i].first) == kRefFp4[i]);
    }
    // Sorted, no duplicates, no negative zero.
    for (int i = 1; i < 15; ++i) CHECK(cb[i - 1].second < cb[i].second);
    for (const auto& [code, val] : cb) CHECK(code.bits != 0x8);
    // Stable across calls.
    CHECK(&e2m1_codebook() == &cb);
}

TEST_CASE("decode_e2m1 covers all 16 nibbles") {
    // Bit layout: [sign][e1][e0][m]; subnormal pair at exp 0.
    CHECK(decode_e2m1(Fp4Code{0x0}) == 0.0);
    CHECK(decode_e2m1(Fp4Code{0x1}) == 0.5);
    CHECK(decode_e2m1(Fp4Code{0x2}) == 1.0);
    CHECK(decode_e2m1(Fp4Code{0x3}) == 1.5);
    CHECK(decode_e2m1(Fp4Code{0x4}) == 2.0);
    CHECK(decode_e2m1(Fp4Code{0x5}) == 3.0);
    CHECK(decode_e2m1(Fp4Code{0x6}) == 4.0);
    CHECK(decode_e2m1(Fp4Code{0x7}) == 6.0);
    for (int b = 0x9; b <= 0xf; ++b)
        CHECK(decode_e2m1(Fp4Code{static_cast<std::uint8_t>(b)}) ==
              -decode_e2m1(Fp4Code{static_cast<std::uint8_t>(b & 0x7)}));
    CHECK(std::signbit(decode_e2m1(Fp4Code{0x8})));  // -0, decodable but never encoded
}

TEST_CASE("quantize_e2m1 spot values") {
    CHECK(decode_e2m1(quantize_e2m1(1.3)) == 1.5);
    CHECK(quantize_e2m1(0.0).bits == 0x0);
    CHECK(quantize_e2m1(-0.0).bits == 0x0);  // negative zero never produced
    CHECK(decode_e2m1(quantize_e2m1(5.2)) == 6.0);
    CHECK(decode_e2m1(quantize_e2m1(-5.2)) == -6.0);
    CHECK(decode_e2m1(quantize_e2m1(1e9)) == 6.0);
    CHECK_THROWS_AS(quantize_e2m1(std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(quantize_e2m1(HUGE_VAL), std::invalid_argument);
}

TEST_CASE("quantize_e2m1 round-trips every codebook entry") {
    for (const auto& [code, val] : e2m1_codebook()) {
        CHECK(decode_e2m1(quantize_e2m1(val)) == val);
        if (val != 0.0) CHECK(quantize_e2m1(val) == code);
    }
}

TEST_CASE("quantize_e2m1 is nearest-value optimal on random inputs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 100000; ++i) {
        double x = u(rng);
        double got = decode_e2m1(quantize_e2m1(x));
        for (double v : kRefFp4) CHECK(std::fabs(x - got) <= std::fabs(x - v));
    }
}

TEST_CASE("quantize_e2m1 tie handling matches the even-significand oracle") {
    // Every exact midpoint of adjacent codebook values, both signs.
    const double mids[] = {0.25, 0.75, 1.25, 1.75, 2.5, 3.5, 5.0};
    for (double m : mids) {
        CHECK(decode_e2m1(quantize_e2m1(m)) == ref_nearest_fp4(m));
        CHECK(decode_e2m1(quantize_e2m1(-m)) == ref_nearest_fp4(-m));
    }
    // Frozen expectations for the record.
    CHECK(decode_e2m1(quantize_e2m1(0.25)) == 0.0);
    CHECK(decode_e2m1(quantize_e2m1(0.75)) == 1.0);
    CHECK(decode_e2m1(quantize_e2m1(1.25)) == 1.0);
    CHECK(decode_e2m1(quantize_e2m1(1.75)) == 2.0);
    CHECK(decode_e2m1(quantize_e2m1(2.5)) == 2.0);
    CHECK(decode_e2m1(quantize_e2m1(3.5)) == 4.0);
    CHECK(decode_e2m1(quantize_e2m1(5.0)) == 4.0);
}

TEST_CASE("piecewise_round spot values and saturation") {
    CHECK(piecewise_round(2.4) == 2.0);
    CHECK(piecewise_round(3.5) == 4.0);
    CHECK(piecewise_round(7.0) == 6.0);
    CHECK(piecewise_round(-7.0) == -6.0);
    CHECK(piecewise_round(0.0) == 0.0);
    CHECK_FALSE(std::signbit(piecewise_round(-0.1)));  // canonical +0
    CHECK_THROWS_AS(piecewise_round(std::nan("")), std::invalid_argument);
}

TEST_CASE("piecewise_round equals decode(quantize_e2m1) across a dense sweep") {
    // Step 2^-12 lands exactly on every midpoint breakpoint.
    const double step = std::ldexp(1.0, -12);
    for (long k = -8 * 4096; k <= 8 * 4096; ++k) {
        double t = static_cast<double>(k) * step;
        double a = piecewise_round(t);
        double b = decode_e2m1(quantize_e2m1(t));
        REQUIRE(a == b);
    }
}

TEST_CASE("quantize_e2m1 is monotone and symmetric") {
    const double step = std::ldexp(1.0, -10);
    double prev = decode_e2m1(quantize_e2m1(-8.0));
    for (long k = -8 * 1024 + 1; k <= 8 * 1024; ++k) {
        double t = static_cast<double>(k) * step;
        double v = decode_e2m1(quantize_e2m1(t));
        REQUIRE(v >= prev);
        prev = v;
    }
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 8.0);
    for (int i = 0; i < 10000; ++i) {
        double x = u(rng);
        CHECK(decode_e2m1(quantize_e2m1(-x)) == -decode_e2m1(quantize_e2m1(x)));
    }
}

// ---------------------------------------------------------------------------

TEST_CASE("e4m3 value set matches the independent enumeration") {
    auto all = ref_e4m3_all_finite();
    CHECK(all.size() == 254);  // 256 codes minus two NaN encodings
    double maxv = 0.0, min_pos = 1e30;
    for (double v : all) {
        maxv = std::max(maxv, v);
        if (v > 0) min_pos = std::min(min_pos, v);
    }
    CHECK(maxv == 448.0);
    CHECK(min_pos == std::ldexp(1.0, -9));
    CHECK(kE4M3Max == 448.0);
    CHECK(kE4M3MinSubnormal == std::ldexp(1.0, -9));
    CHECK(kE4M3MinNormal == std::ldexp(1.0, -6));
}

TEST_CASE("decode_e4m3 round-trips all 254 finite values") {
    for (int bits = 0; bits < 256; ++bits) {
        if ((bits & 0x7f) == 0x7f) {
            CHECK_THROWS_AS(decode_e4m3(E4M3Value{static_cast<std::uint8_t>(bits)}),
                            std::invalid_argument);
            continue;
        }
        double v = decode_e4m3(E4M3Value{static_cast<std::uint8_t>(bits)});
        CHECK(decode_e4m3(quantize_e4m3(v)) == v);  // value-exact round trip
    }
}

TEST_CASE("quantize_e4m3 spot values") {
    CHECK(decode_e4m3(quantize_e4m3(2.0)) == 2.0);
    CHECK(decode_e4m3(quantize_e4m3(300.0)) == 288.0);
    CHECK(decode_e4m3(quantize_e4m3(1000.0)) == 448.0);
    CHECK(decode_e4m3(quantize_e4m3(-1000.0)) == -448.0);
    CHECK(quantize_e4m3(0.0).bits == 0x00);
    CHECK(quantize_e4m3(-0.0).bits == 0x00);
    CHECK_THROWS_AS(quantize_e4m3(HUGE_VAL), std::invalid_argument);
}

TEST_CASE("quantize_e4m3 is nearest with ties-to-even on random and midpoint inputs") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-500.0, 500.0);
    for (int i = 0; i < 20000; ++i) {
        double x = u(rng);
        CHECK(decode_e4m3(quantize_e4m3(x)) == ref_nearest_e4m3(x));
    }
    // Every exact midpoint of adjacent positive values.
    auto all = ref_e4m3_all_finite();
    std::vector<double> pos;
    for (double v : all)
        if (v >= 0) pos.push_back(v);
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    for (size_t i = 0; i + 1 < pos.size(); ++i) {
        double mid = 0.5 * (pos[i] + pos[i + 1]);
        CHECK(decode_e4m3(quantize_e4m3(mid)) == ref_nearest_e4m3(mid));
        CHECK(decode_e4m3(quantize_e4m3(-mid)) == ref_nearest_e4m3(-mid));
    }
}

TEST_CASE("quantize_e4m3 is monotone") {
    double prev = -448.0;
    for (long k = -450 * 8; k <= 450 * 8; ++k) {
        double v = decode_e4m3(quantize_e4m3(k / 8.0));
        REQUIRE(v >= prev);
        prev = v;
    }
}

TEST_CASE("e4m3_neighbors spot values and ordering") {
    auto dec = [](const std::vector<E4M3Value>& vs) {
        std::vector<double> out;
        for (auto v : vs) out.push_back(decode_e4m3(v));
        return out;
    };
    CHECK(dec(e4m3_neighbors(1.05, 2)) == std::vector<double>{1.0, 1.125});
    CHECK(dec(e4m3_neighbors(2.0, 2)) == std::vector<double>{2.0, 1.875});
    CHECK(dec(e4m3_neighbors(896.0, 2)) == std::vector<double>{448.0, 416.0});
    // Sorted by distance then value; all positive and distinct.
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(1e-4, 500.0);
    for (int i = 0; i < 2000; ++i) {
        double x = u(rng);
        auto vs = dec(e4m3_neighbors(x, 4));
        REQUIRE(vs.size() == 4);
        for (size_t j = 0; j < vs.size(); ++j) {
            CHECK(vs[j] > 0.0);
            if (j > 0) {
                double dp = std::fabs(vs[j - 1] - x), dc = std::fabs(vs[j] - x);
                CHECK((dp < dc || (dp == dc && vs[j - 1] < vs[j])));
            }
        }
    }
    CHECK_THROWS_AS(e4m3_neighbors(0.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(e4m3_neighbors(-1.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(e4m3_neighbors(1.0, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST_CASE("quantize_e8m0 floors to a power of two") {
    CHECK(quantize_e8m0(8.0).exponent == 3);
    CHECK(quantize_e8m0(12.0).exponent == 3);
    CHECK(quantize_e8m0(0.7).exponent == -1);
    CHECK(decode_e8m0(quantize_e8m0(1.0)) == 1.0);
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-120.0, 120.0);
    for (int i = 0; i < 20000; ++i) {
        double x = std::exp2(u(rng)) * (1.0 + 0.9 * std::generate_canonical<double, 53>(rng));
        double s = decode_e8m0(quantize_e8m0(x));
        CHECK(s <= x);
        CHECK(2.0 * s > x);
    }
    // Clamped at the range ends.
    CHECK(quantize_e8m0(std::ldexp(1.0, 140)).exponent == 127);
    CHECK(quantize_e8m0(std::ldexp(1.0, -140)).exponent == -127);
    CHECK_THROWS_AS(quantize_e8m0(0.0), std::invalid_argument);
    CHECK_THROWS_AS(quantize_e8m0(-2.0), std::invalid_argument);
}

TEST_CASE("e8m0_neighbors ordering") {
    auto ns = e8m0_neighbors(3.0, 2);  // between 2 and 4, equidistant -> smaller first
    REQUIRE(ns.size() == 2);
    CHECK(decode_e8m0(ns[0]) == 2.0);
    CHECK(decode_e8m0(ns[1]) == 4.0);
    ns = e8m0_neighbors(5.0, 3);  // 4 (d=1), 8 (d=3), 2 (d=3) -> value breaks the tie
    CHECK(decode_e8m0(ns[0]) == 4.0);
    CHECK(decode_e8m0(ns[1]) == 2.0);
    CHECK(decode_e8m0(ns[2]) == 8.0);
}
