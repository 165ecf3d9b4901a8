#include <doctest.h>

#include <cmath>

#include "mergerlab/errors.hpp"
#include "mergerlab/linalg.hpp"
#include "mergerlab/rng.hpp"

using namespace mergerlab;

TEST_CASE("philox4x64-10 known answers") {
    // Reference outputs from an independent Philox implementation; the
    // reference generator emits the block at counter+1, so these counters
    // are already offset.
    auto out = PhiloxRng::block({1, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x02f4ba6408e4d89bull);
    CHECK(out[1] == 0x3dd62b0b9ca8c5b2ull);
    CHECK(out[2] == 0x1c8667a55d902e79ull);
    CHECK(out[3] == 0x907d7a052fd5b4dcull);

    out = PhiloxRng::block({2, 0, 0, 0}, {0, 0});
    CHECK(out[0] == 0x809bf322883987c3ull);
    CHECK(out[1] == 0x471128b9e807f7ddull);
    CHECK(out[2] == 0xf250ba0dbec065b7ull);
    CHECK(out[3] == 0xfc6ed66767a457bcull);

    out = PhiloxRng::block({1, 0, 0, 0}, {1, 0});
    CHECK(out[0] == 0x4db6a27b756282dfull);
    CHECK(out[3] == 0x07f697696a0482a2ull);

    out = PhiloxRng::block({0x12345679ull, 0x9abcdef0ull, 0xfedcba98ull, 0x76543210ull},
                           {0xdeadbeefull, 0xcafef00dull});
    CHECK(out[0] == 0x9ae183427224c997ull);
    CHECK(out[1] == 0x8a49f801b4ced78dull);
    CHECK(out[2] == 0xf056f1d66b64800eull);
    CHECK(out[3] == 0x3cbe583d137a77c5ull);

    out = PhiloxRng::block({8, 42, 0, 0}, {12345, 0});
    CHECK(out[0] == 0x422a09fb1aa336e7ull);
    CHECK(out[1] == 0xebb78f165d10f4abull);
    CHECK(out[2] == 0x179df4822064131dull);
    CHECK(out[3] == 0x6070ead14cb64fd5ull);
}

TEST_CASE("philox streams are independent and reproducible") {
    PhiloxRng a(99, 0), b(99, 0), c(99, 1);
    bool all_equal = true, any_equal = false;
    for (int i = 0; i < 100; ++i) {
        const double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
        all_equal = all_equal && ua == ub;
        any_equal = any_equal || ua == uc;
        CHECK(ua > 0.0);
        CHECK(ua < 1.0);
    }
    CHECK(all_equal);
    CHECK_FALSE(any_equal);
}

TEST_CASE("normal quantile against reference values") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_quantile(0.025) == doctest::Approx(-1.9599639845400545).epsilon(1e-12));
    CHECK(normal_quantile(0.05) == doctest::Approx(-1.6448536269514729).epsilon(1e-12));
    CHECK(normal_quantile(0.005) == doctest::Approx(-2.575829303548901).epsilon(1e-12));
    CHECK(normal_quantile(0.8) == doctest::Approx(0.8416212335729143).epsilon(1e-12));
    CHECK(normal_quantile(0.31415) == doctest::Approx(-0.4841209978683122).epsilon(1e-12));
    CHECK(normal_quantile(1e-9) == doctest::Approx(-5.9978070150076865).epsilon(1e-12));
    CHECK(normal_quantile(1e-12) == doctest::Approx(-7.034483825301131).epsilon(1e-12));
    CHECK(normal_quantile(0.9999999) == doctest::Approx(5.199337582290661).epsilon(1e-12));

    // round trip through the normal CDF via erfc
    for (double p : {0.001, 0.01, 0.1, 0.3, 0.5, 0.77, 0.95, 0.999}) {
        const double q = normal_quantile(p);
        const double back = 0.5 * std::erfc(-q / std::sqrt(2.0));
        CHECK(back == doctest::Approx(p).epsilon(1e-9));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), InvalidInput);
    CHECK_THROWS_AS(normal_quantile(1.0), InvalidInput);
}

TEST_CASE("normal draws have the right moments") {
    PhiloxRng rng(2024, 5);
    double m = 0.0, v = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        m += z;
        v += z * z;
    }
    m /= n;
    v = v / n - m * m;
    CHECK(std::abs(m) < 0.01);
    CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("lu_solve recovers known solutions and flags singularity") {
    Mat a(3, 3);
    a(0, 0) = 4; a(0, 1) = 1; a(0, 2) = 0;
    a(1, 0) = 1; a(1, 1) = 3; a(1, 2) = 1;
    a(2, 0) = 0; a(2, 1) = 1; a(2, 2) = 2;
    Vec xtrue{1.0, -2.0, 0.5};
    Vec b = matvec(a, xtrue);
    Vec x;
    REQUIRE(lu_solve(a, b, x));
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(xtrue[i]).epsilon(1e-13));

    Mat s(2, 2);
    s(0, 0) = 1; s(0, 1) = 2;
    s(1, 0) = 2; s(1, 1) = 4;
    CHECK_FALSE(lu_solve(s, {1.0, 2.0}, x));

    Mat ns(2, 2);
    ns(0, 0) = 1; ns(0, 1) = 1;
    ns(1, 0) = 1; ns(1, 1) = 1 + 1e-14;
    CHECK_FALSE(lu_solve(ns, {1.0, 2.0}, x));
}

TEST_CASE("qr least squares matches a high-precision normal-equation oracle") {
    PhiloxRng rng(7, 0);
    const std::size_t n = 60, k = 4;
    Mat a(n, k);
    Vec b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, 0) = 1.0;
        for (std::size_t j = 1; j < k; ++j) a(i, j) = rng.normal();
        b[i] = rng.normal() + 2.0 * a(i, 1);
    }
    const Vec x = qr_least_squares(a, b);

    // oracle: normal equations accumulated and solved in long double
    long double ata[4][4] = {};
    long double atb[4] = {};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c)
                ata[r][c] += static_cast<long double>(a(i, r)) * a(i, c);
            atb[r] += static_cast<long double>(a(i, r)) * b[i];
        }
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t r = p + 1; r < k; ++r) {
            const long double f = ata[r][p] / ata[p][p];
            for (std::size_t c = p; c < k; ++c) ata[r][c] -= f * ata[p][c];
            atb[r] -= f * atb[p];
        }
    long double xo[4];
    for (std::size_t r = k; r-- > 0;) {
        long double s = atb[r];
        for (std::size_t c = r + 1; c < k; ++c) s -= ata[r][c] * xo[c];
        xo[r] = s / ata[r][r];
    }
    for (std::size_t j = 0; j < k; ++j)
        CHECK(x[j] == doctest::Approx(static_cast<double>(xo[j])).epsilon(1e-10));

    Mat rank_def(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        rank_def(i, 0) = 1.0;
        rank_def(i, 1) = 2.0;
    }
    CHECK_THROWS_AS(qr_least_squares(rank_def, Vec(5, 1.0)), RankDeficientDesign);
}

TEST_CASE("cholesky factor reproduces the shock covariance") {
    Mat a(2, 2);
    a(0, 0) = 1.0; a(0, 1) = 0.9;
    a(1, 0) = 0.9; a(1, 1) = 1.0;
    const Mat l = cholesky_lower(a);
    CHECK(l(0, 0) == doctest::Approx(1.0));
    CHECK(l(1, 0) == doctest::Approx(0.9));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(0.19)));
}
