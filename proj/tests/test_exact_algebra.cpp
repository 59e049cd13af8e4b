#include <gtest/gtest.h>

#include <random>

#include "qtframe/jet.hpp"
#include "testutil.hpp"

using namespace qtframe;

TEST(QScalar, Basics) {
    EXPECT_EQ(QScalar(1).inv(), QScalar(1));
    EXPECT_EQ(QScalar::sqrt_of(2) * QScalar::sqrt_of(2), QScalar(2));
    QScalar c = QScalar::sqrt_of(2) * QScalar(Rational(1, 272)) * QScalar::i();
    EXPECT_EQ(c.conj(), -c);
    EXPECT_EQ(QScalar::sqrt_of(8), QScalar(2) * QScalar::sqrt_of(2));
    EXPECT_EQ(QScalar::sqrt_of(1), QScalar(1));
    EXPECT_THROW(QScalar(0).inv(), DivisionByZero);
    EXPECT_THROW(QScalar::sqrt_of(2) + QScalar::sqrt_of(3), FieldMismatch);
    EXPECT_TRUE((QScalar::sqrt_of(2) - QScalar::sqrt_of(2)).is_zero());
}

TEST(QScalar, FieldAxiomsRandomized) {
    std::mt19937 rng(7);
    for (int t = 0; t < 200; ++t) {
        QScalar x = testutil::random_scalar(rng, 2), y = testutil::random_scalar(rng, 2),
                z = testutil::random_scalar(rng, 2);
        EXPECT_EQ((x + y) + z, x + (y + z));
        EXPECT_EQ((x * y) * z, x * (y * z));
        EXPECT_EQ(x * (y + z), x * y + x * z);
        EXPECT_EQ(x * y, y * x);
        EXPECT_EQ((x * y).conj(), x.conj() * y.conj());
        if (!x.is_zero()) {
            EXPECT_EQ(x * x.inv(), QScalar(1));
        }
    }
}

TEST(Laurent, RingExamples) {
    auto z1 = LaurentPoly::var(2, 0), z2 = LaurentPoly::var(2, 1);
    LaurentPoly one(2, QScalar(1));
    EXPECT_EQ((one - z1) * (one + z1), one - z1 * z1);
    EXPECT_TRUE(((one - z1) * LaurentPoly(2)).is_zero());
    LaurentPoly p = (one - z1) * (one - z2);
    ASSERT_EQ(p.size(), 4u);
    EXPECT_EQ(p.coeff({0, 0}), QScalar(1));
    EXPECT_EQ(p.coeff({1, 0}), QScalar(-1));
    EXPECT_EQ(p.coeff({0, 1}), QScalar(-1));
    EXPECT_EQ(p.coeff({1, 1}), QScalar(1));
    EXPECT_THROW(LaurentPoly::var(2, 0) + LaurentPoly::var(3, 0), DimensionMismatch);
}

TEST(Laurent, StarAndUpsample) {
    auto z1 = LaurentPoly::var(2, 0);
    LaurentPoly one(2, QScalar(1));
    EXPECT_EQ(z1.star(), LaurentPoly::monomial({-1, 0}));
    EXPECT_EQ(LaurentPoly(2, QScalar::i()).star(), LaurentPoly(2, -QScalar::i()));
    EXPECT_EQ((one - z1).star(), one - LaurentPoly::monomial({-1, 0}));
    IntMatrix M = int_matrix({{1, 1}, {1, -1}});
    EXPECT_EQ(z1.upsample(M), LaurentPoly::monomial({1, 1}));
    EXPECT_EQ(LaurentPoly(2, QScalar(5)).upsample(M), LaurentPoly(2, QScalar(5)));
    std::mt19937 rng(3);
    for (int t = 0; t < 50; ++t) {
        LaurentPoly p = testutil::random_poly(rng, 2, 6, 3);
        EXPECT_EQ(p.upsample(M).upsample(M), p.upsample(M * M));
        EXPECT_EQ(p.upsample(M).size(), p.size());
        EXPECT_EQ(p.star().star(), p);
    }
}

TEST(Laurent, RingLawsRandomized) {
    std::mt19937 rng(11);
    for (int t = 0; t < 120; ++t) {
        int d = 1 + t % 3;
        auto p = testutil::random_poly(rng, d, 8, 2), q = testutil::random_poly(rng, d, 8, 2),
             s = testutil::random_poly(rng, d, 8, 2);
        EXPECT_EQ((p + q) + s, p + (q + s));
        EXPECT_EQ((p * q) * s, p * (q * s));
        EXPECT_EQ(p * q, q * p);
        EXPECT_EQ(p * (q + s), p * q + p * s);
        EXPECT_EQ((p * q).star(), p.star() * q.star());
        EXPECT_EQ(lp_jet(p * q, 4), lp_jet(p, 4) * lp_jet(q, 4));
        if (!q.is_zero()) {
            EXPECT_EQ((p * q).exact_div(q), p);
        }
    }
}

TEST(Jet, Examples) {
    auto z1 = LaurentPoly::var(2, 0), z2 = LaurentPoly::var(2, 1);
    LaurentPoly one(2, QScalar(1));
    Jet j = lp_jet(one - z1, 2);
    EXPECT_EQ(j.terms().size(), 1u);
    EXPECT_EQ(j.coeff({1, 0}), QScalar::i());
    EXPECT_EQ(lp_jet(LaurentPoly(2, QScalar(7)), 3).terms().size(), 1u);
    Jet k = lp_jet(z1 * z2, 2);
    EXPECT_EQ(k.coeff({0, 0}), QScalar(1));
    EXPECT_EQ(k.coeff({1, 0}), -QScalar::i());
    EXPECT_EQ(k.coeff({0, 1}), -QScalar::i());

    Jet a(2, 2, QScalar(1));
    a.add_term({1, 0}, 1);
    Jet r = a.reciprocal();
    EXPECT_EQ(r.coeff({0, 0}), QScalar(1));
    EXPECT_EQ(r.coeff({1, 0}), QScalar(-1));
    EXPECT_EQ(a * r, Jet(2, 2, QScalar(1)));
    EXPECT_THROW(Jet(2, 2).reciprocal(), ZeroAtOrigin);

    Jet x1(2, 2);
    x1.add_term({1, 0}, 1);
    QMatrix Minv = inverse(to_qmatrix(int_matrix({{1, 1}, {1, -1}})));
    Jet c = x1.compose_linear(Minv);
    EXPECT_EQ(c.coeff({1, 0}), QScalar(Rational(1, 2)));
    EXPECT_EQ(c.coeff({0, 1}), QScalar(Rational(1, 2)));
}

TEST(Jet, ConjMatchesStar) {
    // jet(star p) is the pointwise conjugate of jet(p) for real xi
    std::mt19937 rng(5);
    for (int t = 0; t < 60; ++t) {
        auto p = testutil::random_poly(rng, 2, 6, 3);
        EXPECT_EQ(lp_jet(p.star(), 5), lp_jet(p, 5).conj());
        EXPECT_EQ(lp_jet(p.reflect(), 5), lp_jet(p, 5).reflect());
    }
}

TEST(Jet, UpsampleCommutesWithJet) {
    std::mt19937 rng(9);
    IntMatrix Ms[] = {int_matrix({{1, 1}, {1, -1}}), int_matrix({{2, 0}, {0, 2}}), int_matrix({{2, 1}, {0, 2}})};
    for (int t = 0; t < 60; ++t) {
        auto p = testutil::random_poly(rng, 2, 5, 3);
        const IntMatrix& M = Ms[t % 3];
        EXPECT_EQ(lp_jet(p.upsample(M), 5), lp_jet(p, 5).compose_linear(to_qmatrix(M.transpose())));
    }
}

TEST(TrigMatrix, Products) {
    auto a = testutil::goodman_mask();
    EXPECT_EQ(a * tm_identity(2, 2), a);
    EXPECT_EQ(tm_star(tm_star(a)), a);
    JetMatrix g = tm_jet(tm_star(a) * a, 1);
    EXPECT_EQ(g(0, 0).constant_term(), QScalar(Rational(1, 2)));
    std::mt19937 rng(1);
    for (int t = 0; t < 20; ++t) {
        auto A = testutil::random_tm(rng, 2, 3, 2, 3), B = testutil::random_tm(rng, 2, 2, 3, 3);
        EXPECT_EQ(tm_star(A * B), tm_star(B) * tm_star(A));
    }
}

TEST(TrigMatrix, DeterminantAndInverse) {
    auto p = LaurentPoly::var(2, 0) + LaurentPoly(2, QScalar(3));
    EXPECT_EQ(tm_det(tm_identity(3, 2)), LaurentPoly(2, QScalar(1)));
    TrigMatrix U = tm_identity(2, 2);
    U(0, 1) = p;
    EXPECT_EQ(tm_det(U), LaurentPoly(2, QScalar(1)));
    TrigMatrix Ui = tm_strong_inverse(U);
    EXPECT_EQ(Ui(0, 1), -p);
    TrigMatrix D = tm_identity(2, 2);
    D(0, 0) = LaurentPoly::var(2, 0);
    EXPECT_EQ(tm_strong_inverse(D)(0, 0), LaurentPoly::monomial({-1, 0}));
    TrigMatrix N = tm_identity(2, 2);
    N(1, 1) = LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 0);
    EXPECT_THROW(tm_strong_inverse(N), DetNotMonomial);

    std::mt19937 rng(21);
    for (int t = 0; t < 30; ++t) {
        size_t n = 2 + t % 3;
        TrigMatrix A = testutil::random_unimodular(rng, n, 2);
        TrigMatrix Ai = tm_strong_inverse(A);
        EXPECT_EQ(A * Ai, tm_identity(n, 2));
        EXPECT_EQ(Ai * A, tm_identity(n, 2));
        // Bareiss agrees with cofactor expansion on a random full matrix
        TrigMatrix R = testutil::random_tm(rng, 2, n, n, 2);
        LaurentPoly cof(2);
        for (size_t j = 0; j < n; ++j) {
            LaurentPoly m = tm_det(tm_minor(R, 0, j));
            cof += (j % 2 ? -m : m) * R(0, j);
        }
        EXPECT_EQ(tm_det(R), cof);
    }
}

namespace {

mpz_class big(std::mt19937& rng, int bits, bool pos) {
    mpz_class x = 0;
    for (int b = 0; b < bits; b += 16) x = (x << 16) + long(rng() & 0xffff);
    if (pos) return mpz_class(x + 1);
    return (rng() & 1) ? mpz_class(-x) : x;
}

// numerators of about `bits` bits over one shared denominator: the size selects the accumulation width
QScalar wide_scalar(std::mt19937& rng, int bits, const mpz_class& den, bool im, bool rad) {
    auto q = [&] { return Rational(big(rng, bits, false), den); };
    GRat a(q(), im ? q() : Rational(0)), b;
    if (rad) b = GRat(q(), im ? q() : Rational(0));
    return QScalar(a, b, rad ? 3 : 0);
}

LaurentPoly naive_product(const LaurentPoly& a, const LaurentPoly& b) {
    LaurentPoly r(a.dim());
    for (auto& [k1, c1] : a.terms())
        for (auto& [k2, c2] : b.terms()) r.add_term(k1 + k2, c1 * c2);
    return r;
}

}  // namespace

TEST(Laurent, ProductKernelMatchesTermwise) {
    std::mt19937 rng(61);
    // 20 bits: 128-bit words; 120 and 300: residues; 500: multiprecision
    for (int bits : {20, 120, 300, 500}) {
        for (int t = 0; t < 8; ++t) {
            bool im = t & 1, rad = t & 2, sparse = t & 4;
            int d = 1 + t % 3;
            auto poly = [&] {
                LaurentPoly p(d);
                mpz_class den = big(rng, bits, true);
                std::uniform_int_distribution<int> e(sparse ? -40 : -3, sparse ? 40 : 3);
                for (int n = 0; n < 12; ++n) {
                    MultiIndex k(d);
                    for (int j = 0; j < d; ++j) k[j] = e(rng);
                    p.add_term(k, wide_scalar(rng, bits, den, im, rad));
                }
                return p;
            };
            LaurentPoly a = poly(), b = poly(), c = poly(), e = poly();
            EXPECT_EQ(a * b, naive_product(a, b)) << bits << " bits, case " << t;
            // fused sums over pairs with different denominators
            TrigMatrix row = tm_zero(1, 2, d), col = tm_zero(2, 1, d);
            row(0, 0) = a;
            row(0, 1) = c;
            col(0, 0) = b;
            col(1, 0) = e;
            EXPECT_EQ((row * col)(0, 0), naive_product(a, b) + naive_product(c, e)) << bits << " bits, case " << t;
        }
    }
}
