#include <gtest/gtest.h>

#include <random>

#include "qtframe/lattice.hpp"
#include "testutil.hpp"

using namespace qtframe;

namespace {

const IntMatrix kMs[] = {int_matrix({{1, 1}, {1, -1}}), int_matrix({{2, 0}, {0, 2}}), int_matrix({{2, 1}, {0, 2}})};

RatVec rv(std::initializer_list<Rational> v) { return RatVec(v); }

}  // namespace

TEST(Dilation, Validation) {
    EXPECT_EQ(validate_dilation(kMs[0]).dm(), 2);
    EXPECT_EQ(validate_dilation(kMs[1]).dm(), 4);
    EXPECT_THROW(validate_dilation(int_matrix({{1, 0}, {0, 2}})), NotExpanding);
    EXPECT_THROW(validate_dilation(int_matrix({{1, 0}, {0, 1}})), NotExpanding);
    EXPECT_THROW(validate_dilation(int_matrix({{2, 4}, {1, 2}})), Singular);
    EXPECT_THROW(validate_dilation(int_matrix({{1, 1}, {0, 1}})), NotExpanding);
    // eigenvalues 1 +- i have modulus sqrt 2
    EXPECT_NO_THROW(validate_dilation(int_matrix({{1, -1}, {1, 1}})));
    // eigenvalues 3 and 1/... : [[2,1],[1,1]] has 0.38 < 1
    EXPECT_THROW(validate_dilation(int_matrix({{2, 1}, {1, 1}})), NotExpanding);
    EXPECT_NO_THROW(validate_dilation(int_matrix({{3}})));
    EXPECT_THROW(validate_dilation(int_matrix({{-1}})), NotExpanding);
}

TEST(Cosets, Representatives) {
    CosetSystem q(kMs[0]);
    ASSERT_EQ(q.gamma().size(), 2u);
    EXPECT_EQ(q.gamma()[0], MultiIndex({0, 0}));
    EXPECT_EQ(q.gamma()[1], MultiIndex({1, 0}));
    EXPECT_EQ(q.omega()[1], rv({Rational(1, 2), Rational(1, 2)}));
    CosetSystem t(kMs[1]);
    ASSERT_EQ(t.gamma().size(), 4u);
    EXPECT_EQ(t.gamma()[1], MultiIndex({1, 0}));
    EXPECT_EQ(t.gamma()[2], MultiIndex({0, 1}));
    EXPECT_EQ(t.gamma()[3], MultiIndex({1, 1}));
    EXPECT_EQ(t.omega()[3], rv({Rational(1, 2), Rational(1, 2)}));
    for (const auto& M : kMs) {
        CosetSystem cs(M);
        for (size_t i = 0; i < cs.gamma().size(); ++i)
            for (size_t j = 0; j < cs.gamma().size(); ++j) {
                MultiIndex q0;
                EXPECT_EQ(cs.reduce(cs.gamma()[i], cs.gamma()[j], q0), i == j);
            }
    }
}

TEST(Cosets, SplitGoodman) {
    CosetSystem cs(kMs[0]);
    TrigMatrix a = testutil::goodman_mask();
    auto parts = coset_split(a, cs);
    // (-1,0) - (1,0) = M(-1,-1)
    EXPECT_FALSE(parts[1](0, 1).coeff({-1, -1}).is_zero());
    EXPECT_TRUE(parts[0](1, 0).is_zero());
    TrigMatrix delta = tm_identity(1, 2);
    auto dp = coset_split(delta, cs);
    EXPECT_EQ(dp[0], delta);
    EXPECT_TRUE(dp[1].is_zero());
}

TEST(Cosets, SplitMergeRoundTrip) {
    std::mt19937 rng(17);
    for (int t = 0; t < 120; ++t) {
        CosetSystem cs(kMs[t % 3]);
        TrigMatrix u = testutil::random_tm(rng, 2, 1 + t % 2, 2, 6);
        EXPECT_EQ(coset_merge(coset_split(u, cs), cs), u);
        EXPECT_EQ(bank_Q_merge(bank_Q(u, cs), cs), u);
    }
}

TEST(BankMatrices, FourierExample) {
    CosetSystem cs(kMs[0]);
    TrigMatrix F = bank_F(1, cs);
    EXPECT_EQ(F(0, 0), LaurentPoly(2, QScalar(1)));
    EXPECT_EQ(F(0, 1), LaurentPoly(2, QScalar(1)));
    EXPECT_EQ(F(1, 0), LaurentPoly::var(2, 0));
    EXPECT_EQ(F(1, 1), -LaurentPoly::var(2, 0));
}

TEST(BankMatrices, Identities) {
    std::mt19937 rng(23);
    int cases = 0;
    for (int t = 0; t < 18; ++t) {
        CosetSystem cs(kMs[t % 3]);
        size_t r = 1 + t % 2;
        TrigMatrix F = bank_F(r, cs);
        TrigMatrix dI = tm_scale(tm_identity(r * cs.dm(), 2), QScalar(cs.dm()));
        EXPECT_EQ(tm_star(F) * F, dI);
        EXPECT_EQ(F * tm_star(F), dI);
        TrigMatrix u = testutil::random_tm(rng, 2, r, r, 5, 1);
        for (const auto& w : cs.omega()) {
            TrigMatrix lhs = F * bank_D(u, cs, w) * tm_star(F);
            TrigMatrix rhs = tm_scale(tm_upsample(bank_E(u, cs, w), cs.M()), QScalar(cs.dm()));
            EXPECT_EQ(lhs, rhs);
            ++cases;
        }
        TrigMatrix b = testutil::random_tm(rng, 2, 3, r, 5, 1);
        EXPECT_EQ(bank_P(b, cs), tm_upsample(bank_Q(b, cs), cs.M()) * F);
    }
    EXPECT_GE(cases, 50);
}

TEST(BankMatrices, CosetAlgebra) {
    std::mt19937 rng(29);
    for (int t = 0; t < 30; ++t) {
        CosetSystem cs(kMs[t % 3]);
        TrigMatrix v = testutil::random_tm(rng, 2, 1, 2, 5), u = testutil::random_tm(rng, 2, 2, 2, 5),
                   w = testutil::random_tm(rng, 2, 2, 2, 5);
        EXPECT_EQ(bank_Q(v * u, cs), bank_Q(v, cs) * bank_E0(u, cs));
        EXPECT_EQ(bank_E0(u * w, cs), bank_E0(u, cs) * bank_E0(w, cs));
        EXPECT_EQ(bank_E0(tm_star(u), cs), tm_star(bank_E0(u, cs)));
        TrigMatrix first = tm_zero(2, 2 * cs.dm(), 2);
        first.set_block(0, 0, tm_identity(2, 2));
        EXPECT_EQ(bank_Q(u, cs), first * bank_E0(u, cs));
        // Q_{c(M^T .) v} = c Q_v
        TrigMatrix c = testutil::random_tm(rng, 2, 1, 1, 3);
        EXPECT_EQ(bank_Q(tm_upsample(c, cs.M()) * v, cs), c * bank_Q(v, cs));
    }
    EXPECT_EQ(bank_E0(tm_identity(1, 2), CosetSystem(kMs[2])), tm_identity(4, 2));
}

TEST(RootsOfUnity, Table) {
    EXPECT_EQ(root_of_unity(Rational(1, 2)), QScalar(-1));
    EXPECT_EQ(root_of_unity(Rational(1, 4)), -QScalar::i());
    EXPECT_EQ(root_of_unity(Rational(-1, 4)), QScalar::i());
    QScalar z8 = root_of_unity(Rational(1, 8));
    QScalar p = 1;
    for (int k = 0; k < 8; ++k) p = p * z8;
    EXPECT_EQ(p, QScalar(1));
    QScalar z3 = root_of_unity(Rational(1, 3));
    EXPECT_EQ(z3 * z3 * z3, QScalar(1));
    EXPECT_THROW(root_of_unity(Rational(1, 5)), UnsupportedRootOfUnity);
}
