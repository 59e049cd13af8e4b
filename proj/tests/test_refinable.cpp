#include <gtest/gtest.h>

#include "qtframe/refinable.hpp"
#include "testutil.hpp"

using namespace qtframe;

namespace {

Jet jet_of(std::initializer_list<std::pair<MultiIndex, QScalar>> terms, long n) {
    Jet j(2, n);
    for (auto& [mu, c] : terms) j.add_term(mu, c);
    return j;
}

}  // namespace

TEST(Refinable, GoodmanPhiAndSumRules) {
    CosetSystem cs(testutil::m_sqrt2());
    TrigMatrix a = testutil::goodman_mask();
    QMatrix a0 = tm_at_origin(a);
    EXPECT_EQ(a0(0, 0), QScalar(Rational(1, 2)));
    EXPECT_EQ(a0(0, 1), QScalar(1));
    EXPECT_EQ(a0(1, 0), QScalar(Rational(1, 2)));
    EXPECT_TRUE(a0(1, 1).is_zero());
    auto cp = charpoly(a0);
    EXPECT_EQ(cp[0], QScalar(Rational(-1, 2)));
    EXPECT_EQ(cp[1], QScalar(Rational(-1, 2)));

    auto [m, v] = sum_rules(a, cs, 6);
    EXPECT_EQ(m, 2);
    QScalar ih = QScalar::gaussian(0, Rational(1, 2));
    EXPECT_EQ(v(0, 0), Jet(2, 2, QScalar(1)));
    EXPECT_EQ(v(0, 1), jet_of({{{0, 0}, 1}, {{1, 0}, ih}, {{0, 1}, ih}}, 2));
    EXPECT_TRUE(sum_rules_hold(a, cs, v, 2));

    JetMatrix phi = phi_jets(a, cs, 4, jm_at_origin(v));
    EXPECT_EQ(phi(0, 0).constant_term(), QScalar(Rational(2, 3)));
    EXPECT_EQ(phi(1, 0).constant_term(), QScalar(Rational(1, 3)));
    // v phi = 1 + O(m)
    EXPECT_EQ((v * phi)(0, 0), Jet(2, 2, QScalar(1)));
    // phi(xi) = a(M^-T xi) phi(M^-T xi)
    QMatrix Mit = inverse(to_qmatrix(cs.M().transpose()));
    EXPECT_TRUE(jm_equal_mod(jm_compose_linear(tm_jet(a, 4) * phi, Mit), phi, 4));
    EXPECT_TRUE(eigen_condition(a, cs, 2).ok());
}

TEST(Refinable, SumRuleMaximality) {
    // order m+1 admits no matching jet: rerun the solver capped at m and at m+1
    CosetSystem cs(testutil::m_sqrt2());
    TrigMatrix a = testutil::goodman_mask();
    EXPECT_EQ(sum_rules(a, cs, 2).first, 2);
    EXPECT_EQ(sum_rules(a, cs, 3).first, 2);
}

TEST(Refinable, ScalarLowpass) {
    for (auto M : {testutil::m_sqrt2(), int_matrix({{2, 0}, {0, 2}}), int_matrix({{2, 1}, {0, 2}})}) {
        CosetSystem cs(M);
        LaurentPoly s(2);
        for (auto& g : cs.gamma()) s.add_term(g, QScalar(Rational(1, cs.dm())));
        TrigMatrix a = tm_zero(1, 1, 2);
        a(0, 0) = s;
        auto [m, v] = sum_rules(a, cs, 4);
        EXPECT_GE(m, 1);
        EXPECT_EQ(v(0, 0).constant_term(), QScalar(1));
    }
    // Haar on 2I has exactly one order... tensor product of (1+z)/2 gives order 1 in each direction
    TrigMatrix h = tm_zero(1, 1, 2);
    h(0, 0) = (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 0)) * (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 1)) *
              QScalar(Rational(1, 4));
    CosetSystem c2(int_matrix({{2, 0}, {0, 2}}));
    EXPECT_EQ(sum_rules(h, c2, 5).first, 1);
    JetMatrix phi = phi_jets(h, c2, 3);
    EXPECT_EQ(phi(0, 0).constant_term(), QScalar(1));
}

TEST(Refinable, DeltaAndErrors) {
    CosetSystem cs(int_matrix({{2, 0}, {0, 2}}));
    TrigMatrix delta = tm_identity(1, 2);
    JetMatrix phi = phi_jets(delta, cs, 3);
    EXPECT_EQ(phi(0, 0), Jet(2, 3, QScalar(1)));
    TrigMatrix bad = tm_scale(tm_identity(2, 2), QScalar(Rational(1, 3)));
    EXPECT_THROW(sum_rules(bad, cs, 3), NoLeftEigenvector);
    EXPECT_THROW(phi_jets(tm_identity(2, 2), cs, 2), EigenNotSimple);
    EXPECT_FALSE(eigen_condition(tm_identity(2, 2), cs, 2).ok());
    TrigMatrix one = tm_identity(1, 2);
    EXPECT_TRUE(eigen_condition(one, cs, 1).ok());
}

TEST(Refinable, MomentSpecial) {
    JetMatrix phi = jm_zero(2, 1, 2, 3), v = jm_zero(1, 2, 2, 3);
    phi(0, 0) = Jet(2, 3, QScalar(1));
    v(0, 0) = Jet(2, 3, QScalar(1));
    EXPECT_TRUE(moment_special_check(phi, v, 3));
    EXPECT_FALSE(moment_special_check(phi, v.scaled(QScalar(2)), 3));
    EXPECT_THROW(moment_special_check(jm_zero(2, 1, 2, 3), v, 3), ZeroNormAtOrigin);
    // raw Goodman pair is not in the special form
    CosetSystem cs(testutil::m_sqrt2());
    TrigMatrix a = testutil::goodman_mask();
    auto [m, mv] = sum_rules(a, cs, 4);
    EXPECT_FALSE(moment_special_check(phi_jets(a, cs, m, jm_at_origin(mv)), mv, m));
}

TEST(Refinable, ConjugatedJetOfRealFilter) {
    // for real coefficients, jet of conj(u(xi))^T equals jet of u^T(-xi)
    TrigMatrix a = testutil::goodman_mask();
    JetMatrix lhs = tm_jet(tm_star(a), 4);
    JetMatrix rhs = tm_jet(a.transpose(), 4).map([](const Jet& j) { return j.reflect(); });
    EXPECT_EQ(lhs, rhs);
    EXPECT_EQ(jm_conj_transpose(tm_jet(a, 4)), lhs);
}
