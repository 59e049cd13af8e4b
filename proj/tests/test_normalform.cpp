#include <gtest/gtest.h>

#include <random>

#include "qtframe/normalform.hpp"
#include "testutil.hpp"

using namespace qtframe;

namespace {

Jet random_jet(std::mt19937& rng, int d, long n) {
    Jet j(d, n);
    std::uniform_int_distribution<int> coin(0, 2);
    for (const MultiIndex& mu : indices_below(d, n))
        if (coin(rng)) j.add_term(mu, testutil::random_scalar(rng, 2));
    return j;
}

JetMatrix row(std::initializer_list<Jet> js) {
    const Jet& f = *js.begin();
    JetMatrix r = jm_zero(1, js.size(), f.dim(), f.order());
    size_t k = 0;
    for (auto& j : js) r(0, k++) = j;
    return r;
}

Jet x1_jet(long n, const QScalar& c) {
    Jet j(2, n);
    j.add_term({1, 0}, c);
    return j;
}

}  // namespace

TEST(JetRealize, Examples) {
    EXPECT_EQ(jet_realize(Jet(2, 3, QScalar(1))), LaurentPoly(2, QScalar(1)));
    Jet j(2, 2);
    j.add_term({1, 0}, QScalar::i());
    EXPECT_EQ(jet_realize(j), LaurentPoly(2, QScalar(1)) - LaurentPoly::var(2, 0));
}

TEST(JetRealize, RoundTrip) {
    std::mt19937 rng(31);
    for (int t = 0; t < 100; ++t) {
        int d = 1 + t % 3;
        long n = 1 + t % 5;
        Jet j = random_jet(rng, d, n);
        EXPECT_EQ(lp_jet(jet_realize(j), n), j);
    }
}

TEST(Whitehead, CongruentToDiagonal) {
    std::mt19937 rng(37);
    for (int t = 0; t < 20; ++t) {
        long n = 2 + t % 3;
        Jet c = random_jet(rng, 2, n);
        c.add_term(MultiIndex(2), QScalar(1));
        if (c.constant_term().is_zero()) continue;
        LaurentPoly cp = jet_realize(c), dp = jet_realize(c.reciprocal());
        InvertiblePair W = detail::whitehead_pair(2, 2, 0, 1, cp, dp);
        EXPECT_TRUE(tm_det(W.U) == LaurentPoly(2, QScalar(1)));
        EXPECT_EQ(W.U * W.Uinv, tm_identity(2, 2));
        JetMatrix D = jm_zero(2, 2, 2, n);
        D(0, 0) = c;
        D(1, 1) = c.reciprocal();
        EXPECT_TRUE(jm_equal_mod(tm_jet(W.U, n), D, n));
    }
}

TEST(Transfer, Examples) {
    long n = 2;
    JetMatrix v = row({Jet(2, n, QScalar(1)), Jet(2, n)});
    JetMatrix u = row({Jet(2, n), Jet(2, n, QScalar(1))});
    TrigMatrix U = transfer_matrix(v, u, n);
    EXPECT_TRUE(tm_det(U).is_monomial());
    EXPECT_TRUE(jm_equal_mod(v * tm_jet(U, n), u, n));
    TrigMatrix I = transfer_matrix(v, v, n);
    EXPECT_TRUE(jm_equal_mod(v * tm_jet(I, n), v, n));
    JetMatrix w = row({Jet(2, n, QScalar(2)), x1_jet(n, 1)});
    TrigMatrix U2 = transfer_matrix(w, v, n);
    EXPECT_TRUE(tm_is_strongly_invertible(U2));
    EXPECT_TRUE(jm_equal_mod(w * tm_jet(U2, n), v, n));
    EXPECT_THROW(transfer_matrix(row({Jet(2, n), x1_jet(n, 1)}), v, n), ZeroAtOrigin);
}

TEST(Transfer, Randomized) {
    std::mt19937 rng(41);
    for (int t = 0; t < 16; ++t) {
        size_t r = 2 + t % 2;
        long n = 1 + t % 3;
        JetMatrix v = jm_zero(1, r, 2, n), u = jm_zero(1, r, 2, n);
        for (size_t k = 0; k < r; ++k) {
            v(0, k) = random_jet(rng, 2, n);
            u(0, k) = random_jet(rng, 2, n);
        }
        v(0, t % r).add_term(MultiIndex(2), QScalar(1));
        u(0, (t + 1) % r).add_term(MultiIndex(2), QScalar(3));
        if (jm_at_origin(v).is_zero() || jm_at_origin(u).is_zero()) continue;
        InvertiblePair P = transfer_matrix_pair(v, u, n);
        EXPECT_EQ(P.U * P.Uinv, tm_identity(r, 2));
        EXPECT_TRUE(tm_det(P.U).is_monomial());
        EXPECT_TRUE(jm_equal_mod(v * tm_jet(P.U, n), u, n));
    }
}

TEST(MomentCorrect, Examples) {
    // v = (1,0), u = (1 + xi1^2, 0)^T, m = 2, n = 4 -> (1 - xi1^2, 0)
    Jet one(2, 4, QScalar(1));
    Jet u1 = one;
    u1.add_term({2, 0}, 1);
    JetMatrix v = row({Jet(2, 2, QScalar(1)), Jet(2, 2)});
    JetMatrix u = jm_zero(2, 1, 2, 4);
    u(0, 0) = u1;
    JetMatrix vc = moment_correct_vector(v, u, 2, 4);
    Jet expect = one;
    expect.add_term({2, 0}, -1);
    EXPECT_EQ(vc(0, 0), expect);
    EXPECT_TRUE(vc(0, 1).truncate(2).is_zero());
    EXPECT_EQ((vc * u)(0, 0), one);
    // n <= m: truncation
    EXPECT_TRUE(jm_equal_mod(moment_correct_vector(v, u, 2, 1), v, 1));
    // r = 1: reciprocal
    JetMatrix s = jm_zero(1, 1, 2, 1), su = jm_zero(1, 1, 2, 4);
    s(0, 0) = Jet(2, 1, QScalar(1));
    su(0, 0) = u1;
    EXPECT_EQ(moment_correct_vector(s, su, 1, 4)(0, 0), u1.reciprocal());
    EXPECT_THROW(moment_correct_vector(v.scaled(QScalar(2)), u, 2, 4), NormalizationBroken);
}

TEST(NormalForm, GoodmanStandard) {
    CosetSystem cs(testutil::m_sqrt2());
    TrigMatrix a = testutil::goodman_mask();
    auto [m, v] = sum_rules(a, cs, 4);
    ASSERT_EQ(m, 2);
    JetMatrix phi = phi_jets(a, cs, 4, jm_at_origin(v));
    NormalFormResult nf = normal_form_standard(a, cs, v, phi, 2, 4);
    EXPECT_TRUE(tm_det(nf.U).is_monomial());
    EXPECT_EQ(nf.U * nf.U_inv, tm_identity(2, 2));
    EXPECT_EQ(nf.a_nf, tm_upsample(nf.U, cs.M()) * a * nf.U_inv);
    NormalFormConditions c = check_normal_form(nf.a_nf, cs, 2, 4);
    EXPECT_TRUE(c.ok()) << c.str();
    // the transformed mask keeps order 2 sum rules with matching jet e_1
    EXPECT_TRUE(sum_rules_hold(nf.a_nf, cs, unit_row(2, 2, 2), 2));
    // running the construction again on the normal form keeps the contract
    JetMatrix phi2 = phi_jets(nf.a_nf, cs, 4, jm_at_origin(unit_row(2, 2, 2)));
    NormalFormResult again = normal_form_standard(nf.a_nf, cs, unit_row(2, 2, 2), phi2, 2, 4);
    EXPECT_TRUE(check_normal_form(again.a_nf, cs, 2, 4).ok());
}

TEST(NormalForm, DiagonalMask) {
    CosetSystem cs(int_matrix({{2, 0}, {0, 2}}));
    LaurentPoly h = (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 0)) *
                    (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 1)) * QScalar(Rational(1, 4));
    TrigMatrix a = tm_zero(2, 2, 2);
    a(0, 0) = h;
    a(1, 1) = h * QScalar(Rational(1, 2));
    auto [m, v] = sum_rules(a, cs, 3);
    ASSERT_EQ(m, 1);
    JetMatrix phi = phi_jets(a, cs, 2, jm_at_origin(v));
    NormalFormResult nf = normal_form_standard(a, cs, v, phi, 1, 2);
    EXPECT_TRUE(check_normal_form(nf.a_nf, cs, 1, 2).ok());
}

TEST(NormalForm, OrthogonalRequiresSpecialMoments) {
    CosetSystem cs(testutil::m_sqrt2());
    TrigMatrix a = testutil::goodman_mask();
    auto [m, v] = sum_rules(a, cs, 4);
    JetMatrix phi = phi_jets(a, cs, 4, jm_at_origin(v));
    EXPECT_THROW(normal_form_orthogonal(a, cs, v, phi, 2, 4), MomentSpecialFails);
}

TEST(NormalForm, OrthogonalTrivialPhi) {
    // a mask already aligned with e_1: diag(h, h/2) on 2I with phi(0) = e_1
    CosetSystem cs(int_matrix({{2, 0}, {0, 2}}));
    LaurentPoly h = (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 0)) *
                    (LaurentPoly(2, QScalar(1)) + LaurentPoly::var(2, 1)) * QScalar(Rational(1, 4));
    TrigMatrix a = tm_zero(2, 2, 2);
    a(0, 0) = h;
    a(1, 1) = h * QScalar(Rational(1, 2));
    auto [m, v] = sum_rules(a, cs, 3);
    JetMatrix phi = phi_jets(a, cs, 2, jm_at_origin(v));
    ASSERT_TRUE(moment_special_check(phi, v, m));
    NormalFormResult nf = normal_form_orthogonal(a, cs, v, phi, m, 2);
    EXPECT_TRUE(check_ortho(nf.U_inv, phi, 2).ok());
    EXPECT_TRUE(check_normal_form(nf.a_nf, cs, m, 2).ok());
    ConverseReport cr = converse_moment_special(nf.U, nf.U_inv, phi, v, m, 2);
    EXPECT_TRUE(cr.hypotheses);
    EXPECT_TRUE(cr.moment_special);
}
