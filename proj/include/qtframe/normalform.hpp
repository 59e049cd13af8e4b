#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qtframe/refinable.hpp"

namespace qtframe {

// Trigonometric polynomial with a prescribed jet, in the basis prod (1 - z_i)^{mu_i}.
inline LaurentPoly jet_realize(const Jet& j) {
    int d = j.dim();
    long n = j.order();
    LaurentPoly p(d);
    if (n <= 0) return p;
    Jet res = j;
    LaurentPoly one(d, QScalar(1));
    std::vector<LaurentPoly> dz;
    for (int t = 0; t < d; ++t) dz.push_back(one - LaurentPoly::var(d, t));
    for (long k = 0; k < n; ++k)
        for (const MultiIndex& mu : indices_of_degree(d, k)) {
            QScalar c = res.coeff(mu);
            if (c.is_zero()) continue;
            // leading jet term of the basis element is i^{|mu|} xi^mu
            c = c * minus_i_power(k);
            LaurentPoly b = one;
            for (int t = 0; t < d; ++t)
                for (long e = 0; e < mu[t]; ++e) b = b * dz[t];
            b = b * c;
            p += b;
            res = res - lp_jet(b, n);
        }
    return p;
}

inline TrigMatrix jm_realize(const JetMatrix& J) {
    TrigMatrix T = tm_zero(J.rows(), J.cols(), J.zero().dim());
    for (size_t i = 0; i < J.rows(); ++i)
        for (size_t j = 0; j < J.cols(); ++j) T(i, j) = jet_realize(J(i, j));
    return T;
}

// U together with its inverse, both exact.
struct InvertiblePair {
    TrigMatrix U, Uinv;
    InvertiblePair operator*(const InvertiblePair& o) const { return {U * o.U, o.Uinv * Uinv}; }
};

namespace detail {

inline InvertiblePair identity_pair(size_t r, int d) { return {tm_identity(r, d), tm_identity(r, d)}; }

inline InvertiblePair swap_pair(size_t r, int d, size_t a, size_t b) {
    TrigMatrix P = tm_identity(r, d);
    if (a != b) {
        P(a, a) = LaurentPoly(d);
        P(b, b) = LaurentPoly(d);
        P(a, b) = LaurentPoly(d, QScalar(1));
        P(b, a) = LaurentPoly(d, QScalar(1));
    }
    return {P, P};
}

// I + p E_{jk}
inline InvertiblePair elementary_pair(size_t r, int d, size_t j, size_t k, const LaurentPoly& p) {
    TrigMatrix E = tm_identity(r, d), Ei = tm_identity(r, d);
    E(j, k) = p;
    Ei(j, k) = -p;
    return {E, Ei};
}

// e12(c) e21(-d) e12(c) [[0,-1],[1,0]] on coordinates (i, j); congruent to diag(c, d) when c d = 1 + O(n).
inline InvertiblePair whitehead_pair(size_t r, int dim, size_t i, size_t j, const LaurentPoly& c,
                                     const LaurentPoly& dd) {
    InvertiblePair e1 = elementary_pair(r, dim, i, j, c);
    InvertiblePair e2 = elementary_pair(r, dim, j, i, -dd);
    TrigMatrix J = tm_identity(r, dim), Ji = tm_identity(r, dim);
    LaurentPoly one(dim, QScalar(1)), zero(dim);
    J(i, i) = zero;
    J(j, j) = zero;
    J(i, j) = -one;
    J(j, i) = one;
    Ji(i, i) = zero;
    Ji(j, j) = zero;
    Ji(i, j) = one;
    Ji(j, i) = -one;
    return e1 * e2 * e1 * InvertiblePair{J, Ji};
}

// Strongly invertible U with v U = e_1 + O(n).
inline InvertiblePair steer_to_e1(const JetMatrix& v, long n) {
    size_t r = v.cols();
    int d = v.zero().dim();
    size_t p = 0;
    while (p < r && v(0, p).constant_term().is_zero()) ++p;
    if (p == r) throw ZeroAtOrigin("row jet vanishes at the origin");
    InvertiblePair acc = swap_pair(r, d, 0, p);
    JetMatrix cur = jm_truncate(v * tm_jet(acc.U, n), n);
    Jet inv1 = cur(0, 0).truncate(n).reciprocal();
    for (size_t k = 1; k < r; ++k) {
        if (cur(0, k).truncate(n).is_zero()) continue;
        LaurentPoly q = jet_realize(cur(0, k).truncate(n) * inv1);
        acc = acc * elementary_pair(r, d, 0, k, -q);
    }
    cur = jm_truncate(v * tm_jet(acc.U, n), n);
    Jet c0 = cur(0, 0).truncate(n);
    if (!(c0 == Jet(d, n, QScalar(1)))) {
        LaurentPoly c = jet_realize(c0.reciprocal());
        LaurentPoly dd = jet_realize(c0);
        acc = acc * whitehead_pair(r, d, 0, 1, c, dd);
    }
    return acc;
}

}  // namespace detail

// Strongly invertible U with v U = u + O(n) (r >= 2); returned with its inverse.
inline InvertiblePair transfer_matrix_pair(const JetMatrix& v, const JetMatrix& u, long n) {
    size_t r = v.cols();
    if (u.cols() != r || v.rows() != 1 || u.rows() != 1) throw ShapeMismatch("transfer_matrix expects 1 x r rows");
    if (r < 2) throw ShapeMismatch("transfer_matrix needs r >= 2");
    InvertiblePair Uv = detail::steer_to_e1(v, n);
    InvertiblePair Uu = detail::steer_to_e1(u, n);
    InvertiblePair U{Uv.U * Uu.Uinv, Uu.U * Uv.Uinv};
    if (!jm_equal_mod(v * tm_jet(U.U, n), u, n)) throw JetConditionFailed("transfer matrix congruence failed");
    return U;
}

inline TrigMatrix transfer_matrix(const JetMatrix& v, const JetMatrix& u, long n) {
    return transfer_matrix_pair(v, u, n).U;
}

inline JetMatrix unit_row(size_t r, int d, long n, size_t k = 0) {
    JetMatrix e = jm_zero(1, r, d, n);
    e(0, k) = Jet(d, n, QScalar(1));
    return e;
}

// v' = v + O(m) with v' u = 1 + O(n), following the pin-then-overwrite route.
inline JetMatrix moment_correct_vector(const JetMatrix& v, const JetMatrix& u, long m, long n) {
    size_t r = v.cols();
    int d = v.zero().dim();
    Jet vu = (jm_truncate(v, m) * jm_truncate(u, m))(0, 0);
    if (!(vu == Jet(d, m, QScalar(1)))) throw NormalizationBroken("v u != 1 + O(m)");
    if (n <= m) return jm_truncate(v, n);
    if (r == 1) {
        JetMatrix out = jm_zero(1, 1, d, n);
        out(0, 0) = u(0, 0).truncate(n).reciprocal();
        return out;
    }
    // Uc u = e_1^T + O(n) with Uc = (transfer of u^T to e_1)^T
    InvertiblePair P = transfer_matrix_pair(u.transpose(), unit_row(r, d, n), n);
    JetMatrix Uc = tm_jet(P.U.transpose(), n), Uci = tm_jet(P.Uinv.transpose(), n);
    JetMatrix vb = jm_truncate(v.map([n](const Jet& j) { return j.with_order(std::max(j.order(), n)); }), n) * Uci;
    vb(0, 0) = Jet(d, n, QScalar(1));
    return jm_truncate(vb * Uc, n);
}

struct NormalFormResult {
    TrigMatrix U, U_inv, a_nf;
    JetMatrix phi_nf_jet, matching_nf_jet;
    long m = 0, n = 0;
};

// phi jets at order >= max(m, n) are expected; targets tv (order m) and tu (order n).
inline NormalFormResult normal_form_general(const TrigMatrix& a, const CosetSystem& cs, const JetMatrix& matching,
                                            const JetMatrix& phi, const JetMatrix& tv, const JetMatrix& tu, long m,
                                            long n) {
    size_t r = a.rows();
    int d = cs.dim();
    if (r < 2) throw ShapeMismatch("normal form needs r >= 2");
    long N = std::max(m, n);
    if (phi.zero().order() < N) throw JetConditionFailed("phi jet order below max(m, n)");
    auto pad = [N](const JetMatrix& J) { return J.map([N](const Jet& j) { return j.with_order(std::max(j.order(), N)); }); };
    JetMatrix phiN = jm_truncate(phi, N), tuN = pad(jm_truncate(tu, n));
    JetMatrix vN = moment_correct_vector(matching, phiN, m, N);
    JetMatrix tvN = moment_correct_vector(tv, tuN, m, N);
    JetMatrix e1 = unit_row(r, d, N);
    InvertiblePair U1 = transfer_matrix_pair(tvN, e1, N);  // tv U1 = e1
    InvertiblePair U2 = transfer_matrix_pair(e1, vN, N);   // e1 U2 = v
    JetMatrix ub = jm_truncate(tm_jet(U1.Uinv, N) * tuN, N);
    JetMatrix pb = jm_truncate(tm_jet(U2.U, N) * phiN, N);
    InvertiblePair U3 = detail::identity_pair(r, d);
    for (size_t l = 1; l < r; ++l) {
        LaurentPoly w = jet_realize(ub(l, 0) - pb(l, 0));
        U3 = U3 * detail::elementary_pair(r, d, l, 0, w);
    }
    InvertiblePair U = U1 * U3 * U2;

    NormalFormResult res;
    res.U = U.U;
    res.U_inv = U.Uinv;
    res.m = m;
    res.n = n;
    res.a_nf = tm_upsample(U.U, cs.M()) * a * U.Uinv;
    res.phi_nf_jet = jm_truncate(tm_jet(U.U, n) * jm_truncate(phi, n), n);
    res.matching_nf_jet = jm_truncate(jm_truncate(matching, m) * tm_jet(U.Uinv, m), m);
    if (!jm_equal_mod(res.matching_nf_jet, tv, m)) throw JetConditionFailed("v U^{-1} != target mod O(m)");
    if (!jm_equal_mod(res.phi_nf_jet, tu, n)) throw JetConditionFailed("U phi != target mod O(n)");
    if (!sum_rules_hold(res.a_nf, cs, jm_truncate(tv, m), m))
        throw JetConditionFailed("transformed mask lost its sum rules");
    return res;
}

// f(xi + 2 pi omega) = O(m) for every omega (include_zero) or every omega != 0, via coset parts.
inline bool shifted_vanishing(const LaurentPoly& f, const CosetSystem& cs, long m, bool include_zero) {
    TrigMatrix F = tm_zero(1, 1, cs.dim());
    F(0, 0) = f;
    auto parts = coset_split(F, cs);
    if (include_zero) {
        for (auto& p : parts)
            if (!lp_jet(p(0, 0), m).is_zero()) return false;
        return true;
    }
    Jet fj = lp_jet(f, m);
    for (size_t g = 0; g < parts.size(); ++g) {
        LaurentPoly rec = parts[g](0, 0).upsample(cs.M()).shift(cs.gamma()[g]) * QScalar(cs.dm());
        if (!(lp_jet(rec, m) == fj)) return false;
    }
    return true;
}

struct NormalFormConditions {
    bool a11_one = false, a11_shifts = false, a12_shifts = false, a21_zero = false;
    bool ok() const { return a11_one && a11_shifts && a12_shifts && a21_zero; }
    std::string str() const {
        return std::string("a11=1+O(n):") + (a11_one ? "ok" : "FAIL") + " a11(.+2pi w)=O(m):" +
               (a11_shifts ? "ok" : "FAIL") + " a12(.+2pi w)=O(m):" + (a12_shifts ? "ok" : "FAIL") +
               " a21=O(n):" + (a21_zero ? "ok" : "FAIL");
    }
};

inline NormalFormConditions check_normal_form(const TrigMatrix& a_nf, const CosetSystem& cs, long m, long n) {
    NormalFormConditions c;
    int d = cs.dim();
    size_t r = a_nf.rows();
    c.a11_one = lp_jet(a_nf(0, 0), n) == Jet(d, n, QScalar(1));
    c.a11_shifts = shifted_vanishing(a_nf(0, 0), cs, m, false);
    c.a12_shifts = true;
    for (size_t k = 1; k < r; ++k) c.a12_shifts = c.a12_shifts && shifted_vanishing(a_nf(0, k), cs, m, true);
    c.a21_zero = true;
    for (size_t k = 1; k < r; ++k) c.a21_zero = c.a21_zero && lp_jet(a_nf(k, 0), n).is_zero();
    return c;
}

// Standard (m, n)-normal form: targets e_1 and e_1^T.
inline NormalFormResult normal_form_standard(const TrigMatrix& a, const CosetSystem& cs, const JetMatrix& matching,
                                             const JetMatrix& phi, long m, long n) {
    size_t r = a.rows();
    int d = cs.dim();
    return normal_form_general(a, cs, matching, phi, unit_row(r, d, m), unit_row(r, d, n).transpose(), m, n);
}

// W^* W for a column-orthogonalized W = U^{-1}; this is conj(U)^{-T} U^{-1}.
inline TrigMatrix gram(const TrigMatrix& W) { return tm_star(W) * W; }

struct OrthoCheck {
    bool diagonal = false, first_is_phi_norm = false;
    bool ok() const { return diagonal && first_is_phi_norm; }
};

inline OrthoCheck check_ortho(const TrigMatrix& U_inv, const JetMatrix& phi, long order) {
    OrthoCheck c;
    JetMatrix G = tm_jet(gram(U_inv), order);
    c.diagonal = true;
    for (size_t i = 0; i < G.rows(); ++i)
        for (size_t j = 0; j < G.cols(); ++j)
            if (i != j && !G(i, j).is_zero()) c.diagonal = false;
    c.first_is_phi_norm = G(0, 0) == norm_squared(jm_truncate(phi, order));
    return c;
}

inline NormalFormResult normal_form_orthogonal(const TrigMatrix& a, const CosetSystem& cs, const JetMatrix& matching,
                                               const JetMatrix& phi, long m, long n) {
    size_t r = a.rows();
    int d = cs.dim();
    long nt = std::max(m, n);
    if (norm_squared(jm_truncate(phi, 1)).constant_term().is_zero()) throw ZeroNormAtOrigin("phi(0) = 0");
    if (!moment_special_check(phi, matching, m))
        throw MomentSpecialFails("matching filter is not |phi|^{-2} conj(phi)^T + O(m)");
    NormalFormResult base = normal_form_standard(a, cs, matching, phi, m, nt);
    TrigMatrix V = base.U_inv;
    // Gram-Schmidt on the columns of V with jet-level weights |W_l|^{-2}
    TrigMatrix W = tm_zero(r, r, d);
    std::vector<LaurentPoly> w;
    for (size_t j = 0; j < r; ++j) {
        TrigMatrix col = V.col(j);
        for (size_t l = 0; l < j; ++l) {
            TrigMatrix Wl = W.col(l);
            LaurentPoly ip = (tm_star(Wl) * V.col(j))(0, 0);
            col = col - tm_mul_poly(Wl, ip * w[l]);
        }
        W.set_block(0, j, col);
        LaurentPoly nrm = (tm_star(col) * col)(0, 0);
        w.push_back(jet_realize(lp_jet(nrm, nt).reciprocal()));
    }
    NormalFormResult res;
    res.U_inv = W;
    res.U = tm_strong_inverse(W);
    res.m = m;
    res.n = n;
    res.a_nf = tm_upsample(res.U, cs.M()) * a * W;
    res.phi_nf_jet = jm_truncate(tm_jet(res.U, nt) * jm_truncate(phi, nt), n);
    res.matching_nf_jet = jm_truncate(jm_truncate(matching, m) * tm_jet(W, m), m);
    if (!jm_equal_mod(res.matching_nf_jet, unit_row(r, d, m), m)) throw JetConditionFailed("v U^{-1} != e_1");
    if (!jm_equal_mod(res.phi_nf_jet, unit_row(r, d, n).transpose(), n)) throw JetConditionFailed("U phi != e_1");
    if (!check_ortho(W, phi, nt).ok()) throw JetConditionFailed("almost orthogonality failed");
    return res;
}

struct ConverseReport {
    bool hypotheses = false, moment_special = false;
};

// Given U meeting the normal-form congruences and the orthogonality relation, moment:special must follow.
inline ConverseReport converse_moment_special(const TrigMatrix& U, const TrigMatrix& U_inv, const JetMatrix& phi,
                                              const JetMatrix& matching, long m, long n) {
    ConverseReport rep;
    size_t r = U.rows();
    int d = tm_dim(U);
    long nt = std::max(m, n);
    bool items = jm_equal_mod(jm_truncate(matching, m) * tm_jet(U_inv, m), unit_row(r, d, m), m) &&
                 jm_equal_mod(tm_jet(U, n) * jm_truncate(phi, n), unit_row(r, d, n).transpose(), n);
    rep.hypotheses = items && n >= m && check_ortho(U_inv, phi, nt).ok();
    rep.moment_special = moment_special_check(phi, matching, m);
    return rep;
}

}  // namespace qtframe
