#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qtframe/jet.hpp"
#include "qtframe/lattice.hpp"

namespace qtframe {

struct MaskAnalysis {
    TrigMatrix a;
    IntMatrix M;
    long sr_order = 0;
    JetMatrix matching_jet;  // 1 x r, order sr_order
    JetMatrix phi_jet;       // r x 1
    bool eigen_ok = false;
};

struct EigenReport {
    bool simple_one = false;
    long failed_phi_degree = -1;       // first singular phi system, -1 if none
    long failed_matching_degree = -1;  // first singular matching system, -1 if none
    bool ok() const { return simple_one && failed_phi_degree < 0 && failed_matching_degree < 0; }
    std::string str() const {
        std::string s = simple_one ? "1 is a simple eigenvalue of a(0)" : "1 is not a simple eigenvalue of a(0)";
        if (failed_phi_degree >= 0) s += "; phi system singular at degree " + std::to_string(failed_phi_degree);
        if (failed_matching_degree >= 0)
            s += "; matching system singular at degree " + std::to_string(failed_matching_degree);
        return s;
    }
};

namespace detail {

// Degree-`deg` coefficient block of a jet row/column, flattened (mu-major, then entry).
inline std::vector<QScalar> degree_coeffs(const JetMatrix& J, long deg) {
    std::vector<QScalar> out;
    for (const MultiIndex& mu : indices_of_degree(J.zero().dim(), deg))
        for (size_t i = 0; i < J.rows(); ++i)
            for (size_t j = 0; j < J.cols(); ++j) out.push_back(J(i, j).coeff(mu));
    return out;
}

inline std::vector<QScalar> all_coeffs(const JetMatrix& J, long below) {
    std::vector<QScalar> out;
    for (long k = 0; k < below; ++k) {
        auto v = degree_coeffs(J, k);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

inline bool char_root_simple_one(const QMatrix& A) {
    auto c = charpoly(A);
    QScalar v = 0, dv = 0;
    for (size_t k = 0; k < c.size(); ++k) {
        v += c[k];
        if (k) dv += c[k] * QScalar(long(k));
    }
    return v.is_zero() && !dv.is_zero();
}

inline bool has_eigen_one(const QMatrix& A) { return rank(A - q_identity(A.rows())) < A.rows(); }

// Linear operator on jets, assembled column by column from basis images.
inline QMatrix assemble(size_t unknowns, const std::function<std::vector<QScalar>(size_t)>& image) {
    std::vector<std::vector<QScalar>> cols;
    for (size_t u = 0; u < unknowns; ++u) cols.push_back(image(u));
    size_t rows = cols.empty() ? 0 : cols[0].size();
    QMatrix A(rows, unknowns, QScalar(0));
    for (size_t u = 0; u < unknowns; ++u)
        for (size_t i = 0; i < rows; ++i) A(i, u) = cols[u][i];
    return A;
}

// Jets of a^{[gamma]}(M^T xi) for all gamma, and of e^{i gamma.xi}.
struct CosetJets {
    std::vector<JetMatrix> a_gamma;
    std::vector<Jet> phase;
};

inline CosetJets coset_jets(const TrigMatrix& a, const CosetSystem& cs, long n) {
    CosetJets cj;
    auto parts = coset_split(a, cs);
    for (size_t g = 0; g < parts.size(); ++g) {
        cj.a_gamma.push_back(tm_jet(tm_upsample(parts[g], cs.M()), n));
        cj.phase.push_back(lp_jet(LaurentPoly::monomial(-cs.gamma()[g]), n));
    }
    return cj;
}

// Residuals v(M^T xi) a^{[gamma]}(M^T xi) - d_M^{-1} e^{i gamma.xi} v(xi), all gamma, stacked.
inline std::vector<QScalar> sum_rule_residual(const JetMatrix& v, const CosetJets& cj, const CosetSystem& cs,
                                              long n) {
    QMatrix Mt = to_qmatrix(cs.M().transpose());
    JetMatrix vM = jm_compose_linear(v, Mt);
    QScalar inv_dm(Rational(1, cs.dm()));
    std::vector<QScalar> out;
    for (size_t g = 0; g < cj.a_gamma.size(); ++g) {
        JetMatrix res = vM * cj.a_gamma[g] - v.map([&](const Jet& x) { return x * cj.phase[g] * inv_dm; });
        auto c = all_coeffs(jm_truncate(res, n), n);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

inline JetMatrix row_from_coeffs(const std::vector<QScalar>& x, size_t r, int d, long n) {
    JetMatrix v = jm_zero(1, r, d, n);
    size_t idx = 0;
    for (const MultiIndex& mu : indices_below(d, n))
        for (size_t j = 0; j < r; ++j) v(0, j).add_term(mu, x[idx++]);
    return v;
}

inline QMatrix right_eigvec_one(const QMatrix& A0) {
    size_t r = A0.rows();
    // kernel vector of a(0) - I: rref and set the first free variable
    QMatrix R = A0 - q_identity(r);
    auto piv = rref(R);
    size_t free_col = r;
    for (size_t c = 0, p = 0; c < r; ++c) {
        if (p < piv.size() && piv[p] == c) { ++p; continue; }
        free_col = c;
        break;
    }
    if (free_col == r) throw NoLeftEigenvector("a(0) does not have eigenvalue 1");
    QMatrix x(r, 1, QScalar(0));
    x(free_col, 0) = 1;
    for (size_t i = 0; i < piv.size(); ++i) x(piv[i], 0) = -R(i, free_col);
    return x;
}

}  // namespace detail

// Largest m <= max_order with order m sum rules, and a matching jet normalized by v(0) phi(0) = 1.
inline std::pair<long, JetMatrix> sum_rules(const TrigMatrix& a, const CosetSystem& cs, long max_order) {
    size_t r = a.rows();
    int d = cs.dim();
    if (a.cols() != r) throw ShapeMismatch("mask must be square");
    QMatrix a0 = tm_at_origin(a);
    if (!detail::has_eigen_one(a0)) throw NoLeftEigenvector("a(0) does not have eigenvalue 1");
    QMatrix phi0 = detail::right_eigvec_one(a0);
    QScalar s = 0;
    for (size_t i = 0; i < r; ++i) s += phi0(i, 0);
    if (s.is_zero()) {
        for (size_t i = 0; i < r; ++i)
            if (!phi0(i, 0).is_zero()) { s = phi0(i, 0); break; }
    }
    phi0 = phi0.scaled(s.inv());

    long best = 0;
    JetMatrix best_jet = jm_zero(1, r, d, 0);
    for (long m = 1; m <= max_order; ++m) {
        auto cj = detail::coset_jets(a, cs, m);
        size_t nunk = r * indices_below(d, m).size();
        QMatrix A = detail::assemble(nunk, [&](size_t u) {
            std::vector<QScalar> e(nunk, QScalar(0));
            e[u] = 1;
            return detail::sum_rule_residual(detail::row_from_coeffs(e, r, d, m), cj, cs, m);
        });
        // normalization rows: preferred v(0) phi(0) = 1, fallbacks pin one coordinate
        std::vector<std::vector<QScalar>> norms;
        std::vector<QScalar> nrow(nunk, QScalar(0));
        for (size_t j = 0; j < r; ++j) nrow[j] = phi0(j, 0);
        norms.push_back(nrow);
        for (size_t j = 0; j < r; ++j) {
            std::vector<QScalar> e(nunk, QScalar(0));
            e[j] = 1;
            norms.push_back(e);
        }
        std::optional<QMatrix> sol;
        for (auto& nr : norms) {
            QMatrix Aug(A.rows() + 1, nunk, QScalar(0));
            Aug.set_block(0, 0, A);
            for (size_t u = 0; u < nunk; ++u) Aug(A.rows(), u) = nr[u];
            QMatrix rhs(A.rows() + 1, 1, QScalar(0));
            rhs(A.rows(), 0) = 1;
            sol = solve_linear(Aug, rhs);
            if (sol) break;
        }
        if (!sol) break;
        std::vector<QScalar> x(nunk);
        for (size_t u = 0; u < nunk; ++u) x[u] = (*sol)(u, 0);
        best = m;
        best_jet = detail::row_from_coeffs(x, r, d, m);
    }
    return {best, best_jet};
}

// Exact check of the coset-form sum rules of order m for a given matching jet.
inline bool sum_rules_hold(const TrigMatrix& a, const CosetSystem& cs, const JetMatrix& v, long m) {
    auto cj = detail::coset_jets(a, cs, m);
    for (auto& c : detail::sum_rule_residual(jm_truncate(v, m), cj, cs, m))
        if (!c.is_zero()) return false;
    return !jm_at_origin(v).is_zero();
}

namespace detail {

// Matrix of the degree-j part of phi -> phi(M^T .) - a(0) phi on homogeneous degree-j columns.
inline QMatrix phi_degree_operator(const QMatrix& a0, const QMatrix& Mt, size_t r, int d, long j) {
    auto idx = indices_of_degree(d, j);
    size_t nunk = idx.size() * r;
    return assemble(nunk, [&](size_t u) {
        JetMatrix e = jm_zero(r, 1, d, j + 1);
        e(u % r, 0).add_term(idx[u / r], 1);
        JetMatrix img = jm_compose_linear(e, Mt) - a0.map([&](const QScalar& c) { return Jet(d, j + 1, c); }) * e;
        return degree_coeffs(img, j);
    });
}

inline QMatrix matching_degree_operator(const std::vector<QMatrix>& a_gamma0, const QMatrix& Mt, size_t r, int d,
                                        long j, long dm) {
    auto idx = indices_of_degree(d, j);
    size_t nunk = idx.size() * r;
    return assemble(nunk, [&](size_t u) {
        JetMatrix e = jm_zero(1, r, d, j + 1);
        e(0, u % r).add_term(idx[u / r], 1);
        JetMatrix eM = jm_compose_linear(e, Mt);
        std::vector<QScalar> out;
        for (auto& ag : a_gamma0) {
            JetMatrix img = eM * ag.map([&](const QScalar& c) { return Jet(d, j + 1, c); }) -
                            e.map([&](const Jet& x) { return x * QScalar(Rational(1, dm)); });
            auto c = degree_coeffs(img, j);
            out.insert(out.end(), c.begin(), c.end());
        }
        return out;
    });
}

}  // namespace detail

// phi-hat jets up to order n from phi(M^T xi) = a(xi) phi(xi); `functional` (1 x r) fixes the scale.
inline JetMatrix phi_jets(const TrigMatrix& a, const CosetSystem& cs, long n,
                          const std::optional<QMatrix>& functional = std::nullopt) {
    size_t r = a.rows();
    int d = cs.dim();
    QMatrix a0 = tm_at_origin(a);
    if (!detail::char_root_simple_one(a0)) throw EigenNotSimple("1 is not a simple eigenvalue of a(0)");
    QMatrix phi0 = detail::right_eigvec_one(a0);
    QScalar s = 0;
    if (functional) s = ((*functional) * phi0)(0, 0);
    if (s.is_zero())
        for (size_t i = 0; i < r; ++i) s += phi0(i, 0);
    if (s.is_zero())
        for (size_t i = 0; i < r && s.is_zero(); ++i) s = phi0(i, 0);
    phi0 = phi0.scaled(s.inv());

    JetMatrix phi = jm_zero(r, 1, d, n);
    for (size_t i = 0; i < r; ++i) phi(i, 0).add_term(MultiIndex(d), phi0(i, 0));
    QMatrix Mt = to_qmatrix(cs.M().transpose());
    JetMatrix aj = tm_jet(a, n);
    for (long j = 1; j < n; ++j) {
        QMatrix L = detail::phi_degree_operator(a0, Mt, r, d, j);
        // known part: degree-j coefficients of phi(M^T .) - a phi with the current (lower-degree) phi
        JetMatrix low = jm_truncate(phi, j + 1);
        JetMatrix res = jm_compose_linear(low, Mt) - jm_truncate(aj, j + 1) * low;
        auto kn = detail::degree_coeffs(res, j);
        QMatrix rhs(kn.size(), 1, QScalar(0));
        for (size_t i = 0; i < kn.size(); ++i) rhs(i, 0) = -kn[i];
        if (rank(L) < L.cols()) throw DegenerateMomentSystem("phi system singular at degree " + std::to_string(j));
        auto x = solve_linear(L, rhs);
        if (!x) throw DegenerateMomentSystem("phi system inconsistent at degree " + std::to_string(j));
        auto idx = indices_of_degree(d, j);
        for (size_t u = 0; u < idx.size() * r; ++u) phi(u % r, 0).add_term(idx[u / r], (*x)(u, 0));
    }
    return phi;
}

inline EigenReport eigen_condition(const TrigMatrix& a, const CosetSystem& cs, long m) {
    EigenReport rep;
    size_t r = a.rows();
    int d = cs.dim();
    QMatrix a0 = tm_at_origin(a);
    rep.simple_one = detail::char_root_simple_one(a0);
    QMatrix Mt = to_qmatrix(cs.M().transpose());
    std::vector<QMatrix> ag0;
    for (auto& p : coset_split(a, cs)) ag0.push_back(tm_at_origin(p));
    for (long j = 1; j < m; ++j) {
        QMatrix L = detail::phi_degree_operator(a0, Mt, r, d, j);
        if (rep.failed_phi_degree < 0 && rank(L) < L.cols()) rep.failed_phi_degree = j;
        QMatrix K = detail::matching_degree_operator(ag0, Mt, r, d, j, cs.dm());
        if (rep.failed_matching_degree < 0 && rank(K) < K.cols()) rep.failed_matching_degree = j;
    }
    return rep;
}

// |phi|^2 jet = conj(phi)^T phi.
inline Jet norm_squared(const JetMatrix& phi) {
    JetMatrix g = jm_conj_transpose(phi) * phi;
    return g(0, 0);
}

inline bool moment_special_check(const JetMatrix& phi, const JetMatrix& v, long m) {
    Jet n2 = norm_squared(jm_truncate(phi, m));
    if (n2.constant_term().is_zero()) throw ZeroNormAtOrigin("phi(0) has zero norm");
    JetMatrix target = jm_conj_transpose(jm_truncate(phi, m)).map([&](const Jet& x) { return x * n2.reciprocal(); });
    return jm_equal_mod(target, v, m);
}

inline MaskAnalysis analyze_mask(const TrigMatrix& a, const CosetSystem& cs, long max_order, long phi_order = 0) {
    MaskAnalysis an;
    an.a = a;
    an.M = cs.M();
    auto [m, v] = sum_rules(a, cs, max_order);
    an.sr_order = m;
    an.matching_jet = v;
    std::optional<QMatrix> f;
    if (m > 0) f = jm_at_origin(v);
    an.phi_jet = phi_jets(a, cs, std::max(phi_order, std::max(m, 1L)), f);
    an.eigen_ok = eigen_condition(a, cs, m).ok();
    return an;
}

}  // namespace qtframe
