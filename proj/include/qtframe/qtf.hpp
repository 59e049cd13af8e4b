#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qtframe/momentfactor.hpp"
#include "qtframe/normalform.hpp"

namespace qtframe {

struct QtfOptions {
    long max_order = 6;
    Rational p{1, 2}, q{1, 2};
    bool prune = true;
    bool compact_theta = true;  // short-support search for r = 2, normal-form route otherwise
};

inline QScalar inv_sqrt(long r) { return QScalar::sqrt_of(r) * QScalar(Rational(1, r)); }

// r^{-1/2} Vgu_N (order m) and r^{-1/2} conj(Vgu_N)^T (order n).
struct BalancedTargets {
    JetMatrix tv, tu;
};

inline BalancedTargets balanced_targets(const IntMatrix& N, long m, long n) {
    long r = CosetSystem(N).dm();
    QScalar s = inv_sqrt(r);
    VguN v = make_vgu(N, std::max(m, n));
    return {jm_truncate(v.jet, m).scaled(s), jm_conj_transpose(jm_truncate(v.jet, n)).scaled(s)};
}

inline void check_balancing_matrix(const IntMatrix& N, const CosetSystem& cs, size_t r) {
    if (N.rows() != N.cols() || int(N.rows()) != cs.dim()) throw DimensionMismatch("N must be d x d");
    if (CosetSystem(N).dm() != long(r)) throw DimensionMismatch("|det N| must equal the multiplicity r");
}

// theta = U of the general normal form with balanced targets; n = 2m.
inline NormalFormResult balanced_theta(const TrigMatrix& a, const CosetSystem& cs, const IntMatrix& N,
                                       const JetMatrix& matching, const JetMatrix& phi, long m) {
    size_t r = a.rows();
    if (r < 2) throw ShapeMismatch("balanced theta needs r >= 2");
    check_balancing_matrix(N, cs, r);
    try {
        BalancedTargets t = balanced_targets(N, m, 2 * m);
        return normal_form_general(a, cs, matching, phi, t.tv, t.tu, m, 2 * m);
    } catch (const FieldMismatch& e) {
        throw FieldLacksSqrtR(e.what());
    }
}

namespace detail {

inline std::vector<MultiIndex> simplex_support(int d, long D) {
    std::vector<MultiIndex> s;
    for (long k = 0; k <= D; ++k)
        for (const MultiIndex& mu : indices_of_degree(d, k)) s.push_back(mu);
    return s;
}

// Boxes with sides <= w + 1 containing the origin, ordered by size, then shape, then offset.
inline std::vector<std::vector<MultiIndex>> origin_boxes(int d, long w) {
    std::vector<std::pair<std::vector<long>, std::vector<long>>> shapes;  // (sides, offsets)
    std::vector<long> side(d, 0);
    while (true) {
        std::vector<long> off(d, 0);
        for (int t = 0; t < d; ++t) off[t] = -side[t];
        while (true) {
            shapes.push_back({side, off});
            int t = 0;
            while (t < d && off[t] == 0) {
                off[t] = -side[t];
                ++t;
            }
            if (t == d) break;
            ++off[t];
        }
        int t = 0;
        while (t < d && side[t] == w) {
            side[t] = 0;
            ++t;
        }
        if (t == d) break;
        ++side[t];
    }
    auto area = [](const std::vector<long>& s) {
        long a = 1;
        for (long x : s) a *= x + 1;
        return a;
    };
    std::stable_sort(shapes.begin(), shapes.end(), [&](auto& x, auto& y) {
        if (area(x.first) != area(y.first)) return area(x.first) < area(y.first);
        if (x.first != y.first) return x.first < y.first;
        // centred offsets first
        long cx = 0, cy = 0;
        for (int t = 0; t < d; ++t) {
            cx += std::abs(2 * x.second[t] + x.first[t]);
            cy += std::abs(2 * y.second[t] + y.first[t]);
        }
        return cx < cy;
    });
    std::vector<std::vector<MultiIndex>> out;
    for (auto& [sd, off] : shapes) {
        std::vector<MultiIndex> S;
        MultiIndex e(d);
        for (int t = 0; t < d; ++t) e[t] = off[t];
        while (true) {
            S.push_back(e);
            int t = 0;
            while (t < d && e[t] == off[t] + sd[t]) {
                e[t] = off[t];
                ++t;
            }
            if (t == d) break;
            ++e[t];
        }
        out.push_back(std::move(S));
    }
    return out;
}

// Rows mu (|mu| < n) of the jet of z^s f, one column per s in S.
inline void jet_columns(QMatrix& A, size_t row0, size_t col0, const std::vector<MultiIndex>& S, const Jet& f, long n,
                        const QScalar& sign) {
    auto mus = indices_below(f.dim(), n);
    for (size_t j = 0; j < S.size(); ++j) {
        Jet x = lp_jet(LaurentPoly::monomial(S[j]), n) * f.with_order(std::max(f.order(), n)).truncate(n);
        for (size_t i = 0; i < mus.size(); ++i) A(row0 + i, col0 + j) += sign * x.coeff(mus[i]);
    }
}

inline void jet_rhs(QMatrix& b, size_t row0, const Jet& f, long n) {
    auto mus = indices_below(f.dim(), n);
    for (size_t i = 0; i < mus.size(); ++i) b(row0 + i, 0) += f.coeff(mus[i]);
}

inline LaurentPoly poly_from(const QMatrix& x, size_t off, const std::vector<MultiIndex>& S) {
    LaurentPoly p(S.front().dim());
    for (size_t j = 0; j < S.size(); ++j) p.add_term(S[j], x(off + j, 0));
    return p;
}

// First column (alpha, gamma) on support S with alpha phi0 + beta phi1 = u0, gamma phi0 + delta phi1 = u1 (mod n)
// and alpha delta - beta gamma = c exactly.
inline std::optional<std::pair<LaurentPoly, LaurentPoly>> solve_first_column(
    const std::vector<MultiIndex>& S, const LaurentPoly& beta, const LaurentPoly& delta, const QScalar& c,
    const JetMatrix& phi, const JetMatrix& u, long n) {
    int d = beta.dim();
    size_t nm = indices_below(d, n).size(), k = S.size();
    std::map<MultiIndex, size_t> mono;
    for (auto& s : S) {
        for (auto& [e, x] : delta.terms()) mono.emplace(s + e, 0);
        for (auto& [e, x] : beta.terms()) mono.emplace(s + e, 0);
    }
    mono.emplace(MultiIndex(d), 0);
    size_t t = 0;
    for (auto& [e, idx] : mono) idx = t++;
    QMatrix A(2 * nm + mono.size(), 2 * k, QScalar(0)), b(2 * nm + mono.size(), 1, QScalar(0));
    jet_columns(A, 0, 0, S, phi(0, 0), n, 1);
    jet_rhs(b, 0, u(0, 0) - lp_jet(beta, n) * phi(1, 0).truncate(n), n);
    jet_columns(A, nm, k, S, phi(0, 0), n, 1);
    jet_rhs(b, nm, u(1, 0) - lp_jet(delta, n) * phi(1, 0).truncate(n), n);
    for (size_t j = 0; j < k; ++j) {
        for (auto& [e, x] : delta.terms()) A(2 * nm + mono.at(S[j] + e), j) += x;
        for (auto& [e, x] : beta.terms()) A(2 * nm + mono.at(S[j] + e), k + j) -= x;
    }
    b(2 * nm + mono.at(MultiIndex(d)), 0) = c;
    auto x = solve_linear(A, b);
    if (!x) return std::nullopt;
    return std::make_pair(poly_from(*x, 0, S), poly_from(*x, k, S));
}

}  // namespace detail

// Short-support balanced moment correction filter for r = 2. The determinant is linear in each column:
// the second column (beta, delta) and det = c come from delta u0 - beta u1 = c phi0 (mod n) and
// t (beta, delta)^T = v1 (mod m); the first column then solves a linear system including det = c exactly.
// The first-row condition t theta_0 = v0 (mod m) follows from t u = 1 and v phi = 1 + O(m).
inline NormalFormResult compact_balanced_theta(const TrigMatrix& a, const CosetSystem& cs, const IntMatrix& N,
                                               const JetMatrix& matching, const JetMatrix& phi, long m,
                                               long max_degree = 6) {
    size_t r = a.rows();
    int d = cs.dim();
    if (r != 2) throw ShapeMismatch("compact theta is implemented for r = 2");
    check_balancing_matrix(N, cs, r);
    long n = 2 * m;
    if (phi.zero().order() < n) throw JetConditionFailed("phi jet order below 2m");
    BalancedTargets tg;
    try {
        tg = balanced_targets(N, m, n);
    } catch (const FieldMismatch& e) {
        throw FieldLacksSqrtR(e.what());
    }
    // work with phi0(0) != 0; a swap is folded back at the end
    bool swap = jm_at_origin(phi)(0, 0).is_zero();
    TrigMatrix P = tm_identity(2, d);
    if (swap) P = detail::swap_pair(2, d, 0, 1).U;
    JetMatrix ph = jm_truncate(tm_jet(P, n) * jm_truncate(phi, n), n);
    JetMatrix v = jm_truncate(jm_truncate(matching, m) * tm_jet(P, m), m);
    const JetMatrix& u = tg.tu;
    const JetMatrix& t = tg.tv;
    size_t nN = indices_below(d, n).size(), nm = indices_below(d, m).size();

    auto build = [&](const LaurentPoly& alpha, const LaurentPoly& gamma, const LaurentPoly& beta,
                     const LaurentPoly& delta, const QScalar& c) -> std::optional<NormalFormResult> {
        TrigMatrix th = tm_zero(2, 2, d), thi = tm_zero(2, 2, d);
        th(0, 0) = alpha;
        th(1, 0) = gamma;
        th(0, 1) = beta;
        th(1, 1) = delta;
        QScalar ci = c.inv();
        thi(0, 0) = delta * ci;
        thi(0, 1) = -beta * ci;
        thi(1, 0) = -gamma * ci;
        thi(1, 1) = alpha * ci;
        NormalFormResult res;
        res.U = th * P;
        res.U_inv = P * thi;
        res.m = m;
        res.n = n;
        if (!(res.U * res.U_inv == tm_identity(2, d))) return std::nullopt;
        res.phi_nf_jet = jm_truncate(tm_jet(res.U, n) * jm_truncate(phi, n), n);
        res.matching_nf_jet = jm_truncate(jm_truncate(matching, m) * tm_jet(res.U_inv, m), m);
        if (!jm_equal_mod(res.matching_nf_jet, t, m) || !jm_equal_mod(res.phi_nf_jet, u, n)) return std::nullopt;
        res.a_nf = tm_upsample(res.U, cs.M()) * a * res.U_inv;
        if (!sum_rules_hold(res.a_nf, cs, jm_truncate(t, m), m)) return std::nullopt;
        return res;
    };
    // candidate supports: origin-containing boxes by area (short, centred filters), then simplices
    std::vector<std::vector<MultiIndex>> second = detail::origin_boxes(d, 2), first = detail::origin_boxes(d, 4);
    for (long D = 0; D <= max_degree; ++D) {
        second.push_back(detail::simplex_support(d, D));
        first.push_back(detail::simplex_support(d, D));
    }
    for (const auto& S : second) {
        size_t k = S.size();
        // unknowns: beta (k), delta (k), c
        QMatrix A(nN + nm, 2 * k + 1, QScalar(0)), b(nN + nm, 1, QScalar(0));
        detail::jet_columns(A, 0, 0, S, u(1, 0), n, -1);
        detail::jet_columns(A, 0, k, S, u(0, 0), n, 1);
        auto mus = indices_below(d, n);
        for (size_t i = 0; i < mus.size(); ++i) A(i, 2 * k) = -ph(0, 0).coeff(mus[i]);
        detail::jet_columns(A, nN, 0, S, t(0, 0), m, 1);
        detail::jet_columns(A, nN, k, S, t(0, 1), m, 1);
        detail::jet_rhs(b, nN, v(0, 1), m);
        // the sparse solution first, then single free variables pinned to 1
        std::vector<std::optional<size_t>> pins{std::nullopt};
        for (size_t j = 0; j < 2 * k + 1; ++j) pins.push_back(j);
        for (auto pin : pins) {
            QMatrix A2 = A, b2 = b;
            if (pin) {
                A2 = QMatrix(A.rows() + 1, A.cols(), QScalar(0));
                b2 = QMatrix(A.rows() + 1, 1, QScalar(0));
                A2.set_block(0, 0, A);
                b2.set_block(0, 0, b);
                A2(A.rows(), *pin) = 1;
                b2(A.rows(), 0) = 1;
            }
            auto x = solve_linear(A2, b2);
            if (!x) continue;
            QScalar c = (*x)(2 * k, 0);
            if (c.is_zero()) continue;
            LaurentPoly beta = detail::poly_from(*x, 0, S), delta = detail::poly_from(*x, k, S);
            for (const auto& S1 : first) {
                auto col = detail::solve_first_column(S1, beta, delta, c, ph, u, n);
                if (!col) continue;
                if (auto res = build(col->first, col->second, beta, delta, c)) return *res;
            }
        }
    }
    throw JetConditionFailed("no short-support moment correction filter up to degree " + std::to_string(max_degree));
}

struct MomentCorrectionReport {
    bool strongly_invertible = false, balanced_matching = false, unit_norm = false;
    JetMatrix matching_jet, phi_jet;  // of the corrected pair
    Jet norm_jet;
    bool accept() const { return strongly_invertible && balanced_matching && unit_norm; }
    std::string str() const {
        return std::string("strongly invertible: ") + (strongly_invertible ? "yes" : "no") +
               "\nbalanced matching (order m): " + (balanced_matching ? "yes" : "no") +
               "\n|theta phi|^2 = 1 + O(2m): " + (unit_norm ? "yes" : "no") +
               "\naccept: " + (accept() ? "yes" : "no");
    }
};

// Sufficient conditions for theta to be a balanced moment correction filter; phi needs order >= 2m.
inline MomentCorrectionReport check_moment_correction(const TrigMatrix& theta, const CosetSystem& cs, const IntMatrix& N,
                                                      const JetMatrix& matching, const JetMatrix& phi, long m) {
    MomentCorrectionReport rep;
    size_t r = theta.rows();
    if (theta.cols() != r || phi.rows() != r) throw ShapeMismatch("theta must be r x r");
    check_balancing_matrix(N, cs, r);
    long n = 2 * m;
    rep.strongly_invertible = tm_is_strongly_invertible(theta);
    if (tm_at_origin(theta).rows() && rank(tm_at_origin(theta)) < r) return rep;
    JetMatrix th = tm_jet(theta, n);
    rep.phi_jet = jm_truncate(th * jm_truncate(phi, n), n);
    rep.matching_jet = jm_truncate(jm_truncate(matching, m) * jm_inverse(jm_truncate(th, m)), m);
    rep.norm_jet = norm_squared(rep.phi_jet);
    rep.unit_norm = rep.norm_jet == Jet(cs.dim(), n, QScalar(1));
    if (rep.norm_jet.constant_term().is_zero()) return rep;
    Jet inv = rep.norm_jet.truncate(m).reciprocal();
    JetMatrix special = jm_conj_transpose(jm_truncate(rep.phi_jet, m)).map([&](const Jet& x) { return x * inv; });
    VguN v = make_vgu(N, m);
    Jet g = rep.matching_jet(0, 0);
    JetMatrix gv = v.jet.map([&](const Jet& x) { return x * g; });
    rep.balanced_matching = !g.constant_term().is_zero() && jm_equal_mod(special, rep.matching_jet, m) &&
                            jm_equal_mod(gv, rep.matching_jet, m);
    return rep;
}

// ---- deficiency in sheet form: a_1 = W - a^* W(M^T) a, a_j = -a^* W(M^T) a(. + 2 pi w_j) ----

inline RatVec neg_mod_one(const RatVec& w) {
    RatVec r(w.size());
    for (size_t i = 0; i < w.size(); ++i) {
        Rational x = -w[i];
        mpz_class fl;
        mpz_fdiv_q(fl.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
        r[i] = x - Rational(fl);
        r[i].canonicalize();
    }
    return r;
}

inline std::vector<TrigMatrix> deficiency_blocks(const TrigMatrix& a, const TrigMatrix& W, const CosetSystem& cs) {
    if (a.rows() != a.cols() || W.rows() != a.rows()) throw ShapeMismatch("deficiency blocks need square a and W");
    TrigMatrix left = tm_star(a) * tm_upsample(W, cs.M());
    std::vector<TrigMatrix> out;
    out.push_back(W - left * a);
    for (long j = 1; j < cs.dm(); ++j) out.push_back(tm_scale(left * modulate(a, cs.omega()[j]), QScalar(-1)));
    return out;
}

// M_{a,W} = diag(W(. + 2 pi w_l)) - P_a^* W(M^T .) P_a
inline TrigMatrix deficiency_matrix(const TrigMatrix& a, const TrigMatrix& W, const CosetSystem& cs) {
    size_t r = a.rows();
    TrigMatrix Dg = tm_zero(r * cs.dm(), r * cs.dm(), cs.dim());
    for (long l = 0; l < cs.dm(); ++l) Dg.set_block(l * r, l * r, modulate(W, cs.omega()[l]));
    TrigMatrix P = bank_P(a, cs);
    return Dg - tm_star(P) * tm_upsample(W, cs.M()) * P;
}

// With block (l,k) of D_{u,w} carrying u(. + 2 pi w_l) at w_k + w = w_l, sheet j enters with -w_j.
inline TrigMatrix assemble_blocks(const std::vector<TrigMatrix>& blocks, const CosetSystem& cs) {
    size_t r = blocks.at(0).rows();
    TrigMatrix S = tm_zero(r * cs.dm(), r * cs.dm(), cs.dim());
    for (long j = 0; j < cs.dm(); ++j) S = S + bank_D(blocks[j], cs, neg_mod_one(cs.omega()[j]));
    return S;
}

// Delta_beta = diag(nabla^beta delta, I_{r-1})
inline TrigMatrix delta_matrix(const MultiIndex& beta, size_t r) {
    TrigMatrix D = tm_identity(r, beta.dim());
    D(0, 0) = difference_symbol(beta);
    return D;
}

using IndexPair = std::pair<MultiIndex, MultiIndex>;

namespace detail {

inline bool is_zero_vec(const RatVec& w) {
    for (auto& x : w)
        if (sgn(x) != 0) return false;
    return true;
}

// f = sum_beta g_beta nabla^beta(. + 2 pi w)
inline std::map<MultiIndex, LaurentPoly> right_factor_at(const LaurentPoly& f, long m, const RatVec& w) {
    bool shift = !is_zero_vec(w);
    LaurentPoly g = shift ? modulate(f, neg_mod_one(w)) : f;
    auto parts = difference_factorize(g, m).parts;
    if (shift)
        for (auto& [b, p] : parts) p = modulate(p, w);
    return parts;
}

// f = sum_alpha conj(nabla^alpha) g_alpha
inline std::map<MultiIndex, LaurentPoly> left_factor(const LaurentPoly& f, long m) {
    auto parts = difference_factorize(f.star(), m).parts;
    for (auto& [b, p] : parts) p = p.star();
    return parts;
}

inline LaurentPoly shifted_symbol(const MultiIndex& beta, const RatVec& w) {
    LaurentPoly s = difference_symbol(beta);
    return is_zero_vec(w) ? s : modulate(s, w);
}

}  // namespace detail

struct BlockFactorization {
    RatVec omega;
    std::map<IndexPair, TrigMatrix> B;
};

// Factor each sheet block as sum conj(Delta_alpha)^T B Delta_beta(. + 2 pi w_j).
inline std::vector<BlockFactorization> factor_blocks(const std::vector<TrigMatrix>& blocks, const CosetSystem& cs,
                                                     long m) {
    int d = cs.dim();
    std::vector<BlockFactorization> out;
    auto betas = indices_of_degree(d, m);
    const MultiIndex& b0 = betas.front();
    for (size_t j = 0; j < blocks.size(); ++j) {
        const TrigMatrix& aj = blocks[j];
        size_t r = aj.rows();
        BlockFactorization f;
        f.omega = cs.omega()[j];
        auto slot = [&](const MultiIndex& al, const MultiIndex& be) -> TrigMatrix& {
            auto it = f.B.find({al, be});
            if (it == f.B.end()) it = f.B.emplace(IndexPair{al, be}, tm_zero(r, r, d)).first;
            return it->second;
        };
        try {
            // (1,1): vanishing on both sides
            const LaurentPoly& e11 = aj(0, 0);
            if (!e11.is_zero()) {
                if (detail::is_zero_vec(f.omega)) {
                    for (auto& [be, fb] : difference_factorize(e11, m).parts)
                        for (auto& [al, g] : detail::left_factor(fb, m)) slot(al, be)(0, 0) += g;
                } else {
                    // 1 = u + v with u = O(m) at 0 and v = O(m) at -2 pi w
                    int k = 0;
                    while (sgn(f.omega[k]) == 0) ++k;
                    LaurentPoly g = LaurentPoly(d, QScalar(1)) - LaurentPoly::monomial(MultiIndex::unit(d, k),
                                                                                     root_of_unity(f.omega[k]));
                    LaurentPoly w(d, QScalar(1));
                    for (long e = 0; e < m; ++e) w = w * g;
                    LaurentPoly v = w * jet_realize(lp_jet(w, m).reciprocal());
                    LaurentPoly u = LaurentPoly(d, QScalar(1)) - v;
                    auto fl = detail::left_factor(e11, m);
                    auto vr = detail::right_factor_at(v, m, f.omega);
                    auto ul = detail::left_factor(u, m);
                    auto fr = detail::right_factor_at(e11, m, f.omega);
                    for (auto& [al, x] : fl)
                        for (auto& [be, y] : vr) slot(al, be)(0, 0) += x * y;
                    for (auto& [al, x] : ul)
                        for (auto& [be, y] : fr) slot(al, be)(0, 0) += x * y;
                }
            }
            for (size_t c = 1; c < r; ++c) {
                if (!aj(0, c).is_zero())
                    for (auto& [al, g] : detail::left_factor(aj(0, c), m)) slot(al, b0)(0, c) += g;
                if (!aj(c, 0).is_zero())
                    for (auto& [be, g] : detail::right_factor_at(aj(c, 0), m, f.omega)) slot(b0, be)(c, 0) += g;
                for (size_t c2 = 1; c2 < r; ++c2) slot(b0, b0)(c, c2) += aj(c, c2);
            }
        } catch (const InsufficientVanishing& e) {
            throw JetConditionFailed("block " + std::to_string(j) + ": " + e.what());
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline TrigMatrix reassemble_block(const BlockFactorization& f) {
    TrigMatrix s;
    bool first = true;
    for (auto& [ab, B] : f.B) {
        size_t r = B.rows();
        TrigMatrix right = delta_matrix(ab.second, r);
        right(0, 0) = detail::shifted_symbol(ab.second, f.omega);
        TrigMatrix t = tm_star(delta_matrix(ab.first, r)) * B * right;
        s = first ? t : s + t;
        first = false;
    }
    return s;
}

// ---- coset-domain deficiency and its factorization ----

// N_{a,W} = d_M^{-1} E_W - Q_a^* W Q_a; the filter bank identity reads Q_b^* diag(eps) Q_b = N_{a,W}.
inline TrigMatrix coset_deficiency(const TrigMatrix& a, const TrigMatrix& W, const CosetSystem& cs) {
    TrigMatrix Q = bank_Q(a, cs);
    return tm_scale(bank_E0(W, cs), QScalar(Rational(1, cs.dm()))) - tm_star(Q) * W * Q;
}

struct CosetFactorization {
    long m = 0;
    size_t r = 0;
    std::map<IndexPair, TrigMatrix> X;  // symmetrized: X(b,a) = X(a,b)^*
};

namespace detail {

// Mx = sum_beta Y_beta E_{Delta_beta}: every merged row needs an order m first coordinate.
inline std::map<MultiIndex, TrigMatrix> right_factor_rows(const TrigMatrix& Mx, const CosetSystem& cs, size_t r,
                                                          long m) {
    int d = cs.dim();
    auto betas = indices_of_degree(d, m);
    std::map<MultiIndex, TrigMatrix> out;
    for (auto& b : betas) out.emplace(b, tm_zero(Mx.rows(), Mx.cols(), d));
    for (size_t l = 0; l < Mx.rows(); ++l) {
        TrigMatrix v = bank_Q_merge(Mx.block(l, 0, 1, Mx.cols()), cs);
        DifferenceFactorization f;
        try {
            f = difference_factorize(v(0, 0), m);
        } catch (const InsufficientVanishing& e) {
            throw JetConditionFailed("row " + std::to_string(l) + " is not right-factorizable: " + e.what());
        }
        for (auto& b : betas) {
            TrigMatrix y = tm_zero(1, r, d);
            y(0, 0) = f.parts.at(b);
            if (b == betas.front())
                for (size_t c = 1; c < r; ++c) y(0, c) = v(0, c);
            out.at(b).set_block(l, 0, bank_Q(y, cs));
        }
    }
    return out;
}

inline TrigMatrix one_by_one(const LaurentPoly& p) {
    TrigMatrix t = tm_zero(1, 1, p.dim());
    t(0, 0) = p;
    return t;
}

}  // namespace detail

// N = sum_{alpha,beta} E_{Delta_alpha}^* X_{alpha,beta} E_{Delta_beta}, built without root-of-unity phases:
// with the rank-one S = A B (A samples the first coordinate, B reinserts it at coset 0),
// N = (I-S)^* N (I-S) + (I-S)^* N S + S^* N (I-S) + B^* (A^* N A) B, where A^* N A is a scalar of order 2m.
inline CosetFactorization coset_factorize(const TrigMatrix& Nm, const CosetSystem& cs, size_t r, long m) {
    int d = cs.dim();
    size_t D = r * size_t(cs.dm());
    if (Nm.rows() != D || Nm.cols() != D) throw ShapeMismatch("deficiency must be d_M r square");
    if (m < 1) throw InputError("factorization order must be positive");
    auto betas = indices_of_degree(d, m);

    TrigMatrix A = tm_zero(D, 1, d), B = tm_zero(1, D, d);
    for (long l = 0; l < cs.dm(); ++l) {
        // a_l(M^T xi) = z^{gamma_l} + O(m)
        std::vector<Rational> x(d, Rational(0));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) x[i] -= cs.Minv()(i, j).rational_part().x * cs.gamma()[l][j];
        A(l * r, 0) = jet_realize(exp_i_jet(x, m));
    }
    B(0, 0) = LaurentPoly(d, QScalar(1));
    TrigMatrix S = A * B;
    TrigMatrix R = tm_identity(D, d) - S;
    TrigMatrix NA = Nm * A;

    auto G = detail::right_factor_rows(R, cs, r, m);
    auto V = detail::right_factor_rows(NA * B, cs, r, m);

    LaurentPoly t = (tm_star(A) * NA)(0, 0);
    if (vanishing_order(t, 2 * m) < 2 * m)
        throw JetConditionFailed("sampled deficiency vanishes to order " + std::to_string(vanishing_order(t, 2 * m)) +
                                 " < 2m");
    std::map<IndexPair, LaurentPoly> T;
    for (auto& [de, td] : difference_factorize(t, m).parts)
        for (auto& [ga, g] : detail::left_factor(td, m)) T[{ga, de}] = g;

    // nabla^beta(M^T xi) B = sum_gamma L_{beta,gamma} E_{Delta_gamma}
    std::map<IndexPair, TrigMatrix> L;
    for (auto& be : betas)
        for (auto& [ga, c] : difference_factorize(difference_symbol(be).upsample(cs.M()), m).parts) {
            TrigMatrix y = tm_zero(1, r, d);
            y(0, 0) = c;
            L[{be, ga}] = bank_Q(y, cs);
        }

    std::map<IndexPair, TrigMatrix> X;
    for (auto& al : betas)
        for (auto& be : betas) {
            TrigMatrix Ga = tm_star(G.at(al));
            TrigMatrix x = Ga * Nm * G.at(be) + Ga * V.at(be) + tm_star(V.at(al)) * G.at(be);
            for (auto& [gd, tv] : T) {
                if (tv.is_zero()) continue;
                x = x + tm_star(L.at({gd.first, al})) * detail::one_by_one(tv) * L.at({gd.second, be});
            }
            X[{al, be}] = x;
        }

    std::map<MultiIndex, TrigMatrix> E;
    for (auto& b : betas) E.emplace(b, bank_E0(delta_matrix(b, r), cs));
    TrigMatrix check = tm_zero(D, D, d);
    for (auto& [ab, x] : X) check = check + tm_star(E.at(ab.first)) * x * E.at(ab.second);
    if (!(check == Nm)) throw IdentityCheckFailed("coset factorization does not reproduce the deficiency");

    CosetFactorization f;
    f.m = m;
    f.r = r;
    QScalar half(Rational(1, 2));
    for (auto& al : betas)
        for (auto& be : betas) f.X[{al, be}] = tm_scale(X.at({al, be}) + tm_star(X.at({be, al})), half);
    return f;
}

struct HighpassAssembly {
    TrigMatrix Qb;  // s x d_M r coset stacks of the generators
    std::vector<int> signs;
    size_t s_unpruned = 0;
};

struct IdentityReport {
    bool ok = false;
    std::string detail;
};

inline IdentityReport compare_coset_identity(const TrigMatrix& Qb, const std::vector<int>& signs, const TrigMatrix& Nm,
                                             size_t r) {
    IdentityReport rep;
    TrigMatrix lhs = tm_zero(Nm.rows(), Nm.cols(), tm_dim(Nm));
    if (Qb.rows() > 0) {
        TrigMatrix sQ = Qb;
        for (size_t i = 0; i < Qb.rows(); ++i)
            if (signs.at(i) < 0)
                for (size_t j = 0; j < Qb.cols(); ++j) sQ(i, j) = -Qb(i, j);
        lhs = tm_star(Qb) * sQ;
    }
    for (size_t i = 0; i < Nm.rows(); ++i)
        for (size_t j = 0; j < Nm.cols(); ++j)
            if (!(lhs(i, j) == Nm(i, j))) {
                rep.detail = "mismatch at coset block (" + std::to_string(i / r) + "," + std::to_string(j / r) +
                             ") entry (" + std::to_string(i % r) + "," + std::to_string(j % r) + ")";
                return rep;
            }
    rep.ok = true;
    return rep;
}

// Generators (E_alpha + X_{alpha,beta} E_beta) for alpha < beta, and (pI +- qK_alpha) E_alpha with signs +-1.
inline HighpassAssembly assemble_highpass(const CosetFactorization& f, const CosetSystem& cs, const TrigMatrix& Nm,
                                          const Rational& p, const Rational& q, bool prune = true) {
    int d = cs.dim();
    size_t r = f.r, D = r * size_t(cs.dm());
    HighpassAssembly out;
    out.Qb = tm_zero(0, D, d);
    if (Nm.is_zero()) return out;
    std::vector<MultiIndex> betas;
    for (auto& [ab, x] : f.X)
        if (betas.empty() || !(betas.back() == ab.first)) betas.push_back(ab.first);
    std::map<MultiIndex, TrigMatrix> E, H;
    for (auto& b : betas) {
        E.emplace(b, bank_E0(delta_matrix(b, r), cs));
        H.emplace(b, tm_zero(D, D, d));
    }
    std::vector<std::pair<TrigMatrix, int>> groups;
    for (size_t i = 0; i < betas.size(); ++i)
        for (size_t j = i + 1; j < betas.size(); ++j) {
            const TrigMatrix& X = f.X.at({betas[i], betas[j]});
            groups.push_back({E.at(betas[i]) + X * E.at(betas[j]), 1});
            H.at(betas[i]) = H.at(betas[i]) + tm_identity(D, d);
            H.at(betas[j]) = H.at(betas[j]) + tm_star(X) * X;
        }
    QScalar P(p), Qs(q);
    for (auto& b : betas) {
        TrigMatrix K = f.X.at({b, b}) - H.at(b);
        TrigMatrix pI = tm_scale(tm_identity(D, d), P), qK = tm_scale(K, Qs);
        groups.push_back({(pI + qK) * E.at(b), 1});
        groups.push_back({(pI - qK) * E.at(b), -1});
    }
    std::vector<TrigMatrix> rows;
    for (auto& [G, sgn_] : groups)
        for (size_t i = 0; i < G.rows(); ++i) {
            TrigMatrix row = G.block(i, 0, 1, D);
            ++out.s_unpruned;
            if (prune && row.is_zero()) continue;
            rows.push_back(row);
            out.signs.push_back(sgn_);
        }
    out.Qb = tm_zero(rows.size(), D, d);
    for (size_t i = 0; i < rows.size(); ++i) out.Qb.set_block(i, 0, rows[i]);
    IdentityReport rep = compare_coset_identity(out.Qb, out.signs, Nm, r);
    if (!rep.ok) throw IdentityCheckFailed("assembled high-pass filters: " + rep.detail);
    return out;
}

// Strongly invertible V = L P (P a swap, L lower unipotent) with V phi = f e_1 + O(k), f(0) != 0.
inline InvertiblePair align_first_axis(const JetMatrix& phi, long k) {
    size_t r = phi.rows();
    int d = phi.zero().dim();
    size_t p = 0;
    while (p < r && phi(p, 0).constant_term().is_zero()) ++p;
    if (p == r) throw ZeroAtOrigin("phi vanishes at the origin");
    InvertiblePair P = detail::swap_pair(r, d, 0, p);
    JetMatrix psi = jm_truncate(tm_jet(P.U, k) * jm_truncate(phi, k), k);
    Jet inv0 = psi(0, 0).reciprocal();
    InvertiblePair L = detail::identity_pair(r, d);
    for (size_t l = 1; l < r; ++l)
        if (!psi(l, 0).is_zero()) L = L * detail::elementary_pair(r, d, l, 0, -jet_realize(psi(l, 0) * inv0));
    return L * P;
}

// N_{a,I} seen through V: with a' = V(M^T .) a V^{-1} and W = V^{-*} V^{-1}, N_{a',W} = E_{V^{-1}}^* N_{a,I} E_{V^{-1}}.
inline TrigMatrix aligned_deficiency(const TrigMatrix& a, const InvertiblePair& V, const CosetSystem& cs) {
    TrigMatrix E = bank_E0(V.Uinv, cs);
    return tm_star(E) * coset_deficiency(a, tm_identity(a.rows(), cs.dim()), cs) * E;
}

// ---- banks ----

struct BankReport {
    long m = 0, vanishing = 0, balanced_vm = 0, balancing = 0;
    size_t s = 0, s_unpruned = 0, negatives = 0;
    bool theta_strongly_invertible = false;
};

struct Bank {
    IntMatrix M, N;
    TrigMatrix theta;  // r x r moment correction filter (empty for the scalar path)
    TrigMatrix Theta;  // OEP weight of (a_new, b_new): identity for r >= 2
    TrigMatrix a, a_new, b_new;
    std::vector<int> signs;
    bool scalar = false;
    BankReport report;
};

// Largest k <= max with Vgu_N conj(a)^T = c Vgu_N(M^T .) + O(k), c(0) != 0.
inline long balanced_refinement_order(const TrigMatrix& a, const CosetSystem& cs, const IntMatrix& N, long max) {
    VguN v = make_vgu(N, max);
    JetMatrix L = v.jet * tm_jet(tm_star(a), max);
    Jet c = L(0, 0);
    if (c.constant_term().is_zero()) return 0;
    JetMatrix up = jm_compose_linear(v.jet, to_qmatrix(cs.M().transpose()));
    return jm_vanishing_order(L - up.map([&](const Jet& x) { return x * c; }));
}

namespace detail {

template <class F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    }
}

inline TrigMatrix stack_rows_to_filters(const HighpassAssembly& hp, const CosetSystem& cs, size_t r) {
    if (hp.Qb.rows() == 0) return tm_zero(0, r, cs.dim());
    return bank_Q_merge(hp.Qb, cs);
}

}  // namespace detail

inline IdentityReport check_bank_identity(const TrigMatrix& a, const TrigMatrix& b, const std::vector<int>& signs,
                                          const TrigMatrix& Theta, const CosetSystem& cs) {
    if (b.rows() != signs.size()) return {false, "number of signs differs from number of generators"};
    TrigMatrix Nm = coset_deficiency(a, Theta, cs);
    TrigMatrix Qb = b.rows() ? bank_Q(b, cs) : tm_zero(0, a.rows() * cs.dm(), cs.dim());
    return compare_coset_identity(Qb, signs, Nm, a.rows());
}

// Balanced moment correction: the short-support search when r = 2, the normal-form route otherwise.
inline NormalFormResult moment_correction_filter(const TrigMatrix& a, const CosetSystem& cs, const IntMatrix& N,
                                                 const JetMatrix& matching, const JetMatrix& phi, long m,
                                                 bool compact = true) {
    if (compact && a.rows() == 2) {
        try {
            return compact_balanced_theta(a, cs, N, matching, phi, m);
        } catch (const JetConditionFailed&) {
        }
    }
    return balanced_theta(a, cs, N, matching, phi, m);
}

inline Bank construct_quasi_tight(const TrigMatrix& a, const IntMatrix& M, const IntMatrix& N,
                                  const QtfOptions& opt = {}) {
    CosetSystem cs = detail::staged("validate", [&] { return validate_dilation(M); });
    size_t r = a.rows();
    if (a.cols() != r) throw ShapeMismatch("mask must be square");
    if (tm_dim(a) != cs.dim()) throw DimensionMismatch("mask dimension differs from the dilation");
    if (r == 1) throw InputError("r = 1: use the scalar construction");
    detail::staged("validate", [&] { check_balancing_matrix(N, cs, r); return 0; });

    auto [m, v] = detail::staged("analyze", [&] { return sum_rules(a, cs, opt.max_order); });
    if (m < 1) throw StageError("analyze", DegenerateMomentSystem("mask satisfies no sum rules"));
    long n = 2 * m;
    JetMatrix phi = detail::staged("analyze", [&] { return phi_jets(a, cs, n, jm_at_origin(v)); });
    if (!eigen_condition(a, cs, m).ok())
        throw StageError("analyze", EigenNotSimple(eigen_condition(a, cs, m).str()));

    NormalFormResult th =
        detail::staged("theta", [&] { return moment_correction_filter(a, cs, N, v, phi, m, opt.compact_theta); });
    InvertiblePair V = detail::staged("align", [&] { return align_first_axis(th.phi_nf_jet, m); });
    TrigMatrix Nm = detail::staged("align", [&] { return aligned_deficiency(th.a_nf, V, cs); });
    CosetFactorization fac = detail::staged("factor", [&] { return coset_factorize(Nm, cs, r, m); });
    HighpassAssembly hp =
        detail::staged("assemble", [&] { return assemble_highpass(fac, cs, Nm, opt.p, opt.q, opt.prune); });

    Bank bank;
    bank.M = M;
    bank.N = N;
    bank.theta = th.U;
    bank.Theta = tm_identity(r, cs.dim());
    bank.a = a;
    bank.a_new = th.a_nf;
    bank.b_new = detail::stack_rows_to_filters(hp, cs, r) * V.U;
    bank.signs = hp.signs;
    IdentityReport id = check_bank_identity(bank.a_new, bank.b_new, bank.signs, bank.Theta, cs);
    if (!id.ok) throw StageError("verify", IdentityCheckFailed(id.detail));

    BankReport& rep = bank.report;
    rep.m = m;
    rep.s = bank.signs.size();
    rep.s_unpruned = hp.s_unpruned;
    for (int s : bank.signs) rep.negatives += s < 0;
    rep.theta_strongly_invertible = tm_is_strongly_invertible(bank.theta);
    rep.vanishing = rep.s ? jm_vanishing_order(tm_jet(bank.b_new, n) * th.phi_nf_jet) : n;
    rep.balanced_vm = rep.s ? balanced_vm_order(bank.b_new, N, n) : n;
    rep.balancing = std::min(rep.balanced_vm, balanced_refinement_order(bank.a_new, cs, N, n));
    if (rep.vanishing < m) throw StageError("verify", InsufficientVanishing("generators lost vanishing moments"));
    if (rep.balanced_vm < m)
        throw StageError("verify", InsufficientBalancedVanishing("generators lost balanced vanishing moments"));
    return bank;
}

// Theta realizes the order-2m jet of 1/|phi|^2, symmetrized to be Hermitian.
inline LaurentPoly scalar_weight(const JetMatrix& phi, long n) {
    Jet inv = norm_squared(jm_truncate(phi, n)).reciprocal();
    LaurentPoly p = jet_realize(inv);
    return (p + p.star()) * QScalar(Rational(1, 2));
}

inline Bank construct_quasi_tight_scalar(const TrigMatrix& a, const IntMatrix& M, const QtfOptions& opt = {}) {
    CosetSystem cs = detail::staged("validate", [&] { return validate_dilation(M); });
    if (a.rows() != 1 || a.cols() != 1) throw ShapeMismatch("scalar construction needs a 1 x 1 mask");
    if (tm_dim(a) != cs.dim()) throw DimensionMismatch("mask dimension differs from the dilation");
    auto [m, v] = detail::staged("analyze", [&] { return sum_rules(a, cs, opt.max_order); });
    if (m < 1) throw StageError("analyze", DegenerateMomentSystem("mask satisfies no sum rules"));
    long n = 2 * m;
    JetMatrix phi = detail::staged("analyze", [&] { return phi_jets(a, cs, n, jm_at_origin(v)); });

    Bank bank;
    bank.scalar = true;
    bank.M = M;
    bank.N = IntMatrix(cs.dim(), cs.dim(), 0);
    for (int i = 0; i < cs.dim(); ++i) bank.N(i, i) = 1;
    bank.Theta = detail::one_by_one(scalar_weight(phi, n));
    bank.a = a;
    bank.a_new = a;
    TrigMatrix Nm = coset_deficiency(a, bank.Theta, cs);
    CosetFactorization fac = detail::staged("factor", [&] { return coset_factorize(Nm, cs, 1, m); });
    HighpassAssembly hp =
        detail::staged("assemble", [&] { return assemble_highpass(fac, cs, Nm, opt.p, opt.q, opt.prune); });
    bank.b_new = detail::stack_rows_to_filters(hp, cs, 1);
    bank.signs = hp.signs;
    IdentityReport id = check_bank_identity(bank.a_new, bank.b_new, bank.signs, bank.Theta, cs);
    if (!id.ok) throw StageError("verify", IdentityCheckFailed(id.detail));

    BankReport& rep = bank.report;
    rep.m = m;
    rep.s = bank.signs.size();
    rep.s_unpruned = hp.s_unpruned;
    for (int s : bank.signs) rep.negatives += s < 0;
    rep.theta_strongly_invertible = bank.Theta(0, 0).is_monomial();
    rep.vanishing = rep.s ? jm_vanishing_order(tm_jet(bank.b_new, n) * phi) : n;
    rep.balanced_vm = rep.vanishing;
    rep.balancing = rep.vanishing;
    if (rep.vanishing < m) throw StageError("verify", InsufficientVanishing("generators lost vanishing moments"));
    return bank;
}

struct VerifyReport {
    IdentityReport identity;
    bool theta_strongly_invertible = false, oep_normalization = false;
    long m = 0, vanishing = 0, balanced_vm = 0, balancing = 0;
    bool ok() const {
        return identity.ok && oep_normalization && vanishing >= m && balanced_vm >= m && balancing >= m;
    }
    std::string str() const {
        auto yn = [](bool b) { return b ? std::string("ok") : std::string("FAIL"); };
        return "filter bank identity: " + yn(identity.ok) + (identity.ok ? "" : " (" + identity.detail + ")") +
               "\nmoment correction strongly invertible: " + (theta_strongly_invertible ? "yes" : "no") +
               "\nOEP normalization: " + yn(oep_normalization) + "\nsum rule order: " + std::to_string(m) +
               "\nvanishing moments: " + std::to_string(vanishing) + " " + yn(vanishing >= m) +
               "\nbalanced vanishing moments: " + std::to_string(balanced_vm) + " " + yn(balanced_vm >= m) +
               "\nbalancing order: " + std::to_string(balancing) + " " + yn(balancing >= m);
    }
};

// Re-derives everything from the original mask and the stored filters.
inline VerifyReport verify_bank(const Bank& bank, long max_order = 6) {
    VerifyReport rep;
    CosetSystem cs = validate_dilation(bank.M);
    size_t r = bank.a.rows();
    rep.identity = check_bank_identity(bank.a_new, bank.b_new, bank.signs, bank.Theta, cs);
    auto [m, v] = sum_rules(bank.a, cs, max_order);
    rep.m = m;
    long n = std::max(2 * m, 1L);
    JetMatrix phi = phi_jets(bank.a, cs, n, m > 0 ? std::optional<QMatrix>(jm_at_origin(v)) : std::nullopt);
    JetMatrix phin = phi;
    if (!bank.scalar) {
        rep.theta_strongly_invertible = tm_is_strongly_invertible(bank.theta);
        phin = jm_truncate(tm_jet(bank.theta, n) * phi, n);
    } else {
        rep.theta_strongly_invertible = bank.Theta(0, 0).is_monomial();
    }
    QMatrix p0 = jm_at_origin(phin);
    QMatrix T0 = tm_at_origin(bank.Theta);
    QMatrix p0s = p0.transpose().map([](const QScalar& x) { return x.conj(); });
    rep.oep_normalization = (p0s * T0 * p0)(0, 0) == QScalar(1);
    rep.vanishing = bank.b_new.rows() ? jm_vanishing_order(tm_jet(bank.b_new, n) * phin) : n;
    if (bank.scalar || r == 1) {
        rep.balanced_vm = rep.balancing = rep.vanishing;
    } else {
        rep.balanced_vm = bank.b_new.rows() ? balanced_vm_order(bank.b_new, bank.N, n) : n;
        rep.balancing = std::min(rep.balanced_vm, balanced_refinement_order(bank.a_new, cs, bank.N, n));
    }
    return rep;
}

}  // namespace qtframe
