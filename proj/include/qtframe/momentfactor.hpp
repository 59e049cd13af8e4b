#pragma once

#include <map>
#include <vector>

#include "qtframe/jet.hpp"
#include "qtframe/lattice.hpp"

namespace qtframe {

inline long vanishing_order(const LaurentPoly& p, long max) { return lp_jet(p, max).vanishing_order(); }

inline long vanishing_order(const TrigMatrix& p, long max) {
    if (p.rows() == 0 || p.cols() == 0) return max;
    return jm_vanishing_order(tm_jet(p, max));
}

// p = sum_beta (1 - z)^beta parts[beta], |beta| = m.
struct DifferenceFactorization {
    long m = 0;
    std::map<MultiIndex, LaurentPoly> parts;
};

// hat of nabla^beta delta: prod_j (1 - z_j)^{beta_j}
inline LaurentPoly difference_symbol(const MultiIndex& beta) {
    int d = beta.dim();
    LaurentPoly one(d, QScalar(1)), r = one;
    for (int j = 0; j < d; ++j)
        for (long e = 0; e < beta[j]; ++e) r = r * (one - LaurentPoly::var(d, j));
    return r;
}

// Exact division by (1 - z_j): along each z_j-line the quotient is a running sum.
inline LaurentPoly divide_one_minus_z(const LaurentPoly& p, int j) {
    std::map<MultiIndex, std::map<long, QScalar>> lines;
    for (auto& [k, c] : p.terms()) {
        MultiIndex base = k;
        base[j] = 0;
        lines[base][k[j]] = c;
    }
    LaurentPoly q(p.dim());
    for (auto& [base, line] : lines) {
        QScalar acc = 0;
        long lo = line.begin()->first, hi = line.rbegin()->first;
        for (long e = lo; e <= hi; ++e) {
            auto it = line.find(e);
            if (it != line.end()) acc += it->second;
            if (e < hi) {
                MultiIndex k = base;
                k[j] = e;
                q.add_term(k, acc);
            }
        }
        if (!acc.is_zero()) throw NotDivisible("polynomial does not vanish on z_j = 1");
    }
    return q;
}

namespace detail {

inline void difference_recurse(const LaurentPoly& p, long m, const MultiIndex& beta,
                               std::map<MultiIndex, LaurentPoly>& out) {
    int d = p.dim();
    if (m == 0) {
        auto [it, fresh] = out.try_emplace(beta, p);
        if (!fresh) it->second += p;
        return;
    }
    if (p.is_zero()) return;
    LaurentPoly cur = p;
    for (int j = 0; j < d; ++j) {
        LaurentPoly next = cur.at_one(j);
        LaurentPoly diff = cur - next;
        if (!diff.is_zero()) difference_recurse(divide_one_minus_z(diff, j), m - 1, beta + MultiIndex::unit(d, j), out);
        cur = next;
    }
    if (!cur.is_zero()) throw InsufficientVanishing("polynomial does not vanish to the requested order");
}

}  // namespace detail

// Telescoping in z_1, z_2, ... order; every |beta| = m key is present.
inline DifferenceFactorization difference_factorize(const LaurentPoly& p, long m) {
    int d = p.dim();
    if (m < 0) throw InputError("negative order");
    if (vanishing_order(p, m) < m) throw InsufficientVanishing("vanishing order below " + std::to_string(m));
    DifferenceFactorization f;
    f.m = m;
    for (const MultiIndex& b : indices_of_degree(d, m)) f.parts.emplace(b, LaurentPoly(d));
    detail::difference_recurse(p, m, MultiIndex(d), f.parts);
    return f;
}

inline LaurentPoly difference_reassemble(const DifferenceFactorization& f) {
    LaurentPoly s(f.parts.empty() ? 0 : f.parts.begin()->first.dim());
    for (auto& [b, q] : f.parts) s += difference_symbol(b) * q;
    return s;
}

// Entrywise factorization of a matrix: beta -> matrix of parts.
inline std::map<MultiIndex, TrigMatrix> difference_factorize(const TrigMatrix& p, long m) {
    int d = tm_dim(p);
    std::map<MultiIndex, TrigMatrix> out;
    for (const MultiIndex& b : indices_of_degree(d, m)) out.emplace(b, tm_zero(p.rows(), p.cols(), d));
    for (size_t i = 0; i < p.rows(); ++i)
        for (size_t j = 0; j < p.cols(); ++j)
            for (auto& [b, q] : difference_factorize(p(i, j), m).parts) out.at(b)(i, j) = q;
    return out;
}

// Row of exp(i N^{-1} kappa_j . xi) jets; kappa_j run over the colex transversal of Z^d / N Z^d.
struct VguN {
    IntMatrix N;
    std::vector<MultiIndex> kappa;
    JetMatrix jet;
};

inline Jet exp_i_jet(const std::vector<Rational>& x, long n) {
    int d = int(x.size());
    Jet j(d, n);
    for (long k = 0; k < n; ++k) {
        QScalar ik = minus_i_power(k).conj();
        for (const MultiIndex& mu : indices_of_degree(d, k)) {
            Rational c = 1;
            for (int t = 0; t < d; ++t) {
                for (long e = 0; e < mu[t]; ++e) c *= x[t];
                c /= factorial(mu[t]);
            }
            if (c != 0) j.add_term(mu, ik * QScalar(c));
        }
    }
    return j;
}

inline VguN make_vgu(const IntMatrix& N, long n) {
    CosetSystem cn(N);
    VguN v;
    v.N = N;
    v.kappa = cn.gamma();
    int d = cn.dim();
    v.jet = jm_zero(1, v.kappa.size(), d, n);
    for (size_t j = 0; j < v.kappa.size(); ++j) {
        std::vector<Rational> x(d, Rational(0));
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) x[a] += cn.Minv()(a, b).rational_part().x * v.kappa[j][b];
        v.jet(0, j) = exp_i_jet(x, n);
    }
    return v;
}

// Largest m <= max with Vgu_N conj(b)^T = O(|xi|^m).
inline long balanced_vm_order(const TrigMatrix& b, const IntMatrix& N, long max) {
    CosetSystem cn(N);
    if (b.cols() != size_t(cn.dm())) throw ShapeMismatch("columns of b must equal |det N|");
    VguN v = make_vgu(N, max);
    return jm_vanishing_order(v.jet * tm_jet(tm_star(b), max));
}

// b = sum_beta Q_{q_beta;N} E_{beta;N}, q_beta of shape s x 1.
struct BalancedFactorization {
    long m = 0;
    std::map<MultiIndex, TrigMatrix> q;
};

inline TrigMatrix balanced_reassemble(const BalancedFactorization& f, const CosetSystem& cn, size_t s) {
    TrigMatrix b = tm_zero(s, size_t(cn.dm()), cn.dim());
    for (auto& [beta, qb] : f.q) b = b + bank_Q(qb, cn) * bank_E0(difference_symbol(beta), cn);
    return b;
}

inline BalancedFactorization balanced_coset_factorize(const TrigMatrix& b, const IntMatrix& N, long m) {
    CosetSystem cn(N);
    if (b.cols() != size_t(cn.dm())) throw ShapeMismatch("columns of b must equal |det N|");
    if (balanced_vm_order(b, N, m) < m)
        throw InsufficientBalancedVanishing("balanced vanishing order below " + std::to_string(m));
    // sum_j z^{kappa_j} b_j(N^T xi) has integral exponents and vanishes to order m
    TrigMatrix c = bank_Q_merge(b, cn);
    BalancedFactorization f;
    f.m = m;
    try {
        f.q = difference_factorize(c, m);
    } catch (const InsufficientVanishing& e) {
        throw InsufficientBalancedVanishing(e.what());
    }
    if (!(balanced_reassemble(f, cn, b.rows()) == b))
        throw IdentityCheckFailed("balanced coset reassembly mismatch");
    return f;
}

}  // namespace qtframe
