#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "qtframe/laurent.hpp"

namespace qtframe {

using RatVec = std::vector<Rational>;

inline long int_det(const IntMatrix& M) {
    QScalar d = det(to_qmatrix(M));
    return d.rational_part().x.get_num().get_si();
}

// Roots of p(x) = sum c[k] x^k all strictly inside the unit disk (Schur-Cohn recursion).
inline bool schur_stable(std::vector<Rational> c) {
    while (!c.empty() && sgn(c.back()) == 0) c.pop_back();
    while (c.size() > 1) {
        size_t n = c.size() - 1;
        if (abs(c[0]) >= abs(c[n])) return false;
        std::vector<Rational> nxt(n);
        // (c_n p(x) - c_0 p*(x)) / x
        for (size_t k = 1; k <= n; ++k) nxt[k - 1] = c[n] * c[k] - c[0] * c[n - k];
        c = std::move(nxt);
        while (!c.empty() && sgn(c.back()) == 0) c.pop_back();
        if (c.empty()) return false;
    }
    return !c.empty();
}

// Lex order on reversed coordinates: (1,0) precedes (0,1), zero first.
template <class V>
bool colex_less(const V& a, const V& b) {
    for (size_t i = a.size(); i-- > 0;) {
        if (a[i] < b[i]) return true;
        if (b[i] < a[i]) return false;
    }
    return false;
}

class CosetSystem {
public:
    CosetSystem() = default;

    // Any nonsingular integer matrix; expansiveness is checked by validate_dilation.
    explicit CosetSystem(const IntMatrix& M) : M_(M) {
        if (M.rows() != M.cols()) throw ShapeMismatch("dilation matrix must be square");
        d_ = int(M.rows());
        det_ = int_det(M);
        if (det_ == 0) throw Singular("dilation matrix is singular");
        dm_ = std::labs(det_);
        Minv_ = inverse(to_qmatrix(M));
        adj_ = IntMatrix(d_, d_, 0L);
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j) {
                Rational v = Minv_(i, j).rational_part().x * det_;
                adj_(i, j) = v.get_num().get_si();
            }
        gamma_ = enumerate_digits(M);
        IntMatrix Mt = M.transpose();
        QMatrix Mti = inverse(to_qmatrix(Mt));
        for (const MultiIndex& g : enumerate_digits(Mt)) {
            RatVec w(d_);
            for (int i = 0; i < d_; ++i) {
                Rational s = 0;
                for (int j = 0; j < d_; ++j) s += Mti(i, j).rational_part().x * g[j];
                mpz_class fl;
                mpz_fdiv_q(fl.get_mpz_t(), s.get_num_mpz_t(), s.get_den_mpz_t());
                w[i] = s - Rational(fl);
                w[i].canonicalize();
            }
            omega_.push_back(w);
        }
        std::sort(omega_.begin(), omega_.end(), colex_less<RatVec>);
    }

    int dim() const { return d_; }
    long dm() const { return dm_; }
    long det() const { return det_; }
    const IntMatrix& M() const { return M_; }
    const QMatrix& Minv() const { return Minv_; }
    const std::vector<MultiIndex>& gamma() const { return gamma_; }
    const std::vector<RatVec>& omega() const { return omega_; }

    // j with k = gamma + M j, if it exists.
    bool reduce(const MultiIndex& k, const MultiIndex& gamma, MultiIndex& j) const {
        MultiIndex diff = k - gamma;
        j = MultiIndex(d_);
        for (int i = 0; i < d_; ++i) {
            long s = 0;
            for (int t = 0; t < d_; ++t) s += adj_(i, t) * diff[t];
            if (s % det_ != 0) return false;
            j[i] = s / det_;
        }
        return true;
    }

    // Index of the representative of k's coset.
    size_t coset_of(const MultiIndex& k) const {
        MultiIndex j;
        for (size_t g = 0; g < gamma_.size(); ++g)
            if (reduce(k, gamma_[g], j)) return g;
        throw std::logic_error("coset representatives are incomplete");
    }

private:
    static std::vector<MultiIndex> enumerate_digits(const IntMatrix& M) {
        int d = int(M.rows());
        QMatrix Mi = inverse(to_qmatrix(M));
        std::vector<long> lo(d, 0), hi(d, 0);
        for (long mask = 0; mask < (1L << d); ++mask)
            for (int i = 0; i < d; ++i) {
                long s = 0;
                for (int j = 0; j < d; ++j)
                    if (mask >> j & 1) s += M(i, j);
                lo[i] = std::min(lo[i], s);
                hi[i] = std::max(hi[i], s);
            }
        std::vector<MultiIndex> out;
        MultiIndex k(d);
        auto rec = [&](auto&& self, int pos) -> void {
            if (pos == d) {
                for (int i = 0; i < d; ++i) {
                    Rational s = 0;
                    for (int j = 0; j < d; ++j) s += Mi(i, j).rational_part().x * k[j];
                    if (sgn(s) < 0 || s >= 1) return;
                }
                out.push_back(k);
                return;
            }
            for (long v = lo[pos]; v <= hi[pos]; ++v) {
                k[pos] = v;
                self(self, pos + 1);
            }
        };
        rec(rec, 0);
        std::sort(out.begin(), out.end(), [](const MultiIndex& a, const MultiIndex& b) {
            return colex_less(a.to_vector(), b.to_vector());
        });
        return out;
    }

    IntMatrix M_, adj_;
    QMatrix Minv_;
    int d_ = 0;
    long det_ = 0, dm_ = 0;
    std::vector<MultiIndex> gamma_;
    std::vector<RatVec> omega_;
};

// Accepts M iff every eigenvalue lies strictly outside the closed unit disk.
inline CosetSystem validate_dilation(const IntMatrix& M) {
    if (M.rows() != M.cols() || M.rows() == 0) throw ShapeMismatch("dilation matrix must be square");
    if (int_det(M) == 0) throw Singular("dilation matrix is singular");
    auto cp = charpoly(to_qmatrix(M));
    // reversed characteristic polynomial has the reciprocal eigenvalues as roots
    std::vector<Rational> rev(cp.size());
    for (size_t k = 0; k < cp.size(); ++k) rev[k] = cp[cp.size() - 1 - k].rational_part().x;
    if (!schur_stable(rev)) throw NotExpanding("matrix has an eigenvalue in the closed unit disk");
    return CosetSystem(M);
}

// u^{[gamma]}(k) = u(gamma + M k), gamma any lattice point.
inline LaurentPoly coset_part(const LaurentPoly& p, const CosetSystem& cs, const MultiIndex& gamma) {
    LaurentPoly r(p.dim());
    MultiIndex j;
    for (auto& [k, c] : p.terms())
        if (cs.reduce(k, gamma, j)) r.add_term(j, c);
    return r;
}

inline TrigMatrix coset_part(const TrigMatrix& u, const CosetSystem& cs, const MultiIndex& gamma) {
    return u.map([&](const LaurentPoly& p) { return coset_part(p, cs, gamma); });
}

inline std::vector<TrigMatrix> coset_split(const TrigMatrix& u, const CosetSystem& cs) {
    std::vector<TrigMatrix> parts(cs.dm(), tm_zero(u.rows(), u.cols(), cs.dim()));
    for (size_t i = 0; i < u.rows(); ++i)
        for (size_t j = 0; j < u.cols(); ++j)
            for (auto& [k, c] : u(i, j).terms()) {
                size_t g = cs.coset_of(k);
                MultiIndex q;
                cs.reduce(k, cs.gamma()[g], q);
                parts[g](i, j).add_term(q, c);
            }
    return parts;
}

// u(xi) = sum_gamma u^{[gamma]}(M^T xi) e^{-i gamma.xi}
inline TrigMatrix coset_merge(const std::vector<TrigMatrix>& parts, const CosetSystem& cs) {
    if (parts.size() != size_t(cs.dm())) throw ShapeMismatch("coset_merge needs d_M parts");
    TrigMatrix u = tm_zero(parts[0].rows(), parts[0].cols(), cs.dim());
    for (size_t g = 0; g < parts.size(); ++g)
        u = u + tm_mul_poly(tm_upsample(parts[g], cs.M()), LaurentPoly::monomial(cs.gamma()[g]));
    return u;
}

inline LaurentPoly coset_merge(const std::vector<LaurentPoly>& parts, const CosetSystem& cs) {
    LaurentPoly u(cs.dim());
    for (size_t g = 0; g < parts.size(); ++g) u += parts[g].upsample(cs.M()).shift(cs.gamma()[g]);
    return u;
}

// e^{-2 pi i q}; exact for q with denominator dividing 8 or 12.
inline QScalar root_of_unity(const Rational& q) {
    mpz_class fl;
    mpz_fdiv_q(fl.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
    Rational deg = (q - Rational(fl)) * 360;
    deg.canonicalize();
    if (deg.get_den() != 1) throw UnsupportedRootOfUnity("phase " + q.get_str() + " outside Q(i,sqrt k)");
    long a = deg.get_num().get_si() % 360;
    QScalar s2h = QScalar::sqrt_of(2) * QScalar(Rational(1, 2));
    QScalar s3h = QScalar::sqrt_of(3) * QScalar(Rational(1, 2));
    QScalar h(Rational(1, 2));
    // (cos, sin) on the first quadrant
    auto base = [&](long b, QScalar& c, QScalar& s) {
        switch (b) {
            case 0: c = 1; s = 0; return true;
            case 30: c = s3h; s = h; return true;
            case 45: c = s2h; s = s2h; return true;
            case 60: c = h; s = s3h; return true;
            default: return false;
        }
    };
    QScalar c, s;
    long quad = a / 90, b = a % 90;
    if (!base(b, c, s)) throw UnsupportedRootOfUnity("phase " + q.get_str() + " outside Q(i,sqrt k)");
    for (long r = 0; r < quad; ++r) {
        QScalar nc = -s, ns = c;
        c = nc;
        s = ns;
    }
    return c - s * QScalar::i();
}

inline Rational dot(const MultiIndex& k, const RatVec& w) {
    Rational s = 0;
    for (int i = 0; i < k.dim(); ++i) s += w[i] * k[i];
    return s;
}

// u(xi + 2 pi omega)
inline LaurentPoly modulate(const LaurentPoly& p, const RatVec& w) {
    LaurentPoly r(p.dim());
    for (auto& [k, c] : p.terms()) r.add_term(k, c * root_of_unity(dot(k, w)));
    return r;
}
inline TrigMatrix modulate(const TrigMatrix& u, const RatVec& w) {
    return u.map([&](const LaurentPoly& p) { return modulate(p, w); });
}

// Q_u = [u^{[gamma_1]}, ..., u^{[gamma_dM]}]
inline TrigMatrix bank_Q(const TrigMatrix& u, const CosetSystem& cs) {
    auto parts = coset_split(u, cs);
    TrigMatrix Q = tm_zero(u.rows(), u.cols() * cs.dm(), cs.dim());
    for (size_t g = 0; g < parts.size(); ++g) Q.set_block(0, g * u.cols(), parts[g]);
    return Q;
}

// Inverse of bank_Q.
inline TrigMatrix bank_Q_merge(const TrigMatrix& Q, const CosetSystem& cs) {
    size_t r = Q.cols() / cs.dm();
    std::vector<TrigMatrix> parts;
    for (long g = 0; g < cs.dm(); ++g) parts.push_back(Q.block(0, g * r, Q.rows(), r));
    return coset_merge(parts, cs);
}

// P_u = [u(xi + 2 pi omega_1), ...]
inline TrigMatrix bank_P(const TrigMatrix& u, const CosetSystem& cs) {
    TrigMatrix P = tm_zero(u.rows(), u.cols() * cs.dm(), cs.dim());
    for (long k = 0; k < cs.dm(); ++k) P.set_block(0, k * u.cols(), modulate(u, cs.omega()[k]));
    return P;
}

// F_{r;M} blocks e^{-i gamma_l.(xi + 2 pi omega_k)} I_r
inline TrigMatrix bank_F(size_t r, const CosetSystem& cs) {
    TrigMatrix F = tm_zero(r * cs.dm(), r * cs.dm(), cs.dim());
    for (long l = 0; l < cs.dm(); ++l)
        for (long k = 0; k < cs.dm(); ++k) {
            LaurentPoly e = LaurentPoly::monomial(cs.gamma()[l], root_of_unity(dot(cs.gamma()[l], cs.omega()[k])));
            for (size_t i = 0; i < r; ++i) F(l * r + i, k * r + i) = e;
        }
    return F;
}

inline bool omega_congruent(const RatVec& a, const RatVec& b) {
    for (size_t i = 0; i < a.size(); ++i)
        if (Rational(a[i] - b[i]).get_den() != 1) return false;
    return true;
}

// D_{u,omega}: block (l,k) = u(xi + 2 pi omega_l) when omega_k + omega = omega_l mod Z^d.
// This index placement is the one for which F D F^* = d_M E_{u,omega}(M^T xi) holds.
inline TrigMatrix bank_D(const TrigMatrix& u, const CosetSystem& cs, const RatVec& w) {
    size_t r = u.rows();
    TrigMatrix D = tm_zero(r * cs.dm(), r * cs.dm(), cs.dim());
    for (long l = 0; l < cs.dm(); ++l)
        for (long k = 0; k < cs.dm(); ++k) {
            RatVec s(w.size());
            for (size_t i = 0; i < w.size(); ++i) s[i] = cs.omega()[k][i] + w[i];
            if (omega_congruent(s, cs.omega()[l])) D.set_block(l * r, k * r, modulate(u, cs.omega()[l]));
        }
    return D;
}

// E_{u,omega}: block (l,k) = u^{[gamma_k - gamma_l]} e^{-i gamma_k . 2 pi omega}
inline TrigMatrix bank_E(const TrigMatrix& u, const CosetSystem& cs, const RatVec& w) {
    size_t s = u.rows(), r = u.cols();
    TrigMatrix E = tm_zero(s * cs.dm(), r * cs.dm(), cs.dim());
    bool trivial = std::all_of(w.begin(), w.end(), [](const Rational& x) { return sgn(x) == 0; });
    for (long l = 0; l < cs.dm(); ++l)
        for (long k = 0; k < cs.dm(); ++k) {
            TrigMatrix blk = coset_part(u, cs, cs.gamma()[k] - cs.gamma()[l]);
            if (!trivial) blk = tm_scale(blk, root_of_unity(dot(cs.gamma()[k], w)));
            E.set_block(l * s, k * r, blk);
        }
    return E;
}

inline TrigMatrix bank_E0(const TrigMatrix& u, const CosetSystem& cs) {
    return bank_E(u, cs, RatVec(cs.dim(), Rational(0)));
}

inline TrigMatrix bank_E0(const LaurentPoly& u, const CosetSystem& cs) {
    TrigMatrix m = tm_zero(1, 1, cs.dim());
    m(0, 0) = u;
    return bank_E0(m, cs);
}

}  // namespace qtframe
