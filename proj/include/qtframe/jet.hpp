#pragma once

#include <map>
#include <sstream>

#include "qtframe/laurent.hpp"

namespace qtframe {

// Truncated Taylor expansion at xi = 0: sum_{|mu| < order} c_mu xi^mu + O(|xi|^order).
class Jet {
public:
    using Terms = std::map<MultiIndex, QScalar>;

    Jet() : d_(0), n_(0) {}
    Jet(int d, long order) : d_(d), n_(order) {}
    Jet(int d, long order, const QScalar& c) : d_(d), n_(order) {
        if (order > 0 && !c.is_zero()) t_.emplace(MultiIndex(d), c);
    }

    int dim() const { return d_; }
    long order() const { return n_; }
    const Terms& terms() const { return t_; }
    bool is_zero() const { return t_.empty(); }

    QScalar coeff(const MultiIndex& mu) const {
        auto it = t_.find(mu);
        return it == t_.end() ? QScalar(0) : it->second;
    }
    QScalar constant_term() const { return coeff(MultiIndex(d_)); }

    void add_term(const MultiIndex& mu, const QScalar& c) {
        if (c.is_zero() || mu.total() >= n_) return;
        auto [it, fresh] = t_.try_emplace(mu, c);
        if (!fresh) {
            it->second += c;
            if (it->second.is_zero()) t_.erase(it);
        }
    }

    Jet truncate(long n) const {
        Jet r(d_, std::min(n, n_));
        for (auto& [mu, c] : t_)
            if (mu.total() < r.n_) r.t_.emplace(mu, c);
        return r;
    }

    // Same expansion viewed at a larger order; only sound when the caller knows
    // the omitted terms vanish (e.g. a jet of a polynomial of low degree).
    Jet with_order(long n) const {
        Jet r = truncate(n);
        r.n_ = n;
        return r;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        Jet r = a.truncate(std::min(a.n_, b.n_));
        for (auto& [mu, c] : b.t_) r.add_term(mu, c);
        return r;
    }
    friend Jet operator-(const Jet& a, const Jet& b) { return a + (-b); }
    Jet operator-() const {
        Jet r = *this;
        for (auto& [mu, c] : r.t_) c = -c;
        return r;
    }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r(a.d_ ? a.d_ : b.d_, std::min(a.n_, b.n_));
        for (auto& [m1, c1] : a.t_) {
            long s1 = m1.total();
            for (auto& [m2, c2] : b.t_)
                if (s1 + m2.total() < r.n_) r.add_term(m1 + m2, c1 * c2);
        }
        return r;
    }
    friend Jet operator*(const Jet& a, const QScalar& s) {
        Jet r(a.d_, a.n_);
        if (s.is_zero()) return r;
        for (auto& [mu, c] : a.t_) r.t_.emplace(mu, c * s);
        return r;
    }
    friend Jet operator*(const QScalar& s, const Jet& a) { return a * s; }

    // Equality of expansions up to the smaller order.
    friend bool operator==(const Jet& a, const Jet& b) {
        long n = std::min(a.n_, b.n_);
        return (a - b).truncate(n).is_zero();
    }

    Jet reciprocal() const {
        QScalar c0 = constant_term();
        if (c0.is_zero()) throw ZeroAtOrigin("jet reciprocal with zero constant term");
        QScalar inv0 = c0.inv();
        // r = inv0 * sum_j (1 - a/c0)^j, nilpotent to depth order
        Jet e = Jet(d_, n_, QScalar(1)) - (*this) * inv0;
        Jet r(d_, n_, QScalar(1)), pw(d_, n_, QScalar(1));
        for (long j = 1; j < n_; ++j) {
            pw = pw * e;
            if (pw.is_zero()) break;
            r = r + pw;
        }
        return r * inv0;
    }

    // Pointwise complex conjugate for real xi.
    Jet conj() const {
        Jet r(d_, n_);
        for (auto& [mu, c] : t_) r.t_.emplace(mu, c.conj());
        return r;
    }

    // xi -> -xi.
    Jet reflect() const {
        Jet r(d_, n_);
        for (auto& [mu, c] : t_) r.t_.emplace(mu, mu.total() % 2 ? -c : c);
        return r;
    }

    // f(L xi) for a rational d x d matrix L.
    Jet compose_linear(const QMatrix& L) const {
        if (L.rows() != size_t(d_) || L.cols() != size_t(d_)) throw ShapeMismatch("compose_linear matrix shape");
        std::vector<Jet> lin;
        for (int j = 0; j < d_; ++j) {
            Jet l(d_, n_);
            for (int k = 0; k < d_; ++k) l.add_term(MultiIndex::unit(d_, k), L(j, k));
            lin.push_back(l);
        }
        std::map<std::pair<int, long>, Jet> powcache;
        auto power = [&](int j, long e) -> const Jet& {
            auto key = std::make_pair(j, e);
            auto it = powcache.find(key);
            if (it != powcache.end()) return it->second;
            Jet p = e == 0 ? Jet(d_, n_, QScalar(1)) : lin[j] * powcache.at({j, e - 1});
            return powcache.emplace(key, p).first->second;
        };
        for (int j = 0; j < d_; ++j)
            for (long e = 0; e < n_; ++e) power(j, e);
        Jet r(d_, n_);
        for (auto& [mu, c] : t_) {
            Jet term(d_, n_, c);
            for (int j = 0; j < d_; ++j)
                if (mu[j]) term = term * power(j, mu[j]);
            r = r + term;
        }
        return r;
    }

    // Smallest |mu| carrying a nonzero coefficient; order() if none below it.
    long vanishing_order() const {
        long v = n_;
        for (auto& [mu, c] : t_) v = std::min(v, mu.total());
        return v;
    }

    std::string str() const {
        std::ostringstream os;
        os << "{";
        bool first = true;
        for (auto& [mu, c] : t_) {
            os << (first ? "" : ", ") << mu.str() << ":" << c;
            first = false;
        }
        os << "}+O(" << n_ << ")";
        return os.str();
    }

private:
    int d_;
    long n_;
    Terms t_;
};

inline std::ostream& operator<<(std::ostream& os, const Jet& j) { return os << j.str(); }

inline Rational factorial(long n) {
    mpz_class f;
    mpz_fac_ui(f.get_mpz_t(), static_cast<unsigned long>(n));
    return Rational(f);
}

inline QScalar minus_i_power(long n) {
    switch (((n % 4) + 4) % 4) {
        case 0: return QScalar(1);
        case 1: return QScalar::gaussian(0, -1);
        case 2: return QScalar(-1);
        default: return QScalar::gaussian(0, 1);
    }
}

// Jet of e^{-i k.xi} expansion: coeff[mu] = sum_k p_k (-i)^{|mu|} k^mu / mu!.
inline Jet lp_jet(const LaurentPoly& p, long n) {
    int d = p.dim();
    Jet j(d, n);
    if (p.is_zero()) return j;
    for (const MultiIndex& mu : indices_below(d, n)) {
        QScalar s = 0;
        for (auto& [k, c] : p.terms()) {
            Rational km = 1;
            for (int t = 0; t < d; ++t) {
                mpz_class pw;
                mpz_pow_ui(pw.get_mpz_t(), mpz_class(k[t]).get_mpz_t(), static_cast<unsigned long>(mu[t]));
                km *= pw;
            }
            if (sgn(km) != 0) s += c * QScalar(km);
        }
        if (s.is_zero()) continue;
        Rational den = 1;
        for (int t = 0; t < d; ++t) den *= factorial(mu[t]);
        j.add_term(mu, s * minus_i_power(mu.total()) * QScalar(Rational(1) / den));
    }
    return j;
}

using JetMatrix = Grid<Jet>;

inline JetMatrix jm_zero(size_t r, size_t c, int d, long n) { return JetMatrix(r, c, Jet(d, n)); }
inline JetMatrix jm_identity(size_t k, int d, long n) {
    return JetMatrix::identity(k, Jet(d, n), Jet(d, n, QScalar(1)));
}
inline JetMatrix tm_jet(const TrigMatrix& A, long n) {
    int d = tm_dim(A);
    JetMatrix J(A.rows(), A.cols(), Jet(d, n));
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j) J(i, j) = lp_jet(A(i, j), n);
    return J;
}
inline JetMatrix jm_truncate(const JetMatrix& A, long n) {
    return A.map([n](const Jet& j) { return j.truncate(n); });
}
inline JetMatrix jm_conj_transpose(const JetMatrix& A) {
    return A.transpose().map([](const Jet& j) { return j.conj(); });
}
inline JetMatrix jm_compose_linear(const JetMatrix& A, const QMatrix& L) {
    return A.map([&](const Jet& j) { return j.compose_linear(L); });
}
inline QMatrix jm_at_origin(const JetMatrix& A) {
    return A.map([](const Jet& j) { return j.constant_term(); });
}
inline bool jm_equal_mod(const JetMatrix& A, const JetMatrix& B, long n) {
    if (A.rows() != B.rows() || A.cols() != B.cols()) return false;
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j)
            if (!(A(i, j) - B(i, j)).truncate(n).is_zero()) return false;
    return true;
}
inline long jm_vanishing_order(const JetMatrix& A) {
    long v = A.zero().order();
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j) v = std::min(v, A(i, j).vanishing_order());
    return v;
}

// Inverse of a square jet matrix with invertible value at the origin (Neumann series).
inline JetMatrix jm_inverse(const JetMatrix& A) {
    size_t r = A.rows();
    int d = A.zero().dim();
    long n = A.zero().order();
    QMatrix A0 = jm_at_origin(A);
    QMatrix A0i = inverse(A0);
    JetMatrix B = A0i.map([&](const QScalar& c) { return Jet(d, n, c); });
    JetMatrix E = jm_identity(r, d, n) - B * A;
    JetMatrix S = jm_identity(r, d, n), P = jm_identity(r, d, n);
    for (long k = 1; k < n; ++k) {
        P = P * E;
        if (P.is_zero()) break;
        S = S + P;
    }
    return S * B;
}

inline std::string to_string(const JetMatrix& A) {
    std::ostringstream os;
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j) os << "[" << i << "," << j << "] " << A(i, j) << "\n";
    return os.str();
}

}  // namespace qtframe
