#pragma once

#include <gmpxx.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include "qtframe/errors.hpp"

namespace qtframe {

using Rational = mpq_class;

inline Rational parse_rational(const std::string& s) {
    Rational q;
    if (q.set_str(s, 10) != 0) throw InputError("bad rational literal '" + s + "'");
    if (q.get_den() == 0) throw InputError("zero denominator in '" + s + "'");
    q.canonicalize();
    return q;
}

inline bool is_square_free(long k) {
    if (k < 2) return false;
    for (long p = 2; p * p <= k; ++p)
        if (k % (p * p) == 0) return false;
    return true;
}

// Gaussian rational x + y i.
struct GRat {
    Rational x, y;

    GRat() = default;
    GRat(Rational a, Rational b = 0) : x(std::move(a)), y(std::move(b)) {
        x.canonicalize();
        y.canonicalize();
    }

    bool is_zero() const { return sgn(x) == 0 && sgn(y) == 0; }
    GRat conj() const { return {x, -y}; }
    Rational norm() const { return x * x + y * y; }

    friend GRat operator+(const GRat& a, const GRat& b) { return {a.x + b.x, a.y + b.y}; }
    friend GRat operator-(const GRat& a, const GRat& b) { return {a.x - b.x, a.y - b.y}; }
    friend GRat operator*(const GRat& a, const GRat& b) {
        if (a.y == 0 && b.y == 0) return {a.x * b.x, Rational(0)};
        return {a.x * b.x - a.y * b.y, a.x * b.y + a.y * b.x};
    }
    GRat operator-() const { return {-x, -y}; }
    GRat inv() const {
        Rational n = norm();
        if (sgn(n) == 0) throw DivisionByZero("Gaussian rational inverse of zero");
        return {x / n, -y / n};
    }
    friend bool operator==(const GRat& a, const GRat& b) { return a.x == b.x && a.y == b.y; }
};

// (ra + ia i) + (rb + ib i) sqrt(k).  k is 0 whenever the radical part vanishes,
// so values built over different extensions only clash when both carry sqrt terms.
class QScalar {
public:
    QScalar() : k_(0) {}
    QScalar(long v) : a_(Rational(v)), k_(0) {}
    QScalar(int v) : a_(Rational(v)), k_(0) {}
    QScalar(const Rational& v) : a_(v), k_(0) {}  // GRat canonicalizes
    QScalar(GRat a, GRat b, long k) : a_(std::move(a)), b_(std::move(b)), k_(k) { normalize(); }

    static QScalar gaussian(const Rational& re, const Rational& im) { return QScalar(GRat(re, im), GRat(), 0); }
    static QScalar i() { return gaussian(0, 1); }

    // sqrt(n) for n >= 0, square factors pulled out.
    static QScalar sqrt_of(long n) {
        if (n < 0) throw InputError("sqrt_of: negative argument");
        long outer = 1, inner = n;
        for (long p = 2; p * p <= inner; ++p)
            while (inner % (p * p) == 0) { inner /= p * p; outer *= p; }
        if (inner <= 1) return QScalar(Rational(inner == 0 ? 0 : outer));
        return QScalar(GRat(), GRat(Rational(outer)), inner);
    }

    const GRat& rational_part() const { return a_; }
    const GRat& radical_part() const { return b_; }
    long sqrt_base() const { return k_; }

    bool is_zero() const { return a_.is_zero() && b_.is_zero(); }
    bool is_one() const { return b_.is_zero() && a_.y == 0 && a_.x == 1; }
    bool is_real() const { return a_.y == 0 && b_.y == 0; }
    bool is_rational() const { return a_.y == 0 && b_.is_zero(); }

    QScalar conj() const { return QScalar(a_.conj(), b_.conj(), k_); }

    QScalar operator-() const { return QScalar(-a_, -b_, k_); }

    QScalar& operator+=(const QScalar& o) {
        long k = merge_base(k_, o.k_);
        a_ = a_ + o.a_;
        b_ = b_ + o.b_;
        k_ = k;
        normalize();
        return *this;
    }
    QScalar& operator-=(const QScalar& o) { return *this += -o; }
    QScalar& operator*=(const QScalar& o) { *this = *this * o; return *this; }
    QScalar& operator/=(const QScalar& o) { *this = *this * o.inv(); return *this; }

    friend QScalar operator+(QScalar a, const QScalar& b) { return a += b; }
    friend QScalar operator-(QScalar a, const QScalar& b) { return a -= b; }
    friend QScalar operator*(const QScalar& p, const QScalar& q) {
        if (p.k_ == 0 && q.k_ == 0) return QScalar(p.a_ * q.a_, GRat(), 0);
        long k = merge_base(p.k_, q.k_);
        GRat bd = p.b_ * q.b_;
        GRat re = p.a_ * q.a_ + GRat(bd.x * k, bd.y * k);
        GRat rad = p.a_ * q.b_ + p.b_ * q.a_;
        return QScalar(std::move(re), std::move(rad), k);
    }
    friend QScalar operator/(const QScalar& p, const QScalar& q) { return p * q.inv(); }

    QScalar inv() const {
        if (is_zero()) throw DivisionByZero("inverse of zero scalar");
        if (k_ == 0) return QScalar(a_.inv(), GRat(), 0);
        // 1/(A + B s) = (A - B s)/(A^2 - k B^2); the denominator is nonzero as sqrt(k) is not in Q(i)
        GRat bb = b_ * b_;
        GRat den = a_ * a_ - GRat(bb.x * k_, bb.y * k_);
        GRat di = den.inv();
        return QScalar(a_ * di, -(b_ * di), k_);
    }

    friend bool operator==(const QScalar& p, const QScalar& q) {
        if (!(p.a_ == q.a_)) return false;
        if (p.b_.is_zero() && q.b_.is_zero()) return true;
        return p.k_ == q.k_ && p.b_ == q.b_;
    }
    friend bool operator!=(const QScalar& p, const QScalar& q) { return !(p == q); }

    std::complex<double> to_complex() const {
        double s = k_ > 0 ? std::sqrt(double(k_)) : 0.0;
        return {a_.x.get_d() + s * b_.x.get_d(), a_.y.get_d() + s * b_.y.get_d()};
    }

    std::string str() const {
        std::ostringstream os;
        auto part = [](const GRat& g) {
            std::ostringstream s;
            if (g.y == 0) s << g.x.get_str();
            else if (g.x == 0) s << g.y.get_str() << "i";
            else s << "(" << g.x.get_str() << (sgn(g.y) > 0 ? "+" : "") << g.y.get_str() << "i)";
            return s.str();
        };
        if (b_.is_zero()) return part(a_);
        if (!a_.is_zero()) os << part(a_) << "+";
        os << part(b_) << "*sqrt(" << k_ << ")";
        return os.str();
    }

private:
    static long merge_base(long k1, long k2) {
        if (k1 == 0) return k2;
        if (k2 == 0 || k1 == k2) return k1;
        throw FieldMismatch("scalars from Q(i,sqrt(" + std::to_string(k1) + ")) and Q(i,sqrt(" +
                            std::to_string(k2) + ")) mixed");
    }
    void normalize() {
        if (b_.is_zero()) k_ = 0;
        else if (k_ == 1) { a_ = a_ + b_; b_ = GRat(); k_ = 0; }
        else if (k_ == 0) throw std::logic_error("radical part without a base");
    }

    GRat a_, b_;
    long k_;
};

inline std::ostream& operator<<(std::ostream& os, const QScalar& q) { return os << q.str(); }

}  // namespace qtframe
