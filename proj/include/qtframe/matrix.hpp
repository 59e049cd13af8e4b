#pragma once

#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "qtframe/errors.hpp"
#include "qtframe/qscalar.hpp"

namespace qtframe {

// Dense row-major grid; `zero` is the additive identity used for fresh cells,
// which lets the same container hold scalars, Laurent polynomials and jets.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(size_t r, size_t c, T zero = T()) : r_(r), c_(c), zero_(zero), v_(r * c, zero) {}

    size_t rows() const { return r_; }
    size_t cols() const { return c_; }
    const T& zero() const { return zero_; }

    T& operator()(size_t i, size_t j) { return v_[i * c_ + j]; }
    const T& operator()(size_t i, size_t j) const { return v_[i * c_ + j]; }

    Grid block(size_t i0, size_t j0, size_t nr, size_t nc) const {
        Grid g(nr, nc, zero_);
        for (size_t i = 0; i < nr; ++i)
            for (size_t j = 0; j < nc; ++j) g(i, j) = (*this)(i0 + i, j0 + j);
        return g;
    }
    void set_block(size_t i0, size_t j0, const Grid& b) {
        for (size_t i = 0; i < b.rows(); ++i)
            for (size_t j = 0; j < b.cols(); ++j) (*this)(i0 + i, j0 + j) = b(i, j);
    }
    Grid row(size_t i) const { return block(i, 0, 1, c_); }
    Grid col(size_t j) const { return block(0, j, r_, 1); }

    Grid transpose() const {
        Grid g(c_, r_, zero_);
        for (size_t i = 0; i < r_; ++i)
            for (size_t j = 0; j < c_; ++j) g(j, i) = (*this)(i, j);
        return g;
    }

    template <class F>
    auto map(F f) const {
        using U = decltype(f(zero_));
        Grid<U> g(r_, c_, f(zero_));
        for (size_t i = 0; i < r_; ++i)
            for (size_t j = 0; j < c_; ++j) g(i, j) = f((*this)(i, j));
        return g;
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        if (a.r_ != b.r_ || a.c_ != b.c_) return false;
        for (size_t i = 0; i < a.v_.size(); ++i)
            if (!(a.v_[i] == b.v_[i])) return false;
        return true;
    }

    friend Grid operator+(const Grid& a, const Grid& b) {
        same_shape(a, b);
        Grid g = a;
        for (size_t i = 0; i < g.v_.size(); ++i) g.v_[i] = a.v_[i] + b.v_[i];
        return g;
    }
    friend Grid operator-(const Grid& a, const Grid& b) {
        same_shape(a, b);
        Grid g = a;
        for (size_t i = 0; i < g.v_.size(); ++i) g.v_[i] = a.v_[i] - b.v_[i];
        return g;
    }
    Grid operator-() const {
        Grid g = *this;
        for (auto& x : g.v_) x = -x;
        return g;
    }
    friend Grid operator*(const Grid& a, const Grid& b) {
        if constexpr (requires { grid_product(a, b); }) return grid_product(a, b);
        if (a.c_ != b.r_)
            throw ShapeMismatch("product of " + a.shape() + " and " + b.shape());
        Grid g(a.r_, b.c_, a.zero_);
        for (size_t i = 0; i < a.r_; ++i)
            for (size_t k = 0; k < a.c_; ++k) {
                const T& x = a(i, k);
                if (is_zero_value(x)) continue;
                for (size_t j = 0; j < b.c_; ++j) {
                    const T& y = b(k, j);
                    if (is_zero_value(y)) continue;
                    g(i, j) = g(i, j) + x * y;
                }
            }
        return g;
    }
    template <class S>
    Grid scaled(const S& s) const {
        Grid g = *this;
        for (auto& x : g.v_) x = x * s;
        return g;
    }

    bool is_zero() const {
        for (auto& x : v_)
            if (!is_zero_value(x)) return false;
        return true;
    }

    std::string shape() const { return std::to_string(r_) + "x" + std::to_string(c_); }

    static Grid identity(size_t n, T zero, T one) {
        Grid g(n, n, zero);
        for (size_t i = 0; i < n; ++i) g(i, i) = one;
        return g;
    }

private:
    static void same_shape(const Grid& a, const Grid& b) {
        if (a.r_ != b.r_ || a.c_ != b.c_) throw ShapeMismatch(a.shape() + " vs " + b.shape());
    }
    template <class U>
    static bool is_zero_value(const U& x) {
        if constexpr (requires { x.is_zero(); }) return x.is_zero();
        else return x == U(0);
    }

    size_t r_ = 0, c_ = 0;
    T zero_{};
    std::vector<T> v_;
};

using IntMatrix = Grid<long>;
using QMatrix = Grid<QScalar>;

inline IntMatrix int_matrix(std::initializer_list<std::initializer_list<long>> rows) {
    IntMatrix m(rows.size(), rows.begin()->size(), 0L);
    size_t i = 0;
    for (auto& r : rows) {
        if (r.size() != m.cols()) throw ShapeMismatch("ragged integer matrix");
        size_t j = 0;
        for (long x : r) m(i, j++) = x;
        ++i;
    }
    return m;
}

inline QMatrix to_qmatrix(const IntMatrix& m) {
    return m.map([](long x) { return QScalar(x); });
}

inline QMatrix q_identity(size_t n) { return QMatrix::identity(n, QScalar(0), QScalar(1)); }

// Reduced row echelon form over the field; returns pivot columns.
inline std::vector<size_t> rref(QMatrix& A) {
    std::vector<size_t> piv;
    size_t row = 0;
    for (size_t c = 0; c < A.cols() && row < A.rows(); ++c) {
        size_t p = row;
        while (p < A.rows() && A(p, c).is_zero()) ++p;
        if (p == A.rows()) continue;
        if (p != row)
            for (size_t j = 0; j < A.cols(); ++j) std::swap(A(p, j), A(row, j));
        QScalar inv = A(row, c).inv();
        for (size_t j = c; j < A.cols(); ++j) A(row, j) = A(row, j) * inv;
        for (size_t i = 0; i < A.rows(); ++i) {
            if (i == row || A(i, c).is_zero()) continue;
            QScalar f = A(i, c);
            for (size_t j = c; j < A.cols(); ++j)
                if (!A(row, j).is_zero()) A(i, j) = A(i, j) - f * A(row, j);
        }
        piv.push_back(c);
        ++row;
    }
    return piv;
}

inline size_t rank(QMatrix A) { return rref(A).size(); }

// Solves A x = b (b may have several columns). Free variables are set to zero,
// which yields a sparse particular solution. nullopt when inconsistent.
inline std::optional<QMatrix> solve_linear(const QMatrix& A, const QMatrix& b) {
    if (A.rows() != b.rows()) throw ShapeMismatch("solve_linear: row counts differ");
    QMatrix aug(A.rows(), A.cols() + b.cols(), QScalar(0));
    aug.set_block(0, 0, A);
    aug.set_block(0, A.cols(), b);
    auto piv = rref(aug);
    for (size_t p : piv)
        if (p >= A.cols()) return std::nullopt;
    QMatrix x(A.cols(), b.cols(), QScalar(0));
    for (size_t i = 0; i < piv.size(); ++i)
        for (size_t j = 0; j < b.cols(); ++j) x(piv[i], j) = aug(i, A.cols() + j);
    return x;
}

inline QScalar det(QMatrix A) {
    if (A.rows() != A.cols()) throw ShapeMismatch("det of non-square matrix");
    QScalar d = 1;
    size_t n = A.rows();
    for (size_t c = 0; c < n; ++c) {
        size_t p = c;
        while (p < n && A(p, c).is_zero()) ++p;
        if (p == n) return QScalar(0);
        if (p != c) {
            for (size_t j = 0; j < n; ++j) std::swap(A(p, j), A(c, j));
            d = -d;
        }
        d = d * A(c, c);
        QScalar inv = A(c, c).inv();
        for (size_t i = c + 1; i < n; ++i) {
            if (A(i, c).is_zero()) continue;
            QScalar f = A(i, c) * inv;
            for (size_t j = c; j < n; ++j) A(i, j) = A(i, j) - f * A(c, j);
        }
    }
    return d;
}

inline QMatrix inverse(const QMatrix& A) {
    if (A.rows() != A.cols()) throw ShapeMismatch("inverse of non-square matrix");
    auto x = solve_linear(A, q_identity(A.rows()));
    if (!x || rank(A) != A.rows()) throw Singular("matrix is singular");
    return *x;
}

// Characteristic polynomial coefficients c[0..n] of det(tI - A), via Faddeev-LeVerrier.
inline std::vector<QScalar> charpoly(const QMatrix& A) {
    size_t n = A.rows();
    std::vector<QScalar> c(n + 1, QScalar(0));
    c[n] = 1;
    QMatrix Mk(n, n, QScalar(0));
    for (size_t k = 1; k <= n; ++k) {
        QMatrix T = A * Mk;
        for (size_t i = 0; i < n; ++i) T(i, i) = T(i, i) + c[n - k + 1];
        Mk = T;
        QMatrix AM = A * Mk;
        QScalar tr = 0;
        for (size_t i = 0; i < n; ++i) tr += AM(i, i);
        c[n - k] = -tr / QScalar(long(k));
    }
    return c;
}

inline std::string to_string(const QMatrix& A) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < A.rows(); ++i) {
        os << (i ? "; " : "");
        for (size_t j = 0; j < A.cols(); ++j) os << (j ? ", " : "") << A(i, j);
    }
    return os.str() + "]";
}

}  // namespace qtframe
