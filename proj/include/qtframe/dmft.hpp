#pragma once

#include <map>
#include <utility>
#include <vector>

#include "qtframe/qtf.hpp"

namespace qtframe {

// v in (l_0)^{1 x r}, stored through its symbol: sum_k v(k) e^{-i k.xi} as a 1 x r row.
class VectorSeq {
public:
    VectorSeq() = default;
    VectorSeq(int d, size_t r) : sym_(tm_zero(1, r, d)), d_(d) {}
    explicit VectorSeq(TrigMatrix row) : sym_(std::move(row)), d_(tm_dim(sym_)) {
        if (sym_.rows() != 1) throw ShapeMismatch("a vector sequence is a single row");
    }

    static VectorSeq from_samples(int d, size_t r, const std::map<MultiIndex, std::vector<QScalar>>& s) {
        VectorSeq v(d, r);
        for (auto& [k, row] : s) {
            if (row.size() != r) throw ShapeMismatch("sample width differs from r");
            if (k.dim() != d) throw DimensionMismatch("sample index dimension");
            for (size_t j = 0; j < r; ++j)
                if (!row[j].is_zero()) v.sym_(0, j).add_term(k, row[j]);
        }
        return v;
    }

    // Canonical: sorted by k, rows that vanish entirely are absent.
    std::map<MultiIndex, std::vector<QScalar>> samples() const {
        std::map<MultiIndex, std::vector<QScalar>> s;
        for (size_t j = 0; j < width(); ++j)
            for (auto& [k, c] : sym_(0, j).terms()) {
                auto [it, fresh] = s.try_emplace(k, std::vector<QScalar>(width(), QScalar(0)));
                it->second[j] = c;
            }
        return s;
    }

    int dim() const { return d_; }
    size_t width() const { return sym_.cols(); }
    const TrigMatrix& symbol() const { return sym_; }
    bool is_zero() const { return sym_.is_zero(); }
    QScalar at(const MultiIndex& k, size_t j) const { return sym_(0, j).coeff(k); }

    friend bool operator==(const VectorSeq& a, const VectorSeq& b) { return a.sym_ == b.sym_; }
    friend VectorSeq operator+(const VectorSeq& a, const VectorSeq& b) { return VectorSeq(a.sym_ + b.sym_); }

private:
    TrigMatrix sym_;
    int d_ = 0;
};

// ---- sequence operations ----

// [v * u](n) = sum_k v(k) u(n - k), u of shape r x s.
inline VectorSeq convolve(const VectorSeq& v, const TrigMatrix& u) {
    if (u.rows() != v.width()) throw ShapeMismatch("convolution: filter rows must equal the sequence width");
    return VectorSeq(v.symbol() * u);
}

// [v up M](k) = v(M^{-1} k) on M Z^d, zero elsewhere.
inline VectorSeq upsample(const VectorSeq& v, const IntMatrix& M) { return VectorSeq(tm_upsample(v.symbol(), M)); }

// [v down M](k) = v(M k).
inline VectorSeq downsample(const VectorSeq& v, const IntMatrix& M) {
    CosetSystem cs(M);
    return VectorSeq(coset_part(v.symbol(), cs, MultiIndex(v.dim())));
}

// sqrt(d_M) on both operators, or the full d_M on subdivision only: sd o tz carries d_M either way.
struct Normalization {
    bool rescaled = false;
    QScalar sd_scale = 1, tz_scale = 1;
    std::string name() const { return rescaled ? "rescaled" : "sqrt"; }
};

enum class NormMode { Auto, Sqrt, Rescaled };

namespace detail {

inline long squarefree_part(long n) {
    long inner = n;
    for (long p = 2; p * p <= inner; ++p)
        while (inner % (p * p) == 0) inner /= p * p;
    return inner;
}

// Square-root base used by any coefficient of the filters (0 when all are Gaussian rationals).
inline long field_base(const std::vector<const TrigMatrix*>& fs) {
    long k = 0;
    for (const TrigMatrix* f : fs)
        for (size_t i = 0; i < f->rows(); ++i)
            for (size_t j = 0; j < f->cols(); ++j)
                for (auto& [e, c] : (*f)(i, j).terms())
                    if (c.sqrt_base()) {
                        if (k && k != c.sqrt_base()) return -1;
                        k = c.sqrt_base();
                    }
    return k;
}

}  // namespace detail

// sqrt(d_M) is used when it is rational or lies in the filters' own quadratic field.
inline Normalization choose_normalization(const IntMatrix& M, const std::vector<const TrigMatrix*>& filters,
                                          NormMode mode = NormMode::Auto) {
    CosetSystem cs(M);
    long dm = cs.dm(), base = detail::squarefree_part(dm);
    long fk = detail::field_base(filters);
    bool fits = base == 1 || fk == 0 || fk == base;
    Normalization n;
    if (mode == NormMode::Rescaled || (mode == NormMode::Auto && !fits)) {
        n.rescaled = true;
        n.sd_scale = QScalar(dm);
        n.tz_scale = 1;
        return n;
    }
    if (!fits) throw FieldLacksSqrtDM("sqrt(" + std::to_string(dm) + ") is outside the filters' field");
    n.sd_scale = n.tz_scale = QScalar::sqrt_of(dm);
    return n;
}

// sd_{u,M} v = s [v up M] * u
inline VectorSeq subdivision(const VectorSeq& v, const TrigMatrix& u, const IntMatrix& M, const Normalization& n) {
    if (u.rows() != v.width()) throw ShapeMismatch("subdivision: filter rows must equal the sequence width");
    return VectorSeq(tm_scale(tm_upsample(v.symbol(), M) * u, n.sd_scale));
}

// tz_{u,M} v = s [v * u^star](M .), u of shape s x r
inline VectorSeq transition(const VectorSeq& v, const TrigMatrix& u, const IntMatrix& M, const Normalization& n) {
    if (u.cols() != v.width()) throw ShapeMismatch("transition: filter columns must equal the sequence width");
    VectorSeq c(v.symbol() * tm_star(u));
    return VectorSeq(tm_scale(downsample(c, M).symbol(), n.tz_scale));
}

// ---- multi-level transform ----

struct CoeffPyramid {
    long J = 0;
    std::vector<VectorSeq> w;  // w[j - 1] = w_j, width s
    VectorSeq vJ;              // width r
    Normalization norm;
};

// Diagnostic: convolution with Theta is a bijection iff Theta is strongly invertible.
inline bool conv_bijective(const TrigMatrix& Theta) {
    if (Theta.rows() != Theta.cols()) throw ShapeMismatch("Theta must be square");
    return tm_det(Theta).is_monomial();
}

inline CoeffPyramid analyze(const VectorSeq& v0, const Bank& bank, long J, NormMode mode = NormMode::Auto) {
    if (J < 1) throw InputError("levels must be positive");
    if (v0.width() != bank.a_new.rows()) throw ShapeMismatch("signal width differs from the bank's r");
    if (v0.dim() != int(bank.M.rows())) throw DimensionMismatch("signal dimension differs from the dilation");
    CoeffPyramid p;
    p.J = J;
    p.norm = choose_normalization(bank.M, {&bank.a_new, &bank.b_new}, mode);
    VectorSeq v = v0;
    for (long j = 1; j <= J; ++j) {
        p.w.push_back(bank.b_new.rows() ? transition(v, bank.b_new, bank.M, p.norm) : VectorSeq(v0.dim(), 0));
        v = transition(v, bank.a_new, bank.M, p.norm);
    }
    p.vJ = v;
    return p;
}

// Reconstruction before the final deconvolution: tilde v_0 = v_0 * Theta for a dual bank.
inline VectorSeq synthesize_tilde(const CoeffPyramid& p, const Bank& bank) {
    if (long(p.w.size()) != p.J) throw ShapeMismatch("pyramid level count");
    size_t r = bank.a_new.rows(), s = bank.b_new.rows();
    if (p.vJ.width() != r) throw ShapeMismatch("coarse coefficients width differs from r");
    TrigMatrix eb = bank.b_new;
    for (size_t i = 0; i < s; ++i)
        if (bank.signs.at(i) < 0)
            for (size_t j = 0; j < r; ++j) eb(i, j) = -eb(i, j);
    VectorSeq v = convolve(p.vJ, bank.Theta);
    for (long j = p.J; j >= 1; --j) {
        const VectorSeq& w = p.w[size_t(j - 1)];
        VectorSeq next = subdivision(v, bank.a_new, bank.M, p.norm);
        if (s) {
            if (w.width() != s) throw ShapeMismatch("framelet coefficients width differs from s");
            next = next + subdivision(w, eb, bank.M, p.norm);
        }
        v = next;
    }
    return v;
}

// Exact inverse through Theta^{-1}; throws DetNotMonomial when the deconvolution is not compact.
inline VectorSeq synthesize(const CoeffPyramid& p, const Bank& bank) {
    VectorSeq t = synthesize_tilde(p, bank);
    if (bank.Theta == tm_identity(bank.Theta.rows(), tm_dim(bank.Theta))) return t;
    return convolve(t, tm_strong_inverse(bank.Theta));
}

// ---- vector conversion ----

// [E_N v](k) = (v(N k + kappa_1), ..., v(N k + kappa_r)), kappa the colex transversal with kappa_1 = 0.
inline VectorSeq vectorize(const LaurentPoly& v, const IntMatrix& N) {
    CosetSystem cn(N);
    TrigMatrix row = tm_zero(1, size_t(cn.dm()), cn.dim());
    for (size_t j = 0; j < size_t(cn.dm()); ++j) row(0, j) = coset_part(v, cn, cn.gamma()[j]);
    return VectorSeq(row);
}

inline LaurentPoly devectorize(const VectorSeq& v, const IntMatrix& N) {
    CosetSystem cn(N);
    if (v.width() != size_t(cn.dm())) throw ShapeMismatch("width must equal |det N|");
    std::vector<LaurentPoly> parts;
    for (size_t j = 0; j < v.width(); ++j) parts.push_back(v.symbol()(0, j));
    return coset_merge(parts, cn);
}

// ---- polynomial sequences ----

// k -> (p_1(k), ..., p_r(k)); each p_j is a polynomial in k stored with nonnegative exponents.
struct PolySeq {
    int d = 0;
    std::vector<LaurentPoly> p;

    size_t width() const { return p.size(); }
    long degree() const {
        long g = -1;
        for (auto& q : p)
            for (auto& [e, c] : q.terms()) g = std::max(g, e.total());
        return g;
    }
    bool is_zero() const {
        for (auto& q : p)
            if (!q.is_zero()) return false;
        return true;
    }
    friend bool operator==(const PolySeq& a, const PolySeq& b) { return a.d == b.d && a.p == b.p; }
};

inline LaurentPoly monomial_poly(const MultiIndex& mu) { return LaurentPoly::monomial(mu, QScalar(1)); }

// q(x) = p(A x + b) for a rational matrix A and offset b.
inline LaurentPoly poly_affine(const LaurentPoly& p, const QMatrix& A, const std::vector<QScalar>& b) {
    int d = p.dim();
    if (A.rows() != size_t(d) || b.size() != size_t(d)) throw ShapeMismatch("affine substitution shape");
    std::vector<LaurentPoly> lin;
    for (int t = 0; t < d; ++t) {
        LaurentPoly l(A.cols() ? int(A.cols()) : d, b[t]);
        for (size_t s = 0; s < A.cols(); ++s)
            if (!A(t, s).is_zero()) l += LaurentPoly::var(int(A.cols()), int(s)) * A(t, s);
        lin.push_back(l);
    }
    std::vector<std::vector<LaurentPoly>> pw(d);
    LaurentPoly q(int(A.cols()));
    for (auto& [mu, c] : p.terms()) {
        for (int t = 0; t < d; ++t)
            if (mu[t] < 0) throw InputError("polynomial sequences carry nonnegative exponents");
        LaurentPoly term(int(A.cols()), c);
        for (int t = 0; t < d; ++t) {
            auto& v = pw[t];
            if (v.empty()) v.push_back(LaurentPoly(int(A.cols()), QScalar(1)));
            while (long(v.size()) <= mu[t]) v.push_back(v.back() * lin[t]);
            term = term * v[size_t(mu[t])];
        }
        q += term;
    }
    return q;
}

inline LaurentPoly poly_affine(const LaurentPoly& p, const IntMatrix& A, const MultiIndex& b) {
    std::vector<QScalar> off;
    for (int t = 0; t < b.dim(); ++t) off.push_back(QScalar(b[t]));
    return poly_affine(p, to_qmatrix(A), off);
}

// E_N applied to a polynomial sequence: component j is k -> p(N k + kappa_j).
inline PolySeq vectorize_poly(const LaurentPoly& p, const IntMatrix& N) {
    CosetSystem cn(N);
    PolySeq s;
    s.d = cn.dim();
    for (const MultiIndex& kap : cn.gamma()) s.p.push_back(poly_affine(p, N, kap));
    return s;
}

// The polynomial q with E_N q = s, when one exists: q(x) = s_1(N^{-1} x), checked on every component.
inline std::optional<LaurentPoly> devectorize_poly(const PolySeq& s, const IntMatrix& N) {
    CosetSystem cn(N);
    if (s.width() != size_t(cn.dm())) throw ShapeMismatch("width must equal |det N|");
    int d = cn.dim();
    LaurentPoly q = poly_affine(s.p[0], cn.Minv(), std::vector<QScalar>(size_t(d), QScalar(0)));
    if (!(vectorize_poly(q, N) == s)) return std::nullopt;
    return q;
}

// tz_{u,M} on a polynomial sequence: w_i(n) = s sum_j sum_l conj(u_il(j)) p_l(M n + j).
inline PolySeq poly_transition(const PolySeq& P, const TrigMatrix& u, const IntMatrix& M, const Normalization& n) {
    if (u.cols() != P.width()) throw ShapeMismatch("transition: filter columns must equal the sequence width");
    int d = P.d;
    PolySeq out;
    out.d = d;
    out.p.assign(u.rows(), LaurentPoly(d));
    std::map<MultiIndex, std::vector<LaurentPoly>> shifted;  // j -> p_l(M n + j)
    auto at = [&](const MultiIndex& j) -> const std::vector<LaurentPoly>& {
        auto it = shifted.find(j);
        if (it != shifted.end()) return it->second;
        std::vector<LaurentPoly> v;
        for (auto& q : P.p) v.push_back(poly_affine(q, M, j));
        return shifted.emplace(j, std::move(v)).first->second;
    };
    for (size_t i = 0; i < u.rows(); ++i)
        for (size_t l = 0; l < u.cols(); ++l)
            for (auto& [j, c] : u(i, l).terms()) {
                const LaurentPoly& q = at(j)[l];
                if (!q.is_zero()) out.p[i] += q * c.conj();
            }
    for (auto& q : out.p) q = q * n.tz_scale;
    return out;
}

// ---- balancing ----

struct BalancingOrders {
    long bvmo = 0, bpo = 0;
};

// bvmo from the Vgu_N jet condition on b; bpo the largest order <= bvmo at which the lowpass condition holds.
inline BalancingOrders balancing_order(const Bank& bank, const IntMatrix& N, long max) {
    CosetSystem cs(bank.M);
    BalancingOrders o;
    o.bvmo = bank.b_new.rows() ? balanced_vm_order(bank.b_new, N, max) : max;
    o.bpo = std::min(o.bvmo, balanced_refinement_order(bank.a_new, cs, N, max));
    return o;
}

// Symbolic counterpart: tz(b) E_N annihilates every monomial of degree < m and tz(a) E_N stays in E_N(Pi_{m-1}).
struct SymbolicBalancing {
    bool highpass_annihilates = true, lowpass_invariant = true;
    std::string detail;
    bool ok() const { return highpass_annihilates && lowpass_invariant; }
};

inline SymbolicBalancing symbolic_balancing(const Bank& bank, const IntMatrix& N, long m,
                                            NormMode mode = NormMode::Auto) {
    SymbolicBalancing res;
    int d = int(bank.M.rows());
    Normalization nz = choose_normalization(bank.M, {&bank.a_new, &bank.b_new}, mode);
    for (long k = 0; k < m; ++k)
        for (const MultiIndex& mu : indices_of_degree(d, k)) {
            PolySeq e = vectorize_poly(monomial_poly(mu), N);
            if (bank.b_new.rows() && !poly_transition(e, bank.b_new, bank.M, nz).is_zero()) {
                res.highpass_annihilates = false;
                if (res.detail.empty()) res.detail = "highpass output nonzero for monomial " + mu.str();
            }
            PolySeq low = poly_transition(e, bank.a_new, bank.M, nz);
            auto q = devectorize_poly(low, N);
            if (!q || PolySeq{d, {*q}}.degree() >= m) {
                res.lowpass_invariant = false;
                if (res.detail.empty()) res.detail = "lowpass output leaves E_N(Pi) for monomial " + mu.str();
            }
        }
    return res;
}

}  // namespace qtframe
