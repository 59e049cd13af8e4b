#pragma once

#include <array>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "qtframe/matrix.hpp"
#include "qtframe/multiindex.hpp"
#include "qtframe/qscalar.hpp"

namespace qtframe {

class LaurentPoly;
LaurentPoly lp_mul(const LaurentPoly& a, const LaurentPoly& b);

// Sparse d-variate Laurent polynomial sum_k c_k z^k with z_j = e^{-i xi_j}.
class LaurentPoly {
public:
    using Terms = std::map<MultiIndex, QScalar>;

    LaurentPoly() : d_(0) {}
    explicit LaurentPoly(int d) : d_(d) {}
    LaurentPoly(int d, const QScalar& c) : d_(d) {
        if (!c.is_zero()) t_.emplace(MultiIndex(d), c);
    }

    static LaurentPoly monomial(const MultiIndex& k, const QScalar& c = 1) {
        LaurentPoly p(k.dim());
        if (!c.is_zero()) p.t_.emplace(k, c);
        return p;
    }
    static LaurentPoly var(int d, int j) { return monomial(MultiIndex::unit(d, j)); }

    int dim() const { return d_; }
    const Terms& terms() const { return t_; }
    size_t size() const { return t_.size(); }
    bool is_zero() const { return t_.empty(); }
    bool is_monomial() const { return t_.size() == 1; }

    QScalar coeff(const MultiIndex& k) const {
        auto it = t_.find(k);
        return it == t_.end() ? QScalar(0) : it->second;
    }
    QScalar constant_term() const { return d_ ? coeff(MultiIndex(d_)) : QScalar(0); }

    void add_term(const MultiIndex& k, const QScalar& c) {
        if (c.is_zero()) return;
        check_dim(k.dim());
        auto [it, fresh] = t_.try_emplace(k, c);
        if (!fresh) {
            it->second += c;
            if (it->second.is_zero()) t_.erase(it);
        }
    }

    LaurentPoly& operator+=(const LaurentPoly& o) {
        adopt(o);
        for (auto& [k, c] : o.t_) add_term(k, c);
        return *this;
    }
    LaurentPoly& operator-=(const LaurentPoly& o) {
        adopt(o);
        for (auto& [k, c] : o.t_) add_term(k, -c);
        return *this;
    }
    friend LaurentPoly operator+(LaurentPoly a, const LaurentPoly& b) { return a += b; }
    friend LaurentPoly operator-(LaurentPoly a, const LaurentPoly& b) { return a -= b; }
    LaurentPoly operator-() const {
        LaurentPoly r = *this;
        for (auto& [k, c] : r.t_) c = -c;
        return r;
    }

    friend LaurentPoly operator*(const LaurentPoly& a, const LaurentPoly& b) { return lp_mul(a, b); }
    friend LaurentPoly operator*(const LaurentPoly& a, const QScalar& s) {
        LaurentPoly r(a.d_);
        if (s.is_zero()) return r;
        for (auto& [k, c] : a.t_) r.t_.emplace_hint(r.t_.end(), k, c * s);
        return r;
    }
    friend LaurentPoly operator*(const QScalar& s, const LaurentPoly& a) { return a * s; }
    LaurentPoly& operator*=(const LaurentPoly& o) { return *this = *this * o; }

    friend bool operator==(const LaurentPoly& a, const LaurentPoly& b) { return a.t_ == b.t_; }
    friend bool operator!=(const LaurentPoly& a, const LaurentPoly& b) { return !(a == b); }

    // conj(p(xi)) for real xi: k -> -k, coefficients conjugated.
    LaurentPoly star() const {
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) r.t_.emplace(-k, c.conj());
        return r;
    }

    // p(xi) -> p(-xi): k -> -k, coefficients untouched.
    LaurentPoly reflect() const {
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) r.t_.emplace(-k, c);
        return r;
    }

    LaurentPoly conj_coeffs() const {
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) r.t_.emplace(k, c.conj());
        return r;
    }

    // p(M^T xi): exponent k -> M k.
    LaurentPoly upsample(const IntMatrix& M) const {
        if (M.rows() != size_t(d_) || M.cols() != size_t(d_)) throw ShapeMismatch("upsample matrix shape");
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) r.add_term(apply(M, k), c);
        return r;
    }

    LaurentPoly shift(const MultiIndex& s) const {
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) r.t_.emplace(k + s, c);
        return r;
    }

    // Sets z_j = 1.
    LaurentPoly at_one(int j) const {
        LaurentPoly r(d_);
        for (auto& [k, c] : t_) {
            MultiIndex kk = k;
            kk[j] = 0;
            r.add_term(kk, c);
        }
        return r;
    }

    // Sum of coefficients, i.e. the value at xi = 0.
    QScalar value_at_origin() const {
        QScalar s = 0;
        for (auto& [k, c] : t_) s += c;
        return s;
    }

    const MultiIndex& leading() const { return t_.rbegin()->first; }
    const MultiIndex& trailing() const { return t_.begin()->first; }

    // Exact quotient in the Laurent ring; throws NotDivisible otherwise.
    LaurentPoly exact_div(const LaurentPoly& q) const {
        if (q.is_zero()) throw DivisionByZero("Laurent division by zero");
        LaurentPoly quo(d_ ? d_ : q.d_), rem = *this;
        if (rem.is_zero()) return quo;
        const MultiIndex lq = q.leading();
        const QScalar lc_inv = q.t_.rbegin()->second.inv();
        const MultiIndex floor = trailing() - q.trailing();
        while (!rem.is_zero()) {
            MultiIndex e = rem.leading() - lq;
            if (e < floor) throw NotDivisible("Laurent polynomial is not an exact multiple");
            QScalar c = rem.t_.rbegin()->second * lc_inv;
            quo.add_term(e, c);
            for (auto& [k, cq] : q.t_) rem.add_term(k + e, -(cq * c));
        }
        return quo;
    }

    std::string str() const {
        if (t_.empty()) return "0";
        std::ostringstream os;
        bool first = true;
        for (auto& [k, c] : t_) {
            os << (first ? "" : " + ") << "(" << c << ")";
            if (!k.is_zero()) os << "*z^" << k.str();
            first = false;
        }
        return os.str();
    }

    // Terms must arrive in increasing exponent order with nonzero coefficients.
    void append_sorted(const MultiIndex& k, QScalar c) { t_.emplace_hint(t_.end(), k, std::move(c)); }

    static MultiIndex apply(const IntMatrix& M, const MultiIndex& k) {
        MultiIndex r(k.dim());
        for (int i = 0; i < k.dim(); ++i) {
            long s = 0;
            for (int j = 0; j < k.dim(); ++j) s += M(i, j) * k[j];
            r[i] = s;
        }
        return r;
    }

private:
    void check_dim(int d) {
        if (d_ == 0) d_ = d;
        else if (d_ != d) throw DimensionMismatch("Laurent term dimension mismatch");
    }
    void adopt(const LaurentPoly& o) {
        if (d_ == 0) d_ = o.d_;
        else if (o.d_ && o.d_ != d_) throw DimensionMismatch("Laurent sum of different dimensions");
    }

    int d_;
    Terms t_;
};

inline std::ostream& operator<<(std::ostream& os, const LaurentPoly& p) { return os << p.str(); }

namespace detail {

// Coefficients (A + B i + (C + E i) sqrt k) / den with integral A, B, C, E.
struct IntImage {
    std::vector<MultiIndex> keys;
    std::vector<std::array<mpz_class, 4>> c;
    mpz_class den = 1;
    long k = 0;
    bool im = false, rad = false;
    MultiIndex lo, hi;
};

inline IntImage int_image(const LaurentPoly& p) {
    IntImage m;
    if (p.is_zero()) return m;
    int d = p.dim();
    m.lo = m.hi = p.terms().begin()->first;
    for (auto& [e, c] : p.terms()) {
        const GRat &a = c.rational_part(), &b = c.radical_part();
        for (const Rational* q : {&a.x, &a.y, &b.x, &b.y})
            if (sgn(*q) != 0) mpz_lcm(m.den.get_mpz_t(), m.den.get_mpz_t(), q->get_den_mpz_t());
        if (!b.is_zero()) {
            if (m.k && m.k != c.sqrt_base()) throw FieldMismatch("mixed square-root bases in one polynomial");
            m.k = c.sqrt_base();
            m.rad = true;
        }
        if (sgn(a.y) != 0 || sgn(b.y) != 0) m.im = true;
        for (int t = 0; t < d; ++t) {
            m.lo[t] = std::min(m.lo[t], e[t]);
            m.hi[t] = std::max(m.hi[t], e[t]);
        }
    }
    m.keys.reserve(p.size());
    m.c.reserve(p.size());
    for (auto& [e, c] : p.terms()) {
        const GRat &a = c.rational_part(), &b = c.radical_part();
        std::array<mpz_class, 4> v;
        const Rational* qs[4] = {&a.x, &a.y, &b.x, &b.y};
        for (int i = 0; i < 4; ++i) {
            if (sgn(*qs[i]) == 0) continue;
            mpz_divexact(v[i].get_mpz_t(), m.den.get_mpz_t(), qs[i]->get_den_mpz_t());
            v[i] *= qs[i]->get_num();
        }
        m.keys.push_back(e);
        m.c.push_back(std::move(v));
    }
    return m;
}

// Primes just above 2^49: residue products stay below 2^100, so 2^27 of them fit an unsigned 128-bit sum.
inline const std::vector<unsigned long>& rns_primes() {
    static const std::vector<unsigned long> ps = [] {
        std::vector<unsigned long> v;
        mpz_class x = mpz_class(1) << 49;
        for (int i = 0; i < 16; ++i) {
            mpz_nextprime(x.get_mpz_t(), x.get_mpz_t());
            v.push_back(x.get_ui());
        }
        return v;
    }();
    return ps;
}

using ImagePair = std::pair<const IntImage*, const IntImage*>;
using NumAcc = std::array<mpz_class, 6>;  // re, k re, im, k im, rad re, rad im

// Dense or hashed index space covering every product exponent.
struct ProductFrame {
    int d = 0;
    MultiIndex lo;
    std::vector<long> stride;
    long base = 0;
    double cells = 1;
    bool dense = true;

    long raw(const MultiIndex& e) const {
        long s = 0;
        for (int t = 0; t < d; ++t) s += e[t] * stride[t];
        return s;
    }
    MultiIndex key(long pos) const {
        MultiIndex e(d);
        for (int t = 0; t < d; ++t) {
            e[t] = lo[t] + pos / stride[t];
            pos %= stride[t];
        }
        return e;
    }
};

// Component products that can be nonzero for one pair: x_u y_v feeds accumulator t, negated for i * i.
struct Contribution {
    int u, v, t;
    bool neg;
};

inline std::vector<Contribution> contributions(const IntImage& p, const IntImage& q) {
    auto present = [](const IntImage& m) {
        std::array<bool, 4> h{};
        for (auto& v : m.c)
            for (int u = 0; u < 4; ++u) h[u] = h[u] || sgn(v[u]) != 0;
        return h;
    };
    auto hp = present(p), hq = present(q);
    static const int target[3][2] = {{0, 2}, {4, 5}, {1, 3}};  // by number of radical factors, imaginary
    std::vector<Contribution> out;
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v)
            if (hp[u] && hq[v]) {
                int imu = u & 1, imv = v & 1;
                out.push_back({u, v, target[(u >> 1) + (v >> 1)][imu ^ imv], bool(imu & imv)});
            }
    return out;
}

// Exact integer numerators of sum p q over pairs sharing one denominator. sink(pos, acc) is called once per
// touched cell in increasing pos. Word-sized factors accumulate in 128 bits, moderate ones through residues
// modulo 49-bit primes and the CRT, the rest in multiprecision; every route is exact by the bit bounds.
template <class Sink>
void group_numerators(const std::vector<ImagePair>& live, const ProductFrame& fr, Sink&& sink) {
    size_t bits = 0, per_cell = 0;
    bool fits_word = true;
    for (auto& [p, q] : live) {
        size_t bp = 0, bq = 0;
        for (auto& v : p->c)
            for (auto& x : v) bp = std::max(bp, mpz_sizeinbase(x.get_mpz_t(), 2)), fits_word = fits_word && x.fits_slong_p();
        for (auto& v : q->c)
            for (auto& x : v) bq = std::max(bq, mpz_sizeinbase(x.get_mpz_t(), 2)), fits_word = fits_word && x.fits_slong_p();
        bits = std::max(bits, bp + bq);
        // a single output cell receives at most min(|p|, |q|) products from this pair, four terms each
        per_cell += std::min(p->c.size(), q->c.size());
    }
    size_t addend_bits = 3;
    while ((size_t(1) << addend_bits) < 4 * per_cell) ++addend_bits;
    bool narrow = fits_word && bits + addend_bits <= 124;
    size_t nprimes = (bits + addend_bits + 2 + 48) / 49;
    bool rns = !narrow && per_cell < (size_t(1) << 25) && nprimes <= rns_primes().size();

    // slot per touched cell, shared by every pass
    std::unordered_map<long, size_t> slot_of;
    std::vector<long> slot_pos;
    std::vector<std::vector<size_t>> slots(live.size());
    for (size_t t = 0; t < live.size(); ++t) {
        auto& [p, q] = live[t];
        std::vector<long> a(p->keys.size()), b(q->keys.size());
        for (size_t i = 0; i < a.size(); ++i) a[i] = fr.raw(p->keys[i]) - fr.base;
        for (size_t j = 0; j < b.size(); ++j) b[j] = fr.raw(q->keys[j]);
        slots[t].resize(a.size() * b.size());
        for (size_t i = 0; i < a.size(); ++i)
            for (size_t j = 0; j < b.size(); ++j) {
                long pos = a[i] + b[j];
                size_t& sl = slots[t][i * b.size() + j];
                if (fr.dense) {
                    sl = size_t(pos);
                    continue;
                }
                auto [it, fresh] = slot_of.try_emplace(pos, slot_pos.size());
                if (fresh) slot_pos.push_back(pos);
                sl = it->second;
            }
    }
    size_t nslots = fr.dense ? size_t(fr.cells) : slot_pos.size();
    std::vector<size_t> order;
    if (!fr.dense) {
        order.resize(nslots);
        for (size_t i = 0; i < nslots; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return slot_pos[x] < slot_pos[y]; });
    }
    auto each_slot = [&](auto&& f) {
        if (fr.dense)
            for (size_t i = 0; i < nslots; ++i) f(long(i), i);
        else
            for (size_t i : order) f(slot_pos[i], i);
    };
    constexpr int nc = 6;

    if (narrow) {
        using W = __int128;
        std::vector<std::array<W, nc>> acc(nslots, std::array<W, nc>{});
        std::vector<std::array<long, 4>> xp, xq;
        for (size_t t = 0; t < live.size(); ++t) {
            auto& [p, q] = live[t];
            auto cs = contributions(*p, *q);
            xp.resize(p->c.size());
            xq.resize(q->c.size());
            for (size_t i = 0; i < xp.size(); ++i)
                for (int u = 0; u < 4; ++u) xp[i][u] = p->c[i][u].get_si();
            for (size_t j = 0; j < xq.size(); ++j)
                for (int u = 0; u < 4; ++u) xq[j][u] = q->c[j][u].get_si();
            size_t nb = xq.size();
            const size_t* sl = slots[t].data();
            for (size_t i = 0; i < xp.size(); ++i) {
                std::array<long, 4> x = xp[i], nx;
                for (int u = 0; u < 4; ++u) nx[u] = -x[u];
                for (size_t j = 0; j < nb; ++j) {
                    const auto& y = xq[j];
                    W* a = acc[sl[i * nb + j]].data();
                    for (auto& c : cs) a[c.t] += W(c.neg ? nx[c.u] : x[c.u]) * y[c.v];
                }
            }
        }
        auto widen = [](W v) {
            bool neg = v < 0;
            unsigned __int128 u = neg ? -(unsigned __int128)v : (unsigned __int128)v;
            mpz_class r = (unsigned long)(u >> 64);
            r <<= 64;
            r += (unsigned long)(u & ~0UL);
            return neg ? mpz_class(-r) : r;
        };
        each_slot([&](long pos, size_t i) {
            bool nz = false;
            for (W v : acc[i]) nz = nz || v != 0;
            if (!nz) return;
            NumAcc a;
            for (int u = 0; u < nc; ++u)
                if (acc[i][u] != 0) a[u] = widen(acc[i][u]);
            sink(pos, a);
        });
        return;
    }

    if (rns) {
        const std::vector<unsigned long>& ps = rns_primes();
        mpz_class P = 1;
        for (size_t t = 0; t < nprimes; ++t) P *= ps[t];
        using U = unsigned __int128;
        std::vector<unsigned long> res(nslots * nc * nprimes);
        std::vector<U> acc;
        std::vector<std::array<unsigned long, 4>> xp, np, xq;
        for (size_t pi = 0; pi < nprimes; ++pi) {
            unsigned long pr = ps[pi];
            acc.assign(nslots * nc, 0);
            auto red = [pr](const mpz_class& x) { return sgn(x) == 0 ? 0UL : mpz_fdiv_ui(x.get_mpz_t(), pr); };
            for (size_t t = 0; t < live.size(); ++t) {
                auto& [p, q] = live[t];
                auto cs = contributions(*p, *q);
                xp.resize(p->c.size());
                np.resize(p->c.size());
                xq.resize(q->c.size());
                for (size_t i = 0; i < xp.size(); ++i)
                    for (int u = 0; u < 4; ++u) {
                        xp[i][u] = red(p->c[i][u]);
                        np[i][u] = xp[i][u] ? pr - xp[i][u] : 0;  // residue of the negated factor
                    }
                for (size_t j = 0; j < xq.size(); ++j)
                    for (int u = 0; u < 4; ++u) xq[j][u] = red(q->c[j][u]);
                size_t nb = xq.size();
                const size_t* sl = slots[t].data();
                for (size_t i = 0; i < xp.size(); ++i) {
                    const auto &x = xp[i], &nx = np[i];
                    for (size_t j = 0; j < nb; ++j) {
                        const auto& y = xq[j];
                        U* a = &acc[sl[i * nb + j] * nc];
                        for (auto& c : cs) a[c.t] += U(c.neg ? nx[c.u] : x[c.u]) * y[c.v];
                    }
                }
            }
            for (size_t c = 0; c < nslots * nc; ++c) res[c * nprimes + pi] = (unsigned long)(acc[c] % pr);
        }
        // CRT with the symmetric lift: |value| < P / 2 by the bit bound
        std::vector<mpz_class> basis(nprimes);
        for (size_t pi = 0; pi < nprimes; ++pi) {
            mpz_class Pi = P / ps[pi], inv, pm = ps[pi];
            mpz_invert(inv.get_mpz_t(), Pi.get_mpz_t(), pm.get_mpz_t());
            basis[pi] = Pi * inv;
        }
        mpz_class half = P / 2;
        auto lift = [&](const unsigned long* r) {
            mpz_class v = 0;
            bool nz = false;
            for (size_t pi = 0; pi < nprimes; ++pi)
                if (r[pi]) {
                    mpz_addmul_ui(v.get_mpz_t(), basis[pi].get_mpz_t(), r[pi]);
                    nz = true;
                }
            if (!nz) return v;
            v %= P;
            if (v > half) v -= P;
            return v;
        };
        each_slot([&](long pos, size_t i) {
            const unsigned long* r = &res[i * nc * nprimes];
            bool nz = false;
            for (size_t c = 0; c < nc * nprimes; ++c) nz = nz || r[c];
            if (!nz) return;
            NumAcc a;
            for (int c = 0; c < nc; ++c) a[c] = lift(r + c * nprimes);
            sink(pos, a);
        });
        return;
    }

    std::vector<NumAcc> acc(nslots);
    for (size_t t = 0; t < live.size(); ++t) {
        auto& [p, q] = live[t];
        auto cs = contributions(*p, *q);
        size_t nb = q->c.size();
        const size_t* sl = slots[t].data();
        for (size_t i = 0; i < p->c.size(); ++i) {
            const auto& x = p->c[i];
            for (size_t j = 0; j < nb; ++j) {
                const auto& y = q->c[j];
                NumAcc& a = acc[sl[i * nb + j]];
                for (auto& c : cs)
                    (c.neg ? mpz_submul : mpz_addmul)(a[c.t].get_mpz_t(), x[c.u].get_mpz_t(), y[c.v].get_mpz_t());
            }
        }
    }
    each_slot([&](long pos, size_t i) {
        NumAcc& a = acc[i];
        bool nz = false;
        for (auto& x : a) nz = nz || sgn(x) != 0;
        if (nz) sink(pos, a);
    });
}

// Sum of products of integer images. Pairs are grouped by denominator (a common denominator would inflate
// every factor); group numerators are merged as integers and each output term is canonicalized once.
inline LaurentPoly sum_of_products(const std::vector<ImagePair>& pairs, int d) {
    LaurentPoly out(d);
    std::vector<ImagePair> live;
    for (auto& pq : pairs)
        if (!pq.first->c.empty() && !pq.second->c.empty()) live.push_back(pq);
    if (live.empty()) return out;
    long k = 0;
    bool any_rad = false;
    ProductFrame fr;
    fr.d = d;
    fr.lo = live[0].first->lo + live[0].second->lo;
    MultiIndex hi = live[0].first->hi + live[0].second->hi;
    size_t work = 0;
    std::vector<std::pair<mpz_class, std::vector<ImagePair>>> groups;
    for (auto& pq : live) {
        auto& [p, q] = pq;
        for (const IntImage* x : {p, q})
            if (x->rad) {
                if (k && k != x->k) throw FieldMismatch("mixed square-root bases in a product");
                k = x->k;
            }
        any_rad = any_rad || p->rad || q->rad;
        for (int t = 0; t < d; ++t) {
            fr.lo[t] = std::min(fr.lo[t], p->lo[t] + q->lo[t]);
            hi[t] = std::max(hi[t], p->hi[t] + q->hi[t]);
        }
        work += p->c.size() * q->c.size();
        mpz_class dd = p->den * q->den;
        auto it = std::find_if(groups.begin(), groups.end(), [&](auto& g) { return g.first == dd; });
        if (it == groups.end()) groups.push_back({dd, {pq}});
        else it->second.push_back(pq);
    }
    fr.stride.assign(d, 1);
    for (int t = d - 1; t >= 0; --t) {
        if (t < d - 1) fr.stride[t] = fr.stride[t + 1] * (hi[t + 1] - fr.lo[t + 1] + 1);
        fr.cells *= double(hi[t] - fr.lo[t] + 1);
    }
    fr.base = fr.raw(fr.lo);
    fr.dense = fr.cells <= double(std::max<size_t>(1 << 16, 8 * work));

    mpz_class D = 1;
    for (auto& g : groups) mpz_lcm(D.get_mpz_t(), D.get_mpz_t(), g.first.get_mpz_t());
    auto emit = [&](long pos, NumAcc& a) {
        if (k) {
            a[0] += k * a[1];
            a[2] += k * a[3];
        }
        if (sgn(a[0]) == 0 && sgn(a[2]) == 0 && sgn(a[4]) == 0 && sgn(a[5]) == 0) return;
        GRat ra(Rational(a[0], D), Rational(a[2], D)), rb;
        if (any_rad) rb = GRat(Rational(a[4], D), Rational(a[5], D));
        out.append_sorted(fr.key(pos), QScalar(std::move(ra), std::move(rb), rb.is_zero() ? 0 : k));
    };
    if (groups.size() == 1) {
        group_numerators(live, fr, emit);
        return out;
    }
    std::unordered_map<long, NumAcc> total;
    for (auto& [den, g] : groups) {
        mpz_class f = D / den;
        group_numerators(g, fr, [&](long pos, NumAcc& a) {
            NumAcc& t = total[pos];
            for (int u = 0; u < 6; ++u)
                if (sgn(a[u]) != 0) mpz_addmul(t[u].get_mpz_t(), a[u].get_mpz_t(), f.get_mpz_t());
        });
    }
    std::vector<long> order;
    order.reserve(total.size());
    for (auto& [pos, a] : total) order.push_back(pos);
    std::sort(order.begin(), order.end());
    for (long pos : order) emit(pos, total[pos]);
    return out;
}

}  // namespace detail

inline LaurentPoly lp_mul(const LaurentPoly& a, const LaurentPoly& b) {
    if (a.dim() && b.dim() && a.dim() != b.dim()) throw DimensionMismatch("Laurent product of different dimensions");
    int d = a.dim() ? a.dim() : b.dim();
    if (a.is_zero() || b.is_zero()) return LaurentPoly(d);
    if (a.size() * b.size() <= 4) {
        LaurentPoly r(d);
        for (auto& [k1, c1] : a.terms())
            for (auto& [k2, c2] : b.terms()) r.add_term(k1 + k2, c1 * c2);
        return r;
    }
    detail::IntImage x = detail::int_image(a), y = detail::int_image(b);
    return detail::sum_of_products({{&x, &y}}, d);
}

// Matrix product through integer images: every entry converted once, every output entry one fused sum.
inline Grid<LaurentPoly> grid_product(const Grid<LaurentPoly>& A, const Grid<LaurentPoly>& B) {
    if (A.cols() != B.rows()) throw ShapeMismatch("product of " + A.shape() + " and " + B.shape());
    int d = A.zero().dim() ? A.zero().dim() : B.zero().dim();
    std::vector<detail::IntImage> ia(A.rows() * A.cols()), ib(B.rows() * B.cols());
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t k = 0; k < A.cols(); ++k) ia[i * A.cols() + k] = detail::int_image(A(i, k));
    for (size_t k = 0; k < B.rows(); ++k)
        for (size_t j = 0; j < B.cols(); ++j) ib[k * B.cols() + j] = detail::int_image(B(k, j));
    Grid<LaurentPoly> G(A.rows(), B.cols(), LaurentPoly(d));
    std::vector<std::pair<const detail::IntImage*, const detail::IntImage*>> pairs;
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < B.cols(); ++j) {
            pairs.clear();
            for (size_t k = 0; k < A.cols(); ++k)
                pairs.push_back({&ia[i * A.cols() + k], &ib[k * B.cols() + j]});
            G(i, j) = detail::sum_of_products(pairs, d);
        }
    return G;
}


using TrigMatrix = Grid<LaurentPoly>;

inline TrigMatrix tm_zero(size_t r, size_t c, int d) { return TrigMatrix(r, c, LaurentPoly(d)); }
inline TrigMatrix tm_identity(size_t n, int d) {
    return TrigMatrix::identity(n, LaurentPoly(d), LaurentPoly(d, QScalar(1)));
}
inline TrigMatrix tm_constant(const QMatrix& A, int d) {
    return A.map([d](const QScalar& c) { return LaurentPoly(d, c); });
}

inline TrigMatrix tm_star(const TrigMatrix& A) {
    return A.transpose().map([](const LaurentPoly& p) { return p.star(); });
}
inline TrigMatrix tm_upsample(const TrigMatrix& A, const IntMatrix& M) {
    return A.map([&](const LaurentPoly& p) { return p.upsample(M); });
}
inline TrigMatrix tm_scale(const TrigMatrix& A, const QScalar& s) {
    return A.map([&](const LaurentPoly& p) { return p * s; });
}
inline TrigMatrix tm_mul_poly(const TrigMatrix& A, const LaurentPoly& s) {
    return A.map([&](const LaurentPoly& p) { return p * s; });
}
inline QMatrix tm_at_origin(const TrigMatrix& A) {
    return A.map([](const LaurentPoly& p) { return p.value_at_origin(); });
}
inline int tm_dim(const TrigMatrix& A) { return A.zero().dim(); }

// Block Kronecker product A (x) B.
inline TrigMatrix tm_kron(const TrigMatrix& A, const TrigMatrix& B) {
    TrigMatrix K = tm_zero(A.rows() * B.rows(), A.cols() * B.cols(), tm_dim(A));
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j)
            for (size_t k = 0; k < B.rows(); ++k)
                for (size_t l = 0; l < B.cols(); ++l) K(i * B.rows() + k, j * B.cols() + l) = A(i, j) * B(k, l);
    return K;
}

// Fraction-free (Bareiss) determinant; the Laurent ring is an integral domain with
// exact division, so no monomial shift is required.
inline LaurentPoly tm_det(const TrigMatrix& A) {
    if (A.rows() != A.cols()) throw ShapeMismatch("determinant of non-square matrix");
    size_t n = A.rows();
    int d = tm_dim(A);
    if (n == 0) return LaurentPoly(d, QScalar(1));
    if (n == 1) return A(0, 0);
    if (n == 2) return A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    TrigMatrix B = A;
    LaurentPoly prev(d, QScalar(1));
    bool neg = false;
    for (size_t k = 0; k + 1 < n; ++k) {
        if (B(k, k).is_zero()) {
            size_t p = k + 1;
            while (p < n && B(p, k).is_zero()) ++p;
            if (p == n) return LaurentPoly(d);
            for (size_t j = 0; j < n; ++j) std::swap(B(p, j), B(k, j));
            neg = !neg;
        }
        for (size_t i = k + 1; i < n; ++i)
            for (size_t j = k + 1; j < n; ++j)
                B(i, j) = (B(k, k) * B(i, j) - B(i, k) * B(k, j)).exact_div(prev);
        prev = B(k, k);
    }
    return neg ? -B(n - 1, n - 1) : B(n - 1, n - 1);
}

inline TrigMatrix tm_minor(const TrigMatrix& A, size_t ri, size_t ci) {
    TrigMatrix m = tm_zero(A.rows() - 1, A.cols() - 1, tm_dim(A));
    for (size_t i = 0, ii = 0; i < A.rows(); ++i) {
        if (i == ri) continue;
        for (size_t j = 0, jj = 0; j < A.cols(); ++j) {
            if (j == ci) continue;
            m(ii, jj++) = A(i, j);
        }
        ++ii;
    }
    return m;
}

inline TrigMatrix tm_adjugate(const TrigMatrix& A) {
    size_t n = A.rows();
    int d = tm_dim(A);
    TrigMatrix adj = tm_zero(n, n, d);
    if (n == 1) {
        adj(0, 0) = LaurentPoly(d, QScalar(1));
        return adj;
    }
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            LaurentPoly c = tm_det(tm_minor(A, j, i));
            adj(i, j) = ((i + j) % 2) ? -c : c;
        }
    return adj;
}

inline bool tm_is_strongly_invertible(const TrigMatrix& A) {
    return A.rows() == A.cols() && tm_det(A).is_monomial();
}

inline TrigMatrix tm_strong_inverse(const TrigMatrix& A) {
    if (A.rows() != A.cols()) throw ShapeMismatch("inverse of non-square matrix");
    LaurentPoly det = tm_det(A);
    if (!det.is_monomial()) throw DetNotMonomial("determinant " + det.str() + " is not a monomial");
    auto& [k, c] = *det.terms().begin();
    LaurentPoly inv_det = LaurentPoly::monomial(-k, c.inv());
    return tm_mul_poly(tm_adjugate(A), inv_det);
}

inline std::string to_string(const TrigMatrix& A) {
    std::ostringstream os;
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j) os << "[" << i << "," << j << "] " << A(i, j) << "\n";
    return os.str();
}

}  // namespace qtframe
