#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "qtframe/errors.hpp"

namespace qtframe {

constexpr int kMaxDim = 4;

// Exponent k in Z^d (Laurent) or derivative index mu in N0^d (jets); lexicographic order.
class MultiIndex {
public:
    MultiIndex() : d_(0) { e_.fill(0); }
    explicit MultiIndex(int d) : d_(check(d)) { e_.fill(0); }
    MultiIndex(std::initializer_list<long> v) : d_(check(int(v.size()))) {
        e_.fill(0);
        std::copy(v.begin(), v.end(), e_.begin());
    }
    explicit MultiIndex(const std::vector<long>& v) : d_(check(int(v.size()))) {
        e_.fill(0);
        for (int i = 0; i < d_; ++i) e_[i] = v[i];
    }

    static MultiIndex unit(int d, int j) {
        MultiIndex m(d);
        m.e_[j] = 1;
        return m;
    }

    int dim() const { return d_; }
    long operator[](int i) const { return e_[i]; }
    long& operator[](int i) { return e_[i]; }

    long total() const { return std::accumulate(e_.begin(), e_.begin() + d_, 0L); }
    bool is_zero() const {
        return std::all_of(e_.begin(), e_.begin() + d_, [](long x) { return x == 0; });
    }
    bool nonneg() const {
        return std::all_of(e_.begin(), e_.begin() + d_, [](long x) { return x >= 0; });
    }
    bool dominated_by(const MultiIndex& o) const {
        for (int i = 0; i < d_; ++i)
            if (e_[i] > o.e_[i]) return false;
        return true;
    }

    std::vector<long> to_vector() const { return std::vector<long>(e_.begin(), e_.begin() + d_); }

    friend MultiIndex operator+(MultiIndex a, const MultiIndex& b) {
        for (int i = 0; i < a.d_; ++i) a.e_[i] += b.e_[i];
        return a;
    }
    friend MultiIndex operator-(MultiIndex a, const MultiIndex& b) {
        for (int i = 0; i < a.d_; ++i) a.e_[i] -= b.e_[i];
        return a;
    }
    MultiIndex operator-() const {
        MultiIndex r = *this;
        for (int i = 0; i < d_; ++i) r.e_[i] = -r.e_[i];
        return r;
    }
    friend bool operator==(const MultiIndex& a, const MultiIndex& b) {
        return a.d_ == b.d_ && std::equal(a.e_.begin(), a.e_.begin() + a.d_, b.e_.begin());
    }
    friend bool operator<(const MultiIndex& a, const MultiIndex& b) {
        if (a.d_ != b.d_) return a.d_ < b.d_;
        return std::lexicographical_compare(a.e_.begin(), a.e_.begin() + a.d_, b.e_.begin(), b.e_.begin() + b.d_);
    }
    friend bool operator!=(const MultiIndex& a, const MultiIndex& b) { return !(a == b); }
    friend bool operator>(const MultiIndex& a, const MultiIndex& b) { return b < a; }

    std::string str() const {
        std::string s = "(";
        for (int i = 0; i < d_; ++i) s += (i ? "," : "") + std::to_string(e_[i]);
        return s + ")";
    }

private:
    static int check(int d) {
        if (d < 1 || d > kMaxDim) throw DimensionMismatch("dimension must lie in 1.." + std::to_string(kMaxDim));
        return d;
    }
    std::array<long, kMaxDim> e_;
    int d_;
};

// All mu in N0^d with |mu| == deg, lexicographically descending (x1^deg first).
inline std::vector<MultiIndex> indices_of_degree(int d, long deg) {
    std::vector<MultiIndex> out;
    MultiIndex cur(d);
    auto rec = [&](auto&& self, int pos, long left) -> void {
        if (pos == d - 1) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (long v = left; v >= 0; --v) {
            cur[pos] = v;
            self(self, pos + 1, left - v);
        }
    };
    rec(rec, 0, deg);
    return out;
}

// All mu with |mu| < n, grouped by degree.
inline std::vector<MultiIndex> indices_below(int d, long n) {
    std::vector<MultiIndex> out;
    for (long k = 0; k < n; ++k) {
        auto v = indices_of_degree(d, k);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

}  // namespace qtframe
