#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtframe/dmft.hpp"

namespace qtframe::io {

using nlohmann::json;

// ---- scalars ----

// Lowest terms with a positive denominator; "0" for zero.
inline std::string rat_str(Rational q) {
    q.canonicalize();
    return q.get_str();
}

inline Rational parse_rat(const json& j) {
    if (j.is_string()) return parse_rational(j.get<std::string>());
    if (j.is_number_integer()) return Rational(j.get<long>());
    throw InputError("rational must be a \"p/q\" string or an integer, got " + j.dump());
}

// [re_a, im_a, re_b, im_b]: (re_a + im_a i) + (re_b + im_b i) sqrt(k)
inline json coeff_json(const QScalar& c) {
    const GRat &a = c.rational_part(), &b = c.radical_part();
    return json::array({rat_str(a.x), rat_str(a.y), rat_str(b.x), rat_str(b.y)});
}

inline QScalar parse_coeff(const json& j, long k) {
    if (!j.is_array() || j.size() != 4) throw InputError("coefficient must be a 4-array, got " + j.dump());
    GRat a(parse_rat(j[0]), parse_rat(j[1])), b(parse_rat(j[2]), parse_rat(j[3]));
    if (!b.is_zero() && k == 0) throw InputError("radical coefficient in a file with sqrt_base 0");
    return QScalar(std::move(a), std::move(b), b.is_zero() ? 0 : k);
}

// Sample values: a plain rational string when rational, the 4-array otherwise.
inline json value_json(const QScalar& c) { return c.is_rational() ? json(rat_str(c.rational_part().x)) : coeff_json(c); }

inline QScalar parse_value(const json& j, long k) {
    if (j.is_array()) return parse_coeff(j, k);
    return QScalar(parse_rat(j));
}

inline long parse_sqrt_base(const json& j) {
    long k = j.value("sqrt_base", 0L);
    if (k < 0 || (k > 1 && !is_square_free(k)) || k == 1) throw InputError("sqrt_base must be 0 or square-free > 1");
    return k;
}

// Square-root base shared by a set of scalars; FieldMismatch when two differ.
inline long common_base(long k, const QScalar& c) {
    if (!c.sqrt_base()) return k;
    if (k && k != c.sqrt_base()) throw FieldMismatch("values over different quadratic fields");
    return c.sqrt_base();
}

inline long parse_long(const json& j, const char* what) {
    if (!j.is_number_integer()) throw InputError(std::string(what) + " must be an integer");
    return j.get<long>();
}

inline MultiIndex parse_index(const json& j, int d) {
    if (!j.is_array() || int(j.size()) != d) throw InputError("index must be an integer array of length " + std::to_string(d));
    std::vector<long> v;
    for (auto& x : j) v.push_back(parse_long(x, "index entry"));
    return MultiIndex(v);
}

inline json index_json(const MultiIndex& k) { return json(k.to_vector()); }

// ---- integer matrices ----

inline json int_matrix_json(const IntMatrix& M) {
    json a = json::array();
    for (size_t i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (size_t j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        a.push_back(row);
    }
    return a;
}

inline IntMatrix parse_int_matrix(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw InputError("matrix must be a nonempty array of rows");
    IntMatrix M(j.size(), j[0].size(), 0);
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != M.cols()) throw InputError("ragged matrix");
        for (size_t c = 0; c < M.cols(); ++c) M(i, c) = parse_long(j[i][c], "matrix entry");
    }
    return M;
}

// "a,b;c,d"
inline IntMatrix parse_matrix_arg(const std::string& s) {
    std::vector<std::vector<long>> rows;
    std::stringstream rs(s);
    std::string row;
    while (std::getline(rs, row, ';')) {
        std::vector<long> r;
        std::stringstream cs(row);
        std::string cell;
        while (std::getline(cs, cell, ',')) {
            size_t pos = 0;
            long v;
            try {
                v = std::stol(cell, &pos);
            } catch (const std::exception&) {
                throw InputError("bad matrix entry '" + cell + "' in '" + s + "'");
            }
            if (cell.find_first_not_of(" \t", pos) != std::string::npos)
                throw InputError("bad matrix entry '" + cell + "' in '" + s + "'");
            r.push_back(v);
        }
        rows.push_back(r);
    }
    if (rows.empty() || rows[0].empty()) throw InputError("empty matrix '" + s + "'");
    IntMatrix M(rows.size(), rows[0].size(), 0);
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != M.cols()) throw InputError("ragged matrix '" + s + "'");
        for (size_t j = 0; j < M.cols(); ++j) M(i, j) = rows[i][j];
    }
    return M;
}

// ---- filters ----

inline json filter_json(const TrigMatrix& A) {
    long k = 0;
    json terms = json::array();
    for (size_t i = 0; i < A.rows(); ++i)
        for (size_t j = 0; j < A.cols(); ++j)
            for (auto& [e, c] : A(i, j).terms()) {
                k = common_base(k, c);
                terms.push_back({{"k_exp", index_json(e)}, {"entry", {i, j}}, {"coeff", coeff_json(c)}});
            }
    return {{"dim", tm_dim(A)}, {"rows", A.rows()}, {"cols", A.cols()}, {"sqrt_base", k}, {"terms", terms}};
}

inline TrigMatrix parse_filter(const json& j) {
    if (!j.is_object()) throw InputError("filter must be an object");
    int d = int(parse_long(j.at("dim"), "dim"));
    long r = parse_long(j.at("rows"), "rows"), c = parse_long(j.at("cols"), "cols");
    if (d < 1 || r < 0 || c < 0) throw InputError("bad filter shape");
    long k = parse_sqrt_base(j);
    TrigMatrix A = tm_zero(size_t(r), size_t(c), d);
    std::set<std::pair<std::pair<long, long>, MultiIndex>> seen;
    for (auto& t : j.at("terms")) {
        auto& en = t.at("entry");
        if (!en.is_array() || en.size() != 2) throw InputError("entry must be [row, col]");
        long i = parse_long(en[0], "row"), jj = parse_long(en[1], "col");
        if (i < 0 || i >= r || jj < 0 || jj >= c) throw InputError("entry outside the filter shape");
        MultiIndex e = parse_index(t.at("k_exp"), d);
        if (!seen.insert({{i, jj}, e}).second) throw InputError("duplicate term " + e.str());
        A(size_t(i), size_t(jj)).add_term(e, parse_coeff(t.at("coeff"), k));
    }
    return A;
}

// ---- signals ----

inline json signal_json(const VectorSeq& v) {
    long k = 0;
    json samples = json::array();
    for (auto& [idx, row] : v.samples()) {
        json vals = json::array();
        for (auto& c : row) {
            k = common_base(k, c);
            vals.push_back(value_json(c));
        }
        samples.push_back({{"k", index_json(idx)}, {"v", vals}});
    }
    return {{"dim", v.dim()}, {"width", v.width()}, {"sqrt_base", k}, {"samples", samples}};
}

inline VectorSeq parse_signal(const json& j) {
    if (!j.is_object()) throw InputError("signal must be an object");
    int d = int(parse_long(j.at("dim"), "dim"));
    long r = parse_long(j.at("width"), "width");
    if (d < 1 || r < 0) throw InputError("bad signal shape");
    long k = parse_sqrt_base(j);
    std::map<MultiIndex, std::vector<QScalar>> s;
    for (auto& t : j.at("samples")) {
        MultiIndex idx = parse_index(t.at("k"), d);
        auto& vals = t.at("v");
        if (!vals.is_array() || long(vals.size()) != r) throw ShapeMismatch("sample width differs from the signal width");
        std::vector<QScalar> row;
        for (auto& x : vals) row.push_back(parse_value(x, k));
        if (!s.emplace(idx, std::move(row)).second) throw InputError("duplicate sample " + idx.str());
    }
    return VectorSeq::from_samples(d, size_t(r), s);
}

// ---- coefficient pyramids ----

inline json pyramid_json(const CoeffPyramid& p) {
    json w = json::array();
    for (auto& x : p.w) w.push_back(signal_json(x));
    return {{"levels", p.J}, {"normalization", p.norm.name()}, {"coarse", signal_json(p.vJ)}, {"details", w}};
}

inline CoeffPyramid parse_pyramid(const json& j, const IntMatrix& M) {
    CoeffPyramid p;
    p.J = parse_long(j.at("levels"), "levels");
    std::string mode = j.at("normalization").get<std::string>();
    if (mode != "sqrt" && mode != "rescaled") throw InputError("normalization must be sqrt or rescaled");
    p.vJ = parse_signal(j.at("coarse"));
    for (auto& w : j.at("details")) p.w.push_back(parse_signal(w));
    if (long(p.w.size()) != p.J) throw ShapeMismatch("pyramid level count differs from the details");
    // the sqrt convention needs sqrt(d_M); the stored coefficients already live in its field
    std::vector<const TrigMatrix*> none;
    p.norm = choose_normalization(M, none, mode == "sqrt" ? NormMode::Sqrt : NormMode::Rescaled);
    return p;
}

// ---- banks ----

inline json bank_report_json(const BankReport& r) {
    return {{"sum_rule_order", r.m},
            {"vanishing_moments", r.vanishing},
            {"balanced_vanishing_moments", r.balanced_vm},
            {"balancing_order", r.balancing},
            {"generators", r.s},
            {"generators_unpruned", r.s_unpruned},
            {"negative_signs", r.negatives},
            {"theta_strongly_invertible", r.theta_strongly_invertible}};
}

inline BankReport parse_bank_report(const json& j) {
    BankReport r;
    r.m = j.value("sum_rule_order", 0L);
    r.vanishing = j.value("vanishing_moments", 0L);
    r.balanced_vm = j.value("balanced_vanishing_moments", 0L);
    r.balancing = j.value("balancing_order", 0L);
    r.s = j.value("generators", size_t(0));
    r.s_unpruned = j.value("generators_unpruned", size_t(0));
    r.negatives = j.value("negative_signs", size_t(0));
    r.theta_strongly_invertible = j.value("theta_strongly_invertible", false);
    return r;
}

// mask: the original refinement mask; weight: the OEP weight Theta of (lowpass, highpass).
inline json bank_json(const Bank& b) {
    return {{"scalar", b.scalar},
            {"dilation", int_matrix_json(b.M)},
            {"vectorizer", int_matrix_json(b.N)},
            {"mask", filter_json(b.a)},
            {"theta", b.scalar ? json(nullptr) : filter_json(b.theta)},
            {"weight", filter_json(b.Theta)},
            {"lowpass", filter_json(b.a_new)},
            {"highpass", filter_json(b.b_new)},
            {"signs", b.signs},
            {"report", bank_report_json(b.report)}};
}

inline Bank parse_bank(const json& j) {
    if (!j.is_object()) throw InputError("bank must be an object");
    Bank b;
    b.scalar = j.value("scalar", false);
    b.M = parse_int_matrix(j.at("dilation"));
    b.N = parse_int_matrix(j.at("vectorizer"));
    b.a = parse_filter(j.at("mask"));
    if (!b.scalar) b.theta = parse_filter(j.at("theta"));
    b.Theta = parse_filter(j.at("weight"));
    b.a_new = parse_filter(j.at("lowpass"));
    b.b_new = parse_filter(j.at("highpass"));
    for (auto& s : j.at("signs")) {
        long v = parse_long(s, "sign");
        if (v != 1 && v != -1) throw InputError("signs must be +1 or -1");
        b.signs.push_back(int(v));
    }
    if (j.contains("report")) b.report = parse_bank_report(j.at("report"));
    size_t r = b.a.rows();
    int d = int(b.M.rows());
    if (b.M.cols() != b.M.rows() || b.N.rows() != b.M.rows() || b.N.cols() != b.M.rows())
        throw ShapeMismatch("dilation and vectorizer must be d x d");
    for (const TrigMatrix* f : {&b.a, &b.Theta, &b.a_new})
        if (f->rows() != r || f->cols() != r || tm_dim(*f) != d) throw ShapeMismatch("square filters must be r x r");
    if (!b.scalar && (b.theta.rows() != r || b.theta.cols() != r)) throw ShapeMismatch("theta must be r x r");
    if (b.b_new.cols() != r || b.b_new.rows() != b.signs.size())
        throw ShapeMismatch("highpass must be s x r with one sign per row");
    return b;
}

// ---- jets (reports) ----

inline json jet_matrix_json(const JetMatrix& J) {
    long k = 0;
    json rows = json::array();
    for (size_t i = 0; i < J.rows(); ++i) {
        json row = json::array();
        for (size_t c = 0; c < J.cols(); ++c) {
            json terms = json::array();
            for (auto& [mu, v] : J(i, c).terms()) {
                k = common_base(k, v);
                terms.push_back({{"mu", index_json(mu)}, {"coeff", value_json(v)}});
            }
            row.push_back(terms);
        }
        rows.push_back(row);
    }
    return {{"order", J.zero().order()}, {"sqrt_base", k}, {"entries", rows}};
}

// ---- files ----

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("'" + path + "': " + e.what());
    }
}

// Canonical layout: a node that fits in 100 columns stays on one line, larger ones open one child per line.
inline void dump_node(const json& j, int indent, std::string& out) {
    std::string flat = j.dump();
    if (flat.size() <= 100 || !j.is_structured() || j.empty()) {
        out += flat;
        return;
    }
    std::string pad(size_t(indent + 1), ' ');
    bool obj = j.is_object();
    out += obj ? "{\n" : "[\n";
    size_t i = 0;
    for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out += pad;
        if (obj) out += json(it.key()).dump() + ": ";
        dump_node(*it, indent + 1, out);
        out += i + 1 < j.size() ? ",\n" : "\n";
    }
    out += std::string(size_t(indent), ' ') + (obj ? "}" : "]");
}

inline std::string dump(const json& j) {
    std::string out;
    dump_node(j, 0, out);
    return out + "\n";
}

// Written next to the target and renamed over it, so readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path), tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp.string() + "'");
        out << content;
        out.close();
        if (!out) throw InputError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw InputError("cannot replace '" + path + "'");
    }
}

// Wraps structural JSON errors (missing keys, wrong types) as input errors.
template <class F>
auto guarded(const std::string& what, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw InputError(what + ": " + e.what());
    }
}

}  // namespace qtframe::io
