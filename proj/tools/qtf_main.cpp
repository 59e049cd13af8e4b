// qtf: exact analysis, construction, verification and transforms for quasi-tight multiframelets.
// stdout carries one JSON report; exit 0 = verified success, 1 = mathematical failure, 2 = input error.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "qtframe/io.hpp"

using namespace qtframe;
using io::json;

namespace {

constexpr int kOk = 0, kFail = 1, kInput = 2;

struct Outcome {
    int code = kOk;
    json report;
};

json error_json(const Error& e) {
    json j = {{"kind", e.kind()}, {"message", e.what()}};
    if (auto* s = dynamic_cast<const StageError*>(&e)) j["stage"] = s->stage();
    return j;
}

int run(const std::string& command, const std::function<Outcome()>& f) {
    Outcome o;
    try {
        o = f();
    } catch (const Error& e) {
        o.code = e.is_input_error() ? kInput : kFail;
        o.report = {{"error", error_json(e)}};
        std::cerr << "qtf " << command << ": " << e.what() << "\n";
    } catch (const json::exception& e) {
        o.code = kInput;
        o.report = {{"error", {{"kind", "InputError"}, {"message", e.what()}}}};
        std::cerr << "qtf " << command << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
        o.code = kFail;
        o.report = {{"error", {{"kind", "InternalError"}, {"message", e.what()}}}};
        std::cerr << "qtf " << command << ": " << e.what() << "\n";
    }
    json out = {{"command", command}, {"ok", o.code == kOk}};
    for (auto& [k, v] : o.report.items()) out[k] = v;
    std::cout << io::dump(out);
    return o.code;
}

TrigMatrix load_filter(const std::string& path) {
    return io::guarded(path, [&] { return io::parse_filter(io::read_json(path)); });
}

// N defaults to M when |det M| = r.
IntMatrix vectorizer_or_default(const std::string& arg, const IntMatrix& M, size_t r) {
    if (!arg.empty()) return io::parse_matrix_arg(arg);
    if (CosetSystem(M).dm() != long(r))
        throw InputError("--vectorize is required when |det M| differs from r = " + std::to_string(r));
    return M;
}

std::pair<Rational, Rational> parse_pq(const std::string& s) {
    auto comma = s.find(',');
    if (comma == std::string::npos) throw InputError("--pq expects 'p,q'");
    return {parse_rational(s.substr(0, comma)), parse_rational(s.substr(comma + 1))};
}

json orders_json(const VerifyReport& v) {
    return {{"sum_rule_order", v.m},
            {"vanishing_moments", v.vanishing},
            {"balanced_vanishing_moments", v.balanced_vm},
            {"balancing_order", v.balancing}};
}

struct VerifiedBank {
    Bank bank;
    VerifyReport rep;
    SymbolicBalancing sym;
    bool ok() const { return rep.ok() && sym.ok(); }
};

VerifiedBank verify_loaded(Bank b) {
    VerifiedBank v{std::move(b), {}, {}};
    v.rep = verify_bank(v.bank);
    if (!v.bank.scalar && v.bank.a_new.rows() > 1 && v.rep.m > 0)
        v.sym = symbolic_balancing(v.bank, v.bank.N, v.rep.m);
    return v;
}

json verify_json(const VerifiedBank& v) {
    json j = {{"identity", {{"ok", v.rep.identity.ok}}},
              {"theta_strongly_invertible", v.rep.theta_strongly_invertible},
              {"oep_normalization", v.rep.oep_normalization},
              {"orders", orders_json(v.rep)},
              {"symbolic_balancing",
               {{"highpass_annihilates", v.sym.highpass_annihilates}, {"lowpass_invariant", v.sym.lowpass_invariant}}}};
    if (!v.rep.identity.ok) j["identity"]["locus"] = "identity: " + v.rep.identity.detail;
    if (!v.sym.detail.empty()) j["symbolic_balancing"]["locus"] = v.sym.detail;
    return j;
}

Bank load_bank(const std::string& path, bool trust) {
    Bank b = io::guarded(path, [&] { return io::parse_bank(io::read_json(path)); });
    if (!trust) {
        VerifiedBank v = verify_loaded(b);
        if (!v.ok()) throw IdentityCheckFailed("bank '" + path + "' fails verification; rerun verify for the locus");
    }
    return b;
}

size_t sample_count(const VectorSeq& v) { return v.samples().size(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qtf: quasi-tight multiframelet filter banks in exact arithmetic"};
    app.require_subcommand(1);
    int code = kOk;

    // ---- analyze ----
    auto* an = app.add_subcommand("analyze", "sum rules, matching filter and phi jets of a mask");
    std::string an_mask, an_M, an_N;
    long an_max = 20;
    an->add_option("mask", an_mask, "mask filter JSON")->required();
    an->add_option("--dilation", an_M, "dilation matrix 'a,b;c,d'")->required();
    an->add_option("--balancing", an_N, "vectorizer N for the balanced matching comparison");
    an->add_option("--max-order", an_max, "largest sum-rule order tried");
    an->callback([&] {
        code = run("analyze", [&] {
            TrigMatrix a = load_filter(an_mask);
            IntMatrix M = io::parse_matrix_arg(an_M);
            CosetSystem cs = validate_dilation(M);
            if (a.rows() != a.cols()) throw ShapeMismatch("mask must be square");
            if (tm_dim(a) != cs.dim()) throw DimensionMismatch("mask dimension differs from the dilation");
            auto [m, v] = sum_rules(a, cs, an_max);
            long n = std::max(2 * m, 1L);
            EigenReport eig = eigen_condition(a, cs, m);
            Outcome o;
            o.report = {{"dilation", io::int_matrix_json(M)},
                        {"r", a.rows()},
                        {"sr_order", m},
                        {"matching_jet", io::jet_matrix_json(v)},
                        {"eigen_condition", {{"ok", eig.ok()}, {"detail", eig.str()}}}};
            // phi is only determined under the eigenvalue condition; its absence is a finding, not an error
            std::optional<JetMatrix> phi;
            try {
                phi = phi_jets(a, cs, n, m > 0 ? std::optional<QMatrix>(jm_at_origin(v)) : std::nullopt);
                o.report["phi_jet"] = io::jet_matrix_json(*phi);
            } catch (const Error& e) {
                if (e.is_input_error()) throw;
                o.report["phi_jet"] = nullptr;
                o.report["phi_jet_error"] = error_json(e);
            }
            if (!an_N.empty() && phi) {
                IntMatrix N = io::parse_matrix_arg(an_N);
                MomentCorrectionReport mc =
                    check_moment_correction(tm_identity(a.rows(), cs.dim()), cs, N, v, *phi, m);
                o.report["balancing"] = {{"vectorizer", io::int_matrix_json(N)},
                                         {"vgu_jet", io::jet_matrix_json(make_vgu(N, std::max(m, 1L)).jet)},
                                         {"balanced_matching", mc.balanced_matching},
                                         {"unit_norm", mc.unit_norm}};
            }
            return o;
        });
    });

    // ---- construct ----
    auto* co = app.add_subcommand("construct", "build and verify a quasi-tight framelet filter bank");
    std::string co_mask, co_M, co_N, co_pq, co_out = "bank.json";
    bool co_scalar = false;
    long co_max = 6;
    co->add_option("mask", co_mask, "mask filter JSON")->required();
    co->add_option("--dilation", co_M, "dilation matrix 'a,b;c,d'")->required();
    co->add_option("--vectorize", co_N, "vectorizer N with |det N| = r (default: the dilation)");
    co->add_option("--pq", co_pq, "weights 'p,q' of the generator pairs (default 1/2,1/2)");
    co->add_flag("--scalar", co_scalar, "scalar (r = 1) construction");
    co->add_option("--max-order", co_max, "largest sum-rule order tried");
    co->add_option("-o,--output", co_out, "bank file to write");
    co->callback([&] {
        code = run("construct", [&] {
            TrigMatrix a = load_filter(co_mask);
            IntMatrix M = io::parse_matrix_arg(co_M);
            QtfOptions opt;
            opt.max_order = co_max;
            if (!co_pq.empty()) std::tie(opt.p, opt.q) = parse_pq(co_pq);
            json pq = {io::rat_str(opt.p), io::rat_str(opt.q)};
            Bank b;
            try {
                b = co_scalar ? construct_quasi_tight_scalar(a, M, opt)
                              : construct_quasi_tight(a, M, vectorizer_or_default(co_N, M, a.rows()), opt);
            } catch (const Error& e) {
                if (e.is_input_error()) throw;
                Outcome o{kFail, {{"pq", pq}, {"error", error_json(e)}}};
                if (e.kind() == "IdentityCheckFailed" && 4 * opt.p * opt.q != 1)
                    o.report["discrepancy"] = "4pq = " + io::rat_str(4 * opt.p * opt.q) +
                                              " differs from 1; the generator pairs cannot reproduce the deficiency";
                std::cerr << "qtf construct: " << e.what() << "\n";
                return o;
            }
            VerifiedBank v = verify_loaded(b);
            Outcome o{v.ok() ? kOk : kFail,
                      {{"pq", pq}, {"bank_report", io::bank_report_json(b.report)}, {"verify", verify_json(v)}}};
            if (v.ok()) {
                io::write_atomic(co_out, io::dump(io::bank_json(b)));
                o.report["bank"] = co_out;
            }
            return o;
        });
    });

    // ---- verify ----
    auto* ve = app.add_subcommand("verify", "re-derive every bank property from its file");
    std::string ve_bank;
    ve->add_option("bank", ve_bank, "bank JSON")->required();
    ve->callback([&] {
        code = run("verify", [&] {
            VerifiedBank v = verify_loaded(io::guarded(ve_bank, [&] { return io::parse_bank(io::read_json(ve_bank)); }));
            return Outcome{v.ok() ? kOk : kFail, verify_json(v)};
        });
    });

    // ---- transform ----
    auto* tr = app.add_subcommand("transform", "multi-level discrete framelet transform");
    std::string tr_dir, tr_bank, tr_in, tr_out, tr_norm = "auto";
    long tr_levels = 1;
    bool tr_trust = false;
    tr->add_option("direction", tr_dir, "analyze | synthesize")
        ->required()
        ->check(CLI::IsMember({"analyze", "synthesize"}));
    tr->add_option("bank", tr_bank, "bank JSON")->required();
    tr->add_option("input", tr_in, "signal JSON (analyze) or pyramid JSON (synthesize)")->required();
    tr->add_option("--levels", tr_levels, "decomposition levels J");
    tr->add_option("--normalization", tr_norm, "auto | sqrt | rescaled")
        ->check(CLI::IsMember({"auto", "sqrt", "rescaled"}));
    tr->add_option("-o,--output", tr_out, "file to write")->required();
    tr->add_flag("--trust", tr_trust, "skip bank verification on load");
    tr->callback([&] {
        code = run("transform", [&] {
            Bank b = load_bank(tr_bank, tr_trust);
            Outcome o;
            if (tr_dir == "analyze") {
                VectorSeq v = io::guarded(tr_in, [&] { return io::parse_signal(io::read_json(tr_in)); });
                NormMode mode = tr_norm == "sqrt" ? NormMode::Sqrt
                                : tr_norm == "rescaled" ? NormMode::Rescaled : NormMode::Auto;
                CoeffPyramid p = analyze(v, b, tr_levels, mode);
                io::write_atomic(tr_out, io::dump(io::pyramid_json(p)));
                json details = json::array();
                bool all_zero = true;
                for (auto& w : p.w) {
                    details.push_back(sample_count(w));
                    all_zero = all_zero && w.is_zero();
                }
                o.report = {{"levels", p.J},
                            {"normalization", p.norm.name()},
                            {"coarse_samples", sample_count(p.vJ)},
                            {"detail_samples", details},
                            {"details_all_zero", all_zero},
                            {"output", tr_out}};
            } else {
                CoeffPyramid p = io::guarded(tr_in, [&] { return io::parse_pyramid(io::read_json(tr_in), b.M); });
                VectorSeq v = synthesize(p, b);
                io::write_atomic(tr_out, io::dump(io::signal_json(v)));
                o.report = {{"levels", p.J}, {"normalization", p.norm.name()}, {"samples", sample_count(v)},
                            {"output", tr_out}};
            }
            return o;
        });
    });

    // ---- normal-form ----
    auto* nf = app.add_subcommand("normal-form", "standard (m,n)-normal form of a mask");
    std::string nf_mask, nf_M, nf_N, nf_dir = ".";
    long nf_m = 0, nf_n = 0, nf_max = 20;
    bool nf_orth = false;
    nf->add_option("mask", nf_mask, "mask filter JSON")->required();
    nf->add_option("--dilation", nf_M, "dilation matrix 'a,b;c,d'")->required();
    nf->add_option("--m", nf_m, "matching order m")->required();
    nf->add_option("--n", nf_n, "phi order n")->required();
    nf->add_flag("--orthogonal", nf_orth, "also make the columns of U^{-1} orthogonal against phi");
    nf->add_option("--vectorize", nf_N, "vectorizer for the moment correction used by --orthogonal");
    nf->add_option("--max-order", nf_max, "largest sum-rule order tried");
    nf->add_option("--out-dir", nf_dir, "directory for U.json and mask_nf.json");
    nf->callback([&] {
        code = run("normal-form", [&] {
            TrigMatrix a = load_filter(nf_mask);
            IntMatrix M = io::parse_matrix_arg(nf_M);
            CosetSystem cs = validate_dilation(M);
            size_t r = a.rows();
            if (a.cols() != r) throw ShapeMismatch("mask must be square");
            if (r < 2) throw ShapeMismatch("normal form needs r >= 2");
            if (tm_dim(a) != cs.dim()) throw DimensionMismatch("mask dimension differs from the dilation");
            if (nf_m < 1 || nf_n < nf_m) throw InputError("need 1 <= m <= n");
            auto [sr, v] = sum_rules(a, cs, nf_max);
            if (sr < nf_m) throw InputError("mask has sum rules of order " + std::to_string(sr) + " < m");
            long nt = std::max(nf_n, 2 * nf_m);
            JetMatrix phi = phi_jets(a, cs, nt, jm_at_origin(v));
            Outcome o;
            NormalFormResult res;
            if (!nf_orth) {
                res = normal_form_standard(a, cs, v, phi, nf_m, nf_n);
            } else {
                // the orthogonal form needs the special matching filter; correct the moments first when absent
                JetMatrix v1 = v, phi1 = phi;
                TrigMatrix a1 = a, U0 = tm_identity(r, cs.dim()), U0i = U0;
                bool corrected = !moment_special_check(phi, v, nf_m);
                if (corrected) {
                    NormalFormResult th =
                        moment_correction_filter(a, cs, vectorizer_or_default(nf_N, M, r), v, phi, nf_m);
                    a1 = th.a_nf;
                    v1 = th.matching_nf_jet;
                    phi1 = jm_truncate(tm_jet(th.U, nt) * phi, nt);
                    U0 = th.U;
                    U0i = th.U_inv;
                }
                NormalFormResult w = normal_form_orthogonal(a1, cs, v1, phi1, nf_m, nf_n);
                OrthoCheck oc = check_ortho(w.U_inv, phi1, std::max(nf_m, nf_n));
                ConverseReport cr = converse_moment_special(w.U, w.U_inv, phi1, v1, nf_m, nf_n);
                o.report["orthogonal"] = {{"moment_correction_applied", corrected},
                                          {"diagonal", oc.diagonal},
                                          {"first_is_phi_norm", oc.first_is_phi_norm},
                                          {"converse_hypotheses", cr.hypotheses},
                                          {"converse_moment_special", cr.moment_special}};
                if (!(oc.ok() && cr.hypotheses && cr.moment_special)) o.code = kFail;
                res = w;
                res.U = w.U * U0;
                res.U_inv = U0i * w.U_inv;
            }
            NormalFormConditions c = check_normal_form(res.a_nf, cs, nf_m, nf_n);
            bool inverse_ok = res.U * res.U_inv == tm_identity(r, cs.dim());
            bool strong = tm_is_strongly_invertible(res.U);
            o.report["m"] = nf_m;
            o.report["n"] = nf_n;
            o.report["U_strongly_invertible"] = strong && inverse_ok;
            o.report["conditions"] = {{"a11_one", c.a11_one},
                                      {"a11_shifts", c.a11_shifts},
                                      {"a12_shifts", c.a12_shifts},
                                      {"a21_zero", c.a21_zero}};
            if (!(c.ok() && strong && inverse_ok)) o.code = kFail;
            std::filesystem::create_directories(nf_dir);
            std::string up = (std::filesystem::path(nf_dir) / "U.json").string();
            std::string mp = (std::filesystem::path(nf_dir) / "mask_nf.json").string();
            io::write_atomic(up, io::dump({{"U", io::filter_json(res.U)}, {"U_inv", io::filter_json(res.U_inv)}}));
            io::write_atomic(mp, io::dump(io::filter_json(res.a_nf)));
            o.report["outputs"] = {up, mp};
            return o;
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }
    return code;
}
