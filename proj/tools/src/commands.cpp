#include "flagifs_cli/commands.hpp"

#include <flagifs/bootstrap.hpp>
#include <flagifs/config.hpp>
#include <flagifs/maneuver.hpp>
#include <flagifs/minimality.hpp>
#include <flagifs/parallel.hpp>
#include <flagifs/rng.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace flagifs::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kSchemaVersion = 1;

std::string hex64(std::uint64_t v)
{
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

// Typed access to one table of the configuration. Every value read, default
// or not, is recorded so the report can carry the exact parameter set.
class Section {
public:
    Section(const Document& doc, std::string name, json& record)
        : doc_(doc), name_(std::move(name)), record_(record[name_])
    {
        record_ = json::object();
        const json* node = lookup("");
        if (node && !node->is_object()) config_fail(doc_, pointer(""), "expected a table");
    }

    double real(const std::string& key, double fallback)
    {
        double v = fallback;
        if (const json* node = lookup(key)) {
            if (!node->is_number()) fail_at(key, "expected a number");
            v = node->get<double>();
        }
        record_[key] = v;
        return v;
    }

    long integer(const std::string& key, long fallback)
    {
        long v = fallback;
        if (const json* node = lookup(key)) {
            if (!node->is_number_integer()) fail_at(key, "expected an integer");
            v = node->get<long>();
        }
        record_[key] = v;
        return v;
    }

    bool boolean(const std::string& key, bool fallback)
    {
        bool v = fallback;
        if (const json* node = lookup(key)) {
            if (!node->is_boolean()) fail_at(key, "expected true or false");
            v = node->get<bool>();
        }
        record_[key] = v;
        return v;
    }

    std::string text(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed = {})
    {
        std::string v = fallback;
        if (const json* node = lookup(key)) {
            if (!node->is_string()) fail_at(key, "expected a string");
            v = node->get<std::string>();
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail_at(key, "expected one of " + list);
        }
        record_[key] = v;
        return v;
    }

    /// A list of numbers; a single number is accepted and repeated `count` times.
    std::vector<double> reals(const std::string& key, std::size_t count, double fallback)
    {
        std::vector<double> v(count, fallback);
        if (const json* node = lookup(key)) {
            if (node->is_number()) {
                v.assign(count, node->get<double>());
            } else if (node->is_array()) {
                v.clear();
                for (const auto& e : *node) {
                    if (!e.is_number()) fail_at(key, "expected an array of numbers");
                    v.push_back(e.get<double>());
                }
            } else {
                fail_at(key, "expected a number or an array of numbers");
            }
        }
        record_[key] = v;
        return v;
    }

    [[noreturn]] void fail_at(const std::string& key, const std::string& message) const
    {
        config_fail(doc_, pointer(key), message);
    }

    void require(bool ok, const std::string& key, const std::string& message) const
    {
        if (!ok) fail_at(key, message);
    }

private:
    const Document& doc_;
    std::string name_;
    json& record_;

    std::string pointer(const std::string& key) const { return "/" + name_ + (key.empty() ? "" : "/" + key); }

    const json* lookup(const std::string& key) const
    {
        try {
            return &doc_.root.at(json::json_pointer(pointer(key)));
        } catch (const json::exception&) {
            return nullptr;
        }
    }
};

struct Context {
    std::string command;
    Document doc;
    std::optional<Ifs> ifs;
    std::uint64_t seed = 1;
    fs::path out;
    std::string format = "both";
    unsigned threads = 0;
    json parameters = json::object();
    std::string started;
    std::vector<std::string> written;

    const Ifs& system() const { return *ifs; }
    Section section(const std::string& name) { return Section(doc, name, parameters); }
    bool want_json() const { return format != "csv"; }
    bool want_csv() const { return format != "json"; }

    std::string config_hash() const
    {
        const json fingerprint{{"ifs", ifs_to_json(*ifs)}, {"parameters", parameters}, {"seed", seed}};
        return hex64(fnv1a64(fingerprint.dump()));
    }

    json envelope() const
    {
        return {{"schema_version", kSchemaVersion},
                {"command", command},
                {"config_hash", config_hash()},
                {"seed", seed},
                {"rng", CounterRng::kAlgorithm},
                {"parameters", parameters},
                {"ifs", ifs_to_json(*ifs)}};
    }

    std::string csv_banner() const
    {
        return "# schema_version=" + std::to_string(kSchemaVersion) + " command=" + command +
               " config_hash=" + config_hash() + " seed=" + std::to_string(seed) + " rng=" +
               CounterRng::kAlgorithm + "\n";
    }

    void write_file(const std::string& name, const std::string& body)
    {
        fs::create_directories(out);
        std::ofstream f(out / name, std::ios::binary);
        if (!f) fail(ErrorCode::ConfigError, (out / name).string() + ": cannot write output");
        f << body;
        written.push_back(name);
    }

    void write_json(const std::string& stem, const json& result)
    {
        json doc = envelope();
        doc["result"] = result;
        write_file(stem + ".json", doc.dump(2) + "\n");
    }

    void write_csv(const std::string& stem, const std::string& table) { write_file(stem + ".csv", csv_banner() + table); }

    void write_meta(int status)
    {
        const json meta{{"command", command},
                        {"config", doc.origin},
                        {"started_utc", started},
                        {"finished_utc", utc_now()},
                        {"threads", thread_count()},
                        {"exit_status", status},
                        {"outputs", written}};
        fs::create_directories(out);
        std::ofstream(out / "run_meta.json", std::ios::binary) << meta.dump(2) << "\n";
    }
};

Ifs load_ifs(const Document& doc)
{
    const json* node = nullptr;
    try {
        node = &doc.root.at("ifs");
    } catch (const json::exception&) {
        config_fail(doc, "/ifs", "missing [ifs] table or path");
    }
    if (node->is_string()) {
        fs::path p = node->get<std::string>();
        if (p.is_relative()) p = fs::path(doc.origin).parent_path() / p;
        const Document sub = load_document(p);
        return ifs_from_document(sub, sub.root.contains("ifs") ? "/ifs" : "");
    }
    return ifs_from_document(doc, "/ifs");
}

Context make_context(const std::string& command, const RunOptions& opt)
{
    Context ctx;
    ctx.command = command;
    ctx.started = utc_now();
    if (opt.config.empty()) fail(ErrorCode::ConfigError, "no configuration file given (use --config)");
    ctx.doc = load_document(opt.config);
    if (!ctx.doc.root.is_object()) config_fail(ctx.doc, "", "expected a table at the top level");

    // [run] values are plumbing and stay out of the parameter record, except
    // the seed, which the envelope carries separately.
    json scratch;
    Section run(ctx.doc, "run", scratch);
    const long seed = run.integer("seed", 1);
    run.require(seed >= 0, "seed", "seed must be nonnegative");
    ctx.seed = static_cast<std::uint64_t>(seed);
    const long threads = run.integer("threads", 0);
    run.require(threads >= 0, "threads", "thread count must be nonnegative");
    ctx.threads = static_cast<unsigned>(threads);
    ctx.out = run.text("out", "out");
    ctx.format = run.text("format", "both", {"json", "csv", "both"});

    if (opt.seed) ctx.seed = *opt.seed;
    if (opt.threads) ctx.threads = *opt.threads;
    if (opt.out) ctx.out = *opt.out;
    if (opt.format) {
        if (*opt.format != "json" && *opt.format != "csv" && *opt.format != "both")
            fail(ErrorCode::ConfigError, "--format must be json, csv or both");
        ctx.format = *opt.format;
    }
    if (!opt.out && fs::path(ctx.out).is_relative()) ctx.out = fs::path(ctx.doc.origin).parent_path() / ctx.out;
    set_thread_count(ctx.threads);
    ctx.ifs.emplace(load_ifs(ctx.doc));
    return ctx;
}

ManeuverMesh mesh_of(Context& ctx)
{
    Section s = ctx.section("maneuver");
    ManeuverMesh mesh;
    mesh.base_per_axis = static_cast<int>(s.integer("base_per_axis", mesh.base_per_axis));
    mesh.flag_samples = static_cast<int>(s.integer("flag_samples", mesh.flag_samples));
    s.require(mesh.base_per_axis >= 1, "base_per_axis", "must be at least 1");
    s.require(mesh.flag_samples >= 1, "flag_samples", "must be at least 1");
    mesh.seed = ctx.seed;
    return mesh;
}

BundlePoint start_of(Context& ctx, Section& s)
{
    const Ifs& ifs = ctx.system();
    BundlePoint p{ifs.base_origin(), Flag::canonical(ifs.dim())};
    if (ifs.base_dim() > 0) {
        const auto base = s.reals("base", static_cast<std::size_t>(ifs.base_dim()), 0.0);
        s.require(base.size() == static_cast<std::size_t>(ifs.base_dim()), "base", "wrong number of coordinates");
        for (int i = 0; i < ifs.base_dim(); ++i) p.base(i) = base[static_cast<std::size_t>(i)] - std::floor(base[static_cast<std::size_t>(i)]);
    }
    return p;
}

std::string csv_row(std::initializer_list<std::string> head, const Vec& a, const Vec& b = Vec())
{
    std::ostringstream s;
    s.precision(17);
    bool first = true;
    for (const auto& h : head) {
        s << (first ? "" : ",") << h;
        first = false;
    }
    for (int i = 0; i < a.size(); ++i) s << ',' << a(i);
    for (int i = 0; i < b.size(); ++i) s << ',' << b(i);
    s << '\n';
    return s.str();
}

std::string indexed_header(std::initializer_list<std::string> head, std::initializer_list<std::string> stems, int d)
{
    std::string out;
    for (const auto& h : head) out += (out.empty() ? "" : ",") + h;
    for (const auto& st : stems)
        for (int i = 0; i < d; ++i) out += "," + st + "_" + std::to_string(i + 1);
    return out + "\n";
}

// Key/value CSV of the scalar top-level fields, for commands whose result
// has no natural table.
std::string scalar_csv(const json& result)
{
    std::string out = "key,value\n";
    for (const auto& [k, v] : result.items())
        if (v.is_primitive()) out += k + "," + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    return out;
}

void emit(Context& ctx, const std::string& stem, const json& result, const std::string& table = {})
{
    if (ctx.want_json()) ctx.write_json(stem, result);
    if (ctx.want_csv()) ctx.write_csv(stem, table.empty() ? scalar_csv(result) : table);
}

// ---------------------------------------------------------------- check

int run_check(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    const ManeuverMesh mesh = mesh_of(ctx);
    Section s = ctx.section("check");
    const long horizon = s.integer("horizon", 6);
    const long word_length = s.integer("word_length", 3);
    const std::string evidence = s.text("evidence", "sampled", {"sampled", "certified"});
    s.require(horizon >= 1, "horizon", "must be at least 1");
    s.require(word_length >= 1 && word_length <= 8, "word_length", "must lie in 1..8");

    json result;
    bool all = true;

    json man{{"condition", "maneuverability"}};
    try {
        const ManeuverCertificate cert = certify_maneuverability(ifs, mesh);
        man["verified"] = true;
        man["c"] = cert.c;
        man["C"] = cert.C;
        man["cells"] = cert.cell_count();
        man["evidence"] = "sampled";
    } catch (const Error& e) {
        man["verified"] = false;
        man["error"] = error_name(e.code());
        man["message"] = e.what();
    }
    all = all && man["verified"].get<bool>();
    result["maneuverability"] = man;

    json mini{{"condition", "positive minimality"}};
    try {
        const CoverSpec cover = build_cover(ifs, ctx.seed);
        const MinimalityVerdict v = check_minimality_criterion(ifs, cover, static_cast<int>(horizon), ctx.seed);
        const bool level_ok = evidence == "sampled" || !v.mesh_sampled;
        mini["verified"] = v.positive() && level_ok;
        mini["evidence"] = v.mesh_sampled ? "sampled" : "certified";
        mini["verdict"] = to_json(v);
        mini["cover_elements"] = cover.elements.size();
        mini["lebesgue"] = cover.lebesgue;
    } catch (const Error& e) {
        mini["verified"] = false;
        mini["error"] = error_name(e.code());
        mini["message"] = e.what();
    }
    all = all && mini["verified"].get<bool>();
    result["minimality"] = mini;

    // Condition (3): a periodic point whose exponents lie in the cone and
    // which attracts in the flag bundle.
    json per{{"condition", "attracting periodic point in the cone"}, {"verified", false}};
    std::size_t scanned = 0;
    const int ell = ifs.alphabet();
    for (long len = 1; len <= word_length && !per["verified"].get<bool>(); ++len) {
        Word w(static_cast<std::size_t>(len), 0);
        while (true) {
            ++scanned;
            try {
                const PeriodicOrbitRecord rec = lyapunov_vector_of_periodic(ifs, w);
                if (rec.attracting && in_cone(rec.lambda)) {
                    per["verified"] = true;
                    per["record"] = to_json(rec);
                    break;
                }
            } catch (const Error&) {
            }
            std::size_t i = w.size();
            while (i > 0 && w[i - 1] == ell - 1) w[--i] = 0;
            if (i == 0) break;
            ++w[i - 1];
        }
    }
    per["words_scanned"] = scanned;
    all = all && per["verified"].get<bool>();
    result["periodic"] = per;
    result["all_verified"] = all;

    std::string table = "condition,verified\n";
    table += std::string("maneuverability,") + (man["verified"].get<bool>() ? "true" : "false") + "\n";
    table += std::string("minimality,") + (mini["verified"].get<bool>() ? "true" : "false") + "\n";
    table += std::string("periodic,") + (per["verified"].get<bool>() ? "true" : "false") + "\n";
    emit(ctx, "check", result, table);
    return all ? kSuccess : kConditionFailed;
}

// ------------------------------------------------------------ exponents

int run_exponents(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    Section s = ctx.section("exponents");
    const long n = s.integer("n", 10000);
    s.require(n >= 1, "n", "number of steps must be at least 1");
    const std::string word_text = s.text("word", "");
    const std::string start = s.text("start", "canonical", {"canonical", "stable"});
    const long every = s.integer("record_every", std::max(1L, n / 100));
    s.require(every >= 1, "record_every", "must be at least 1");

    Word w;
    if (!word_text.empty()) {
        try {
            w = parse_word(word_text, ifs.alphabet());
        } catch (const Error& e) {
            s.fail_at("word", e.what());
        }
    }
    if (start == "stable" && w.empty()) s.fail_at("start", "a stable start needs a periodic word");

    SkewPoint p;
    p.base = ifs.base_origin();
    p.flag = Flag::canonical(ifs.dim());
    json result;
    if (start == "stable") {
        const PeriodicOrbitRecord rec = lyapunov_vector_of_periodic(ifs, w);
        p.base = rec.x0;
        p.flag = rec.flag;
        result["periodic"] = to_json(rec);
    } else {
        p.base = start_of(ctx, s).base;
    }

    std::unique_ptr<SymbolSource> source;
    if (w.empty()) source = std::make_unique<RandomSource>(ifs.alphabet(), CounterRng(ctx.seed, 0xE4));
    else source = std::make_unique<WordSource>(w, true);
    const FurstenbergRun run =
        furstenberg_estimate(ifs, source.get(), p, static_cast<std::size_t>(n), static_cast<std::size_t>(every));

    result["lambda"] = vector_to_json(run.estimate.values);
    result["samples"] = run.estimate.sample_count;
    {
        const PairVec fe = flag_cocycle_exponents(run.estimate.values);
        json arr = json::array();
        for (int i = 0; i < fe.size(); ++i) arr.push_back(fe(i));
        result["flag_exponents"] = arr;
    }
    result["source"] = w.empty() ? "random" : "periodic:" + format_word(w);
    result["final_flag"] = matrix_to_json(run.final_point.flag.frame());

    std::string table = indexed_header({"step"}, {"lambda"}, ifs.dim());
    for (const auto& [step, avg] : run.running) table += csv_row({std::to_string(step)}, avg);
    emit(ctx, "exponents", result, table);
    return kSuccess;
}

// ------------------------------------------------------------ prescribe

int run_prescribe(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    const int d = ifs.dim();
    const ManeuverMesh mesh = mesh_of(ctx);
    Section s = ctx.section("prescribe");
    const auto chi_v = s.reals("chi", static_cast<std::size_t>(d), 0.0);
    s.require(chi_v.size() == static_cast<std::size_t>(d), "chi", "chi needs one entry per dimension");
    const double eta = s.real("eta", 0.1);
    s.require(eta > 0.0, "eta", "eta must be positive");
    const std::string rule = s.text("rule", "lookahead", {"lookahead", "deviation"});
    const BundlePoint start = start_of(ctx, s);

    const ManeuverCertificate cert = certify_maneuverability(ifs, mesh);
    Vec chi(d);
    for (int i = 0; i < d; ++i) chi(i) = chi_v[static_cast<std::size_t>(i)];
    if ((chi.array().abs() > cert.c * (1.0 + 1e-12)).any())
        s.fail_at("chi", "target outside [-c, c] with certified c = " + std::to_string(cert.c));

    const PrescribeTrace tr = prescribe_word(ifs, cert, start, chi, eta,
                                             rule == "lookahead" ? SignRule::LookAhead : SignRule::Deviation);
    double worst = 0.0;
    for (const auto& dv : tr.deviations) worst = std::max(worst, dv.cwiseAbs().maxCoeff());
    const double miss = (tr.average - chi).cwiseAbs().maxCoeff();
    const bool bound_ok = worst <= ifs.C();
    const bool average_ok = miss < eta;

    json result{{"word", format_word(tr.word)},
                {"q", tr.q},
                {"eta", eta},
                {"chi", vector_to_json(chi)},
                {"c", cert.c},
                {"C", ifs.C()},
                {"average", vector_to_json(tr.average)},
                {"average_error", miss},
                {"max_deviation", worst},
                {"deviation_bound_ok", bound_ok},
                {"average_ok", average_ok},
                {"witness_misses", tr.witness_misses}};

    std::string table = indexed_header({"step", "symbol"}, {"log_diagonal", "deviation"}, d);
    for (std::size_t n = 0; n < tr.word.size(); ++n)
        table += csv_row({std::to_string(n), std::to_string(tr.word[n])}, tr.log_diagonals[n], tr.deviations[n + 1]);
    emit(ctx, "prescribe", result, table);
    return bound_ok && average_ok ? kSuccess : kConditionFailed;
}

// ----------------------------------------------------------- zero-orbit

int run_zero_orbit(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    const int d = ifs.dim();
    const int ell = ifs.alphabet();
    if (ell % 2 != 0)
        config_fail(ctx.doc, "/ifs/generators",
                    "the binary split needs an even number of generators (got " + std::to_string(ell) + ")");
    const ManeuverMesh mesh = mesh_of(ctx);
    Section s = ctx.section("zero_orbit");
    const long length = s.integer("length", 100000);
    const long k = s.integer("block_length", 8);
    const bool trace = s.boolean("trace_csv", true);
    s.require(length >= 1, "length", "must be at least 1");
    s.require(k >= 1 && k <= 12, "block_length", "must lie in 1..12");
    const BundlePoint start = start_of(ctx, s);

    std::vector<int> first, second;
    for (int g = 0; g < ell / 2; ++g) first.push_back(g);
    for (int g = ell / 2; g < ell; ++g) second.push_back(g);
    const ManeuverCertificate c0 = certify_maneuverability(ifs, mesh, first);
    const ManeuverCertificate c1 = certify_maneuverability(ifs, mesh, second);

    CounterRng rng(ctx.seed, 0x7E7A);
    std::vector<int> theta(static_cast<std::size_t>(length));
    for (auto& t : theta) t = static_cast<int>(rng.below(2));
    const ZeroOrbit z = zero_exponent_orbit(ifs, c0, c1, theta, start);

    const double C = ifs.C();
    const double furst = z.average.norm();
    const double furst_bound = 2.0 * C * std::sqrt(static_cast<double>(d)) / static_cast<double>(length);
    const BlockCoverage cov = entropy_block_coverage({theta_of(z.word, ell)}, static_cast<int>(k));
    const bool coding_ok = theta_of(z.word, ell) == theta;
    const bool bound_ok = z.max_running.maxCoeff() <= 2.0 * C;
    const bool ok = bound_ok && furst <= furst_bound && cov.complete() && coding_ok;

    json result{{"length", length},
                {"c_first_half", c0.c},
                {"c_second_half", c1.c},
                {"C", C},
                {"max_running", vector_to_json(z.max_running)},
                {"running_bound", 2.0 * C},
                {"running_bound_ok", bound_ok},
                {"furstenberg_norm", furst},
                {"furstenberg_bound", furst_bound},
                {"coding_matches", coding_ok},
                {"block_length", k},
                {"blocks_seen", cov.seen},
                {"blocks_total", cov.total},
                {"entropy_lower_bound", cov.complete() ? std::log(2.0) : 0.0},
                {"witness_misses", z.witness_misses}};

    std::string table;
    if (trace) {
        table = indexed_header({"step", "symbol", "theta"}, {"log_diagonal", "running"}, d);
        Vec x = start.base;
        Flag F = start.flag;
        Vec running = Vec::Zero(d);
        for (std::size_t n = 0; n < z.word.size(); ++n) {
            const auto& g = ifs.generator(z.word[n]);
            const QrStep st = qr_of(g.jacobian(x), F);
            const Vec ld = st.r.log_diagonal();
            running += ld;
            table += csv_row({std::to_string(n), std::to_string(z.word[n]), std::to_string(theta[n])}, ld, running);
            F = st.image;
            x = g.apply(x);
        }
    }
    emit(ctx, "zero_orbit", result, table);
    return ok ? kSuccess : kConditionFailed;
}

// ----------------------------------------------------------------- tour

int run_tour(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    Section s = ctx.section("tour");
    const double delta = s.real("delta", 0.3);
    const double radius = s.real("target_radius", 0.1);
    const double ball = s.real("ball_radius", 0.0);
    s.require(delta > 0.0, "delta", "delta must be positive");
    s.require(radius > 0.0, "target_radius", "target radius must be positive");
    s.require(ball >= 0.0, "ball_radius", "ball radius must be nonnegative");
    TourOptions opt;
    opt.block_cap = static_cast<std::size_t>(s.integer("block_cap", static_cast<long>(opt.block_cap)));
    opt.pair_cap = static_cast<std::size_t>(s.integer("pair_cap", 0));
    opt.kmax = static_cast<int>(s.integer("kmax", opt.kmax));
    opt.seed = ctx.seed;
    const long depth = s.integer("depth", tour_depth(delta));
    s.require(depth >= 0 && std::ldexp(1.0, static_cast<int>(-depth)) <= delta, "depth", "need 2^-depth <= delta");
    const BundlePoint start = start_of(ctx, s);
    const Ball U{start, radius};

    json result;
    bool ok = false;
    if (ball > 0.0) {
        const GroupTourResult g = group_tour(ifs, delta, U, {start, ball}, opt);
        result = to_json(g.tour);
        result["rho_requested"] = g.rho_requested;
        result["rho"] = g.rho;
        result["safety"] = g.safety;
        result["log_lipschitz"] = g.log_lipschitz;
        ok = g.tour.dense && g.tour.endpoint_in_target;
    } else {
        const TourReport r = tour_and_go_home(ifs, delta, U, start, static_cast<int>(depth), opt);
        result = to_json(r);
        ok = r.dense && r.endpoint_in_target;
    }
    emit(ctx, "tour", result);
    return ok ? kSuccess : kConditionFailed;
}

// ------------------------------------------------------------ bootstrap

int run_bootstrap_cmd(Context& ctx)
{
    const Ifs& ifs = ctx.system();
    const ManeuverMesh mesh = mesh_of(ctx);
    Section s = ctx.section("bootstrap");
    const long steps = s.integer("steps", 3);
    s.require(steps >= 0, "steps", "number of steps must be nonnegative");
    const auto n = static_cast<std::size_t>(steps);
    const std::string seed_word = s.text("seed_word", "0");
    BootstrapSchedule sched;
    sched.theta = s.reals("theta", n, 0.2);
    sched.epsilon = s.reals("epsilon", n, 0.1);
    sched.delta = s.reals("delta", n, 0.3);
    for (const char* key : {"theta", "epsilon", "delta"}) {
        const auto& v = std::string(key) == "theta" ? sched.theta : std::string(key) == "epsilon" ? sched.epsilon : sched.delta;
        s.require(v.size() >= n, key, "schedule shorter than the number of steps");
        for (double x : v) s.require(x > 0.0, key, "schedule entries must be positive");
    }
    ImproveParams base;
    base.eta = s.real("eta", base.eta);
    base.slack = s.real("slack", base.slack);
    base.auto_budget = s.boolean("auto_budget", base.auto_budget);
    base.interleave = s.boolean("interleave", base.interleave);
    base.n = s.integer("n", base.n);
    base.m = s.integer("m", base.m);
    base.max_period = s.integer("max_period", base.max_period);
    base.max_attempts = static_cast<int>(s.integer("max_attempts", base.max_attempts));
    base.samples = static_cast<int>(s.integer("samples", base.samples));
    base.tour.block_cap = static_cast<std::size_t>(s.integer("block_cap", static_cast<long>(base.tour.block_cap)));
    base.tour.pair_cap = static_cast<std::size_t>(s.integer("pair_cap", static_cast<long>(base.tour.pair_cap)));
    base.tour.kmax = static_cast<int>(s.integer("kmax", base.tour.kmax));
    base.seed = ctx.seed;
    s.require(base.eta > 0.0, "eta", "eta must be positive");
    s.require(base.slack >= 1.0, "slack", "slack must be at least 1");
    s.require(base.n >= 0 && base.m >= 0, "n", "phase lengths must be nonnegative");
    s.require(base.samples >= 1, "samples", "need at least one sample");
    s.require(base.max_attempts >= 1, "max_attempts", "need at least one attempt");

    Word w;
    try {
        w = parse_word(seed_word, ifs.alphabet());
    } catch (const Error& e) {
        s.fail_at("seed_word", e.what());
    }
    const ManeuverCertificate cert = certify_maneuverability(ifs, mesh);
    const PeriodicOrbitRecord seed = lyapunov_vector_of_periodic(ifs, w, true);
    const BootstrapLog log = run_bootstrap(ifs, cert, seed, sched, static_cast<int>(steps), base);

    bool decreasing = true;
    bool contracts = true;
    for (std::size_t i = 1; i < log.steps.size(); ++i) {
        decreasing = decreasing &&
                     log.steps[i].at("lambda_norm").get<double>() < log.steps[i - 1].at("lambda_norm").get<double>();
        contracts = contracts && log.steps[i].at("norm_ok").get<bool>() && log.steps[i].at("angle_ok").get<bool>() &&
                    log.steps[i].at("shadow_ok").get<bool>() && log.steps[i].at("tour_dense").get<bool>();
    }
    const bool ok = log.completed && decreasing && contracts;

    json summary{{"completed", log.completed},
                 {"error", log.error},
                 {"steps_logged", log.steps.size()},
                 {"norm_strictly_decreasing", decreasing},
                 {"contracts_ok", contracts},
                 {"trend_ok", log.trend_ok},
                 {"c", cert.c},
                 {"C", ifs.C()}};
    if (ctx.want_json()) {
        std::string lines = ctx.envelope().dump() + "\n";
        for (const auto& st : log.steps) lines += st.dump() + "\n";
        ctx.write_file("bootstrap.jsonl", lines);
        ctx.write_json("bootstrap", summary);
    }
    if (ctx.want_csv()) ctx.write_csv("bootstrap", bootstrap_csv(log));
    return ok ? kSuccess : kConditionFailed;
}

int dispatch(const std::string& name, const RunOptions& opt, std::ostream& err,
             const std::function<int(Context&)>& body)
{
    std::optional<Context> ctx;
    try {
        ctx.emplace(make_context(name, opt));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    int status = kSuccess;
    try {
        status = body(*ctx);
    } catch (const Error& e) {
        const bool usage = e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::InvalidArgument;
        err << "error: " << e.what() << "\n";
        status = usage ? kUsageError : kConditionFailed;
        if (!usage) {
            try {
                ctx->write_json(name, {{"error", error_name(e.code())}, {"message", e.what()}});
            } catch (const Error&) {
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        status = kConditionFailed;
    }
    try {
        ctx->write_meta(status);
    } catch (const std::exception& e) {
        err << "warning: could not write run_meta.json: " << e.what() << "\n";
    }
    return status;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

const std::vector<std::string>& command_names()
{
    static const std::vector<std::string> names{"check", "exponents", "prescribe", "zero-orbit", "tour", "bootstrap"};
    return names;
}

int cmd_check(const RunOptions& o, std::ostream& err) { return dispatch("check", o, err, run_check); }
int cmd_exponents(const RunOptions& o, std::ostream& err) { return dispatch("exponents", o, err, run_exponents); }
int cmd_prescribe(const RunOptions& o, std::ostream& err) { return dispatch("prescribe", o, err, run_prescribe); }
int cmd_zero_orbit(const RunOptions& o, std::ostream& err) { return dispatch("zero_orbit", o, err, run_zero_orbit); }
int cmd_tour(const RunOptions& o, std::ostream& err) { return dispatch("tour", o, err, run_tour); }
int cmd_bootstrap(const RunOptions& o, std::ostream& err) { return dispatch("bootstrap", o, err, run_bootstrap_cmd); }

int run_command(const std::string& name, const RunOptions& options, std::ostream& err)
{
    static const std::map<std::string, int (*)(const RunOptions&, std::ostream&)> table{
        {"check", cmd_check},         {"exponents", cmd_exponents}, {"prescribe", cmd_prescribe},
        {"zero-orbit", cmd_zero_orbit}, {"tour", cmd_tour},         {"bootstrap", cmd_bootstrap}};
    const auto it = table.find(name);
    if (it == table.end()) {
        err << "error: unknown command '" << name << "'\n";
        return kUsageError;
    }
    return it->second(options, err);
}

}  // namespace flagifs::cli
