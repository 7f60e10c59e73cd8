#include "flagifs/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace flagifs {

namespace {

using nlohmann::json;

std::string escape_key(const std::string& key)
{
    std::string out;
    for (char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

std::string child(const std::string& pointer, const std::string& key)
{
    return pointer + "/" + escape_key(key);
}

std::string child(const std::string& pointer, std::size_t index)
{
    return pointer + "/" + std::to_string(index);
}

json convert(const toml::node& node, const std::string& pointer, std::map<std::string, int>& lines)
{
    lines[pointer] = static_cast<int>(node.source().begin.line);
    if (const auto* tbl = node.as_table()) {
        json obj = json::object();
        for (const auto& [key, value] : *tbl) {
            const std::string k(key.str());
            obj[k] = convert(value, child(pointer, k), lines);
        }
        return obj;
    }
    if (const auto* arr = node.as_array()) {
        json out = json::array();
        for (std::size_t i = 0; i < arr->size(); ++i)
            out.push_back(convert((*arr)[i], child(pointer, i), lines));
        return out;
    }
    if (const auto* v = node.as_integer()) return v->get();
    if (const auto* v = node.as_floating_point()) return v->get();
    if (const auto* v = node.as_boolean()) return v->get();
    if (const auto* v = node.as_string()) return v->get();
    // Dates and times have no meaning in this schema. A null value makes the
    // field check report the offending line.
    return nullptr;
}

int line_of_offset(std::string_view text, std::size_t offset)
{
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

const json& at(const Document& doc, const std::string& pointer)
{
    try {
        return doc.root.at(json::json_pointer(pointer));
    } catch (const json::exception&) {
        config_fail(doc, pointer, "missing field");
    }
}

bool has(const Document& doc, const std::string& pointer)
{
    return doc.root.contains(json::json_pointer(pointer));
}

double number_at(const Document& doc, const std::string& pointer)
{
    const json& v = at(doc, pointer);
    if (!v.is_number()) config_fail(doc, pointer, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) config_fail(doc, pointer, "expected a finite number");
    return x;
}

int int_at(const Document& doc, const std::string& pointer)
{
    const json& v = at(doc, pointer);
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (x == std::round(x)) return static_cast<int>(x);
    }
    config_fail(doc, pointer, "expected an integer");
}

Vec vector_at(const Document& doc, const std::string& pointer, int expected)
{
    const json& v = at(doc, pointer);
    if (!v.is_array()) config_fail(doc, pointer, "expected an array of numbers");
    if (static_cast<int>(v.size()) != expected)
        config_fail(doc, pointer, "expected " + std::to_string(expected) + " entries, found " + std::to_string(v.size()));
    Vec out(expected);
    for (int i = 0; i < expected; ++i) out(i) = number_at(doc, child(pointer, static_cast<std::size_t>(i)));
    return out;
}

Mat matrix_at(const Document& doc, const std::string& pointer, int d)
{
    const json& v = at(doc, pointer);
    if (!v.is_array() || static_cast<int>(v.size()) != d)
        config_fail(doc, pointer, "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix as nested rows");
    Mat m(d, d);
    for (int i = 0; i < d; ++i) {
        const Vec row = vector_at(doc, child(pointer, static_cast<std::size_t>(i)), d);
        m.row(i) = row.transpose();
    }
    return m;
}

}  // namespace

void config_fail(const Document& doc, const std::string& pointer, const std::string& message)
{
    std::string probe = pointer;
    int line = 0;
    while (true) {
        auto it = doc.lines.find(probe);
        if (it != doc.lines.end() && it->second > 0) {
            line = it->second;
            break;
        }
        if (probe.empty()) break;
        probe = probe.substr(0, probe.rfind('/'));
    }
    std::string where = doc.origin;
    if (line > 0) where += ":" + std::to_string(line);
    fail(ErrorCode::ConfigError, where + ": " + (pointer.empty() ? std::string("/") : pointer) + ": " + message);
}

Document parse_toml_text(std::string_view text, const std::string& origin)
{
    Document doc;
    doc.origin = origin;
    try {
        const toml::table tbl = toml::parse(text, origin);
        doc.root = convert(tbl, "", doc.lines);
        doc.lines[""] = 1;
    } catch (const toml::parse_error& e) {
        fail(ErrorCode::ConfigError, origin + ":" + std::to_string(e.source().begin.line) + ":" +
                                         std::to_string(e.source().begin.column) + ": " +
                                         std::string(e.description()));
    }
    return doc;
}

Document parse_json_text(std::string_view text, const std::string& origin)
{
    Document doc;
    doc.origin = origin;
    try {
        doc.root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ConfigError, origin + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
    return doc;
}

Document load_document(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, path.string() + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (path.extension() == ".json") return parse_json_text(text, path.string());
    return parse_toml_text(text, path.string());
}

Ifs ifs_from_document(const Document& doc, const std::string& pointer)
{
    const json& node = at(doc, pointer);
    if (!node.is_object()) config_fail(doc, pointer, "expected a table describing the IFS");

    const std::string mode_ptr = child(pointer, "mode");
    const json& mode_v = at(doc, mode_ptr);
    if (!mode_v.is_string()) config_fail(doc, mode_ptr, "expected \"linear\" or \"torus\"");
    const std::string mode_s = mode_v.get<std::string>();
    if (mode_s != "linear" && mode_s != "torus") config_fail(doc, mode_ptr, "unknown mode '" + mode_s + "'");
    const bool torus = mode_s == "torus";

    const std::string dim_ptr = child(pointer, "dim");
    const int d = int_at(doc, dim_ptr);
    if (d < 1 || d > (torus ? 3 : kMaxDim))
        config_fail(doc, dim_ptr, torus ? "torus dimension must be 1..3" : "linear dimension must be 1..4");

    const std::string gens_ptr = child(pointer, "generators");
    const json& gens = at(doc, gens_ptr);
    if (!gens.is_array() || gens.empty()) config_fail(doc, gens_ptr, "expected a non-empty array of generators");

    std::vector<GeneratorMap> out;
    for (std::size_t s = 0; s < gens.size(); ++s) {
        const std::string gp = child(gens_ptr, s);
        if (!gens[s].is_object()) config_fail(doc, gp, "expected a generator table");
        const std::string mp = child(gp, "matrix");
        const Mat A = matrix_at(doc, mp, d);
        if (!torus && !(std::abs(A.determinant()) > 1e-12)) config_fail(doc, mp, "linear generator is singular");
        if (torus) {
            if (A.array().round().matrix() != A) config_fail(doc, mp, "torus lattice matrix must be integral");
            if (std::abs(std::abs(A.determinant()) - 1.0) > 1e-9)
                config_fail(doc, mp, "torus lattice matrix must have det +-1");
        }
        try {
            if (!torus) {
                out.push_back(GeneratorMap::linear(A));
                continue;
            }
            Vec b = Vec::Zero(d);
            if (has(doc, child(gp, "translation"))) b = vector_at(doc, child(gp, "translation"), d);
            std::vector<SineTerm> terms;
            const std::string tp = child(gp, "terms");
            if (has(doc, tp)) {
                const json& tv = at(doc, tp);
                if (!tv.is_array()) config_fail(doc, tp, "expected an array of perturbation terms");
                for (std::size_t k = 0; k < tv.size(); ++k) {
                    const std::string kp = child(tp, k);
                    SineTerm t;
                    t.amplitude = number_at(doc, child(kp, "amplitude"));
                    const Vec freq = vector_at(doc, child(kp, "frequency"), d);
                    for (int i = 0; i < d; ++i) {
                        if (freq(i) != std::round(freq(i)))
                            config_fail(doc, child(kp, "frequency"), "frequencies must be integers");
                        t.frequency.push_back(static_cast<int>(freq(i)));
                    }
                    t.phase = has(doc, child(kp, "phase")) ? number_at(doc, child(kp, "phase")) : 0.0;
                    if (t.phase < 0.0 || t.phase >= 1.0) config_fail(doc, child(kp, "phase"), "phase must lie in [0,1)");
                    t.direction = vector_at(doc, child(kp, "direction"), d);
                    if (std::abs(t.direction.norm() - 1.0) > 1e-9)
                        config_fail(doc, child(kp, "direction"), "direction must be a unit vector");
                    terms.push_back(std::move(t));
                }
            }
            out.push_back(GeneratorMap::torus(A, b, std::move(terms)));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ConfigError) throw;
            // remaining failures come from the perturbation terms
            config_fail(doc, has(doc, child(gp, "terms")) ? child(gp, "terms") : gp, e.what());
        }
    }
    return Ifs(std::move(out));
}

nlohmann::json matrix_to_json(const Mat& m)
{
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json vector_to_json(const Vec& v)
{
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

nlohmann::json ifs_to_json(const Ifs& ifs)
{
    json j;
    j["mode"] = mode_name(ifs.mode());
    j["dim"] = ifs.dim();
    j["C"] = ifs.C();
    json gens = json::array();
    for (const auto& g : ifs.generators()) {
        json gj;
        gj["matrix"] = matrix_to_json(g.matrix());
        if (g.mode() == Mode::Torus) {
            gj["translation"] = vector_to_json(g.translation());
            json terms = json::array();
            for (const auto& t : g.terms()) {
                terms.push_back({{"amplitude", t.amplitude},
                                 {"frequency", t.frequency},
                                 {"phase", t.phase},
                                 {"direction", vector_to_json(t.direction)}});
            }
            gj["terms"] = terms;
        }
        gens.push_back(gj);
    }
    j["generators"] = gens;
    return j;
}

}  // namespace flagifs
