#pragma once

#include "flagifs/torus_ifs.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace flagifs {

/// A parsed configuration tree. TOML input is converted to JSON values and
/// the source line of every node is kept, keyed by JSON pointer, so that
/// semantic errors can still point at a line.
struct Document {
    nlohmann::json root;
    std::map<std::string, int> lines;
    std::string origin;
};

Document parse_toml_text(std::string_view text, const std::string& origin);
Document parse_json_text(std::string_view text, const std::string& origin);
/// Chooses the parser from the extension (.json, otherwise TOML).
Document load_document(const std::filesystem::path& path);

/// Throws ConfigError as "<origin>:<line>: <pointer>: <message>", using the
/// nearest enclosing node with a known line.
[[noreturn]] void config_fail(const Document& doc, const std::string& pointer, const std::string& message);

/// Reads an IFS from the object at `pointer`:
///   mode = "linear" | "torus", dim, generators = [{matrix, translation?, terms?}]
Ifs ifs_from_document(const Document& doc, const std::string& pointer = "");
nlohmann::json ifs_to_json(const Ifs& ifs);

nlohmann::json matrix_to_json(const Mat& m);
nlohmann::json vector_to_json(const Vec& v);

}  // namespace flagifs
