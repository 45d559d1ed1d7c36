#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace toolsel {

struct JsonlRecord {
    nlohmann::json value;
    std::size_t line;   // 1-based line in the file
    std::size_t index;  // 0-based record index (blank lines skipped)
};

/// Reads a UTF-8 line-delimited JSON file. Blank lines are skipped; a line
/// that is not a single JSON object raises ValidationError with its line
/// number. Missing/unreadable files raise EnvironmentError.
std::vector<JsonlRecord> read_jsonl(const std::filesystem::path& path);

/// Writes one compact JSON document per line with a trailing newline.
/// Output is byte-deterministic for equal inputs.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Verifies an object holds exactly the given keys (optional ones may be
/// absent). Unknown or missing fields raise ValidationError naming the field
/// and the record's position via `where`.
void require_fields(const nlohmann::json& obj,
                    const std::vector<std::string>& required,
                    const std::vector<std::string>& optional,
                    const std::string& where);

}  // namespace toolsel
