#include "toolsel/jsonl.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "toolsel/common.hpp"

namespace toolsel {

std::vector<JsonlRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open file: " + path.string());

    std::vector<JsonlRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        nlohmann::json value = nlohmann::json::parse(line, nullptr, false);
        if (value.is_discarded() || !value.is_object()) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": not a JSON object");
        }
        records.push_back({std::move(value), line_no, records.size()});
    }
    return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write file: " + path.string());
    for (const auto& row : rows) out << row.dump() << '\n';
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvironmentError("cannot write file: " + path.string());
    out << content;
}

void require_fields(const nlohmann::json& obj,
                    const std::vector<std::string>& required,
                    const std::vector<std::string>& optional,
                    const std::string& where) {
    for (const auto& key : required) {
        if (!obj.contains(key)) {
            throw ValidationError(where + ": missing field \"" + key + "\"");
        }
    }
    for (const auto& item : obj.items()) {
        const std::string& key = item.key();
        bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                     std::find(optional.begin(), optional.end(), key) != optional.end();
        if (!known) throw ValidationError(where + ": unknown field \"" + key + "\"");
    }
}

}  // namespace toolsel
