#include "toolsel/outparse.hpp"

#include <cctype>
#include <stdexcept>

#include "toolsel/common.hpp"

namespace toolsel {

namespace {

constexpr std::string_view kPrefix = "{api_name: [";
constexpr std::string_view kKey = "api_name";

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Exact-grammar match on an outer-trimmed message; returns the name on success.
std::optional<std::string> match_grammar(std::string_view s) {
    if (s.size() < kPrefix.size() + 2) return std::nullopt;
    if (s.substr(0, kPrefix.size()) != kPrefix) return std::nullopt;
    if (s.substr(s.size() - 2) != "]}") return std::nullopt;
    std::string_view inner = s.substr(kPrefix.size(), s.size() - kPrefix.size() - 2);
    for (char c : inner) {
        if (c == ']' || c == '}') return std::nullopt;
    }
    std::string name = trim(inner);
    if (name.empty()) return std::nullopt;
    return name;
}

/// The one bracket span of a failed message, usable as a name for scoring.
std::optional<std::string> salvage_name(std::string_view s) {
    std::size_t open = std::string_view::npos;
    std::size_t close = std::string_view::npos;
    std::size_t opens = 0;
    std::size_t closes = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '[') {
            ++opens;
            if (open == std::string_view::npos) open = i;
        } else if (s[i] == ']') {
            ++closes;
            if (close == std::string_view::npos) close = i;
        }
    }
    if (opens != 1 || closes != 1 || close < open) return std::nullopt;
    std::string name = trim(s.substr(open + 1, close - open - 1));
    if (name.empty() || name.find('}') != std::string::npos) return std::nullopt;
    return name;
}

ParseFailure classify(std::string_view s) {
    const bool has_open_brace = s.find('{') != std::string_view::npos;
    const bool has_close_brace = s.find('}') != std::string_view::npos;
    if (!has_open_brace || !has_close_brace) return ParseFailure::missing_brace;

    const std::size_t open_bracket = s.find('[');
    const std::size_t close_bracket = s.find(']');
    if (open_bracket == std::string_view::npos || close_bracket == std::string_view::npos) {
        return ParseFailure::missing_bracket;
    }

    const std::size_t key = s.find(kKey);
    const std::size_t colon = s.find(':');
    if (key == std::string_view::npos || colon == std::string_view::npos) {
        return ParseFailure::wrong_key;
    }

    const std::size_t open_brace = s.find('{');
    const std::size_t close_brace = s.rfind('}');
    // Canonical component order: { api_name : [ ... ] }
    const bool ordered = open_brace < key && key < colon && colon < open_bracket &&
                         open_bracket < close_bracket && close_bracket < close_brace;
    if (!ordered) return ParseFailure::reordered;

    // The key token must read exactly "api_name: " (missing colon or altered
    // spacing is a key-token defect, not a reorder).
    if (s.substr(key, kKey.size() + 2) != "api_name: ") return ParseFailure::wrong_key;

    std::string name = trim(s.substr(open_bracket + 1, close_bracket - open_bracket - 1));
    if (name.empty()) return ParseFailure::empty_name;
    return ParseFailure::extra_payload;
}

}  // namespace

std::string to_string(ParseFailure reason) {
    switch (reason) {
        case ParseFailure::missing_brace: return "missing_brace";
        case ParseFailure::missing_bracket: return "missing_bracket";
        case ParseFailure::wrong_key: return "wrong_key";
        case ParseFailure::reordered: return "reordered";
        case ParseFailure::extra_payload: return "extra_payload";
        case ParseFailure::empty_name: return "empty_name";
    }
    return "?";
}

ParsedPrediction parse_prediction(std::string_view raw) {
    std::string s = trim(raw);
    ParsedPrediction out;
    if (auto name = match_grammar(s)) {
        out.format_ok = true;
        out.api_name = std::move(*name);
        return out;
    }
    out.format_ok = false;
    out.failure_reason = classify(s);
    out.api_name = salvage_name(s);
    return out;
}

bool is_valid_api_name(std::string_view api_name) {
    if (api_name.empty()) return false;
    if (is_space(api_name.front()) || is_space(api_name.back())) return false;
    for (char c : api_name) {
        if (c == ']' || c == '}') return false;
    }
    return true;
}

std::string render_prediction(std::string_view api_name) {
    if (!is_valid_api_name(api_name)) {
        throw std::invalid_argument("api_name must be non-empty, free of ] and }, and not start "
                                    "or end with whitespace");
    }
    std::string out;
    out.reserve(kPrefix.size() + api_name.size() + 2);
    out.append(kPrefix);
    out.append(api_name);
    out.append("]}");
    return out;
}

}  // namespace toolsel
