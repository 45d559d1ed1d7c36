#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace toolsel {

enum class ParseFailure {
    missing_brace,
    missing_bracket,
    wrong_key,
    reordered,
    extra_payload,
    empty_name,
};

std::string to_string(ParseFailure reason);

struct ParsedPrediction {
    bool format_ok = false;
    /// Present when format_ok, or when a salvageable bracket span was found.
    std::optional<std::string> api_name;
    std::optional<ParseFailure> failure_reason;

    bool has_name() const { return api_name.has_value(); }
    bool operator==(const ParsedPrediction&) const = default;
};

/// Accepts exactly `{api_name: [NAME]}` (outer whitespace and whitespace
/// around NAME tolerated; NAME is any non-empty text free of `]` and `}`).
/// Anything else fails with the most specific reason. A failed message with a
/// unique bracket span still yields a salvaged api_name for scoring.
/// Total over strings; never throws.
ParsedPrediction parse_prediction(std::string_view raw);

/// Inverse of parse_prediction on valid names. Throws std::invalid_argument
/// for names that are empty, contain `]`/`}`, or carry edge whitespace.
std::string render_prediction(std::string_view api_name);

bool is_valid_api_name(std::string_view api_name);

}  // namespace toolsel
