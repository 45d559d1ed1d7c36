#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toolsel {

/// Input data that violates a schema or an invariant. Messages carry the
/// file/line or record index of the offending value.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Environment problems: unreadable files, bad config, missing env vars.
class EnvironmentError : public std::runtime_error {
public:
    explicit EnvironmentError(const std::string& what) : std::runtime_error(what) {}
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, split on non-alphanumeric bytes, drop tokens shorter than 3.
std::vector<std::string> normalize_tokens(std::string_view text);

/// Lowercased, whitespace-collapsed copy used as the identity of a description.
std::string normalize_description(std::string_view text);

/// Description text up to and including the first sentence-ending period,
/// or the whole (trimmed) text when none is found.
std::string first_sentence(std::string_view text);

/// FNV-1a, fully specified so hashes are stable across platforms and builds.
std::uint64_t fnv1a64(std::string_view data);

/// 42533 -> "42,533"
std::string with_thousands(std::uint64_t n);

}  // namespace toolsel
