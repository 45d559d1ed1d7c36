#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toolsel/dataset.hpp"
#include "toolsel/registry.hpp"

namespace toolsel {

enum class PromptMode { multimodal, placeholder, closed_context };

std::string to_string(PromptMode mode);
std::optional<PromptMode> prompt_mode_from_string(std::string_view s);

enum class BackendKind { replay, keyword_baseline, remote };

std::string to_string(BackendKind kind);

struct BackendConfig {
    BackendKind kind = BackendKind::replay;
    std::string endpoint;       // remote
    std::string model;          // remote
    std::string auth_env;       // remote; name of the bearer-token env var
    double timeout_s = 30.0;    // remote
    int max_retries = 2;        // remote; attempts = 1 + max_retries
    int max_inflight = 4;
    std::optional<double> temperature;  // remote; defaulted from K when unset
    std::filesystem::path fixture_path;  // replay

    /// Stable hash of the configuration (secret values excluded).
    std::string config_hash() const;
};

struct AssembledPrompt {
    std::string text;
    std::vector<std::string> manifest;  // attachment uris, in order
};

inline constexpr const char* kFormatDirective =
    "Answer with exactly one API name in the format: {api_name: [Recommended API]}";

/// Pure prompt construction. The prompt always ends with the format
/// directive. placeholder mode swaps the attachment for a literal
/// "<Image>"/"<Audio>"/"<Video>" token and drops it from the manifest;
/// closed_context prepends one "name — first sentence" line per corpus card.
AssembledPrompt assemble_prompt(const Instruction& instr, PromptMode mode,
                                const Registry& registry);

struct SelectRequest {
    std::string instruction_id;
    int sample_index = 1;  // 1-based
    std::string prompt;
    std::vector<std::string> manifest;
    double temperature = 0.0;  // remote only
};

struct SelectOutcome {
    std::string raw;
    std::int64_t latency_ms = 0;
    std::optional<std::string> error;  // set on a record-level failure
};

/// A source of raw selection responses. Implementations must either be safe
/// for concurrent select() calls or declare max_inflight 1 in their config.
class SelectorBackend {
public:
    virtual ~SelectorBackend() = default;
    virtual BackendKind kind() const = 0;
    virtual SelectOutcome select(const SelectRequest& request) = 0;
};

/// Replays stored responses keyed by (instruction_id, sample_index); a miss
/// throws and aborts the run.
std::unique_ptr<SelectorBackend> make_replay_backend(const std::filesystem::path& fixture_path);

/// Token-overlap baseline over the registry corpus; output always parses.
std::unique_ptr<SelectorBackend> make_keyword_baseline_backend(const Registry& registry);

/// Chat-completions HTTP client with bounded retries and bearer auth from the
/// configured env var. Missing env var is a startup error; exhausted retries
/// are record-level errors.
std::unique_ptr<SelectorBackend> make_remote_backend(const BackendConfig& config);

std::unique_ptr<SelectorBackend> make_backend(const BackendConfig& config,
                                              const Registry& registry);

struct PredictionRecord {
    std::string instruction_id;
    int sample_index = 1;
    std::string raw;
    std::int64_t latency_ms = 0;
    BackendKind backend = BackendKind::replay;
    std::optional<std::string> error;

    bool ok() const { return !error.has_value(); }
};

struct RunOptions {
    int max_inflight = 1;
    double failure_threshold = 0.05;
    std::uint64_t seed = 0;
};

struct RunResult {
    std::vector<PredictionRecord> records;  // ordered by (instruction_id, sample_index)
    nlohmann::ordered_json manifest;
    double failure_rate = 0.0;
    bool failed = false;  // failure_rate above threshold
};

/// K repeated selections per instruction, issued with up to max_inflight
/// concurrent backend calls. Output order and content are independent of the
/// worker count; error outcomes become marked records.
RunResult run_eval(SelectorBackend& backend, const std::vector<Instruction>& instructions,
                   int k, PromptMode mode, const Registry& registry,
                   const BackendConfig& config, const RunOptions& options);

void save_records(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> load_records(const std::filesystem::path& path);

}  // namespace toolsel
