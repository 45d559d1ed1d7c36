#include "toolsel/selector.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "toolsel/common.hpp"
#include "toolsel/jsonl.hpp"
#include "toolsel/outparse.hpp"

namespace toolsel {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string iso_utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string placeholder_token(Modality m) {
    switch (m) {
        case Modality::image: return "<Image>";
        case Modality::audio: return "<Audio>";
        case Modality::video: return "<Video>";
        case Modality::text: break;
    }
    return "";
}

class ReplayBackend final : public SelectorBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& fixture_path) {
        for (const auto& rec : read_jsonl(fixture_path)) {
            const std::string where =
                fixture_path.string() + ":" + std::to_string(rec.line);
            require_fields(rec.value, {"instruction_id", "sample_index", "raw"}, {}, where);
            if (!rec.value.at("instruction_id").is_string() ||
                !rec.value.at("sample_index").is_number_integer() ||
                !rec.value.at("raw").is_string()) {
                throw ValidationError(where + ": bad replay record types");
            }
            Key key{rec.value.at("instruction_id").get<std::string>(),
                    rec.value.at("sample_index").get<int>()};
            if (!fixture_.emplace(key, rec.value.at("raw").get<std::string>()).second) {
                throw ValidationError(where + ": duplicate replay key");
            }
        }
    }

    BackendKind kind() const override { return BackendKind::replay; }

    SelectOutcome select(const SelectRequest& request) override {
        auto it = fixture_.find({request.instruction_id, request.sample_index});
        if (it == fixture_.end()) {
            throw ValidationError("replay fixture has no entry for (" + request.instruction_id +
                                  ", " + std::to_string(request.sample_index) + ")");
        }
        return {it->second, 0, std::nullopt};
    }

private:
    using Key = std::pair<std::string, int>;
    std::map<Key, std::string> fixture_;
};

class KeywordBaselineBackend final : public SelectorBackend {
public:
    explicit KeywordBaselineBackend(const Registry& registry) {
        for (const auto& card : registry.cards()) {
            auto tokens = normalize_tokens(card.description);
            candidates_.push_back({card.api_name, {tokens.begin(), tokens.end()}});
        }
        candidates_.push_back({kUnknownApi, {}});
    }

    BackendKind kind() const override { return BackendKind::keyword_baseline; }

    SelectOutcome select(const SelectRequest& request) override {
        auto prompt_tokens = normalize_tokens(request.prompt);
        std::set<std::string> prompt_set(prompt_tokens.begin(), prompt_tokens.end());

        const std::string* best_name = nullptr;
        std::size_t best_overlap = 0;
        for (const auto& cand : candidates_) {
            std::size_t overlap = 0;
            for (const auto& tok : prompt_set) overlap += cand.tokens.count(tok);
            if (best_name == nullptr || overlap > best_overlap ||
                (overlap == best_overlap && cand.name < *best_name)) {
                best_name = &cand.name;
                best_overlap = overlap;
            }
        }
        return {render_prediction(*best_name), 0, std::nullopt};
    }

private:
    struct Candidate {
        std::string name;
        std::set<std::string> tokens;
    };
    std::vector<Candidate> candidates_;
};

struct EndpointParts {
    std::string base;  // scheme://host[:port]
    std::string path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw EnvironmentError("endpoint must look like http://host:port/path, got \"" +
                               endpoint + "\"");
    }
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

class RemoteBackend final : public SelectorBackend {
public:
    explicit RemoteBackend(const BackendConfig& config)
        : config_(config), endpoint_(split_endpoint(config.endpoint)) {
        if (!config_.auth_env.empty()) {
            const char* token = std::getenv(config_.auth_env.c_str());
            if (token == nullptr) {
                throw EnvironmentError("auth env var \"" + config_.auth_env + "\" is not set");
            }
            bearer_ = token;
        }
    }

    BackendKind kind() const override { return BackendKind::remote; }

    SelectOutcome select(const SelectRequest& request) override {
        ordered_json body;
        body["model"] = config_.model;
        body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
        body["temperature"] = request.temperature;
        if (!request.manifest.empty()) body["attachments"] = request.manifest;
        const std::string payload = body.dump();

        const auto start = std::chrono::steady_clock::now();
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            httplib::Client client(endpoint_.base);
            const auto sec = static_cast<time_t>(config_.timeout_s);
            const auto usec = static_cast<time_t>((config_.timeout_s - static_cast<double>(sec)) * 1e6);
            client.set_connection_timeout(sec, usec);
            client.set_read_timeout(sec, usec);
            client.set_write_timeout(sec, usec);
            httplib::Headers headers;
            if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);

            auto res = client.Post(endpoint_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
                reply["choices"].empty() || !reply["choices"][0].contains("message") ||
                !reply["choices"][0]["message"].contains("content") ||
                !reply["choices"][0]["message"]["content"].is_string()) {
                last_error = "malformed response body";
                continue;
            }
            auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - start)
                               .count();
            return {reply["choices"][0]["message"]["content"].get<std::string>(), elapsed,
                    std::nullopt};
        }
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        return {"", elapsed,
                last_error + " after " + std::to_string(config_.max_retries + 1) + " attempts"};
    }

private:
    BackendConfig config_;
    EndpointParts endpoint_;
    std::string bearer_;
};

}  // namespace

std::string to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::multimodal: return "multimodal";
        case PromptMode::placeholder: return "placeholder";
        case PromptMode::closed_context: return "closed-context";
    }
    return "?";
}

std::optional<PromptMode> prompt_mode_from_string(std::string_view s) {
    if (s == "multimodal") return PromptMode::multimodal;
    if (s == "placeholder") return PromptMode::placeholder;
    if (s == "closed-context" || s == "closed_context") return PromptMode::closed_context;
    return std::nullopt;
}

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::replay: return "replay";
        case BackendKind::keyword_baseline: return "baseline";
        case BackendKind::remote: return "remote";
    }
    return "?";
}

std::string BackendConfig::config_hash() const {
    ordered_json doc;
    doc["kind"] = to_string(kind);
    doc["endpoint"] = endpoint;
    doc["model"] = model;
    doc["auth_env"] = auth_env;  // the variable name, never its value
    doc["timeout_s"] = timeout_s;
    doc["max_retries"] = max_retries;
    doc["max_inflight"] = max_inflight;
    if (temperature) doc["temperature"] = *temperature;
    doc["fixture"] = fixture_path.string();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(doc.dump())));
    return buf;
}

AssembledPrompt assemble_prompt(const Instruction& instr, PromptMode mode,
                                const Registry& registry) {
    AssembledPrompt out;
    std::string text;

    if (mode == PromptMode::closed_context) {
        for (const auto& card : registry.cards()) {
            text += card.api_name;
            text += " — ";
            text += first_sentence(card.description);
            text += '\n';
        }
    }

    text += instr.text;
    text += '\n';

    if (!instr.attachments.empty()) {
        if (mode == PromptMode::placeholder) {
            text += placeholder_token(instr.attachments.front().modality);
            text += '\n';
        } else {
            out.manifest.push_back(instr.attachments.front().uri);
        }
    }

    text += kFormatDirective;
    out.text = std::move(text);
    return out;
}

std::unique_ptr<SelectorBackend> make_replay_backend(const std::filesystem::path& fixture_path) {
    return std::make_unique<ReplayBackend>(fixture_path);
}

std::unique_ptr<SelectorBackend> make_keyword_baseline_backend(const Registry& registry) {
    return std::make_unique<KeywordBaselineBackend>(registry);
}

std::unique_ptr<SelectorBackend> make_remote_backend(const BackendConfig& config) {
    return std::make_unique<RemoteBackend>(config);
}

std::unique_ptr<SelectorBackend> make_backend(const BackendConfig& config,
                                              const Registry& registry) {
    switch (config.kind) {
        case BackendKind::replay: return make_replay_backend(config.fixture_path);
        case BackendKind::keyword_baseline: return make_keyword_baseline_backend(registry);
        case BackendKind::remote: return make_remote_backend(config);
    }
    throw EnvironmentError("unknown backend kind");
}

RunResult run_eval(SelectorBackend& backend, const std::vector<Instruction>& instructions,
                   int k, PromptMode mode, const Registry& registry,
                   const BackendConfig& config, const RunOptions& options) {
    if (k < 1) throw ValidationError("K must be >= 1");
    if (options.max_inflight < 1) throw ValidationError("max_inflight must be >= 1");
    {
        std::set<std::string> ids;
        for (const auto& instr : instructions) {
            if (!ids.insert(instr.id).second) {
                throw ValidationError("duplicate instruction id \"" + instr.id + "\" in eval set");
            }
        }
    }

    const std::string started_at = iso_utc_now();
    const double temperature = config.temperature.value_or(k > 1 ? 0.7 : 0.0);

    struct Task {
        const Instruction* instr;
        int sample_index;
    };
    std::vector<Task> tasks;
    tasks.reserve(instructions.size() * static_cast<std::size_t>(k));
    std::vector<AssembledPrompt> prompts;
    prompts.reserve(instructions.size());
    for (const auto& instr : instructions) prompts.push_back(assemble_prompt(instr, mode, registry));
    for (std::size_t i = 0; i < instructions.size(); ++i) {
        for (int s = 1; s <= k; ++s) tasks.push_back({&instructions[i], s});
    }

    std::vector<PredictionRecord> records(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr abort_error;
    std::mutex abort_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            {
                std::lock_guard<std::mutex> lock(abort_mutex);
                if (abort_error) return;
            }
            const Task& task = tasks[t];
            const std::size_t instr_pos = t / static_cast<std::size_t>(k);
            SelectRequest request{task.instr->id, task.sample_index, prompts[instr_pos].text,
                                  prompts[instr_pos].manifest, temperature};
            PredictionRecord rec;
            rec.instruction_id = task.instr->id;
            rec.sample_index = task.sample_index;
            rec.backend = backend.kind();
            try {
                SelectOutcome outcome = backend.select(request);
                rec.raw = std::move(outcome.raw);
                rec.latency_ms = outcome.latency_ms;
                rec.error = std::move(outcome.error);
            } catch (...) {
                std::lock_guard<std::mutex> lock(abort_mutex);
                if (!abort_error) abort_error = std::current_exception();
                return;
            }
            records[t] = std::move(rec);
        }
    };

    const std::size_t worker_count =
        std::min<std::size_t>(static_cast<std::size_t>(options.max_inflight), std::max<std::size_t>(tasks.size(), 1));
    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (std::size_t i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (abort_error) std::rethrow_exception(abort_error);

    std::sort(records.begin(), records.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
        if (a.instruction_id != b.instruction_id) return a.instruction_id < b.instruction_id;
        return a.sample_index < b.sample_index;
    });

    RunResult result;
    std::size_t errors = 0;
    for (const auto& rec : records) errors += rec.ok() ? 0 : 1;
    result.failure_rate = records.empty() ? 0.0 : static_cast<double>(errors) / static_cast<double>(records.size());
    result.failed = result.failure_rate > options.failure_threshold;

    ordered_json manifest;
    manifest["schema_version"] = 1;
    manifest["backend"] = to_string(backend.kind());
    manifest["config_hash"] = config.config_hash();
    manifest["mode"] = to_string(mode);
    manifest["k"] = k;
    manifest["seed"] = options.seed;
    manifest["max_inflight"] = options.max_inflight;
    manifest["failure_threshold"] = options.failure_threshold;
    manifest["records"] = records.size();
    manifest["errors"] = errors;
    manifest["failed"] = result.failed;
    manifest["started_at"] = started_at;
    manifest["finished_at"] = iso_utc_now();
    result.manifest = std::move(manifest);
    result.records = std::move(records);
    return result;
}

void save_records(const std::filesystem::path& path,
                  const std::vector<PredictionRecord>& records) {
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& rec : records) {
        ordered_json row;
        row["schema_version"] = 1;
        row["instruction_id"] = rec.instruction_id;
        row["sample_index"] = rec.sample_index;
        row["raw"] = rec.raw;
        row["latency_ms"] = rec.latency_ms;
        row["backend"] = to_string(rec.backend);
        if (rec.error) row["error"] = *rec.error;
        rows.push_back(std::move(row));
    }
    write_jsonl(path, rows);
}

std::vector<PredictionRecord> load_records(const std::filesystem::path& path) {
    std::vector<PredictionRecord> records;
    for (const auto& rec : read_jsonl(path)) {
        const std::string where = path.string() + ":" + std::to_string(rec.line);
        require_fields(rec.value,
                       {"schema_version", "instruction_id", "sample_index", "raw", "latency_ms",
                        "backend"},
                       {"error"}, where);
        PredictionRecord out;
        out.instruction_id = rec.value.at("instruction_id").get<std::string>();
        out.sample_index = rec.value.at("sample_index").get<int>();
        out.raw = rec.value.at("raw").get<std::string>();
        out.latency_ms = rec.value.at("latency_ms").get<std::int64_t>();
        const std::string kind = rec.value.at("backend").get<std::string>();
        if (kind == "replay") {
            out.backend = BackendKind::replay;
        } else if (kind == "baseline") {
            out.backend = BackendKind::keyword_baseline;
        } else if (kind == "remote") {
            out.backend = BackendKind::remote;
        } else {
            throw ValidationError(where + ": unknown backend kind \"" + kind + "\"");
        }
        if (rec.value.contains("error")) out.error = rec.value.at("error").get<std::string>();
        records.push_back(std::move(out));
    }
    return records;
}

}  // namespace toolsel
