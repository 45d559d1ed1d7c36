#include "toolsel/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "toolsel/common.hpp"
#include "toolsel/jsonl.hpp"

namespace toolsel {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kInstructionFields = {
    "schema_version", "id", "text", "attachments", "ambiguous", "gold", "origin_api",
};
const std::vector<std::string> kInstructionOptional = {"ambiguity_kind", "gold_single"};

std::string expect_string(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ValidationError(where + ": field \"" + key + "\" must be a string");
    return v.get<std::string>();
}

GoldSpec parse_gold(const json& gold, const std::string& where) {
    if (!gold.is_object()) throw ValidationError(where + ": field \"gold\" must be an object");
    const bool has_apis = gold.contains("apis");
    const bool has_group = gold.contains("group");
    if (has_apis == has_group) {
        throw ValidationError(where + ": gold needs exactly one of \"apis\" or \"group\"");
    }

    GoldSpec spec;
    if (has_apis) {
        require_fields(gold, {"apis"}, {}, where + " gold");
        const auto& apis = gold.at("apis");
        if (!apis.is_array() || apis.empty()) {
            throw ValidationError(where + ": gold.apis must be a non-empty array");
        }
        std::vector<std::string> names;
        for (const auto& a : apis) {
            if (!a.is_string() || a.get<std::string>().empty()) {
                throw ValidationError(where + ": gold.apis entries must be non-empty strings");
            }
            names.push_back(a.get<std::string>());
        }
        bool mentions_unknown =
            std::find(names.begin(), names.end(), kUnknownApi) != names.end();
        if (mentions_unknown && names.size() > 1) {
            throw ValidationError(where + ": \"" + std::string(kUnknownApi) +
                                  "\" cannot be mixed with other gold apis");
        }
        spec.value = std::move(names);
        return spec;
    }

    require_fields(gold, {"group"}, {}, where + " gold");
    const auto& group = gold.at("group");
    if (!group.is_object()) throw ValidationError(where + ": gold.group must be an object");
    require_fields(group, {"coarse", "fine", "specificity"}, {"strict_members"}, where + " gold.group");
    GroupRef ref;
    ref.group = {expect_string(group, "coarse", where), expect_string(group, "fine", where)};
    std::string spec_str = expect_string(group, "specificity", where);
    if (spec_str == "strict") {
        ref.specificity = Specificity::strict;
    } else if (spec_str == "broad") {
        ref.specificity = Specificity::broad;
    } else {
        throw ValidationError(where + ": gold.group.specificity must be \"strict\" or \"broad\"");
    }
    if (ref.specificity == Specificity::strict) {
        if (!group.contains("strict_members") || !group.at("strict_members").is_array() ||
            group.at("strict_members").empty()) {
            throw ValidationError(where + ": strict gold.group needs non-empty strict_members");
        }
        for (const auto& m : group.at("strict_members")) {
            if (!m.is_string() || m.get<std::string>().empty()) {
                throw ValidationError(where + ": strict_members entries must be non-empty strings");
            }
            ref.strict_members.push_back(m.get<std::string>());
        }
    } else if (group.contains("strict_members")) {
        throw ValidationError(where + ": strict_members only allowed with specificity \"strict\"");
    }
    spec.value = std::move(ref);
    return spec;
}

Instruction parse_instruction(const json& obj, const std::string& where) {
    require_fields(obj, kInstructionFields, kInstructionOptional, where);
    if (!obj.at("schema_version").is_number_integer() ||
        obj.at("schema_version").get<int>() != kInstructionSchemaVersion) {
        throw ValidationError(where + ": unsupported schema_version");
    }

    Instruction instr;
    instr.id = expect_string(obj, "id", where);
    if (instr.id.empty()) throw ValidationError(where + ": field \"id\" is empty");
    instr.text = expect_string(obj, "text", where);
    if (trim(instr.text).empty()) throw ValidationError(where + ": field \"text\" is empty");
    instr.origin_api = expect_string(obj, "origin_api", where);
    if (instr.origin_api.empty()) throw ValidationError(where + ": field \"origin_api\" is empty");

    const auto& atts = obj.at("attachments");
    if (!atts.is_array()) throw ValidationError(where + ": field \"attachments\" must be an array");
    if (atts.size() > 1) {
        throw ValidationError(where + ": at most one attachment per instruction");
    }
    for (const auto& a : atts) {
        if (!a.is_object()) throw ValidationError(where + ": attachments entries must be objects");
        require_fields(a, {"modality", "uri"}, {}, where + " attachment");
        auto modality = modality_from_string(expect_string(a, "modality", where));
        if (!modality || *modality == Modality::text) {
            throw ValidationError(where + ": attachment modality must be image, audio or video");
        }
        std::string uri = expect_string(a, "uri", where);
        if (uri.empty()) throw ValidationError(where + ": attachment uri is empty");
        instr.attachments.push_back({*modality, std::move(uri)});
    }

    const auto& ambiguous = obj.at("ambiguous");
    if (!ambiguous.is_boolean()) {
        throw ValidationError(where + ": field \"ambiguous\" must be a boolean");
    }
    instr.ambiguity.ambiguous = ambiguous.get<bool>();
    if (obj.contains("ambiguity_kind")) {
        if (!instr.ambiguity.ambiguous) {
            throw ValidationError(where + ": ambiguity_kind present on an unambiguous record");
        }
        const auto& kind = obj.at("ambiguity_kind");
        if (!kind.is_number_integer() || kind.get<int>() < 1 || kind.get<int>() > 5) {
            throw ValidationError(where + ": ambiguity_kind must be an integer in [1,5]");
        }
        instr.ambiguity.kind = static_cast<AmbiguityKind>(kind.get<int>());
    } else if (instr.ambiguity.ambiguous) {
        throw ValidationError(where + ": ambiguous record needs ambiguity_kind");
    }
    if (instr.attachments.empty() && instr.ambiguity.ambiguous) {
        throw ValidationError(where + ": a pure-text instruction cannot be ambiguous");
    }

    instr.gold = parse_gold(obj.at("gold"), where);
    return instr;
}

void check_against_registry(const Instruction& instr, const Registry& registry,
                            const std::string& where) {
    if (!registry.in_corpus(instr.origin_api)) {
        throw ValidationError(where + ": origin_api \"" + instr.origin_api +
                              "\" not in registry corpus");
    }
    resolve_gold(instr, registry);  // throws on unresolvable names
}

std::string instr_where(const std::filesystem::path& path, const JsonlRecord& rec) {
    return path.string() + ":" + std::to_string(rec.line) + " (record " +
           std::to_string(rec.index) + ")";
}

std::vector<Instruction> load_impl(const std::filesystem::path& path, const Registry* registry,
                                   std::vector<std::string>* diagnostics) {
    std::vector<Instruction> out;
    std::unordered_map<std::string, std::size_t> seen;  // id -> line
    for (const auto& rec : read_jsonl(path)) {
        const std::string where = instr_where(path, rec);
        try {
            Instruction instr = parse_instruction(rec.value, where);
            auto [it, inserted] = seen.emplace(instr.id, rec.line);
            if (!inserted) {
                throw ValidationError(path.string() + ": duplicate id \"" + instr.id +
                                      "\" at lines " + std::to_string(it->second) + " and " +
                                      std::to_string(rec.line));
            }
            if (registry != nullptr) check_against_registry(instr, *registry, where);
            out.push_back(std::move(instr));
        } catch (const ValidationError& e) {
            if (diagnostics == nullptr) throw;
            diagnostics->emplace_back(e.what());
        }
    }
    return out;
}

ordered_json instruction_to_json(const Instruction& instr) {
    ordered_json row;
    row["schema_version"] = kInstructionSchemaVersion;
    row["id"] = instr.id;
    row["text"] = instr.text;
    ordered_json atts = ordered_json::array();
    for (const auto& a : instr.attachments) {
        atts.push_back({{"modality", to_string(a.modality)}, {"uri", a.uri}});
    }
    row["attachments"] = std::move(atts);
    row["ambiguous"] = instr.ambiguity.ambiguous;
    if (instr.ambiguity.kind) row["ambiguity_kind"] = static_cast<int>(*instr.ambiguity.kind);
    ordered_json gold;
    if (instr.gold.is_explicit()) {
        gold["apis"] = std::get<std::vector<std::string>>(instr.gold.value);
    } else {
        const auto& ref = std::get<GroupRef>(instr.gold.value);
        ordered_json group;
        group["coarse"] = ref.group.first;
        group["fine"] = ref.group.second;
        group["specificity"] = ref.specificity == Specificity::strict ? "strict" : "broad";
        if (ref.specificity == Specificity::strict) group["strict_members"] = ref.strict_members;
        gold["group"] = std::move(group);
    }
    row["gold"] = std::move(gold);
    row["origin_api"] = instr.origin_api;
    return row;
}

/// Portable bounded draw; mt19937_64's output sequence is pinned by the
/// standard, so shuffles reproduce across platforms.
std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = gen();
    while (x >= limit) x = gen();
    return x % n;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& gen) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[bounded(gen, i)]);
    }
}

/// ceil(ratio*m) computed away from binary-float misrounding
/// (0.8*5 must give 4, not 5).
std::size_t train_quota(std::size_t m, double ratio) {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(m) - 1e-9));
}

}  // namespace

std::string to_string(Modality m) {
    switch (m) {
        case Modality::text: return "text";
        case Modality::image: return "image";
        case Modality::audio: return "audio";
        case Modality::video: return "video";
    }
    return "?";
}

std::optional<Modality> modality_from_string(std::string_view s) {
    if (s == "text") return Modality::text;
    if (s == "image") return Modality::image;
    if (s == "audio") return Modality::audio;
    if (s == "video") return Modality::video;
    return std::nullopt;
}

std::string to_string(AmbiguityKind kind) {
    switch (kind) {
        case AmbiguityKind::domains: return "domains";
        case AmbiguityKind::categories: return "categories";
        case AmbiguityKind::quality: return "quality";
        case AmbiguityKind::conditions: return "conditions";
        case AmbiguityKind::others: return "others";
    }
    return "?";
}

std::string to_string(SubsetAxis axis) {
    switch (axis) {
        case SubsetAxis::ambiguity_kind: return "ambiguity_kind";
        case SubsetAxis::with_without_ambiguity: return "with_without_ambiguity";
        case SubsetAxis::option_cardinality: return "option_cardinality";
        case SubsetAxis::modality: return "modality";
    }
    return "?";
}

std::vector<Instruction> load_instructions(const std::filesystem::path& path) {
    return load_impl(path, nullptr, nullptr);
}

std::vector<Instruction> load_instructions(const std::filesystem::path& path,
                                           const Registry& registry) {
    return load_impl(path, &registry, nullptr);
}

std::vector<Instruction> load_instructions_collect(const std::filesystem::path& path,
                                                   const Registry* registry,
                                                   std::vector<std::string>& diagnostics) {
    return load_impl(path, registry, &diagnostics);
}

void save_instructions(const std::filesystem::path& path,
                       const std::vector<Instruction>& instrs) {
    std::vector<json> rows;
    rows.reserve(instrs.size());
    for (const auto& instr : instrs) rows.push_back(instruction_to_json(instr));
    write_jsonl(path, rows);
}

std::vector<std::string> resolve_gold(const Instruction& instr, const Registry& registry) {
    std::vector<std::string> names;

    if (instr.gold.is_explicit()) {
        const auto& apis = std::get<std::vector<std::string>>(instr.gold.value);
        for (const auto& name : apis) {
            if (!registry.in_corpus(name)) {
                throw ValidationError("instruction \"" + instr.id + "\": gold api \"" + name +
                                      "\" not in corpus");
            }
        }
        if (apis.size() == 1 && apis.front() == kUnknownApi) return {kUnknownApi};
        if (std::find(apis.begin(), apis.end(), kUnknownApi) != apis.end()) {
            throw ValidationError("instruction \"" + instr.id + "\": \"" +
                                  std::string(kUnknownApi) + "\" cannot be mixed with other apis");
        }
        names = apis;
    } else {
        const auto& ref = std::get<GroupRef>(instr.gold.value);
        auto members = registry.group_members(ref.group);
        if (ref.specificity == Specificity::broad) {
            for (const auto* card : members) names.push_back(card->api_name);
        } else {
            std::set<std::string> member_names;
            for (const auto* card : members) member_names.insert(card->api_name);
            for (const auto& name : ref.strict_members) {
                if (member_names.count(name) == 0) {
                    throw ValidationError("instruction \"" + instr.id + "\": strict member \"" +
                                          name + "\" is not a kept card of group (\"" +
                                          ref.group.first + "\", \"" + ref.group.second + "\")");
                }
                names.push_back(name);
            }
        }
    }

    // Deduplicate and order by registry load order.
    std::sort(names.begin(), names.end(), [&](const std::string& a, const std::string& b) {
        return registry.load_index(a).value() < registry.load_index(b).value();
    });
    names.erase(std::unique(names.begin(), names.end()), names.end());
    if (names.empty()) {
        throw ValidationError("instruction \"" + instr.id + "\": gold resolves to nothing");
    }
    return names;
}

SplitResult split_dataset(const std::vector<Instruction>& instrs, double ratio,
                          std::uint64_t seed, const Registry& registry) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ValidationError("split ratio must be strictly between 0 and 1");
    }

    std::unordered_map<std::string, std::vector<std::string>> gold_by_id;
    for (const auto& instr : instrs) {
        if (!gold_by_id.emplace(instr.id, resolve_gold(instr, registry)).second) {
            throw ValidationError("duplicate instruction id \"" + instr.id + "\"");
        }
    }

    // Stratify by origin api, processed in sorted order for determinism.
    std::map<std::string, std::vector<const Instruction*>> by_origin;
    for (const auto& instr : instrs) by_origin[instr.origin_api].push_back(&instr);

    SplitResult result;
    result.seed = seed;
    result.ratio = ratio;
    std::vector<const Instruction*> test;

    for (auto& [origin, queries] : by_origin) {
        // Per-group generator so the outcome does not depend on how many
        // other apis exist in the file.
        std::mt19937_64 gen(seed ^ fnv1a64(origin));
        deterministic_shuffle(queries, gen);
        const std::size_t quota = train_quota(queries.size(), ratio);
        for (std::size_t i = 0; i < queries.size(); ++i) {
            if (i < quota) {
                for (const auto& api : gold_by_id.at(queries[i]->id)) {
                    result.train_expanded.push_back({*queries[i], api});
                }
            } else {
                test.push_back(queries[i]);
            }
        }
    }

    // Coverage repair: a test gold api never seen in training gets the
    // smallest-id test query naming it promoted into train.
    std::unordered_set<std::string> trained;
    for (const auto& pair : result.train_expanded) trained.insert(pair.gold_single);
    for (;;) {
        std::set<std::string> uncovered;
        for (const auto* instr : test) {
            for (const auto& api : gold_by_id.at(instr->id)) {
                if (trained.count(api) == 0) uncovered.insert(api);
            }
        }
        if (uncovered.empty()) break;
        const std::string& api = *uncovered.begin();
        const Instruction* promote = nullptr;
        for (const auto* instr : test) {
            const auto& gold = gold_by_id.at(instr->id);
            if (std::find(gold.begin(), gold.end(), api) == gold.end()) continue;
            if (promote == nullptr || instr->id < promote->id) promote = instr;
        }
        if (promote == nullptr) {
            throw ValidationError("api \"" + api + "\" cannot be covered by any train query");
        }
        for (const auto& gold_api : gold_by_id.at(promote->id)) {
            result.train_expanded.push_back({*promote, gold_api});
            trained.insert(gold_api);
        }
        result.promoted_ids.push_back(promote->id);
        std::erase(test, promote);
    }

    result.test.reserve(test.size());
    for (const auto* instr : test) result.test.push_back(*instr);
    return result;
}

void save_split(const SplitResult& split, const std::filesystem::path& train_path,
                const std::filesystem::path& test_path) {
    std::vector<json> train_rows;
    train_rows.reserve(split.train_expanded.size());
    for (const auto& pair : split.train_expanded) {
        ordered_json row = instruction_to_json(pair.instruction);
        row["gold_single"] = pair.gold_single;
        train_rows.push_back(std::move(row));
    }
    write_jsonl(train_path, train_rows);

    std::vector<json> test_rows;
    test_rows.reserve(split.test.size());
    for (const auto& instr : split.test) test_rows.push_back(instruction_to_json(instr));
    write_jsonl(test_path, test_rows);
}

std::vector<SubsetKey> all_subset_keys() {
    std::vector<SubsetKey> keys;
    for (int k = 1; k <= 5; ++k) {
        keys.push_back({SubsetAxis::ambiguity_kind, to_string(static_cast<AmbiguityKind>(k))});
    }
    keys.push_back({SubsetAxis::with_without_ambiguity, "with"});
    keys.push_back({SubsetAxis::with_without_ambiguity, "without_nontext"});
    keys.push_back({SubsetAxis::option_cardinality, "one_to_one"});
    keys.push_back({SubsetAxis::option_cardinality, "one_to_many"});
    for (auto m : {Modality::text, Modality::image, Modality::audio, Modality::video}) {
        keys.push_back({SubsetAxis::modality, to_string(m)});
    }
    return keys;
}

std::map<SubsetKey, std::vector<Instruction>> partition_subsets(
    const std::vector<Instruction>& test, const Registry& registry) {
    std::map<SubsetKey, std::vector<Instruction>> subsets;
    for (const auto& key : all_subset_keys()) subsets[key];  // every label exists, maybe empty

    for (const auto& instr : test) {
        if (instr.ambiguity.ambiguous) {
            subsets[{SubsetAxis::ambiguity_kind, to_string(*instr.ambiguity.kind)}].push_back(instr);
            subsets[{SubsetAxis::with_without_ambiguity, "with"}].push_back(instr);
        } else if (!instr.attachments.empty()) {
            subsets[{SubsetAxis::with_without_ambiguity, "without_nontext"}].push_back(instr);
        }
        const std::size_t options = resolve_gold(instr, registry).size();
        subsets[{SubsetAxis::option_cardinality, options == 1 ? "one_to_one" : "one_to_many"}]
            .push_back(instr);
        subsets[{SubsetAxis::modality, to_string(instr.modality())}].push_back(instr);
    }
    return subsets;
}

std::string build_generation_prompt(const ModelCard& card, bool ambiguous,
                                    const std::vector<std::string>& exemplars,
                                    const std::vector<std::string>& extra_prohibited) {
    if (exemplars.size() != 2) {
        throw ValidationError("build_generation_prompt needs exactly 2 exemplar blocks");
    }

    std::string prohibited = "API, tools, model";
    for (const auto& word : extra_prohibited) {
        prohibited += ", ";
        prohibited += word;
    }

    std::string out;
    out +=
        "### User: You are an NLP task expert. Given an API, you need to generate 20 different "
        "user queries that utilize the API function, adhering to the following input and output "
        "format for each query:\n";
    out += "Input:\n";
    out += "API Name: This is the name of the API Function.\n";
    out += "Description: This is a detailed description of the model.\n";
    out += "Prohibit Words: These are words that are prohibited from appearing in the output.\n";
    out += "\n";
    out += "Output:\n";
    for (int i = 1; i <= 5; ++i) {
        out += "Query" + std::to_string(i) +
               ": This is an instruction that can utilize the API function.\n";
    }
    out += "...\n";
    out += "Query20: This is an instruction that can utilize the API function.\n";
    out += "\n";
    out += "Below are some examples:\n";
    out += "Example 1:\n";
    out += exemplars[0];
    if (out.back() != '\n') out += '\n';
    out += "\n";
    out += "Example 2:\n";
    out += exemplars[1];
    if (out.back() != '\n') out += '\n';
    out += "\n";
    out += "Note that:\n";
    out += "1. When crafting queries, avoid including the API's name;\n";
    out += "2. Ensure that the queries are varied and diverse;\n";
    if (ambiguous) {
        out += "3. When processing an input, any words listed in the Prohibited Words must be "
               "strictly excluded from the response;\n";
        out += "4. The queries should not convey or imply multimodal information.\n";
    } else {
        out += "3. When processing an input, any words listed in the Prohibited Words must be "
               "strictly excluded from the response.\n";
    }
    out += "\n";
    out += "Now, let's start.\n";
    out += "Input:\n";
    out += "API Name: " + card.api_name + "\n";
    out += "Description: " + card.description + "\n";
    out += "Prohibit Words: \"" + prohibited + "\"\n";
    return out;
}

}  // namespace toolsel
