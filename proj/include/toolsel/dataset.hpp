#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "toolsel/registry.hpp"

namespace toolsel {

inline constexpr int kInstructionSchemaVersion = 1;

enum class Modality { text, image, audio, video };

std::string to_string(Modality m);
std::optional<Modality> modality_from_string(std::string_view s);

struct Attachment {
    Modality modality = Modality::image;  // never text
    std::string uri;

    bool operator==(const Attachment&) const = default;
};

/// The five causes of text ambiguity resolved by a non-text input.
enum class AmbiguityKind : int {
    domains = 1,
    categories = 2,
    quality = 3,
    conditions = 4,
    others = 5,
};

std::string to_string(AmbiguityKind kind);

struct AmbiguityTag {
    bool ambiguous = false;
    std::optional<AmbiguityKind> kind;  // present iff ambiguous

    bool operator==(const AmbiguityTag&) const = default;
};

enum class Specificity { strict, broad };

struct GroupRef {
    FunctionalityGroup group;
    Specificity specificity = Specificity::broad;
    std::vector<std::string> strict_members;  // present iff strict

    bool operator==(const GroupRef&) const = default;
};

/// Gold answers: either explicit api names or a functionality-group reference.
struct GoldSpec {
    std::variant<std::vector<std::string>, GroupRef> value;

    bool is_explicit() const { return value.index() == 0; }
    bool operator==(const GoldSpec&) const = default;
};

struct Instruction {
    std::string id;
    std::string text;
    std::vector<Attachment> attachments;  // length 0 or 1
    AmbiguityTag ambiguity;
    GoldSpec gold;
    std::string origin_api;

    Modality modality() const {
        return attachments.empty() ? Modality::text : attachments.front().modality;
    }
    bool operator==(const Instruction&) const = default;
};

/// Structural load: schema, invariants, id uniqueness. Order preserved.
std::vector<Instruction> load_instructions(const std::filesystem::path& path);

/// Also checks every gold name and origin_api against the registry corpus.
std::vector<Instruction> load_instructions(const std::filesystem::path& path,
                                           const Registry& registry);

/// Collect-all variant for validation commands.
std::vector<Instruction> load_instructions_collect(const std::filesystem::path& path,
                                                   const Registry* registry,
                                                   std::vector<std::string>& diagnostics);

void save_instructions(const std::filesystem::path& path, const std::vector<Instruction>& instrs);

/// Resolved gold list y_i: explicit names deduplicated, group references
/// expanded (broad = every kept card in the group, strict = the annotated
/// subset). Order follows registry load order; "Unknown" only appears alone.
std::vector<std::string> resolve_gold(const Instruction& instr, const Registry& registry);

struct TrainPair {
    Instruction instruction;
    std::string gold_single;

    bool operator==(const TrainPair&) const = default;
};

struct SplitResult {
    std::vector<TrainPair> train_expanded;
    std::vector<Instruction> test;
    std::uint64_t seed = 0;
    double ratio = 0.0;
    /// Test queries promoted into train so every test gold api is trained on.
    std::vector<std::string> promoted_ids;
};

/// Per-origin-api seeded shuffle and ceil(ratio*m)/rest split, one-to-many
/// train queries expanded into one pair per gold api, then coverage repair by
/// promoting the smallest-id test query per uncovered api. Deterministic for
/// fixed (instrs, ratio, seed).
SplitResult split_dataset(const std::vector<Instruction>& instrs, double ratio,
                          std::uint64_t seed, const Registry& registry);

void save_split(const SplitResult& split, const std::filesystem::path& train_path,
                const std::filesystem::path& test_path);

enum class SubsetAxis { ambiguity_kind, with_without_ambiguity, option_cardinality, modality };

std::string to_string(SubsetAxis axis);

struct SubsetKey {
    SubsetAxis axis;
    std::string value;

    auto operator<=>(const SubsetKey&) const = default;
};

/// Every label of every axis, in the canonical reporting order.
std::vector<SubsetKey> all_subset_keys();

/// Buckets the test set along the four axes. Within one axis the buckets are
/// disjoint; modality and option_cardinality cover the whole set, the
/// ambiguity axes exclude pure-text instructions as documented.
std::map<SubsetKey, std::vector<Instruction>> partition_subsets(
    const std::vector<Instruction>& test, const Registry& registry);

/// Query-generation prompt for one API, filled into the fixed template.
/// `exemplars` are two complete Input/Output sample blocks chosen by the
/// caller; `extra_prohibited` extends the default "API, tools, model" slot.
/// The ambiguous variant appends the rule that queries must not convey or
/// imply multimodal information.
std::string build_generation_prompt(const ModelCard& card, bool ambiguous,
                                    const std::vector<std::string>& exemplars,
                                    const std::vector<std::string>& extra_prohibited = {});

}  // namespace toolsel
