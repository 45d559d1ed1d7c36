#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace toolsel {

inline constexpr const char* kUnknownApi = "Unknown";
inline constexpr int kCardSchemaVersion = 1;

enum class CardFlag { nsfw_risk, restrictive_license, low_quality };

std::string to_string(CardFlag flag);
std::optional<CardFlag> card_flag_from_string(std::string_view s);

struct CardParameter {
    std::string name;
    std::string description;

    bool operator==(const CardParameter&) const = default;
};

/// Documentation record for one selectable API.
struct ModelCard {
    std::string api_name;
    std::string domain;
    std::string api_call;
    std::vector<CardParameter> parameters;
    std::string example_code;
    std::string description;
    std::string coarse_functionality;
    std::string fine_functionality;
    std::set<std::string> input_modalities;  // always contains "text"
    std::uint64_t downloads = 0;
    std::set<CardFlag> flags;

    bool has_flag(CardFlag f) const { return flags.count(f) > 0; }
    bool operator==(const ModelCard&) const = default;
};

/// (coarse task, fine subtask) key under which the per-functionality cap applies.
using FunctionalityGroup = std::pair<std::string, std::string>;

FunctionalityGroup functionality_group(const ModelCard& card);

/// Two-level task -> subtask tree; every subtask lists exemplar api names.
class Taxonomy {
public:
    static Taxonomy load(const std::filesystem::path& path);

    /// Builds from {task: {subtask: [exemplars]}}; validates label uniqueness
    /// per level and non-empty exemplar lists.
    static Taxonomy parse(const std::string& json_text, const std::string& where);

    bool contains(const std::string& task, const std::string& subtask) const;
    const std::map<std::string, std::map<std::string, std::vector<std::string>>>& nodes() const {
        return nodes_;
    }

private:
    std::map<std::string, std::map<std::string, std::vector<std::string>>> nodes_;
    std::unordered_map<std::string, std::string> subtask_parent_;
};

struct FilterPolicy {
    std::size_t max_per_functionality = 5;
    std::set<CardFlag> reject_flags = {CardFlag::nsfw_risk, CardFlag::restrictive_license,
                                       CardFlag::low_quality};
    bool dedupe_identical = true;
};

enum class RejectReason {
    low_quality_card,
    nsfw_risk,
    license_restriction,
    identical_duplicate,
    functionality_overflow,
};

std::string to_string(RejectReason reason);

struct FilterOutcome {
    std::vector<ModelCard> kept;
    std::vector<std::pair<ModelCard, RejectReason>> rejected;
};

/// Loads cards from the line-delimited card file, preserving file order.
/// Every card is checked against the taxonomy and the ModelCard invariants;
/// a card whose description, example code or call signature is empty gets the
/// low_quality flag added on ingest.
std::vector<ModelCard> load_cards(const std::filesystem::path& path, const Taxonomy& taxonomy);

/// Collect-all variant used by validation: structural failures are appended
/// to `diagnostics` instead of thrown; valid cards are still returned.
std::vector<ModelCard> load_cards_collect(const std::filesystem::path& path,
                                          const Taxonomy& taxonomy,
                                          std::vector<std::string>& diagnostics);

/// Writes cards in the same line-delimited format load_cards reads
/// (load_cards of save_cards output is identity).
void save_cards(const std::filesystem::path& path, const std::vector<ModelCard>& cards);

/// Applies the rejection rules in precedence order: low-quality flag, NSFW
/// flag, license flag, identical duplicate within a functionality group, then
/// the per-group cap keeping the most-downloaded members. Download ties break
/// by api_name ascending. Input order is preserved in both output lists.
FilterOutcome apply_filters(const std::vector<ModelCard>& cards, const FilterPolicy& policy);

struct ModalityCensus {
    std::size_t text_only = 0;
    std::size_t image = 0;
    std::size_t audio = 0;
    std::size_t video = 0;
};

/// Immutable index over the kept cards plus the "Unknown" sentinel.
class Registry {
public:
    static Registry build(std::vector<ModelCard> kept, Taxonomy taxonomy);

    const ModelCard* find(const std::string& api_name) const;
    bool in_corpus(const std::string& name) const { return corpus_.count(name) > 0; }

    /// Position of a card in load order; Unknown and absent names have none.
    std::optional<std::size_t> load_index(const std::string& api_name) const;

    const std::vector<ModelCard>& cards() const { return cards_; }
    const std::set<std::string>& corpus() const { return corpus_; }
    const Taxonomy& taxonomy() const { return taxonomy_; }
    std::size_t size() const { return cards_.size(); }

    std::vector<const ModelCard*> group_members(const FunctionalityGroup& group) const;
    ModalityCensus modality_census() const;

private:
    std::vector<ModelCard> cards_;
    std::unordered_map<std::string, std::size_t> index_;
    std::set<std::string> corpus_;
    Taxonomy taxonomy_;
};

}  // namespace toolsel
