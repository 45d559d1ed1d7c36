#include "toolsel/registry.hpp"

#include <algorithm>

#include <json.hpp>

#include "toolsel/common.hpp"
#include "toolsel/jsonl.hpp"

namespace toolsel {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kCardFields = {
    "schema_version",  "api_name",    "domain",
    "api_call",        "parameters",  "example_code",
    "description",     "coarse_functionality", "fine_functionality",
    "input_modalities", "downloads",  "flags",
};

const std::set<std::string> kModalities = {"text", "image", "audio", "video"};

std::string expect_string(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ValidationError(where + ": field \"" + key + "\" must be a string");
    return v.get<std::string>();
}

ModelCard parse_card(const json& obj, const std::string& where) {
    require_fields(obj, kCardFields, {}, where);
    if (!obj.at("schema_version").is_number_integer() ||
        obj.at("schema_version").get<int>() != kCardSchemaVersion) {
        throw ValidationError(where + ": unsupported schema_version");
    }

    ModelCard card;
    card.api_name = expect_string(obj, "api_name", where);
    if (card.api_name.empty()) throw ValidationError(where + ": field \"api_name\" is empty");
    card.domain = expect_string(obj, "domain", where);
    card.api_call = expect_string(obj, "api_call", where);
    card.example_code = expect_string(obj, "example_code", where);
    card.description = expect_string(obj, "description", where);
    card.coarse_functionality = expect_string(obj, "coarse_functionality", where);
    card.fine_functionality = expect_string(obj, "fine_functionality", where);

    const auto& params = obj.at("parameters");
    if (!params.is_array()) throw ValidationError(where + ": field \"parameters\" must be an array");
    for (const auto& p : params) {
        if (!p.is_object()) throw ValidationError(where + ": field \"parameters\" entries must be objects");
        require_fields(p, {"name", "description"}, {}, where + " parameters");
        card.parameters.push_back(
            {expect_string(p, "name", where), expect_string(p, "description", where)});
    }

    const auto& mods = obj.at("input_modalities");
    if (!mods.is_array()) throw ValidationError(where + ": field \"input_modalities\" must be an array");
    for (const auto& m : mods) {
        std::string name = m.is_string() ? m.get<std::string>() : "";
        if (kModalities.count(name) == 0) {
            throw ValidationError(where + ": field \"input_modalities\" has invalid entry");
        }
        card.input_modalities.insert(name);
    }
    if (card.input_modalities.count("text") == 0) {
        throw ValidationError(where + ": field \"input_modalities\" must contain \"text\"");
    }

    const auto& downloads = obj.at("downloads");
    if (!downloads.is_number_unsigned() && !(downloads.is_number_integer() && downloads.get<std::int64_t>() >= 0)) {
        throw ValidationError(where + ": field \"downloads\" must be a non-negative integer");
    }
    card.downloads = downloads.get<std::uint64_t>();

    const auto& flags = obj.at("flags");
    if (!flags.is_array()) throw ValidationError(where + ": field \"flags\" must be an array");
    for (const auto& f : flags) {
        auto flag = card_flag_from_string(f.is_string() ? f.get<std::string>() : "");
        if (!flag) throw ValidationError(where + ": field \"flags\" has unknown flag");
        card.flags.insert(*flag);
    }

    // Mechanizable low-quality proxy: a card that lacks a description, example
    // code or call signature is flagged on ingest.
    if (trim(card.description).empty() || trim(card.example_code).empty() ||
        trim(card.api_call).empty()) {
        card.flags.insert(CardFlag::low_quality);
    }
    return card;
}

void check_taxonomy_pair(const ModelCard& card, const Taxonomy& taxonomy, const std::string& where) {
    if (!taxonomy.contains(card.coarse_functionality, card.fine_functionality)) {
        throw ValidationError(where + ": functionality pair (\"" + card.coarse_functionality +
                              "\", \"" + card.fine_functionality + "\") not in taxonomy");
    }
}

std::string card_where(const std::filesystem::path& path, const JsonlRecord& rec) {
    return path.string() + ":" + std::to_string(rec.line) + " (record " +
           std::to_string(rec.index) + ")";
}

}  // namespace

std::string to_string(CardFlag flag) {
    switch (flag) {
        case CardFlag::nsfw_risk: return "nsfw_risk";
        case CardFlag::restrictive_license: return "restrictive_license";
        case CardFlag::low_quality: return "low_quality";
    }
    return "?";
}

std::optional<CardFlag> card_flag_from_string(std::string_view s) {
    if (s == "nsfw_risk") return CardFlag::nsfw_risk;
    if (s == "restrictive_license") return CardFlag::restrictive_license;
    if (s == "low_quality") return CardFlag::low_quality;
    return std::nullopt;
}

std::string to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::low_quality_card: return "low_quality_card";
        case RejectReason::nsfw_risk: return "nsfw_risk";
        case RejectReason::license_restriction: return "license_restriction";
        case RejectReason::identical_duplicate: return "identical_duplicate";
        case RejectReason::functionality_overflow: return "functionality_overflow";
    }
    return "?";
}

FunctionalityGroup functionality_group(const ModelCard& card) {
    return {card.coarse_functionality, card.fine_functionality};
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

Taxonomy Taxonomy::parse(const std::string& json_text, const std::string& where) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw ValidationError(where + ": taxonomy must be a JSON object");
    }
    Taxonomy tax;
    for (const auto& task : doc.items()) {
        if (!task.value().is_object()) {
            throw ValidationError(where + ": task \"" + task.key() + "\" must map to an object");
        }
        auto& subtasks = tax.nodes_[task.key()];
        for (const auto& sub : task.value().items()) {
            auto [it, inserted] = tax.subtask_parent_.emplace(sub.key(), task.key());
            if (!inserted) {
                throw ValidationError(where + ": subtask \"" + sub.key() +
                                      "\" appears under \"" + it->second + "\" and \"" +
                                      task.key() + "\"");
            }
            if (!sub.value().is_array() || sub.value().empty()) {
                throw ValidationError(where + ": subtask \"" + sub.key() +
                                      "\" needs a non-empty exemplar list");
            }
            auto& exemplars = subtasks[sub.key()];
            for (const auto& name : sub.value()) {
                if (!name.is_string() || name.get<std::string>().empty()) {
                    throw ValidationError(where + ": subtask \"" + sub.key() +
                                          "\" has an invalid exemplar name");
                }
                exemplars.push_back(name.get<std::string>());
            }
        }
    }
    return tax;
}

bool Taxonomy::contains(const std::string& task, const std::string& subtask) const {
    auto it = nodes_.find(task);
    return it != nodes_.end() && it->second.count(subtask) > 0;
}

std::vector<ModelCard> load_cards(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    std::vector<ModelCard> cards;
    std::unordered_map<std::string, std::size_t> seen;  // api_name -> line
    for (const auto& rec : read_jsonl(path)) {
        const std::string where = card_where(path, rec);
        ModelCard card = parse_card(rec.value, where);
        check_taxonomy_pair(card, taxonomy, where);
        auto [it, inserted] = seen.emplace(card.api_name, rec.line);
        if (!inserted) {
            throw ValidationError(path.string() + ": duplicate api_name \"" + card.api_name +
                                  "\" at lines " + std::to_string(it->second) + " and " +
                                  std::to_string(rec.line));
        }
        cards.push_back(std::move(card));
    }
    return cards;
}

std::vector<ModelCard> load_cards_collect(const std::filesystem::path& path,
                                          const Taxonomy& taxonomy,
                                          std::vector<std::string>& diagnostics) {
    std::vector<ModelCard> cards;
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& rec : read_jsonl(path)) {
        const std::string where = card_where(path, rec);
        try {
            ModelCard card = parse_card(rec.value, where);
            check_taxonomy_pair(card, taxonomy, where);
            auto [it, inserted] = seen.emplace(card.api_name, rec.line);
            if (!inserted) {
                throw ValidationError(path.string() + ": duplicate api_name \"" + card.api_name +
                                      "\" at lines " + std::to_string(it->second) + " and " +
                                      std::to_string(rec.line));
            }
            cards.push_back(std::move(card));
        } catch (const ValidationError& e) {
            diagnostics.emplace_back(e.what());
        }
    }
    return cards;
}

void save_cards(const std::filesystem::path& path, const std::vector<ModelCard>& cards) {
    std::vector<json> rows;
    rows.reserve(cards.size());
    for (const auto& card : cards) {
        ordered_json row;
        row["schema_version"] = kCardSchemaVersion;
        row["api_name"] = card.api_name;
        row["domain"] = card.domain;
        row["api_call"] = card.api_call;
        ordered_json params = ordered_json::array();
        for (const auto& p : card.parameters) {
            params.push_back({{"name", p.name}, {"description", p.description}});
        }
        row["parameters"] = std::move(params);
        row["example_code"] = card.example_code;
        row["description"] = card.description;
        row["coarse_functionality"] = card.coarse_functionality;
        row["fine_functionality"] = card.fine_functionality;
        json mods = json::array();
        for (const auto& m : card.input_modalities) mods.push_back(m);
        row["input_modalities"] = std::move(mods);
        row["downloads"] = card.downloads;
        json flags = json::array();
        for (const auto& f : card.flags) flags.push_back(to_string(f));
        row["flags"] = std::move(flags);
        rows.push_back(std::move(row));
    }
    write_jsonl(path, rows);
}

FilterOutcome apply_filters(const std::vector<ModelCard>& cards, const FilterPolicy& policy) {
    if (policy.max_per_functionality == 0) {
        throw ValidationError("FilterPolicy.max_per_functionality must be >= 1");
    }

    const std::size_t n = cards.size();
    std::vector<std::optional<RejectReason>> verdict(n);

    auto flag_reason = [&](const ModelCard& card) -> std::optional<RejectReason> {
        if (policy.reject_flags.count(CardFlag::low_quality) && card.has_flag(CardFlag::low_quality))
            return RejectReason::low_quality_card;
        if (policy.reject_flags.count(CardFlag::nsfw_risk) && card.has_flag(CardFlag::nsfw_risk))
            return RejectReason::nsfw_risk;
        if (policy.reject_flags.count(CardFlag::restrictive_license) &&
            card.has_flag(CardFlag::restrictive_license))
            return RejectReason::license_restriction;
        return std::nullopt;
    };

    for (std::size_t i = 0; i < n; ++i) verdict[i] = flag_reason(cards[i]);

    // Survivors grouped by functionality key, in input order.
    std::map<FunctionalityGroup, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        if (!verdict[i]) groups[functionality_group(cards[i])].push_back(i);
    }

    auto wins = [&](std::size_t a, std::size_t b) {
        if (cards[a].downloads != cards[b].downloads) return cards[a].downloads > cards[b].downloads;
        return cards[a].api_name < cards[b].api_name;
    };

    for (auto& [group, members] : groups) {
        if (policy.dedupe_identical) {
            // Equal functionality key + equal normalized description means the
            // same API published twice; the most-downloaded copy survives.
            std::map<std::string, std::size_t> best;  // normalized description -> index
            for (std::size_t i : members) {
                std::string key = normalize_description(cards[i].description);
                auto it = best.find(key);
                if (it == best.end()) {
                    best.emplace(std::move(key), i);
                } else if (wins(i, it->second)) {
                    verdict[it->second] = RejectReason::identical_duplicate;
                    it->second = i;
                } else {
                    verdict[i] = RejectReason::identical_duplicate;
                }
            }
            std::erase_if(members, [&](std::size_t i) { return verdict[i].has_value(); });
        }

        if (members.size() > policy.max_per_functionality) {
            std::vector<std::size_t> ranked = members;
            std::sort(ranked.begin(), ranked.end(), wins);
            for (std::size_t r = policy.max_per_functionality; r < ranked.size(); ++r) {
                verdict[ranked[r]] = RejectReason::functionality_overflow;
            }
        }
    }

    FilterOutcome outcome;
    for (std::size_t i = 0; i < n; ++i) {
        if (verdict[i]) {
            outcome.rejected.emplace_back(cards[i], *verdict[i]);
        } else {
            outcome.kept.push_back(cards[i]);
        }
    }
    return outcome;
}

Registry Registry::build(std::vector<ModelCard> kept, Taxonomy taxonomy) {
    Registry reg;
    reg.taxonomy_ = std::move(taxonomy);
    reg.cards_ = std::move(kept);
    for (std::size_t i = 0; i < reg.cards_.size(); ++i) {
        const auto& card = reg.cards_[i];
        if (card.api_name == kUnknownApi) {
            throw ValidationError("card name \"" + std::string(kUnknownApi) + "\" is reserved");
        }
        if (!reg.index_.emplace(card.api_name, i).second) {
            throw ValidationError("duplicate api_name \"" + card.api_name + "\" in registry");
        }
        reg.corpus_.insert(card.api_name);
    }
    reg.corpus_.insert(kUnknownApi);
    return reg;
}

const ModelCard* Registry::find(const std::string& api_name) const {
    auto it = index_.find(api_name);
    return it == index_.end() ? nullptr : &cards_[it->second];
}

std::optional<std::size_t> Registry::load_index(const std::string& api_name) const {
    auto it = index_.find(api_name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<const ModelCard*> Registry::group_members(const FunctionalityGroup& group) const {
    std::vector<const ModelCard*> members;
    for (const auto& card : cards_) {
        if (functionality_group(card) == group) members.push_back(&card);
    }
    return members;
}

ModalityCensus Registry::modality_census() const {
    ModalityCensus census;
    for (const auto& card : cards_) {
        if (card.input_modalities.size() == 1) ++census.text_only;
        if (card.input_modalities.count("image")) ++census.image;
        if (card.input_modalities.count("audio")) ++census.audio;
        if (card.input_modalities.count("video")) ++census.video;
    }
    return census;
}

}  // namespace toolsel
