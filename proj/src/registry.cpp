#include "morphrl/registry.hpp"

#include <algorithm>
#include <set>

namespace morphrl {

void MorphologySpec::validate() const {
    if (limbs.empty()) throw ConfigError(morph_id + ": family has no limbs");
    if (present_limbs.empty()) throw ConfigError(morph_id + ": no limbs present");
    std::set<int> seen;
    for (int i : present_limbs) {
        if (i < 0 || i >= static_cast<int>(limbs.size()))
            throw ConfigError(morph_id + ": limb index " + std::to_string(i) +
                              " outside family catalog of " + std::to_string(limbs.size()));
        if (!seen.insert(i).second)
            throw ConfigError(morph_id + ": duplicate limb index " + std::to_string(i));
    }
    if (!std::is_sorted(present_limbs.begin(), present_limbs.end()))
        throw ConfigError(morph_id + ": present limbs must keep catalog order");
    for (const auto& limb : limbs)
        if (limb.sensors.empty())
            throw ConfigError(morph_id + ": limb " + limb.name + " has an empty sensor block");
    for (const auto& act : actuators)
        if (act.limb < 0 || act.limb >= static_cast<int>(limbs.size()))
            throw ConfigError(morph_id + ": actuator " + act.name + " references missing limb");
    if (sensor_dim() < 1 || action_dim() < 1)
        throw ConfigError(morph_id + ": needs at least one sensor and one actuator");
}

std::vector<std::string> MorphologySpec::sensor_names() const {
    std::vector<std::string> names;
    for (int i : present_limbs) {
        const auto& limb = limbs[static_cast<std::size_t>(i)];
        for (const auto& field : limb.sensors)
            for (int k = 0; k < field.width; ++k)
                names.push_back(field.width == 1 ? limb.name + "/" + field.name
                                                 : limb.name + "/" + field.name + "[" + std::to_string(k) + "]");
    }
    return names;
}

std::vector<std::string> MorphologySpec::actuator_names() const {
    std::vector<std::string> names;
    for (const auto& act : actuators)
        if (limb_present(act.limb)) names.push_back(act.name);
    return names;
}

namespace {

// Token span of each catalog limb within the full morphology's observation
// vector, in catalog order.
std::vector<std::pair<int, int>> catalog_spans(const MorphologySpec& spec) {
    std::vector<std::pair<int, int>> spans;
    int cursor = 0;
    for (const auto& limb : spec.limbs) {
        const int w = limb.sensor_width();
        spans.emplace_back(cursor, cursor + w);
        cursor += w;
    }
    return spans;
}

}  // namespace

TokenAssignment assign_full_family_tokens(const MorphologySpec& full) {
    full.validate();
    if (!full.is_full())
        throw ConfigError(full.morph_id + ": full-family token assignment needs every limb present");
    TokenAssignment out;
    int cursor = 0;
    for (const auto& limb : full.limbs)
        for (const auto& field : limb.sensors)
            for (int k = 0; k < field.width; ++k) out.obs_tokens.push_back(cursor++);
    out.obs_vocab = cursor;
    for (std::size_t i = 0; i < full.actuators.size(); ++i)
        out.act_tokens.push_back(static_cast<int>(i));
    out.act_vocab = static_cast<int>(full.actuators.size());
    return out;
}

TokenAssignment assign_sub_morphology_tokens(const TokenAssignment& parent_tokens,
                                             const MorphologySpec& parent_spec,
                                             const MorphologySpec& sub) {
    sub.validate();
    for (int i : sub.present_limbs)
        if (!parent_spec.limb_present(i))
            throw ConfigError(sub.morph_id + ": limb index " + std::to_string(i) +
                              " absent from parent " + parent_spec.morph_id);
    if (static_cast<int>(parent_tokens.obs_tokens.size()) != parent_spec.sensor_dim() ||
        static_cast<int>(parent_tokens.act_tokens.size()) != parent_spec.action_dim())
        throw ContractError("token assignment does not match parent spec " + parent_spec.morph_id);

    TokenAssignment out;
    out.obs_vocab = parent_tokens.obs_vocab;
    out.act_vocab = parent_tokens.act_vocab;

    // Walk the parent's observation vector limb by limb, keeping the limbs
    // the sub-morphology retains.
    int cursor = 0;
    for (int limb : parent_spec.present_limbs) {
        const int w = parent_spec.limbs[static_cast<std::size_t>(limb)].sensor_width();
        if (sub.limb_present(limb))
            for (int k = 0; k < w; ++k)
                out.obs_tokens.push_back(parent_tokens.obs_tokens[static_cast<std::size_t>(cursor + k)]);
        cursor += w;
    }
    int act_cursor = 0;
    for (const auto& act : parent_spec.actuators) {
        if (!parent_spec.limb_present(act.limb)) continue;
        if (sub.limb_present(act.limb))
            out.act_tokens.push_back(parent_tokens.act_tokens[static_cast<std::size_t>(act_cursor)]);
        ++act_cursor;
    }
    return out;
}

TokenAssignment assign_sub_morphology_tokens(const TokenAssignment& full_tokens,
                                             const MorphologySpec& sub) {
    MorphologySpec full = sub;
    full.morph_id = sub.family_id + "_full";
    full.present_limbs.clear();
    for (int i = 0; i < static_cast<int>(sub.limbs.size()); ++i) full.present_limbs.push_back(i);
    return assign_sub_morphology_tokens(full_tokens, full, sub);
}

FamilyCombination combine_families(const std::map<std::string, TokenAssignment>& full_per_family) {
    if (full_per_family.empty()) throw ConfigError("combine_families: no families");
    FamilyCombination combo;
    int obs_cursor = 0, act_cursor = 0;
    // std::map iterates family ids lexicographically, which fixes the
    // "predetermined constant" to a running sum in that order.
    for (const auto& [family, tokens] : full_per_family) {
        combo.obs_offset[family] = obs_cursor;
        combo.act_offset[family] = act_cursor;
        obs_cursor += tokens.obs_vocab;
        act_cursor += tokens.act_vocab;
    }
    combo.obs_vocab = obs_cursor;
    combo.act_vocab = act_cursor;
    return combo;
}

TokenAssignment apply_family_offset(const TokenAssignment& tokens, const FamilyCombination& combo,
                                    const std::string& family_id) {
    auto obs_it = combo.obs_offset.find(family_id);
    auto act_it = combo.act_offset.find(family_id);
    if (obs_it == combo.obs_offset.end() || act_it == combo.act_offset.end())
        throw ConfigError("combine_families: unknown family " + family_id);
    TokenAssignment out = tokens;
    for (auto& t : out.obs_tokens) t += obs_it->second;
    for (auto& t : out.act_tokens) t += act_it->second;
    out.obs_vocab = combo.obs_vocab;
    out.act_vocab = combo.act_vocab;
    return out;
}

}  // namespace morphrl
