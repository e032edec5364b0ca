#include "morphrl/tasks.hpp"

#include <algorithm>
#include <set>

namespace morphrl {

const std::vector<TaskDef>& task_table() {
    static const std::vector<TaskDef> table = {
        TaskDef{"chains",
                {FamilyDef{"swimmer", DynamicsKind::swimmer, 6, {2, 3, 4, 5, 6}}},
                {"swimmer_2", "swimmer_3", "swimmer_4", "swimmer_6"},
                {"swimmer_5"}},
        TaskDef{"swim3",
                {FamilyDef{"swimmer", DynamicsKind::swimmer, 6, {3}}},
                {"swimmer_3"},
                {}},
        TaskDef{"hops",
                {FamilyDef{"hopper", DynamicsKind::hopper, 4, {2, 3, 4}}},
                {"hopper_2", "hopper_4"},
                {"hopper_3"}},
        TaskDef{"mixed",
                {FamilyDef{"hopper", DynamicsKind::hopper, 4, {2, 3, 4}},
                 FamilyDef{"swimmer", DynamicsKind::swimmer, 6, {2, 3, 4, 5, 6}}},
                {"hopper_2", "hopper_4", "swimmer_2", "swimmer_3", "swimmer_4", "swimmer_6"},
                {"hopper_3", "swimmer_5"}},
    };
    return table;
}

const TaskDef& find_task(const std::string& name) {
    for (const auto& task : task_table())
        if (task.name == name) return task;
    throw ConfigError("unknown task: " + name);
}

SplitManifest make_split(const std::string& task_name, const std::vector<std::string>& all_morphs) {
    const TaskDef& def = find_task(task_name);
    const std::set<std::string> roster(all_morphs.begin(), all_morphs.end());
    SplitManifest split{def.train_morphs, def.test_morphs};
    for (const auto& id : split.train)
        if (!roster.count(id)) throw ConfigError(task_name + ": train morphology " + id + " not registered");
    for (const auto& id : split.test)
        if (!roster.count(id)) throw ConfigError(task_name + ": test morphology " + id + " not registered");
    for (const auto& id : split.test)
        if (std::find(split.train.begin(), split.train.end(), id) != split.train.end())
            throw ConfigError(task_name + ": morphology " + id + " appears in both train and test");
    if (split.train.empty()) throw ConfigError(task_name + ": empty training split");
    return split;
}

TaskRegistry::TaskRegistry(const TaskDef& def) : def_(def) {
    if (def_.families.empty()) throw ConfigError(def_.name + ": task has no families");

    std::map<std::string, TokenAssignment> full_per_family;
    std::map<std::string, MorphologySpec> full_specs;
    for (const auto& fam : def_.families) {
        if (full_per_family.count(fam.family_id))
            throw ConfigError(def_.name + ": duplicate family " + fam.family_id);
        MorphologySpec full = make_chain_family_spec(fam.family_id, fam.full_limbs, fam.full_limbs);
        full_per_family[fam.family_id] = assign_full_family_tokens(full);
        full_specs[fam.family_id] = full;
    }
    const FamilyCombination combo = combine_families(full_per_family);
    obs_vocab_ = combo.obs_vocab;
    act_vocab_ = combo.act_vocab;

    for (const auto& fam : def_.families) {
        for (int n : fam.limb_counts) {
            MorphRecord rec;
            rec.spec = make_chain_family_spec(fam.family_id, fam.full_limbs, n);
            rec.kind = fam.kind;
            TokenAssignment withheld = assign_sub_morphology_tokens(
                full_per_family[fam.family_id], full_specs[fam.family_id], rec.spec);
            rec.tokens = apply_family_offset(withheld, combo, fam.family_id);
            const std::string id = rec.spec.morph_id;
            if (morphs_.count(id)) throw ConfigError(def_.name + ": duplicate morphology " + id);
            order_.push_back(id);
            morphs_.emplace(id, std::move(rec));
        }
    }
    split_ = make_split(def_.name, order_);
}

const MorphRecord& TaskRegistry::at(const std::string& morph_id) const {
    auto it = morphs_.find(morph_id);
    if (it == morphs_.end()) throw ConfigError("morphology " + morph_id + " has no token assignment");
    return it->second;
}

}  // namespace morphrl
