#pragma once

#include <map>
#include <string>
#include <vector>

#include "morphrl/env.hpp"
#include "morphrl/registry.hpp"

namespace morphrl {

struct FamilyDef {
    std::string family_id;
    DynamicsKind kind = DynamicsKind::swimmer;
    int full_limbs = 0;
    std::vector<int> limb_counts;
};

// A task is a fixed roster of morphologies plus a declared train/test split.
// Everything is pinned here; nothing about a split is ever sampled.
struct TaskDef {
    std::string name;
    std::vector<FamilyDef> families;
    std::vector<std::string> train_morphs;
    std::vector<std::string> test_morphs;
};

const std::vector<TaskDef>& task_table();
const TaskDef& find_task(const std::string& name);

SplitManifest make_split(const std::string& task_name, const std::vector<std::string>& all_morphs);

struct MorphRecord {
    MorphologySpec spec;
    DynamicsKind kind = DynamicsKind::swimmer;
    TokenAssignment tokens;
};

// Token-assigned roster for one task: per-family full assignments, limb
// withholding for every sub-morphology, then cross-family offsets. Frozen at
// construction.
class TaskRegistry {
public:
    explicit TaskRegistry(const TaskDef& def);

    const TaskDef& def() const { return def_; }
    const MorphRecord& at(const std::string& morph_id) const;
    bool has(const std::string& morph_id) const { return morphs_.count(morph_id) > 0; }
    const std::vector<std::string>& morph_ids() const { return order_; }
    const SplitManifest& split() const { return split_; }
    int obs_vocab() const { return obs_vocab_; }
    int act_vocab() const { return act_vocab_; }

private:
    TaskDef def_;
    std::map<std::string, MorphRecord> morphs_;
    std::vector<std::string> order_;
    SplitManifest split_;
    int obs_vocab_ = 0;
    int act_vocab_ = 0;
};

}  // namespace morphrl
