#pragma once

#include <map>
#include <string>
#include <vector>

#include "morphrl/common.hpp"

namespace morphrl {

struct SensorField {
    std::string name;
    int width = 1;
};

struct LimbSpec {
    std::string name;
    std::vector<SensorField> sensors;

    int sensor_width() const {
        int w = 0;
        for (const auto& s : sensors) w += s.width;
        return w;
    }
};

struct ActuatorSpec {
    std::string name;
    int limb = -1;  // index into the family's full limb catalog
};

// Static description of one agent. `limbs`/`actuators` are the family's full
// catalog; `present_limbs` selects the subset this morphology actually has
// (the full morphology lists every index).
struct MorphologySpec {
    std::string family_id;
    std::string morph_id;
    std::vector<LimbSpec> limbs;
    std::vector<int> present_limbs;
    std::vector<ActuatorSpec> actuators;

    bool is_full() const { return present_limbs.size() == limbs.size(); }
    int limb_count() const { return static_cast<int>(present_limbs.size()); }

    int sensor_dim() const {
        int n = 0;
        for (int i : present_limbs) n += limbs[static_cast<std::size_t>(i)].sensor_width();
        return n;
    }
    int action_dim() const {
        int n = 0;
        for (const auto& a : actuators)
            if (limb_present(a.limb)) ++n;
        return n;
    }
    bool limb_present(int limb) const {
        for (int i : present_limbs)
            if (i == limb) return true;
        return false;
    }

    // Sensor names in observation order, one per scalar slot ("limb/field[k]").
    std::vector<std::string> sensor_names() const;
    std::vector<std::string> actuator_names() const;

    void validate() const;
};

// Integer observation/action token vectors for one morphology.
struct TokenAssignment {
    std::vector<int> obs_tokens;
    std::vector<int> act_tokens;
    int obs_vocab = 0;
    int act_vocab = 0;
};

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

// Consecutive integers over the full morphology: limb i's sensors take the
// next block of values in declared order, actuators count up from 0 in
// declared order.
TokenAssignment assign_full_family_tokens(const MorphologySpec& full);

// Withholds the tokens of limbs absent from `sub`. Values are copied, never
// renumbered, so gaps remain where limbs were removed.
TokenAssignment assign_sub_morphology_tokens(const TokenAssignment& parent_tokens,
                                             const MorphologySpec& parent_spec,
                                             const MorphologySpec& sub);
TokenAssignment assign_sub_morphology_tokens(const TokenAssignment& full_tokens,
                                             const MorphologySpec& sub);

// Cross-family offsets: families are ranked lexicographically by family_id
// and each family's tokens are shifted by the running sum of the preceding
// families' vocab extents (observation and action sides independently).
struct FamilyCombination {
    std::map<std::string, int> obs_offset;
    std::map<std::string, int> act_offset;
    int obs_vocab = 0;
    int act_vocab = 0;
};

FamilyCombination combine_families(const std::map<std::string, TokenAssignment>& full_per_family);

TokenAssignment apply_family_offset(const TokenAssignment& tokens, const FamilyCombination& combo,
                                    const std::string& family_id);

}  // namespace morphrl
