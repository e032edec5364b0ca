#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "morphrl/registry.hpp"
#include "morphrl/tasks.hpp"

using namespace morphrl;

namespace {

// The benchmark cheetah family: 7 limbs, a uniform 18-wide sensor block per
// limb, six actuators declared front-to-back.
MorphologySpec cheetah_full() {
    MorphologySpec spec;
    spec.family_id = "cheetah";
    spec.morph_id = "cheetah_7_full";
    const std::vector<std::string> limb_names{"torso", "bthigh", "bshin", "bfoot",
                                              "fthigh", "fshin", "ffoot"};
    for (const auto& name : limb_names) {
        LimbSpec limb;
        limb.name = name;
        limb.sensors = {{"position", 3},  {"orientation", 3}, {"dposition", 3}, {"dorientation", 3},
                        {"type", 4},      {"angle", 1},       {"joint_range", 1}};
        spec.limbs.push_back(limb);
    }
    spec.actuators = {{"ffoot", 6}, {"fshin", 5}, {"fthigh", 4}, {"bfoot", 3}, {"bshin", 2}, {"bthigh", 1}};
    for (int i = 0; i < 7; ++i) spec.present_limbs.push_back(i);
    return spec;
}

MorphologySpec drop_limbs(const MorphologySpec& full, const std::set<int>& missing,
                          const std::string& morph_id) {
    MorphologySpec sub = full;
    sub.morph_id = morph_id;
    sub.present_limbs.clear();
    for (int i = 0; i < static_cast<int>(full.limbs.size()); ++i)
        if (!missing.count(i)) sub.present_limbs.push_back(i);
    return sub;
}

}  // namespace

TEST_CASE("full-family tokens reproduce the 18-wide block layout") {
    const auto spec = cheetah_full();
    const auto tokens = assign_full_family_tokens(spec);
    REQUIRE(tokens.obs_tokens.size() == 7 * 18);
    CHECK(tokens.obs_vocab == 126);

    // every limb's fields occupy [18i+off, 18i+off+w) in declared order
    const std::vector<std::pair<int, int>> field_spans{{0, 3}, {3, 6}, {6, 9}, {9, 12},
                                                       {12, 16}, {16, 17}, {17, 18}};
    for (int limb = 0; limb < 7; ++limb) {
        int cursor = limb * 18;
        for (const auto& [lo, hi] : field_spans) {
            for (int t = limb * 18 + lo; t < limb * 18 + hi; ++t)
                CHECK(tokens.obs_tokens[static_cast<std::size_t>(cursor++)] == t);
        }
    }
    // limb i=2, position sensor -> {36, 37, 38}
    CHECK(tokens.obs_tokens[2 * 18 + 0] == 36);
    CHECK(tokens.obs_tokens[2 * 18 + 1] == 37);
    CHECK(tokens.obs_tokens[2 * 18 + 2] == 38);
}

TEST_CASE("action tokens count up in declared order") {
    const auto tokens = assign_full_family_tokens(cheetah_full());
    REQUIRE(tokens.act_tokens.size() == 6);
    CHECK(tokens.act_vocab == 6);
    // ffoot=0, fshin=1, fthigh=2, bfoot=3, bshin=4, bthigh=5
    for (int i = 0; i < 6; ++i) CHECK(tokens.act_tokens[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("single-limb family with unit block") {
    MorphologySpec tiny;
    tiny.family_id = "dot";
    tiny.morph_id = "dot_1";
    tiny.limbs = {{"core", {{"value", 1}}}};
    tiny.actuators = {{"motor", 0}};
    tiny.present_limbs = {0};
    const auto tokens = assign_full_family_tokens(tiny);
    CHECK(tokens.obs_tokens == std::vector<int>{0});
    CHECK(tokens.act_tokens == std::vector<int>{0});
}

TEST_CASE("empty sensor block is a configuration error") {
    MorphologySpec bad;
    bad.family_id = "bad";
    bad.morph_id = "bad_1";
    bad.limbs = {{"core", {}}};
    bad.actuators = {{"motor", 0}};
    bad.present_limbs = {0};
    CHECK_THROWS_AS(assign_full_family_tokens(bad), ConfigError);
}

TEST_CASE("withholding removes exactly the missing limb's tokens") {
    const auto full = cheetah_full();
    const auto full_tokens = assign_full_family_tokens(full);
    const auto sub = drop_limbs(full, {6}, "cheetah_6_back");  // missing ffoot
    const auto sub_tokens = assign_sub_morphology_tokens(full_tokens, sub);

    REQUIRE(sub_tokens.obs_tokens.size() == 6 * 18);
    for (int t : sub_tokens.obs_tokens) CHECK(t < 108);  // ffoot block [108, 126) gone
    for (int i = 0; i < 108; ++i) CHECK(sub_tokens.obs_tokens[static_cast<std::size_t>(i)] == i);

    // action token 0 (ffoot) absent, values of the rest unchanged
    CHECK(sub_tokens.act_tokens == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(sub_tokens.obs_vocab == full_tokens.obs_vocab);
    CHECK(sub_tokens.act_vocab == full_tokens.act_vocab);
}

TEST_CASE("withholding the empty set returns the identical assignment") {
    const auto full = cheetah_full();
    const auto full_tokens = assign_full_family_tokens(full);
    const auto same = assign_sub_morphology_tokens(full_tokens, full);
    CHECK(same.obs_tokens == full_tokens.obs_tokens);
    CHECK(same.act_tokens == full_tokens.act_tokens);
}

TEST_CASE("three-limb family with B=6 missing the middle limb") {
    MorphologySpec fam;
    fam.family_id = "tri";
    fam.morph_id = "tri_full";
    for (const auto& name : {"a", "b", "c"}) {
        LimbSpec limb;
        limb.name = name;
        limb.sensors = {{"block", 6}};
        fam.limbs.push_back(limb);
    }
    fam.actuators = {{"ja", 0}, {"jb", 1}, {"jc", 2}};
    fam.present_limbs = {0, 1, 2};
    const auto full_tokens = assign_full_family_tokens(fam);
    const auto sub = drop_limbs(fam, {1}, "tri_no_b");
    const auto sub_tokens = assign_sub_morphology_tokens(full_tokens, sub);
    std::vector<int> expected;
    for (int t = 0; t < 6; ++t) expected.push_back(t);
    for (int t = 12; t < 18; ++t) expected.push_back(t);
    CHECK(sub_tokens.obs_tokens == expected);
    CHECK(sub_tokens.act_tokens == std::vector<int>{0, 2});
}

TEST_CASE("withholding refuses limbs outside the parent") {
    const auto full = cheetah_full();
    const auto full_tokens = assign_full_family_tokens(full);
    const auto parent = drop_limbs(full, {6}, "cheetah_6_back");
    const auto parent_tokens = assign_sub_morphology_tokens(full_tokens, parent);
    auto sub = drop_limbs(full, {5}, "bad_sub");  // keeps limb 6, absent from parent
    CHECK_THROWS_AS(assign_sub_morphology_tokens(parent_tokens, parent, sub), ConfigError);
}

TEST_CASE("withholding is compositional along sub-morphology chains") {
    const auto a = cheetah_full();
    const auto a_tokens = assign_full_family_tokens(a);
    const auto b = drop_limbs(a, {6}, "chain_b");
    const auto c = drop_limbs(a, {4, 6}, "chain_c");

    const auto b_tokens = assign_sub_morphology_tokens(a_tokens, b);
    const auto c_via_b = assign_sub_morphology_tokens(b_tokens, b, c);
    const auto c_via_a = assign_sub_morphology_tokens(a_tokens, c);
    CHECK(c_via_b.obs_tokens == c_via_a.obs_tokens);
    CHECK(c_via_b.act_tokens == c_via_a.act_tokens);
}

TEST_CASE("family combination uses lexicographic running-sum offsets") {
    // humanoid 9 limbs x 18 = 162 obs tokens, walker 7 x 18 = 126
    std::map<std::string, TokenAssignment> fams;
    TokenAssignment humanoid;
    humanoid.obs_vocab = 162;
    humanoid.act_vocab = 8;
    TokenAssignment walker;
    walker.obs_vocab = 126;
    walker.act_vocab = 6;
    fams["humanoid"] = humanoid;
    fams["walker"] = walker;
    const auto combo = combine_families(fams);
    CHECK(combo.obs_offset.at("humanoid") == 0);
    CHECK(combo.obs_offset.at("walker") == 162);
    CHECK(combo.obs_vocab == 288);
    CHECK(combo.act_offset.at("walker") == 8);
    CHECK(combo.act_vocab == 14);

    TokenAssignment walker_tokens;
    walker_tokens.obs_tokens = {0, 1, 125};
    walker_tokens.act_tokens = {0, 5};
    walker_tokens.obs_vocab = 126;
    walker_tokens.act_vocab = 6;
    const auto shifted = apply_family_offset(walker_tokens, combo, "walker");
    CHECK(shifted.obs_tokens == std::vector<int>{162, 163, 287});
    CHECK(shifted.act_tokens == std::vector<int>{8, 13});
    CHECK(shifted.obs_vocab == 288);
}

TEST_CASE("single family combination applies zero offsets") {
    std::map<std::string, TokenAssignment> fams;
    TokenAssignment only;
    only.obs_vocab = 40;
    only.act_vocab = 5;
    fams["swimmer"] = only;
    const auto combo = combine_families(fams);
    CHECK(combo.obs_offset.at("swimmer") == 0);
    CHECK(combo.obs_vocab == 40);
}

TEST_CASE("three families produce running-sum offsets 0, 12, 30") {
    std::map<std::string, TokenAssignment> fams;
    for (auto [name, extent] : std::initializer_list<std::pair<const char*, int>>{
             {"fam_a", 12}, {"fam_b", 18}, {"fam_c", 24}}) {
        TokenAssignment t;
        t.obs_vocab = extent;
        t.act_vocab = extent / 6;
        fams[name] = t;
    }
    const auto combo = combine_families(fams);
    CHECK(combo.obs_offset.at("fam_a") == 0);
    CHECK(combo.obs_offset.at("fam_b") == 12);
    CHECK(combo.obs_offset.at("fam_c") == 30);
    CHECK(combo.obs_vocab == 54);
}

TEST_CASE("task registry tokens are globally collision free") {
    TaskRegistry reg(find_task("mixed"));
    std::set<int> obs_seen, act_seen;
    // collect the token sets of each family's full morphology
    for (const auto& id : {"hopper_4", "swimmer_6"}) {
        const auto& rec = reg.at(id);
        for (int t : rec.tokens.obs_tokens) {
            CHECK(t >= 0);
            CHECK(t < reg.obs_vocab());
            CHECK(obs_seen.insert(t).second);
        }
        for (int t : rec.tokens.act_tokens) {
            CHECK(t >= 0);
            CHECK(t < reg.act_vocab());
            CHECK(act_seen.insert(t).second);
        }
    }
    CHECK(static_cast<int>(obs_seen.size()) == reg.obs_vocab());
    CHECK(static_cast<int>(act_seen.size()) == reg.act_vocab());

    // every sub-morphology's tokens are a subset of its family full set
    const auto& sub = reg.at("swimmer_3");
    const auto& full = reg.at("swimmer_6");
    for (int t : sub.tokens.obs_tokens)
        CHECK(std::find(full.tokens.obs_tokens.begin(), full.tokens.obs_tokens.end(), t) !=
              full.tokens.obs_tokens.end());
}

TEST_CASE("declared splits are deterministic and disjoint") {
    const auto& chains = find_task("chains");
    TaskRegistry reg(chains);
    CHECK(reg.split().train ==
          std::vector<std::string>{"swimmer_2", "swimmer_3", "swimmer_4", "swimmer_6"});
    CHECK(reg.split().test == std::vector<std::string>{"swimmer_5"});

    TaskRegistry single(find_task("swim3"));
    CHECK(single.split().test.empty());

    TaskRegistry mixed(find_task("mixed"));
    for (const auto& id : mixed.split().test)
        CHECK(std::find(mixed.split().train.begin(), mixed.split().train.end(), id) ==
              mixed.split().train.end());

    CHECK_THROWS_AS(find_task("no_such_task"), ConfigError);
}

TEST_CASE("token values survive the round trip through the task registry") {
    TaskRegistry reg(find_task("chains"));
    const auto& sw3 = reg.at("swimmer_3");
    CHECK(sw3.spec.sensor_dim() == 22);  // 10-wide torso block + two 6-wide links
    CHECK(sw3.spec.action_dim() == 2);
    // first 22 tokens of the family (prefix limbs keep the leading values)
    for (int i = 0; i < 22; ++i) CHECK(sw3.tokens.obs_tokens[static_cast<std::size_t>(i)] == i);
    CHECK(sw3.tokens.act_tokens == std::vector<int>{0, 1});
    CHECK(reg.obs_vocab() == 40);
    CHECK(reg.act_vocab() == 5);
}
