#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "deepfn/manifest.hpp"
#include "deepfn/rng.hpp"

namespace deepfn {

enum class GroupKind { person, gender, skin, dataset };

inline std::string to_string(GroupKind k) {
    switch (k) {
        case GroupKind::person:
            return "person";
        case GroupKind::gender:
            return "gender";
        case GroupKind::skin:
            return "skin";
        case GroupKind::dataset:
            return "dataset";
    }
    return "person";
}

inline std::optional<GroupKind> parse_group_kind(const std::string& s) {
    for (auto k : {GroupKind::person, GroupKind::gender, GroupKind::skin, GroupKind::dataset})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

/**
 * Which pool trains and which pool tests. Group names: "all" for person;
 * "male"/"female" for gender; "lighter"/"darker" for skin; a dataset_id for
 * dataset. Equal groups give a within-group split.
 */
struct GroupSplitSpec {
    GroupKind kind = GroupKind::person;
    std::string train_group = "all";
    std::string test_group = "all";
    std::size_t n_train = 4;
    std::size_t n_val = 2;
    std::uint64_t seed = 0;
};

struct GroupSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

inline bool in_group(const ParticipantRecord& p, GroupKind kind, const std::string& group) {
    switch (kind) {
        case GroupKind::person:
            return true;
        case GroupKind::gender:
            return to_string(p.gender) == group;
        case GroupKind::skin:
            if (group == "lighter") return p.fitzpatrick >= 1 && p.fitzpatrick <= 2;
            if (group == "darker") return p.fitzpatrick >= 5;
            return false;
        case GroupKind::dataset:
            return p.dataset_id == group;
    }
    return false;
}

/// Non-excluded participants of a group, sorted by id.
inline std::vector<std::string> group_pool(const Manifest& m, GroupKind kind, const std::string& group) {
    if (kind == GroupKind::gender) require(group == "male" || group == "female", "unknown gender group '" + group + "'");
    if (kind == GroupKind::skin) require(group == "lighter" || group == "darker", "unknown skin group '" + group + "'");
    if (kind == GroupKind::person) require(group == "all", "person splits use the group 'all', got '" + group + "'");
    std::vector<std::string> pool;
    for (const auto& p : m.participants)
        if (!p.excluded && in_group(p, kind, group)) pool.push_back(p.participant_id);
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline GroupSplit make_group_split(const Manifest& m, const GroupSplitSpec& spec) {
    require(spec.n_train >= 1 && spec.n_val >= 1, "group split needs at least one train and one val participant");
    std::vector<std::string> pool = group_pool(m, spec.kind, spec.train_group);
    const std::string pool_name = to_string(spec.kind) + " pool '" + spec.train_group + "'";
    require(spec.n_train + spec.n_val < pool.size(),
            pool_name + " has " + std::to_string(pool.size()) + " participants, needs more than " +
                std::to_string(spec.n_train + spec.n_val));

    SeededRng rng(mix_seed(spec.seed, 0x5317));
    rng.shuffle(pool);
    GroupSplit split;
    split.train.assign(pool.begin(), pool.begin() + std::ptrdiff_t(spec.n_train));
    split.val.assign(pool.begin() + std::ptrdiff_t(spec.n_train),
                     pool.begin() + std::ptrdiff_t(spec.n_train + spec.n_val));
    if (spec.train_group == spec.test_group) {
        split.test.assign(pool.begin() + std::ptrdiff_t(spec.n_train + spec.n_val), pool.end());
    } else {
        split.test = group_pool(m, spec.kind, spec.test_group);
        std::set<std::string> used(split.train.begin(), split.train.end());
        used.insert(split.val.begin(), split.val.end());
        std::erase_if(split.test, [&](const std::string& id) { return used.count(id) > 0; });
        require(!split.test.empty(), to_string(spec.kind) + " pool '" + spec.test_group + "' has no test participants");
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

struct TaskProportions {
    double train = 5;
    double val = 1;
    double test = 2;
};

struct TaskSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Partitions one participant's tasks; 8 tasks split 5/1/2, other counts proportionally with at least one per side.
inline TaskSplit make_person_dependent_split(const Manifest& m, const std::string& participant_id, std::uint64_t seed,
                                             TaskProportions prop = {}) {
    require(m.find(participant_id) != nullptr, "unknown participant '" + participant_id + "'");
    std::set<std::string> distinct;
    for (const auto* s : m.samples_of(participant_id)) distinct.insert(s->task_id);
    const std::size_t k = distinct.size();
    require(k >= 4, "participant '" + participant_id + "' has " + std::to_string(k) +
                        " distinct tasks, person-dependent splits need at least 4");
    const double total = prop.train + prop.val + prop.test;
    const auto n_val = std::max<std::size_t>(1, std::size_t(std::llround(double(k) * prop.val / total)));
    const auto n_test = std::max<std::size_t>(1, std::size_t(std::llround(double(k) * prop.test / total)));
    require(n_val + n_test < k, "task proportions leave no training task");

    std::vector<std::string> tasks(distinct.begin(), distinct.end());
    SeededRng rng(mix_seed(seed, 0x7A5C));
    rng.shuffle(tasks);
    TaskSplit split;
    const std::size_t n_train = k - n_val - n_test;
    split.train.assign(tasks.begin(), tasks.begin() + std::ptrdiff_t(n_train));
    split.val.assign(tasks.begin() + std::ptrdiff_t(n_train), tasks.begin() + std::ptrdiff_t(n_train + n_val));
    split.test.assign(tasks.begin() + std::ptrdiff_t(n_train + n_val), tasks.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

}  // namespace deepfn
