#pragma once

#include <string>
#include <vector>

#include "ordinv/data_model.hpp"
#include "ordinv/simulation.hpp"

namespace fixture {

// Items named i1..iJ, groups A, B, ... and `per_group` rows per group whose
// responses cycle through the categories.
inline ordinv::OrdinalDataset small_dataset(int n_items, int n_groups, int n_categories, int per_group = 6) {
    ordinv::OrdinalDataset ds;
    for (int j = 0; j < n_items; ++j) ds.items.push_back({"i" + std::to_string(j + 1), n_categories});
    for (int g = 0; g < n_groups; ++g) ds.groups.push_back(std::string(1, static_cast<char>('A' + g)));
    for (int g = 0; g < n_groups; ++g) {
        for (int r = 0; r < per_group; ++r) {
            ordinv::Respondent row;
            row.group_index = g;
            for (int j = 0; j < n_items; ++j) {
                row.responses.push_back(static_cast<ordinv::Response>(1 + (r + j + g) % n_categories));
            }
            ds.rows.push_back(row);
        }
    }
    return ds;
}

inline ordinv::ModelSpec spec_for(const ordinv::OrdinalDataset& ds, ordinv::ConstraintLevel level,
                                  std::vector<std::string> anchors = {}) {
    ordinv::ModelSpec spec;
    for (const auto& item : ds.items) spec.item_names.push_back(item.name);
    spec.anchor_set = std::move(anchors);
    spec.constraint_level = level;
    spec.reference_group = ds.groups.front();
    return spec;
}

// Eight-item, two-group simulated replication with roles set.
inline ordinv::OrdinalDataset sim_dataset(double delta, int n, std::uint64_t seed, double gap = 0.2) {
    ordinv::SimCondition cond;
    cond.delta = delta;
    cond.n = n;
    cond.true_gap = gap;
    cond.base_seed = seed;
    return ordinv::generate_replication(cond, 0);
}

}  // namespace fixture
