#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skillgraft/graft.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/store.hpp"
#include "skillgraft/tasks.hpp"

namespace sg {

/// One task trained jointly with the others: its generator and data splits.
/// The head segment it owns is "head<t>" with t the entry index; see
/// mt_head_name.
struct CollectionEntry {
    TaskSpec task;
    Dataset train;
    Dataset test;
};

/// Tasks sharing one body. `spec` describes the body (hidden widths,
/// activation, layernorm, freezing); its head fields are ignored in favor of
/// one frozen unit-norm head per entry, appended in entry order by
/// build_segments_multi. Head segments are disjoint by construction.
struct TaskCollection {
    ModelSpec spec;
    std::vector<CollectionEntry> entries;

    std::vector<size_t> class_counts() const;
    // non-empty, frozen_random heads, matching input dims, consistent splits
    void validate() const;
};

/// Head segment name owned by entry t.
std::string mt_head_name(size_t task_index);

/// Body drawn exactly like init_model from `seed`; head t gets unit-norm rows
/// from head_seed(entries[t].task), so same-family tasks share a verbalizer.
ParameterVector init_mt_model(const TaskCollection& collection, uint64_t seed);

/// Joint fine-tuning: each step samples one task uniformly (seeded) and
/// applies one shared-body update through that task's head. The step budget
/// is 8x the single-task budget: 8 * cfg.steps when cfg.steps is set, else
/// 8 * the largest per-task default budget. Returns the full trace;
/// .final is the multi-task model.
TrainResult train_mt(const ParameterVector& pre, const TaskCollection& collection,
                     OptimizerConfig cfg);

/// One optimize_mask run per task on its train split, with an empty base
/// mask and the multi-task model as the fine-tuned endpoint. Regions in
/// entry order. cfg is used as-is for every run, so identical tasks yield
/// identical regions.
std::vector<GraftRegion> per_task_regions(const ParameterVector& pre, const ParameterVector& mt,
                                          const TaskCollection& collection,
                                          const MaskOptConfig& cfg);

/// o[i][j] = |r_i ∩ r_j| / |r_j|, the fraction of region j covered by region
/// i. Asymmetric. Empty r_j: 1 on the diagonal, 0 off it.
struct OverlapMatrix {
    std::vector<std::string> task_ids;
    std::vector<std::vector<double>> values;
};

/// Intersections are counted once per pair, so o[i][j]*|r_j| and o[j][i]*|r_i|
/// are the same integer. task_ids defaults to task0..task<n-1>.
OverlapMatrix overlap_matrix(const std::vector<GraftRegion>& regions,
                             std::vector<std::string> task_ids = {});

/// Sorted union of the group members' regions; provenance=union_.
GraftRegion union_region(const std::vector<GraftRegion>& regions,
                         const std::vector<size_t>& group);

/// A few mask-optimization steps on the union against the mean loss of the
/// group tasks: eps starts at cfg.init_value with base=union, each step draws
/// one batch per group task (per-task shuffle streams keyed by cfg.seed) and
/// descends the mean of the soft-graft losses. The result is re-binarized at
/// cfg.threshold; sparsity budgets do not apply here. steps overrides
/// cfg.steps; steps=0 returns the union membership unchanged.
GraftRegion purify_union(const ParameterVector& pre, const ParameterVector& mt,
                         const GraftRegion& union_reg, const TaskCollection& collection,
                         const std::vector<size_t>& group, const MaskOptConfig& cfg,
                         size_t steps = 10);

/// values[i][j] = rel_gain on task j's test split of grafting region i:
/// (acc(graft(pre, mt, r_i)) - acc(pre)) / (acc(mt) - acc(pre)).
/// A task where mt and pre tie makes the denominator degenerate: every cell
/// in that column is flagged and reported as 0, never dropped or thrown.
struct TransferMatrix {
    std::vector<std::string> task_ids;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<uint8_t>> degenerate;
};

TransferMatrix transfer_matrix(const ParameterVector& pre, const ParameterVector& mt,
                               const std::vector<GraftRegion>& regions,
                               const TaskCollection& collection);

// Matrix export: one header row of task ids, then one row per region/task.
void write_overlap_csv(const std::filesystem::path& path, const OverlapMatrix& m);
void write_transfer_csv(const std::filesystem::path& path, const TransferMatrix& m);
Json overlap_to_json(const OverlapMatrix& m);
OverlapMatrix overlap_from_json(const Json& j);
Json transfer_to_json(const TransferMatrix& m);
TransferMatrix transfer_from_json(const Json& j);

}  // namespace sg
