#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skillgraft/graft.hpp"
#include "skillgraft/multitask.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/store.hpp"

namespace sg {

enum class ContinualMode { naive, graft };

std::string to_string(ContinualMode m);
ContinualMode continual_mode_from_string(const std::string& s);

/// Sequential trainer state. Tasks arrive one at a time; in graft mode each
/// task claims the part of its discovered region no earlier task owns, so
/// coordinates outside the union of claimed regions stay bit-identical to
/// `pre` forever. Heads follow the multi-task layout: task n reads head<n>.
struct ContinualState {
    ParameterVector current_params;
    std::vector<GraftRegion> task_regions;  // graft mode: one per seen task, arrival order
    ParameterVector pre;
    ContinualMode mode = ContinualMode::graft;
    size_t tasks_seen = 0;  // also indexes the next task's head
};

struct ContinualResult {
    std::vector<std::string> task_ids;  // arrival order
    ContinualMode mode = ContinualMode::graft;
    /// accuracy[n][t]: accuracy on task t after training task n; rows are
    /// lower-triangular (defined for t <= n only).
    std::vector<std::vector<double>> accuracy;
    std::vector<uint64_t> region_sizes;     // |region_n| per task; empty in naive mode
    std::vector<uint64_t> effective_sizes;  // coordinates task n actually trained
    std::vector<double> forgetting;         // max_n accuracy[n][t] - accuracy[N][t], >= 0
    std::vector<std::string> warnings;      // tasks whose effective region was empty
    uint64_t localization_cost = 0;         // sum of region sizes
    uint64_t head_cost = 0;                 // frozen head coordinates, counted separately
};

ContinualState init_continual(const ParameterVector& pre, ContinualMode mode);

/// Advance the state by one task. Graft mode: fine-tune a fresh copy of
/// `state.pre` on the task alone, extract its region with optimize_mask, then
/// train the current parameters on the task restricted to the part of that
/// region not claimed earlier. Returns a warning when that part is empty (the
/// region is recorded and the task still evaluates through the union); naive
/// mode fine-tunes the whole body in place and never warns.
std::optional<std::string> continual_step(ContinualState& state, const ModelSpec& spec,
                                          const CollectionEntry& entry,
                                          const MaskOptConfig& maskcfg,
                                          const OptimizerConfig& optcfg);

/// Accuracy on a seen task's test split. Graft mode composes pre with the
/// current parameters on the union of the first task_index+1 regions (the
/// evaluated vector per task is then fixed at the moment the task was seen;
/// all_seen widens to every region seen so far) and reads the task's head.
/// Naive mode evaluates the current parameters directly.
double continual_eval(const ContinualState& state, const ModelSpec& spec,
                      const CollectionEntry& entry, size_t task_index, bool all_seen = false);

/// Run the full sequence and evaluate every seen task after each arrival.
/// `pre` must carry one frozen head per task in sequence order (see
/// init_mt_model). With a sparsity budget, the stored localization cost is
/// checked against tasks * ceil(budget * graftable).
ContinualResult run_continual(const ParameterVector& pre, const ModelSpec& spec,
                              const std::vector<CollectionEntry>& sequence, ContinualMode mode,
                              const MaskOptConfig& maskcfg, const OptimizerConfig& optcfg,
                              bool all_seen = false);

Json continual_to_json(const ContinualResult& r);
ContinualResult continual_from_json(const Json& j);

/// Accuracy matrix as delimited text: header row of task ids, one row per
/// arrival; cells above the diagonal stay empty.
void write_continual_csv(const std::filesystem::path& path, const ContinualResult& r);

}  // namespace sg
