#include "skillgraft/continual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skillgraft/metrics.hpp"

namespace sg {

std::string to_string(ContinualMode m) {
    return m == ContinualMode::naive ? "naive" : "graft";
}

ContinualMode continual_mode_from_string(const std::string& s) {
    if (s == "naive") return ContinualMode::naive;
    if (s == "graft") return ContinualMode::graft;
    fail_config("unknown continual mode: " + s);
}

namespace {

void check_head(const ContinualState& state, size_t task_index, size_t num_classes) {
    const Segment* head = state.pre.find_segment(mt_head_name(task_index));
    if (!head)
        fail_config("continual: parameter layout is missing segment " + mt_head_name(task_index));
    if (head->length % num_classes != 0)
        fail_config("continual: segment " + mt_head_name(task_index) + " does not hold " +
                    std::to_string(num_classes) + " classes");
}

GraftRegion union_of(const std::vector<GraftRegion>& regions, size_t count, uint64_t total) {
    GraftRegion u;
    u.total_params = total;
    u.provenance = Provenance::union_;
    for (size_t i = 0; i < count; ++i) u = region_union(u, regions[i]);
    return u;
}

}  // namespace

ContinualState init_continual(const ParameterVector& pre, ContinualMode mode) {
    pre.validate();
    return ContinualState{pre, {}, pre, mode, 0};
}

std::optional<std::string> continual_step(ContinualState& state, const ModelSpec& spec,
                                          const CollectionEntry& entry,
                                          const MaskOptConfig& maskcfg,
                                          const OptimizerConfig& optcfg) {
    TaskCollection probe{spec, {entry}};
    probe.validate();
    optcfg.validate();
    const size_t n = state.tasks_seen;
    const std::string head = mt_head_name(n);
    check_head(state, n, entry.task.num_classes);

    if (state.mode == ContinualMode::naive) {
        state.current_params = train(state.current_params, spec, entry.train.inputs,
                                     entry.train.labels, optcfg, 0, head)
                                   .final;
        ++state.tasks_seen;
        return std::nullopt;
    }

    maskcfg.validate();
    // Region discovery runs on a fresh copy of pre, never on the sequential
    // model, so a task's region does not depend on its arrival position.
    ParameterVector solo =
        train(state.pre, spec, entry.train.inputs, entry.train.labels, optcfg, 0, head).final;
    GraftRegion empty_base;
    empty_base.total_params = state.pre.size();
    GraftRegion region =
        optimize_mask(state.pre, solo, empty_base, entry.train, spec, maskcfg, head).second;

    GraftRegion prior = union_of(state.task_regions, state.task_regions.size(), state.pre.size());
    GraftRegion effective = region_difference(region, prior);
    state.task_regions.push_back(std::move(region));
    ++state.tasks_seen;
    if (effective.indices.empty()) {
        std::ostringstream msg;
        msg << "task " << n << ": region fully covered by earlier tasks, nothing trained";
        return msg.str();
    }
    state.current_params =
        retrain_region(state.current_params, spec, effective, entry.train, optcfg, head);
    return std::nullopt;
}

double continual_eval(const ContinualState& state, const ModelSpec& spec,
                      const CollectionEntry& entry, size_t task_index, bool all_seen) {
    if (task_index >= state.tasks_seen)
        fail_config("continual_eval: task " + std::to_string(task_index) + " not seen yet");
    const std::string head = mt_head_name(task_index);
    if (state.mode == ContinualMode::naive)
        return accuracy(state.current_params, spec, entry.test, head);
    size_t count = all_seen ? state.task_regions.size() : task_index + 1;
    GraftRegion u = union_of(state.task_regions, count, state.pre.size());
    return accuracy(graft_compose(state.pre, state.current_params, u), spec, entry.test, head);
}

ContinualResult run_continual(const ParameterVector& pre, const ModelSpec& spec,
                              const std::vector<CollectionEntry>& sequence, ContinualMode mode,
                              const MaskOptConfig& maskcfg, const OptimizerConfig& optcfg,
                              bool all_seen) {
    TaskCollection coll{spec, sequence};
    coll.validate();
    maskcfg.validate();
    optcfg.validate();

    ContinualResult r;
    r.mode = mode;
    ContinualState state = init_continual(pre, mode);
    for (size_t t = 0; t < sequence.size(); ++t) {
        check_head(state, t, sequence[t].task.num_classes);
        r.task_ids.push_back("task" + std::to_string(t));
        r.head_cost += pre.segment(mt_head_name(t)).length;
    }

    GraftRegion seen;
    seen.total_params = pre.size();
    for (size_t n = 0; n < sequence.size(); ++n) {
        auto warning = continual_step(state, spec, sequence[n], maskcfg, optcfg);
        if (warning) r.warnings.push_back(*warning);
        if (mode == ContinualMode::graft) {
            const GraftRegion& region = state.task_regions[n];
            r.region_sizes.push_back(region.indices.size());
            r.effective_sizes.push_back(region_difference(region, seen).indices.size());
            r.localization_cost += region.indices.size();
            seen = region_union(seen, region);
        }
        std::vector<double> row;
        row.reserve(n + 1);
        for (size_t t = 0; t <= n; ++t)
            row.push_back(continual_eval(state, spec, sequence[t], t, all_seen));
        r.accuracy.push_back(std::move(row));
    }

    const size_t last = sequence.size() - 1;
    for (size_t t = 0; t < sequence.size(); ++t) {
        double peak = 0.0;
        for (size_t n = t; n < sequence.size(); ++n) peak = std::max(peak, r.accuracy[n][t]);
        r.forgetting.push_back(peak - r.accuracy[last][t]);
    }

    if (mode == ContinualMode::graft && maskcfg.sparsity_budget) {
        size_t graftable = graftable_indices(spec, pre).size();
        uint64_t cap = static_cast<uint64_t>(
            std::ceil(*maskcfg.sparsity_budget * static_cast<double>(graftable)));
        if (r.localization_cost > sequence.size() * cap)
            fail_numerical("continual: stored region cost " +
                           std::to_string(r.localization_cost) + " exceeds " +
                           std::to_string(sequence.size()) + " tasks x " + std::to_string(cap));
    }
    return r;
}

Json continual_to_json(const ContinualResult& r) {
    Json j;
    j["mode"] = to_string(r.mode);
    j["task_ids"] = r.task_ids;
    j["accuracy"] = r.accuracy;
    j["region_sizes"] = r.region_sizes;
    j["effective_sizes"] = r.effective_sizes;
    j["forgetting"] = r.forgetting;
    j["warnings"] = r.warnings;
    j["localization_cost"] = r.localization_cost;
    j["head_cost"] = r.head_cost;
    return j;
}

ContinualResult continual_from_json(const Json& j) {
    ContinualResult r;
    try {
        r.mode = continual_mode_from_string(j.at("mode").get<std::string>());
        r.task_ids = j.at("task_ids").get<std::vector<std::string>>();
        r.accuracy = j.at("accuracy").get<std::vector<std::vector<double>>>();
        r.region_sizes = j.at("region_sizes").get<std::vector<uint64_t>>();
        r.effective_sizes = j.at("effective_sizes").get<std::vector<uint64_t>>();
        r.forgetting = j.at("forgetting").get<std::vector<double>>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.localization_cost = j.at("localization_cost").get<uint64_t>();
        r.head_cost = j.at("head_cost").get<uint64_t>();
    } catch (const Json::exception& e) {
        fail_data(std::string("continual report: ") + e.what());
    }
    const size_t n = r.task_ids.size();
    if (n == 0) fail_data("continual report: no tasks");
    if (r.accuracy.size() != n || r.forgetting.size() != n)
        fail_data("continual report: matrix does not match task count");
    if (r.region_sizes.size() != r.effective_sizes.size() ||
        (!r.region_sizes.empty() && r.region_sizes.size() != n))
        fail_data("continual report: region sizes do not match task count");
    for (size_t row = 0; row < n; ++row) {
        if (r.accuracy[row].size() != row + 1)
            fail_data("continual report: row " + std::to_string(row) + " is not lower-triangular");
        for (double a : r.accuracy[row])
            if (!std::isfinite(a) || a < 0.0 || a > 1.0)
                fail_data("continual report: accuracy outside [0, 1]");
    }
    for (double f : r.forgetting)
        if (!std::isfinite(f) || f < 0.0) fail_data("continual report: negative forgetting");
    return r;
}

void write_continual_csv(const std::filesystem::path& path, const ContinualResult& r) {
    std::string text = "after";
    for (const auto& id : r.task_ids) text += "," + id;
    text += "\n";
    for (size_t n = 0; n < r.accuracy.size(); ++n) {
        text += r.task_ids[n];
        for (size_t t = 0; t < r.task_ids.size(); ++t)
            // cells above the diagonal stay empty: the task was unseen there
            text += "," + (t < r.accuracy[n].size() ? format_g17(r.accuracy[n][t]) : "");
        text += "\n";
    }
    atomic_write_text(path, text);
}

}  // namespace sg
