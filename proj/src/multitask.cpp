#include "skillgraft/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "skillgraft/metrics.hpp"

namespace sg {

std::string mt_head_name(size_t task_index) { return "head" + std::to_string(task_index); }

std::vector<size_t> TaskCollection::class_counts() const {
    std::vector<size_t> counts;
    counts.reserve(entries.size());
    for (const auto& e : entries) counts.push_back(e.task.num_classes);
    return counts;
}

void TaskCollection::validate() const {
    if (entries.empty()) fail_config("task collection: no tasks");
    spec.validate();
    if (spec.head_mode != HeadMode::frozen_random)
        fail_config("task collection: joint training uses frozen per-task heads");
    for (size_t t = 0; t < entries.size(); ++t) {
        const CollectionEntry& e = entries[t];
        e.task.validate();
        std::string where = "task collection entry " + std::to_string(t);
        if (e.task.world.obs_dim != spec.input_dim)
            fail_config(where + ": observation width does not match model input_dim");
        for (const Dataset* d : {&e.train, &e.test}) {
            if (static_cast<size_t>(d->inputs.cols()) != spec.input_dim)
                fail_config(where + ": dataset width does not match model input_dim");
            if (static_cast<size_t>(d->inputs.rows()) != d->labels.size())
                fail_data(where + ": labels do not match dataset");
        }
    }
}

ParameterVector init_mt_model(const TaskCollection& collection, uint64_t seed) {
    collection.validate();
    ParameterVector p;
    p.segments = build_segments_multi(collection.spec, collection.class_counts());
    p.values.assign(p.segments.back().offset + p.segments.back().length, 0.0);
    // Body stream identical to init_model so the single-task degenerate case
    // is bit-exact against the plain path.
    Rng rng = derive_rng(seed, kStreamInit);
    size_t in = collection.spec.input_dim;
    for (const auto& s : p.segments) {
        switch (s.kind) {
            case ParamKind::weight: {
                double lim = 1.0 / std::sqrt(static_cast<double>(in));
                for (size_t i = 0; i < s.length; ++i)
                    p.values[s.offset + i] = (2.0 * rng.uniform() - 1.0) * lim;
                in = s.length / in;
                break;
            }
            case ParamKind::bias:
            case ParamKind::layernorm_shift:
                break;  // zeros
            case ParamKind::layernorm_scale:
                std::fill(p.values.begin() + s.offset, p.values.begin() + s.offset + s.length, 1.0);
                break;
            case ParamKind::head:
                break;  // drawn below from the task's head seed
        }
    }
    for (size_t t = 0; t < collection.entries.size(); ++t)
        set_unit_norm_head(p, mt_head_name(t), collection.entries[t].task.num_classes,
                           head_seed(collection.entries[t].task));
    return p;
}

TrainResult train_mt(const ParameterVector& pre, const TaskCollection& collection,
                     OptimizerConfig cfg) {
    collection.validate();
    cfg.validate();
    for (size_t t = 0; t < collection.entries.size(); ++t)
        if (!pre.find_segment(mt_head_name(t)))
            fail_config("train_mt: parameter layout is missing segment " + mt_head_name(t));
    size_t budget = cfg.steps;
    if (budget == 0)
        for (const auto& e : collection.entries)
            budget = std::max(budget, default_steps(e.task.num_classes, e.train.k));
    cfg.steps = 8 * budget;
    std::vector<TrainTask> tasks(collection.entries.size());
    for (size_t t = 0; t < collection.entries.size(); ++t)
        tasks[t] = {&collection.entries[t].train.inputs, &collection.entries[t].train.labels,
                    mt_head_name(t)};
    return train_tasks(pre, collection.spec, tasks, cfg);
}

std::vector<GraftRegion> per_task_regions(const ParameterVector& pre, const ParameterVector& mt,
                                          const TaskCollection& collection,
                                          const MaskOptConfig& cfg) {
    collection.validate();
    GraftRegion empty_base;
    empty_base.total_params = pre.size();
    std::vector<GraftRegion> regions;
    regions.reserve(collection.entries.size());
    for (size_t t = 0; t < collection.entries.size(); ++t)
        regions.push_back(optimize_mask(pre, mt, empty_base, collection.entries[t].train,
                                        collection.spec, cfg, mt_head_name(t))
                              .second);
    return regions;
}

OverlapMatrix overlap_matrix(const std::vector<GraftRegion>& regions,
                             std::vector<std::string> task_ids) {
    if (regions.empty()) fail_config("overlap_matrix: no regions");
    for (const auto& r : regions) {
        r.validate();
        if (r.total_params != regions[0].total_params)
            fail_config("overlap_matrix: regions disagree on total_params");
    }
    if (task_ids.empty())
        for (size_t i = 0; i < regions.size(); ++i) task_ids.push_back("task" + std::to_string(i));
    if (task_ids.size() != regions.size()) fail_config("overlap_matrix: task id count mismatch");

    size_t n = regions.size();
    OverlapMatrix m;
    m.task_ids = std::move(task_ids);
    m.values.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        m.values[i][i] = 1.0;  // full self-cover; also the both-empty convention
        for (size_t j = i + 1; j < n; ++j) {
            // One intersection count per pair keeps o[i][j]*|r_j| == o[j][i]*|r_i| exact.
            auto inter = static_cast<double>(region_intersection_size(regions[i], regions[j]));
            m.values[i][j] =
                regions[j].indices.empty() ? 0.0 : inter / static_cast<double>(regions[j].indices.size());
            m.values[j][i] =
                regions[i].indices.empty() ? 0.0 : inter / static_cast<double>(regions[i].indices.size());
        }
    }
    return m;
}

GraftRegion union_region(const std::vector<GraftRegion>& regions,
                         const std::vector<size_t>& group) {
    if (group.empty()) fail_config("union_region: empty group");
    for (size_t g : group)
        if (g >= regions.size()) fail_config("union_region: group index out of range");
    GraftRegion u = regions[group[0]];
    u.validate();
    u.provenance = Provenance::union_;
    for (size_t k = 1; k < group.size(); ++k) u = region_union(u, regions[group[k]]);
    return u;
}

GraftRegion purify_union(const ParameterVector& pre, const ParameterVector& mt,
                         const GraftRegion& union_reg, const TaskCollection& collection,
                         const std::vector<size_t>& group, const MaskOptConfig& cfg,
                         size_t steps) {
    collection.validate();
    cfg.validate();
    if (!pre.graft_compatible(mt) || pre.size() != mt.size())
        fail_config("purify_union: model layouts differ");
    union_reg.validate();
    if (union_reg.total_params != pre.size())
        fail_config("purify_union: region size does not match the models");
    if (group.empty()) fail_config("purify_union: empty group");
    for (size_t g : group)
        if (g >= collection.entries.size()) fail_config("purify_union: group index out of range");

    MaskLogits logits;
    logits.eps.assign(pre.size(), cfg.init_value);
    logits.base = union_reg;
    logits.init_value = cfg.init_value;
    auto frozen = frozen_coords(collection.spec, pre);
    logits.graftable.resize(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) logits.graftable[i] = !frozen[i];

    struct GroupTask {
        const Dataset* data;
        std::vector<int> labels;
        std::string head;
        Rng shuffle;
        std::vector<size_t> order;
        size_t cursor = 0;
    };
    std::vector<GroupTask> gts;
    gts.reserve(group.size());
    for (size_t g : group) {
        const CollectionEntry& e = collection.entries[g];
        size_t n = static_cast<size_t>(e.train.inputs.rows());
        if (n == 0) fail_data("purify_union: empty dataset for entry " + std::to_string(g));
        GroupTask gt{&e.train, e.train.labels, mt_head_name(g),
                     derive_rng(cfg.seed, kStreamShuffle, g), {}, 0};
        if (cfg.label_source == LabelSource::ft_model) {
            Matrix mt_logits = forward(mt, collection.spec, e.train.inputs, gt.head);
            for (size_t i = 0; i < n; ++i) {
                int best = 0;
                for (int c = 1; c < mt_logits.cols(); ++c)
                    if (mt_logits(i, c) > mt_logits(i, best)) best = c;
                gt.labels[i] = best;
            }
        }
        gt.order = gt.shuffle.permutation(n);
        gts.push_back(std::move(gt));
    }

    std::vector<double> grad_mean(pre.size());
    Matrix batch;
    std::vector<int> batch_labels;
    for (size_t step = 1; step <= steps; ++step) {
        std::fill(grad_mean.begin(), grad_mean.end(), 0.0);
        double loss_mean = 0.0;
        for (GroupTask& gt : gts) {
            size_t n = static_cast<size_t>(gt.data->inputs.rows());
            size_t b = std::min(cfg.batch_size, n);
            batch.resize(b, gt.data->inputs.cols());
            batch_labels.resize(b);
            for (size_t i = 0; i < b; ++i) {
                if (gt.cursor >= n) {
                    gt.order = gt.shuffle.permutation(n);
                    gt.cursor = 0;
                }
                size_t r = gt.order[gt.cursor++];
                batch.row(i) = gt.data->inputs.row(r);
                batch_labels[i] = gt.labels[r];
            }
            LossGrad lg =
                mask_loss_and_grad(pre, mt, logits, collection.spec, batch, batch_labels, gt.head);
            loss_mean += lg.loss;
            for (size_t i = 0; i < grad_mean.size(); ++i) grad_mean[i] += lg.grad[i];
        }
        loss_mean /= static_cast<double>(gts.size());
        if (!std::isfinite(loss_mean))
            fail_numerical("purification loss became non-finite at step " + std::to_string(step));
        double scale = cfg.learning_rate / static_cast<double>(gts.size());
        for (size_t i = 0; i < logits.eps.size(); ++i) logits.eps[i] -= scale * grad_mean[i];
    }
    return binarize_mask(logits, cfg.threshold);
}

TransferMatrix transfer_matrix(const ParameterVector& pre, const ParameterVector& mt,
                               const std::vector<GraftRegion>& regions,
                               const TaskCollection& collection) {
    collection.validate();
    if (regions.empty()) fail_config("transfer_matrix: no regions");
    if (!pre.graft_compatible(mt) || pre.size() != mt.size())
        fail_config("transfer_matrix: model layouts differ");
    for (const auto& r : regions) {
        r.validate();
        if (r.total_params != pre.size())
            fail_config("transfer_matrix: region size does not match the models");
    }

    size_t nt = collection.entries.size();
    std::vector<double> p_zero(nt), p_one(nt);
    std::vector<uint8_t> degenerate_task(nt);
    for (size_t j = 0; j < nt; ++j) {
        p_zero[j] = accuracy(pre, collection.spec, collection.entries[j].test, mt_head_name(j));
        p_one[j] = accuracy(mt, collection.spec, collection.entries[j].test, mt_head_name(j));
        degenerate_task[j] = p_one[j] == p_zero[j];
    }

    TransferMatrix m;
    for (size_t j = 0; j < nt; ++j) m.task_ids.push_back("task" + std::to_string(j));
    m.values.assign(regions.size(), std::vector<double>(nt, 0.0));
    m.degenerate.assign(regions.size(), std::vector<uint8_t>(nt, 0));
    for (size_t i = 0; i < regions.size(); ++i) {
        ParameterVector grafted = graft_compose(pre, mt, regions[i]);
        for (size_t j = 0; j < nt; ++j) {
            double p_r = accuracy(grafted, collection.spec, collection.entries[j].test, mt_head_name(j));
            if (degenerate_task[j])
                m.degenerate[i][j] = 1;  // value stays 0, the cell is flagged not dropped
            else
                m.values[i][j] = rel_gain(p_r, p_zero[j], p_one[j]);
        }
    }
    return m;
}

void write_overlap_csv(const std::filesystem::path& path, const OverlapMatrix& m) {
    std::string text = "region";
    for (const auto& id : m.task_ids) text += "," + id;
    text += "\n";
    for (size_t i = 0; i < m.values.size(); ++i) {
        text += m.task_ids[i];
        for (double v : m.values[i]) text += "," + format_g17(v);
        text += "\n";
    }
    atomic_write_text(path, text);
}

void write_transfer_csv(const std::filesystem::path& path, const TransferMatrix& m) {
    std::string text = "region";
    for (const auto& id : m.task_ids) text += "," + id;
    text += "\n";
    for (size_t i = 0; i < m.values.size(); ++i) {
        text += "region" + std::to_string(i);
        for (size_t j = 0; j < m.values[i].size(); ++j) {
            text += ",";
            if (!m.degenerate[i][j]) text += format_g17(m.values[i][j]);
            // flagged cells stay empty: no gain is defined there
        }
        text += "\n";
    }
    atomic_write_text(path, text);
}

Json overlap_to_json(const OverlapMatrix& m) {
    Json doc;
    doc["task_ids"] = m.task_ids;
    doc["values"] = m.values;
    return doc;
}

OverlapMatrix overlap_from_json(const Json& doc) {
    OverlapMatrix m;
    try {
        m.task_ids = doc.at("task_ids").get<std::vector<std::string>>();
        m.values = doc.at("values").get<std::vector<std::vector<double>>>();
    } catch (const Json::exception& e) {
        fail_data(std::string("overlap matrix: ") + e.what());
    }
    if (m.values.size() != m.task_ids.size()) fail_data("overlap matrix: row count mismatch");
    for (const auto& row : m.values) {
        if (row.size() != m.task_ids.size()) fail_data("overlap matrix: ragged rows");
        for (double v : row)
            if (!(v >= 0.0 && v <= 1.0)) fail_data("overlap matrix: value outside [0, 1]");
    }
    return m;
}

Json transfer_to_json(const TransferMatrix& m) {
    Json doc;
    doc["task_ids"] = m.task_ids;
    doc["values"] = m.values;
    doc["degenerate"] = m.degenerate;
    return doc;
}

TransferMatrix transfer_from_json(const Json& doc) {
    TransferMatrix m;
    try {
        m.task_ids = doc.at("task_ids").get<std::vector<std::string>>();
        m.values = doc.at("values").get<std::vector<std::vector<double>>>();
        m.degenerate = doc.at("degenerate").get<std::vector<std::vector<uint8_t>>>();
    } catch (const Json::exception& e) {
        fail_data(std::string("transfer matrix: ") + e.what());
    }
    if (m.degenerate.size() != m.values.size()) fail_data("transfer matrix: flag shape mismatch");
    for (size_t i = 0; i < m.values.size(); ++i) {
        if (m.values[i].size() != m.task_ids.size() || m.degenerate[i].size() != m.task_ids.size())
            fail_data("transfer matrix: ragged rows");
        for (double v : m.values[i])
            if (!std::isfinite(v)) fail_data("transfer matrix: non-finite value");
    }
    return m;
}

}  // namespace sg
