#include "skillgraft/graft.hpp"

#include <algorithm>
#include <cmath>

namespace sg {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::learned: return "learned";
        case Provenance::movement_topk: return "movement_topk";
        case Provenance::random: return "random";
        case Provenance::bias_only: return "bias_only";
        case Provenance::fisher: return "fisher";
        case Provenance::union_: return "union";
        case Provenance::difference: return "difference";
    }
    return "?";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "learned") return Provenance::learned;
    if (s == "movement_topk") return Provenance::movement_topk;
    if (s == "random") return Provenance::random;
    if (s == "bias_only") return Provenance::bias_only;
    if (s == "fisher") return Provenance::fisher;
    if (s == "union") return Provenance::union_;
    if (s == "difference") return Provenance::difference;
    fail_config("unknown provenance '" + s + "'");
}

std::string to_string(LabelSource s) { return s == LabelSource::ground_truth ? "ground_truth" : "ft_model"; }

LabelSource label_source_from_string(const std::string& s) {
    if (s == "ground_truth") return LabelSource::ground_truth;
    if (s == "ft_model") return LabelSource::ft_model;
    fail_config("unknown label source '" + s + "'");
}

std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::random: return "random";
        case BaselineKind::bias_only: return "bias_only";
        case BaselineKind::fisher: return "fisher";
    }
    return "?";
}

bool GraftRegion::contains(uint64_t i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
}

void GraftRegion::validate() const {
    for (size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= total_params) fail_config("region: index out of range");
        if (i > 0 && indices[i] <= indices[i - 1]) fail_config("region: indices not strictly increasing");
    }
}

GraftRegion region_from_indices(std::vector<uint64_t> indices, uint64_t total_params,
                                Provenance provenance) {
    std::sort(indices.begin(), indices.end());
    GraftRegion r{std::move(indices), total_params, provenance};
    r.validate();
    return r;
}

GraftRegion region_union(const GraftRegion& a, const GraftRegion& b) {
    if (a.total_params != b.total_params) fail_config("region union: size mismatch");
    GraftRegion r;
    r.total_params = a.total_params;
    r.provenance = Provenance::union_;
    std::set_union(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end(),
                   std::back_inserter(r.indices));
    return r;
}

GraftRegion region_difference(const GraftRegion& a, const GraftRegion& b) {
    if (a.total_params != b.total_params) fail_config("region difference: size mismatch");
    GraftRegion r;
    r.total_params = a.total_params;
    r.provenance = Provenance::difference;
    std::set_difference(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end(),
                        std::back_inserter(r.indices));
    return r;
}

size_t region_intersection_size(const GraftRegion& a, const GraftRegion& b) {
    size_t n = 0;
    auto ia = a.indices.begin();
    auto ib = b.indices.begin();
    while (ia != a.indices.end() && ib != b.indices.end()) {
        if (*ia < *ib)
            ++ia;
        else if (*ib < *ia)
            ++ib;
        else {
            ++n;
            ++ia;
            ++ib;
        }
    }
    return n;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_compatible(const ParameterVector& pre, const ParameterVector& ft) {
    if (!pre.graft_compatible(ft)) fail_config("parameter vectors are not graft-compatible");
}

}  // namespace

std::vector<double> MaskLogits::effective_gamma() const {
    std::vector<double> g(eps.size());
    for (size_t i = 0; i < eps.size(); ++i) {
        double s = sigmoid(eps[i]);
        g[i] = base.contains(i) ? 1.0 - s : s;
    }
    return g;
}

void MaskOptConfig::validate() const {
    if (learning_rate <= 0.0) fail_config("mask optimizer: learning_rate must be positive");
    if (batch_size == 0) fail_config("mask optimizer: batch_size must be positive");
    if (threshold <= 0.0 || threshold >= 1.0) fail_config("mask optimizer: threshold must lie in (0, 1)");
    if (sparsity_budget && (*sparsity_budget <= 0.0 || *sparsity_budget > 1.0))
        fail_config("mask optimizer: sparsity budget must lie in (0, 1]");
    if (!std::isfinite(init_value)) fail_config("mask optimizer: init_value must be finite");
}

ParameterVector graft_compose(const ParameterVector& pre, const ParameterVector& ft,
                              const GraftRegion& region) {
    check_compatible(pre, ft);
    if (region.total_params != pre.size()) fail_config("graft_compose: region size mismatch");
    ParameterVector out = pre;
    for (uint64_t i : region.indices) out.values[i] = ft.values[i];
    return out;
}

ParameterVector soft_graft_compose(const ParameterVector& pre, const ParameterVector& ft,
                                   const MaskLogits& logits) {
    check_compatible(pre, ft);
    if (logits.eps.size() != pre.size()) fail_config("soft_graft_compose: logits size mismatch");
    ParameterVector out = pre;
    auto gamma = logits.effective_gamma();
    for (size_t i = 0; i < out.size(); ++i)
        out.values[i] = gamma[i] * ft.values[i] + (1.0 - gamma[i]) * pre.values[i];
    return out;
}

namespace {

/// ceil(fraction * n) without float drift on exact multiples.
size_t budget_count(double fraction, size_t n) {
    return static_cast<size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
}

GraftRegion top_k_region(const std::vector<double>& score, const std::vector<uint8_t>& eligible,
                         size_t count, uint64_t total, Provenance provenance) {
    std::vector<uint64_t> order;
    order.reserve(total);
    for (uint64_t i = 0; i < total; ++i)
        if (eligible[i]) order.push_back(i);
    if (count > order.size()) fail_config("top-k region: budget exceeds eligible coordinates");
    std::partial_sort(order.begin(), order.begin() + count, order.end(),
                      [&](uint64_t a, uint64_t b) {
                          if (score[a] != score[b]) return score[a] > score[b];
                          return a < b;
                      });
    order.resize(count);
    return region_from_indices(std::move(order), total, provenance);
}

}  // namespace

GraftRegion movement_region(const ParameterVector& pre, const ParameterVector& ft,
                            const ModelSpec& spec, double fraction) {
    check_compatible(pre, ft);
    if (fraction <= 0.0 || fraction > 1.0) fail_config("movement_region: fraction must lie in (0, 1]");
    auto frozen = frozen_coords(spec, pre);
    std::vector<uint8_t> eligible(pre.size());
    size_t n_graftable = 0;
    for (size_t i = 0; i < pre.size(); ++i) {
        eligible[i] = !frozen[i];
        n_graftable += eligible[i];
    }
    std::vector<double> score(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) score[i] = std::abs(ft.values[i] - pre.values[i]);
    return top_k_region(score, eligible, budget_count(fraction, n_graftable), pre.size(),
                        Provenance::movement_topk);
}

GraftRegion baseline_region(BaselineKind kind, const ParameterVector& params, const ModelSpec& spec,
                            const Dataset* data, double fraction, uint64_t seed,
                            const std::string& head_name) {
    auto frozen = frozen_coords(spec, params);
    std::vector<uint64_t> graftable;
    for (size_t i = 0; i < params.size(); ++i)
        if (!frozen[i]) graftable.push_back(i);

    switch (kind) {
        case BaselineKind::random: {
            if (fraction <= 0.0 || fraction > 1.0)
                fail_config("baseline_region: fraction must lie in (0, 1]");
            size_t count = budget_count(fraction, graftable.size());
            Rng rng = derive_rng(seed, kStreamRegion);
            auto picks = rng.sample_without_replacement(graftable.size(), count);
            std::vector<uint64_t> idx(picks.size());
            for (size_t i = 0; i < picks.size(); ++i) idx[i] = graftable[picks[i]];
            return region_from_indices(std::move(idx), params.size(), Provenance::random);
        }
        case BaselineKind::bias_only: {
            std::vector<uint64_t> idx;
            for (const auto& s : params.segments)
                if (s.kind == ParamKind::bias)
                    for (size_t i = 0; i < s.length; ++i) idx.push_back(s.offset + i);
            return region_from_indices(std::move(idx), params.size(), Provenance::bias_only);
        }
        case BaselineKind::fisher: {
            if (!data) fail_config("baseline_region: fisher needs a dataset");
            if (fraction <= 0.0 || fraction > 1.0)
                fail_config("baseline_region: fraction must lie in (0, 1]");
            size_t n = data->inputs.rows();
            if (n == 0) fail_data("baseline_region: empty dataset");
            Matrix probs = forward(params, spec, data->inputs, head_name);
            for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                double mx = probs.row(r).maxCoeff();
                probs.row(r) = (probs.row(r).array() - mx).exp();
                probs.row(r) /= probs.row(r).sum();
            }
            Rng rng = derive_rng(seed, kStreamFisher);
            std::vector<double> fisher(params.size(), 0.0);
            Matrix row(1, data->inputs.cols());
            for (size_t s = 0; s < n; ++s) {
                // draw the label from the model's own predictive distribution
                double u = rng.uniform(), acc = 0.0;
                int y = static_cast<int>(probs.cols()) - 1;
                for (int c = 0; c < probs.cols(); ++c) {
                    acc += probs(s, c);
                    if (u < acc) {
                        y = c;
                        break;
                    }
                }
                row = data->inputs.row(s);
                LossGrad lg = loss_and_grad(params, spec, row, {y}, nullptr, 0.0, head_name,
                                            /*raw=*/true);
                // dlogp/dtheta = -dloss/dtheta for a single sample
                for (size_t i = 0; i < fisher.size(); ++i) fisher[i] += lg.grad[i] * lg.grad[i];
            }
            for (double& f : fisher) f /= static_cast<double>(n);
            std::vector<uint8_t> eligible(params.size(), 0);
            for (uint64_t i : graftable) eligible[i] = 1;
            return top_k_region(fisher, eligible, budget_count(fraction, graftable.size()),
                                params.size(), Provenance::fisher);
        }
    }
    fail_config("baseline_region: unknown kind");
}

LossGrad mask_loss_and_grad(const ParameterVector& pre, const ParameterVector& ft,
                            const MaskLogits& logits, const ModelSpec& spec, const Matrix& inputs,
                            const std::vector<int>& labels, const std::string& head_name) {
    ParameterVector composed = soft_graft_compose(pre, ft, logits);
    LossGrad inner = loss_and_grad(composed, spec, inputs, labels, nullptr, 0.0, head_name,
                                   /*raw=*/true);
    LossGrad out;
    out.loss = inner.loss;
    out.grad.assign(logits.eps.size(), 0.0);
    for (size_t i = 0; i < logits.eps.size(); ++i) {
        double s = sigmoid(logits.eps[i]);
        double chain = inner.grad[i] * (ft.values[i] - pre.values[i]) * s * (1.0 - s);
        out.grad[i] = logits.base.contains(i) ? -chain : chain;
    }
    return out;
}

std::pair<MaskLogits, GraftRegion> optimize_mask(const ParameterVector& pre,
                                                 const ParameterVector& ft, const GraftRegion& base,
                                                 const Dataset& data, const ModelSpec& spec,
                                                 const MaskOptConfig& cfg,
                                                 const std::string& head_name) {
    cfg.validate();
    check_compatible(pre, ft);
    if (base.total_params != pre.size()) fail_config("optimize_mask: base region size mismatch");
    size_t n = data.inputs.rows();
    if (n == 0) fail_data("optimize_mask: empty dataset");
    if (data.labels.size() != n) fail_data("optimize_mask: labels do not match dataset");

    MaskLogits logits;
    logits.eps.assign(pre.size(), cfg.init_value);
    logits.base = base;
    logits.init_value = cfg.init_value;
    auto frozen = frozen_coords(spec, pre);
    logits.graftable.resize(pre.size());
    for (size_t i = 0; i < pre.size(); ++i) logits.graftable[i] = !frozen[i];

    std::vector<int> labels = data.labels;
    if (cfg.label_source == LabelSource::ft_model) {
        Matrix ft_logits = forward(ft, spec, data.inputs, head_name);
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            for (int c = 1; c < ft_logits.cols(); ++c)
                if (ft_logits(i, c) > ft_logits(i, best)) best = c;
            labels[i] = best;
        }
    }

    Rng shuffle = derive_rng(cfg.seed, kStreamShuffle);
    std::vector<size_t> order = shuffle.permutation(n);
    size_t cursor = 0;
    Matrix batch;
    std::vector<int> batch_labels;
    for (size_t step = 1; step <= cfg.steps; ++step) {
        size_t b = std::min(cfg.batch_size, n);
        batch.resize(b, data.inputs.cols());
        batch_labels.resize(b);
        for (size_t i = 0; i < b; ++i) {
            if (cursor >= n) {
                order = shuffle.permutation(n);
                cursor = 0;
            }
            size_t r = order[cursor++];
            batch.row(i) = data.inputs.row(r);
            batch_labels[i] = labels[r];
        }
        LossGrad lg = mask_loss_and_grad(pre, ft, logits, spec, batch, batch_labels, head_name);
        if (!std::isfinite(lg.loss))
            fail_numerical("mask loss became non-finite at step " + std::to_string(step));
        for (size_t i = 0; i < logits.eps.size(); ++i)
            logits.eps[i] -= cfg.learning_rate * lg.grad[i];
    }

    GraftRegion region = cfg.sparsity_budget ? project_sparsity(logits, *cfg.sparsity_budget)
                                             : binarize_mask(logits, cfg.threshold);
    return {std::move(logits), std::move(region)};
}

GraftRegion binarize_mask(const MaskLogits& logits, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) fail_config("binarize_mask: threshold must lie in (0, 1)");
    auto gamma = logits.effective_gamma();
    std::vector<uint64_t> idx;
    for (size_t i = 0; i < gamma.size(); ++i)
        if (gamma[i] > threshold) idx.push_back(i);
    return region_from_indices(std::move(idx), gamma.size(), Provenance::learned);
}

GraftRegion project_sparsity(const MaskLogits& logits, double budget) {
    if (budget <= 0.0 || budget > 1.0) fail_config("project_sparsity: budget must lie in (0, 1]");
    if (logits.graftable.size() != logits.eps.size())
        fail_config("project_sparsity: logits lack graftable annotations");
    auto gamma = logits.effective_gamma();
    size_t n_graftable = 0;
    for (uint8_t g : logits.graftable) n_graftable += g;
    return top_k_region(gamma, logits.graftable, budget_count(budget, n_graftable),
                        gamma.size(), Provenance::learned);
}

ParameterVector lth_prune(const ParameterVector& ft, const GraftRegion& region) {
    if (region.total_params != ft.size()) fail_config("lth_prune: region size mismatch");
    ParameterVector out = ft;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (uint64_t i : region.indices) out.values[i] = ft.values[i];
    return out;
}

ParameterVector retrain_region(const ParameterVector& pre, const ModelSpec& spec,
                               const GraftRegion& region, const Dataset& data,
                               const OptimizerConfig& cfg, const std::string& head_name) {
    if (region.indices.empty()) fail_config("retrain_region: empty region");
    if (region.total_params != pre.size()) fail_config("retrain_region: region size mismatch");
    std::vector<uint8_t> trainable(pre.size(), 0);
    for (uint64_t i : region.indices) trainable[i] = 1;
    std::vector<TrainTask> tasks{{&data.inputs, &data.labels, head_name}};
    return train_tasks(pre, spec, tasks, cfg, 0, &trainable).final;
}

ParameterVector wise_interpolate(const ParameterVector& pre, const ParameterVector& model,
                                 double alpha) {
    check_compatible(pre, model);
    if (alpha < 0.0 || alpha > 1.0) fail_config("wise_interpolate: alpha must lie in [0, 1]");
    ParameterVector out = pre;
    for (size_t i = 0; i < out.size(); ++i)
        out.values[i] = alpha * model.values[i] + (1.0 - alpha) * pre.values[i];
    return out;
}

}  // namespace sg
