#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skillgraft/common.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/tasks.hpp"

namespace sg {

enum class Provenance { learned, movement_topk, random, bias_only, fisher, union_, difference };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// Binary mask over a parameter vector, stored as the sorted set of indices
/// it selects.
struct GraftRegion {
    std::vector<uint64_t> indices;  // strictly increasing, all < total_params
    uint64_t total_params = 0;
    Provenance provenance = Provenance::learned;

    double sparsity() const {
        return total_params == 0
                   ? 0.0
                   : static_cast<double>(indices.size()) / static_cast<double>(total_params);
    }
    bool contains(uint64_t i) const;
    void validate() const;
};

GraftRegion region_from_indices(std::vector<uint64_t> indices, uint64_t total_params,
                                Provenance provenance);
GraftRegion region_union(const GraftRegion& a, const GraftRegion& b);
GraftRegion region_difference(const GraftRegion& a, const GraftRegion& b);
size_t region_intersection_size(const GraftRegion& a, const GraftRegion& b);

/// Continuous mask state: effective gamma_i is sigmoid(eps_i) outside the
/// base region and 1 - sigmoid(eps_i) inside it, so eps at a large negative
/// init leaves the base mask intact and gradient steps flip coordinates in
/// either direction.
struct MaskLogits {
    std::vector<double> eps;
    GraftRegion base;
    double init_value = -10.0;
    std::vector<uint8_t> graftable;  // coordinates eligible for selection

    std::vector<double> effective_gamma() const;
};

enum class LabelSource { ground_truth, ft_model };

std::string to_string(LabelSource s);
LabelSource label_source_from_string(const std::string& s);

struct MaskOptConfig {
    size_t steps = 100;
    double learning_rate = 1e4;
    size_t batch_size = 32;
    LabelSource label_source = LabelSource::ground_truth;
    double init_value = -10.0;
    double threshold = 0.5;
    std::optional<double> sparsity_budget;
    uint64_t seed = 0;

    void validate() const;
};

/// theta[i] = ft[i] inside the region, pre[i] outside.
ParameterVector graft_compose(const ParameterVector& pre, const ParameterVector& ft,
                              const GraftRegion& region);

/// Continuous interpolation gamma*ft + (1-gamma)*pre with gamma from `logits`.
ParameterVector soft_graft_compose(const ParameterVector& pre, const ParameterVector& ft,
                                   const MaskLogits& logits);

/// Top ceil(fraction * n_graftable) coordinates by |ft - pre|, ties broken by
/// lower index; frozen coordinates are excluded before ranking.
GraftRegion movement_region(const ParameterVector& pre, const ParameterVector& ft,
                            const ModelSpec& spec, double fraction);

enum class BaselineKind { random, bias_only, fisher };

std::string to_string(BaselineKind k);

/// random: uniform over graftable coordinates; bias_only: every bias-kind
/// coordinate; fisher: top fraction by diagonal empirical Fisher information
/// with labels drawn from the model's own predictive distribution.
GraftRegion baseline_region(BaselineKind kind, const ParameterVector& params,
                            const ModelSpec& spec, const Dataset* data, double fraction,
                            uint64_t seed, const std::string& head_name = "head");

/// Task loss of the soft-grafted model and its exact gradient w.r.t. eps:
/// dL/deps_i = dL/dtheta_i * (ft_i - pre_i) * sigmoid'(eps_i), negated inside
/// the base region.
LossGrad mask_loss_and_grad(const ParameterVector& pre, const ParameterVector& ft,
                            const MaskLogits& logits, const ModelSpec& spec, const Matrix& inputs,
                            const std::vector<int>& labels, const std::string& head_name = "head");

/// Plain gradient descent on eps from init_value; returns the final logits
/// and the selected region: binarized at cfg.threshold, or projected to
/// cfg.sparsity_budget when that is set.
std::pair<MaskLogits, GraftRegion> optimize_mask(const ParameterVector& pre,
                                                 const ParameterVector& ft,
                                                 const GraftRegion& base, const Dataset& data,
                                                 const ModelSpec& spec, const MaskOptConfig& cfg,
                                                 const std::string& head_name = "head");

/// Indices with effective gamma strictly above the threshold.
GraftRegion binarize_mask(const MaskLogits& logits, double threshold);

/// Top ceil(budget * n_graftable) graftable indices by effective gamma, ties
/// broken by lower index.
GraftRegion project_sparsity(const MaskLogits& logits, double budget);

/// ft inside the region, zero outside -- including frozen segments. This is
/// deliberately destructive: it exists to contrast grafting (which keeps
/// pre-trained values outside the region) with zero-pruning.
ParameterVector lth_prune(const ParameterVector& ft, const GraftRegion& region);

/// Train from `pre` with updates restricted to the region; everything outside
/// stays bit-identical to pre.
ParameterVector retrain_region(const ParameterVector& pre, const ModelSpec& spec,
                               const GraftRegion& region, const Dataset& data,
                               const OptimizerConfig& cfg, const std::string& head_name = "head");

/// alpha * model + (1 - alpha) * pre, elementwise.
ParameterVector wise_interpolate(const ParameterVector& pre, const ParameterVector& model,
                                 double alpha);

}  // namespace sg
