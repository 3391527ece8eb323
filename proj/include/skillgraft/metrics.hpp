#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skillgraft/graft.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/tasks.hpp"

namespace sg {

struct BinStat {
    size_t count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
};

struct EvalReport {
    double accuracy = 0.0;
    double ece = 0.0;
    size_t num_bins = 10;
    std::vector<BinStat> bin_stats;  // one per bin, empty bins zeroed
    std::optional<std::pair<std::string, double>> agreement_with;
};

struct SweepPoint {
    double x = 0.0;
    double y_mean = 0.0;
    double y_std = 0.0;
    size_t n_seeds = 0;
};

struct SweepCurve {
    std::vector<SweepPoint> points;  // x strictly increasing

    void validate() const;
};

struct InterpolationPoint {
    double alpha = 0.0;
    double id_accuracy = 0.0;
    double ood_accuracy = 0.0;
};

struct InterpolationCurve {
    std::vector<InterpolationPoint> points;
};

/// accuracy[r][c] = accuracy of the checkpoint-c parameters grafted onto pre
/// through region r.
struct CheckpointSeries {
    std::vector<size_t> steps;
    std::vector<std::vector<double>> accuracy;
};

struct RegionCell {
    int layer = 0;
    ParamKind kind = ParamKind::weight;
    size_t segment_params = 0;  // parameters the cell covers in total
    size_t count = 0;           // region members falling in the cell
    double fraction = 0.0;      // count / |region|, 0 for an empty region
};

struct RegionHistogram {
    std::vector<RegionCell> cells;  // one per (layer, kind) in segment order
    size_t region_size = 0;
};

/// Fraction of argmax-correct predictions; ties go to the lowest class index.
double accuracy(const ParameterVector& params, const ModelSpec& spec, const Dataset& data,
                const std::string& head_name = "head");

/// Fraction of inputs where the two models' argmax predictions coincide.
double agreement(const ParameterVector& a, const ParameterVector& b, const ModelSpec& spec,
                 const Dataset& data, const std::string& head_name = "head");

/// Expected calibration error over M equal-width confidence bins
/// [(m-1)/M, m/M), top bin closed so confidence 1.0 lands in bin M.
double ece(const std::vector<double>& confidences, const std::vector<uint8_t>& correct, size_t num_bins);

/// Accuracy, calibration and per-bin stats in one pass; confidence is the max
/// softmax probability.
EvalReport evaluate(const ParameterVector& params, const ModelSpec& spec, const Dataset& data,
                    size_t num_bins = 10, const std::string& head_name = "head");

/// (p_region - p_zero) / (p_one - p_zero). Degenerate denominator is an
/// error, never silently clamped.
double rel_gain(double p_region, double p_zero, double p_one);

enum class SweepMethod { learned, movement_topk, random };

std::string to_string(SweepMethod m);
SweepMethod sweep_method_from_string(const std::string& s);

/// For each fraction and seed: build a region of that sparsity (learned =
/// optimize_mask projected to the budget; movement/random baselines), graft
/// ft onto pre through it, and measure accuracy on eval_data. Masks are
/// learned on mask_data. Aggregates mean and sample std over seeds.
SweepCurve sparsity_sweep(const ParameterVector& pre, const ParameterVector& ft,
                          const ModelSpec& spec, const Dataset& mask_data,
                          const Dataset& eval_data, SweepMethod method,
                          const std::vector<double>& fractions,
                          const std::vector<uint64_t>& seeds,
                          const MaskOptConfig& mask_cfg = {},
                          const std::string& head_name = "head");

/// Accuracy of alpha * model + (1 - alpha) * pre on both datasets, per alpha.
InterpolationCurve interpolation_curve(const ParameterVector& pre, const ParameterVector& model,
                                       const std::vector<double>& alphas, const Dataset& id_data,
                                       const Dataset& ood_data, const ModelSpec& spec,
                                       const std::string& head_name = "head");

/// Accuracy of graft_compose(pre, checkpoint, region) for every checkpoint
/// and region.
CheckpointSeries checkpoint_track(const std::vector<std::pair<size_t, ParameterVector>>& checkpoints,
                                  const std::vector<GraftRegion>& regions,
                                  const ParameterVector& pre, const ModelSpec& spec,
                                  const Dataset& data, const std::string& head_name = "head");

/// Histogram of region membership over (layer, kind) cells of the segment
/// table; fractions sum to 1 (or 0 for an empty region).
RegionHistogram region_distribution(const GraftRegion& region,
                                    const std::vector<Segment>& segments);

}  // namespace sg
