#include "skillgraft/theory.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "skillgraft/metrics.hpp"

namespace sg {

void BoundInputs::validate() const {
    if (region_size == 0) fail_config("bound: region size must be positive");
    if (levels < 2) fail_config("bound: need at least two quantization levels");
    if (multiplicity == 0) fail_config("bound: multiplicity must be positive");
    if (!(delta > 0.0 && delta < 1.0)) fail_config("bound: delta must lie in (0, 1)");
    if (samples == 0) fail_config("bound: sample count must be positive");
}

std::string to_string(BoundMode m) { return m == BoundMode::grafted ? "grafted" : "retrained"; }

BoundMode bound_mode_from_string(const std::string& s) {
    if (s == "grafted") return BoundMode::grafted;
    if (s == "retrained") return BoundMode::retrained;
    fail_config("unknown bound mode '" + s + "'");
}

GeneralizationBound generalization_bound(const BoundInputs& inputs, double eps1, double eps2,
                                         BoundMode mode) {
    inputs.validate();
    if (eps1 < 0.0 || eps2 < 0.0) fail_config("bound: slack terms must be non-negative");
    double confidence_arg = (mode == BoundMode::grafted ? 2.0 : 1.0) / inputs.delta;
    double numerator = static_cast<double>(inputs.region_size) *
                           std::log(static_cast<double>(inputs.levels)) +
                       std::log(static_cast<double>(inputs.multiplicity)) +
                       std::log(confidence_arg);
    GeneralizationBound out;
    out.variance_bound = 2.0 * std::sqrt(numerator / static_cast<double>(inputs.samples));
    out.total_slack = mode == BoundMode::grafted ? 4.0 * eps1 + eps2 : 4.0 * eps1;
    return out;
}

double train_test_gap(const ParameterVector& params, const ModelSpec& spec,
                      const Dataset& train_data, const Dataset& test_data,
                      const std::string& head_name) {
    return accuracy(params, spec, train_data, head_name) -
           accuracy(params, spec, test_data, head_name);
}

RegionStability region_stability(const std::vector<GraftRegion>& regions) {
    if (regions.size() < 2) fail_config("region stability needs at least two regions");
    for (const GraftRegion& r : regions)
        if (r.total_params != regions[0].total_params)
            fail_config("region stability: regions disagree on total_params");

    RegionStability out;
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t a = 0; a < regions.size(); ++a) {
        for (size_t b = a + 1; b < regions.size(); ++b) {
            size_t inter = region_intersection_size(regions[a], regions[b]);
            size_t uni = regions[a].indices.size() + regions[b].indices.size() - inter;
            sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            ++pairs;
        }
    }
    out.mean_pairwise_jaccard = sum / static_cast<double>(pairs);

    std::set<std::vector<uint64_t>> distinct;
    for (const GraftRegion& r : regions) distinct.insert(r.indices);
    out.distinct_count = distinct.size();
    return out;
}

ParameterVector quantize_segments(const ParameterVector& params, uint64_t levels) {
    if (levels < 2) fail_config("quantization needs at least two levels");
    ParameterVector out = params;
    for (const Segment& s : params.segments) {
        double lo = params.values[s.offset], hi = lo;
        for (size_t i = 0; i < s.length; ++i) {
            lo = std::min(lo, params.values[s.offset + i]);
            hi = std::max(hi, params.values[s.offset + i]);
        }
        if (hi <= lo) continue;  // constant segment: nothing to snap
        double step = (hi - lo) / static_cast<double>(levels - 1);
        for (size_t i = 0; i < s.length; ++i) {
            double v = params.values[s.offset + i];
            double idx = std::round((v - lo) / step);
            idx = std::clamp(idx, 0.0, static_cast<double>(levels - 1));
            out.values[s.offset + i] = lo + idx * step;
        }
    }
    return out;
}

double quantization_slack(const ParameterVector& params, const ModelSpec& spec,
                          const Dataset& data, uint64_t levels, const std::string& head_name) {
    if (data.inputs.rows() == 0) fail_data("quantization slack: empty dataset");
    ParameterVector snapped = quantize_segments(params, levels);
    double worst = 0.0;
    Matrix row(1, data.inputs.cols());
    for (Eigen::Index r = 0; r < data.inputs.rows(); ++r) {
        row = data.inputs.row(r);
        std::vector<int> label{data.labels[static_cast<size_t>(r)]};
        double a = loss_value(params, spec, row, label, nullptr, 0.0, head_name);
        double b = loss_value(snapped, spec, row, label, nullptr, 0.0, head_name);
        worst = std::max(worst, std::abs(a - b));
    }
    return worst;
}

}  // namespace sg
