#include "skillgraft/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sg {

namespace {

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(logits.rows());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
        out[r] = best;
    }
    return out;
}

void check_nonempty(const Dataset& data) {
    if (data.inputs.rows() == 0) fail_data("evaluation dataset is empty");
    if (static_cast<size_t>(data.inputs.rows()) != data.labels.size())
        fail_data("evaluation dataset labels do not match inputs");
}

double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void SweepCurve::validate() const {
    for (size_t i = 1; i < points.size(); ++i)
        if (points[i].x <= points[i - 1].x) fail_config("sweep curve: x values must strictly increase");
}

double accuracy(const ParameterVector& params, const ModelSpec& spec, const Dataset& data,
                const std::string& head_name) {
    check_nonempty(data);
    auto pred = argmax_rows(forward(params, spec, data.inputs, head_name));
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double agreement(const ParameterVector& a, const ParameterVector& b, const ModelSpec& spec,
                 const Dataset& data, const std::string& head_name) {
    check_nonempty(data);
    auto pa = argmax_rows(forward(a, spec, data.inputs, head_name));
    auto pb = argmax_rows(forward(b, spec, data.inputs, head_name));
    size_t hits = 0;
    for (size_t i = 0; i < pa.size(); ++i) hits += pa[i] == pb[i];
    return static_cast<double>(hits) / static_cast<double>(pa.size());
}

namespace {

// bin m covers [(m-1)/M, m/M); confidence 1.0 belongs to bin M
size_t bin_index(double confidence, size_t num_bins) {
    auto m = static_cast<size_t>(std::floor(confidence * static_cast<double>(num_bins))) + 1;
    return std::min(m, num_bins);
}

std::vector<BinStat> bin_statistics(const std::vector<double>& confidences,
                                    const std::vector<uint8_t>& correct, size_t num_bins) {
    if (num_bins == 0) fail_config("calibration needs at least one bin");
    if (confidences.empty()) fail_data("calibration needs at least one prediction");
    if (confidences.size() != correct.size())
        fail_data("calibration: confidence and correctness length mismatch");
    std::vector<BinStat> bins(num_bins);
    for (size_t i = 0; i < confidences.size(); ++i) {
        double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) fail_data("calibration: confidence outside [0, 1]");
        BinStat& b = bins[bin_index(c, num_bins) - 1];
        b.count += 1;
        b.mean_confidence += c;
        b.accuracy += correct[i] ? 1.0 : 0.0;
    }
    for (BinStat& b : bins) {
        if (b.count == 0) continue;
        b.mean_confidence /= static_cast<double>(b.count);
        b.accuracy /= static_cast<double>(b.count);
    }
    return bins;
}

double ece_from_bins(const std::vector<BinStat>& bins, size_t n) {
    double e = 0.0;
    for (const BinStat& b : bins)
        e += static_cast<double>(b.count) / static_cast<double>(n) *
             std::abs(b.mean_confidence - b.accuracy);
    return e;
}

}  // namespace

double ece(const std::vector<double>& confidences, const std::vector<uint8_t>& correct,
           size_t num_bins) {
    return ece_from_bins(bin_statistics(confidences, correct, num_bins), confidences.size());
}

EvalReport evaluate(const ParameterVector& params, const ModelSpec& spec, const Dataset& data,
                    size_t num_bins, const std::string& head_name) {
    check_nonempty(data);
    Matrix logits = forward(params, spec, data.inputs, head_name);
    size_t n = logits.rows();
    std::vector<double> confidences(n);
    std::vector<uint8_t> correct(n);
    size_t hits = 0;
    for (size_t r = 0; r < n; ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
        double mx = logits(r, best);
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - mx);
        confidences[r] = 1.0 / z;  // exp(0) on top: max softmax probability
        correct[r] = best == data.labels[r];
        hits += correct[r];
    }
    EvalReport rep;
    rep.accuracy = static_cast<double>(hits) / static_cast<double>(n);
    rep.num_bins = num_bins;
    rep.bin_stats = bin_statistics(confidences, correct, num_bins);
    rep.ece = ece_from_bins(rep.bin_stats, n);
    return rep;
}

double rel_gain(double p_region, double p_zero, double p_one) {
    if (p_one == p_zero)
        fail_numerical("relative gain undefined: endpoints coincide at " + std::to_string(p_zero));
    return (p_region - p_zero) / (p_one - p_zero);
}

std::string to_string(SweepMethod m) {
    switch (m) {
        case SweepMethod::learned: return "learned";
        case SweepMethod::movement_topk: return "movement_topk";
        case SweepMethod::random: return "random";
    }
    return "?";
}

SweepMethod sweep_method_from_string(const std::string& s) {
    if (s == "learned") return SweepMethod::learned;
    if (s == "movement_topk") return SweepMethod::movement_topk;
    if (s == "random") return SweepMethod::random;
    fail_config("unknown sweep method '" + s + "'");
}

SweepCurve sparsity_sweep(const ParameterVector& pre, const ParameterVector& ft,
                          const ModelSpec& spec, const Dataset& mask_data,
                          const Dataset& eval_data, SweepMethod method,
                          const std::vector<double>& fractions, const std::vector<uint64_t>& seeds,
                          const MaskOptConfig& mask_cfg, const std::string& head_name) {
    if (fractions.empty()) fail_config("sparsity sweep: no fractions");
    if (seeds.empty()) fail_config("sparsity sweep: no seeds");
    for (size_t i = 0; i < fractions.size(); ++i) {
        if (fractions[i] <= 0.0 || fractions[i] > 1.0)
            fail_config("sparsity sweep: fractions must lie in (0, 1]");
        if (i > 0 && fractions[i] <= fractions[i - 1])
            fail_config("sparsity sweep: fractions must strictly increase");
    }

    SweepCurve curve;
    std::vector<double> accs(seeds.size());
    for (double f : fractions) {
        for (size_t s = 0; s < seeds.size(); ++s) {
            GraftRegion region;
            switch (method) {
                case SweepMethod::learned: {
                    MaskOptConfig cfg = mask_cfg;
                    cfg.seed = seeds[s];
                    cfg.sparsity_budget = f;
                    region = optimize_mask(pre, ft, GraftRegion{{}, pre.size()}, mask_data, spec,
                                           cfg, head_name)
                                 .second;
                    break;
                }
                case SweepMethod::movement_topk:
                    region = movement_region(pre, ft, spec, f);
                    break;
                case SweepMethod::random:
                    region = baseline_region(BaselineKind::random, pre, spec, nullptr, f, seeds[s],
                                             head_name);
                    break;
            }
            accs[s] = accuracy(graft_compose(pre, ft, region), spec, eval_data, head_name);
        }
        double mean = sample_mean(accs);
        curve.points.push_back({f, mean, sample_std(accs, mean), seeds.size()});
    }
    curve.validate();
    return curve;
}

InterpolationCurve interpolation_curve(const ParameterVector& pre, const ParameterVector& model,
                                       const std::vector<double>& alphas, const Dataset& id_data,
                                       const Dataset& ood_data, const ModelSpec& spec,
                                       const std::string& head_name) {
    for (size_t i = 0; i < alphas.size(); ++i) {
        if (alphas[i] < 0.0 || alphas[i] > 1.0)
            fail_config("interpolation curve: alphas must lie in [0, 1]");
        if (i > 0 && alphas[i] <= alphas[i - 1])
            fail_config("interpolation curve: alphas must strictly increase");
    }
    InterpolationCurve curve;
    for (double a : alphas) {
        ParameterVector blended = wise_interpolate(pre, model, a);
        curve.points.push_back({a, accuracy(blended, spec, id_data, head_name),
                                accuracy(blended, spec, ood_data, head_name)});
    }
    return curve;
}

CheckpointSeries checkpoint_track(
    const std::vector<std::pair<size_t, ParameterVector>>& checkpoints,
    const std::vector<GraftRegion>& regions, const ParameterVector& pre, const ModelSpec& spec,
    const Dataset& data, const std::string& head_name) {
    if (checkpoints.empty()) fail_config("checkpoint track: no checkpoints");
    CheckpointSeries series;
    for (const auto& [step, params] : checkpoints) {
        (void)params;
        series.steps.push_back(step);
    }
    series.accuracy.resize(regions.size());
    for (size_t r = 0; r < regions.size(); ++r) {
        series.accuracy[r].reserve(checkpoints.size());
        for (const auto& [step, params] : checkpoints) {
            (void)step;
            series.accuracy[r].push_back(
                accuracy(graft_compose(pre, params, regions[r]), spec, data, head_name));
        }
    }
    return series;
}

RegionHistogram region_distribution(const GraftRegion& region,
                                    const std::vector<Segment>& segments) {
    RegionHistogram hist;
    hist.region_size = region.indices.size();
    if (segments.empty()) fail_config("region distribution: empty segment table");

    // one cell per (layer, kind), in first-appearance order
    std::vector<std::pair<int, ParamKind>> keys;
    for (const Segment& s : segments) {
        std::pair<int, ParamKind> key{s.layer, s.kind};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            keys.push_back(key);
            hist.cells.push_back({s.layer, s.kind, 0, 0, 0.0});
        }
    }
    for (const Segment& s : segments) {
        for (RegionCell& c : hist.cells)
            if (c.layer == s.layer && c.kind == s.kind) c.segment_params += s.length;
    }

    size_t total = segments.back().offset + segments.back().length;
    for (uint64_t i : region.indices) {
        if (i >= total) fail_data("region distribution: index beyond the segment table");
        const Segment* owner = nullptr;
        for (const Segment& s : segments)
            if (i >= s.offset && i < s.offset + s.length) {
                owner = &s;
                break;
            }
        if (!owner) fail_data("region distribution: index falls outside every segment");
        for (RegionCell& c : hist.cells)
            if (c.layer == owner->layer && c.kind == owner->kind) c.count += 1;
    }
    if (hist.region_size > 0)
        for (RegionCell& c : hist.cells)
            c.fraction = static_cast<double>(c.count) / static_cast<double>(hist.region_size);
    return hist;
}

}  // namespace sg
