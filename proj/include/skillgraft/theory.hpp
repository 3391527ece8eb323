#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skillgraft/graft.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/tasks.hpp"

namespace sg {

struct BoundInputs {
    uint64_t region_size = 0;     // s, selected coordinates
    uint64_t levels = 2;          // q, quantization levels (>= 2)
    uint64_t multiplicity = 1;    // Theta_n, distinct regions the procedure can emit
    double delta = 0.05;          // confidence, in (0, 1)
    uint64_t samples = 0;         // n

    void validate() const;
};

/// grafted keeps the 2/delta confidence argument and the full 4*eps1 + eps2
/// slack; retrained uses 1/delta and drops the eps2 term.
enum class BoundMode { grafted, retrained };

std::string to_string(BoundMode m);
BoundMode bound_mode_from_string(const std::string& s);

struct GeneralizationBound {
    double variance_bound = 0.0;  // 2 * sqrt((s ln q + ln Theta_n + ln(c/delta)) / n)
    double total_slack = 0.0;     // 4*eps1 + eps2 (grafted) or 4*eps1 (retrained)
};

/// Natural logarithms throughout.
GeneralizationBound generalization_bound(const BoundInputs& inputs, double eps1, double eps2,
                                         BoundMode mode = BoundMode::grafted);

/// Signed train accuracy minus test accuracy.
double train_test_gap(const ParameterVector& params, const ModelSpec& spec,
                      const Dataset& train_data, const Dataset& test_data,
                      const std::string& head_name = "head");

struct RegionStability {
    double mean_pairwise_jaccard = 0.0;
    size_t distinct_count = 0;
};

/// Mean Jaccard overlap over unordered region pairs plus the number of
/// set-distinct regions. Two empty regions count as identical (overlap 1).
RegionStability region_stability(const std::vector<GraftRegion>& regions);

/// Empirical slack estimate: quantize every segment to `levels` uniform
/// values over its observed range and report the largest per-sample loss
/// deviation on the dataset.
double quantization_slack(const ParameterVector& params, const ModelSpec& spec,
                          const Dataset& data, uint64_t levels,
                          const std::string& head_name = "head");

/// The quantized copy itself, exposed so reports can evaluate it directly.
ParameterVector quantize_segments(const ParameterVector& params, uint64_t levels);

}  // namespace sg
