#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "skillgraft/common.hpp"

namespace sg {

enum class Activation { relu, tanh };
enum class HeadMode { frozen_random, trainable };
enum class ParamKind { weight, bias, layernorm_scale, layernorm_shift, head };

std::string to_string(Activation a);
std::string to_string(HeadMode m);
std::string to_string(ParamKind k);
Activation activation_from_string(const std::string& s);
HeadMode head_mode_from_string(const std::string& s);

struct ModelSpec {
    size_t input_dim = 0;
    std::vector<size_t> hidden_widths;
    Activation activation = Activation::tanh;
    bool layernorm = false;
    size_t num_classes = 0;
    HeadMode head_mode = HeadMode::frozen_random;
    bool freeze_first_layer = false;

    void validate() const;
};

struct Segment {
    std::string name;
    size_t offset = 0;
    size_t length = 0;
    ParamKind kind = ParamKind::weight;
    int layer = 0;

    bool operator==(const Segment&) const = default;
};

struct ParameterVector {
    std::vector<double> values;
    std::vector<Segment> segments;

    size_t size() const { return values.size(); }
    bool graft_compatible(const ParameterVector& other) const { return segments == other.segments; }
    const Segment& segment(const std::string& name) const;
    const Segment* find_segment(const std::string& name) const;
    void validate() const;  // segments contiguous, non-overlapping, covering
};

// Layer l owns segments w{l}, b{l} and, with layernorm, ln_scale{l}, ln_shift{l}.
// The head is a bias-free linear map named "head" (kind head, layer = depth).
// Multi-task layouts append one "head<t>" per task instead; see multitask.hpp.
std::vector<Segment> build_segments(const ModelSpec& spec);

/// Head segments of extra tasks appended after the body; classes[t] rows each.
std::vector<Segment> build_segments_multi(const ModelSpec& spec, const std::vector<size_t>& classes);

/// Frozen coordinates under `spec`: the head when head_mode is frozen_random
/// (all head segments in multi-head layouts) and layer 0 when
/// freeze_first_layer is set. Graftable = not frozen.
std::vector<uint8_t> frozen_coords(const ModelSpec& spec, const ParameterVector& params);
std::vector<uint64_t> graftable_indices(const ModelSpec& spec, const ParameterVector& params);

/// Fresh parameter vector: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
/// and layernorm shifts 0, layernorm scales 1. A frozen_random head gets
/// unit-norm rows from the head stream of `seed`; a trainable head is
/// initialized like a weight.
ParameterVector init_model(const ModelSpec& spec, uint64_t seed);

/// Overwrite a head segment with unit-norm Gaussian rows drawn from `seed`.
void set_unit_norm_head(ParameterVector& params, const std::string& head_name, size_t num_classes,
                        uint64_t seed);

/// Logits for a batch; rows of `inputs` are samples. `head_name` selects the
/// head segment (multi-task layouts have several).
Matrix forward(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
               const std::string& head_name = "head");

/// Last hidden-layer activations for a batch (the representation the head
/// reads); used by probes.
Matrix hidden_features(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                       const std::string& head_name = "head");

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean softmax cross-entropy plus l1_strength * ||params - anchor||_1, with
/// d|x|/dx taken as 0 at x = 0. Gradients on frozen segments are zeroed unless
/// `raw` is set (raw gradients feed the finite-difference checker and the mask
/// chain rule, where freezing is irrelevant or handled by ft == pre).
LossGrad loss_and_grad(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                       const std::vector<int>& labels, const ParameterVector* anchor = nullptr,
                       double l1_strength = 0.0, const std::string& head_name = "head",
                       bool raw = false);

/// Loss only (shares the forward path with loss_and_grad).
double loss_value(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                  const std::vector<int>& labels, const ParameterVector* anchor = nullptr,
                  double l1_strength = 0.0, const std::string& head_name = "head");

enum class Algorithm { sgd, adamw };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct OptimizerConfig {
    Algorithm algorithm = Algorithm::sgd;
    double learning_rate = 0.1;
    size_t batch_size = 2;
    size_t steps = 0;  // 0 = default_steps(num_classes, k)
    double weight_decay = 0.0;
    double l1_anchor_strength = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;

    void validate() const;
};

/// 16 * num_classes * k steps, capped at 16 * num_classes * 512.
size_t default_steps(size_t num_classes, size_t k);

struct OptState {
    size_t step = 0;
    std::vector<double> m, v;  // adamw moments, lazily sized
};

/// One optimizer step in place. SGD: p -= lr*(g + wd*p). AdamW: decoupled
/// weight decay with bias-corrected moments. Frozen coordinates never move.
void optimizer_step(OptState& state, ParameterVector& params, const std::vector<double>& grad,
                    const OptimizerConfig& cfg, const std::vector<uint8_t>* frozen = nullptr);

struct TrainTask {
    const Matrix* inputs = nullptr;
    const std::vector<int>* labels = nullptr;
    std::string head_name = "head";
};

struct TrainResult {
    ParameterVector final;
    std::vector<std::pair<size_t, ParameterVector>> checkpoints;  // (step, params), step 0 first
    std::vector<double> losses;                                   // one per step
    std::vector<size_t> task_steps;                               // steps taken per task
};

/// Shared step loop. Each step picks a task uniformly (one task = always task
/// 0), draws a minibatch from that task's shuffle stream (wraparound reshuffle)
/// and applies one optimizer step. The l1 anchor is params0. `trainable`, when
/// given, additionally zeroes gradients outside it (region-restricted runs).
TrainResult train_tasks(const ParameterVector& params0, const ModelSpec& spec,
                        const std::vector<TrainTask>& tasks, const OptimizerConfig& cfg,
                        size_t checkpoint_every = 0,
                        const std::vector<uint8_t>* trainable = nullptr);

/// Single-task convenience wrapper over train_tasks.
TrainResult train(const ParameterVector& params0, const ModelSpec& spec, const Matrix& inputs,
                  const std::vector<int>& labels, const OptimizerConfig& cfg,
                  size_t checkpoint_every = 0, const std::string& head_name = "head");

/// Max relative error between analytic raw gradients and central finite
/// differences on the given coordinates; denominator max(|fd|, |grad|, 1e-12).
/// h must be positive and every index in range.
double finite_diff_check(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                         const std::vector<int>& labels, const std::vector<uint64_t>& sample_indices,
                         double h, const std::string& head_name = "head", double l1_strength = 0.0,
                         const ParameterVector* anchor = nullptr);

/// Coordinates whose raw analytic gradient magnitude is at least `floor`,
/// largest first, at most `limit`. Finite-difference noise at near-zero
/// gradients is not informative about gradient correctness, so checks sample
/// from these.
std::vector<uint64_t> live_gradient_indices(const ParameterVector& params, const ModelSpec& spec,
                                            const Matrix& inputs, const std::vector<int>& labels,
                                            size_t limit, double floor = 1e-6,
                                            const std::string& head_name = "head");

/// Smallest |activation input| over all layers, units and samples. A relu
/// instance with a margin below the finite-difference step sits on a kink and
/// gives meaningless difference quotients; screens reject such instances.
double min_abs_preactivation(const ParameterVector& params, const ModelSpec& spec,
                             const Matrix& inputs, const std::string& head_name = "head");

}  // namespace sg
