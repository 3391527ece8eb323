#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "skillgraft/graft.hpp"
#include "skillgraft/net.hpp"
#include "skillgraft/store.hpp"
#include "skillgraft/tasks.hpp"

namespace sg {

// A run is fully specified by one config document: worlds, tasks, datasets,
// model, optimizers and every recipe parameter derive from it and the seed
// list alone. Unknown keys anywhere in the document are rejected so typos
// cannot silently fall back to defaults.

struct FamilyConfig {
    size_t num_classes = 2;
    double rho = 0.9;  // teacher correlation between the family's two tasks
    uint64_t seed = 0;
};

struct WorldConfig {
    size_t latent_dim = 6;
    size_t obs_dim = 12;
    double obs_noise = 0.05;
    uint64_t seed = 7;
};

struct PretrainConfig {
    size_t shots = 32;
    size_t steps = 1024;
    double learning_rate = 0.05;
    size_t batch_size = 8;
    double weight_decay = 1e-4;
};

struct FinetuneConfig {
    Algorithm algorithm = Algorithm::sgd;
    size_t steps = 256;
    double learning_rate = 0.2;
    size_t batch_size = 2;
    double weight_decay = 1e-4;
};

struct MaskConfig {
    size_t steps = 80;
    size_t batch_size = 32;
    std::vector<double> learning_rates{1e5, 1e6};  // grid, winner by grafted train loss
    double budget = 0.05;
    double threshold = 0.5;
    double init = -10.0;
};

struct SweepParams {
    std::vector<double> fractions{0.01, 0.1, 1.0};
    size_t shots = 8;
};

struct OodParams {
    size_t task = 0;
    std::vector<double> shifts{0.1, 1.0};
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    size_t shots = 8;
    uint64_t seed = 31;
};

struct AdamRegParams {
    size_t task = 0;
    size_t shots = 8;
    double adam_learning_rate = 1e-3;
    double l1_strength = 1e-3;
};

struct MultitaskParams {
    size_t shots = 8;
    size_t purify_steps = 10;
};

struct ContinualParams {
    std::vector<size_t> tasks{0, 2, 1};
    size_t shots = 8;
    double mask_learning_rate = 0.0;  // 0 = last entry of the mask grid
};

struct TrackParams {
    size_t task = 0;
    size_t shots = 8;
    size_t every = 0;  // checkpoint stride; 0 = steps/8
};

struct TheoryParams {
    size_t shots = 8;
    uint64_t levels = 1ull << 32;
    double delta = 0.05;
    double eps1 = 0.0;
    double eps2 = 0.0;
};

struct FisherParams {
    size_t shots = 8;
};

struct ExperimentConfig {
    std::string recipe;  // default subcommand target; may be overridden
    std::string out_dir = "runs/out";
    std::vector<uint64_t> seeds{1, 2};
    size_t workers = 0;  // 0 = hardware concurrency
    WorldConfig world;
    std::vector<FamilyConfig> families{{2, 0.9, 101}, {3, 0.9, 102}};
    std::vector<size_t> shots{8};
    size_t test_shots = 64;
    ModelSpec model;  // body fields; num_classes/head_mode are per-task
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    MaskConfig mask;
    size_t eval_bins = 10;
    SweepParams sweep;
    OodParams ood;
    AdamRegParams adamreg;
    MultitaskParams multitask;
    ContinualParams continual;
    TrackParams track;
    TheoryParams theory;
    FisherParams fisher;

    void validate() const;
};

/// The compiled-in default: a reduced suite small enough for tests and smoke
/// runs (configs/reduced.json ships the same document).
ExperimentConfig default_config();

/// Strict parse: every key optional, unknown keys anywhere are a config
/// error. Numbers must match their declared kinds.
ExperimentConfig config_from_json(const Json& doc);
/// Fully resolved canonical form; round-trips through config_from_json.
Json config_to_json(const ExperimentConfig& cfg);

/// FNV-1a 64 over the canonical serialization, hex. config_hash covers the
/// whole document plus the active recipe name; suite_hash only the fields
/// that determine shared artifacts (world, families, shots, model,
/// optimizers, mask, eval, seeds), so different recipes can share one
/// artifact directory.
std::string config_hash(const ExperimentConfig& cfg, const std::string& recipe);
std::string suite_hash(const ExperimentConfig& cfg);

uint64_t fnv1a64(const std::string& bytes);

/// One downstream task of the suite with its stable report id ("f0a", "f0b",
/// "f1a", ...): family f, variant a = the family anchor, b = its rho-linked
/// sibling.
struct SuiteTask {
    std::string id;
    size_t family = 0;
    size_t variant = 0;
    TaskSpec task;
};

struct Suite {
    World world;
    TaskSpec pretrain_task;
    std::vector<SuiteTask> tasks;  // two per family, family-major order
};

Suite build_suite(const ExperimentConfig& cfg);

/// Deterministic per-stage seeds: every (run seed, task, shots, stage) tuple
/// owns an independent stream.
enum : uint64_t {
    kStageData = 1,
    kStageFinetune = 2,
    kStageMask = 3,
    kStageVariant = 4,
    kStageRecipe = 5,
};
uint64_t stage_seed(uint64_t run_seed, uint64_t task_index, uint64_t shots, uint64_t stage);

/// Canonical datasets. Train draws depend on the run seed; the test split is
/// drawn once per task, shared by every seed, like a fixed benchmark dev set.
Dataset train_set(const Suite& suite, size_t task_index, size_t shots, uint64_t run_seed);
Dataset test_set(const Suite& suite, size_t task_index, size_t test_shots);

/// Single-task model spec for a suite task (frozen head, body from cfg).
ModelSpec task_spec(const ExperimentConfig& cfg, const TaskSpec& task);

/// Pre-trained body with the task's frozen verbalizer head attached. Body
/// segments are copied by name; whatever head `body` carries is dropped.
ParameterVector attach_head(const ParameterVector& body, const ModelSpec& spec,
                            const TaskSpec& task);

/// Mask grid: one optimize_mask run per configured learning rate at the
/// given budget; winner by train loss of the hard-projected graft, ties to
/// the earlier rate.
GraftRegion grid_region(const ParameterVector& pre, const ParameterVector& ft,
                        const ModelSpec& spec, const Dataset& data, const ExperimentConfig& cfg,
                        double budget, uint64_t seed);

/// Artifact stages. Each loads its file when present and valid for the
/// current suite, otherwise computes and saves: interrupted runs resume.
class ArtifactCache {
public:
    ArtifactCache(std::filesystem::path dir, const ExperimentConfig& cfg);

    const std::filesystem::path& dir() const { return dir_; }

    /// Body trained on the sign-pattern pretext task (head segment dropped).
    ParameterVector pretrain_body(const Suite& suite, uint64_t run_seed);

    /// Full fine-tune of the pre-trained model on one task.
    ParameterVector finetuned(const Suite& suite, size_t task_index, size_t shots,
                              uint64_t run_seed);

    /// Learned region at the config budget; the mask learning rate comes from
    /// the config grid, winner by train loss of the hard-projected graft.
    GraftRegion learned_region(const Suite& suite, size_t task_index, size_t shots,
                               uint64_t run_seed);

    /// Generic stages for recipe-specific artifacts in the same directory.
    /// `name` is the file stem; the extension is appended here.
    ParameterVector model_stage(const std::string& name,
                                const std::function<ParameterVector()>& compute);
    GraftRegion region_stage(const std::string& name,
                             const std::function<GraftRegion()>& compute);

private:
    std::filesystem::path dir_;
    const ExperimentConfig& cfg_;
};

/// Run fn(slot) for each slot in [0, n) on up to `workers` threads (0 = all
/// hardware threads). Exceptions rethrow on the caller thread; results go
/// into slot-indexed storage owned by the caller, so aggregation order never
/// depends on scheduling.
void parallel_slots(size_t n, size_t workers, const std::function<void(size_t)>& fn);

inline constexpr const char* kToolVersion = "skillgraft 1.0.0";

/// All recipe names in dispatch order.
const std::vector<std::string>& recipe_names();

/// Execute one recipe: write reports/<name>.json (plus curve files) under
/// cfg.out_dir, maintain manifest.json (suite hash, per-recipe config hashes,
/// seeds, versions), and skip work whose artifacts already match. Re-running
/// an up-to-date recipe is a no-op; a directory built from a different suite
/// is refused.
void run_recipe(const std::string& name, const ExperimentConfig& cfg, bool quiet = false);

}  // namespace sg
