#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skillgraft/common.hpp"

namespace sg {

/// Observation space: x = A z + obs_noise * e with z, e standard normal.
/// Columns of the mixing matrix have unit norm.
struct World {
    size_t latent_dim = 0;
    size_t obs_dim = 0;
    Matrix mixing;  // obs_dim x latent_dim
    double obs_noise = 0.1;
    uint64_t seed = 0;

    void validate() const;
};

/// Labels are argmax(teacher * z + bias) over the generating latent, ties
/// broken by lowest class index. Teacher rows have unit norm.
struct TaskSpec {
    World world;
    Matrix teacher;  // num_classes x latent_dim
    Vector bias;     // num_classes
    size_t num_classes = 0;
    int64_t family_id = 0;
    uint64_t seed = 0;

    void validate() const;
};

enum class Split { train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Class-balanced sample: exactly k examples per class.
struct Dataset {
    Matrix inputs;            // n x obs_dim
    std::vector<int> labels;  // n
    size_t k = 0;
    Split split = Split::train;
};

/// Mixing matrix from a seeded Gaussian draw, orthonormalized columns.
World make_world(size_t latent_dim, size_t obs_dim, double obs_noise, uint64_t seed);

/// Fresh unit-norm teacher rows, or rows correlated with a reference teacher:
/// rho * reference + sqrt(1 - rho^2) * fresh unit Gaussian, renormalized
/// (rho = 1 copies the reference exactly). Bias is zero.
TaskSpec make_task(const World& world, size_t num_classes, int64_t family_id,
                   const TaskSpec* similar_to, double rho, uint64_t seed);

/// Same teacher on a perturbed observation space: mixing' has columns
/// normalize(A + shift * D) with D a seeded unit-column perturbation.
/// shift = 0 returns the task unchanged.
TaskSpec make_ood_task(const TaskSpec& task, double shift, uint64_t seed);

/// 8-class sign-pattern task over the first three latent coordinates:
/// class = sum over i<3 of 2^i * [z_i < 0], so the all-positive orthant is
/// class 0. Family id -1.
TaskSpec make_pretrain_task(const World& world, uint64_t seed);

/// Teacher argmax label for a latent vector, lowest index on ties.
int teacher_label(const TaskSpec& task, const Vector& z);

/// Exactly k examples per class by rejection sampling latents; observation
/// noise is drawn only for accepted latents. The draw budget is 10^6 latents;
/// exceeding it names the first unfilled class in a data error.
Dataset sample_kshot(const TaskSpec& task, size_t k, Split split, uint64_t seed);

/// Monte-Carlo class frequencies of unconstrained latent draws.
std::vector<double> label_frequencies(const TaskSpec& task, size_t num_draws, uint64_t seed);

/// Mean |cosine| between matched teacher rows, maximized over class
/// matchings: exact over all permutations for K <= 8, greedy beyond.
double task_similarity(const TaskSpec& a, const TaskSpec& b);

/// Head seed shared by all tasks of a family: tasks in one family use one
/// frozen verbalizer, which is what makes their regions comparable.
uint64_t head_seed(const TaskSpec& task);

}  // namespace sg
