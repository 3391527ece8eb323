#include "skillgraft/tasks.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sg {

void World::validate() const {
    if (latent_dim == 0) fail_config("world: latent_dim must be positive");
    if (obs_dim < latent_dim) fail_config("world: obs_dim must be at least latent_dim");
    if (obs_noise <= 0.0) fail_config("world: obs_noise must be positive");
    if (static_cast<size_t>(mixing.rows()) != obs_dim ||
        static_cast<size_t>(mixing.cols()) != latent_dim)
        fail_config("world: mixing matrix shape mismatch");
    for (size_t j = 0; j < latent_dim; ++j)
        if (std::abs(mixing.col(j).norm() - 1.0) > 1e-9)
            fail_config("world: mixing column " + std::to_string(j) + " is not unit norm");
}

void TaskSpec::validate() const {
    world.validate();
    if (num_classes < 2) fail_config("task: num_classes must be at least 2");
    if (static_cast<size_t>(teacher.rows()) != num_classes ||
        static_cast<size_t>(teacher.cols()) != world.latent_dim)
        fail_config("task: teacher shape mismatch");
    if (static_cast<size_t>(bias.size()) != num_classes) fail_config("task: bias length mismatch");
    for (size_t c = 0; c < num_classes; ++c)
        if (std::abs(teacher.row(c).norm() - 1.0) > 1e-9)
            fail_config("task: teacher row " + std::to_string(c) + " is not unit norm");
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    fail_config("unknown split '" + s + "'");
}

World make_world(size_t latent_dim, size_t obs_dim, double obs_noise, uint64_t seed) {
    if (latent_dim == 0) fail_config("make_world: latent_dim must be positive");
    if (obs_dim < latent_dim) fail_config("make_world: obs_dim must be at least latent_dim");
    if (obs_noise <= 0.0) fail_config("make_world: obs_noise must be positive");

    Rng rng = derive_rng(seed, kStreamWorld);
    Matrix g(obs_dim, latent_dim);
    for (size_t i = 0; i < obs_dim; ++i)
        for (size_t j = 0; j < latent_dim; ++j) g(i, j) = rng.normal();

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Matrix q = qr.householderQ() * Eigen::MatrixXd::Identity(obs_dim, latent_dim);
    for (size_t j = 0; j < latent_dim; ++j) q.col(j) /= q.col(j).norm();

    World w;
    w.latent_dim = latent_dim;
    w.obs_dim = obs_dim;
    w.mixing = q;
    w.obs_noise = obs_noise;
    w.seed = seed;
    return w;
}

namespace {

Vector unit_gaussian_row(Rng& rng, size_t m) {
    Vector v(m);
    for (size_t i = 0; i < m; ++i) v[i] = rng.normal();
    return v / v.norm();
}

}  // namespace

TaskSpec make_task(const World& world, size_t num_classes, int64_t family_id,
                   const TaskSpec* similar_to, double rho, uint64_t seed) {
    world.validate();
    if (num_classes < 2) fail_config("make_task: num_classes must be at least 2");
    if (rho < 0.0 || rho > 1.0) fail_config("make_task: rho must lie in [0, 1]");
    if (similar_to) {
        if (similar_to->num_classes != num_classes)
            fail_config("make_task: reference teacher class count mismatch");
        if (similar_to->world.latent_dim != world.latent_dim)
            fail_config("make_task: reference teacher latent_dim mismatch");
    }

    size_t m = world.latent_dim;
    Rng rng = derive_rng(seed, kStreamTeacher);
    TaskSpec t;
    t.world = world;
    t.num_classes = num_classes;
    t.family_id = family_id;
    t.seed = seed;
    t.teacher.resize(num_classes, m);
    t.bias = Vector::Zero(num_classes);
    for (size_t c = 0; c < num_classes; ++c) {
        if (similar_to && rho == 1.0) {
            t.teacher.row(c) = similar_to->teacher.row(c);
            continue;
        }
        Vector g = unit_gaussian_row(rng, m);
        if (similar_to) {
            Vector mixed =
                rho * similar_to->teacher.row(c).transpose() + std::sqrt(1.0 - rho * rho) * g;
            t.teacher.row(c) = mixed / mixed.norm();
        } else {
            t.teacher.row(c) = g;
        }
    }
    return t;
}

TaskSpec make_ood_task(const TaskSpec& task, double shift, uint64_t seed) {
    if (shift < 0.0) fail_config("make_ood_task: shift must be nonnegative");
    if (shift == 0.0) return task;

    size_t d = task.world.obs_dim, m = task.world.latent_dim;
    Rng rng = derive_rng(seed, kStreamShift);
    Matrix delta(d, m);
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < m; ++j) delta(i, j) = rng.normal();
    for (size_t j = 0; j < m; ++j) delta.col(j) /= delta.col(j).norm();

    TaskSpec out = task;
    out.world.mixing = task.world.mixing + shift * delta;
    for (size_t j = 0; j < m; ++j) out.world.mixing.col(j) /= out.world.mixing.col(j).norm();
    return out;
}

TaskSpec make_pretrain_task(const World& world, uint64_t seed) {
    world.validate();
    if (world.latent_dim < 3) fail_config("make_pretrain_task: needs at least 3 latent dimensions");

    TaskSpec t;
    t.world = world;
    t.num_classes = 8;
    t.family_id = -1;
    t.seed = seed;
    t.teacher = Matrix::Zero(8, world.latent_dim);
    t.bias = Vector::Zero(8);
    double s = 1.0 / std::sqrt(3.0);
    for (int c = 0; c < 8; ++c)
        for (int i = 0; i < 3; ++i) t.teacher(c, i) = (c >> i) & 1 ? -s : s;
    return t;
}

int teacher_label(const TaskSpec& task, const Vector& z) {
    if (static_cast<size_t>(z.size()) != task.world.latent_dim)
        fail_config("teacher_label: latent dimension mismatch");
    Vector scores = task.teacher * z + task.bias;
    int best = 0;
    for (int c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[best]) best = c;  // ties keep the lowest index
    return best;
}

Dataset sample_kshot(const TaskSpec& task, size_t k, Split split, uint64_t seed) {
    task.validate();
    if (k == 0) fail_config("sample_kshot: k must be positive");

    const size_t kDrawBudget = 1000000;
    size_t K = task.num_classes;
    size_t m = task.world.latent_dim, d = task.world.obs_dim;
    Rng rng = derive_rng(seed, kStreamSample, static_cast<uint64_t>(split));

    Dataset ds;
    ds.k = k;
    ds.split = split;
    ds.inputs.resize(K * k, d);
    ds.labels.resize(K * k);
    std::vector<size_t> count(K, 0);
    size_t accepted = 0;
    Vector z(m), noise(d);
    for (size_t draw = 0; accepted < K * k; ++draw) {
        if (draw >= kDrawBudget) {
            for (size_t c = 0; c < K; ++c)
                if (count[c] < k)
                    fail_data("sample_kshot: class " + std::to_string(c) +
                              " unreachable within the draw budget");
        }
        for (size_t i = 0; i < m; ++i) z[i] = rng.normal();
        int y = teacher_label(task, z);
        if (count[y] >= k) continue;
        for (size_t i = 0; i < d; ++i) noise[i] = rng.normal();
        ds.inputs.row(accepted) = (task.world.mixing * z + task.world.obs_noise * noise).transpose();
        ds.labels[accepted] = y;
        count[y] += 1;
        accepted += 1;
    }
    return ds;
}

std::vector<double> label_frequencies(const TaskSpec& task, size_t num_draws, uint64_t seed) {
    task.validate();
    if (num_draws == 0) fail_config("label_frequencies: num_draws must be positive");
    Rng rng = derive_rng(seed, kStreamSample, static_cast<uint64_t>(Split::train));
    Vector z(task.world.latent_dim);
    std::vector<double> freq(task.num_classes, 0.0);
    for (size_t i = 0; i < num_draws; ++i) {
        for (size_t j = 0; j < task.world.latent_dim; ++j) z[j] = rng.normal();
        freq[static_cast<size_t>(teacher_label(task, z))] += 1.0;
    }
    for (double& f : freq) f /= static_cast<double>(num_draws);
    return freq;
}

double task_similarity(const TaskSpec& a, const TaskSpec& b) {
    if (a.num_classes != b.num_classes) fail_config("task_similarity: class count mismatch");
    if (a.world.latent_dim != b.world.latent_dim)
        fail_config("task_similarity: latent dimension mismatch");

    size_t K = a.num_classes;
    Matrix cosines(K, K);
    for (size_t i = 0; i < K; ++i)
        for (size_t j = 0; j < K; ++j)
            cosines(i, j) = std::abs(a.teacher.row(i).dot(b.teacher.row(j)) /
                                     (a.teacher.row(i).norm() * b.teacher.row(j).norm()));

    if (K <= 8) {
        std::vector<size_t> perm(K);
        std::iota(perm.begin(), perm.end(), 0);
        double best = 0.0;
        do {
            double s = 0.0;
            for (size_t i = 0; i < K; ++i) s += cosines(i, perm[i]);
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best / static_cast<double>(K);
    }

    // greedy matching: repeatedly take the best remaining pair
    std::vector<bool> row_used(K, false), col_used(K, false);
    double total = 0.0;
    for (size_t step = 0; step < K; ++step) {
        double best = -1.0;
        size_t bi = 0, bj = 0;
        for (size_t i = 0; i < K; ++i) {
            if (row_used[i]) continue;
            for (size_t j = 0; j < K; ++j) {
                if (col_used[j]) continue;
                if (cosines(i, j) > best) {
                    best = cosines(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        row_used[bi] = col_used[bj] = true;
        total += best;
    }
    return total / static_cast<double>(K);
}

uint64_t head_seed(const TaskSpec& task) {
    return mix64(task.world.seed, kStreamHead, static_cast<uint64_t>(task.family_id));
}

}  // namespace sg
