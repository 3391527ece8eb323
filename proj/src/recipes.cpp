#include "skillgraft/recipes.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

namespace sg {

namespace {

// Pretrain datasets key their stage seeds off this pseudo task index so they
// can never collide with a real suite task.
constexpr uint64_t kPretrainTaskIndex = ~0ull;

void expect_object(const Json& j, const std::string& where) {
    if (!j.is_object()) fail_config(where + ": expected an object");
}

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    expect_object(j, where);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) ok = true;
        if (!ok) fail_config(where + ": unknown key '" + it.key() + "'");
    }
}

const Json* maybe(const Json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

uint64_t as_uint(const Json& v, const std::string& where) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail_config(where + ": expected a non-negative integer");
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)
        fail_config(where + ": expected a non-negative integer");
    return v.get<uint64_t>();
}

double as_real(const Json& v, const std::string& where) {
    if (!v.is_number()) fail_config(where + ": expected a number");
    return v.get<double>();
}

void get_uint(const Json& j, const char* key, uint64_t& out, const std::string& where) {
    if (const Json* v = maybe(j, key)) out = as_uint(*v, where + "." + key);
}

void get_size(const Json& j, const char* key, size_t& out, const std::string& where) {
    if (const Json* v = maybe(j, key)) out = static_cast<size_t>(as_uint(*v, where + "." + key));
}

void get_real(const Json& j, const char* key, double& out, const std::string& where) {
    if (const Json* v = maybe(j, key)) out = as_real(*v, where + "." + key);
}

void get_bool(const Json& j, const char* key, bool& out, const std::string& where) {
    if (const Json* v = maybe(j, key)) {
        if (!v->is_boolean()) fail_config(where + "." + key + ": expected a boolean");
        out = v->get<bool>();
    }
}

void get_string(const Json& j, const char* key, std::string& out, const std::string& where) {
    if (const Json* v = maybe(j, key)) {
        if (!v->is_string()) fail_config(where + "." + key + ": expected a string");
        out = v->get<std::string>();
    }
}

void get_uint_list(const Json& j, const char* key, std::vector<uint64_t>& out,
                   const std::string& where) {
    if (const Json* v = maybe(j, key)) {
        if (!v->is_array()) fail_config(where + "." + key + ": expected an array");
        out.clear();
        for (size_t i = 0; i < v->size(); ++i)
            out.push_back(as_uint((*v)[i], where + "." + key + "[" + std::to_string(i) + "]"));
    }
}

void get_size_list(const Json& j, const char* key, std::vector<size_t>& out,
                   const std::string& where) {
    std::vector<uint64_t> tmp(out.begin(), out.end());
    get_uint_list(j, key, tmp, where);
    out.assign(tmp.begin(), tmp.end());
}

void get_real_list(const Json& j, const char* key, std::vector<double>& out,
                   const std::string& where) {
    if (const Json* v = maybe(j, key)) {
        if (!v->is_array()) fail_config(where + "." + key + ": expected an array");
        out.clear();
        for (size_t i = 0; i < v->size(); ++i)
            out.push_back(as_real((*v)[i], where + "." + key + "[" + std::to_string(i) + "]"));
    }
}

void parse_world(const Json& j, WorldConfig& w) {
    reject_unknown(j, {"latent_dim", "obs_dim", "obs_noise", "seed"}, "world");
    get_size(j, "latent_dim", w.latent_dim, "world");
    get_size(j, "obs_dim", w.obs_dim, "world");
    get_real(j, "obs_noise", w.obs_noise, "world");
    get_uint(j, "seed", w.seed, "world");
}

void parse_families(const Json& j, std::vector<FamilyConfig>& fams) {
    if (!j.is_array()) fail_config("families: expected an array");
    fams.clear();
    for (size_t i = 0; i < j.size(); ++i) {
        std::string where = "families[" + std::to_string(i) + "]";
        reject_unknown(j[i], {"num_classes", "rho", "seed"}, where);
        FamilyConfig f;
        get_size(j[i], "num_classes", f.num_classes, where);
        get_real(j[i], "rho", f.rho, where);
        get_uint(j[i], "seed", f.seed, where);
        fams.push_back(f);
    }
}

void parse_model(const Json& j, ModelSpec& m) {
    reject_unknown(j, {"hidden_widths", "activation", "layernorm", "freeze_first_layer"}, "model");
    get_size_list(j, "hidden_widths", m.hidden_widths, "model");
    if (const Json* v = maybe(j, "activation")) {
        if (!v->is_string()) fail_config("model.activation: expected a string");
        m.activation = activation_from_string(v->get<std::string>());
    }
    get_bool(j, "layernorm", m.layernorm, "model");
    get_bool(j, "freeze_first_layer", m.freeze_first_layer, "model");
}

void parse_pretrain(const Json& j, PretrainConfig& p) {
    reject_unknown(j, {"shots", "steps", "learning_rate", "batch_size", "weight_decay"},
                   "pretrain");
    get_size(j, "shots", p.shots, "pretrain");
    get_size(j, "steps", p.steps, "pretrain");
    get_real(j, "learning_rate", p.learning_rate, "pretrain");
    get_size(j, "batch_size", p.batch_size, "pretrain");
    get_real(j, "weight_decay", p.weight_decay, "pretrain");
}

void parse_finetune(const Json& j, FinetuneConfig& f) {
    reject_unknown(j, {"algorithm", "steps", "learning_rate", "batch_size", "weight_decay"},
                   "finetune");
    if (const Json* v = maybe(j, "algorithm")) {
        if (!v->is_string()) fail_config("finetune.algorithm: expected a string");
        f.algorithm = algorithm_from_string(v->get<std::string>());
    }
    get_size(j, "steps", f.steps, "finetune");
    get_real(j, "learning_rate", f.learning_rate, "finetune");
    get_size(j, "batch_size", f.batch_size, "finetune");
    get_real(j, "weight_decay", f.weight_decay, "finetune");
}

void parse_mask(const Json& j, MaskConfig& m) {
    reject_unknown(j, {"steps", "batch_size", "learning_rates", "budget", "threshold", "init"},
                   "mask");
    get_size(j, "steps", m.steps, "mask");
    get_size(j, "batch_size", m.batch_size, "mask");
    get_real_list(j, "learning_rates", m.learning_rates, "mask");
    get_real(j, "budget", m.budget, "mask");
    get_real(j, "threshold", m.threshold, "mask");
    get_real(j, "init", m.init, "mask");
}

void parse_recipes(const Json& j, ExperimentConfig& c) {
    reject_unknown(j,
                   {"sweep", "ood", "adamreg", "multitask", "continual", "track", "theory",
                    "fisher"},
                   "recipes");
    if (const Json* v = maybe(j, "sweep")) {
        reject_unknown(*v, {"fractions", "shots"}, "recipes.sweep");
        get_real_list(*v, "fractions", c.sweep.fractions, "recipes.sweep");
        get_size(*v, "shots", c.sweep.shots, "recipes.sweep");
    }
    if (const Json* v = maybe(j, "ood")) {
        reject_unknown(*v, {"task", "shifts", "alphas", "shots", "seed"}, "recipes.ood");
        get_size(*v, "task", c.ood.task, "recipes.ood");
        get_real_list(*v, "shifts", c.ood.shifts, "recipes.ood");
        get_real_list(*v, "alphas", c.ood.alphas, "recipes.ood");
        get_size(*v, "shots", c.ood.shots, "recipes.ood");
        get_uint(*v, "seed", c.ood.seed, "recipes.ood");
    }
    if (const Json* v = maybe(j, "adamreg")) {
        reject_unknown(*v, {"task", "shots", "adam_learning_rate", "l1_strength"},
                       "recipes.adamreg");
        get_size(*v, "task", c.adamreg.task, "recipes.adamreg");
        get_size(*v, "shots", c.adamreg.shots, "recipes.adamreg");
        get_real(*v, "adam_learning_rate", c.adamreg.adam_learning_rate, "recipes.adamreg");
        get_real(*v, "l1_strength", c.adamreg.l1_strength, "recipes.adamreg");
    }
    if (const Json* v = maybe(j, "multitask")) {
        reject_unknown(*v, {"shots", "purify_steps"}, "recipes.multitask");
        get_size(*v, "shots", c.multitask.shots, "recipes.multitask");
        get_size(*v, "purify_steps", c.multitask.purify_steps, "recipes.multitask");
    }
    if (const Json* v = maybe(j, "continual")) {
        reject_unknown(*v, {"tasks", "shots", "mask_learning_rate"}, "recipes.continual");
        get_size_list(*v, "tasks", c.continual.tasks, "recipes.continual");
        get_size(*v, "shots", c.continual.shots, "recipes.continual");
        get_real(*v, "mask_learning_rate", c.continual.mask_learning_rate, "recipes.continual");
    }
    if (const Json* v = maybe(j, "track")) {
        reject_unknown(*v, {"task", "shots", "every"}, "recipes.track");
        get_size(*v, "task", c.track.task, "recipes.track");
        get_size(*v, "shots", c.track.shots, "recipes.track");
        get_size(*v, "every", c.track.every, "recipes.track");
    }
    if (const Json* v = maybe(j, "theory")) {
        reject_unknown(*v, {"shots", "levels", "delta", "eps1", "eps2"}, "recipes.theory");
        get_size(*v, "shots", c.theory.shots, "recipes.theory");
        get_uint(*v, "levels", c.theory.levels, "recipes.theory");
        get_real(*v, "delta", c.theory.delta, "recipes.theory");
        get_real(*v, "eps1", c.theory.eps1, "recipes.theory");
        get_real(*v, "eps2", c.theory.eps2, "recipes.theory");
    }
    if (const Json* v = maybe(j, "fisher")) {
        reject_unknown(*v, {"shots"}, "recipes.fisher");
        get_size(*v, "shots", c.fisher.shots, "recipes.fisher");
    }
}

void check_positive(double v, const std::string& what) {
    if (!(v > 0.0) || !std::isfinite(v)) fail_config(what + " must be positive");
}

void check_fraction(double v, const std::string& what) {
    if (!(v > 0.0 && v <= 1.0)) fail_config(what + " must lie in (0, 1]");
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

/// Suite-determining fields only: two configs with equal suite documents can
/// share one artifact directory.
Json suite_document(const ExperimentConfig& cfg) {
    Json j = config_to_json(cfg);
    j.erase("recipe");
    j.erase("out_dir");
    j.erase("workers");
    j.erase("recipes");
    return j;
}

const Json* recipe_params(const Json& doc, const std::string& recipe) {
    auto it = doc.find("recipes");
    if (it == doc.end()) return nullptr;
    auto p = it->find(recipe);
    return p == it->end() ? nullptr : &*p;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (world.latent_dim == 0) fail_config("world.latent_dim must be positive");
    if (world.obs_dim < world.latent_dim)
        fail_config("world.obs_dim must be at least world.latent_dim");
    if (world.obs_noise < 0.0) fail_config("world.obs_noise must be non-negative");
    if (families.empty()) fail_config("families must not be empty");
    for (size_t i = 0; i < families.size(); ++i) {
        std::string where = "families[" + std::to_string(i) + "]";
        if (families[i].num_classes < 2) fail_config(where + ".num_classes must be at least 2");
        if (families[i].rho < 0.0 || families[i].rho > 1.0)
            fail_config(where + ".rho must lie in [0, 1]");
    }
    if (shots.empty()) fail_config("shots must not be empty");
    for (size_t s : shots)
        if (s == 0) fail_config("shots entries must be positive");
    if (test_shots == 0) fail_config("test_shots must be positive");
    if (seeds.empty()) fail_config("seeds must not be empty");
    for (size_t i = 0; i < seeds.size(); ++i)
        for (size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j]) fail_config("seeds must be distinct");
    if (model.hidden_widths.empty()) fail_config("model.hidden_widths must not be empty");
    for (size_t w : model.hidden_widths)
        if (w == 0) fail_config("model.hidden_widths entries must be positive");
    if (pretrain.shots == 0) fail_config("pretrain.shots must be positive");
    if (pretrain.steps == 0) fail_config("pretrain.steps must be positive");
    check_positive(pretrain.learning_rate, "pretrain.learning_rate");
    if (pretrain.batch_size == 0) fail_config("pretrain.batch_size must be positive");
    if (pretrain.weight_decay < 0.0) fail_config("pretrain.weight_decay must be non-negative");
    check_positive(finetune.learning_rate, "finetune.learning_rate");
    if (finetune.batch_size == 0) fail_config("finetune.batch_size must be positive");
    if (finetune.weight_decay < 0.0) fail_config("finetune.weight_decay must be non-negative");
    if (mask.steps == 0) fail_config("mask.steps must be positive");
    if (mask.batch_size == 0) fail_config("mask.batch_size must be positive");
    if (mask.learning_rates.empty()) fail_config("mask.learning_rates must not be empty");
    for (double lr : mask.learning_rates) check_positive(lr, "mask.learning_rates entries");
    check_fraction(mask.budget, "mask.budget");
    if (!(mask.threshold > 0.0 && mask.threshold < 1.0))
        fail_config("mask.threshold must lie in (0, 1)");
    if (!std::isfinite(mask.init)) fail_config("mask.init must be finite");
    if (eval_bins == 0) fail_config("eval.bins must be positive");

    size_t n_tasks = 2 * families.size();
    auto check_task = [&](size_t t, const std::string& what) {
        if (t >= n_tasks)
            fail_config(what + " out of range: the suite has " + std::to_string(n_tasks) +
                        " tasks");
    };
    if (sweep.fractions.empty()) fail_config("recipes.sweep.fractions must not be empty");
    for (size_t i = 0; i < sweep.fractions.size(); ++i) {
        check_fraction(sweep.fractions[i], "recipes.sweep.fractions entries");
        if (i > 0 && sweep.fractions[i] <= sweep.fractions[i - 1])
            fail_config("recipes.sweep.fractions must be strictly increasing");
    }
    if (sweep.shots == 0) fail_config("recipes.sweep.shots must be positive");
    check_task(ood.task, "recipes.ood.task");
    if (ood.shifts.empty()) fail_config("recipes.ood.shifts must not be empty");
    for (size_t i = 0; i < ood.shifts.size(); ++i) {
        check_positive(ood.shifts[i], "recipes.ood.shifts entries");
        if (i > 0 && ood.shifts[i] <= ood.shifts[i - 1])
            fail_config("recipes.ood.shifts must be strictly increasing");
    }
    if (ood.alphas.empty()) fail_config("recipes.ood.alphas must not be empty");
    for (size_t i = 0; i < ood.alphas.size(); ++i) {
        if (ood.alphas[i] < 0.0 || ood.alphas[i] > 1.0)
            fail_config("recipes.ood.alphas entries must lie in [0, 1]");
        if (i > 0 && ood.alphas[i] <= ood.alphas[i - 1])
            fail_config("recipes.ood.alphas must be strictly increasing");
    }
    if (ood.shots == 0) fail_config("recipes.ood.shots must be positive");
    check_task(adamreg.task, "recipes.adamreg.task");
    if (adamreg.shots == 0) fail_config("recipes.adamreg.shots must be positive");
    check_positive(adamreg.adam_learning_rate, "recipes.adamreg.adam_learning_rate");
    if (adamreg.l1_strength < 0.0) fail_config("recipes.adamreg.l1_strength must be non-negative");
    if (multitask.shots == 0) fail_config("recipes.multitask.shots must be positive");
    if (continual.tasks.empty()) fail_config("recipes.continual.tasks must not be empty");
    for (size_t t : continual.tasks) check_task(t, "recipes.continual.tasks entries");
    if (continual.shots == 0) fail_config("recipes.continual.shots must be positive");
    if (continual.mask_learning_rate < 0.0)
        fail_config("recipes.continual.mask_learning_rate must be non-negative");
    check_task(track.task, "recipes.track.task");
    if (track.shots == 0) fail_config("recipes.track.shots must be positive");
    if (theory.shots == 0) fail_config("recipes.theory.shots must be positive");
    if (theory.levels < 2) fail_config("recipes.theory.levels must be at least 2");
    if (!(theory.delta > 0.0 && theory.delta < 1.0))
        fail_config("recipes.theory.delta must lie in (0, 1)");
    if (theory.eps1 < 0.0 || theory.eps2 < 0.0)
        fail_config("recipes.theory.eps values must be non-negative");
    if (fisher.shots == 0) fail_config("recipes.fisher.shots must be positive");
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.recipe = "tableone";
    cfg.model.input_dim = cfg.world.obs_dim;
    cfg.model.hidden_widths = {32, 32};
    cfg.model.activation = Activation::tanh;
    cfg.model.layernorm = true;
    cfg.model.num_classes = 2;
    cfg.model.head_mode = HeadMode::frozen_random;
    cfg.model.freeze_first_layer = true;
    return cfg;
}

ExperimentConfig config_from_json(const Json& doc) {
    reject_unknown(doc,
                   {"recipe", "out_dir", "seeds", "workers", "world", "families", "shots",
                    "test_shots", "model", "pretrain", "finetune", "mask", "eval", "recipes"},
                   "config");
    ExperimentConfig cfg = default_config();
    get_string(doc, "recipe", cfg.recipe, "config");
    get_string(doc, "out_dir", cfg.out_dir, "config");
    get_uint_list(doc, "seeds", cfg.seeds, "config");
    get_size(doc, "workers", cfg.workers, "config");
    if (const Json* v = maybe(doc, "world")) parse_world(*v, cfg.world);
    if (const Json* v = maybe(doc, "families")) parse_families(*v, cfg.families);
    get_size_list(doc, "shots", cfg.shots, "config");
    get_size(doc, "test_shots", cfg.test_shots, "config");
    if (const Json* v = maybe(doc, "model")) parse_model(*v, cfg.model);
    if (const Json* v = maybe(doc, "pretrain")) parse_pretrain(*v, cfg.pretrain);
    if (const Json* v = maybe(doc, "finetune")) parse_finetune(*v, cfg.finetune);
    if (const Json* v = maybe(doc, "mask")) parse_mask(*v, cfg.mask);
    if (const Json* v = maybe(doc, "eval")) {
        reject_unknown(*v, {"bins"}, "eval");
        get_size(*v, "bins", cfg.eval_bins, "eval");
    }
    if (const Json* v = maybe(doc, "recipes")) parse_recipes(*v, cfg);
    cfg.model.input_dim = cfg.world.obs_dim;
    cfg.validate();
    return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
    Json j;
    j["recipe"] = cfg.recipe;
    j["out_dir"] = cfg.out_dir;
    j["seeds"] = cfg.seeds;
    j["workers"] = cfg.workers;
    j["world"] = {{"latent_dim", cfg.world.latent_dim},
                  {"obs_dim", cfg.world.obs_dim},
                  {"obs_noise", cfg.world.obs_noise},
                  {"seed", cfg.world.seed}};
    j["families"] = Json::array();
    for (const auto& f : cfg.families)
        j["families"].push_back(
            {{"num_classes", f.num_classes}, {"rho", f.rho}, {"seed", f.seed}});
    j["shots"] = cfg.shots;
    j["test_shots"] = cfg.test_shots;
    j["model"] = {{"hidden_widths", cfg.model.hidden_widths},
                  {"activation", to_string(cfg.model.activation)},
                  {"layernorm", cfg.model.layernorm},
                  {"freeze_first_layer", cfg.model.freeze_first_layer}};
    j["pretrain"] = {{"shots", cfg.pretrain.shots},
                     {"steps", cfg.pretrain.steps},
                     {"learning_rate", cfg.pretrain.learning_rate},
                     {"batch_size", cfg.pretrain.batch_size},
                     {"weight_decay", cfg.pretrain.weight_decay}};
    j["finetune"] = {{"algorithm", to_string(cfg.finetune.algorithm)},
                     {"steps", cfg.finetune.steps},
                     {"learning_rate", cfg.finetune.learning_rate},
                     {"batch_size", cfg.finetune.batch_size},
                     {"weight_decay", cfg.finetune.weight_decay}};
    j["mask"] = {{"steps", cfg.mask.steps},
                 {"batch_size", cfg.mask.batch_size},
                 {"learning_rates", cfg.mask.learning_rates},
                 {"budget", cfg.mask.budget},
                 {"threshold", cfg.mask.threshold},
                 {"init", cfg.mask.init}};
    j["eval"] = {{"bins", cfg.eval_bins}};
    j["recipes"] = {
        {"sweep", {{"fractions", cfg.sweep.fractions}, {"shots", cfg.sweep.shots}}},
        {"ood",
         {{"task", cfg.ood.task},
          {"shifts", cfg.ood.shifts},
          {"alphas", cfg.ood.alphas},
          {"shots", cfg.ood.shots},
          {"seed", cfg.ood.seed}}},
        {"adamreg",
         {{"task", cfg.adamreg.task},
          {"shots", cfg.adamreg.shots},
          {"adam_learning_rate", cfg.adamreg.adam_learning_rate},
          {"l1_strength", cfg.adamreg.l1_strength}}},
        {"multitask",
         {{"shots", cfg.multitask.shots}, {"purify_steps", cfg.multitask.purify_steps}}},
        {"continual",
         {{"tasks", cfg.continual.tasks},
          {"shots", cfg.continual.shots},
          {"mask_learning_rate", cfg.continual.mask_learning_rate}}},
        {"track",
         {{"task", cfg.track.task}, {"shots", cfg.track.shots}, {"every", cfg.track.every}}},
        {"theory",
         {{"shots", cfg.theory.shots},
          {"levels", cfg.theory.levels},
          {"delta", cfg.theory.delta},
          {"eps1", cfg.theory.eps1},
          {"eps2", cfg.theory.eps2}}},
        {"fisher", {{"shots", cfg.fisher.shots}}},
    };
    return j;
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string suite_hash(const ExperimentConfig& cfg) {
    return hex64(fnv1a64(suite_document(cfg).dump()));
}

std::string config_hash(const ExperimentConfig& cfg, const std::string& recipe) {
    Json j = suite_document(cfg);
    j["recipe"] = recipe;
    Json full = config_to_json(cfg);
    if (const Json* params = recipe_params(full, recipe)) j["params"] = *params;
    return hex64(fnv1a64(j.dump()));
}

Suite build_suite(const ExperimentConfig& cfg) {
    cfg.validate();
    Suite s;
    s.world = make_world(cfg.world.latent_dim, cfg.world.obs_dim, cfg.world.obs_noise,
                         cfg.world.seed);
    s.pretrain_task = make_pretrain_task(s.world, mix64(cfg.world.seed, kStreamTeacher));
    for (size_t f = 0; f < cfg.families.size(); ++f) {
        const FamilyConfig& fam = cfg.families[f];
        TaskSpec anchor =
            make_task(s.world, fam.num_classes, static_cast<int64_t>(f) + 1, nullptr, 0.0,
                      fam.seed);
        TaskSpec sibling = make_task(s.world, fam.num_classes, static_cast<int64_t>(f) + 1,
                                     &anchor, fam.rho, mix64(fam.seed, kStreamTeacher));
        std::string base = "f" + std::to_string(f);
        s.tasks.push_back({base + "a", f, 0, std::move(anchor)});
        s.tasks.push_back({base + "b", f, 1, std::move(sibling)});
    }
    return s;
}

uint64_t stage_seed(uint64_t run_seed, uint64_t task_index, uint64_t shots, uint64_t stage) {
    return mix64(mix64(run_seed, task_index, shots), stage);
}

namespace {

const SuiteTask& suite_task(const Suite& suite, size_t task_index) {
    if (task_index >= suite.tasks.size())
        fail_config("task index " + std::to_string(task_index) + " out of range: the suite has " +
                    std::to_string(suite.tasks.size()) + " tasks");
    return suite.tasks[task_index];
}

ModelSpec pretrain_spec(const ExperimentConfig& cfg) {
    ModelSpec s = cfg.model;
    s.input_dim = cfg.world.obs_dim;
    s.num_classes = 8;  // sign-pattern pretext classes
    s.head_mode = HeadMode::frozen_random;
    s.freeze_first_layer = false;  // the pretext task is what trains the first layer
    s.validate();
    return s;
}

OptimizerConfig finetune_opt(const FinetuneConfig& f) {
    OptimizerConfig oc;
    oc.algorithm = f.algorithm;
    oc.learning_rate = f.learning_rate;
    oc.batch_size = f.batch_size;
    oc.steps = f.steps;
    oc.weight_decay = f.weight_decay;
    return oc;
}

}  // namespace

Dataset train_set(const Suite& suite, size_t task_index, size_t shots, uint64_t run_seed) {
    const SuiteTask& t = suite_task(suite, task_index);
    return sample_kshot(t.task, shots, Split::train, stage_seed(run_seed, task_index, shots,
                                                                kStageData));
}

Dataset test_set(const Suite& suite, size_t task_index, size_t test_shots) {
    const SuiteTask& t = suite_task(suite, task_index);
    return sample_kshot(t.task, test_shots, Split::test,
                        mix64(t.task.seed, kStreamSample, test_shots));
}

ModelSpec task_spec(const ExperimentConfig& cfg, const TaskSpec& task) {
    ModelSpec s = cfg.model;
    s.input_dim = cfg.world.obs_dim;
    s.num_classes = task.num_classes;
    s.head_mode = HeadMode::frozen_random;
    s.validate();
    return s;
}

ParameterVector attach_head(const ParameterVector& body, const ModelSpec& spec,
                            const TaskSpec& task) {
    ParameterVector out = init_model(spec, 0);
    for (const Segment& seg : out.segments) {
        if (seg.kind == ParamKind::head) continue;
        const Segment* src = body.find_segment(seg.name);
        if (src == nullptr || src->length != seg.length)
            fail_config("attach_head: body has no matching segment '" + seg.name + "'");
        std::copy_n(body.values.begin() + static_cast<std::ptrdiff_t>(src->offset), seg.length,
                    out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
    set_unit_norm_head(out, "head", spec.num_classes, head_seed(task));
    return out;
}

GraftRegion grid_region(const ParameterVector& pre, const ParameterVector& ft,
                        const ModelSpec& spec, const Dataset& data, const ExperimentConfig& cfg,
                        double budget, uint64_t seed) {
    MaskOptConfig m;
    m.steps = cfg.mask.steps;
    m.batch_size = std::min(cfg.mask.batch_size, data.labels.size());
    m.init_value = cfg.mask.init;
    m.threshold = cfg.mask.threshold;
    m.sparsity_budget = budget;
    m.seed = seed;
    GraftRegion empty_base = region_from_indices({}, pre.size(), Provenance::learned);
    GraftRegion best;
    double best_loss = 0.0;
    bool have = false;
    for (double lr : cfg.mask.learning_rates) {
        m.learning_rate = lr;
        GraftRegion region = optimize_mask(pre, ft, empty_base, data, spec, m).second;
        double loss = loss_value(graft_compose(pre, ft, region), spec, data.inputs, data.labels);
        if (!have || loss < best_loss) {
            best = std::move(region);
            best_loss = loss;
            have = true;
        }
    }
    return best;
}

ArtifactCache::ArtifactCache(std::filesystem::path dir, const ExperimentConfig& cfg)
    : dir_(std::move(dir)), cfg_(cfg) {
    std::filesystem::create_directories(dir_);
}

ParameterVector ArtifactCache::model_stage(const std::string& name,
                                           const std::function<ParameterVector()>& compute) {
    std::filesystem::path path = dir_ / (name + ".grft");
    if (std::filesystem::exists(path)) return load_checkpoint(path);
    ParameterVector p = compute();
    save_checkpoint(p, path);
    return p;
}

GraftRegion ArtifactCache::region_stage(const std::string& name,
                                        const std::function<GraftRegion()>& compute) {
    std::filesystem::path path = dir_ / (name + ".gmsk");
    if (std::filesystem::exists(path)) return load_region(path);
    GraftRegion r = compute();
    save_region(r, path);
    return r;
}

ParameterVector ArtifactCache::pretrain_body(const Suite& suite, uint64_t run_seed) {
    return model_stage("pretrain_s" + std::to_string(run_seed), [&] {
        ModelSpec spec = pretrain_spec(cfg_);
        Dataset data =
            sample_kshot(suite.pretrain_task, cfg_.pretrain.shots, Split::train,
                         stage_seed(run_seed, kPretrainTaskIndex, cfg_.pretrain.shots,
                                    kStageData));
        OptimizerConfig oc;
        oc.learning_rate = cfg_.pretrain.learning_rate;
        oc.batch_size = cfg_.pretrain.batch_size;
        oc.steps = cfg_.pretrain.steps;
        oc.weight_decay = cfg_.pretrain.weight_decay;
        oc.seed = stage_seed(run_seed, kPretrainTaskIndex, cfg_.pretrain.shots, kStageFinetune);
        return train(init_model(spec, run_seed), spec, data.inputs, data.labels, oc).final;
    });
}

ParameterVector ArtifactCache::finetuned(const Suite& suite, size_t task_index, size_t shots,
                                         uint64_t run_seed) {
    const SuiteTask& t = suite_task(suite, task_index);
    std::string name =
        "ft_" + t.id + "_k" + std::to_string(shots) + "_s" + std::to_string(run_seed);
    return model_stage(name, [&] {
        ModelSpec spec = task_spec(cfg_, t.task);
        ParameterVector pre = attach_head(pretrain_body(suite, run_seed), spec, t.task);
        Dataset data = train_set(suite, task_index, shots, run_seed);
        OptimizerConfig oc = finetune_opt(cfg_.finetune);
        oc.seed = stage_seed(run_seed, task_index, shots, kStageFinetune);
        return train(pre, spec, data.inputs, data.labels, oc).final;
    });
}

GraftRegion ArtifactCache::learned_region(const Suite& suite, size_t task_index, size_t shots,
                                          uint64_t run_seed) {
    const SuiteTask& t = suite_task(suite, task_index);
    std::string name =
        "region_" + t.id + "_k" + std::to_string(shots) + "_s" + std::to_string(run_seed);
    return region_stage(name, [&] {
        ModelSpec spec = task_spec(cfg_, t.task);
        ParameterVector pre = attach_head(pretrain_body(suite, run_seed), spec, t.task);
        ParameterVector ft = finetuned(suite, task_index, shots, run_seed);
        Dataset data = train_set(suite, task_index, shots, run_seed);
        return grid_region(pre, ft, spec, data, cfg_, cfg_.mask.budget,
                           stage_seed(run_seed, task_index, shots, kStageMask));
    });
}

void parallel_slots(size_t n, size_t workers, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    if (workers == 0) {
        unsigned hw = std::thread::hardware_concurrency();
        workers = hw == 0 ? 1 : hw;
    }
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto body = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (err) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace sg
