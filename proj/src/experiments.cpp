#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "skillgraft/continual.hpp"
#include "skillgraft/metrics.hpp"
#include "skillgraft/recipes.hpp"
#include "skillgraft/theory.hpp"

namespace sg {

namespace {

namespace fs = std::filesystem;

struct Ctx {
    const ExperimentConfig& cfg;
    const Suite& suite;
    ArtifactCache& cache;
    fs::path reports;
    bool quiet;
};

void note(const Ctx& ctx, const std::string& msg) {
    if (!ctx.quiet) std::fprintf(stderr, "[skillgraft] %s\n", msg.c_str());
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Json stat(const std::vector<double>& v) {
    return Json{{"mean", mean_of(v)}, {"std", std_of(v)}, {"n", v.size()}};
}

struct GainCell {
    double value = 0.0;
    bool degenerate = false;
};

/// rel_gain with the degenerate denominator reported instead of thrown.
GainCell safe_gain(double p_region, double p_zero, double p_one) {
    if (p_one == p_zero) return {0.0, true};
    return {rel_gain(p_region, p_zero, p_one), false};
}

Json gain_stat(const std::vector<GainCell>& cells) {
    std::vector<double> ok;
    size_t degenerate = 0;
    for (const GainCell& c : cells)
        c.degenerate ? static_cast<void>(++degenerate) : ok.push_back(c.value);
    Json j = stat(ok);
    j["degenerate_count"] = degenerate;
    j["n"] = cells.size();
    return j;
}

std::string g17(double v) { return format_g17(v); }

void write_report(const Ctx& ctx, const std::string& name, const Json& doc) {
    fs::path path = ctx.reports / (name + ".json");
    write_json(doc, path);
    note(ctx, "wrote " + path.string());
}

ParameterVector pre_model(const Ctx& ctx, size_t task_index, uint64_t run_seed,
                          const ModelSpec& spec) {
    return attach_head(ctx.cache.pretrain_body(ctx.suite, run_seed), spec,
                       ctx.suite.tasks[task_index].task);
}

/// Multi-head model over `entries` with the pretrained body and one frozen
/// verbalizer per entry.
ParameterVector pre_multihead(const Ctx& ctx, const TaskCollection& coll, uint64_t run_seed) {
    ParameterVector out = init_mt_model(coll, run_seed);
    ParameterVector body = ctx.cache.pretrain_body(ctx.suite, run_seed);
    for (const Segment& seg : out.segments) {
        if (seg.kind == ParamKind::head) continue;
        const Segment* src = body.find_segment(seg.name);
        if (src == nullptr || src->length != seg.length)
            fail_config("multi-head model: pretrained body has no segment '" + seg.name + "'");
        std::copy_n(body.values.begin() + static_cast<std::ptrdiff_t>(src->offset), seg.length,
                    out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
    return out;
}

ModelSpec body_spec(const ExperimentConfig& cfg) {
    ModelSpec s = cfg.model;
    s.input_dim = cfg.world.obs_dim;
    s.num_classes = 2;  // multi-head layouts ignore the single-head fields
    s.head_mode = HeadMode::frozen_random;
    return s;
}

MaskOptConfig mask_opt(const ExperimentConfig& cfg, double learning_rate, size_t n_train,
                       uint64_t seed) {
    MaskOptConfig m;
    m.steps = cfg.mask.steps;
    m.learning_rate = learning_rate;
    m.batch_size = std::min(cfg.mask.batch_size, n_train);
    m.init_value = cfg.mask.init;
    m.threshold = cfg.mask.threshold;
    m.sparsity_budget = cfg.mask.budget;
    m.seed = seed;
    return m;
}

// ---------------------------------------------------------------------------
// tableone: per (task, shots, seed) accuracies, calibration, agreement and
// relative gain of the grafted model against pre and fine-tuned endpoints.

void recipe_tableone(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const size_t n_t = ctx.suite.tasks.size(), n_k = cfg.shots.size(), n_s = cfg.seeds.size();

    struct Row {
        EvalReport pre, ft, graft;
        double agreement = 0.0;
        GainCell gain;
        uint64_t region_size = 0;
        double sparsity = 0.0;
    };
    std::vector<Row> rows(n_t * n_k * n_s);
    parallel_slots(rows.size(), cfg.workers, [&](size_t i) {
        size_t si = i % n_s, ki = (i / n_s) % n_k, t = i / (n_s * n_k);
        uint64_t seed = cfg.seeds[si];
        size_t shots = cfg.shots[ki];
        ModelSpec spec = task_spec(cfg, ctx.suite.tasks[t].task);
        ParameterVector pre = pre_model(ctx, t, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, t, shots, seed);
        GraftRegion region = ctx.cache.learned_region(ctx.suite, t, shots, seed);
        ParameterVector graft = graft_compose(pre, ft, region);
        Dataset test = test_set(ctx.suite, t, cfg.test_shots);
        Row& r = rows[i];
        r.pre = evaluate(pre, spec, test, cfg.eval_bins);
        r.ft = evaluate(ft, spec, test, cfg.eval_bins);
        r.graft = evaluate(graft, spec, test, cfg.eval_bins);
        r.agreement = agreement(graft, ft, spec, test);
        r.gain = safe_gain(r.graft.accuracy, r.pre.accuracy, r.ft.accuracy);
        r.region_size = region.indices.size();
        r.sparsity = region.sparsity();
    });

    Json out_rows = Json::array();
    Json summary = Json::array();
    std::string csv =
        "task,family,shots,seed,pre_accuracy,ft_accuracy,graft_accuracy,pre_ece,ft_ece,"
        "graft_ece,agreement,region_size,region_sparsity,rel_gain,rel_gain_degenerate\n";
    for (size_t t = 0; t < n_t; ++t) {
        const SuiteTask& st = ctx.suite.tasks[t];
        for (size_t ki = 0; ki < n_k; ++ki) {
            std::vector<double> pre_a, ft_a, gr_a, pre_e, ft_e, gr_e, agree, spars;
            std::vector<GainCell> gains;
            for (size_t si = 0; si < n_s; ++si) {
                const Row& r = rows[(t * n_k + ki) * n_s + si];
                out_rows.push_back({{"task", st.id},
                                    {"family", st.family},
                                    {"shots", cfg.shots[ki]},
                                    {"seed", cfg.seeds[si]},
                                    {"pre_accuracy", r.pre.accuracy},
                                    {"ft_accuracy", r.ft.accuracy},
                                    {"graft_accuracy", r.graft.accuracy},
                                    {"pre_ece", r.pre.ece},
                                    {"ft_ece", r.ft.ece},
                                    {"graft_ece", r.graft.ece},
                                    {"agreement", r.agreement},
                                    {"region_size", r.region_size},
                                    {"region_sparsity", r.sparsity},
                                    {"rel_gain", r.gain.value},
                                    {"rel_gain_degenerate", r.gain.degenerate}});
                csv += st.id + "," + std::to_string(st.family) + "," +
                       std::to_string(cfg.shots[ki]) + "," + std::to_string(cfg.seeds[si]) + "," +
                       g17(r.pre.accuracy) + "," + g17(r.ft.accuracy) + "," +
                       g17(r.graft.accuracy) + "," + g17(r.pre.ece) + "," + g17(r.ft.ece) + "," +
                       g17(r.graft.ece) + "," + g17(r.agreement) + "," +
                       std::to_string(r.region_size) + "," + g17(r.sparsity) + "," +
                       g17(r.gain.value) + "," + (r.gain.degenerate ? "1" : "0") + "\n";
                pre_a.push_back(r.pre.accuracy);
                ft_a.push_back(r.ft.accuracy);
                gr_a.push_back(r.graft.accuracy);
                pre_e.push_back(r.pre.ece);
                ft_e.push_back(r.ft.ece);
                gr_e.push_back(r.graft.ece);
                agree.push_back(r.agreement);
                spars.push_back(r.sparsity);
                gains.push_back(rows[(t * n_k + ki) * n_s + si].gain);
            }
            summary.push_back({{"task", st.id},
                               {"family", st.family},
                               {"shots", cfg.shots[ki]},
                               {"pre_accuracy", stat(pre_a)},
                               {"ft_accuracy", stat(ft_a)},
                               {"graft_accuracy", stat(gr_a)},
                               {"pre_ece", stat(pre_e)},
                               {"ft_ece", stat(ft_e)},
                               {"graft_ece", stat(gr_e)},
                               {"agreement", stat(agree)},
                               {"region_sparsity", stat(spars)},
                               {"rel_gain", gain_stat(gains)}});
        }
    }
    atomic_write_text(ctx.reports / "tableone.csv", csv);
    write_report(ctx, "tableone",
                 Json{{"recipe", "tableone"}, {"rows", out_rows}, {"summary", summary}});
}

// ---------------------------------------------------------------------------
// sweep: accuracy as a function of region sparsity for learned masks,
// movement and random baselines, plus zero-pruning of the learned region and
// the bias-only control.

void recipe_sweep(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const SweepParams& p = cfg.sweep;
    const size_t n_t = ctx.suite.tasks.size(), n_s = cfg.seeds.size(), n_f = p.fractions.size();

    struct Cell {
        std::vector<double> learned, movement, random, lth;
        double bias_acc = 0.0, bias_sparsity = 0.0;
        double ft_acc = 0.0, pre_acc = 0.0;
    };
    std::vector<Cell> cells(n_t * n_s);
    parallel_slots(cells.size(), cfg.workers, [&](size_t i) {
        size_t si = i % n_s, t = i / n_s;
        uint64_t seed = cfg.seeds[si];
        ModelSpec spec = task_spec(cfg, ctx.suite.tasks[t].task);
        ParameterVector pre = pre_model(ctx, t, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, t, p.shots, seed);
        Dataset mask_data = train_set(ctx.suite, t, p.shots, seed);
        Dataset test = test_set(ctx.suite, t, cfg.test_shots);
        Cell& c = cells[i];
        c.ft_acc = accuracy(ft, spec, test);
        c.pre_acc = accuracy(pre, spec, test);
        for (size_t fi = 0; fi < n_f; ++fi) {
            double f = p.fractions[fi];
            std::string name = "region_" + ctx.suite.tasks[t].id + "_k" +
                               std::to_string(p.shots) + "_s" + std::to_string(seed) + "_f" +
                               g17(f);
            GraftRegion learned = ctx.cache.region_stage(name, [&] {
                return grid_region(pre, ft, spec, mask_data, cfg, f,
                                   stage_seed(seed, t, p.shots, kStageMask));
            });
            c.learned.push_back(accuracy(graft_compose(pre, ft, learned), spec, test));
            c.lth.push_back(accuracy(lth_prune(ft, learned), spec, test));
            GraftRegion moved = movement_region(pre, ft, spec, f);
            c.movement.push_back(accuracy(graft_compose(pre, ft, moved), spec, test));
            GraftRegion rnd =
                baseline_region(BaselineKind::random, pre, spec, nullptr, f,
                                mix64(stage_seed(seed, t, p.shots, kStageVariant), fi));
            c.random.push_back(accuracy(graft_compose(pre, ft, rnd), spec, test));
        }
        GraftRegion bias = baseline_region(BaselineKind::bias_only, pre, spec, nullptr,
                                           cfg.mask.budget, 0);
        c.bias_acc = accuracy(graft_compose(pre, ft, bias), spec, test);
        c.bias_sparsity = bias.sparsity();
    });

    auto curve_of = [&](size_t t, std::vector<double> Cell::* member) {
        SweepCurve curve;
        for (size_t fi = 0; fi < n_f; ++fi) {
            std::vector<double> ys;
            for (size_t si = 0; si < n_s; ++si) ys.push_back((cells[t * n_s + si].*member)[fi]);
            curve.points.push_back({p.fractions[fi], mean_of(ys), std_of(ys), ys.size()});
        }
        return curve;
    };

    Json tasks = Json::array();
    for (size_t t = 0; t < n_t; ++t) {
        const SuiteTask& st = ctx.suite.tasks[t];
        Json curves;
        const std::pair<const char*, std::vector<double> Cell::*> methods[] = {
            {"learned", &Cell::learned},
            {"movement", &Cell::movement},
            {"random", &Cell::random},
            {"lth", &Cell::lth},
        };
        for (const auto& [mname, member] : methods) {
            SweepCurve curve = curve_of(t, member);
            write_curve_csv(curve, ctx.reports / ("sweep_" + st.id + "_" + mname + ".csv"));
            curves[mname] = curve_to_json(curve);
        }
        std::vector<double> ft_a, pre_a, bias_a, bias_s;
        for (size_t si = 0; si < n_s; ++si) {
            ft_a.push_back(cells[t * n_s + si].ft_acc);
            pre_a.push_back(cells[t * n_s + si].pre_acc);
            bias_a.push_back(cells[t * n_s + si].bias_acc);
            bias_s.push_back(cells[t * n_s + si].bias_sparsity);
        }
        tasks.push_back({{"task", st.id},
                         {"family", st.family},
                         {"ft_accuracy", stat(ft_a)},
                         {"pre_accuracy", stat(pre_a)},
                         {"bias_only", Json{{"accuracy", stat(bias_a)}, {"sparsity", stat(bias_s)}}},
                         {"curves", curves}});
    }
    write_report(ctx, "sweep",
                 Json{{"recipe", "sweep"},
                      {"shots", p.shots},
                      {"fractions", p.fractions},
                      {"tasks", tasks}});
}

// ---------------------------------------------------------------------------
// retrain: train only the learned region's coordinates from pre and compare
// against grafting the fine-tuned values into the same region.

void recipe_retrain(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const size_t n_t = ctx.suite.tasks.size(), n_k = cfg.shots.size(), n_s = cfg.seeds.size();

    struct Row {
        EvalReport ft, graft, retrained;
        uint64_t region_size = 0;
    };
    std::vector<Row> rows(n_t * n_k * n_s);
    parallel_slots(rows.size(), cfg.workers, [&](size_t i) {
        size_t si = i % n_s, ki = (i / n_s) % n_k, t = i / (n_s * n_k);
        uint64_t seed = cfg.seeds[si];
        size_t shots = cfg.shots[ki];
        ModelSpec spec = task_spec(cfg, ctx.suite.tasks[t].task);
        ParameterVector pre = pre_model(ctx, t, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, t, shots, seed);
        GraftRegion region = ctx.cache.learned_region(ctx.suite, t, shots, seed);
        Dataset data = train_set(ctx.suite, t, shots, seed);
        OptimizerConfig oc;
        oc.algorithm = cfg.finetune.algorithm;
        oc.learning_rate = cfg.finetune.learning_rate;
        oc.batch_size = cfg.finetune.batch_size;
        oc.steps = cfg.finetune.steps;
        oc.weight_decay = cfg.finetune.weight_decay;
        oc.seed = stage_seed(seed, t, shots, kStageVariant);
        ParameterVector retrained = retrain_region(pre, spec, region, data, oc);
        Dataset test = test_set(ctx.suite, t, cfg.test_shots);
        Row& r = rows[i];
        r.ft = evaluate(ft, spec, test, cfg.eval_bins);
        r.graft = evaluate(graft_compose(pre, ft, region), spec, test, cfg.eval_bins);
        r.retrained = evaluate(retrained, spec, test, cfg.eval_bins);
        r.region_size = region.indices.size();
    });

    Json out_rows = Json::array();
    Json summary = Json::array();
    for (size_t t = 0; t < n_t; ++t) {
        const SuiteTask& st = ctx.suite.tasks[t];
        for (size_t ki = 0; ki < n_k; ++ki) {
            std::vector<double> ft_a, gr_a, re_a, ft_e, gr_e, re_e, diff;
            for (size_t si = 0; si < n_s; ++si) {
                const Row& r = rows[(t * n_k + ki) * n_s + si];
                out_rows.push_back({{"task", st.id},
                                    {"shots", cfg.shots[ki]},
                                    {"seed", cfg.seeds[si]},
                                    {"ft_accuracy", r.ft.accuracy},
                                    {"graft_accuracy", r.graft.accuracy},
                                    {"retrain_accuracy", r.retrained.accuracy},
                                    {"ft_ece", r.ft.ece},
                                    {"graft_ece", r.graft.ece},
                                    {"retrain_ece", r.retrained.ece},
                                    {"region_size", r.region_size}});
                ft_a.push_back(r.ft.accuracy);
                gr_a.push_back(r.graft.accuracy);
                re_a.push_back(r.retrained.accuracy);
                ft_e.push_back(r.ft.ece);
                gr_e.push_back(r.graft.ece);
                re_e.push_back(r.retrained.ece);
                diff.push_back(r.retrained.accuracy - r.graft.accuracy);
            }
            summary.push_back({{"task", st.id},
                               {"shots", cfg.shots[ki]},
                               {"ft_accuracy", stat(ft_a)},
                               {"graft_accuracy", stat(gr_a)},
                               {"retrain_accuracy", stat(re_a)},
                               {"ft_ece", stat(ft_e)},
                               {"graft_ece", stat(gr_e)},
                               {"retrain_ece", stat(re_e)},
                               {"retrain_minus_graft", stat(diff)}});
        }
    }
    write_report(ctx, "retrain",
                 Json{{"recipe", "retrain"}, {"rows", out_rows}, {"summary", summary}});
}

// ---------------------------------------------------------------------------
// ood: accuracy under observation-space shift plus weight-space interpolation
// curves from pre toward the fine-tuned and grafted endpoints.

void recipe_ood(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const OodParams& p = cfg.ood;
    const SuiteTask& st = ctx.suite.tasks[p.task];
    const size_t n_s = cfg.seeds.size(), n_sh = p.shifts.size();

    // The shifted worlds and their test draws are part of the benchmark, not
    // of any run seed.
    std::vector<Dataset> ood_tests;
    for (size_t si = 0; si < n_sh; ++si) {
        TaskSpec shifted = make_ood_task(st.task, p.shifts[si], mix64(p.seed, kStreamShift, si));
        ood_tests.push_back(
            sample_kshot(shifted, cfg.test_shots, Split::test, mix64(p.seed, kStreamSample, si)));
    }
    Dataset id_test = test_set(ctx.suite, p.task, cfg.test_shots);

    struct Cell {
        double pre_id = 0.0, ft_id = 0.0, graft_id = 0.0;
        std::vector<double> pre_ood, ft_ood, graft_ood;
        std::vector<InterpolationCurve> wise_ft, wise_graft;  // one per shift
    };
    std::vector<Cell> cells(n_s);
    parallel_slots(n_s, cfg.workers, [&](size_t i) {
        uint64_t seed = cfg.seeds[i];
        ModelSpec spec = task_spec(cfg, st.task);
        ParameterVector pre = pre_model(ctx, p.task, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, p.task, p.shots, seed);
        GraftRegion region = ctx.cache.learned_region(ctx.suite, p.task, p.shots, seed);
        ParameterVector graft = graft_compose(pre, ft, region);
        Cell& c = cells[i];
        c.pre_id = accuracy(pre, spec, id_test);
        c.ft_id = accuracy(ft, spec, id_test);
        c.graft_id = accuracy(graft, spec, id_test);
        for (size_t si = 0; si < n_sh; ++si) {
            c.pre_ood.push_back(accuracy(pre, spec, ood_tests[si]));
            c.ft_ood.push_back(accuracy(ft, spec, ood_tests[si]));
            c.graft_ood.push_back(accuracy(graft, spec, ood_tests[si]));
            c.wise_ft.push_back(
                interpolation_curve(pre, ft, p.alphas, id_test, ood_tests[si], spec));
            c.wise_graft.push_back(
                interpolation_curve(pre, graft, p.alphas, id_test, ood_tests[si], spec));
        }
    });

    auto mean_curve = [&](std::vector<InterpolationCurve> Cell::* member, size_t shift_index) {
        InterpolationCurve mean;
        for (size_t ai = 0; ai < p.alphas.size(); ++ai) {
            std::vector<double> id_a, ood_a;
            for (size_t si = 0; si < n_s; ++si) {
                const InterpolationPoint& pt = (cells[si].*member)[shift_index].points[ai];
                id_a.push_back(pt.id_accuracy);
                ood_a.push_back(pt.ood_accuracy);
            }
            mean.points.push_back({p.alphas[ai], mean_of(id_a), mean_of(ood_a)});
        }
        return mean;
    };

    Json rows = Json::array();
    for (size_t si = 0; si < n_s; ++si)
        for (size_t sh = 0; sh < n_sh; ++sh)
            rows.push_back({{"seed", cfg.seeds[si]},
                            {"shift", p.shifts[sh]},
                            {"pre_id", cells[si].pre_id},
                            {"ft_id", cells[si].ft_id},
                            {"graft_id", cells[si].graft_id},
                            {"pre_ood", cells[si].pre_ood[sh]},
                            {"ft_ood", cells[si].ft_ood[sh]},
                            {"graft_ood", cells[si].graft_ood[sh]}});

    Json summary = Json::array();
    Json wise = Json::array();
    for (size_t sh = 0; sh < n_sh; ++sh) {
        std::vector<double> ft_o, gr_o, gap;
        for (size_t si = 0; si < n_s; ++si) {
            ft_o.push_back(cells[si].ft_ood[sh]);
            gr_o.push_back(cells[si].graft_ood[sh]);
            gap.push_back(cells[si].graft_ood[sh] - cells[si].ft_ood[sh]);
        }
        summary.push_back({{"shift", p.shifts[sh]},
                           {"ft_ood", stat(ft_o)},
                           {"graft_ood", stat(gr_o)},
                           {"graft_minus_ft", stat(gap)}});
        InterpolationCurve mft = mean_curve(&Cell::wise_ft, sh);
        InterpolationCurve mgr = mean_curve(&Cell::wise_graft, sh);
        write_interpolation_csv(mft,
                                ctx.reports / ("ood_wise_ft_shift" + g17(p.shifts[sh]) + ".csv"));
        write_interpolation_csv(
            mgr, ctx.reports / ("ood_wise_graft_shift" + g17(p.shifts[sh]) + ".csv"));
        Json ft_pts = Json::array(), gr_pts = Json::array();
        for (const auto& pt : mft.points)
            ft_pts.push_back(
                {{"alpha", pt.alpha}, {"id", pt.id_accuracy}, {"ood", pt.ood_accuracy}});
        for (const auto& pt : mgr.points)
            gr_pts.push_back(
                {{"alpha", pt.alpha}, {"id", pt.id_accuracy}, {"ood", pt.ood_accuracy}});
        wise.push_back({{"shift", p.shifts[sh]}, {"ft", ft_pts}, {"graft", gr_pts}});
    }
    write_report(ctx, "ood",
                 Json{{"recipe", "ood"},
                      {"task", st.id},
                      {"shots", p.shots},
                      {"rows", rows},
                      {"summary", summary},
                      {"wise", wise}});
}

// ---------------------------------------------------------------------------
// adamreg: how the fine-tuning optimizer changes localization. Plain sgd,
// adamw, and adamw with an l1 anchor to the pretrained weights.

void recipe_adamreg(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const AdamRegParams& p = cfg.adamreg;
    const SuiteTask& st = ctx.suite.tasks[p.task];
    const size_t n_s = cfg.seeds.size();
    const std::vector<std::string> variants{"sgd", "adamw", "adamw_l1"};

    struct Cell {
        double ft_acc = 0.0, graft_acc = 0.0;
        GainCell gain;
        uint64_t region_size = 0;
    };
    std::vector<Cell> cells(n_s * variants.size());
    parallel_slots(n_s, cfg.workers, [&](size_t si) {
        uint64_t seed = cfg.seeds[si];
        ModelSpec spec = task_spec(cfg, st.task);
        ParameterVector pre = pre_model(ctx, p.task, seed, spec);
        Dataset data = train_set(ctx.suite, p.task, p.shots, seed);
        Dataset test = test_set(ctx.suite, p.task, cfg.test_shots);
        double pre_acc = accuracy(pre, spec, test);
        for (size_t vi = 0; vi < variants.size(); ++vi) {
            ParameterVector ft;
            GraftRegion region;
            if (variants[vi] == "sgd") {
                ft = ctx.cache.finetuned(ctx.suite, p.task, p.shots, seed);
                region = ctx.cache.learned_region(ctx.suite, p.task, p.shots, seed);
            } else {
                std::string stem = st.id + "_k" + std::to_string(p.shots) + "_s" +
                                   std::to_string(seed) + "_" + variants[vi];
                ft = ctx.cache.model_stage("ft_" + stem, [&] {
                    OptimizerConfig oc;
                    oc.algorithm = Algorithm::adamw;
                    oc.learning_rate = p.adam_learning_rate;
                    oc.batch_size = cfg.finetune.batch_size;
                    oc.steps = cfg.finetune.steps;
                    oc.weight_decay = cfg.finetune.weight_decay;
                    oc.l1_anchor_strength = variants[vi] == "adamw_l1" ? p.l1_strength : 0.0;
                    oc.seed = mix64(stage_seed(seed, p.task, p.shots, kStageVariant), vi);
                    return train(pre, spec, data.inputs, data.labels, oc).final;
                });
                region = ctx.cache.region_stage("region_" + stem, [&] {
                    return grid_region(pre, ft, spec, data, cfg, cfg.mask.budget,
                                       mix64(stage_seed(seed, p.task, p.shots, kStageMask), vi));
                });
            }
            Cell& c = cells[si * variants.size() + vi];
            c.ft_acc = accuracy(ft, spec, test);
            c.graft_acc = accuracy(graft_compose(pre, ft, region), spec, test);
            c.gain = safe_gain(c.graft_acc, pre_acc, c.ft_acc);
            c.region_size = region.indices.size();
        }
    });

    Json rows = Json::array();
    Json summary = Json::array();
    for (size_t vi = 0; vi < variants.size(); ++vi) {
        std::vector<double> ft_a, gr_a;
        std::vector<GainCell> gains;
        for (size_t si = 0; si < n_s; ++si) {
            const Cell& c = cells[si * variants.size() + vi];
            rows.push_back({{"seed", cfg.seeds[si]},
                            {"variant", variants[vi]},
                            {"ft_accuracy", c.ft_acc},
                            {"graft_accuracy", c.graft_acc},
                            {"rel_gain", c.gain.value},
                            {"rel_gain_degenerate", c.gain.degenerate},
                            {"region_size", c.region_size}});
            ft_a.push_back(c.ft_acc);
            gr_a.push_back(c.graft_acc);
            gains.push_back(c.gain);
        }
        summary.push_back({{"variant", variants[vi]},
                           {"ft_accuracy", stat(ft_a)},
                           {"graft_accuracy", stat(gr_a)},
                           {"rel_gain", gain_stat(gains)}});
    }
    write_report(ctx, "adamreg",
                 Json{{"recipe", "adamreg"},
                      {"task", st.id},
                      {"shots", p.shots},
                      {"rows", rows},
                      {"summary", summary}});
}

// ---------------------------------------------------------------------------
// multitask: one jointly trained body, per-task masks, overlap and transfer
// structure, family unions and purification.

void recipe_multitask(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const MultitaskParams& p = cfg.multitask;
    const size_t n_t = ctx.suite.tasks.size(), n_s = cfg.seeds.size(), n_f = cfg.families.size();

    std::vector<std::string> ids;
    for (const SuiteTask& st : ctx.suite.tasks) ids.push_back(st.id);

    struct Cell {
        OverlapMatrix overlap;
        TransferMatrix transfer;
        // per family: union size, purified size, then per task the union and
        // purified gains
        std::vector<uint64_t> union_size, purified_size;
        std::vector<std::vector<GainCell>> union_gain, purified_gain;
        std::vector<double> mt_acc, pre_acc;
    };
    std::vector<Cell> cells(n_s);
    parallel_slots(n_s, cfg.workers, [&](size_t si) {
        uint64_t seed = cfg.seeds[si];
        TaskCollection coll;
        coll.spec = body_spec(cfg);
        for (size_t t = 0; t < n_t; ++t)
            coll.entries.push_back({ctx.suite.tasks[t].task,
                                    train_set(ctx.suite, t, p.shots, seed),
                                    test_set(ctx.suite, t, cfg.test_shots)});
        coll.validate();
        ParameterVector pre = pre_multihead(ctx, coll, seed);
        ParameterVector mt = ctx.cache.model_stage(
            "mt_k" + std::to_string(p.shots) + "_s" + std::to_string(seed), [&] {
                OptimizerConfig oc;
                oc.algorithm = cfg.finetune.algorithm;
                oc.learning_rate = cfg.finetune.learning_rate;
                oc.batch_size = cfg.finetune.batch_size;
                oc.steps = cfg.finetune.steps;
                oc.weight_decay = cfg.finetune.weight_decay;
                oc.seed = stage_seed(seed, kStageRecipe, p.shots, kStageFinetune);
                return train_mt(pre, coll, oc).final;
            });

        std::vector<GraftRegion> regions;
        for (size_t t = 0; t < n_t; ++t) {
            std::string name = "mtregion_" + ids[t] + "_k" + std::to_string(p.shots) + "_s" +
                               std::to_string(seed);
            regions.push_back(ctx.cache.region_stage(name, [&] {
                GraftRegion best;
                double best_loss = 0.0;
                bool have = false;
                for (double lr : cfg.mask.learning_rates) {
                    MaskOptConfig m = mask_opt(cfg, lr, coll.entries[t].train.labels.size(),
                                               stage_seed(seed, t, p.shots, kStageMask));
                    GraftRegion region =
                        optimize_mask(pre, mt,
                                      region_from_indices({}, pre.size(), Provenance::learned),
                                      coll.entries[t].train, coll.spec, m, mt_head_name(t))
                            .second;
                    double loss = loss_value(graft_compose(pre, mt, region), coll.spec,
                                             coll.entries[t].train.inputs,
                                             coll.entries[t].train.labels, nullptr, 0.0,
                                             mt_head_name(t));
                    if (!have || loss < best_loss) {
                        best = std::move(region);
                        best_loss = loss;
                        have = true;
                    }
                }
                return best;
            }));
        }

        Cell& c = cells[si];
        c.overlap = overlap_matrix(regions, ids);
        c.transfer = transfer_matrix(pre, mt, regions, coll);
        for (size_t t = 0; t < n_t; ++t) {
            c.mt_acc.push_back(accuracy(mt, coll.spec, coll.entries[t].test, mt_head_name(t)));
            c.pre_acc.push_back(accuracy(pre, coll.spec, coll.entries[t].test, mt_head_name(t)));
        }
        for (size_t g = 0; g < n_f; ++g) {
            std::vector<size_t> group{2 * g, 2 * g + 1};
            GraftRegion u = union_region(regions, group);
            MaskOptConfig m = mask_opt(cfg, cfg.mask.learning_rates.back(), 1,
                                       stage_seed(seed, g, p.shots, kStageVariant));
            m.batch_size = cfg.mask.batch_size;
            GraftRegion purified = purify_union(pre, mt, u, coll, group, m, p.purify_steps);
            c.union_size.push_back(u.indices.size());
            c.purified_size.push_back(purified.indices.size());
            std::vector<GainCell> ug, pg;
            for (size_t t = 0; t < n_t; ++t) {
                double up = accuracy(graft_compose(pre, mt, u), coll.spec, coll.entries[t].test,
                                     mt_head_name(t));
                double pp = accuracy(graft_compose(pre, mt, purified), coll.spec,
                                     coll.entries[t].test, mt_head_name(t));
                ug.push_back(safe_gain(up, c.pre_acc[t], c.mt_acc[t]));
                pg.push_back(safe_gain(pp, c.pre_acc[t], c.mt_acc[t]));
            }
            c.union_gain.push_back(std::move(ug));
            c.purified_gain.push_back(std::move(pg));
        }
    });

    // Element-wise seed means of the matrices; a transfer cell is flagged if
    // any seed's cell was degenerate, and the mean skips flagged seeds.
    OverlapMatrix overlap_mean;
    overlap_mean.task_ids = ids;
    TransferMatrix transfer_mean;
    transfer_mean.task_ids = ids;
    for (size_t i = 0; i < n_t; ++i) {
        std::vector<double> orow(n_t, 0.0), trow(n_t, 0.0);
        std::vector<uint8_t> drow(n_t, 0);
        for (size_t j = 0; j < n_t; ++j) {
            std::vector<double> ov, tv;
            for (size_t si = 0; si < n_s; ++si) {
                ov.push_back(cells[si].overlap.values[i][j]);
                if (cells[si].transfer.degenerate[i][j])
                    drow[j] = 1;
                else
                    tv.push_back(cells[si].transfer.values[i][j]);
            }
            orow[j] = mean_of(ov);
            trow[j] = mean_of(tv);
        }
        overlap_mean.values.push_back(orow);
        transfer_mean.values.push_back(trow);
        transfer_mean.degenerate.push_back(drow);
    }
    write_overlap_csv(ctx.reports / "multitask_overlap_mean.csv", overlap_mean);
    write_transfer_csv(ctx.reports / "multitask_transfer_mean.csv", transfer_mean);

    // Within-pair vs cross-family overlap, symmetrized per pair.
    std::vector<double> within, cross;
    for (size_t si = 0; si < n_s; ++si)
        for (size_t i = 0; i < n_t; ++i)
            for (size_t j = 0; j < n_t; ++j) {
                if (i == j) continue;
                double v = cells[si].overlap.values[i][j];
                (i / 2 == j / 2 ? within : cross).push_back(v);
            }

    std::vector<GainCell> group_union, nongroup_union, group_purified;
    std::vector<double> drops;
    for (size_t si = 0; si < n_s; ++si)
        for (size_t g = 0; g < n_f; ++g)
            for (size_t t = 0; t < n_t; ++t) {
                const GainCell& u = cells[si].union_gain[g][t];
                const GainCell& q = cells[si].purified_gain[g][t];
                if (t / 2 == g) {
                    group_union.push_back(u);
                    group_purified.push_back(q);
                    if (!u.degenerate && !q.degenerate) drops.push_back(u.value - q.value);
                } else {
                    nongroup_union.push_back(u);
                }
            }

    Json seeds_json = Json::array();
    for (size_t si = 0; si < n_s; ++si) {
        const Cell& c = cells[si];
        Json unions = Json::array();
        for (size_t g = 0; g < n_f; ++g) {
            Json ug = Json::array(), pg = Json::array();
            for (size_t t = 0; t < n_t; ++t) {
                ug.push_back({{"task", ids[t]},
                              {"value", c.union_gain[g][t].value},
                              {"degenerate", c.union_gain[g][t].degenerate}});
                pg.push_back({{"task", ids[t]},
                              {"value", c.purified_gain[g][t].value},
                              {"degenerate", c.purified_gain[g][t].degenerate}});
            }
            unions.push_back({{"family", g},
                              {"members", Json::array({ids[2 * g], ids[2 * g + 1]})},
                              {"union_size", c.union_size[g]},
                              {"purified_size", c.purified_size[g]},
                              {"union_gain", ug},
                              {"purified_gain", pg}});
        }
        seeds_json.push_back({{"seed", cfg.seeds[si]},
                              {"overlap", overlap_to_json(c.overlap)},
                              {"transfer", transfer_to_json(c.transfer)},
                              {"mt_accuracy", c.mt_acc},
                              {"pre_accuracy", c.pre_acc},
                              {"unions", unions}});
    }
    Json summary{{"within_pair_overlap", stat(within)},
                 {"cross_family_overlap", stat(cross)},
                 {"union_group_rel_gain", gain_stat(group_union)},
                 {"union_nongroup_rel_gain", gain_stat(nongroup_union)},
                 {"purified_group_rel_gain", gain_stat(group_purified)},
                 {"purify_drop", stat(drops)}};
    write_report(ctx, "multitask",
                 Json{{"recipe", "multitask"},
                      {"shots", p.shots},
                      {"seeds", seeds_json},
                      {"summary", summary}});
}

// ---------------------------------------------------------------------------
// continual: sequential tasks with region-restricted training versus naive
// sequential fine-tuning.

void recipe_continual(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const ContinualParams& p = cfg.continual;
    const size_t n_s = cfg.seeds.size();

    std::vector<std::string> seq_ids;
    for (size_t t : p.tasks) seq_ids.push_back(ctx.suite.tasks[t].id);

    struct Cell {
        ContinualResult graft, naive;
    };
    std::vector<Cell> cells(n_s);
    parallel_slots(n_s, cfg.workers, [&](size_t si) {
        uint64_t seed = cfg.seeds[si];
        std::vector<CollectionEntry> seq;
        for (size_t t : p.tasks)
            seq.push_back({ctx.suite.tasks[t].task, train_set(ctx.suite, t, p.shots, seed),
                           test_set(ctx.suite, t, cfg.test_shots)});
        TaskCollection coll{body_spec(cfg), seq};
        ParameterVector pre = pre_multihead(ctx, coll, seed);
        double mask_lr = p.mask_learning_rate > 0.0 ? p.mask_learning_rate
                                                    : cfg.mask.learning_rates.back();
        MaskOptConfig m = mask_opt(cfg, mask_lr, seq.front().train.labels.size(),
                                   stage_seed(seed, kStageRecipe, p.shots, kStageMask));
        OptimizerConfig oc;
        oc.algorithm = cfg.finetune.algorithm;
        oc.learning_rate = cfg.finetune.learning_rate;
        oc.batch_size = cfg.finetune.batch_size;
        oc.steps = cfg.finetune.steps;
        oc.weight_decay = cfg.finetune.weight_decay;
        oc.seed = stage_seed(seed, kStageRecipe, p.shots, kStageFinetune);
        cells[si].graft = run_continual(pre, coll.spec, seq, ContinualMode::graft, m, oc);
        cells[si].naive = run_continual(pre, coll.spec, seq, ContinualMode::naive, m, oc);
    });

    Json seeds_json = Json::array();
    std::vector<double> gaps;
    bool all_bit_identical = true;
    for (size_t si = 0; si < n_s; ++si) {
        const Cell& c = cells[si];
        size_t last = p.tasks.size() - 1;
        bool bit_identical = c.graft.accuracy[last][0] == c.graft.accuracy[0][0];
        all_bit_identical = all_bit_identical && bit_identical;
        double gap = c.graft.accuracy[last][0] - c.naive.accuracy[last][0];
        gaps.push_back(gap);
        write_continual_csv(
            ctx.reports / ("continual_graft_s" + std::to_string(cfg.seeds[si]) + ".csv"),
            c.graft);
        write_continual_csv(
            ctx.reports / ("continual_naive_s" + std::to_string(cfg.seeds[si]) + ".csv"),
            c.naive);
        seeds_json.push_back({{"seed", cfg.seeds[si]},
                              {"graft", continual_to_json(c.graft)},
                              {"naive", continual_to_json(c.naive)},
                              {"first_task_bit_identical", bit_identical},
                              {"first_task_gap", gap}});
    }
    std::vector<double> graft_final, naive_final;
    for (size_t t = 0; t < p.tasks.size(); ++t) {
        std::vector<double> gf, nf;
        for (size_t si = 0; si < n_s; ++si) {
            gf.push_back(cells[si].graft.accuracy[p.tasks.size() - 1][t]);
            nf.push_back(cells[si].naive.accuracy[p.tasks.size() - 1][t]);
        }
        graft_final.push_back(mean_of(gf));
        naive_final.push_back(mean_of(nf));
    }
    write_report(ctx, "continual",
                 Json{{"recipe", "continual"},
                      {"tasks", seq_ids},
                      {"shots", p.shots},
                      {"seeds", seeds_json},
                      {"summary",
                       Json{{"all_bit_identical", all_bit_identical},
                            {"first_task_gap", stat(gaps)},
                            {"graft_final_mean", graft_final},
                            {"naive_final_mean", naive_final}}}});
}

// ---------------------------------------------------------------------------
// track: grafted accuracy through fine-tuning checkpoints, for the learned
// region and the movement baseline.

void recipe_track(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TrackParams& p = cfg.track;
    const SuiteTask& st = ctx.suite.tasks[p.task];
    const size_t n_s = cfg.seeds.size();

    struct Cell {
        std::vector<size_t> steps;
        std::vector<double> learned, movement;
        double ft_acc = 0.0;
    };
    std::vector<Cell> cells(n_s);
    parallel_slots(n_s, cfg.workers, [&](size_t si) {
        uint64_t seed = cfg.seeds[si];
        ModelSpec spec = task_spec(cfg, st.task);
        ParameterVector pre = pre_model(ctx, p.task, seed, spec);
        Dataset data = train_set(ctx.suite, p.task, p.shots, seed);
        Dataset test = test_set(ctx.suite, p.task, cfg.test_shots);
        size_t steps = cfg.finetune.steps != 0 ? cfg.finetune.steps
                                               : default_steps(st.task.num_classes, p.shots);
        size_t every = p.every != 0 ? p.every : std::max<size_t>(1, steps / 8);
        OptimizerConfig oc;
        oc.algorithm = cfg.finetune.algorithm;
        oc.learning_rate = cfg.finetune.learning_rate;
        oc.batch_size = cfg.finetune.batch_size;
        oc.steps = cfg.finetune.steps;
        oc.weight_decay = cfg.finetune.weight_decay;
        // Same stage seed as the cached fine-tune so the trajectory ends at
        // the artifact the learned region was fit against.
        oc.seed = stage_seed(seed, p.task, p.shots, kStageFinetune);
        TrainResult tr = train(pre, spec, data.inputs, data.labels, oc, every);
        GraftRegion learned = ctx.cache.learned_region(ctx.suite, p.task, p.shots, seed);
        GraftRegion moved = movement_region(pre, tr.final, spec, cfg.mask.budget);
        CheckpointSeries series =
            checkpoint_track(tr.checkpoints, {learned, moved}, pre, spec, test);
        Cell& c = cells[si];
        c.steps = series.steps;
        c.learned = series.accuracy[0];
        c.movement = series.accuracy[1];
        c.ft_acc = accuracy(tr.final, spec, test);
        std::string csv = "step,learned,movement\n";
        for (size_t i = 0; i < series.steps.size(); ++i)
            csv += std::to_string(series.steps[i]) + "," + g17(series.accuracy[0][i]) + "," +
                   g17(series.accuracy[1][i]) + "\n";
        atomic_write_text(
            ctx.reports / ("track_s" + std::to_string(cfg.seeds[si]) + ".csv"), csv);
    });

    Json seeds_json = Json::array();
    std::vector<double> finals, ft_accs;
    for (size_t si = 0; si < n_s; ++si) {
        const Cell& c = cells[si];
        seeds_json.push_back({{"seed", cfg.seeds[si]},
                              {"steps", c.steps},
                              {"learned", c.learned},
                              {"movement", c.movement},
                              {"ft_accuracy", c.ft_acc}});
        finals.push_back(c.learned.back());
        ft_accs.push_back(c.ft_acc);
    }
    write_report(ctx, "track",
                 Json{{"recipe", "track"},
                      {"task", st.id},
                      {"shots", p.shots},
                      {"seeds", seeds_json},
                      {"summary",
                       Json{{"learned_final", stat(finals)}, {"ft_accuracy", stat(ft_accs)}}}});
}

// ---------------------------------------------------------------------------
// theory: generalization bounds for the learned regions, empirical train-test
// gaps, and region stability across seeds.

void recipe_theory(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const TheoryParams& p = cfg.theory;
    const size_t n_t = ctx.suite.tasks.size(), n_s = cfg.seeds.size();

    struct Row {
        uint64_t region_size = 0, samples = 0;
        double ft_gap = 0.0, graft_gap = 0.0, pre_gap = 0.0;
        GeneralizationBound grafted, retrained;
        GraftRegion region;
    };
    std::vector<Row> rows(n_t * n_s);
    parallel_slots(rows.size(), cfg.workers, [&](size_t i) {
        size_t si = i % n_s, t = i / n_s;
        uint64_t seed = cfg.seeds[si];
        ModelSpec spec = task_spec(cfg, ctx.suite.tasks[t].task);
        ParameterVector pre = pre_model(ctx, t, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, t, p.shots, seed);
        GraftRegion region = ctx.cache.learned_region(ctx.suite, t, p.shots, seed);
        ParameterVector graft = graft_compose(pre, ft, region);
        Dataset data = train_set(ctx.suite, t, p.shots, seed);
        Dataset test = test_set(ctx.suite, t, cfg.test_shots);
        Row& r = rows[i];
        r.region_size = region.indices.size();
        r.samples = data.labels.size();
        r.ft_gap = train_test_gap(ft, spec, data, test);
        r.graft_gap = train_test_gap(graft, spec, data, test);
        r.pre_gap = train_test_gap(pre, spec, data, test);
        BoundInputs bi{r.region_size, p.levels, 1, p.delta, r.samples};
        r.grafted = generalization_bound(bi, p.eps1, p.eps2, BoundMode::grafted);
        r.retrained = generalization_bound(bi, p.eps1, p.eps2, BoundMode::retrained);
        r.region = std::move(region);
    });

    Json out_rows = Json::array();
    Json summary = Json::array();
    for (size_t t = 0; t < n_t; ++t) {
        const SuiteTask& st = ctx.suite.tasks[t];
        std::vector<double> ft_g, gr_g, pre_g, bounds;
        std::vector<GraftRegion> regions;
        for (size_t si = 0; si < n_s; ++si) {
            const Row& r = rows[t * n_s + si];
            out_rows.push_back({{"task", st.id},
                                {"seed", cfg.seeds[si]},
                                {"region_size", r.region_size},
                                {"samples", r.samples},
                                {"ft_gap", r.ft_gap},
                                {"graft_gap", r.graft_gap},
                                {"pre_gap", r.pre_gap},
                                {"grafted_bound", r.grafted.variance_bound},
                                {"grafted_slack", r.grafted.total_slack},
                                {"retrained_bound", r.retrained.variance_bound},
                                {"retrained_slack", r.retrained.total_slack}});
            ft_g.push_back(r.ft_gap);
            gr_g.push_back(r.graft_gap);
            pre_g.push_back(r.pre_gap);
            bounds.push_back(r.grafted.variance_bound);
            regions.push_back(r.region);
        }
        RegionStability stability = region_stability(regions);
        double sp = cfg.mask.budget;
        summary.push_back({{"task", st.id},
                           {"ft_gap", stat(ft_g)},
                           {"graft_gap", stat(gr_g)},
                           {"pre_gap", stat(pre_g)},
                           {"grafted_bound", stat(bounds)},
                           {"stability",
                            Json{{"mean_pairwise_jaccard", stability.mean_pairwise_jaccard},
                                 {"distinct_count", stability.distinct_count},
                                 {"random_expectation", sp / (2.0 - sp)}}}});
    }
    write_report(ctx, "theory",
                 Json{{"recipe", "theory"},
                      {"shots", p.shots},
                      {"levels", p.levels},
                      {"delta", p.delta},
                      {"eps1", p.eps1},
                      {"eps2", p.eps2},
                      {"rows", out_rows},
                      {"summary", summary}});
}

// ---------------------------------------------------------------------------
// fisher: how much of the learned region a Fisher-information mask of the
// same size recovers, and how the two graft.

void recipe_fisher(const Ctx& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const FisherParams& p = cfg.fisher;
    const size_t n_t = ctx.suite.tasks.size(), n_s = cfg.seeds.size();

    struct Row {
        uint64_t fisher_size = 0, learned_size = 0, intersection = 0;
        double jaccard = 0.0, coverage = 0.0;
        double fisher_acc = 0.0, learned_acc = 0.0;
    };
    std::vector<Row> rows(n_t * n_s);
    parallel_slots(rows.size(), cfg.workers, [&](size_t i) {
        size_t si = i % n_s, t = i / n_s;
        uint64_t seed = cfg.seeds[si];
        ModelSpec spec = task_spec(cfg, ctx.suite.tasks[t].task);
        ParameterVector pre = pre_model(ctx, t, seed, spec);
        ParameterVector ft = ctx.cache.finetuned(ctx.suite, t, p.shots, seed);
        GraftRegion learned = ctx.cache.learned_region(ctx.suite, t, p.shots, seed);
        Dataset data = train_set(ctx.suite, t, p.shots, seed);
        Dataset test = test_set(ctx.suite, t, cfg.test_shots);
        GraftRegion fisher = baseline_region(BaselineKind::fisher, ft, spec, &data,
                                             cfg.mask.budget,
                                             stage_seed(seed, t, p.shots, kStageVariant));
        Row& r = rows[i];
        r.fisher_size = fisher.indices.size();
        r.learned_size = learned.indices.size();
        r.intersection = region_intersection_size(fisher, learned);
        uint64_t uni = r.fisher_size + r.learned_size - r.intersection;
        r.jaccard = uni == 0 ? 1.0
                             : static_cast<double>(r.intersection) / static_cast<double>(uni);
        r.coverage = r.learned_size == 0 ? 1.0
                                         : static_cast<double>(r.intersection) /
                                               static_cast<double>(r.learned_size);
        r.fisher_acc = accuracy(graft_compose(pre, ft, fisher), spec, test);
        r.learned_acc = accuracy(graft_compose(pre, ft, learned), spec, test);
    });

    Json out_rows = Json::array();
    Json summary = Json::array();
    for (size_t t = 0; t < n_t; ++t) {
        const SuiteTask& st = ctx.suite.tasks[t];
        std::vector<double> jac, cov, fa, la;
        for (size_t si = 0; si < n_s; ++si) {
            const Row& r = rows[t * n_s + si];
            out_rows.push_back({{"task", st.id},
                                {"seed", cfg.seeds[si]},
                                {"fisher_size", r.fisher_size},
                                {"learned_size", r.learned_size},
                                {"intersection", r.intersection},
                                {"jaccard", r.jaccard},
                                {"coverage", r.coverage},
                                {"fisher_graft_accuracy", r.fisher_acc},
                                {"learned_graft_accuracy", r.learned_acc}});
            jac.push_back(r.jaccard);
            cov.push_back(r.coverage);
            fa.push_back(r.fisher_acc);
            la.push_back(r.learned_acc);
        }
        summary.push_back({{"task", st.id},
                           {"jaccard", stat(jac)},
                           {"coverage", stat(cov)},
                           {"fisher_graft_accuracy", stat(fa)},
                           {"learned_graft_accuracy", stat(la)}});
    }
    write_report(ctx, "fisher",
                 Json{{"recipe", "fisher"},
                      {"shots", p.shots},
                      {"rows", out_rows},
                      {"summary", summary}});
}

using RecipeFn = void (*)(const Ctx&);

const std::vector<std::pair<std::string, RecipeFn>>& recipe_table() {
    static const std::vector<std::pair<std::string, RecipeFn>> table{
        {"tableone", recipe_tableone}, {"sweep", recipe_sweep},
        {"retrain", recipe_retrain},   {"ood", recipe_ood},
        {"adamreg", recipe_adamreg},   {"multitask", recipe_multitask},
        {"continual", recipe_continual}, {"track", recipe_track},
        {"theory", recipe_theory},     {"fisher", recipe_fisher},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& recipe_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [name, fn] : recipe_table()) n.push_back(name);
        return n;
    }();
    return names;
}

void run_recipe(const std::string& name, const ExperimentConfig& cfg, bool quiet) {
    RecipeFn fn = nullptr;
    for (const auto& [n, f] : recipe_table())
        if (n == name) fn = f;
    if (fn == nullptr) fail_config("unknown recipe '" + name + "'");
    cfg.validate();

    fs::path out(cfg.out_dir);
    fs::path reports = out / "reports";
    std::filesystem::create_directories(reports);
    std::string sh = suite_hash(cfg);
    std::string ch = config_hash(cfg, name);
    fs::path manifest_path = out / "manifest.json";
    Json manifest{{"format", 1}, {"recipes", Json::object()}};
    if (fs::exists(manifest_path)) {
        manifest = read_json(manifest_path);
        if (manifest.value("suite_hash", std::string()) != sh)
            fail_config("output directory '" + out.string() +
                        "' was built from a different suite configuration; use a fresh --out");
        if (!manifest.contains("recipes") || !manifest["recipes"].is_object())
            manifest["recipes"] = Json::object();
        if (manifest["recipes"].value(name, std::string()) == ch &&
            fs::exists(reports / (name + ".json"))) {
            if (!quiet)
                std::fprintf(stderr, "[skillgraft] %s: up to date in %s\n", name.c_str(),
                             out.string().c_str());
            return;
        }
    }

    Suite suite = build_suite(cfg);
    ArtifactCache cache(out / "artifacts", cfg);
    Ctx ctx{cfg, suite, cache, reports, quiet};
    note(ctx, name + ": running into " + out.string());

    // Shared pretrained bodies first, so later slots only read them.
    parallel_slots(cfg.seeds.size(), cfg.workers,
                   [&](size_t i) { cache.pretrain_body(suite, cfg.seeds[i]); });

    fn(ctx);

    manifest["format"] = 1;
    manifest["tool"] = kToolVersion;
    manifest["suite_hash"] = sh;
    manifest["seeds"] = cfg.seeds;
    manifest["recipes"][name] = ch;
    write_json(manifest, manifest_path);
}

}  // namespace sg
