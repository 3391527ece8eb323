#include <doctest.h>

#include "skillgraft/graft.hpp"

#include <cmath>
#include <set>

using namespace sg;

namespace {

// Bare parameter vector with a single weight segment; enough structure for
// the composition ops, which never look past the segment table.
ParameterVector flat_vec(std::vector<double> v) {
    ParameterVector p;
    p.segments = {{"w0", 0, v.size(), ParamKind::weight, 0}};
    p.values = std::move(v);
    return p;
}

GraftRegion reg(std::vector<uint64_t> idx, uint64_t total) {
    return region_from_indices(std::move(idx), total, Provenance::learned);
}

Matrix random_inputs(size_t n, size_t d, uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) x(i, j) = rng.normal();
    return x;
}

std::vector<int> random_labels(size_t n, size_t k, uint64_t seed) {
    Rng rng(seed);
    std::vector<int> y(n);
    for (size_t i = 0; i < n; ++i) y[i] = static_cast<int>(rng.uniform_int(k));
    return y;
}

std::vector<uint64_t> random_subset(Rng& rng, uint64_t n) {
    uint64_t m = rng.uniform_int(n + 1);
    return rng.sample_without_replacement(n, m);
}

double inv_sigmoid(double g) { return std::log(g / (1.0 - g)); }

}  // namespace

TEST_SUITE_BEGIN("graft");

TEST_CASE("region invariants") {
    auto r = region_from_indices({5, 1, 3}, 8, Provenance::random);
    CHECK(r.indices == std::vector<uint64_t>{1, 3, 5});
    CHECK(r.total_params == 8);
    CHECK(r.sparsity() == doctest::Approx(3.0 / 8.0));
    CHECK(r.contains(3));
    CHECK(!r.contains(4));
    CHECK_THROWS_AS(region_from_indices({1, 1}, 8, Provenance::random), Error);
    CHECK_THROWS_AS(region_from_indices({8}, 8, Provenance::random), Error);
}

TEST_CASE("region set algebra matches std::set") {
    Rng rng(301);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = reg(random_subset(rng, 64), 64);
        auto b = reg(random_subset(rng, 64), 64);
        std::set<uint64_t> sa(a.indices.begin(), a.indices.end());
        std::set<uint64_t> sb(b.indices.begin(), b.indices.end());

        std::set<uint64_t> su = sa;
        su.insert(sb.begin(), sb.end());
        auto u = region_union(a, b);
        CHECK(u.indices == std::vector<uint64_t>(su.begin(), su.end()));
        CHECK(u.provenance == Provenance::union_);

        std::vector<uint64_t> sd;
        for (uint64_t i : sa)
            if (!sb.count(i)) sd.push_back(i);
        auto d = region_difference(a, b);
        CHECK(d.indices == sd);
        CHECK(d.provenance == Provenance::difference);

        size_t inter = 0;
        for (uint64_t i : sa) inter += sb.count(i);
        CHECK(region_intersection_size(a, b) == inter);
    }
    auto a = reg({0}, 4);
    auto b = reg({0}, 5);
    CHECK_THROWS_AS(region_union(a, b), Error);
    CHECK_THROWS_AS(region_difference(a, b), Error);
}

TEST_CASE("graft_compose takes ft inside the region and pre outside") {
    auto pre = flat_vec({1, 2, 3});
    auto ft = flat_vec({4, 5, 6});
    auto out = graft_compose(pre, ft, reg({0, 2}, 3));
    CHECK(out.values == std::vector<double>{4, 2, 6});
    CHECK(out.segments == pre.segments);

    CHECK(graft_compose(pre, ft, reg({0, 1, 2}, 3)).values == ft.values);
    CHECK(graft_compose(pre, ft, reg({}, 3)).values == pre.values);

    CHECK_THROWS_AS(graft_compose(pre, ft, reg({0}, 4)), Error);
    auto other = flat_vec({1, 2});
    CHECK_THROWS_AS(graft_compose(pre, other, reg({0}, 3)), Error);
}

TEST_CASE("grafting the same region twice changes nothing") {
    Rng rng(302);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(37), b(37);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        auto pre = flat_vec(a);
        auto ft = flat_vec(b);
        auto r = reg(random_subset(rng, 37), 37);
        auto once = graft_compose(pre, ft, r);
        auto twice = graft_compose(pre, once, r);
        CHECK(twice.values == once.values);
    }
}

TEST_CASE("grafting a union equals sequential grafting of disjoint parts") {
    Rng rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(37), b(37);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        auto pre = flat_vec(a);
        auto ft = flat_vec(b);
        auto r1 = reg(random_subset(rng, 37), 37);
        // carve r2 out of the complement so the parts are disjoint
        std::vector<uint64_t> complement;
        for (uint64_t i = 0; i < 37; ++i)
            if (!r1.contains(i) && rng.uniform() < 0.5) complement.push_back(i);
        auto r2 = reg(complement, 37);

        auto sequential = graft_compose(graft_compose(pre, ft, r1), ft, r2);
        auto joint = graft_compose(pre, ft, region_union(r1, r2));
        CHECK(sequential.values == joint.values);
    }
}

TEST_CASE("soft compose limits: saturated, midpoint, base-preserving") {
    auto pre = flat_vec({1, 2, 3});
    auto ft = flat_vec({4, 5, 6});

    MaskLogits low;
    low.eps.assign(3, -50.0);
    low.base = reg({}, 3);
    auto near_pre = soft_graft_compose(pre, ft, low);
    for (size_t i = 0; i < 3; ++i)
        CHECK(std::abs(near_pre.values[i] - pre.values[i]) <= 1e-15 * std::abs(pre.values[i]));

    MaskLogits mid;
    mid.eps.assign(3, 0.0);
    mid.base = reg({}, 3);
    auto half = soft_graft_compose(pre, ft, mid);
    for (size_t i = 0; i < 3; ++i) CHECK(half.values[i] == (pre.values[i] + ft.values[i]) / 2.0);

    MaskLogits kept;
    kept.eps.assign(3, -50.0);
    kept.base = reg({1}, 3);
    auto out = soft_graft_compose(pre, ft, kept);
    CHECK(out.values[1] == ft.values[1]);
    CHECK(out.values[0] == doctest::Approx(pre.values[0]).epsilon(1e-15));
    CHECK(out.values[2] == doctest::Approx(pre.values[2]).epsilon(1e-15));

    MaskLogits bad;
    bad.eps.assign(2, 0.0);
    bad.base = reg({}, 2);
    CHECK_THROWS_AS(soft_graft_compose(pre, ft, bad), Error);
}

TEST_CASE("binarize_mask keeps base members and admits flipped coordinates") {
    MaskLogits logits;
    logits.eps.assign(6, -10.0);
    logits.base = reg({}, 6);
    CHECK(binarize_mask(logits, 0.5).indices.empty());

    logits.base = reg({3}, 6);
    auto r = binarize_mask(logits, 0.5);
    CHECK(r.indices == std::vector<uint64_t>{3});
    CHECK(r.provenance == Provenance::learned);

    logits.eps[1] = 10.0;
    CHECK(binarize_mask(logits, 0.5).indices == std::vector<uint64_t>{1, 3});

    // eps = +10 inside the base flips it out
    logits.eps[3] = 10.0;
    CHECK(binarize_mask(logits, 0.5).indices == std::vector<uint64_t>{1});

    CHECK_THROWS_AS(binarize_mask(logits, 0.0), Error);
    CHECK_THROWS_AS(binarize_mask(logits, 1.0), Error);
}

TEST_CASE("soft compose at |eps|=30 matches the binarized hard graft") {
    Rng rng(304);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(48), b(48);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        auto pre = flat_vec(a);
        auto ft = flat_vec(b);

        MaskLogits logits;
        logits.eps.resize(48);
        for (auto& e : logits.eps) e = rng.uniform() < 0.5 ? 30.0 : -30.0;
        logits.base = reg(random_subset(rng, 48), 48);

        auto hard = graft_compose(pre, ft, binarize_mask(logits, 0.5));
        auto soft = soft_graft_compose(pre, ft, logits);
        for (size_t i = 0; i < 48; ++i)
            CHECK(std::abs(soft.values[i] - hard.values[i]) < 1e-12);
    }
}

TEST_CASE("movement_region ranks |ft - pre| with index tie-break") {
    ModelSpec spec;
    spec.input_dim = 1;
    spec.hidden_widths = {1};
    spec.num_classes = 2;
    spec.head_mode = HeadMode::trainable;  // all 4 coordinates graftable
    auto pre = init_model(spec, 1);
    std::fill(pre.values.begin(), pre.values.end(), 0.0);
    auto ft = pre;
    ft.values = {0.1, 0.9, 0.5, 0.9};

    auto r = movement_region(pre, ft, spec, 0.5);
    CHECK(r.indices == std::vector<uint64_t>{1, 3});
    CHECK(r.provenance == Provenance::movement_topk);

    CHECK(movement_region(pre, ft, spec, 1.0).indices == std::vector<uint64_t>{0, 1, 2, 3});

    // all ties: deterministic first-k
    CHECK(movement_region(pre, pre, spec, 0.5).indices == std::vector<uint64_t>{0, 1});

    CHECK_THROWS_AS(movement_region(pre, ft, spec, 0.0), Error);
    CHECK_THROWS_AS(movement_region(pre, ft, spec, 1.5), Error);
}

TEST_CASE("movement_region never selects frozen coordinates") {
    ModelSpec spec;
    spec.input_dim = 1;
    spec.hidden_widths = {1};
    spec.num_classes = 2;
    spec.head_mode = HeadMode::frozen_random;
    auto pre = init_model(spec, 2);
    auto ft = pre;
    const Segment& head = ft.segment("head");
    for (size_t i = 0; i < head.length; ++i) ft.values[head.offset + i] += 100.0;
    ft.values[0] += 0.5;
    ft.values[1] += 0.25;

    auto all = movement_region(pre, ft, spec, 1.0);
    CHECK(all.indices == graftable_indices(spec, pre));
    for (uint64_t i : all.indices) CHECK(i < head.offset);

    CHECK(movement_region(pre, ft, spec, 0.5).indices == std::vector<uint64_t>{0});
}

TEST_CASE("random baseline is seeded, graftable-only and budget-sized") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_widths = {8};
    spec.num_classes = 3;
    spec.head_mode = HeadMode::frozen_random;
    auto params = init_model(spec, 3);
    auto graftable = graftable_indices(spec, params);
    REQUIRE(graftable.size() == 40);

    auto r1 = baseline_region(BaselineKind::random, params, spec, nullptr, 0.25, 11);
    auto r2 = baseline_region(BaselineKind::random, params, spec, nullptr, 0.25, 11);
    auto r3 = baseline_region(BaselineKind::random, params, spec, nullptr, 0.25, 12);
    CHECK(r1.indices == r2.indices);
    CHECK(r1.indices != r3.indices);
    CHECK(r1.indices.size() == 10);
    CHECK(r1.provenance == Provenance::random);
    for (uint64_t i : r1.indices)
        CHECK(std::binary_search(graftable.begin(), graftable.end(), i));

    CHECK_THROWS_AS(baseline_region(BaselineKind::random, params, spec, nullptr, 0.0, 11), Error);
    CHECK_THROWS_AS(baseline_region(BaselineKind::random, params, spec, nullptr, 1.0001, 11), Error);
}

TEST_CASE("bias_only baseline selects exactly the bias coordinates") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {3, 4};
    spec.num_classes = 2;
    spec.layernorm = true;  // layernorm shifts are not biases
    spec.head_mode = HeadMode::trainable;
    auto params = init_model(spec, 4);

    auto r = baseline_region(BaselineKind::bias_only, params, spec, nullptr, 0.0, 0);
    CHECK(r.indices.size() == 7);
    CHECK(r.provenance == Provenance::bias_only);
    const Segment& b0 = params.segment("b0");
    const Segment& b1 = params.segment("b1");
    for (uint64_t i : r.indices) {
        bool in_b0 = i >= b0.offset && i < b0.offset + b0.length;
        bool in_b1 = i >= b1.offset && i < b1.offset + b1.length;
        CHECK((in_b0 || in_b1));
    }
}

TEST_CASE("fisher baseline matches an explicit per-sample oracle") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {4};
    spec.num_classes = 3;
    spec.head_mode = HeadMode::frozen_random;
    auto params = init_model(spec, 5);

    Dataset data;
    data.inputs = random_inputs(24, 3, 21);
    data.inputs.col(2).setZero();  // kills every w0 coordinate reading input 2
    data.labels = random_labels(24, 3, 22);

    CHECK_THROWS_AS(baseline_region(BaselineKind::fisher, params, spec, nullptr, 0.5, 9), Error);

    auto r = baseline_region(BaselineKind::fisher, params, spec, &data, 0.5, 9);
    CHECK(r.indices.size() == 8);  // ceil(0.5 * 16 graftable)
    CHECK(r.provenance == Provenance::fisher);

    // oracle: same label draws, per-sample squared raw gradients
    Matrix probs = forward(params, spec, data.inputs);
    for (Eigen::Index row = 0; row < probs.rows(); ++row) {
        double mx = probs.row(row).maxCoeff();
        probs.row(row) = (probs.row(row).array() - mx).exp();
        probs.row(row) /= probs.row(row).sum();
    }
    Rng rng = derive_rng(9, kStreamFisher);
    std::vector<double> score(params.size(), 0.0);
    for (int s = 0; s < 24; ++s) {
        double u = rng.uniform(), acc = 0.0;
        int y = 2;
        for (int c = 0; c < 3; ++c) {
            acc += probs(s, c);
            if (u < acc) {
                y = c;
                break;
            }
        }
        Matrix row = data.inputs.row(s);
        auto lg = loss_and_grad(params, spec, row, {y}, nullptr, 0.0, "head", true);
        for (size_t i = 0; i < score.size(); ++i) score[i] += lg.grad[i] * lg.grad[i];
    }
    for (double& f : score) f /= 24.0;

    auto graftable = graftable_indices(spec, params);
    std::vector<uint64_t> expect = graftable;
    std::stable_sort(expect.begin(), expect.end(),
                     [&](uint64_t a, uint64_t b) { return score[a] > score[b]; });
    expect.resize(8);
    std::sort(expect.begin(), expect.end());
    CHECK(r.indices == expect);

    // dead coordinates (w0 column 2) never make the cut
    const Segment& w0 = params.segment("w0");
    for (size_t h = 0; h < 4; ++h) {
        uint64_t dead = w0.offset + h * 3 + 2;
        CHECK(score[dead] == 0.0);
        CHECK(!r.contains(dead));
    }
    // frozen head coordinates are ineligible regardless of score
    const Segment& head = params.segment("head");
    for (uint64_t i : r.indices) CHECK(i < head.offset);
}

TEST_CASE("mask gradient matches central finite differences") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {4};
    spec.num_classes = 3;
    spec.activation = Activation::tanh;
    spec.layernorm = true;
    spec.head_mode = HeadMode::trainable;
    auto pre = init_model(spec, 31);
    auto ft = init_model(spec, 32);
    REQUIRE(pre.size() == 36);
    // biases and layernorm coordinates share their deterministic init, which
    // would zero the (ft - pre) chain factor; make every coordinate differ
    Rng jitter(30);
    for (auto& v : ft.values) v += jitter.normal();

    MaskLogits logits;
    logits.eps.resize(pre.size());
    for (size_t i = 0; i < logits.eps.size(); ++i)
        logits.eps[i] = static_cast<double>(i % 13) / 2.0 - 3.0;
    logits.base = reg({2, 9, 17}, pre.size());

    Matrix x = random_inputs(8, 3, 33);
    auto y = random_labels(8, 3, 34);

    auto analytic = mask_loss_and_grad(pre, ft, logits, spec, x, y);
    const double h = 1e-6;
    size_t live = 0;
    for (size_t i = 0; i < logits.eps.size(); ++i) {
        MaskLogits up = logits, down = logits;
        up.eps[i] += h;
        down.eps[i] -= h;
        double fd = (loss_value(soft_graft_compose(pre, ft, up), spec, x, y) -
                     loss_value(soft_graft_compose(pre, ft, down), spec, x, y)) /
                    (2.0 * h);
        if (std::abs(analytic.grad[i]) >= 1e-5) {
            // central differences certify ~5e-11 absolute on an O(1) loss, so
            // the relative target is only meaningful above that floor
            ++live;
            double rel = std::abs(fd - analytic.grad[i]) /
                         std::max({std::abs(fd), std::abs(analytic.grad[i]), 1e-12});
            CHECK(rel < 1e-5);
        } else {
            CHECK(std::abs(fd - analytic.grad[i]) < 1e-8);
        }
    }
    CHECK(live >= 30);
}

TEST_CASE("optimize_mask with zero steps returns the base region") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {4};
    spec.num_classes = 3;
    spec.head_mode = HeadMode::frozen_random;
    auto pre = init_model(spec, 41);
    auto ft = init_model(spec, 42);

    Dataset data;
    data.inputs = random_inputs(12, 3, 43);
    data.labels = random_labels(12, 3, 44);

    auto base = movement_region(pre, ft, spec, 0.3);
    REQUIRE(!base.indices.empty());

    MaskOptConfig cfg;
    cfg.steps = 0;
    auto [logits, region] = optimize_mask(pre, ft, base, data, spec, cfg);
    CHECK(region.indices == base.indices);
    CHECK(region.total_params == base.total_params);
    CHECK(logits.base.indices == base.indices);
    CHECK(logits.init_value == cfg.init_value);
    for (double e : logits.eps) CHECK(e == -10.0);

    // projecting to the base's own sparsity also reproduces it
    auto graftable = graftable_indices(spec, pre);
    MaskOptConfig budgeted = cfg;
    budgeted.sparsity_budget =
        static_cast<double>(base.indices.size()) / static_cast<double>(graftable.size());
    auto [logits2, region2] = optimize_mask(pre, ft, base, data, spec, budgeted);
    CHECK(region2.indices == base.indices);
}

TEST_CASE("optimize_mask recovers a planted single-coordinate difference") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {1};
    spec.num_classes = 2;
    spec.activation = Activation::tanh;
    spec.head_mode = HeadMode::frozen_random;
    auto pre = init_model(spec, 7);
    const Segment& w0 = pre.segment("w0");
    pre.values[w0.offset] = 0.0;
    pre.values[w0.offset + 1] = 0.0;  // hidden unit dead: logits identically 0
    auto ft = pre;
    ft.values[w0.offset] = 3.0;  // the one coordinate that matters

    const Segment& head = pre.segment("head");
    REQUIRE(pre.values[head.offset] != pre.values[head.offset + 1]);

    Dataset data;
    data.inputs.resize(16, 2);
    for (int i = 0; i < 16; ++i) {
        data.inputs(i, 0) = i % 2 == 0 ? 1.0 : -1.0;
        data.inputs(i, 1) = static_cast<double>((i * 37) % 16) / 16.0 - 0.5;
    }
    Matrix ft_logits = forward(ft, spec, data.inputs);
    data.labels.resize(16);
    for (int i = 0; i < 16; ++i) data.labels[i] = ft_logits(i, 0) > ft_logits(i, 1) ? 0 : 1;

    // brute force over single-coordinate regions: only the planted one helps
    auto graftable = graftable_indices(spec, pre);
    REQUIRE(graftable.size() == 3);
    double planted_loss = 0.0, best_other = 1e9;
    for (uint64_t i : graftable) {
        auto composed = graft_compose(pre, ft, reg({i}, pre.size()));
        double l = loss_value(composed, spec, data.inputs, data.labels);
        if (i == w0.offset)
            planted_loss = l;
        else
            best_other = std::min(best_other, l);
    }
    CHECK(planted_loss < 0.2);
    CHECK(best_other == doctest::Approx(std::log(2.0)));  // other grafts leave pre intact

    MaskOptConfig cfg;
    cfg.steps = 200;
    cfg.learning_rate = 1e4;
    cfg.batch_size = 16;
    cfg.sparsity_budget = 1.0 / 3.0;
    cfg.seed = 5;
    auto [logits, region] = optimize_mask(pre, ft, reg({}, pre.size()), data, spec, cfg);
    CHECK(region.indices == std::vector<uint64_t>{w0.offset});

    auto gamma = logits.effective_gamma();
    CHECK(gamma[w0.offset] > 0.5);
    // coordinates where ft == pre get exactly zero gradient and never move
    for (size_t i = 0; i < logits.eps.size(); ++i)
        if (i != w0.offset) CHECK(logits.eps[i] == -10.0);
}

TEST_CASE("ft_model labels reproduce the ground-truth run when labels agree") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {1};
    spec.num_classes = 2;
    spec.head_mode = HeadMode::frozen_random;
    auto pre = init_model(spec, 7);
    const Segment& w0 = pre.segment("w0");
    pre.values[w0.offset] = 0.0;
    pre.values[w0.offset + 1] = 0.0;
    auto ft = pre;
    ft.values[w0.offset] = 3.0;

    Dataset truth;
    truth.inputs = random_inputs(12, 2, 51);
    Matrix ft_logits = forward(ft, spec, truth.inputs);
    truth.labels.resize(12);
    for (int i = 0; i < 12; ++i) truth.labels[i] = ft_logits(i, 0) > ft_logits(i, 1) ? 0 : 1;

    Dataset garbage = truth;
    std::fill(garbage.labels.begin(), garbage.labels.end(), 0);

    MaskOptConfig cfg;
    cfg.steps = 25;
    cfg.seed = 52;
    auto [lg_truth, r_truth] = optimize_mask(pre, ft, reg({}, pre.size()), truth, spec, cfg);

    cfg.label_source = LabelSource::ft_model;
    auto [lg_model, r_model] = optimize_mask(pre, ft, reg({}, pre.size()), garbage, spec, cfg);

    CHECK(lg_truth.eps == lg_model.eps);
    CHECK(r_truth.indices == r_model.indices);
}

TEST_CASE("optimize_mask rejects bad configs and reports non-finite loss") {
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {2};
    spec.num_classes = 2;
    spec.head_mode = HeadMode::trainable;
    auto pre = init_model(spec, 61);
    auto ft = init_model(spec, 62);
    Dataset data;
    data.inputs = random_inputs(4, 2, 63);
    data.labels = random_labels(4, 2, 64);
    auto empty_base = reg({}, pre.size());

    MaskOptConfig cfg;
    cfg.steps = 1;

    MaskOptConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, data, spec, bad), Error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, data, spec, bad), Error);
    bad = cfg;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, data, spec, bad), Error);
    bad = cfg;
    bad.sparsity_budget = 1.5;
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, data, spec, bad), Error);
    bad = cfg;
    bad.init_value = std::nan("");
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, data, spec, bad), Error);

    Dataset empty;
    empty.inputs.resize(0, 2);
    try {
        optimize_mask(pre, ft, empty_base, empty, spec, cfg);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind == Error::Kind::data);
    }

    Dataset mismatched = data;
    mismatched.labels.pop_back();
    CHECK_THROWS_AS(optimize_mask(pre, ft, empty_base, mismatched, spec, cfg), Error);

    auto poisoned = ft;
    poisoned.values[0] = std::nan("");
    try {
        optimize_mask(pre, poisoned, empty_base, data, spec, cfg);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind == Error::Kind::numerical);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("project_sparsity takes the top gammas within budget") {
    MaskLogits logits;
    logits.eps = {inv_sigmoid(0.9), inv_sigmoid(0.2), inv_sigmoid(0.8)};
    logits.base = reg({}, 3);
    logits.graftable = {1, 1, 1};

    CHECK(project_sparsity(logits, 2.0 / 3.0).indices == std::vector<uint64_t>{0, 2});
    CHECK(project_sparsity(logits, 1.0).indices == std::vector<uint64_t>{0, 1, 2});
    CHECK_THROWS_AS(project_sparsity(logits, 0.0), Error);
    CHECK_THROWS_AS(project_sparsity(logits, 1.1), Error);

    logits.graftable = {1, 0, 1};  // ineligible coordinates never selected
    CHECK(project_sparsity(logits, 1.0).indices == std::vector<uint64_t>{0, 2});
}

TEST_CASE("budget law and nestedness over random logits") {
    Rng rng(305);
    MaskLogits logits;
    logits.eps.resize(40);
    for (auto& e : logits.eps) e = rng.normal() * 3.0;
    logits.base = reg(random_subset(rng, 40), 40);
    logits.graftable.assign(40, 0);
    auto keep = rng.sample_without_replacement(40, 25);
    for (uint64_t i : keep) logits.graftable[i] = 1;

    std::vector<uint64_t> previous;
    for (double b : {0.04, 0.1, 0.33, 0.5, 0.77, 1.0}) {
        auto r = project_sparsity(logits, b);
        CHECK(r.indices.size() == static_cast<size_t>(std::ceil(b * 25.0 - 1e-12)));
        for (uint64_t i : previous) CHECK(r.contains(i));
        for (uint64_t i : r.indices) CHECK(logits.graftable[i] == 1);
        previous = r.indices;
    }
}

TEST_CASE("lth_prune zeroes everything outside the region") {
    auto ft = flat_vec({4, 5, 6});
    CHECK(lth_prune(ft, reg({1}, 3)).values == std::vector<double>{0, 5, 0});
    CHECK(lth_prune(ft, reg({0, 1, 2}, 3)).values == ft.values);
    CHECK(lth_prune(ft, reg({}, 3)).values == std::vector<double>{0, 0, 0});
    CHECK_THROWS_AS(lth_prune(ft, reg({0}, 4)), Error);
}

TEST_CASE("retrain_region moves only the region") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_widths = {4};
    spec.num_classes = 3;
    spec.head_mode = HeadMode::trainable;
    auto pre = init_model(spec, 71);

    Dataset data;
    data.inputs = random_inputs(24, 3, 72);
    data.labels = random_labels(24, 3, 73);

    const Segment& b0 = pre.segment("b0");
    std::vector<uint64_t> idx;
    for (size_t i = 0; i < b0.length; ++i) idx.push_back(b0.offset + i);
    auto region = reg(idx, pre.size());

    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 4;
    cfg.steps = 40;
    auto out = retrain_region(pre, spec, region, data, cfg);

    bool moved = false;
    for (size_t i = 0; i < pre.size(); ++i) {
        if (region.contains(i))
            moved = moved || out.values[i] != pre.values[i];
        else
            CHECK(out.values[i] == pre.values[i]);
    }
    CHECK(moved);

    CHECK_THROWS_AS(retrain_region(pre, spec, reg({}, pre.size()), data, cfg), Error);
}

TEST_CASE("wise_interpolate blends toward pre") {
    auto pre = flat_vec({2});
    auto model = flat_vec({4});
    CHECK(wise_interpolate(pre, model, 0.0).values == pre.values);
    CHECK(wise_interpolate(pre, model, 1.0).values == model.values);
    CHECK(wise_interpolate(pre, model, 0.5).values == std::vector<double>{3});
    CHECK_THROWS_AS(wise_interpolate(pre, model, -0.1), Error);
    CHECK_THROWS_AS(wise_interpolate(pre, model, 1.1), Error);
}

TEST_CASE("enum string round-trips") {
    for (auto p : {Provenance::learned, Provenance::movement_topk, Provenance::random,
                   Provenance::bias_only, Provenance::fisher, Provenance::union_,
                   Provenance::difference})
        CHECK(provenance_from_string(to_string(p)) == p);
    CHECK_THROWS_AS(provenance_from_string("telepathy"), Error);

    for (auto s : {LabelSource::ground_truth, LabelSource::ft_model})
        CHECK(label_source_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(label_source_from_string(""), Error);

    CHECK(to_string(BaselineKind::fisher) == "fisher");
}

TEST_SUITE_END();
