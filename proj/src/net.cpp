#include "skillgraft/net.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace sg {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(HeadMode m) { return m == HeadMode::frozen_random ? "frozen_random" : "trainable"; }

std::string to_string(ParamKind k) {
    switch (k) {
        case ParamKind::weight: return "weight";
        case ParamKind::bias: return "bias";
        case ParamKind::layernorm_scale: return "layernorm_scale";
        case ParamKind::layernorm_shift: return "layernorm_shift";
        case ParamKind::head: return "head";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    fail_config("unknown activation '" + s + "'");
}

HeadMode head_mode_from_string(const std::string& s) {
    if (s == "frozen_random") return HeadMode::frozen_random;
    if (s == "trainable") return HeadMode::trainable;
    fail_config("unknown head mode '" + s + "'");
}

std::string to_string(Algorithm a) { return a == Algorithm::sgd ? "sgd" : "adamw"; }

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "sgd") return Algorithm::sgd;
    if (s == "adamw") return Algorithm::adamw;
    fail_config("unknown algorithm '" + s + "'");
}

void ModelSpec::validate() const {
    if (input_dim == 0) fail_config("model: input_dim must be positive");
    if (hidden_widths.empty()) fail_config("model: at least one hidden layer required");
    for (size_t w : hidden_widths)
        if (w == 0) fail_config("model: hidden widths must be positive");
    if (num_classes < 2) fail_config("model: num_classes must be at least 2");
}

const Segment* ParameterVector::find_segment(const std::string& name) const {
    for (const auto& s : segments)
        if (s.name == name) return &s;
    return nullptr;
}

const Segment& ParameterVector::segment(const std::string& name) const {
    const Segment* s = find_segment(name);
    if (!s) fail_config("no segment named '" + name + "'");
    return *s;
}

void ParameterVector::validate() const {
    size_t expect = 0;
    for (const auto& s : segments) {
        if (s.offset != expect) fail_config("segment table not contiguous at '" + s.name + "'");
        if (s.length == 0) fail_config("empty segment '" + s.name + "'");
        expect += s.length;
    }
    if (expect != values.size()) fail_config("segment table does not cover the parameter vector");
}

static void push_layer_segments(std::vector<Segment>& segs, size_t& off, size_t in, size_t out,
                                int layer, bool layernorm) {
    segs.push_back({"w" + std::to_string(layer), off, in * out, ParamKind::weight, layer});
    off += in * out;
    segs.push_back({"b" + std::to_string(layer), off, out, ParamKind::bias, layer});
    off += out;
    if (layernorm) {
        segs.push_back({"ln_scale" + std::to_string(layer), off, out, ParamKind::layernorm_scale, layer});
        off += out;
        segs.push_back({"ln_shift" + std::to_string(layer), off, out, ParamKind::layernorm_shift, layer});
        off += out;
    }
}

std::vector<Segment> build_segments(const ModelSpec& spec) {
    spec.validate();
    std::vector<Segment> segs;
    size_t off = 0, in = spec.input_dim;
    int layer = 0;
    for (size_t w : spec.hidden_widths) {
        push_layer_segments(segs, off, in, w, layer, spec.layernorm);
        in = w;
        ++layer;
    }
    segs.push_back({"head", off, spec.num_classes * in, ParamKind::head, layer});
    return segs;
}

std::vector<Segment> build_segments_multi(const ModelSpec& spec, const std::vector<size_t>& classes) {
    spec.validate();
    if (classes.empty()) fail_config("multi-head layout needs at least one task");
    std::vector<Segment> segs;
    size_t off = 0, in = spec.input_dim;
    int layer = 0;
    for (size_t w : spec.hidden_widths) {
        push_layer_segments(segs, off, in, w, layer, spec.layernorm);
        in = w;
        ++layer;
    }
    for (size_t t = 0; t < classes.size(); ++t) {
        if (classes[t] < 2) fail_config("multi-head layout: tasks need at least 2 classes");
        segs.push_back({"head" + std::to_string(t), off, classes[t] * in, ParamKind::head, layer});
        off += classes[t] * in;
    }
    return segs;
}

std::vector<uint8_t> frozen_coords(const ModelSpec& spec, const ParameterVector& params) {
    std::vector<uint8_t> frozen(params.size(), 0);
    for (const auto& s : params.segments) {
        bool f = (s.kind == ParamKind::head && spec.head_mode == HeadMode::frozen_random) ||
                 (spec.freeze_first_layer && s.layer == 0 && s.kind != ParamKind::head);
        if (f) std::fill(frozen.begin() + s.offset, frozen.begin() + s.offset + s.length, 1);
    }
    return frozen;
}

std::vector<uint64_t> graftable_indices(const ModelSpec& spec, const ParameterVector& params) {
    auto frozen = frozen_coords(spec, params);
    std::vector<uint64_t> out;
    out.reserve(params.size());
    for (size_t i = 0; i < frozen.size(); ++i)
        if (!frozen[i]) out.push_back(i);
    return out;
}

void set_unit_norm_head(ParameterVector& params, const std::string& head_name, size_t num_classes,
                        uint64_t seed) {
    const Segment& seg = params.segment(head_name);
    if (seg.kind != ParamKind::head) fail_config("'" + head_name + "' is not a head segment");
    if (num_classes == 0 || seg.length % num_classes != 0)
        fail_config("head segment length not divisible by class count");
    size_t width = seg.length / num_classes;
    Rng rng = derive_rng(seed, kStreamHead);
    for (size_t c = 0; c < num_classes; ++c) {
        double* row = params.values.data() + seg.offset + c * width;
        double norm2 = 0.0;
        for (size_t j = 0; j < width; ++j) {
            row[j] = rng.normal();
            norm2 += row[j] * row[j];
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (size_t j = 0; j < width; ++j) row[j] *= inv;
    }
}

ParameterVector init_model(const ModelSpec& spec, uint64_t seed) {
    ParameterVector p;
    p.segments = build_segments(spec);
    p.values.assign(p.segments.back().offset + p.segments.back().length, 0.0);
    Rng rng = derive_rng(seed, kStreamInit);
    size_t in = spec.input_dim;
    for (const auto& s : p.segments) {
        switch (s.kind) {
            case ParamKind::weight: {
                size_t fan_in = in;
                double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (size_t i = 0; i < s.length; ++i)
                    p.values[s.offset + i] = (2.0 * rng.uniform() - 1.0) * lim;
                in = s.length / fan_in;
                break;
            }
            case ParamKind::bias:
            case ParamKind::layernorm_shift:
                break;  // zeros
            case ParamKind::layernorm_scale:
                std::fill(p.values.begin() + s.offset, p.values.begin() + s.offset + s.length, 1.0);
                break;
            case ParamKind::head: {
                if (spec.head_mode == HeadMode::frozen_random) {
                    set_unit_norm_head(p, s.name, spec.num_classes, seed);
                } else {
                    double lim = 1.0 / std::sqrt(static_cast<double>(in));
                    Rng hr = derive_rng(seed, kStreamHead);
                    for (size_t i = 0; i < s.length; ++i)
                        p.values[s.offset + i] = (2.0 * hr.uniform() - 1.0) * lim;
                }
                break;
            }
        }
    }
    return p;
}

namespace {

constexpr double kLnEps = 1e-5;

struct LayerRef {
    const double* w;       // out x in, row-major
    const double* b;       // out
    const double* ln_s;    // out or null
    const double* ln_b;    // out or null
    size_t in, out;
};

struct NetView {
    std::vector<LayerRef> layers;
    const double* head;  // K x last, row-major
    size_t num_classes;
    size_t head_offset;
};

NetView make_view(const ParameterVector& p, const ModelSpec& spec, const std::string& head_name) {
    NetView v;
    size_t in = spec.input_dim;
    for (size_t l = 0; l < spec.hidden_widths.size(); ++l) {
        std::string idx = std::to_string(l);
        LayerRef r;
        const Segment& w = p.segment("w" + idx);
        const Segment& b = p.segment("b" + idx);
        r.w = p.values.data() + w.offset;
        r.b = p.values.data() + b.offset;
        r.in = in;
        r.out = spec.hidden_widths[l];
        if (w.length != r.in * r.out || b.length != r.out)
            fail_config("parameter vector does not match the model spec at layer " + idx);
        if (spec.layernorm) {
            r.ln_s = p.values.data() + p.segment("ln_scale" + idx).offset;
            r.ln_b = p.values.data() + p.segment("ln_shift" + idx).offset;
        } else {
            r.ln_s = r.ln_b = nullptr;
        }
        in = r.out;
        v.layers.push_back(r);
    }
    const Segment& h = p.segment(head_name);
    if (h.kind != ParamKind::head) fail_config("'" + head_name + "' is not a head segment");
    if (h.length % in != 0) fail_config("head segment length not divisible by layer width");
    v.head = p.values.data() + h.offset;
    v.head_offset = h.offset;
    v.num_classes = h.length / in;
    return v;
}

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;

struct ForwardCache {
    // per layer: pre-norm affine z, normalized vhat (layernorm only),
    // inverse std (layernorm only), activation input act, post-activation h
    std::vector<Matrix> z, vhat, act, h;
    std::vector<Vector> inv_sd;
    Matrix logits;
};

void forward_impl(const NetView& v, const ModelSpec& spec, const Matrix& X, ForwardCache& c) {
    size_t n = X.rows();
    const Matrix* cur = &X;
    c.z.resize(v.layers.size());
    c.vhat.resize(v.layers.size());
    c.act.resize(v.layers.size());
    c.h.resize(v.layers.size());
    c.inv_sd.resize(v.layers.size());
    for (size_t l = 0; l < v.layers.size(); ++l) {
        const LayerRef& L = v.layers[l];
        MatMap W(L.w, L.out, L.in);
        VecMap b(L.b, L.out);
        Matrix& z = c.z[l];
        z.noalias() = *cur * W.transpose();
        z.rowwise() += b.transpose();
        Matrix act_in;
        if (spec.layernorm) {
            Matrix& vh = c.vhat[l];
            vh.resize(n, L.out);
            c.inv_sd[l].resize(n);
            VecMap g(L.ln_s, L.out), s(L.ln_b, L.out);
            for (size_t i = 0; i < n; ++i) {
                double mu = z.row(i).mean();
                double var = (z.row(i).array() - mu).square().mean();
                double inv = 1.0 / std::sqrt(var + kLnEps);
                c.inv_sd[l][i] = inv;
                vh.row(i) = (z.row(i).array() - mu) * inv;
            }
            act_in = (vh.array().rowwise() * g.transpose().array()).rowwise() +
                     s.transpose().array();
        } else {
            act_in = z;
        }
        c.act[l] = std::move(act_in);
        Matrix& h = c.h[l];
        if (spec.activation == Activation::tanh)
            h = c.act[l].array().tanh();
        else
            h = c.act[l].array().max(0.0);
        cur = &h;
    }
    MatMap H(v.head, v.num_classes, v.layers.back().out);
    c.logits.noalias() = *cur * H.transpose();
}

// softmax probabilities in place of logits
void softmax_rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double mx = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - mx).exp();
        m.row(i) /= m.row(i).sum();
    }
}

}  // namespace

Matrix forward(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
               const std::string& head_name) {
    if (static_cast<size_t>(inputs.cols()) != spec.input_dim)
        fail_config("input width does not match model input_dim");
    NetView v = make_view(params, spec, head_name);
    ForwardCache c;
    forward_impl(v, spec, inputs, c);
    return std::move(c.logits);
}

Matrix hidden_features(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                       const std::string& head_name) {
    if (static_cast<size_t>(inputs.cols()) != spec.input_dim)
        fail_config("input width does not match model input_dim");
    NetView v = make_view(params, spec, head_name);
    ForwardCache c;
    forward_impl(v, spec, inputs, c);
    return std::move(c.h.back());
}

LossGrad loss_and_grad(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                       const std::vector<int>& labels, const ParameterVector* anchor,
                       double l1_strength, const std::string& head_name, bool raw) {
    size_t n = inputs.rows();
    if (n == 0) fail_data("loss_and_grad: empty batch");
    if (labels.size() != n) fail_data("loss_and_grad: labels do not match batch");
    if (static_cast<size_t>(inputs.cols()) != spec.input_dim)
        fail_config("input width does not match model input_dim");
    NetView v = make_view(params, spec, head_name);
    for (int y : labels)
        if (y < 0 || static_cast<size_t>(y) >= v.num_classes) fail_data("label out of range");

    ForwardCache c;
    forward_impl(v, spec, inputs, c);

    Matrix probs = c.logits;
    softmax_rows(probs);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) loss -= std::log(std::max(probs(i, labels[i]), 1e-300));
    loss /= static_cast<double>(n);

    LossGrad out;
    out.grad.assign(params.size(), 0.0);

    // d loss / d logits
    Matrix dl = probs;
    for (size_t i = 0; i < n; ++i) dl(i, labels[i]) -= 1.0;
    dl /= static_cast<double>(n);

    size_t last = v.layers.size() - 1;
    MatMap H(v.head, v.num_classes, v.layers[last].out);
    MatMapMut gH(out.grad.data() + v.head_offset, v.num_classes, v.layers[last].out);
    gH.noalias() = dl.transpose() * c.h[last];
    Matrix dh;
    dh.noalias() = dl * H;

    for (size_t li = v.layers.size(); li-- > 0;) {
        const LayerRef& L = v.layers[li];
        const Matrix& hprev = li == 0 ? inputs : c.h[li - 1];
        // through activation
        Matrix du;
        if (spec.activation == Activation::tanh)
            du = dh.array() * (1.0 - c.h[li].array().square());
        else
            du = dh.array() * (c.h[li].array() > 0.0).cast<double>();
        Matrix dz;
        {
            std::string idx = std::to_string(li);
            if (spec.layernorm) {
                VecMap g(L.ln_s, L.out);
                const Segment& gs = params.segment("ln_scale" + idx);
                const Segment& ss = params.segment("ln_shift" + idx);
                Eigen::Map<Eigen::VectorXd> gg(out.grad.data() + gs.offset, L.out);
                Eigen::Map<Eigen::VectorXd> gsh(out.grad.data() + ss.offset, L.out);
                gg.noalias() += (du.array() * c.vhat[li].array()).colwise().sum().matrix().transpose();
                gsh.noalias() += du.colwise().sum().transpose();
                Matrix dvh = du.array().rowwise() * g.transpose().array();
                dz.resize(du.rows(), du.cols());
                for (size_t i = 0; i < n; ++i) {
                    double mean_dvh = dvh.row(i).mean();
                    double mean_dvh_vh = (dvh.row(i).array() * c.vhat[li].row(i).array()).mean();
                    dz.row(i) = (dvh.row(i).array() - mean_dvh -
                                 c.vhat[li].row(i).array() * mean_dvh_vh) *
                                c.inv_sd[li][i];
                }
            } else {
                dz = du;
            }
            const Segment& ws = params.segment("w" + idx);
            const Segment& bs = params.segment("b" + idx);
            MatMapMut gW(out.grad.data() + ws.offset, L.out, L.in);
            gW.noalias() = dz.transpose() * hprev;
            Eigen::Map<Eigen::VectorXd> gb(out.grad.data() + bs.offset, L.out);
            gb = dz.colwise().sum().transpose();
        }
        if (li > 0) {
            MatMap W(L.w, L.out, L.in);
            dh.noalias() = dz * W;
        }
    }

    if (l1_strength != 0.0) {
        if (!anchor) fail_config("l1 anchor strength set but no anchor given");
        if (anchor->size() != params.size()) fail_config("anchor size mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            double d = params.values[i] - anchor->values[i];
            loss += l1_strength * std::abs(d);
            if (d > 0.0)
                out.grad[i] += l1_strength;
            else if (d < 0.0)
                out.grad[i] -= l1_strength;
            // subgradient at 0 is 0
        }
    }

    if (!raw) {
        auto frozen = frozen_coords(spec, params);
        for (size_t i = 0; i < frozen.size(); ++i)
            if (frozen[i]) out.grad[i] = 0.0;
    }
    out.loss = loss;
    return out;
}

double loss_value(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                  const std::vector<int>& labels, const ParameterVector* anchor, double l1_strength,
                  const std::string& head_name) {
    size_t n = inputs.rows();
    if (n == 0) fail_data("loss_value: empty batch");
    if (labels.size() != n) fail_data("loss_value: labels do not match batch");
    if (static_cast<size_t>(inputs.cols()) != spec.input_dim)
        fail_config("input width does not match model input_dim");
    NetView v = make_view(params, spec, head_name);
    ForwardCache c;
    forward_impl(v, spec, inputs, c);
    Matrix probs = c.logits;
    softmax_rows(probs);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<size_t>(y) >= v.num_classes) fail_data("label out of range");
        loss -= std::log(std::max(probs(i, y), 1e-300));
    }
    loss /= static_cast<double>(n);
    if (l1_strength != 0.0) {
        if (!anchor) fail_config("l1 anchor strength set but no anchor given");
        for (size_t i = 0; i < params.size(); ++i)
            loss += l1_strength * std::abs(params.values[i] - anchor->values[i]);
    }
    return loss;
}

void OptimizerConfig::validate() const {
    if (learning_rate <= 0.0) fail_config("optimizer: learning_rate must be positive");
    if (batch_size == 0) fail_config("optimizer: batch_size must be positive");
    if (weight_decay < 0.0 || l1_anchor_strength < 0.0)
        fail_config("optimizer: negative regularization strength");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        fail_config("optimizer: betas must lie in [0, 1)");
}

size_t default_steps(size_t num_classes, size_t k) { return 16 * num_classes * std::min<size_t>(k, 512); }

void optimizer_step(OptState& state, ParameterVector& params, const std::vector<double>& grad,
                    const OptimizerConfig& cfg, const std::vector<uint8_t>* frozen) {
    size_t n = params.size();
    if (grad.size() != n) fail_config("optimizer_step: gradient size mismatch");
    state.step += 1;
    if (cfg.algorithm == Algorithm::sgd) {
        for (size_t i = 0; i < n; ++i) {
            if (frozen && (*frozen)[i]) continue;
            params.values[i] -= cfg.learning_rate * (grad[i] + cfg.weight_decay * params.values[i]);
        }
    } else {
        if (state.m.size() != n) {
            state.m.assign(n, 0.0);
            state.v.assign(n, 0.0);
        }
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
        for (size_t i = 0; i < n; ++i) {
            if (frozen && (*frozen)[i]) continue;
            state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
            state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            double mhat = state.m[i] / bc1;
            double vhat = state.v[i] / bc2;
            params.values[i] -= cfg.learning_rate *
                                (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                 cfg.weight_decay * params.values[i]);
        }
    }
}

namespace {

// Seeded shuffle with wraparound: batches are consecutive slices of a
// permutation, reshuffled when exhausted; a batch may span the boundary.
struct BatchStream {
    Rng rng;
    std::vector<size_t> order;
    size_t cursor = 0;

    BatchStream(uint64_t seed, size_t n) : rng(seed) { order = rng.permutation(n); }

    void next(size_t batch, std::vector<size_t>& out) {
        out.clear();
        while (out.size() < batch) {
            if (cursor >= order.size()) {
                order = rng.permutation(order.size());
                cursor = 0;
            }
            out.push_back(order[cursor++]);
        }
    }
};

}  // namespace

TrainResult train_tasks(const ParameterVector& params0, const ModelSpec& spec,
                        const std::vector<TrainTask>& tasks, const OptimizerConfig& cfg,
                        size_t checkpoint_every, const std::vector<uint8_t>* trainable) {
    cfg.validate();
    if (tasks.empty()) fail_config("train: no tasks");
    for (const auto& t : tasks) {
        if (!t.inputs || !t.labels) fail_config("train: task without data");
        if (t.inputs->rows() == 0) fail_data("train: empty dataset");
        if (static_cast<size_t>(t.inputs->rows()) != t.labels->size())
            fail_data("train: labels do not match dataset");
    }
    TrainResult res;
    res.final = params0;
    res.task_steps.assign(tasks.size(), 0);
    res.checkpoints.emplace_back(0, params0);

    ParameterVector anchor;
    bool use_anchor = cfg.l1_anchor_strength > 0.0;
    if (use_anchor) anchor = params0;

    auto frozen = frozen_coords(spec, res.final);
    if (trainable) {
        if (trainable->size() != frozen.size()) fail_config("train: trainable mask size mismatch");
        for (size_t i = 0; i < frozen.size(); ++i)
            if (!(*trainable)[i]) frozen[i] = 1;
    }

    Rng pick = derive_rng(cfg.seed, kStreamTaskPick);
    std::vector<BatchStream> streams;
    streams.reserve(tasks.size());
    for (size_t t = 0; t < tasks.size(); ++t)
        streams.emplace_back(mix64(cfg.seed, kStreamShuffle, t), tasks[t].inputs->rows());

    OptState state;
    std::vector<size_t> idx;
    Matrix batch;
    std::vector<int> by;
    for (size_t step = 1; step <= cfg.steps; ++step) {
        size_t ti = static_cast<size_t>(pick.uniform_int(tasks.size()));
        const TrainTask& task = tasks[ti];
        res.task_steps[ti] += 1;
        streams[ti].next(cfg.batch_size, idx);
        batch.resize(idx.size(), task.inputs->cols());
        by.resize(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            batch.row(i) = task.inputs->row(idx[i]);
            by[i] = (*task.labels)[idx[i]];
        }
        LossGrad lg = loss_and_grad(res.final, spec, batch, by, use_anchor ? &anchor : nullptr,
                                    cfg.l1_anchor_strength, task.head_name);
        if (!std::isfinite(lg.loss))
            fail_numerical("training loss became non-finite at step " + std::to_string(step));
        optimizer_step(state, res.final, lg.grad, cfg, &frozen);
        res.losses.push_back(lg.loss);
        if (checkpoint_every > 0 && step % checkpoint_every == 0 && step != cfg.steps)
            res.checkpoints.emplace_back(step, res.final);
    }
    if (cfg.steps > 0) res.checkpoints.emplace_back(cfg.steps, res.final);
    return res;
}

TrainResult train(const ParameterVector& params0, const ModelSpec& spec, const Matrix& inputs,
                  const std::vector<int>& labels, const OptimizerConfig& cfg,
                  size_t checkpoint_every, const std::string& head_name) {
    std::vector<TrainTask> tasks{{&inputs, &labels, head_name}};
    return train_tasks(params0, spec, tasks, cfg, checkpoint_every);
}

double finite_diff_check(const ParameterVector& params, const ModelSpec& spec, const Matrix& inputs,
                         const std::vector<int>& labels, const std::vector<uint64_t>& sample_indices,
                         double h, const std::string& head_name, double l1_strength,
                         const ParameterVector* anchor) {
    if (h <= 0.0) fail_config("finite_diff_check: step size must be positive");
    for (uint64_t i : sample_indices)
        if (i >= params.size()) fail_config("finite_diff_check: coordinate index out of range");
    LossGrad lg = loss_and_grad(params, spec, inputs, labels, anchor, l1_strength, head_name,
                                /*raw=*/true);
    ParameterVector p = params;
    double worst = 0.0;
    for (uint64_t i : sample_indices) {
        double orig = p.values[i];
        p.values[i] = orig + h;
        double lp = loss_value(p, spec, inputs, labels, anchor, l1_strength, head_name);
        p.values[i] = orig - h;
        double lm = loss_value(p, spec, inputs, labels, anchor, l1_strength, head_name);
        p.values[i] = orig;
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(lg.grad[i]), 1e-12});
        worst = std::max(worst, std::abs(fd - lg.grad[i]) / denom);
    }
    return worst;
}

double min_abs_preactivation(const ParameterVector& params, const ModelSpec& spec,
                             const Matrix& inputs, const std::string& head_name) {
    if (static_cast<size_t>(inputs.cols()) != spec.input_dim)
        fail_config("input width does not match model input_dim");
    NetView v = make_view(params, spec, head_name);
    ForwardCache c;
    forward_impl(v, spec, inputs, c);
    double m = std::numeric_limits<double>::infinity();
    for (const Matrix& a : c.act) m = std::min(m, a.array().abs().minCoeff());
    return m;
}

std::vector<uint64_t> live_gradient_indices(const ParameterVector& params, const ModelSpec& spec,
                                            const Matrix& inputs, const std::vector<int>& labels,
                                            size_t limit, double floor,
                                            const std::string& head_name) {
    LossGrad lg = loss_and_grad(params, spec, inputs, labels, nullptr, 0.0, head_name, /*raw=*/true);
    std::vector<uint64_t> idx;
    for (size_t i = 0; i < lg.grad.size(); ++i)
        if (std::abs(lg.grad[i]) >= floor) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](uint64_t a, uint64_t b) {
        return std::abs(lg.grad[a]) > std::abs(lg.grad[b]);
    });
    if (idx.size() > limit) idx.resize(limit);
    return idx;
}

}  // namespace sg
