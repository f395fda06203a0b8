#include "nametune/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace nametune {

namespace {

struct AssembledHead {
    std::vector<TokenSequence> inputs;
    std::vector<Vector> embeddings;
};

AssembledHead assemble_all(const TextParameterSet& params, const FrozenDualEncoder& enc,
                           const std::vector<ClassEntry>& classes) {
    AssembledHead out;
    out.inputs.reserve(classes.size());
    out.embeddings.reserve(classes.size());
    for (const auto& entry : classes) {
        out.inputs.push_back(assemble(params, entry, enc.space().max_seq_len));
        out.embeddings.push_back(enc.encode_text(out.inputs.back()));
    }
    return out;
}

std::vector<double> stable_log_softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> item_logits(const EmbeddingSpace& space, const Vector& x,
                                const std::vector<Vector>& class_embeddings) {
    std::vector<double> logits(class_embeddings.size());
    for (std::size_t j = 0; j < class_embeddings.size(); ++j)
        logits[j] = similarity_score(space, x, class_embeddings[j]) / space.temperature;
    return logits;
}

double effective_alpha(const TextParameterSet& params, double alpha) {
    // Random-name ablation trains offsets unpenalized.
    return params.ablation_random_names ? 0.0 : alpha;
}

void check_batch(std::span<const LabeledEmbedding> batch, std::size_t n_classes) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].label < 0 || static_cast<std::size_t>(batch[i].label) >= n_classes)
            throw ConfigError("batch item " + std::to_string(i) + ": label " +
                              std::to_string(batch[i].label) + " outside 0.." +
                              std::to_string(n_classes - 1));
        for (double v : batch[i].embedding)
            if (!std::isfinite(v))
                throw NumericError("batch item " + std::to_string(i) +
                                   ": non-finite visual embedding");
    }
}

}  // namespace

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + s + "' (valid: sgd, adamw)");
}

std::string to_string(CheckpointPolicy p) {
    return p == CheckpointPolicy::best_validation ? "best_validation" : "final_epoch";
}

CheckpointPolicy checkpoint_policy_from_string(const std::string& s) {
    if (s == "best_validation") return CheckpointPolicy::best_validation;
    if (s == "final_epoch") return CheckpointPolicy::final_epoch;
    throw ConfigError("unknown checkpoint policy '" + s +
                      "' (valid: best_validation, final_epoch)");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (!(learning_rate > 0.0) && learning_rate != 0.0)
        throw ConfigError("train config: learning_rate must be >= 0");
    if (alpha < 0.0) throw ConfigError("train config: alpha must be >= 0");
    if (method != Method::name_tuning && context_length < 0)
        throw ConfigError("train config: context_length must be >= 0");
}

TrainConfig default_train_config(Method method) {
    TrainConfig cfg;
    cfg.method = method;
    switch (method) {
        case Method::name_tuning:
            cfg.optimizer = OptimizerKind::adamw;
            cfg.learning_rate = 1e-4;
            cfg.epochs = 20;
            cfg.alpha = 1.0;
            cfg.context_length = 0;
            break;
        case Method::coop:
        case Method::coop_csc:
            cfg.optimizer = OptimizerKind::sgd;
            cfg.learning_rate = 2e-3;
            cfg.epochs = 50;
            cfg.alpha = 0.0;
            cfg.context_length = 16;
            break;
        case Method::cona:
            cfg.optimizer = OptimizerKind::adamw;
            cfg.learning_rate = 1e-5;
            cfg.epochs = 20;
            cfg.alpha = 1.0;
            cfg.context_length = 4;
            break;
    }
    return cfg;
}

std::vector<TrainConfig> default_grid(Method method, CheckpointPolicy policy) {
    std::vector<TrainConfig> grid;
    TrainConfig base = default_train_config(method);
    base.checkpoint_policy = policy;
    switch (method) {
        case Method::name_tuning:
            for (double lr : {1e-5, 1e-4, 1e-3, 4e-3})
                for (double alpha : {0.01, 0.1, 1.0, 10.0}) {
                    base.learning_rate = lr;
                    base.alpha = alpha;
                    grid.push_back(base);
                }
            break;
        case Method::coop:
        case Method::coop_csc:
            for (int ctx : {8, 16})
                for (double lr : {6.25e-5, 5e-4, 2e-3, 4e-3}) {
                    base.context_length = ctx;
                    base.learning_rate = lr;
                    grid.push_back(base);
                }
            break;
        case Method::cona:
            for (double alpha : {1.0, 5.0, 10.0, 20.0}) {
                base.alpha = alpha;
                grid.push_back(base);
            }
            break;
    }
    return grid;
}

double loss(const TextParameterSet& params, std::span<const LabeledEmbedding> batch,
            const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes, double alpha) {
    check_batch(batch, classes.size());
    const double a = effective_alpha(params, alpha);
    const AssembledHead head = assemble_all(params, enc, classes);
    double total = a * parameter_l2(params);
    for (const auto& item : batch) {
        const auto logits = item_logits(enc.space(), item.embedding, head.embeddings);
        const auto logp = stable_log_softmax(logits);
        total -= logp[static_cast<std::size_t>(item.label)];
    }
    if (!std::isfinite(total)) throw NumericError("loss: non-finite objective value");
    return total;
}

GradientSet gradients(const TextParameterSet& params, std::span<const LabeledEmbedding> batch,
                      const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                      double alpha) {
    check_batch(batch, classes.size());
    const double a = effective_alpha(params, alpha);
    const EmbeddingSpace& space = enc.space();
    const std::size_t n = classes.size();
    const AssembledHead head = assemble_all(params, enc, classes);

    // d(loss)/d(text embedding) accumulated per class across the batch
    std::vector<Vector> cotangents(n, Vector(static_cast<std::size_t>(space.d_embed), 0.0));
    bool any_data = false;
    for (const auto& item : batch) {
        any_data = true;
        const Vector& x = item.embedding;
        const auto logits = item_logits(space, x, head.embeddings);
        const auto logp = stable_log_softmax(logits);
        const double norm_x = space.similarity == Similarity::cosine ? l2_norm(x) : 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double coeff =
                std::exp(logp[j]) - (static_cast<int>(j) == item.label ? 1.0 : 0.0);
            const Vector& t = head.embeddings[j];
            if (space.similarity == Similarity::dot) {
                for (std::size_t e = 0; e < t.size(); ++e)
                    cotangents[j][e] += coeff / space.temperature * x[e];
            } else {
                const double norm_t = l2_norm(t);
                const double sim = dot(x, t) / (norm_x * norm_t);
                const double c = coeff / space.temperature;
                for (std::size_t e = 0; e < t.size(); ++e)
                    cotangents[j][e] +=
                        c * (x[e] / (norm_x * norm_t) - sim * t[e] / (norm_t * norm_t));
            }
        }
    }

    GradientSet grads;
    const std::size_t l_ctx = static_cast<std::size_t>(params.context_length);
    const bool has_shared = params.method == Method::coop || params.method == Method::cona;
    const bool has_csc = params.method == Method::coop_csc;
    const bool has_offsets = params.method == Method::name_tuning || params.method == Method::cona;

    if (has_shared) grads.shared_context = Matrix::zeros_like(params.shared_context);
    if (has_csc) {
        grads.class_contexts.reserve(n);
        for (const auto& c : params.class_contexts) grads.class_contexts.push_back(Matrix::zeros_like(c));
    }
    if (has_offsets) {
        grads.offsets.reserve(n);
        for (const auto& o : params.offsets) grads.offsets.push_back(Matrix::zeros_like(o));
    }

    if (any_data) {
        for (std::size_t j = 0; j < n; ++j) {
            const Matrix input_grad = enc.text_input_gradient(head.inputs[j], cotangents[j]);
            // Prefix rows belong to the context (or the fixed prompt, which
            // is not learnable); the tail rows are the name offset.
            const std::size_t prefix =
                params.method == Method::name_tuning
                    ? params.fixed_prompt->tokenized_prefix.length()
                    : l_ctx;
            if (has_shared) {
                for (std::size_t r = 0; r < l_ctx; ++r)
                    for (std::size_t c = 0; c < input_grad.cols(); ++c)
                        grads.shared_context(r, c) += input_grad(r, c);
            }
            if (has_csc) {
                for (std::size_t r = 0; r < l_ctx; ++r)
                    for (std::size_t c = 0; c < input_grad.cols(); ++c)
                        grads.class_contexts[j](r, c) += input_grad(r, c);
            }
            if (has_offsets) {
                Matrix& g = grads.offsets[j];
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c)
                        g(r, c) += input_grad(prefix + r, c);
            }
        }
    }

    if (has_offsets && a != 0.0) {
        for (std::size_t j = 0; j < n; ++j) {
            Matrix& g = grads.offsets[j];
            const Matrix& eps = params.offsets[j];
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += a * eps.data()[i];
        }
    }
    return grads;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

void Optimizer::step_tensor(Matrix& param, const Matrix& grad, Matrix& m1, Matrix& m2) {
    if (kind_ == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            m1.data()[i] = 0.9 * m1.data()[i] + grad.data()[i];
            param.data()[i] -= lr_ * m1.data()[i];
        }
        return;
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i];
        m1.data()[i] = b1 * m1.data()[i] + (1.0 - b1) * g;
        m2.data()[i] = b2 * m2.data()[i] + (1.0 - b2) * g * g;
        const double mhat = m1.data()[i] / bc1;
        const double vhat = m2.data()[i] / bc2;
        param.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps);
    }
}

void Optimizer::step(TextParameterSet& params, const GradientSet& grads) {
    if (!buffers_ready_) {
        m1_.shared_context = Matrix::zeros_like(grads.shared_context);
        m2_.shared_context = Matrix::zeros_like(grads.shared_context);
        for (const auto& g : grads.class_contexts) {
            m1_.class_contexts.push_back(Matrix::zeros_like(g));
            m2_.class_contexts.push_back(Matrix::zeros_like(g));
        }
        for (const auto& g : grads.offsets) {
            m1_.offsets.push_back(Matrix::zeros_like(g));
            m2_.offsets.push_back(Matrix::zeros_like(g));
        }
        buffers_ready_ = true;
    }
    ++steps_;
    if (grads.shared_context.size() > 0)
        step_tensor(params.shared_context, grads.shared_context, m1_.shared_context,
                    m2_.shared_context);
    for (std::size_t i = 0; i < grads.class_contexts.size(); ++i)
        step_tensor(params.class_contexts[i], grads.class_contexts[i], m1_.class_contexts[i],
                    m2_.class_contexts[i]);
    for (std::size_t i = 0; i < grads.offsets.size(); ++i)
        step_tensor(params.offsets[i], grads.offsets[i], m1_.offsets[i], m2_.offsets[i]);
}

double head_accuracy(const ClassifierHead& head, std::span<const LabeledEmbedding> items) {
    if (items.empty()) throw ConfigError("head_accuracy: empty item list");
    std::size_t correct = 0;
    for (const auto& item : items)
        if (predict(item.embedding, head) == item.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(items.size());
}

TrainResult train_run(const std::vector<LabeledEmbedding>& train_set,
                      const std::vector<LabeledEmbedding>* val_set, const TrainConfig& cfg,
                      const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                      std::optional<PromptSpec> prompt, bool ablation_random_names) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("train_run: empty training set");
    if (cfg.checkpoint_policy == CheckpointPolicy::best_validation &&
        (val_set == nullptr || val_set->empty()))
        throw ConfigError("train_run: best_validation policy needs a validation set");

    SeededRng rng(cfg.seed);
    TextParameterSet params = init_parameters(cfg.method, classes, cfg.context_length, rng,
                                              ablation_random_names, std::move(prompt));
    Optimizer opt(cfg.optimizer, cfg.learning_rate);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.history.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<LabeledEmbedding> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
            const GradientSet grads = gradients(params, batch, enc, classes, cfg.alpha);
            opt.step(params, grads);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss(params, train_set, enc, classes, cfg.alpha);
        rec.snapshot = quantize_to_f32(params);
        if (val_set != nullptr && !val_set->empty())
            rec.val_accuracy = head_accuracy(build_head(enc, classes, rec.snapshot), *val_set);
        result.history.epochs.push_back(std::move(rec));
    }

    std::size_t sel = result.history.epochs.size() - 1;
    if (cfg.checkpoint_policy == CheckpointPolicy::best_validation) {
        sel = 0;
        for (std::size_t i = 1; i < result.history.epochs.size(); ++i) {
            if (*result.history.epochs[i].val_accuracy >
                *result.history.epochs[sel].val_accuracy)
                sel = i;  // ties keep the earliest epoch
        }
    }
    result.final_params = std::move(params);
    result.selected = result.history.epochs[sel].snapshot;
    result.selected_epoch = static_cast<int>(sel) + 1;
    return result;
}

std::uint64_t config_fingerprint(const TrainConfig& cfg) {
    std::string bytes;
    bytes.push_back(static_cast<char>(cfg.method));
    bytes.push_back(static_cast<char>(cfg.optimizer));
    bytes.push_back(static_cast<char>(cfg.checkpoint_policy));
    const auto append_double = [&bytes](double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, sizeof(u));
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    };
    const auto append_int = [&bytes](int v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    append_double(cfg.learning_rate);
    append_double(cfg.alpha);
    append_int(cfg.batch_size);
    append_int(cfg.epochs);
    append_int(cfg.context_length);
    return fnv1a64(bytes);
}

GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const std::vector<LabeledEmbedding>& train_set,
                             const std::vector<LabeledEmbedding>& val_set,
                             const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                             std::optional<PromptSpec> prompt, std::uint64_t base_seed,
                             bool ablation_random_names) {
    if (grid.empty()) throw ConfigError("grid_search: empty hyperparameter grid");
    if (val_set.empty()) throw ConfigError("grid_search: empty validation set");

    GridSearchResult out;
    bool have_best = false;
    for (const auto& cfg : grid) {
        TrainConfig point = cfg;
        point.seed = mix_seed(base_seed, config_fingerprint(cfg));
        const TrainResult res =
            train_run(train_set, &val_set, point, enc, classes, prompt, ablation_random_names);
        GridPoint gp;
        gp.config = point;
        gp.selected_epoch = res.selected_epoch;
        const auto& rec = res.history.epochs[static_cast<std::size_t>(res.selected_epoch - 1)];
        gp.val_accuracy = rec.val_accuracy
                              ? *rec.val_accuracy
                              : head_accuracy(build_head(enc, classes, res.selected), val_set);
        out.points.push_back(gp);
        if (!have_best || gp.val_accuracy > out.best_val_accuracy) {
            have_best = true;
            out.best_config = point;
            out.best_val_accuracy = gp.val_accuracy;
        }
    }
    return out;
}

}  // namespace nametune
