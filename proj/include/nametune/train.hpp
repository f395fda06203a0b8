#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nametune/textparams.hpp"

namespace nametune {

enum class OptimizerKind { sgd, adamw };
enum class CheckpointPolicy { best_validation, final_epoch };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(CheckpointPolicy p);
CheckpointPolicy checkpoint_policy_from_string(const std::string& s);

struct TrainConfig {
    Method method = Method::name_tuning;
    OptimizerKind optimizer = OptimizerKind::adamw;
    double learning_rate = 1e-4;
    int batch_size = 8;
    int epochs = 20;
    double alpha = 1.0;  // offset penalty strength
    int context_length = 0;
    CheckpointPolicy checkpoint_policy = CheckpointPolicy::best_validation;
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-method defaults: coop trains 50 epochs with SGD, name tuning and
// cona 20 epochs with AdamW, batch size 8 everywhere.
TrainConfig default_train_config(Method method);

// Hyperparameter grids, enumerated lexicographically over the declared
// axes (ties in grid search go to the earliest point):
//   name_tuning: lr {1e-5, 1e-4, 1e-3, 4e-3} x alpha {0.01, 0.1, 1, 10}
//   coop(+csc):  context {8, 16} x lr {6.25e-5, 5e-4, 2e-3, 4e-3}
//   cona:        alpha {1, 5, 10, 20}, lr fixed 1e-5, context 4
std::vector<TrainConfig> default_grid(Method method, CheckpointPolicy policy);

struct LabeledEmbedding {
    Vector embedding;
    int label = 0;
};

// -sum log p(y|x) over the batch plus alpha * parameter_l2(params).
// Under the random-name ablation the penalty is forced off.
double loss(const TextParameterSet& params, std::span<const LabeledEmbedding> batch,
            const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes, double alpha);

// One tensor of gradient per learnable tensor; shapes mirror the parameter
// set. Absent tensors stay empty.
struct GradientSet {
    Matrix shared_context;
    std::vector<Matrix> class_contexts;
    std::vector<Matrix> offsets;
};

GradientSet gradients(const TextParameterSet& params, std::span<const LabeledEmbedding> batch,
                      const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                      double alpha);

// SGD with momentum 0.9, or AdamW with betas (0.9, 0.999), eps 1e-8 and
// zero weight decay (the offset penalty is explicit in the objective).
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);
    void step(TextParameterSet& params, const GradientSet& grads);

private:
    void step_tensor(Matrix& param, const Matrix& grad, Matrix& m1, Matrix& m2);

    OptimizerKind kind_;
    double lr_;
    long steps_ = 0;
    GradientSet m1_, m2_;
    bool buffers_ready_ = false;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> val_accuracy;
    TextParameterSet snapshot;  // float32-quantized, reloads bit-exactly
};

struct CheckpointHistory {
    std::vector<EpochRecord> epochs;
};

struct TrainResult {
    TextParameterSet final_params;
    CheckpointHistory history;
    TextParameterSet selected;
    int selected_epoch = 0;  // 1-based
};

double head_accuracy(const ClassifierHead& head, std::span<const LabeledEmbedding> items);

TrainResult train_run(const std::vector<LabeledEmbedding>& train_set,
                      const std::vector<LabeledEmbedding>* val_set, const TrainConfig& cfg,
                      const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                      std::optional<PromptSpec> prompt = std::nullopt,
                      bool ablation_random_names = false);

// Content-addressed: duplicate grid points run with identical seeds, so
// deduplication cannot change the winner.
std::uint64_t config_fingerprint(const TrainConfig& cfg);

struct GridPoint {
    TrainConfig config;
    double val_accuracy = 0.0;
    int selected_epoch = 0;
};

struct GridSearchResult {
    TrainConfig best_config;
    double best_val_accuracy = 0.0;
    std::vector<GridPoint> points;
};

GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const std::vector<LabeledEmbedding>& train_set,
                             const std::vector<LabeledEmbedding>& val_set,
                             const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                             std::optional<PromptSpec> prompt, std::uint64_t base_seed,
                             bool ablation_random_names = false);

}  // namespace nametune
