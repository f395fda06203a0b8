#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nametune/baselines.hpp"
#include "nametune/train.hpp"

namespace nametune {

enum class Paradigm { traditional, meta_learning };
enum class Phase { train, val, test };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

// Everything run_protocol can evaluate, including the non-text-tuning
// baselines and the untrained zero-shot reference.
enum class ProtocolMethod { zero_shot, name_tuning, coop, coop_csc, cona, linear_probe, vl_prototype };

std::string to_string(ProtocolMethod m);
ProtocolMethod protocol_method_from_string(const std::string& s);
bool is_tune_method(ProtocolMethod m);
Method tune_method(ProtocolMethod m);  // throws unless is_tune_method

struct ProtoItem {
    std::string id;
    int label = 0;
    Vector embedding;
};

// Traditional: train/val/test item lists over one shared class set.
// Meta-learning: disjoint class partitions per phase, items pooled by class.
struct DatasetSplit {
    Paradigm paradigm = Paradigm::traditional;
    std::vector<ProtoItem> train, val, test;
    std::vector<int> meta_train_classes, meta_val_classes, meta_test_classes;
    std::map<int, std::vector<ProtoItem>> items_by_class;

    const std::vector<int>& phase_classes(Phase phase) const;
    void validate(std::size_t n_classes) const;
};

struct Episode {
    int n_way = 0;
    int k_shot = 0;
    std::vector<int> class_ids;  // global ids, ascending
    std::vector<LabeledEmbedding> support, query;  // episode-local labels 0..n-1
    std::vector<std::string> support_ids, query_ids;
};

// Uniform class sample without replacement, then uniform item sample per
// class. Meta episodes draw support and query from the same per-class pool
// (query capped at query_per_class); traditional episodes take support
// from the train items and the designated test items as query.
Episode sample_episode(const DatasetSplit& split, Phase phase, int n, int k, SeededRng& rng,
                       int query_per_class = 15);

// Episode-local class entries: the sampled classes re-numbered 0..n-1.
std::vector<ClassEntry> episode_class_entries(const std::vector<ClassEntry>& classes,
                                              const Episode& episode);

double evaluate(const ClassifierHead& head, std::span<const LabeledEmbedding> query);
double evaluate(const TextParameterSet& params, const FrozenDualEncoder& enc,
                const std::vector<ClassEntry>& classes, std::span<const LabeledEmbedding> query);

struct RunRecord {
    std::string method;
    std::string paradigm;
    nlohmann::ordered_json config;
    nlohmann::ordered_json chosen_hyperparameters;
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed_accuracy;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single seed
    nlohmann::ordered_json ablation_flags;
};

// Mean/std folded over seed-sorted pairs so aggregation is order-invariant.
void aggregate_run_record(RunRecord& record);

nlohmann::ordered_json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::ordered_json& j);
void save_run_record(const std::string& path, const RunRecord& record);
RunRecord load_run_record(const std::string& path);

struct ProtocolPlan {
    Paradigm paradigm = Paradigm::traditional;
    ProtocolMethod method = ProtocolMethod::zero_shot;
    int n_way = 5;   // meta episodes only; traditional runs are all-way
    int k_shot = 5;
    std::vector<std::uint64_t> seeds;  // empty -> paradigm/method default count
    std::uint64_t base_seed = 0;       // hyperparameter-selection stream
    int query_per_class = 15;
    int selection_episodes = 4;
    std::string prompt_template = "a video of {}";
    std::vector<std::string> ensemble_templates;  // zero-shot / vl-prototype
    bool ablation_random_names = false;
    std::optional<std::vector<TrainConfig>> grid_override;
    int lambda_grid_points = 96;       // linear probe sweep over [1e-6, 1e6]
    int text_weight_grid_points = 16;  // vl-prototype sweep over [1e-2, 1e2]
};

// Seed counts used when the plan leaves seeds empty: 4 traditional / 20
// meta for the text methods and zero-shot, 5/100 for the linear probe,
// 32/1000 for the vl-prototype.
std::vector<std::uint64_t> default_seeds(Paradigm paradigm, ProtocolMethod method);

// Per-seed training artifacts handed to the caller (checkpoint and run-log
// persistence live in the CLI layer). Only text-tuning runs produce these.
struct SeedArtifacts {
    std::uint64_t seed = 0;
    std::size_t seed_index = 0;
    std::uint64_t run_seed = 0;  // the TrainConfig seed actually used
    const CheckpointHistory* history = nullptr;
    const TextParameterSet* selected = nullptr;
    int selected_epoch = 0;
};
using ArtifactSink = std::function<void(const SeedArtifacts&)>;

// Hyperparameters are chosen once (validation split or meta-validation
// episodes) and reused across all evaluation seeds.
RunRecord run_protocol(const DatasetSplit& split, const ProtocolPlan& plan,
                       const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                       const ArtifactSink& sink = {});

}  // namespace nametune
