#include "nametune/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nametune/fileutil.hpp"

namespace nametune {

namespace {

// Stream tags keeping the protocol's rng uses independent of each other.
constexpr std::uint64_t kTagSelectionSupport = 0x73656C5F73757070ULL;
constexpr std::uint64_t kTagSelectionEpisode = 0x73656C5F65706973ULL;
constexpr std::uint64_t kTagSeedSupport = 0x736565645F737570ULL;
constexpr std::uint64_t kTagSeedEpisode = 0x736565645F657069ULL;
constexpr std::uint64_t kTagSeedTrain = 0x736565645F747261ULL;

std::vector<std::size_t> sample_without_replacement(std::size_t pool, std::size_t k,
                                                    SeededRng& rng) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j =
            i + rng.uniform_int(static_cast<std::uint32_t>(pool - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

std::map<int, std::vector<const ProtoItem*>> group_by_label(const std::vector<ProtoItem>& items) {
    std::map<int, std::vector<const ProtoItem*>> out;
    for (const auto& item : items) out[item.label].push_back(&item);
    return out;
}

// k-shot support over the full class set, global labels, class-ascending order.
std::vector<LabeledEmbedding> sample_full_support(
    const std::map<int, std::vector<const ProtoItem*>>& by_class, std::size_t n_classes, int k,
    SeededRng& rng) {
    std::vector<LabeledEmbedding> support;
    support.reserve(n_classes * static_cast<std::size_t>(k));
    for (std::size_t c = 0; c < n_classes; ++c) {
        const auto it = by_class.find(static_cast<int>(c));
        const std::size_t have = it == by_class.end() ? 0 : it->second.size();
        if (have < static_cast<std::size_t>(k))
            throw SamplingError("support sampling: class " + std::to_string(c) + " has " +
                                std::to_string(have) + " train items, need k=" + std::to_string(k));
        for (std::size_t pick : sample_without_replacement(have, static_cast<std::size_t>(k), rng))
            support.push_back({it->second[pick]->embedding, static_cast<int>(c)});
    }
    return support;
}

std::vector<LabeledEmbedding> to_labeled(const std::vector<ProtoItem>& items) {
    std::vector<LabeledEmbedding> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back({item.embedding, item.label});
    return out;
}

std::vector<std::vector<Vector>> support_by_class(std::span<const LabeledEmbedding> support,
                                                  std::size_t n_classes) {
    std::vector<std::vector<Vector>> out(n_classes);
    for (const auto& item : support) out[static_cast<std::size_t>(item.label)].push_back(item.embedding);
    return out;
}

nlohmann::ordered_json train_config_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["method"] = to_string(cfg.method);
    j["optimizer"] = to_string(cfg.optimizer);
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["alpha"] = cfg.alpha;
    j["context_length"] = cfg.context_length;
    j["checkpoint_policy"] = to_string(cfg.checkpoint_policy);
    return j;
}

}  // namespace

std::string to_string(Paradigm p) {
    return p == Paradigm::traditional ? "traditional" : "meta_learning";
}

Paradigm paradigm_from_string(const std::string& s) {
    if (s == "traditional") return Paradigm::traditional;
    if (s == "meta_learning" || s == "meta-learning") return Paradigm::meta_learning;
    throw ConfigError("unknown paradigm '" + s + "' (valid: traditional, meta_learning)");
}

std::string to_string(ProtocolMethod m) {
    switch (m) {
        case ProtocolMethod::zero_shot: return "zero-shot";
        case ProtocolMethod::name_tuning: return "name-tuning";
        case ProtocolMethod::coop: return "coop";
        case ProtocolMethod::coop_csc: return "coop-csc";
        case ProtocolMethod::cona: return "cona";
        case ProtocolMethod::linear_probe: return "linear-probe";
        case ProtocolMethod::vl_prototype: return "vl-prototype";
    }
    return "zero-shot";
}

ProtocolMethod protocol_method_from_string(const std::string& s) {
    if (s == "zero-shot" || s == "zero_shot") return ProtocolMethod::zero_shot;
    if (s == "name-tuning" || s == "name_tuning") return ProtocolMethod::name_tuning;
    if (s == "coop") return ProtocolMethod::coop;
    if (s == "coop-csc" || s == "coop_csc") return ProtocolMethod::coop_csc;
    if (s == "cona") return ProtocolMethod::cona;
    if (s == "linear-probe" || s == "linear_probe") return ProtocolMethod::linear_probe;
    if (s == "vl-prototype" || s == "vl_prototype") return ProtocolMethod::vl_prototype;
    throw ConfigError("unknown method '" + s + "'");
}

bool is_tune_method(ProtocolMethod m) {
    return m == ProtocolMethod::name_tuning || m == ProtocolMethod::coop ||
           m == ProtocolMethod::coop_csc || m == ProtocolMethod::cona;
}

Method tune_method(ProtocolMethod m) {
    switch (m) {
        case ProtocolMethod::name_tuning: return Method::name_tuning;
        case ProtocolMethod::coop: return Method::coop;
        case ProtocolMethod::coop_csc: return Method::coop_csc;
        case ProtocolMethod::cona: return Method::cona;
        default: throw ConfigError("not a text-tuning method: " + to_string(m));
    }
}

const std::vector<int>& DatasetSplit::phase_classes(Phase phase) const {
    switch (phase) {
        case Phase::train: return meta_train_classes;
        case Phase::val: return meta_val_classes;
        case Phase::test: return meta_test_classes;
    }
    return meta_train_classes;
}

void DatasetSplit::validate(std::size_t n_classes) const {
    if (paradigm == Paradigm::traditional) {
        std::set<std::string> ids;
        std::set<int> train_labels, val_labels, test_labels;
        const auto check = [&](const std::vector<ProtoItem>& items, std::set<int>& labels,
                               const char* name) {
            for (const auto& item : items) {
                if (item.label < 0 || static_cast<std::size_t>(item.label) >= n_classes)
                    throw IntegrityError(std::string("split ") + name + ": label out of range for '" +
                                         item.id + "'");
                if (!ids.insert(item.id).second)
                    throw IntegrityError("split: duplicate item id '" + item.id + "'");
                labels.insert(item.label);
            }
        };
        check(train, train_labels, "train");
        check(val, val_labels, "val");
        check(test, test_labels, "test");
        if (train_labels != test_labels || (!val.empty() && val_labels != train_labels))
            throw IntegrityError("traditional split: class sets differ across train/val/test");
        return;
    }
    std::set<int> seen;
    for (const auto* phase : {&meta_train_classes, &meta_val_classes, &meta_test_classes}) {
        for (int c : *phase) {
            if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
                throw IntegrityError("meta split: class id out of range: " + std::to_string(c));
            if (!seen.insert(c).second)
                throw IntegrityError("meta split: class " + std::to_string(c) +
                                     " appears in more than one phase");
        }
    }
    std::set<std::string> ids;
    for (const auto& [label, items] : items_by_class) {
        if (seen.find(label) == seen.end())
            throw IntegrityError("meta split: items for class " + std::to_string(label) +
                                 " outside all phases");
        for (const auto& item : items) {
            if (item.label != label)
                throw IntegrityError("meta split: item '" + item.id + "' filed under wrong class");
            if (!ids.insert(item.id).second)
                throw IntegrityError("meta split: duplicate item id '" + item.id + "'");
        }
    }
}

Episode sample_episode(const DatasetSplit& split, Phase phase, int n, int k, SeededRng& rng,
                       int query_per_class) {
    if (n < 1 || k < 1) throw ConfigError("sample_episode: n and k must be >= 1");
    Episode ep;
    ep.n_way = n;
    ep.k_shot = k;

    if (split.paradigm == Paradigm::meta_learning) {
        const auto& phase_ids = split.phase_classes(phase);
        std::vector<int> eligible;
        int deficient = -1;
        std::size_t deficient_count = 0;
        for (int c : phase_ids) {
            const auto it = split.items_by_class.find(c);
            const std::size_t have = it == split.items_by_class.end() ? 0 : it->second.size();
            if (have >= static_cast<std::size_t>(k) + 1) {
                eligible.push_back(c);
            } else if (deficient < 0) {
                deficient = c;
                deficient_count = have;
            }
        }
        if (eligible.size() < static_cast<std::size_t>(n)) {
            if (deficient >= 0)
                throw SamplingError("sample_episode: class " + std::to_string(deficient) + " has " +
                                    std::to_string(deficient_count) + " items, need k+1=" +
                                    std::to_string(k + 1));
            throw SamplingError("sample_episode: phase has " + std::to_string(eligible.size()) +
                                " classes, need n=" + std::to_string(n));
        }
        for (std::size_t pick :
             sample_without_replacement(eligible.size(), static_cast<std::size_t>(n), rng))
            ep.class_ids.push_back(eligible[pick]);
        std::sort(ep.class_ids.begin(), ep.class_ids.end());

        for (std::size_t local = 0; local < ep.class_ids.size(); ++local) {
            const auto& pool = split.items_by_class.at(ep.class_ids[local]);
            auto picks = sample_without_replacement(pool.size(), pool.size(), rng);
            for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
                const ProtoItem& item = pool[picks[i]];
                ep.support.push_back({item.embedding, static_cast<int>(local)});
                ep.support_ids.push_back(item.id);
            }
            const std::size_t q = std::min<std::size_t>(pool.size() - static_cast<std::size_t>(k),
                                                        static_cast<std::size_t>(query_per_class));
            for (std::size_t i = 0; i < q; ++i) {
                const ProtoItem& item = pool[picks[static_cast<std::size_t>(k) + i]];
                ep.query.push_back({item.embedding, static_cast<int>(local)});
                ep.query_ids.push_back(item.id);
            }
        }
        return ep;
    }

    // traditional: support subsamples the train split, query is the
    // designated test items of the sampled classes
    const auto train_by_class = group_by_label(split.train);
    const auto test_by_class = group_by_label(split.test);
    std::vector<int> eligible;
    int deficient = -1;
    std::string deficiency;
    std::set<int> all_labels;
    for (const auto& [c, items] : train_by_class) all_labels.insert(c);
    for (int c : all_labels) {
        const auto train_it = train_by_class.find(c);
        const auto test_it = test_by_class.find(c);
        const std::size_t train_have = train_it == train_by_class.end() ? 0 : train_it->second.size();
        const std::size_t test_have = test_it == test_by_class.end() ? 0 : test_it->second.size();
        if (train_have >= static_cast<std::size_t>(k) && test_have >= 1) {
            eligible.push_back(c);
        } else if (deficient < 0) {
            deficient = c;
            deficiency = "class " + std::to_string(c) + " has " + std::to_string(train_have) +
                         " train / " + std::to_string(test_have) + " test items";
        }
    }
    if (eligible.size() < static_cast<std::size_t>(n)) {
        if (deficient >= 0) throw SamplingError("sample_episode: " + deficiency);
        throw SamplingError("sample_episode: split has " + std::to_string(eligible.size()) +
                            " classes, need n=" + std::to_string(n));
    }
    for (std::size_t pick :
         sample_without_replacement(eligible.size(), static_cast<std::size_t>(n), rng))
        ep.class_ids.push_back(eligible[pick]);
    std::sort(ep.class_ids.begin(), ep.class_ids.end());

    for (std::size_t local = 0; local < ep.class_ids.size(); ++local) {
        const auto& pool = train_by_class.at(ep.class_ids[local]);
        for (std::size_t pick :
             sample_without_replacement(pool.size(), static_cast<std::size_t>(k), rng)) {
            ep.support.push_back({pool[pick]->embedding, static_cast<int>(local)});
            ep.support_ids.push_back(pool[pick]->id);
        }
        for (const ProtoItem* item : test_by_class.at(ep.class_ids[local])) {
            ep.query.push_back({item->embedding, static_cast<int>(local)});
            ep.query_ids.push_back(item->id);
        }
    }
    return ep;
}

std::vector<ClassEntry> episode_class_entries(const std::vector<ClassEntry>& classes,
                                              const Episode& episode) {
    std::vector<ClassEntry> out;
    out.reserve(episode.class_ids.size());
    for (std::size_t local = 0; local < episode.class_ids.size(); ++local) {
        ClassEntry entry = classes.at(static_cast<std::size_t>(episode.class_ids[local]));
        entry.class_id = static_cast<int>(local);
        out.push_back(std::move(entry));
    }
    return out;
}

double evaluate(const ClassifierHead& head, std::span<const LabeledEmbedding> query) {
    return head_accuracy(head, query);
}

double evaluate(const TextParameterSet& params, const FrozenDualEncoder& enc,
                const std::vector<ClassEntry>& classes, std::span<const LabeledEmbedding> query) {
    return head_accuracy(build_head(enc, classes, params), query);
}

void aggregate_run_record(RunRecord& record) {
    if (record.seeds.size() != record.per_seed_accuracy.size())
        throw IntegrityError("run record: seed/accuracy count mismatch");
    const std::size_t n = record.seeds.size();
    if (n == 0) throw ConfigError("run record: no seeds");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return record.seeds[a] < record.seeds[b];
    });
    double sum = 0.0;
    for (std::size_t i : order) sum += record.per_seed_accuracy[i];
    record.mean = sum / static_cast<double>(n);
    if (n < 2) {
        record.stddev = 0.0;
        return;
    }
    double ss = 0.0;
    for (std::size_t i : order) {
        const double d = record.per_seed_accuracy[i] - record.mean;
        ss += d * d;
    }
    record.stddev = std::sqrt(ss / static_cast<double>(n - 1));
}

nlohmann::ordered_json run_record_to_json(const RunRecord& record) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["method"] = record.method;
    j["paradigm"] = record.paradigm;
    j["config"] = record.config;
    j["chosen_hyperparameters"] = record.chosen_hyperparameters;
    j["seeds"] = record.seeds;
    j["per_seed_accuracy"] = record.per_seed_accuracy;
    j["mean"] = record.mean;
    j["stddev"] = record.stddev;
    j["ablation_flags"] = record.ablation_flags;
    return j;
}

RunRecord run_record_from_json(const nlohmann::ordered_json& j) {
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw ParseError("run record: missing or unsupported schema_version");
    RunRecord r;
    r.method = j.at("method").get<std::string>();
    r.paradigm = j.at("paradigm").get<std::string>();
    r.config = j.at("config");
    r.chosen_hyperparameters = j.at("chosen_hyperparameters");
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.per_seed_accuracy = j.at("per_seed_accuracy").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.stddev = j.at("stddev").get<double>();
    r.ablation_flags = j.at("ablation_flags");
    return r;
}

void save_run_record(const std::string& path, const RunRecord& record) {
    atomic_write_file(path, run_record_to_json(record).dump(2) + "\n");
}

RunRecord load_run_record(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("run record " + path + ": " + e.what());
    }
    return run_record_from_json(j);
}

std::vector<std::uint64_t> default_seeds(Paradigm paradigm, ProtocolMethod method) {
    std::size_t count = paradigm == Paradigm::traditional ? 4 : 20;
    if (method == ProtocolMethod::linear_probe)
        count = paradigm == Paradigm::traditional ? 5 : 100;
    else if (method == ProtocolMethod::vl_prototype)
        count = paradigm == Paradigm::traditional ? 32 : 1000;
    std::vector<std::uint64_t> seeds(count);
    std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
    return seeds;
}

namespace {

struct SelectionOutcome {
    nlohmann::ordered_json chosen;
    TrainConfig best_cfg;        // tune methods
    double best_scalar = 0.0;    // lambda / text weight
};

ClassifierHead reference_head(const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                              const ProtocolPlan& plan) {
    if (!plan.ensemble_templates.empty()) {
        std::vector<PromptSpec> prompts;
        prompts.reserve(plan.ensemble_templates.size());
        for (const auto& t : plan.ensemble_templates) prompts.push_back(make_prompt(enc, t));
        return ensemble_head(enc, prompts, classes);
    }
    return build_head(enc, make_prompt(enc, plan.prompt_template), classes);
}

double vl_accuracy(const ClassifierHead& head, std::span<const LabeledEmbedding> support,
                   std::span<const LabeledEmbedding> query, double w_t) {
    const auto model = vl_prototype_build(head, support_by_class(support, head.size()), w_t);
    std::size_t correct = 0;
    for (const auto& item : query)
        if (vl_prototype_predict(model, item.embedding) == item.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(query.size());
}

double probe_accuracy(std::span<const LabeledEmbedding> support,
                      std::span<const LabeledEmbedding> query, int n_classes, double lambda) {
    const auto model = linear_probe_fit(support, n_classes, lambda);
    std::size_t correct = 0;
    for (const auto& item : query)
        if (linear_probe_predict(model, item.embedding) == item.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(query.size());
}

}  // namespace

RunRecord run_protocol(const DatasetSplit& split, const ProtocolPlan& plan,
                       const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                       const ArtifactSink& sink) {
    validate_class_set(classes);
    split.validate(classes.size());
    if (split.paradigm != plan.paradigm)
        throw ConfigError("run_protocol: plan paradigm " + to_string(plan.paradigm) +
                          " does not match split paradigm " + to_string(split.paradigm));

    RunRecord record;
    record.method = to_string(plan.method);
    record.paradigm = to_string(plan.paradigm);
    record.seeds = plan.seeds.empty() ? default_seeds(plan.paradigm, plan.method) : plan.seeds;
    record.ablation_flags = {
        {"random_name_init", plan.ablation_random_names},
        {"regularization_disabled", plan.ablation_random_names},
    };

    nlohmann::ordered_json cfg;
    cfg["paradigm"] = record.paradigm;
    cfg["method"] = record.method;
    cfg["n_way"] = plan.n_way;
    cfg["k_shot"] = plan.k_shot;
    cfg["query_per_class"] = plan.query_per_class;
    cfg["selection_episodes"] = plan.selection_episodes;
    cfg["prompt"] = plan.prompt_template;
    if (!plan.ensemble_templates.empty()) cfg["ensemble_prompts"] = plan.ensemble_templates;
    cfg["base_seed"] = plan.base_seed;
    cfg["seeds"] = record.seeds;
    record.config = cfg;

    const bool meta = plan.paradigm == Paradigm::meta_learning;
    std::optional<PromptSpec> prompt;
    if (plan.method == ProtocolMethod::name_tuning)
        prompt = make_prompt(enc, plan.prompt_template);

    // ---- hyperparameter selection, done once and reused across seeds ----
    SelectionOutcome selection;
    if (is_tune_method(plan.method)) {
        const Method method = tune_method(plan.method);
        std::vector<TrainConfig> grid =
            plan.grid_override ? *plan.grid_override
                               : default_grid(method, meta ? CheckpointPolicy::final_epoch
                                                           : CheckpointPolicy::best_validation);
        for (auto& g : grid) g.method = method;

        if (meta) {
            // score each grid point on shared meta-validation episodes
            std::vector<Episode> sel_episodes;
            for (int e = 0; e < plan.selection_episodes; ++e) {
                SeededRng ep_rng(mix_seed(mix_seed(plan.base_seed, kTagSelectionEpisode),
                                          static_cast<std::uint64_t>(e)));
                sel_episodes.push_back(sample_episode(split, Phase::val, plan.n_way, plan.k_shot,
                                                      ep_rng, plan.query_per_class));
            }
            bool have_best = false;
            double best_acc = 0.0;
            for (const auto& point : grid) {
                double acc_sum = 0.0;
                for (std::size_t e = 0; e < sel_episodes.size(); ++e) {
                    const auto& ep = sel_episodes[e];
                    const auto ep_classes = episode_class_entries(classes, ep);
                    TrainConfig run_cfg = point;
                    run_cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
                    run_cfg.seed = mix_seed(mix_seed(plan.base_seed, static_cast<std::uint64_t>(e)),
                                            config_fingerprint(point));
                    const auto res = train_run(ep.support, nullptr, run_cfg, enc, ep_classes,
                                               prompt, plan.ablation_random_names);
                    acc_sum += evaluate(res.selected, enc, ep_classes, ep.query);
                }
                const double acc = acc_sum / static_cast<double>(sel_episodes.size());
                if (!have_best || acc > best_acc) {
                    have_best = true;
                    best_acc = acc;
                    selection.best_cfg = point;
                }
            }
        } else {
            SeededRng sel_rng(mix_seed(plan.base_seed, kTagSelectionSupport));
            const auto support =
                sample_full_support(group_by_label(split.train), classes.size(), plan.k_shot, sel_rng);
            const auto val = to_labeled(split.val);
            const auto gs = grid_search(grid, support, val, enc, classes, prompt, plan.base_seed,
                                        plan.ablation_random_names);
            selection.best_cfg = gs.best_config;
        }
        selection.chosen = train_config_json(selection.best_cfg);
    } else if (plan.method == ProtocolMethod::linear_probe ||
               plan.method == ProtocolMethod::vl_prototype) {
        const bool probe = plan.method == ProtocolMethod::linear_probe;
        const auto grid = probe ? geometric_grid(1e-6, 1e6, plan.lambda_grid_points)
                                : geometric_grid(1e-2, 1e2, plan.text_weight_grid_points);
        bool have_best = false;
        double best_acc = 0.0;
        if (meta) {
            std::vector<Episode> sel_episodes;
            for (int e = 0; e < plan.selection_episodes; ++e) {
                SeededRng ep_rng(mix_seed(mix_seed(plan.base_seed, kTagSelectionEpisode),
                                          static_cast<std::uint64_t>(e)));
                sel_episodes.push_back(sample_episode(split, Phase::val, plan.n_way, plan.k_shot,
                                                      ep_rng, plan.query_per_class));
            }
            for (double value : grid) {
                double acc_sum = 0.0;
                for (const auto& ep : sel_episodes) {
                    if (probe) {
                        acc_sum += probe_accuracy(ep.support, ep.query, ep.n_way, value);
                    } else {
                        const auto ep_classes = episode_class_entries(classes, ep);
                        acc_sum += vl_accuracy(reference_head(enc, ep_classes, plan), ep.support,
                                               ep.query, value);
                    }
                }
                const double acc = acc_sum / static_cast<double>(sel_episodes.size());
                if (!have_best || acc > best_acc) {
                    have_best = true;
                    best_acc = acc;
                    selection.best_scalar = value;
                }
            }
        } else {
            SeededRng sel_rng(mix_seed(plan.base_seed, kTagSelectionSupport));
            const auto support =
                sample_full_support(group_by_label(split.train), classes.size(), plan.k_shot, sel_rng);
            const auto val = to_labeled(split.val);
            const auto head = probe ? ClassifierHead{} : reference_head(enc, classes, plan);
            for (double value : grid) {
                const double acc = probe
                                       ? probe_accuracy(support, val, static_cast<int>(classes.size()), value)
                                       : vl_accuracy(head, support, val, value);
                if (!have_best || acc > best_acc) {
                    have_best = true;
                    best_acc = acc;
                    selection.best_scalar = value;
                }
            }
        }
        selection.chosen[probe ? "lambda" : "text_weight"] = selection.best_scalar;
    } else {
        selection.chosen = nlohmann::ordered_json::object();
    }
    record.chosen_hyperparameters = selection.chosen;

    // ---- per-seed evaluation ----
    record.per_seed_accuracy.reserve(record.seeds.size());
    for (std::size_t seed_index = 0; seed_index < record.seeds.size(); ++seed_index) {
        const std::uint64_t seed = record.seeds[seed_index];
        double acc = 0.0;
        if (meta) {
            SeededRng ep_rng(mix_seed(seed, kTagSeedEpisode));
            const Episode ep = sample_episode(split, Phase::test, plan.n_way, plan.k_shot, ep_rng,
                                              plan.query_per_class);
            const auto ep_classes = episode_class_entries(classes, ep);
            switch (plan.method) {
                case ProtocolMethod::zero_shot:
                    acc = evaluate(reference_head(enc, ep_classes, plan), ep.query);
                    break;
                case ProtocolMethod::linear_probe:
                    acc = probe_accuracy(ep.support, ep.query, ep.n_way, selection.best_scalar);
                    break;
                case ProtocolMethod::vl_prototype:
                    acc = vl_accuracy(reference_head(enc, ep_classes, plan), ep.support, ep.query,
                                      selection.best_scalar);
                    break;
                default: {
                    TrainConfig run_cfg = selection.best_cfg;
                    run_cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
                    run_cfg.seed = mix_seed(seed, kTagSeedTrain);
                    const auto res = train_run(ep.support, nullptr, run_cfg, enc, ep_classes,
                                               prompt, plan.ablation_random_names);
                    acc = evaluate(res.selected, enc, ep_classes, ep.query);
                    if (sink)
                        sink(SeedArtifacts{seed, seed_index, run_cfg.seed, &res.history,
                                           &res.selected, res.selected_epoch});
                }
            }
        } else {
            const auto test = to_labeled(split.test);
            switch (plan.method) {
                case ProtocolMethod::zero_shot:
                    acc = evaluate(reference_head(enc, classes, plan), test);
                    break;
                case ProtocolMethod::linear_probe: {
                    SeededRng rng(mix_seed(seed, kTagSeedSupport));
                    const auto support = sample_full_support(group_by_label(split.train),
                                                             classes.size(), plan.k_shot, rng);
                    acc = probe_accuracy(support, test, static_cast<int>(classes.size()),
                                         selection.best_scalar);
                    break;
                }
                case ProtocolMethod::vl_prototype: {
                    SeededRng rng(mix_seed(seed, kTagSeedSupport));
                    const auto support = sample_full_support(group_by_label(split.train),
                                                             classes.size(), plan.k_shot, rng);
                    acc = vl_accuracy(reference_head(enc, classes, plan), support, test,
                                      selection.best_scalar);
                    break;
                }
                default: {
                    SeededRng rng(mix_seed(seed, kTagSeedSupport));
                    const auto support = sample_full_support(group_by_label(split.train),
                                                             classes.size(), plan.k_shot, rng);
                    const auto val = to_labeled(split.val);
                    TrainConfig run_cfg = selection.best_cfg;
                    run_cfg.seed = mix_seed(seed, kTagSeedTrain);
                    const auto res = train_run(support, &val, run_cfg, enc, classes, prompt,
                                               plan.ablation_random_names);
                    acc = evaluate(res.selected, enc, classes, test);
                    if (sink)
                        sink(SeedArtifacts{seed, seed_index, run_cfg.seed, &res.history,
                                           &res.selected, res.selected_epoch});
                }
            }
        }
        record.per_seed_accuracy.push_back(acc);
    }

    aggregate_run_record(record);
    return record;
}

}  // namespace nametune
