#include "nametune/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nametune/fileutil.hpp"

namespace nametune {

namespace {

using ojson = nlohmann::ordered_json;

void reject_unknown_keys(const ojson& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (known.find(key) == known.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
}

ojson row_to_json(const ManifestRow& row) {
    ojson media;
    if (row.cache_backed) {
        media["key"] = row.media.key;
    } else {
        media["path"] = row.media.path;
        media["frames"] = row.media.frame_count;
    }
    ojson j;
    j["id"] = row.id;
    j["class_name"] = row.class_name;
    j["split"] = row.split_tag;
    j["media"] = media;
    return j;
}

ManifestRow row_from_json(const ojson& j, int line_no) {
    const std::string where = "manifest line " + std::to_string(line_no);
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    reject_unknown_keys(j, {"id", "class_name", "split", "media"}, where);
    ManifestRow row;
    try {
        row.id = j.at("id").get<std::string>();
        row.class_name = j.at("class_name").get<std::string>();
        row.split_tag = j.at("split").get<std::string>();
        const auto& media = j.at("media");
        if (media.contains("key")) {
            reject_unknown_keys(media, {"key"}, where + " media");
            row.cache_backed = true;
            row.media.key = media.at("key").get<std::string>();
        } else {
            reject_unknown_keys(media, {"path", "frames"}, where + " media");
            row.media.path = media.at("path").get<std::string>();
            row.media.frame_count = media.at("frames").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
    if (row.id.empty()) throw ParseError(where + ": empty id");
    if (row.class_name.empty()) throw ParseError(where + ": empty class_name");
    row.media.key = row.cache_backed ? row.media.key : row.id;
    return row;
}

}  // namespace

Dataset load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open " + path);
    Dataset ds;
    std::map<std::string, int> class_ids;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        ManifestRow row = row_from_json(j, line_no);
        if (!seen_ids.insert(row.id).second)
            throw IntegrityError("manifest: duplicate id '" + row.id + "' at line " +
                                 std::to_string(line_no));
        auto [it, inserted] =
            class_ids.emplace(row.class_name, static_cast<int>(ds.class_names.size()));
        if (inserted) ds.class_names.push_back(row.class_name);
        row.class_id = it->second;
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

void save_manifest(const std::string& path, const Dataset& dataset) {
    std::string out;
    for (const auto& row : dataset.rows) {
        out += row_to_json(row).dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

std::vector<ClassEntry> make_class_entries(const FrozenDualEncoder& enc,
                                           const std::vector<std::string>& class_names) {
    std::vector<ClassEntry> out;
    out.reserve(class_names.size());
    for (std::size_t i = 0; i < class_names.size(); ++i)
        out.push_back(make_class_entry(static_cast<int>(i), class_names[i],
                                       enc.tokenize(class_names[i])));
    return out;
}

void build_cache(const Dataset& dataset, const FrozenDualEncoder& enc, const std::string& out_path) {
    std::map<std::string, Vector> entries;
    std::vector<std::string> failures;
    for (const auto& row : dataset.rows) {
        try {
            if (row.cache_backed)
                throw ConfigError("media is a cache key, nothing to encode");
            entries[row.id] = encode_video(enc, row.media);
        } catch (const std::exception& e) {
            failures.push_back(row.id + ": " + e.what());
        }
    }
    if (!failures.empty()) {
        std::string msg = "build_cache: " + std::to_string(failures.size()) + " item(s) failed:";
        for (const auto& f : failures) msg += "\n  " + f;
        throw IoError(msg);  // partial caches are never written
    }
    write_feature_cache(out_path, entries, enc.space().d_embed);
}

FeatureSource cache_feature_source(std::shared_ptr<const FeatureCacheEncoder> cache) {
    return [cache](const ManifestRow& row) { return cache->lookup(row.media.key); };
}

FeatureSource encoder_feature_source(std::shared_ptr<const FrozenDualEncoder> enc) {
    return [enc](const ManifestRow& row) {
        if (row.cache_backed)
            throw ConfigError("item '" + row.id + "' is cache-backed but no cache was given");
        return encode_video(*enc, row.media);
    };
}

DatasetSplit build_split(const Dataset& dataset, Paradigm paradigm, const FeatureSource& features) {
    DatasetSplit split;
    split.paradigm = paradigm;
    if (paradigm == Paradigm::traditional) {
        for (const auto& row : dataset.rows) {
            ProtoItem item{row.id, row.class_id, features(row)};
            if (row.split_tag == "train")
                split.train.push_back(std::move(item));
            else if (row.split_tag == "val")
                split.val.push_back(std::move(item));
            else if (row.split_tag == "test")
                split.test.push_back(std::move(item));
            else
                throw ConfigError("item '" + row.id + "': split tag '" + row.split_tag +
                                  "' invalid for the traditional paradigm");
        }
        return split;
    }
    std::map<int, std::string> class_phase;
    for (const auto& row : dataset.rows) {
        if (row.split_tag != "meta_train" && row.split_tag != "meta_val" &&
            row.split_tag != "meta_test")
            throw ConfigError("item '" + row.id + "': split tag '" + row.split_tag +
                              "' invalid for the meta-learning paradigm");
        auto [it, inserted] = class_phase.emplace(row.class_id, row.split_tag);
        if (!inserted && it->second != row.split_tag)
            throw IntegrityError("class '" + row.class_name +
                                 "' has items in more than one meta phase");
        split.items_by_class[row.class_id].push_back(ProtoItem{row.id, row.class_id, features(row)});
    }
    for (const auto& [class_id, phase] : class_phase) {
        if (phase == "meta_train")
            split.meta_train_classes.push_back(class_id);
        else if (phase == "meta_val")
            split.meta_val_classes.push_back(class_id);
        else
            split.meta_test_classes.push_back(class_id);
    }
    return split;
}

std::unique_ptr<FrozenDualEncoder> make_encoder(const EncoderConfig& cfg) {
    if (cfg.type == "toy_transformer") {
        ToyTransformerConfig tc;
        tc.space = cfg.space;
        tc.depth = cfg.depth;
        tc.heads = cfg.heads;
        tc.ffn_hidden = cfg.ffn_hidden;
        tc.seed = cfg.seed;
        tc.frames_per_video = cfg.frames_per_video;
        tc.vocab_size = cfg.vocab_size;
        return std::make_unique<ToyTransformerEncoder>(tc);
    }
    if (cfg.type == "linear") {
        LinearEncoderConfig lc;
        lc.space = cfg.space;
        lc.seed = cfg.seed;
        lc.frames_per_video = cfg.frames_per_video;
        lc.vocab_size = cfg.vocab_size;
        return std::make_unique<LinearEncoder>(lc);
    }
    throw ConfigError("unknown encoder type '" + cfg.type + "' (valid: toy_transformer, linear)");
}

EncoderConfig parse_encoder_json(const ojson& j, const std::string& where) {
    reject_unknown_keys(j,
                        {"type", "seed", "d_token", "d_embed", "similarity", "temperature",
                         "max_seq_len", "depth", "heads", "ffn_hidden", "frames_per_video",
                         "vocab_size"},
                        where);
    EncoderConfig cfg;
    if (j.contains("type")) cfg.type = j.at("type").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("d_token")) cfg.space.d_token = j.at("d_token").get<int>();
    if (j.contains("d_embed")) cfg.space.d_embed = j.at("d_embed").get<int>();
    if (j.contains("similarity"))
        cfg.space.similarity = similarity_from_string(j.at("similarity").get<std::string>());
    if (j.contains("temperature")) cfg.space.temperature = j.at("temperature").get<double>();
    if (j.contains("max_seq_len")) cfg.space.max_seq_len = j.at("max_seq_len").get<int>();
    if (j.contains("depth")) cfg.depth = j.at("depth").get<int>();
    if (j.contains("heads")) cfg.heads = j.at("heads").get<int>();
    if (j.contains("ffn_hidden")) cfg.ffn_hidden = j.at("ffn_hidden").get<int>();
    if (j.contains("frames_per_video")) cfg.frames_per_video = j.at("frames_per_video").get<int>();
    if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.space.validate();
    return cfg;
}

namespace {

std::vector<TrainConfig> parse_grid_override(const ojson& j, Method method,
                                             CheckpointPolicy policy, const std::string& where) {
    reject_unknown_keys(j,
                        {"learning_rate", "alpha", "context_length", "epochs", "batch_size",
                         "optimizer", "checkpoint_policy"},
                        where);
    TrainConfig base = default_train_config(method);
    base.checkpoint_policy = policy;
    if (j.contains("epochs")) base.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
    if (j.contains("optimizer"))
        base.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    if (j.contains("checkpoint_policy"))
        base.checkpoint_policy =
            checkpoint_policy_from_string(j.at("checkpoint_policy").get<std::string>());

    const auto axis = [&](const char* key, double fallback) {
        std::vector<double> out;
        if (j.contains(key)) {
            for (const auto& v : j.at(key)) out.push_back(v.get<double>());
            if (out.empty()) throw ConfigError(where + ": empty axis '" + key + "'");
        } else {
            out.push_back(fallback);
        }
        return out;
    };
    const auto lrs = axis("learning_rate", base.learning_rate);
    const auto alphas = axis("alpha", base.alpha);
    std::vector<int> contexts;
    if (j.contains("context_length")) {
        for (const auto& v : j.at("context_length")) contexts.push_back(v.get<int>());
        if (contexts.empty()) throw ConfigError(where + ": empty axis 'context_length'");
    } else {
        contexts.push_back(base.context_length);
    }

    std::vector<TrainConfig> grid;
    for (int ctx : contexts)
        for (double lr : lrs)
            for (double alpha : alphas) {
                TrainConfig cfg = base;
                cfg.context_length = ctx;
                cfg.learning_rate = lr;
                cfg.alpha = alpha;
                grid.push_back(cfg);
            }
    return grid;
}

}  // namespace

RunConfigFile parse_run_config(const ojson& j, const std::string& origin) {
    reject_unknown_keys(j,
                        {"schema_version", "manifest", "visual_cache", "encoder", "method",
                         "paradigm", "n_way", "k_shot", "seeds", "base_seed", "prompt",
                         "ensemble_prompts", "query_per_class", "selection_episodes",
                         "ablation_random_names", "grid", "lambda_grid_points",
                         "text_weight_grid_points"},
                        origin);
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
        throw ConfigError(origin + ": unsupported schema_version");

    RunConfigFile cfg;
    cfg.raw = j;
    try {
        cfg.manifest_path = j.at("manifest").get<std::string>();
        if (j.contains("visual_cache"))
            cfg.visual_cache = j.at("visual_cache").get<std::string>();
        if (j.contains("encoder"))
            cfg.encoder = parse_encoder_json(j.at("encoder"), origin + " encoder");
        cfg.plan.method = protocol_method_from_string(j.at("method").get<std::string>());
        cfg.plan.paradigm = paradigm_from_string(j.at("paradigm").get<std::string>());
        if (j.contains("n_way")) cfg.plan.n_way = j.at("n_way").get<int>();
        if (j.contains("k_shot")) cfg.plan.k_shot = j.at("k_shot").get<int>();
        if (j.contains("seeds")) cfg.plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("base_seed")) cfg.plan.base_seed = j.at("base_seed").get<std::uint64_t>();
        if (j.contains("prompt")) cfg.plan.prompt_template = j.at("prompt").get<std::string>();
        if (j.contains("ensemble_prompts"))
            cfg.plan.ensemble_templates = j.at("ensemble_prompts").get<std::vector<std::string>>();
        if (j.contains("query_per_class"))
            cfg.plan.query_per_class = j.at("query_per_class").get<int>();
        if (j.contains("selection_episodes"))
            cfg.plan.selection_episodes = j.at("selection_episodes").get<int>();
        if (j.contains("ablation_random_names"))
            cfg.plan.ablation_random_names = j.at("ablation_random_names").get<bool>();
        if (j.contains("lambda_grid_points"))
            cfg.plan.lambda_grid_points = j.at("lambda_grid_points").get<int>();
        if (j.contains("text_weight_grid_points"))
            cfg.plan.text_weight_grid_points = j.at("text_weight_grid_points").get<int>();
        if (j.contains("grid")) {
            if (!is_tune_method(cfg.plan.method))
                throw ConfigError(origin + ": 'grid' is only valid for text-tuning methods");
            const Method m = tune_method(cfg.plan.method);
            const CheckpointPolicy policy = cfg.plan.paradigm == Paradigm::meta_learning
                                                ? CheckpointPolicy::final_epoch
                                                : CheckpointPolicy::best_validation;
            cfg.plan.grid_override = parse_grid_override(j.at("grid"), m, policy, origin + " grid");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }

    if (cfg.plan.n_way < 1) throw ConfigError(origin + ": n_way must be >= 1");
    if (cfg.plan.k_shot < 1) throw ConfigError(origin + ": k_shot must be >= 1");
    if (cfg.plan.query_per_class < 1) throw ConfigError(origin + ": query_per_class must be >= 1");
    if (cfg.plan.selection_episodes < 1)
        throw ConfigError(origin + ": selection_episodes must be >= 1");
    return cfg;
}

RunConfigFile load_run_config(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    ojson j;
    try {
        j = ojson::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
    return parse_run_config(j, "config " + path);
}

}  // namespace nametune
