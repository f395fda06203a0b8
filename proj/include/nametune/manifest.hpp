#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nametune/encoder.hpp"
#include "nametune/protocol.hpp"

namespace nametune {

// One dataset item. Media is either a path with a frame count or a key
// into a prebuilt feature cache.
struct ManifestRow {
    std::string id;
    std::string class_name;
    std::string split_tag;
    MediaRef media;
    bool cache_backed = false;
    int class_id = -1;  // assigned on load, first-appearance order
};

struct Dataset {
    std::vector<std::string> class_names;  // index == class id
    std::vector<ManifestRow> rows;
};

// Line-delimited JSON, one row per line:
//   {"id":..,"class_name":..,"split":..,"media":{"path":..,"frames":..}}
//   {"id":..,"class_name":..,"split":..,"media":{"key":..}}
Dataset load_manifest(const std::string& path);
void save_manifest(const std::string& path, const Dataset& dataset);

// Tokenized class entries for a loaded dataset.
std::vector<ClassEntry> make_class_entries(const FrozenDualEncoder& enc,
                                           const std::vector<std::string>& class_names);

// One cache entry per manifest id with the frame-averaged visual
// embedding. Idempotent; per-item failures are collected and no partial
// cache is written.
void build_cache(const Dataset& dataset, const FrozenDualEncoder& enc, const std::string& out_path);

// Resolves a manifest row to its visual embedding.
using FeatureSource = std::function<Vector(const ManifestRow&)>;

FeatureSource cache_feature_source(std::shared_ptr<const FeatureCacheEncoder> cache);
FeatureSource encoder_feature_source(std::shared_ptr<const FrozenDualEncoder> enc);

// Split tags: train/val/test (traditional), meta_train/meta_val/meta_test
// (meta-learning; all items of a class must share one phase).
DatasetSplit build_split(const Dataset& dataset, Paradigm paradigm, const FeatureSource& features);

struct EncoderConfig {
    std::string type = "toy_transformer";  // toy_transformer | linear
    std::uint64_t seed = 7;
    EmbeddingSpace space;
    int depth = 2;
    int heads = 2;
    int ffn_hidden = 32;
    int frames_per_video = 10;
    int vocab_size = 4096;
};

std::unique_ptr<FrozenDualEncoder> make_encoder(const EncoderConfig& cfg);

EncoderConfig parse_encoder_json(const nlohmann::ordered_json& j, const std::string& origin);

// Validated run configuration file; unknown keys are rejected.
struct RunConfigFile {
    std::string manifest_path;
    std::optional<std::string> visual_cache;
    EncoderConfig encoder;
    ProtocolPlan plan;
    nlohmann::ordered_json raw;  // resolved echo for artifacts
};

RunConfigFile load_run_config(const std::string& path);
RunConfigFile parse_run_config(const nlohmann::ordered_json& j, const std::string& origin);

}  // namespace nametune
