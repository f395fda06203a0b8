#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nametune/fileutil.hpp"
#include "nametune/manifest.hpp"
#include "nametune/protocol.hpp"
#include "nametune/toydata.hpp"

namespace fs = std::filesystem;
using namespace nametune;
using ojson = nlohmann::ordered_json;

namespace {

// --encoder accepts either "<type>[:seed]" or a path to a JSON object with
// the run-config encoder schema.
EncoderConfig parse_encoder_flag(const std::string& spec) {
    if (fs::exists(spec)) {
        ojson j;
        try {
            j = ojson::parse(read_file_bytes(spec));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("encoder file " + spec + ": " + e.what());
        }
        return parse_encoder_json(j, "encoder file " + spec);
    }
    EncoderConfig cfg;
    const auto colon = spec.find(':');
    cfg.type = spec.substr(0, colon == std::string::npos ? spec.size() : colon);
    if (colon != std::string::npos) cfg.seed = std::stoull(spec.substr(colon + 1));
    if (cfg.type != "toy_transformer" && cfg.type != "linear")
        throw ConfigError("unknown encoder '" + spec +
                          "' (use toy_transformer[:seed], linear[:seed], or a JSON file)");
    return cfg;
}

ojson encoder_echo(const EncoderConfig& cfg) {
    ojson j;
    j["type"] = cfg.type;
    j["seed"] = cfg.seed;
    j["d_token"] = cfg.space.d_token;
    j["d_embed"] = cfg.space.d_embed;
    j["similarity"] = to_string(cfg.space.similarity);
    j["temperature"] = cfg.space.temperature;
    j["max_seq_len"] = cfg.space.max_seq_len;
    j["frames_per_video"] = cfg.frames_per_video;
    return j;
}

DatasetSplit resolve_split(const Dataset& dataset, Paradigm paradigm,
                           const std::optional<std::string>& cache_path,
                           std::shared_ptr<const FrozenDualEncoder> enc) {
    FeatureSource source;
    if (cache_path) {
        auto cache = std::make_shared<FeatureCacheEncoder>(
            FeatureCacheEncoder::load(*cache_path, enc->space()));
        source = cache_feature_source(cache);
    } else {
        source = encoder_feature_source(enc);
    }
    return build_split(dataset, paradigm, source);
}

void write_run_outputs(const std::string& out_dir, const RunRecord& record,
                       const std::map<std::uint64_t, std::string>& checkpoint_paths) {
    save_run_record(out_dir + "/record.json", record);
    std::printf("%s  mean %.4f  std %.4f  (%zu seeds)\n", record.method.c_str(), record.mean,
                record.stddev, record.seeds.size());
    std::printf("wrote %s/record.json\n", out_dir.c_str());
    for (const auto& [seed, path] : checkpoint_paths)
        std::printf("wrote %s (seed %llu)\n", path.c_str(), (unsigned long long)seed);
}

int cmd_cache(const std::string& manifest_path, const std::string& encoder_spec,
              const std::string& out_path) {
    const Dataset dataset = load_manifest(manifest_path);
    const auto enc = make_encoder(parse_encoder_flag(encoder_spec));
    build_cache(dataset, *enc, out_path);
    std::printf("wrote %s (%zu entries, d_embed %d)\n", out_path.c_str(), dataset.rows.size(),
                enc->space().d_embed);
    return 0;
}

int cmd_zero_shot(const std::string& manifest_path, const std::optional<std::string>& cache_path,
                  const std::string& prompt, const std::vector<std::string>& ensemble,
                  const std::string& encoder_spec, const std::string& paradigm_name,
                  const std::optional<std::string>& out_path) {
    const Dataset dataset = load_manifest(manifest_path);
    std::shared_ptr<const FrozenDualEncoder> enc(make_encoder(parse_encoder_flag(encoder_spec)));
    const Paradigm paradigm = paradigm_from_string(paradigm_name);
    const DatasetSplit split = resolve_split(dataset, paradigm, cache_path, enc);
    const auto classes = make_class_entries(*enc, dataset.class_names);

    ProtocolPlan plan;
    plan.paradigm = paradigm;
    plan.method = ProtocolMethod::zero_shot;
    plan.prompt_template = prompt;
    plan.ensemble_templates = ensemble;
    plan.seeds = {0};

    RunRecord record = run_protocol(split, plan, *enc, classes);
    record.config["manifest"] = manifest_path;
    if (cache_path) record.config["visual_cache"] = *cache_path;
    record.config["encoder"] = encoder_echo(parse_encoder_flag(encoder_spec));
    std::printf("zero-shot accuracy: %.4f\n", record.mean);
    if (out_path) {
        save_run_record(*out_path, record);
        std::printf("wrote %s\n", out_path->c_str());
    }
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, bool baseline_only) {
    const RunConfigFile cfg = load_run_config(config_path);
    if (baseline_only && cfg.plan.method != ProtocolMethod::linear_probe &&
        cfg.plan.method != ProtocolMethod::vl_prototype)
        throw ConfigError("baseline: config method must be linear-probe or vl-prototype");
    if (!baseline_only && !is_tune_method(cfg.plan.method))
        throw ConfigError("tune: config method must be one of name-tuning, coop, coop-csc, cona");

    std::shared_ptr<const FrozenDualEncoder> enc(make_encoder(cfg.encoder));
    const Dataset dataset = load_manifest(cfg.manifest_path);
    const DatasetSplit split = resolve_split(dataset, cfg.plan.paradigm, cfg.visual_cache, enc);
    const auto classes = make_class_entries(*enc, dataset.class_names);

    fs::create_directories(out_dir);
    std::map<std::uint64_t, std::string> checkpoint_paths;
    ArtifactSink sink;
    if (!baseline_only) {
        sink = [&](const SeedArtifacts& art) {
            const std::string ckpt =
                out_dir + "/checkpoint-seed" + std::to_string(art.seed) + ".ntpc";
            save_checkpoint(ckpt, *art.selected, art.selected_epoch, art.run_seed);
            checkpoint_paths[art.seed] = ckpt;
            std::string log;
            for (const auto& rec : art.history->epochs) {
                ojson line;
                line["epoch"] = rec.epoch;
                line["loss"] = rec.train_loss;
                if (rec.val_accuracy) line["val_accuracy"] = *rec.val_accuracy;
                log += line.dump();
                log += '\n';
            }
            atomic_write_file(out_dir + "/train-seed" + std::to_string(art.seed) + ".log", log);
        };
    }

    RunRecord record = run_protocol(split, cfg.plan, *enc, classes, sink);
    record.config["config_file"] = cfg.raw;
    write_run_outputs(out_dir, record, checkpoint_paths);
    return 0;
}

int cmd_report(const std::string& runs_dir, const std::string& format) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("report: no .json run records under " + runs_dir);

    struct Cell {
        double mean, stddev;
        std::size_t seeds;
    };
    std::map<std::string, std::map<int, Cell>> table;  // method -> k_shot -> cell
    std::set<int> shots;
    for (const auto& file : files) {
        const RunRecord rec = load_run_record(file);
        const int k = rec.config.contains("k_shot") ? rec.config["k_shot"].get<int>() : 0;
        table[rec.method][k] = Cell{rec.mean, rec.stddev, rec.seeds.size()};
        shots.insert(k);
    }

    if (format == "json") {
        ojson rows = ojson::array();
        for (const auto& [method, cells] : table)
            for (const auto& [k, cell] : cells) {
                ojson row;
                row["method"] = method;
                row["k_shot"] = k;
                row["mean"] = cell.mean;
                row["stddev"] = cell.stddev;
                row["seeds"] = cell.seeds;
                rows.push_back(row);
            }
        std::printf("%s\n", rows.dump(2).c_str());
        return 0;
    }

    // accuracies in percent, one decimal, mirroring the usual table style
    std::printf("%-14s", "method");
    for (int k : shots) std::printf("  %10s", (std::to_string(k) + "-shot").c_str());
    std::printf("\n");
    for (const auto& [method, cells] : table) {
        std::printf("%-14s", method.c_str());
        for (int k : shots) {
            const auto it = cells.find(k);
            if (it == cells.end()) {
                std::printf("  %10s", "-");
            } else {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.1f±%.1f", 100.0 * it->second.mean,
                              100.0 * it->second.stddev);
                std::printf("  %10s", buf);
            }
        }
        std::printf("\n");
    }
    return 0;
}

int cmd_toy_gen(const std::string& out_dir, std::uint64_t seed, const std::string& encoder_spec) {
    const auto enc = make_encoder(parse_encoder_flag(encoder_spec));
    ToyDatasetOptions opt;
    opt.seed = seed;
    write_toy_dataset(out_dir + "/traditional", make_toy_traditional(*enc, opt));
    write_toy_dataset(out_dir + "/meta", make_toy_meta(*enc, opt));
    save_manifest(out_dir + "/frames-demo/manifest.jsonl", make_frames_demo_dataset());
    std::printf("wrote toy datasets under %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot text-input tuning for frozen dual-encoder models"};
    app.require_subcommand(1);

    std::string manifest_path, out_path, encoder_spec = "toy_transformer:7";
    std::string prompt = "a video of {}";
    std::string paradigm = "traditional";
    std::string config_path, out_dir = "runs/out", runs_dir, format = "table";
    std::optional<std::string> cache_path, report_out;
    std::vector<std::string> ensemble;
    std::uint64_t gen_seed = 2024;

    auto* cache = app.add_subcommand("cache", "build a visual feature cache from a manifest");
    cache->add_option("--manifest", manifest_path, "dataset manifest (JSONL)")->required();
    cache->add_option("--encoder", encoder_spec, "encoder spec or JSON file");
    cache->add_option("--out", out_path, "output cache path")->required();

    auto* zs = app.add_subcommand("zero-shot", "zero-shot accuracy report");
    zs->add_option("--manifest", manifest_path)->required();
    zs->add_option("--cache", cache_path, "precomputed feature cache");
    zs->add_option("--prompt", prompt, "prompt template with one {}");
    zs->add_option("--ensemble", ensemble, "prompt templates for an ensemble head");
    zs->add_option("--encoder", encoder_spec);
    zs->add_option("--paradigm", paradigm);
    zs->add_option("--out", report_out, "write the RunRecord here");

    auto* tune = app.add_subcommand("tune", "train a text-tuning method per the run config");
    tune->add_option("--config", config_path, "run config JSON")->required();
    tune->add_option("--out-dir", out_dir, "artifact directory");

    auto* baseline = app.add_subcommand("baseline", "linear-probe / vl-prototype runs");
    baseline->add_option("--config", config_path, "run config JSON")->required();
    baseline->add_option("--out-dir", out_dir, "artifact directory");

    auto* report = app.add_subcommand("report", "aggregate RunRecords into a table");
    report->add_option("--runs", runs_dir, "directory of run records")->required();
    report->add_option("--format", format, "table or json")
        ->check(CLI::IsMember({"table", "json"}));

    auto* toygen = app.add_subcommand("toy-gen", "generate the bundled synthetic datasets");
    toygen->add_option("--out-dir", out_dir, "output directory")->required();
    toygen->add_option("--seed", gen_seed, "generator seed");
    toygen->add_option("--encoder", encoder_spec);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cache->parsed()) return cmd_cache(manifest_path, encoder_spec, out_path);
        if (zs->parsed())
            return cmd_zero_shot(manifest_path, cache_path, prompt, ensemble, encoder_spec,
                                 paradigm, report_out);
        if (tune->parsed()) return cmd_run(config_path, out_dir, false);
        if (baseline->parsed()) return cmd_run(config_path, out_dir, true);
        if (report->parsed()) return cmd_report(runs_dir, format);
        if (toygen->parsed()) return cmd_toy_gen(out_dir, gen_seed, encoder_spec);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
