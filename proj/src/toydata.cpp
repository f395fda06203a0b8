#include "nametune/toydata.hpp"

#include <algorithm>

#include "nametune/classify.hpp"

namespace nametune {

namespace {

// 2-token names; consecutive pairs share the verb so a swapped pair differs
// in a single token row.
const char* kNamePool[] = {
    "stack plates", "stack bowls",  "pour water",  "pour juice",   "wipe counter",
    "wipe table",   "open drawer",  "open cabinet", "fold towels", "fold shirts",
    "carry basket", "carry box",    "wash dishes", "wash pans",    "stir soup",
    "stir sauce",   "read book",    "read letter", "sweep floor",  "sweep porch",
};
constexpr int kNamePoolSize = static_cast<int>(sizeof(kNamePool) / sizeof(kNamePool[0]));

std::string slug(const std::string& name) {
    std::string out = name;
    std::replace(out.begin(), out.end(), ' ', '_');
    return out;
}

// Unit-norm text anchors for [prompt, name_i], with the anchors of the
// first `swapped_pairs` pairs exchanged.
std::vector<Vector> swapped_anchors(const FrozenDualEncoder& enc,
                                    const std::vector<std::string>& names,
                                    const std::string& prompt_template, int swapped_pairs) {
    const PromptSpec prompt = make_prompt(enc, prompt_template);
    const auto entries = make_class_entries(enc, names);
    const ClassifierHead head = build_head(enc, prompt, entries);

    std::vector<Vector> anchors(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto row = head.class_text_embeddings.row(i);
        Vector a(row.begin(), row.end());
        const double norm = l2_norm(a);
        for (auto& x : a) x /= norm;
        anchors[i] = std::move(a);
    }
    for (int p = 0; p < swapped_pairs; ++p) {
        const auto a = static_cast<std::size_t>(2 * p);
        if (a + 1 < anchors.size()) std::swap(anchors[a], anchors[a + 1]);
    }
    return anchors;
}

Vector noisy_unit(const Vector& center, double noise, SeededRng& rng) {
    Vector v(center.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + noise * rng.normal();
    const double norm = l2_norm(v);
    for (auto& x : v) x /= norm;
    return v;
}

ManifestRow cache_row(const std::string& id, const std::string& class_name,
                      const std::string& split_tag) {
    ManifestRow row;
    row.id = id;
    row.class_name = class_name;
    row.split_tag = split_tag;
    row.cache_backed = true;
    row.media.key = id;
    return row;
}

}  // namespace

ToyDataset make_toy_traditional(const FrozenDualEncoder& enc, const ToyDatasetOptions& opt) {
    if (opt.classes < 2 || opt.classes > kNamePoolSize)
        throw ConfigError("toy dataset: classes must be in 2.." + std::to_string(kNamePoolSize));
    std::vector<std::string> names(kNamePool, kNamePool + opt.classes);
    const auto anchors = swapped_anchors(enc, names, opt.prompt, opt.swapped_pairs);

    ToyDataset toy;
    toy.d_embed = enc.space().d_embed;
    toy.dataset.class_names = names;
    SeededRng rng(mix_seed(opt.seed, 0x746F795F74726164ULL));

    const struct {
        const char* tag;
        int count;
    } splits[] = {{"train", opt.train_per_class}, {"val", opt.val_per_class},
                  {"test", opt.test_per_class}};
    for (int c = 0; c < opt.classes; ++c) {
        for (const auto& split : splits) {
            for (int j = 0; j < split.count; ++j) {
                const std::string id =
                    slug(names[static_cast<std::size_t>(c)]) + "-" + split.tag + "-" + std::to_string(j);
                ManifestRow row = cache_row(id, names[static_cast<std::size_t>(c)], split.tag);
                row.class_id = c;
                toy.features[id] = noisy_unit(anchors[static_cast<std::size_t>(c)], opt.noise, rng);
                toy.dataset.rows.push_back(std::move(row));
            }
        }
    }
    return toy;
}

ToyDataset make_toy_meta(const FrozenDualEncoder& enc, const ToyDatasetOptions& opt) {
    const int per_phase = opt.meta_classes_per_phase;
    const int total = 3 * per_phase;
    if (per_phase < 2 || total > kNamePoolSize)
        throw ConfigError("toy dataset: meta_classes_per_phase out of range");
    std::vector<std::string> names(kNamePool, kNamePool + total);

    // swap the first pair inside each phase
    std::vector<Vector> anchors = swapped_anchors(enc, names, opt.prompt, 0);
    for (int phase = 0; phase < 3; ++phase) {
        const auto base = static_cast<std::size_t>(phase * per_phase);
        std::swap(anchors[base], anchors[base + 1]);
    }

    ToyDataset toy;
    toy.d_embed = enc.space().d_embed;
    toy.dataset.class_names = names;
    SeededRng rng(mix_seed(opt.seed, 0x746F795F6D657461ULL));

    const char* tags[] = {"meta_train", "meta_val", "meta_test"};
    for (int c = 0; c < total; ++c) {
        const char* tag = tags[c / per_phase];
        for (int j = 0; j < opt.meta_items_per_class; ++j) {
            const std::string id =
                slug(names[static_cast<std::size_t>(c)]) + "-" + tag + "-" + std::to_string(j);
            ManifestRow row = cache_row(id, names[static_cast<std::size_t>(c)], tag);
            row.class_id = c;
            toy.features[id] = noisy_unit(anchors[static_cast<std::size_t>(c)], opt.noise, rng);
            toy.dataset.rows.push_back(std::move(row));
        }
    }
    return toy;
}

Dataset make_frames_demo_dataset() {
    Dataset ds;
    ds.class_names = {"stack plates", "pour water", "wipe counter"};
    int counter = 0;
    for (int c = 0; c < 3; ++c) {
        for (const char* tag : {"train", "val", "test"}) {
            ManifestRow row;
            row.id = "demo-" + std::to_string(counter);
            row.class_name = ds.class_names[static_cast<std::size_t>(c)];
            row.split_tag = tag;
            row.class_id = c;
            row.media.path = "toy://" + slug(row.class_name) + "/" + std::to_string(counter);
            row.media.key = row.id;
            row.media.frame_count = 12 + counter;
            ds.rows.push_back(std::move(row));
            ++counter;
        }
    }
    return ds;
}

void write_toy_dataset(const std::string& dir, const ToyDataset& toy) {
    save_manifest(dir + "/manifest.jsonl", toy.dataset);
    write_feature_cache(dir + "/features.ntfc", toy.features, toy.d_embed);
}

}  // namespace nametune
