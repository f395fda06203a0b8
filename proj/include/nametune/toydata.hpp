#pragma once

#include <map>
#include <string>

#include "nametune/manifest.hpp"

namespace nametune {

// Deterministic synthetic datasets for desk-scale runs. Visual clusters sit
// on the text anchors of the shipped encoder, except that the anchors of
// `swapped_pairs` class pairs are exchanged: zero-shot misclassifies those
// classes by construction while the clusters stay separable, so text-input
// tuning can recover them.
struct ToyDatasetOptions {
    int classes = 5;
    int train_per_class = 10;
    int val_per_class = 5;
    int test_per_class = 15;
    int swapped_pairs = 1;
    double noise = 0.05;
    std::uint64_t seed = 2024;
    std::string prompt = "a video of {}";
    int meta_classes_per_phase = 5;
    int meta_items_per_class = 20;
};

struct ToyDataset {
    Dataset dataset;
    std::map<std::string, Vector> features;  // item id -> visual embedding
    int d_embed = 0;
};

ToyDataset make_toy_traditional(const FrozenDualEncoder& enc, const ToyDatasetOptions& opt = {});
ToyDataset make_toy_meta(const FrozenDualEncoder& enc, const ToyDatasetOptions& opt = {});

// Path-backed manifest exercising the frame-encoding pipeline (toy:// media).
Dataset make_frames_demo_dataset();

// Writes <dir>/manifest.jsonl and <dir>/features.ntfc.
void write_toy_dataset(const std::string& dir, const ToyDataset& toy);

}  // namespace nametune
