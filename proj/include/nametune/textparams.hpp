#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nametune/classify.hpp"
#include "nametune/core.hpp"
#include "nametune/rng.hpp"

namespace nametune {

enum class Method { name_tuning, coop, coop_csc, cona };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Learnable text-input state for one tuning method. Which tensors exist
// depends on the method:
//   name_tuning: offsets + fixed prompt
//   coop:        one shared context
//   coop_csc:    one context per class
//   cona:        shared context + offsets
struct TextParameterSet {
    Method method = Method::name_tuning;
    int num_classes = 0;
    int context_length = 0;
    Matrix shared_context;                // context_length x d_token
    std::vector<Matrix> class_contexts;   // N of context_length x d_token
    std::vector<Matrix> offsets;          // N, each l_class_i x d_token
    std::optional<PromptSpec> fixed_prompt;

    // Random-init ablation: effective class name tokens are replaced by
    // draws and the offset penalty is forced off downstream.
    bool ablation_random_names = false;
    std::vector<Matrix> random_name_tokens;

    void validate(const std::vector<ClassEntry>& classes) const;
};

TextParameterSet init_parameters(Method method, const std::vector<ClassEntry>& classes,
                                 int context_length, SeededRng& rng,
                                 bool ablation_random_names = false,
                                 std::optional<PromptSpec> fixed_prompt = std::nullopt);

// Encoder input for one class:
//   name_tuning: [q, n_i + eps_i]      coop:     [c, n_i]
//   cona:        [c, n_i + eps_i]      coop_csc: [c_i, n_i]
TokenSequence assemble(const TextParameterSet& params, const ClassEntry& entry,
                       int max_seq_len = 0);

// (1/2) sum_i ||eps_i||^2 over name offsets only; contexts contribute 0.
double parameter_l2(const TextParameterSet& params);

// Round every tensor through float32, the checkpoint storage precision.
TextParameterSet quantize_to_f32(const TextParameterSet& params);

ClassifierHead build_head(const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                          const TextParameterSet& params);

// Parameter checkpoint file, little-endian:
//   magic "NTPC" | version u32=1 | method u8 | ablation u8 | N u32 |
//   epoch u32 | seed u64 | tensors in canonical order
//   (shared context | per-class contexts | offsets | ablation name tokens),
//   each as rank u8 | dims u32 each | float32 payload.
void save_checkpoint(const std::string& path, const TextParameterSet& params, int epoch,
                     std::uint64_t seed);

struct LoadedCheckpoint {
    TextParameterSet params;
    int epoch = 0;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace nametune
