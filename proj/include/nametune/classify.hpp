#pragma once

#include <string>
#include <vector>

#include "nametune/core.hpp"
#include "nametune/encoder.hpp"

namespace nametune {

// A prompt template with exactly one "{}" placeholder and no text after
// it; the tokenized prefix is what gets prepended to class names.
struct PromptSpec {
    std::string template_text;
    TokenSequence tokenized_prefix;

    std::string render(const std::string& class_name) const;
};

PromptSpec make_prompt(const FrozenDualEncoder& enc, const std::string& template_text);

struct ClassifierHead {
    Matrix class_text_embeddings;  // N x d_embed
    EmbeddingSpace space;

    std::size_t size() const { return class_text_embeddings.rows(); }
};

// Raw similarity (cosine or dot per the space), before temperature.
double similarity_score(const EmbeddingSpace& space, std::span<const double> a,
                        std::span<const double> b);

// Softmax over similarity / temperature, with max subtraction.
std::vector<double> class_probabilities(const Vector& v, const ClassifierHead& head);

// Argmax class id; exact ties go to the lowest id.
int predict(const Vector& v, const ClassifierHead& head);

// Zero-shot head: row i embeds [q, n_i].
ClassifierHead build_head(const FrozenDualEncoder& enc, const PromptSpec& prompt,
                          const std::vector<ClassEntry>& classes);

// Prompt ensemble: row i is the re-normalized mean of the per-prompt
// normalized embeddings of class i.
ClassifierHead ensemble_head(const FrozenDualEncoder& enc, const std::vector<PromptSpec>& prompts,
                             const std::vector<ClassEntry>& classes);

}  // namespace nametune
