#include "nametune/classify.hpp"

#include <algorithm>
#include <cmath>

namespace nametune {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

std::string PromptSpec::render(const std::string& class_name) const {
    const auto pos = template_text.find("{}");
    return template_text.substr(0, pos) + class_name;
}

PromptSpec make_prompt(const FrozenDualEncoder& enc, const std::string& template_text) {
    const auto pos = template_text.find("{}");
    if (pos == std::string::npos)
        throw ConfigError("prompt '" + template_text + "' has no {} placeholder");
    if (template_text.find("{}", pos + 2) != std::string::npos)
        throw ConfigError("prompt '" + template_text + "' has more than one {} placeholder");
    if (!trim(template_text.substr(pos + 2)).empty())
        throw ConfigError("prompt '" + template_text +
                          "' has text after the class name; only prefix prompts are supported");
    PromptSpec spec;
    spec.template_text = template_text;
    spec.tokenized_prefix = enc.tokenize(trim(template_text.substr(0, pos)));
    return spec;
}

double similarity_score(const EmbeddingSpace& space, std::span<const double> a,
                        std::span<const double> b) {
    const double d = dot(a, b);
    if (space.similarity == Similarity::dot) return d;
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        throw DegenerateInputError("cosine similarity: zero-norm vector");
    return d / (na * nb);
}

std::vector<double> class_probabilities(const Vector& v, const ClassifierHead& head) {
    const std::size_t n = head.size();
    if (n < 1) throw ConfigError("classifier head has no classes");
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("class_probabilities: non-finite query embedding");

    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = similarity_score(head.space, v, head.class_text_embeddings.row(i)) /
                    head.space.temperature;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& x : logits) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (auto& x : logits) x /= sum;
    return logits;
}

int predict(const Vector& v, const ClassifierHead& head) {
    const auto probs = class_probabilities(v, head);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return static_cast<int>(best);
}

ClassifierHead build_head(const FrozenDualEncoder& enc, const PromptSpec& prompt,
                          const std::vector<ClassEntry>& classes) {
    if (classes.empty()) throw ConfigError("build_head: empty class set");
    ClassifierHead head;
    head.space = enc.space();
    head.class_text_embeddings = Matrix(classes.size(), static_cast<std::size_t>(head.space.d_embed));
    for (const auto& entry : classes) {
        const TokenSequence input = concat(prompt.tokenized_prefix, entry.name_tokens);
        if (static_cast<int>(input.length()) > head.space.max_seq_len)
            throw SequenceLengthError("build_head: assembled input for class '" + entry.name_text +
                                      "' has length " + std::to_string(input.length()) +
                                      " > max_seq_len " + std::to_string(head.space.max_seq_len));
        const Vector emb = enc.encode_text(input);
        auto row = head.class_text_embeddings.row(static_cast<std::size_t>(entry.class_id));
        std::copy(emb.begin(), emb.end(), row.begin());
    }
    return head;
}

ClassifierHead ensemble_head(const FrozenDualEncoder& enc, const std::vector<PromptSpec>& prompts,
                             const std::vector<ClassEntry>& classes) {
    if (prompts.empty()) throw ConfigError("ensemble_head: need at least one prompt");
    ClassifierHead head;
    head.space = enc.space();
    head.class_text_embeddings = Matrix(classes.size(), static_cast<std::size_t>(head.space.d_embed));
    for (const auto& entry : classes) {
        Vector mean(static_cast<std::size_t>(head.space.d_embed), 0.0);
        for (const auto& prompt : prompts) {
            const TokenSequence input = concat(prompt.tokenized_prefix, entry.name_tokens);
            if (static_cast<int>(input.length()) > head.space.max_seq_len)
                throw SequenceLengthError("ensemble_head: assembled input for class '" +
                                          entry.name_text + "' exceeds max_seq_len");
            Vector emb = enc.encode_text(input);
            const double norm = l2_norm(emb);
            if (norm == 0.0)
                throw DegenerateInputError("ensemble_head: zero-norm embedding for class '" +
                                           entry.name_text + "'");
            for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += emb[j] / norm;
        }
        const double inv = 1.0 / static_cast<double>(prompts.size());
        for (auto& x : mean) x *= inv;
        const double norm = l2_norm(mean);
        if (norm == 0.0)
            throw DegenerateInputError("ensemble_head: prompt embeddings cancel for class '" +
                                       entry.name_text + "'");
        auto row = head.class_text_embeddings.row(static_cast<std::size_t>(entry.class_id));
        for (std::size_t j = 0; j < mean.size(); ++j) row[j] = mean[j] / norm;
    }
    return head;
}

}  // namespace nametune
