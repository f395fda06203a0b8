#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nametune/matrix.hpp"
#include "nametune/rng.hpp"

namespace nametune {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SequenceLengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Similarity { cosine, dot };

std::string to_string(Similarity s);
Similarity similarity_from_string(const std::string& s);

// Joint embedding space of a dual encoder. Fixed per encoder instance;
// the similarity kind and temperature never change mid-run.
struct EmbeddingSpace {
    int d_token = 16;
    int d_embed = 8;
    Similarity similarity = Similarity::cosine;
    double temperature = 0.05;
    int max_seq_len = 16;

    void validate() const;
};

// Variable-length sequence of token embeddings, the substrate every tuning
// method perturbs. Zero-length sequences are legal as prompt placeholders.
struct TokenSequence {
    Matrix rows;  // length x d_token
    std::optional<std::string> source_text;

    TokenSequence() = default;
    explicit TokenSequence(Matrix m, std::optional<std::string> text = std::nullopt)
        : rows(std::move(m)), source_text(std::move(text)) {}

    std::size_t length() const { return rows.rows(); }
    std::size_t width() const { return rows.cols(); }
};

TokenSequence concat(const TokenSequence& a, const TokenSequence& b);
TokenSequence add_offset(const TokenSequence& n, const Matrix& offset);

// One visual category: name text, its token embeddings, and the class name
// offset (zero right after construction).
struct ClassEntry {
    int class_id = 0;
    std::string name_text;
    TokenSequence name_tokens;
    Matrix offset;
};

ClassEntry make_class_entry(int class_id, std::string name_text, TokenSequence name_tokens);

// Class ids must be contiguous 0..N-1 and unique.
void validate_class_set(const std::vector<ClassEntry>& classes);

}  // namespace nametune
