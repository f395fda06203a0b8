#include "nametune/core.hpp"

#include <cstring>

namespace nametune {

std::string to_string(Similarity s) {
    return s == Similarity::cosine ? "cosine" : "dot";
}

Similarity similarity_from_string(const std::string& s) {
    if (s == "cosine") return Similarity::cosine;
    if (s == "dot") return Similarity::dot;
    throw ConfigError("unknown similarity '" + s + "' (valid: cosine, dot)");
}

void EmbeddingSpace::validate() const {
    if (d_token < 1) throw ConfigError("embedding space: d_token must be >= 1");
    if (d_embed < 1) throw ConfigError("embedding space: d_embed must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("embedding space: temperature must be > 0");
    if (max_seq_len < 2) throw ConfigError("embedding space: max_seq_len must be >= 2");
}

TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
    if (a.length() == 0) return b;
    if (b.length() == 0) return a;
    if (a.width() != b.width()) {
        throw DimensionError("concat: token width mismatch (" + std::to_string(a.width()) +
                             " vs " + std::to_string(b.width()) + ")");
    }
    Matrix out(a.length() + b.length(), a.width());
    std::memcpy(out.data(), a.rows.data(), a.rows.size() * sizeof(double));
    std::memcpy(out.data() + a.rows.size(), b.rows.data(), b.rows.size() * sizeof(double));
    return TokenSequence(std::move(out));
}

TokenSequence add_offset(const TokenSequence& n, const Matrix& offset) {
    if (!n.rows.same_shape(offset)) {
        throw DimensionError("add_offset: offset shape " + std::to_string(offset.rows()) + "x" +
                             std::to_string(offset.cols()) + " does not match sequence " +
                             std::to_string(n.length()) + "x" + std::to_string(n.width()));
    }
    TokenSequence out = n;
    for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows.data()[i] += offset.data()[i];
    return out;
}

ClassEntry make_class_entry(int class_id, std::string name_text, TokenSequence name_tokens) {
    ClassEntry e;
    e.class_id = class_id;
    e.name_text = std::move(name_text);
    e.offset = Matrix(name_tokens.length(), name_tokens.width());
    e.name_tokens = std::move(name_tokens);
    return e;
}

void validate_class_set(const std::vector<ClassEntry>& classes) {
    std::vector<bool> seen(classes.size(), false);
    for (const auto& c : classes) {
        if (c.class_id < 0 || static_cast<std::size_t>(c.class_id) >= classes.size())
            throw IntegrityError("class set: id " + std::to_string(c.class_id) +
                                 " outside 0.." + std::to_string(classes.size() - 1));
        if (seen[c.class_id])
            throw IntegrityError("class set: duplicate id " + std::to_string(c.class_id));
        seen[c.class_id] = true;
        if (!c.offset.same_shape(c.name_tokens.rows))
            throw DimensionError("class set: offset shape mismatch for class " + c.name_text);
    }
}

}  // namespace nametune
