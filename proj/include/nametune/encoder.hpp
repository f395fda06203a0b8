#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nametune/core.hpp"

namespace nametune {

// A media item as named by a dataset manifest: either a (synthetic) path
// with a frame count, or a key into a precomputed feature cache.
struct MediaRef {
    std::string key;
    std::string path;
    int frame_count = 0;
};

// Frozen dual encoder E^t / E^v. Weights are immutable for the lifetime of
// the object: identical inputs produce bit-identical outputs, and
// weight_digest() never changes.
class FrozenDualEncoder {
public:
    virtual ~FrozenDualEncoder() = default;

    const EmbeddingSpace& space() const { return space_; }
    int frames_per_video() const { return frames_per_video_; }

    virtual TokenSequence tokenize(const std::string& text) const = 0;

    // d_embed vector; raw (unnormalized) even under cosine similarity --
    // the classifier owns normalization.
    Vector encode_text(const TokenSequence& t) const;

    // d/dt <cotangent, E^t(t)>, an l x d_token matrix. Weights receive none.
    Matrix text_input_gradient(const TokenSequence& t, const Vector& cotangent) const;

    virtual Vector encode_frame(const MediaRef& media, int frame_index) const = 0;

    virtual std::uint64_t weight_digest() const = 0;

protected:
    FrozenDualEncoder(EmbeddingSpace space, int frames_per_video)
        : space_(space), frames_per_video_(frames_per_video) {
        space_.validate();
    }

    virtual Vector encode_text_impl(const TokenSequence& t) const = 0;
    virtual Matrix text_input_gradient_impl(const TokenSequence& t, const Vector& cotangent) const = 0;

    EmbeddingSpace space_;
    int frames_per_video_;
};

// Evenly spread k frame indices over [0, total-1]: floor((i + 0.5) * total / k).
std::vector<int> uniform_frame_indices(int total, int k);

// Arithmetic mean of per-frame visual embeddings over uniformly sampled
// frames. No re-normalization here.
Vector encode_video(const FrozenDualEncoder& enc, const MediaRef& media);
Vector mean_embedding(const std::vector<Vector>& frames);

// Hash-table toy tokenizer shared by both built-in encoders: whitespace
// split, token string hashed into a fixed seeded embedding table.
class ToyTokenizer {
public:
    ToyTokenizer(std::uint64_t seed, int d_token, int vocab_size, double scale);
    TokenSequence tokenize(const std::string& text) const;
    std::uint64_t digest(std::uint64_t h) const;

private:
    int d_token_;
    int vocab_size_;
    Matrix table_;
};

struct ToyTransformerConfig {
    EmbeddingSpace space;  // d_token 16, d_embed 8 by default
    int depth = 2;
    int heads = 2;
    int ffn_hidden = 32;
    std::uint64_t seed = 7;
    int frames_per_video = 10;
    int vocab_size = 4096;
};

// Small pre-LN transformer text encoder with deterministic seeded weights
// and a hand-written input VJP. Desk-scale stand-in for CLIP-class text
// towers; detail (LN placement, GELU, mean pooling) is fixed here and
// pinned by snapshot tests.
class ToyTransformerEncoder final : public FrozenDualEncoder {
public:
    explicit ToyTransformerEncoder(ToyTransformerConfig cfg = {});

    TokenSequence tokenize(const std::string& text) const override;
    Vector encode_frame(const MediaRef& media, int frame_index) const override;
    std::uint64_t weight_digest() const override;

    const ToyTransformerConfig& config() const { return cfg_; }

protected:
    Vector encode_text_impl(const TokenSequence& t) const override;
    Matrix text_input_gradient_impl(const TokenSequence& t, const Vector& cotangent) const override;

private:
    struct Block {
        Matrix wq, wk, wv, wo;   // d x d
        Vector ln1_g, ln1_b;
        Matrix w1;               // d x h
        Vector b1;
        Matrix w2;               // h x d
        Vector b2;
        Vector ln2_g, ln2_b;
    };
    struct Trace;  // forward activations kept for the backward pass

    Vector forward(const TokenSequence& t, Trace* trace) const;

    ToyTransformerConfig cfg_;
    ToyTokenizer tokenizer_;
    Matrix pos_;                 // max_seq_len x d
    std::vector<Block> blocks_;
    Vector lnf_g, lnf_b;
    Matrix w_out_;               // d x d_embed
    std::uint64_t visual_seed_;
};

struct LinearEncoderConfig {
    EmbeddingSpace space;
    std::uint64_t seed = 11;
    int frames_per_video = 10;
    int vocab_size = 4096;
};

// E^t is linear in the zero-padded flattened token sequence, so with dot
// similarity the logits are affine in the name offsets and the regularized
// objective is strictly convex. Used for exact regularization-path tests.
class LinearEncoder final : public FrozenDualEncoder {
public:
    explicit LinearEncoder(LinearEncoderConfig cfg = {});

    TokenSequence tokenize(const std::string& text) const override;
    Vector encode_frame(const MediaRef& media, int frame_index) const override;
    std::uint64_t weight_digest() const override;

    const Matrix& text_weights() const { return w_text_; }

protected:
    Vector encode_text_impl(const TokenSequence& t) const override;
    Matrix text_input_gradient_impl(const TokenSequence& t, const Vector& cotangent) const override;

private:
    LinearEncoderConfig cfg_;
    ToyTokenizer tokenizer_;
    Matrix w_text_;  // d_embed x (max_seq_len * d_token)
    std::uint64_t visual_seed_;
};

// Feature cache file, little-endian:
//   magic "NTFC" | version u32=1 | d_embed u32 | dtype u8 (0 = float32) |
//   count u64 | entries sorted ascending by key bytes:
//     key_len u16 | key bytes | d_embed float32 values
void write_feature_cache(const std::string& path, const std::map<std::string, Vector>& entries,
                         int d_embed);
std::map<std::string, Vector> read_feature_cache(const std::string& path, int* d_embed_out = nullptr);

// Visual-side-only encoder backed by a precomputed feature cache; the
// adapter point for real VLM backbones. Text capabilities are unsupported.
class FeatureCacheEncoder final : public FrozenDualEncoder {
public:
    FeatureCacheEncoder(std::map<std::string, Vector> entries, EmbeddingSpace space);
    static FeatureCacheEncoder load(const std::string& path, EmbeddingSpace space);

    TokenSequence tokenize(const std::string& text) const override;
    Vector encode_frame(const MediaRef& media, int frame_index) const override;
    std::uint64_t weight_digest() const override;

    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    const Vector& lookup(const std::string& key) const;
    std::size_t size() const { return entries_.size(); }

protected:
    Vector encode_text_impl(const TokenSequence& t) const override;
    Matrix text_input_gradient_impl(const TokenSequence& t, const Vector& cotangent) const override;

private:
    std::map<std::string, Vector> entries_;
};

}  // namespace nametune
