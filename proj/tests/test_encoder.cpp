#include <cmath>

#include "doctest.h"
#include "nametune/encoder.hpp"
#include "nametune/fileutil.hpp"
#include "test_support.hpp"

using namespace nametune;
using namespace nametune::testing;

namespace {

// Test-only visual encoder whose frame embeddings come from a fixed table,
// so encode_video means are easy to reason about.
class StubVisualEncoder final : public FrozenDualEncoder {
public:
    StubVisualEncoder(std::vector<Vector> frames, EmbeddingSpace space, int frames_per_video)
        : FrozenDualEncoder(space, frames_per_video), frames_(std::move(frames)) {}

    TokenSequence tokenize(const std::string&) const override { throw ConfigError("stub"); }
    Vector encode_frame(const MediaRef&, int frame_index) const override {
        return frames_[static_cast<std::size_t>(frame_index) % frames_.size()];
    }
    std::uint64_t weight_digest() const override { return 0; }

protected:
    Vector encode_text_impl(const TokenSequence&) const override { throw ConfigError("stub"); }
    Matrix text_input_gradient_impl(const TokenSequence&, const Vector&) const override {
        throw ConfigError("stub");
    }

private:
    std::vector<Vector> frames_;
};

double vjp_fd_rel_error(const FrozenDualEncoder& enc, const TokenSequence& t,
                        const Vector& cotangent, double h = 1e-3) {
    const Matrix analytic = enc.text_input_gradient(t, cotangent);
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    TokenSequence probe = t;
    for (std::size_t i = 0; i < probe.rows.size(); ++i) {
        const double orig = probe.rows.data()[i];
        probe.rows.data()[i] = orig + h;
        const Vector fp = enc.encode_text(probe);
        probe.rows.data()[i] = orig - h;
        const Vector fm = enc.encode_text(probe);
        probe.rows.data()[i] = orig;
        double fd = 0.0;
        for (std::size_t e = 0; e < cotangent.size(); ++e)
            fd += cotangent[e] * (fp[e] - fm[e]) / (2.0 * h);
        const double an = analytic.data()[i];
        num += (an - fd) * (an - fd);
        den_a += an * an;
        den_f += fd * fd;
    }
    return std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-12});
}

}  // namespace

TEST_CASE("frozen encoders return bit-identical outputs for identical inputs") {
    const auto toy = toy_encoder();
    const auto t = toy.tokenize("wipe counter");
    CHECK(toy.encode_text(t) == toy.encode_text(t));

    const auto lin = linear_encoder();
    const auto u = lin.tokenize("wipe counter");
    CHECK(lin.encode_text(u) == lin.encode_text(u));
}

TEST_CASE("linear encoder maps all-zero rows to the zero vector") {
    const auto lin = linear_encoder();
    TokenSequence zeros{Matrix(3, 16)};
    for (double v : lin.encode_text(zeros)) CHECK(v == 0.0);
}

TEST_CASE("toy transformer snapshot for seed 7 on a fixed 3-token input") {
    ToyTransformerConfig cfg;
    cfg.seed = 7;
    const ToyTransformerEncoder enc(cfg);
    const auto out = enc.encode_text(enc.tokenize("stack plates now"));
    const double expected[] = {
        -0.33371143602089592, -0.012933639362085039, 0.69899457101171469, -2.1489785082876089,
        -0.27952541167670264, 1.5255726067798414,    0.049802199383343071, -1.6833268365123624,
    };
    REQUIRE(out.size() == 8);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(enc.weight_digest() == 0x2cd527ab72843cc3ULL);
}

TEST_CASE("sequence length and width preconditions") {
    const auto toy = toy_encoder();
    TokenSequence empty{Matrix(0, 16)};
    CHECK_THROWS_AS(toy.encode_text(empty), SequenceLengthError);
    TokenSequence too_long{Matrix(17, 16)};
    CHECK_THROWS_AS(toy.encode_text(too_long), SequenceLengthError);
    TokenSequence wrong_width{Matrix(2, 8)};
    CHECK_THROWS_AS(toy.encode_text(wrong_width), DimensionError);
    TokenSequence ok{Matrix(2, 16)};
    CHECK_THROWS_AS(toy.text_input_gradient(ok, Vector(3, 0.0)), DimensionError);
}

TEST_CASE("linear encoder input gradient equals the matching blocks of W^T c") {
    const auto lin = linear_encoder();
    SeededRng rng(21);
    const auto t = TokenSequence(random_matrix(rng, 3, 16));
    const auto cot = random_vector(rng, 8);
    const Matrix grad = lin.text_input_gradient(t, cot);
    const Matrix& w = lin.text_weights();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
            double expected = 0.0;  // explicit matrix multiplication
            for (std::size_t e = 0; e < 8; ++e) expected += cot[e] * w(e, i * 16 + j);
            CHECK(grad(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("zero cotangent gives a zero input gradient") {
    const auto toy = toy_encoder();
    const auto t = toy.tokenize("pour water");
    const Matrix grad = toy.text_input_gradient(t, Vector(8, 0.0));
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad.data()[i] == 0.0);
}

TEST_CASE("input VJP matches central finite differences on both encoders") {
    const auto toy = toy_encoder();
    const auto lin = linear_encoder();
    SeededRng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 1 + rng.uniform_int(6);
        const TokenSequence t(random_matrix(rng, len, 16, 0.5));
        const Vector cot = random_vector(rng, 8);
        CHECK(vjp_fd_rel_error(toy, t, cot) < 1e-4);
        CHECK(vjp_fd_rel_error(lin, t, cot) < 1e-4);
    }
}

TEST_CASE("linear encoder logits are affine in the offset") {
    LinearEncoderConfig cfg;
    cfg.space = small_space(Similarity::dot, 1.0);
    const LinearEncoder lin(cfg);
    SeededRng rng(23);
    const auto v = random_vector(rng, 8);
    const TokenSequence base(random_matrix(rng, 2, 16));
    const Matrix e1 = random_matrix(rng, 2, 16, 0.3);
    const Matrix e2 = random_matrix(rng, 2, 16, 0.3);
    Matrix sum(2, 16);
    for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] = e1.data()[i] + e2.data()[i];

    const auto logit = [&](const Matrix& eps) {
        return dot(v, lin.encode_text(add_offset(base, eps)));
    };
    const double lhs = logit(e1) + logit(e2) - logit(Matrix(2, 16));
    CHECK(lhs == doctest::Approx(logit(sum)).epsilon(1e-5));
}

TEST_CASE("encode_video averages per-frame embeddings") {
    const auto space = small_space();
    SeededRng rng(24);

    SUBCASE("a single frame is returned as-is") {
        const Vector frame = random_vector(rng, 8);
        StubVisualEncoder enc({frame}, space, 1);
        const MediaRef media{"m", "toy://m", 1};
        CHECK(encode_video(enc, media) == frame);
    }
    SUBCASE("opposite frames cancel") {
        Vector v = random_vector(rng, 8);
        Vector neg = v;
        for (auto& x : neg) x = -x;
        StubVisualEncoder enc({v, neg}, space, 2);
        const MediaRef media{"m", "toy://m", 2};
        for (double x : encode_video(enc, media)) CHECK(x == 0.0);
    }
    SUBCASE("ten frames match an independent summation loop") {
        std::vector<Vector> frames;
        for (int i = 0; i < 10; ++i) frames.push_back(random_vector(rng, 8));
        StubVisualEncoder enc(frames, space, 10);
        const MediaRef media{"m", "toy://m", 10};
        const Vector mean = encode_video(enc, media);
        for (std::size_t e = 0; e < 8; ++e) {
            double acc = 0.0;
            for (const auto& f : frames) acc += f[e];
            CHECK(mean[e] == doctest::Approx(acc / 10.0).epsilon(1e-6));
        }
    }
    SUBCASE("an empty frame list is rejected") {
        StubVisualEncoder enc({random_vector(rng, 8)}, space, 10);
        const MediaRef media{"m", "toy://m", 0};
        CHECK_THROWS_AS(encode_video(enc, media), DegenerateInputError);
    }
}

TEST_CASE("uniform frame indices follow the midpoint rule") {
    CHECK(uniform_frame_indices(10, 10) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(uniform_frame_indices(1, 10) == std::vector<int>(10, 0));
    CHECK(uniform_frame_indices(100, 10) ==
          std::vector<int>{5, 15, 25, 35, 45, 55, 65, 75, 85, 95});

    SeededRng rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        const int total = 1 + static_cast<int>(rng.uniform_int(200));
        const int k = 1 + static_cast<int>(rng.uniform_int(40));
        const auto idx = uniform_frame_indices(total, k);
        REQUIRE(static_cast<int>(idx.size()) == k);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            CHECK(idx[i] >= 0);
            CHECK(idx[i] < total);
            if (i > 0) CHECK(idx[i] >= idx[i - 1]);
        }
    }
}

TEST_CASE("weight digests do not change across use") {
    auto toy = toy_encoder();
    const auto before = toy.weight_digest();
    for (int i = 0; i < 5; ++i) {
        const auto t = toy.tokenize("stack plates");
        toy.encode_text(t);
        toy.text_input_gradient(t, Vector(8, 1.0));
    }
    CHECK(toy.weight_digest() == before);
}

TEST_CASE("feature cache round-trips bit-exactly") {
    TempDir dir("cache");
    SeededRng rng(26);
    std::map<std::string, Vector> entries;
    for (int i = 0; i < 1000; ++i)
        entries["key-" + std::to_string(i)] = random_vector(rng, 8);

    const std::string path = dir.file("features.ntfc");
    write_feature_cache(path, entries, 8);
    int d_embed = 0;
    const auto loaded = read_feature_cache(path, &d_embed);
    CHECK(d_embed == 8);
    REQUIRE(loaded.size() == entries.size());
    for (const auto& [key, vec] : entries) {
        const auto& got = loaded.at(key);
        for (std::size_t e = 0; e < vec.size(); ++e)
            CHECK(static_cast<float>(got[e]) == static_cast<float>(vec[e]));
    }

    const std::string path2 = dir.file("features2.ntfc");
    write_feature_cache(path2, loaded, 8);
    CHECK(file_digest(path) == file_digest(path2));
}

TEST_CASE("feature cache rejects corrupt headers") {
    TempDir dir("cache-bad");
    const std::string path = dir.file("bad.ntfc");
    atomic_write_file(path, "XXXX stuff");
    CHECK_THROWS_AS(read_feature_cache(path), ParseError);
    CHECK_THROWS_AS(read_feature_cache(dir.file("missing.ntfc")), IoError);
}

TEST_CASE("feature cache encoder looks up stored vectors exactly") {
    SeededRng rng(27);
    std::map<std::string, Vector> entries{{"a", random_vector(rng, 8)},
                                          {"b", random_vector(rng, 8)}};
    const Vector expected = entries.at("a");
    FeatureCacheEncoder enc(std::move(entries), small_space());
    CHECK(enc.lookup("a") == expected);
    CHECK(enc.contains("b"));
    CHECK_THROWS_AS(enc.lookup("missing"), IntegrityError);
    CHECK_THROWS_AS(enc.tokenize("text"), ConfigError);
    CHECK_THROWS_AS(enc.encode_text(TokenSequence(Matrix(1, 16))), ConfigError);
}
