#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "nametune/classify.hpp"
#include "nametune/encoder.hpp"
#include "nametune/rng.hpp"

namespace nametune::testing {

inline EmbeddingSpace small_space(Similarity sim = Similarity::cosine, double temperature = 0.05) {
    EmbeddingSpace space;
    space.d_token = 16;
    space.d_embed = 8;
    space.similarity = sim;
    space.temperature = temperature;
    space.max_seq_len = 16;
    return space;
}

inline ToyTransformerEncoder toy_encoder(std::uint64_t seed = 7,
                                         Similarity sim = Similarity::cosine,
                                         double temperature = 0.05) {
    ToyTransformerConfig cfg;
    cfg.space = small_space(sim, temperature);
    cfg.seed = seed;
    return ToyTransformerEncoder(cfg);
}

inline LinearEncoder linear_encoder(std::uint64_t seed = 11, Similarity sim = Similarity::cosine,
                                    double temperature = 0.05) {
    LinearEncoderConfig cfg;
    cfg.space = small_space(sim, temperature);
    cfg.seed = seed;
    return LinearEncoder(cfg);
}

inline std::vector<ClassEntry> test_classes(const FrozenDualEncoder& enc,
                                            const std::vector<std::string>& names) {
    std::vector<ClassEntry> out;
    for (std::size_t i = 0; i < names.size(); ++i)
        out.push_back(make_class_entry(static_cast<int>(i), names[i], enc.tokenize(names[i])));
    return out;
}

inline Matrix random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

inline Vector random_vector(SeededRng& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("nametune-" + tag + "-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace nametune::testing
