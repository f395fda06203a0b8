#include <cmath>

#include "doctest.h"
#include "nametune/baselines.hpp"
#include "test_support.hpp"

using namespace nametune;
using namespace nametune::testing;

namespace {

std::vector<LabeledEmbedding> separable_two_class(SeededRng& rng, int per_class) {
    std::vector<LabeledEmbedding> out;
    for (int i = 0; i < per_class; ++i) {
        Vector a = random_vector(rng, 8, 0.1);
        a[0] += 2.0;
        out.push_back({a, 0});
        Vector b = random_vector(rng, 8, 0.1);
        b[0] -= 2.0;
        out.push_back({b, 1});
    }
    return out;
}

int nearest_mean_of_support(const std::vector<std::vector<Vector>>& support, const Vector& x) {
    // independent reference: cosine against the mean of normalized supports
    int best = -1;
    double best_score = -1e300;
    for (std::size_t c = 0; c < support.size(); ++c) {
        Vector mean(x.size(), 0.0);
        for (const auto& v : support[c]) {
            const double n = l2_norm(v);
            for (std::size_t e = 0; e < x.size(); ++e) mean[e] += v[e] / n;
        }
        for (auto& m : mean) m /= static_cast<double>(support[c].size());
        const double score = dot(x, mean) / (l2_norm(x) * l2_norm(mean));
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(c);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("geometric grids hit both endpoints with the right counts") {
    const auto lam = geometric_grid(1e-6, 1e6, 96);
    REQUIRE(lam.size() == 96);
    CHECK(lam.front() == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(lam.back() == doctest::Approx(1e6).epsilon(1e-9));
    for (std::size_t i = 1; i < lam.size(); ++i) {
        CHECK(lam[i] > lam[i - 1]);
        // constant ratio between neighbours
        CHECK(lam[i] / lam[i - 1] ==
              doctest::Approx(lam[1] / lam[0]).epsilon(1e-9));
    }

    const auto wt = geometric_grid(1e-2, 1e2, 16);
    REQUIRE(wt.size() == 16);
    CHECK(wt.front() == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(wt.back() == doctest::Approx(1e2).epsilon(1e-9));

    CHECK_THROWS_AS(geometric_grid(0.0, 1.0, 4), ConfigError);
    CHECK_THROWS_AS(geometric_grid(1.0, 2.0, 0), ConfigError);
}

TEST_CASE("linear probe separates a separable problem") {
    SeededRng rng(71);
    const auto data = separable_two_class(rng, 8);
    const auto model = linear_probe_fit(data, 2, 1e-6);
    for (const auto& item : data) CHECK(linear_probe_predict(model, item.embedding) == item.label);
}

TEST_CASE("huge ridge strength shrinks the weights toward zero") {
    SeededRng rng(72);
    const auto data = separable_two_class(rng, 8);
    const auto model = linear_probe_fit(data, 2, 1e6);
    CHECK(frobenius_norm(model.weight) < 1e-2);
}

TEST_CASE("the probe objective at the solution never exceeds the zero start") {
    SeededRng rng(73);
    for (double lambda : {1e-6, 1e-2, 1.0, 1e3}) {
        const auto data = separable_two_class(rng, 5);
        const auto model = linear_probe_fit(data, 2, lambda);
        LinearProbeModel zero;
        zero.weight = Matrix(2, 8);
        zero.bias.assign(2, 0.0);
        zero.lambda = lambda;
        CHECK(linear_probe_objective(model, data) <= linear_probe_objective(zero, data) + 1e-12);
    }
}

TEST_CASE("probe fitting is deterministic") {
    SeededRng rng(74);
    const auto data = separable_two_class(rng, 6);
    const auto a = linear_probe_fit(data, 2, 0.5);
    const auto b = linear_probe_fit(data, 2, 0.5);
    CHECK(a.weight == b.weight);
    CHECK(a.bias == b.bias);
}

TEST_CASE("degenerate probe inputs are rejected") {
    SeededRng rng(75);
    std::vector<LabeledEmbedding> single;
    for (int i = 0; i < 4; ++i) single.push_back({random_vector(rng, 8), 0});
    CHECK_THROWS_AS(linear_probe_fit(single, 2, 1.0), ConfigError);
    CHECK_THROWS_AS(linear_probe_fit(single, 2, 0.0), ConfigError);
    CHECK_THROWS_AS(linear_probe_fit({}, 2, 1.0), ConfigError);
}

TEST_CASE("vl prototype limits reproduce zero-shot and nearest-mean behaviour") {
    SeededRng rng(76);
    ClassifierHead head;
    head.space = small_space(Similarity::cosine, 0.05);
    head.class_text_embeddings = random_matrix(rng, 4, 8);

    std::vector<std::vector<Vector>> support(4);
    for (std::size_t c = 0; c < 4; ++c)
        for (int k = 0; k < 5; ++k) support[c].push_back(random_vector(rng, 8));

    const auto text_heavy = vl_prototype_build(head, support, 1e9);
    const auto visual_heavy = vl_prototype_build(head, support, 1e-9);
    int text_agree = 0, visual_agree = 0;
    const int n_queries = 100;
    for (int q = 0; q < n_queries; ++q) {
        const Vector x = random_vector(rng, 8);
        text_agree += vl_prototype_predict(text_heavy, x) == predict(x, head);
        visual_agree += vl_prototype_predict(visual_heavy, x) == nearest_mean_of_support(support, x);
    }
    CHECK(text_agree == n_queries);
    CHECK(visual_agree == n_queries);
}

TEST_CASE("prototypes are unit-norm and unchanged by duplicating every support item") {
    SeededRng rng(77);
    ClassifierHead head;
    head.space = small_space(Similarity::cosine, 0.05);
    head.class_text_embeddings = random_matrix(rng, 3, 8);
    std::vector<std::vector<Vector>> support(3);
    for (std::size_t c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) support[c].push_back(random_vector(rng, 8));

    const auto model = vl_prototype_build(head, support, 2.5);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(l2_norm(model.prototypes.row(c)) == doctest::Approx(1.0).epsilon(1e-9));

    auto doubled = support;
    for (std::size_t c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) doubled[c].push_back(support[c][static_cast<std::size_t>(k)]);
    const auto model2 = vl_prototype_build(head, doubled, 2.5);
    for (std::size_t i = 0; i < model.prototypes.size(); ++i)
        CHECK(model.prototypes.data()[i] ==
              doctest::Approx(model2.prototypes.data()[i]).epsilon(1e-12));
}

TEST_CASE("vl prototypes are permutation-equivariant in the classes") {
    SeededRng rng(78);
    ClassifierHead head;
    head.space = small_space(Similarity::cosine, 0.05);
    head.class_text_embeddings = random_matrix(rng, 3, 8);
    std::vector<std::vector<Vector>> support(3);
    for (std::size_t c = 0; c < 3; ++c)
        for (int k = 0; k < 3; ++k) support[c].push_back(random_vector(rng, 8));
    const auto base = vl_prototype_build(head, support, 1.7);

    const std::size_t perm[3] = {2, 0, 1};
    ClassifierHead permuted_head;
    permuted_head.space = head.space;
    permuted_head.class_text_embeddings = Matrix(3, 8);
    std::vector<std::vector<Vector>> permuted_support(3);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto src = head.class_text_embeddings.row(perm[c]);
        std::copy(src.begin(), src.end(), permuted_head.class_text_embeddings.row(c).begin());
        permuted_support[c] = support[perm[c]];
    }
    const auto shuffled = vl_prototype_build(permuted_head, permuted_support, 1.7);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t e = 0; e < 8; ++e)
            CHECK(shuffled.prototypes(c, e) == base.prototypes(perm[c], e));
}

TEST_CASE("vl prototype rejects bad inputs") {
    SeededRng rng(79);
    ClassifierHead head;
    head.space = small_space();
    head.class_text_embeddings = random_matrix(rng, 2, 8);
    std::vector<std::vector<Vector>> support(2);
    support[0].push_back(random_vector(rng, 8));
    CHECK_THROWS_AS(vl_prototype_build(head, support, 1.0), ConfigError);  // empty class 1
    support[1].push_back(random_vector(rng, 8));
    CHECK_THROWS_AS(vl_prototype_build(head, support, 0.0), ConfigError);
    std::vector<std::vector<Vector>> wrong(3);
    CHECK_THROWS_AS(vl_prototype_build(head, wrong, 1.0), ConfigError);
}
