#include <cmath>
#include <limits>

#include "doctest.h"
#include "nametune/protocol.hpp"
#include "nametune/toydata.hpp"
#include "nametune/train.hpp"
#include "test_support.hpp"

using namespace nametune;
using namespace nametune::testing;

namespace {

// Independent transcription of the training objective: assemble inputs by
// raw matrix stacking, embed, take softmax over similarity/temperature and
// sum -log p plus the explicit offset penalty. Shares only encode_text
// with the library.
double oracle_loss(const TextParameterSet& params, const std::vector<LabeledEmbedding>& batch,
                   const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                   double alpha) {
    const EmbeddingSpace& space = enc.space();
    std::vector<Vector> class_embeddings;
    for (const auto& entry : classes) {
        const Matrix* prefix = nullptr;
        switch (params.method) {
            case Method::name_tuning: prefix = &params.fixed_prompt->tokenized_prefix.rows; break;
            case Method::coop:
            case Method::cona: prefix = &params.shared_context; break;
            case Method::coop_csc:
                prefix = &params.class_contexts[static_cast<std::size_t>(entry.class_id)];
                break;
        }
        const bool offsets = params.method == Method::name_tuning || params.method == Method::cona;
        const Matrix& name = entry.name_tokens.rows;
        Matrix stacked(prefix->rows() + name.rows(), name.cols());
        for (std::size_t r = 0; r < prefix->rows(); ++r)
            for (std::size_t c = 0; c < name.cols(); ++c) stacked(r, c) = (*prefix)(r, c);
        for (std::size_t r = 0; r < name.rows(); ++r)
            for (std::size_t c = 0; c < name.cols(); ++c) {
                double v = name(r, c);
                if (offsets) v += params.offsets[static_cast<std::size_t>(entry.class_id)](r, c);
                stacked(prefix->rows() + r, c) = v;
            }
        class_embeddings.push_back(enc.encode_text(TokenSequence(stacked)));
    }

    double total = 0.0;
    for (const auto& item : batch) {
        std::vector<double> weights(classes.size());
        double denom = 0.0;
        for (std::size_t j = 0; j < classes.size(); ++j) {
            double s = 0.0, nv = 0.0, nt = 0.0;
            for (std::size_t e = 0; e < item.embedding.size(); ++e) {
                s += item.embedding[e] * class_embeddings[j][e];
                nv += item.embedding[e] * item.embedding[e];
                nt += class_embeddings[j][e] * class_embeddings[j][e];
            }
            if (space.similarity == Similarity::cosine) s /= std::sqrt(nv) * std::sqrt(nt);
            weights[j] = std::exp(s / space.temperature);
            denom += weights[j];
        }
        total -= std::log(weights[static_cast<std::size_t>(item.label)] / denom);
    }
    for (const auto& eps : params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i)
            total += 0.5 * alpha * eps.data()[i] * eps.data()[i];
    return total;
}

double fd_gradient_rel_error(const FrozenDualEncoder& enc, Method method, double alpha,
                             std::uint64_t seed) {
    SeededRng rng(seed);
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water", "wipe counter"});
    auto params = init_parameters(method, classes, method == Method::name_tuning ? 0 : 3, rng,
                                  false,
                                  method == Method::name_tuning
                                      ? std::optional<PromptSpec>(prompt)
                                      : std::nullopt);
    for (auto& eps : params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = 0.2 * rng.normal();
    for (std::size_t i = 0; i < params.shared_context.size(); ++i)
        params.shared_context.data()[i] = 0.2 * rng.normal();
    for (auto& ctx : params.class_contexts)
        for (std::size_t i = 0; i < ctx.size(); ++i) ctx.data()[i] = 0.2 * rng.normal();

    std::vector<LabeledEmbedding> batch;
    for (int b = 0; b < 4; ++b)
        batch.push_back({random_vector(rng, 8), static_cast<int>(rng.uniform_int(3))});

    const auto grads = gradients(params, batch, enc, classes, alpha);
    const double h = 1e-3;
    double num = 0.0, den_a = 0.0, den_f = 0.0;
    const auto probe = [&](double* slot, double analytic) {
        const double orig = *slot;
        *slot = orig + h;
        const double fp = loss(params, batch, enc, classes, alpha);
        *slot = orig - h;
        const double fm = loss(params, batch, enc, classes, alpha);
        *slot = orig;
        const double fd = (fp - fm) / (2.0 * h);
        num += (analytic - fd) * (analytic - fd);
        den_a += analytic * analytic;
        den_f += fd * fd;
    };
    for (std::size_t j = 0; j < params.offsets.size(); ++j)
        for (std::size_t i = 0; i < params.offsets[j].size(); ++i)
            probe(&params.offsets[j].data()[i], grads.offsets[j].data()[i]);
    for (std::size_t i = 0; i < params.shared_context.size(); ++i)
        probe(&params.shared_context.data()[i], grads.shared_context.data()[i]);
    for (std::size_t j = 0; j < params.class_contexts.size(); ++j)
        for (std::size_t i = 0; i < params.class_contexts[j].size(); ++i)
            probe(&params.class_contexts[j].data()[i], grads.class_contexts[j].data()[i]);
    return std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-12});
}

struct ToyProblem {
    std::vector<ClassEntry> classes;
    PromptSpec prompt;
    std::vector<LabeledEmbedding> support, val, test;
};

ToyProblem toy_problem(const FrozenDualEncoder& enc, int k_shot, std::uint64_t seed) {
    ToyDatasetOptions opt;
    const auto toy = make_toy_traditional(enc, opt);
    ToyProblem out;
    out.classes = make_class_entries(enc, toy.dataset.class_names);
    out.prompt = make_prompt(enc, opt.prompt);
    const FeatureSource src = [&](const ManifestRow& row) { return toy.features.at(row.id); };
    const auto split = build_split(toy.dataset, Paradigm::traditional, src);
    SeededRng rng(seed);
    const Episode ep = sample_episode(split, Phase::train, static_cast<int>(out.classes.size()),
                                      k_shot, rng);
    out.support = ep.support;
    out.test = ep.query;
    for (const auto& item : split.val) out.val.push_back({item.embedding, item.label});
    return out;
}

}  // namespace

TEST_CASE("loss with zero offsets and any alpha equals plain cross-entropy") {
    const auto enc = toy_encoder();
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water", "wipe counter"});
    SeededRng rng(51);
    const auto params = init_parameters(Method::name_tuning, classes, 0, rng, false, prompt);
    std::vector<LabeledEmbedding> batch;
    for (int i = 0; i < 5; ++i)
        batch.push_back({random_vector(rng, 8), static_cast<int>(rng.uniform_int(3))});

    const double with_penalty = loss(params, batch, enc, classes, 100.0);
    const double without = loss(params, batch, enc, classes, 0.0);
    CHECK(with_penalty == without);

    const auto head = build_head(enc, prompt, classes);
    double ce = 0.0;
    for (const auto& item : batch) {
        const auto p = class_probabilities(item.embedding, head);
        ce -= std::log(p[static_cast<std::size_t>(item.label)]);
    }
    CHECK(with_penalty == doctest::Approx(ce).epsilon(1e-9));
}

TEST_CASE("a perfectly classified item adds zero loss") {
    // dot similarity and a tiny temperature drive the true-class probability
    // to 1 within double precision
    Matrix t(2, 2);
    t(0, 0) = 1.0;
    t(1, 0) = -1.0;
    LinearEncoderConfig cfg;
    cfg.space = small_space(Similarity::dot, 0.01);
    const LinearEncoder enc(cfg);
    const auto classes = test_classes(enc, {"stack plates", "pour water"});
    SeededRng rng(52);
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto params = init_parameters(Method::name_tuning, classes, 0, rng, false, prompt);

    const auto head = build_head(enc, prompt, classes);
    Vector yes(8, 0.0);
    for (std::size_t e = 0; e < 8; ++e) yes[e] = head.class_text_embeddings(0, e);
    const std::vector<LabeledEmbedding> one{{yes, 0}};
    const double l = loss(params, one, enc, classes, 0.0);
    CHECK(l == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("loss and gradients agree with the brute-force transcription") {
    const auto lin = linear_encoder();
    const auto toy = toy_encoder();
    SeededRng rng(53);
    for (int trial = 0; trial < 25; ++trial) {
        const FrozenDualEncoder& enc = trial % 2 == 0 ? static_cast<const FrozenDualEncoder&>(lin)
                                                      : static_cast<const FrozenDualEncoder&>(toy);
        const auto prompt = make_prompt(enc, "a video of {}");
        const auto classes = test_classes(enc, {"stack plates", "pour water", "wipe counter"});
        const Method method =
            std::vector<Method>{Method::name_tuning, Method::coop, Method::coop_csc,
                                Method::cona}[trial % 4];
        auto params = init_parameters(method, classes, method == Method::name_tuning ? 0 : 2, rng,
                                      false,
                                      method == Method::name_tuning
                                          ? std::optional<PromptSpec>(prompt)
                                          : std::nullopt);
        for (auto& eps : params.offsets)
            for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = 0.1 * rng.normal();

        std::vector<LabeledEmbedding> batch;
        for (int b = 0; b < 2; ++b)
            batch.push_back({random_vector(rng, 8), static_cast<int>(rng.uniform_int(3))});
        const double alpha = rng.uniform();
        CHECK(loss(params, batch, enc, classes, alpha) ==
              doctest::Approx(oracle_loss(params, batch, enc, classes, alpha)).epsilon(1e-6));
    }
}

TEST_CASE("loss rejects bad labels and non-finite embeddings") {
    const auto enc = toy_encoder();
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water"});
    SeededRng rng(54);
    const auto params = init_parameters(Method::name_tuning, classes, 0, rng, false, prompt);
    const std::vector<LabeledEmbedding> wrong_label{{Vector(8, 0.1), 2}};
    CHECK_THROWS_AS(loss(params, wrong_label, enc, classes, 0.0), ConfigError);
    Vector bad(8, 0.1);
    bad[3] = std::numeric_limits<double>::quiet_NaN();
    const std::vector<LabeledEmbedding> nan_item{{bad, 0}};
    CHECK_THROWS_AS(loss(params, nan_item, enc, classes, 0.0), NumericError);
}

TEST_CASE("penalty-only gradients equal alpha times the offsets") {
    const auto enc = toy_encoder();
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water"});
    SeededRng rng(55);
    auto params = init_parameters(Method::name_tuning, classes, 0, rng, false, prompt);
    for (auto& eps : params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();

    const double alpha = 1e4;
    const auto grads = gradients(params, {}, enc, classes, alpha);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < grads.offsets[j].size(); ++i)
            CHECK(grads.offsets[j].data()[i] == alpha * params.offsets[j].data()[i]);
}

TEST_CASE("cona contexts receive no penalty gradient") {
    const auto enc = toy_encoder();
    const auto classes = test_classes(enc, {"stack plates", "pour water"});
    SeededRng rng(56);
    auto params = init_parameters(Method::cona, classes, 4, rng);
    for (auto& eps : params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    const auto grads = gradients(params, {}, enc, classes, 50.0);
    for (std::size_t i = 0; i < grads.shared_context.size(); ++i)
        CHECK(grads.shared_context.data()[i] == 0.0);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < grads.offsets[j].size(); ++i)
            CHECK(grads.offsets[j].data()[i] == 50.0 * params.offsets[j].data()[i]);
}

TEST_CASE("analytic gradients match finite differences for every method and encoder") {
    const auto toy = toy_encoder(7, Similarity::cosine, 1.0);
    const auto lin = linear_encoder(11, Similarity::cosine, 1.0);
    for (Method m : {Method::name_tuning, Method::coop, Method::coop_csc, Method::cona}) {
        for (std::uint64_t s = 0; s < 5; ++s) {
            CAPTURE(to_string(m));
            CHECK(fd_gradient_rel_error(toy, m, 0.7, 100 + s) < 1e-4);
            CHECK(fd_gradient_rel_error(lin, m, 0.7, 200 + s) < 1e-4);
        }
    }
}

TEST_CASE("the random-name ablation trains without the penalty") {
    const auto enc = toy_encoder();
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water"});
    SeededRng rng(57);
    auto params = init_parameters(Method::name_tuning, classes, 0, rng, true, prompt);
    for (auto& eps : params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    const auto grads = gradients(params, {}, enc, classes, 10.0);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < grads.offsets[j].size(); ++i)
            CHECK(grads.offsets[j].data()[i] == 0.0);
    CHECK(loss(params, {}, enc, classes, 10.0) == 0.0);
}

TEST_CASE("zero learning rate leaves the initialization untouched") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 61);
    TrainConfig cfg = default_train_config(Method::name_tuning);
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    cfg.seed = 3;
    cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
    const auto res = train_run(p.support, nullptr, cfg, enc, p.classes, p.prompt);
    for (const auto& eps : res.final_params.offsets)
        for (std::size_t i = 0; i < eps.size(); ++i) CHECK(eps.data()[i] == 0.0);
}

TEST_CASE("checkpoint selection policies") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 62);
    TrainConfig cfg = default_train_config(Method::name_tuning);
    cfg.learning_rate = 4e-3;
    cfg.alpha = 0.01;
    cfg.epochs = 6;
    cfg.seed = 5;

    SUBCASE("best_validation needs a validation set") {
        CHECK_THROWS_AS(train_run(p.support, nullptr, cfg, enc, p.classes, p.prompt), ConfigError);
    }
    SUBCASE("empty training set is rejected") {
        CHECK_THROWS_AS(train_run({}, &p.val, cfg, enc, p.classes, p.prompt), ConfigError);
    }
    SUBCASE("final_epoch picks the last snapshot") {
        cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
        const auto res = train_run(p.support, &p.val, cfg, enc, p.classes, p.prompt);
        CHECK(res.selected_epoch == 6);
        REQUIRE(res.history.epochs.size() == 6);
    }
    SUBCASE("best_validation honors earliest-epoch tie breaking") {
        cfg.learning_rate = 0.0;  // every epoch has identical validation accuracy
        const auto res = train_run(p.support, &p.val, cfg, enc, p.classes, p.prompt);
        CHECK(res.selected_epoch == 1);
    }
    SUBCASE("monotone validation accuracy selects the maximum") {
        const auto res = train_run(p.support, &p.val, cfg, enc, p.classes, p.prompt);
        double best = -1.0;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < res.history.epochs.size(); ++i) {
            const double acc = *res.history.epochs[i].val_accuracy;
            if (acc > best) {
                best = acc;
                best_idx = i;
            }
        }
        CHECK(res.selected_epoch == static_cast<int>(best_idx) + 1);
    }
}

TEST_CASE("one small sgd step never increases the objective on the linear encoder") {
    LinearEncoderConfig lc;
    lc.space = small_space(Similarity::dot, 1.0);
    const LinearEncoder enc(lc);
    const auto prompt = make_prompt(enc, "a video of {}");
    const auto classes = test_classes(enc, {"stack plates", "pour water", "wipe counter"});
    SeededRng rng(63);
    for (int trial = 0; trial < 100; ++trial) {
        auto params = init_parameters(Method::name_tuning, classes, 0, rng, false, prompt);
        for (auto& eps : params.offsets)
            for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = 0.3 * rng.normal();
        std::vector<LabeledEmbedding> batch;
        for (int b = 0; b < 4; ++b)
            batch.push_back({random_vector(rng, 8), static_cast<int>(rng.uniform_int(3))});
        const double alpha = rng.uniform();
        const double before = loss(params, batch, enc, classes, alpha);
        Optimizer opt(OptimizerKind::sgd, 1e-4);
        opt.step(params, gradients(params, batch, enc, classes, alpha));
        CHECK(loss(params, batch, enc, classes, alpha) <= before + 1e-12);
    }
}

TEST_CASE("converged offset norms shrink as alpha grows on the convex encoder") {
    LinearEncoderConfig lc;
    lc.space = small_space(Similarity::dot, 1.0);
    const LinearEncoder enc(lc);
    const auto p = toy_problem(enc, 5, 64);

    double prev = 1e300;
    for (double alpha : {0.1, 10.0}) {
        TrainConfig cfg;
        cfg.method = Method::name_tuning;
        cfg.optimizer = OptimizerKind::sgd;
        cfg.learning_rate = 0.02;
        cfg.batch_size = static_cast<int>(p.support.size());
        cfg.epochs = 800;
        cfg.alpha = alpha;
        cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
        cfg.seed = 4;
        const auto res = train_run(p.support, nullptr, cfg, enc, p.classes, p.prompt);
        const double norm = std::sqrt(2.0 * parameter_l2(res.selected));
        CHECK(norm < prev);
        prev = norm;
    }
}

TEST_CASE("cona with empty context reproduces name tuning loss curves bit for bit") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 65);
    const auto empty_prompt = make_prompt(enc, "{}");

    TrainConfig nt_cfg = default_train_config(Method::name_tuning);
    nt_cfg.learning_rate = 1e-3;
    nt_cfg.alpha = 1.0;
    nt_cfg.epochs = 8;
    nt_cfg.seed = 11;
    nt_cfg.checkpoint_policy = CheckpointPolicy::final_epoch;

    TrainConfig cona_cfg = nt_cfg;
    cona_cfg.method = Method::cona;
    cona_cfg.context_length = 0;

    const auto nt = train_run(p.support, nullptr, nt_cfg, enc, p.classes, empty_prompt);
    const auto cona = train_run(p.support, nullptr, cona_cfg, enc, p.classes);
    REQUIRE(nt.history.epochs.size() == cona.history.epochs.size());
    for (std::size_t i = 0; i < nt.history.epochs.size(); ++i)
        CHECK(nt.history.epochs[i].train_loss == cona.history.epochs[i].train_loss);
}

TEST_CASE("encoder weights stay frozen through training") {
    const auto enc = toy_encoder();
    const auto digest = enc.weight_digest();
    const auto p = toy_problem(enc, 5, 66);
    TrainConfig cfg = default_train_config(Method::name_tuning);
    cfg.epochs = 3;
    cfg.seed = 2;
    cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
    train_run(p.support, nullptr, cfg, enc, p.classes, p.prompt);
    CHECK(enc.weight_digest() == digest);
}

TEST_CASE("training is bit-reproducible for identical config, seed and data") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 67);
    TrainConfig cfg = default_train_config(Method::cona);
    cfg.epochs = 5;
    cfg.seed = 13;
    cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
    const auto a = train_run(p.support, nullptr, cfg, enc, p.classes);
    const auto b = train_run(p.support, nullptr, cfg, enc, p.classes);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
        const double la = a.history.epochs[i].train_loss;
        const double lb = b.history.epochs[i].train_loss;
        CHECK(la == lb);
    }
}

TEST_CASE("grid search basics") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 68);

    SUBCASE("an empty grid is a configuration error") {
        CHECK_THROWS_AS(
            grid_search({}, p.support, p.val, enc, p.classes, p.prompt, 0), ConfigError);
    }
    SUBCASE("a single-point grid returns that point") {
        TrainConfig only = default_train_config(Method::name_tuning);
        only.epochs = 3;
        const auto res = grid_search({only}, p.support, p.val, enc, p.classes, p.prompt, 0);
        CHECK(res.best_config.learning_rate == only.learning_rate);
        CHECK(res.points.size() == 1);
    }
    SUBCASE("duplicated grid points cannot change the winner") {
        TrainConfig a = default_train_config(Method::name_tuning);
        a.epochs = 3;
        TrainConfig b = a;
        b.learning_rate = 4e-3;
        const auto dedup = grid_search({a, b}, p.support, p.val, enc, p.classes, p.prompt, 0);
        const auto dup = grid_search({a, a, b, a}, p.support, p.val, enc, p.classes, p.prompt, 0);
        CHECK(dedup.best_config.learning_rate == dup.best_config.learning_rate);
        CHECK(dedup.best_config.alpha == dup.best_config.alpha);
        CHECK(dedup.best_val_accuracy == dup.best_val_accuracy);
    }
    SUBCASE("an overwhelming penalty loses to a mild one on a tunable problem") {
        // zero-shot underperforms by construction, so the alpha that permits
        // tuning must win
        TrainConfig mild = default_train_config(Method::name_tuning);
        mild.learning_rate = 4e-3;
        mild.alpha = 0.01;
        TrainConfig crushing = mild;
        crushing.alpha = 1e6;
        const auto res =
            grid_search({mild, crushing}, p.support, p.val, enc, p.classes, p.prompt, 0);
        CHECK(res.best_config.alpha == 0.01);
    }
}

TEST_CASE("default grids match the published sweeps") {
    const auto nt = default_grid(Method::name_tuning, CheckpointPolicy::best_validation);
    CHECK(nt.size() == 16);
    CHECK(nt.front().learning_rate == 1e-5);
    CHECK(nt.front().alpha == 0.01);
    CHECK(nt.back().learning_rate == 4e-3);
    CHECK(nt.back().alpha == 10.0);
    for (const auto& cfg : nt) {
        CHECK(cfg.optimizer == OptimizerKind::adamw);
        CHECK(cfg.epochs == 20);
        CHECK(cfg.batch_size == 8);
    }

    const auto coop = default_grid(Method::coop, CheckpointPolicy::best_validation);
    CHECK(coop.size() == 8);
    for (const auto& cfg : coop) {
        CHECK(cfg.optimizer == OptimizerKind::sgd);
        CHECK(cfg.epochs == 50);
        CHECK((cfg.context_length == 8 || cfg.context_length == 16));
    }

    const auto cona = default_grid(Method::cona, CheckpointPolicy::best_validation);
    CHECK(cona.size() == 4);
    for (const auto& cfg : cona) {
        CHECK(cfg.learning_rate == 1e-5);
        CHECK(cfg.context_length == 4);
    }
    CHECK(cona[0].alpha == 1.0);
    CHECK(cona[3].alpha == 20.0);
}

TEST_CASE("short training sets collapse to a single batch") {
    const auto enc = toy_encoder();
    const auto p = toy_problem(enc, 5, 69);
    std::vector<LabeledEmbedding> tiny(p.support.begin(), p.support.begin() + 3);
    TrainConfig cfg = default_train_config(Method::name_tuning);
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 1;
    cfg.checkpoint_policy = CheckpointPolicy::final_epoch;
    CHECK_NOTHROW(train_run(tiny, nullptr, cfg, enc, p.classes, p.prompt));
}
