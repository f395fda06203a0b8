#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "nametune/fileutil.hpp"
#include "nametune/manifest.hpp"
#include "nametune/protocol.hpp"
#include "nametune/toydata.hpp"

namespace py = pybind11;
using namespace nametune;

namespace {

Matrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data());
    return m;
}

py::array_t<double> array_from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

Vector vector_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw DimensionError("expected a 1-d array");
    return Vector(a.data(), a.data() + a.size());
}

py::array_t<double> array_from_vector(const Vector& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<LabeledEmbedding> labeled_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
    const std::vector<int>& labels) {
    if (x.ndim() != 2) throw DimensionError("embeddings must be a 2-d array");
    if (static_cast<std::size_t>(x.shape(0)) != labels.size())
        throw DimensionError("embeddings and labels disagree on the item count");
    std::vector<LabeledEmbedding> out;
    out.reserve(labels.size());
    for (py::ssize_t i = 0; i < x.shape(0); ++i) {
        Vector v(x.data(i, 0), x.data(i, 0) + x.shape(1));
        out.push_back({std::move(v), labels[static_cast<std::size_t>(i)]});
    }
    return out;
}

struct PyEncoder {
    std::shared_ptr<FrozenDualEncoder> ptr;
};

EncoderConfig encoder_config(const std::string& type, std::uint64_t seed, int d_token, int d_embed,
                             const std::string& similarity, double temperature, int max_seq_len,
                             int depth, int heads, int ffn_hidden, int frames_per_video) {
    EncoderConfig cfg;
    cfg.type = type;
    cfg.seed = seed;
    cfg.space.d_token = d_token;
    cfg.space.d_embed = d_embed;
    cfg.space.similarity = similarity_from_string(similarity);
    cfg.space.temperature = temperature;
    cfg.space.max_seq_len = max_seq_len;
    cfg.depth = depth;
    cfg.heads = heads;
    cfg.ffn_hidden = ffn_hidden;
    cfg.frames_per_video = frames_per_video;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_nametune, m) {
    m.doc() = "few-shot text-input tuning for frozen dual-encoder models";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DimensionError>(m, "DimensionError");
    py::register_exception<SequenceLengthError>(m, "SequenceLengthError");

    py::class_<EmbeddingSpace>(m, "EmbeddingSpace")
        .def_readonly("d_token", &EmbeddingSpace::d_token)
        .def_readonly("d_embed", &EmbeddingSpace::d_embed)
        .def_readonly("temperature", &EmbeddingSpace::temperature)
        .def_readonly("max_seq_len", &EmbeddingSpace::max_seq_len)
        .def_property_readonly("similarity",
                               [](const EmbeddingSpace& s) { return to_string(s.similarity); });

    py::class_<PyEncoder>(m, "Encoder")
        .def_property_readonly("space", [](const PyEncoder& e) { return e.ptr->space(); })
        .def_property_readonly("frames_per_video",
                               [](const PyEncoder& e) { return e.ptr->frames_per_video(); })
        .def("tokenize",
             [](const PyEncoder& e, const std::string& text) {
                 return array_from_matrix(e.ptr->tokenize(text).rows);
             })
        .def("encode_text",
             [](const PyEncoder& e, const py::array_t<double, py::array::c_style |
                                                                   py::array::forcecast>& tokens) {
                 return array_from_vector(e.ptr->encode_text(TokenSequence(matrix_from_array(tokens))));
             })
        .def("text_input_gradient",
             [](const PyEncoder& e,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& tokens,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& cotangent) {
                 return array_from_matrix(e.ptr->text_input_gradient(
                     TokenSequence(matrix_from_array(tokens)), vector_from_array(cotangent)));
             })
        .def("encode_media",
             [](const PyEncoder& e, const std::string& path, int frame_count) {
                 return array_from_vector(encode_video(*e.ptr, MediaRef{path, path, frame_count}));
             },
             py::arg("path"), py::arg("frame_count"))
        .def("weight_digest", [](const PyEncoder& e) { return e.ptr->weight_digest(); });

    m.def(
        "toy_transformer_encoder",
        [](std::uint64_t seed, int d_token, int d_embed, const std::string& similarity,
           double temperature, int max_seq_len, int depth, int heads, int ffn_hidden,
           int frames_per_video) {
            return PyEncoder{make_encoder(encoder_config("toy_transformer", seed, d_token, d_embed,
                                                         similarity, temperature, max_seq_len,
                                                         depth, heads, ffn_hidden,
                                                         frames_per_video))};
        },
        py::arg("seed") = 7, py::arg("d_token") = 16, py::arg("d_embed") = 8,
        py::arg("similarity") = "cosine", py::arg("temperature") = 0.05,
        py::arg("max_seq_len") = 16, py::arg("depth") = 2, py::arg("heads") = 2,
        py::arg("ffn_hidden") = 32, py::arg("frames_per_video") = 10);

    m.def(
        "linear_encoder",
        [](std::uint64_t seed, int d_token, int d_embed, const std::string& similarity,
           double temperature, int max_seq_len, int frames_per_video) {
            return PyEncoder{make_encoder(encoder_config("linear", seed, d_token, d_embed,
                                                         similarity, temperature, max_seq_len, 2,
                                                         2, 32, frames_per_video))};
        },
        py::arg("seed") = 11, py::arg("d_token") = 16, py::arg("d_embed") = 8,
        py::arg("similarity") = "cosine", py::arg("temperature") = 0.05,
        py::arg("max_seq_len") = 16, py::arg("frames_per_video") = 10);

    py::class_<ClassEntry>(m, "ClassEntry")
        .def_readonly("class_id", &ClassEntry::class_id)
        .def_readonly("name_text", &ClassEntry::name_text)
        .def_property_readonly(
            "name_tokens", [](const ClassEntry& e) { return array_from_matrix(e.name_tokens.rows); });

    m.def("make_classes", [](const PyEncoder& enc, const std::vector<std::string>& names) {
        return make_class_entries(*enc.ptr, names);
    });

    py::class_<PromptSpec>(m, "PromptSpec")
        .def_readonly("template_text", &PromptSpec::template_text)
        .def_property_readonly("prefix_length",
                               [](const PromptSpec& p) { return p.tokenized_prefix.length(); });

    m.def("make_prompt", [](const PyEncoder& enc, const std::string& template_text) {
        return make_prompt(*enc.ptr, template_text);
    });

    py::class_<ClassifierHead>(m, "ClassifierHead")
        .def_property_readonly(
            "embeddings", [](const ClassifierHead& h) { return array_from_matrix(h.class_text_embeddings); })
        .def_property_readonly("size", [](const ClassifierHead& h) { return h.size(); });

    m.def("build_head", [](const PyEncoder& enc, const PromptSpec& prompt,
                           const std::vector<ClassEntry>& classes) {
        return build_head(*enc.ptr, prompt, classes);
    });
    m.def("build_tuned_head", [](const PyEncoder& enc, const std::vector<ClassEntry>& classes,
                                 const TextParameterSet& params) {
        return build_head(*enc.ptr, classes, params);
    });
    m.def("ensemble_head", [](const PyEncoder& enc, const std::vector<PromptSpec>& prompts,
                              const std::vector<ClassEntry>& classes) {
        return ensemble_head(*enc.ptr, prompts, classes);
    });

    m.def("class_probabilities",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
             const ClassifierHead& head) {
              const auto p = class_probabilities(vector_from_array(v), head);
              return array_from_vector(Vector(p.begin(), p.end()));
          });
    m.def("predict", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
                        const ClassifierHead& head) { return predict(vector_from_array(v), head); });

    py::class_<TextParameterSet>(m, "TextParameterSet")
        .def_property_readonly("method",
                               [](const TextParameterSet& p) { return to_string(p.method); })
        .def_readonly("context_length", &TextParameterSet::context_length)
        .def_readonly("ablation_random_names", &TextParameterSet::ablation_random_names)
        .def_property_readonly("offsets",
                               [](const TextParameterSet& p) {
                                   std::vector<py::array_t<double>> out;
                                   for (const auto& eps : p.offsets)
                                       out.push_back(array_from_matrix(eps));
                                   return out;
                               })
        .def_property_readonly("shared_context", [](const TextParameterSet& p) {
            return array_from_matrix(p.shared_context);
        });

    m.def(
        "init_parameters",
        [](const std::string& method, const std::vector<ClassEntry>& classes, int context_length,
           std::uint64_t seed, bool ablation_random_names, const PromptSpec* prompt) {
            SeededRng rng(seed);
            std::optional<PromptSpec> p;
            if (prompt) p = *prompt;
            return init_parameters(method_from_string(method), classes, context_length, rng,
                                   ablation_random_names, std::move(p));
        },
        py::arg("method"), py::arg("classes"), py::arg("context_length") = 0, py::arg("seed") = 0,
        py::arg("ablation_random_names") = false, py::arg("prompt") = nullptr);

    m.def("parameter_l2", &parameter_l2);
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("params"),
          py::arg("epoch"), py::arg("seed"));
    m.def("load_checkpoint", [](const std::string& path) {
        const auto loaded = load_checkpoint(path);
        return py::make_tuple(loaded.params, loaded.epoch, loaded.seed);
    });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](const std::string& method, const std::string& optimizer,
                         double learning_rate, int batch_size, int epochs, double alpha,
                         int context_length, const std::string& checkpoint_policy,
                         std::uint64_t seed) {
                 TrainConfig cfg = default_train_config(method_from_string(method));
                 cfg.optimizer = optimizer_from_string(optimizer);
                 cfg.learning_rate = learning_rate;
                 cfg.batch_size = batch_size;
                 cfg.epochs = epochs;
                 cfg.alpha = alpha;
                 cfg.context_length = context_length;
                 cfg.checkpoint_policy = checkpoint_policy_from_string(checkpoint_policy);
                 cfg.seed = seed;
                 return cfg;
             }),
             py::arg("method"), py::arg("optimizer") = "adamw", py::arg("learning_rate") = 1e-4,
             py::arg("batch_size") = 8, py::arg("epochs") = 20, py::arg("alpha") = 1.0,
             py::arg("context_length") = 0, py::arg("checkpoint_policy") = "final_epoch",
             py::arg("seed") = 0)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("seed", &TrainConfig::seed);

    m.def(
        "loss",
        [](const TextParameterSet& params,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::vector<int>& labels, const PyEncoder& enc,
           const std::vector<ClassEntry>& classes, double alpha) {
            return loss(params, labeled_from_arrays(x, labels), *enc.ptr, classes, alpha);
        },
        py::arg("params"), py::arg("embeddings"), py::arg("labels"), py::arg("encoder"),
        py::arg("classes"), py::arg("alpha"));

    m.def(
        "train_run",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::vector<int>& labels, const TrainConfig& cfg, const PyEncoder& enc,
           const std::vector<ClassEntry>& classes, const PromptSpec* prompt,
           bool ablation_random_names) {
            std::optional<PromptSpec> p;
            if (prompt) p = *prompt;
            const auto res = train_run(labeled_from_arrays(x, labels), nullptr, cfg, *enc.ptr,
                                       classes, std::move(p), ablation_random_names);
            py::list history;
            for (const auto& rec : res.history.epochs) {
                py::dict d;
                d["epoch"] = rec.epoch;
                d["loss"] = rec.train_loss;
                if (rec.val_accuracy) d["val_accuracy"] = *rec.val_accuracy;
                history.append(d);
            }
            py::dict out;
            out["selected"] = res.selected;
            out["selected_epoch"] = res.selected_epoch;
            out["history"] = history;
            return out;
        },
        py::arg("embeddings"), py::arg("labels"), py::arg("config"), py::arg("encoder"),
        py::arg("classes"), py::arg("prompt") = nullptr, py::arg("ablation_random_names") = false);

    m.def(
        "evaluate",
        [](const TextParameterSet& params, const PyEncoder& enc,
           const std::vector<ClassEntry>& classes,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::vector<int>& labels) {
            return evaluate(params, *enc.ptr, classes, labeled_from_arrays(x, labels));
        });
    m.def("evaluate_head",
          [](const ClassifierHead& head,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
             const std::vector<int>& labels) {
              return evaluate(head, labeled_from_arrays(x, labels));
          });

    m.def("uniform_frame_indices", &uniform_frame_indices, py::arg("total"), py::arg("k"));

    m.def(
        "write_toy_datasets",
        [](const PyEncoder& enc, const std::string& out_dir, std::uint64_t seed) {
            ToyDatasetOptions opt;
            opt.seed = seed;
            write_toy_dataset(out_dir + "/traditional", make_toy_traditional(*enc.ptr, opt));
            write_toy_dataset(out_dir + "/meta", make_toy_meta(*enc.ptr, opt));
            save_manifest(out_dir + "/frames-demo/manifest.jsonl", make_frames_demo_dataset());
        },
        py::arg("encoder"), py::arg("out_dir"), py::arg("seed") = 2024);

    m.def(
        "run_protocol_file",
        [](const std::string& config_path) {
            const RunConfigFile cfg = load_run_config(config_path);
            std::shared_ptr<const FrozenDualEncoder> enc(make_encoder(cfg.encoder));
            const Dataset dataset = load_manifest(cfg.manifest_path);
            FeatureSource source;
            std::shared_ptr<FeatureCacheEncoder> cache;
            if (cfg.visual_cache) {
                cache = std::make_shared<FeatureCacheEncoder>(
                    FeatureCacheEncoder::load(*cfg.visual_cache, enc->space()));
                source = cache_feature_source(cache);
            } else {
                source = encoder_feature_source(enc);
            }
            const DatasetSplit split = build_split(dataset, cfg.plan.paradigm, source);
            const auto classes = make_class_entries(*enc, dataset.class_names);
            const RunRecord record = run_protocol(split, cfg.plan, *enc, classes);
            return run_record_to_json(record).dump();
        },
        py::arg("config_path"));
}
