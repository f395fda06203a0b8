#include "nametune/textparams.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "nametune/fileutil.hpp"

namespace nametune {

namespace {

constexpr double kContextInitStd = 0.02;

bool uses_offsets(Method m) { return m == Method::name_tuning || m == Method::cona; }
bool uses_shared_context(Method m) { return m == Method::coop || m == Method::cona; }

Matrix normal_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
    return m;
}

Matrix quantize_matrix(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i)
        out.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
    return out;
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::name_tuning: return "name_tuning";
        case Method::coop: return "coop";
        case Method::coop_csc: return "coop_csc";
        case Method::cona: return "cona";
    }
    return "name_tuning";
}

Method method_from_string(const std::string& s) {
    if (s == "name_tuning" || s == "name-tuning") return Method::name_tuning;
    if (s == "coop") return Method::coop;
    if (s == "coop_csc" || s == "coop-csc") return Method::coop_csc;
    if (s == "cona") return Method::cona;
    throw ConfigError("unknown method '" + s + "' (valid: name-tuning, coop, coop-csc, cona)");
}

void TextParameterSet::validate(const std::vector<ClassEntry>& classes) const {
    const std::size_t n = classes.size();
    if (static_cast<std::size_t>(num_classes) != n)
        throw ConfigError("parameter set built for " + std::to_string(num_classes) +
                          " classes, got " + std::to_string(n));
    switch (method) {
        case Method::name_tuning:
            if (offsets.size() != n) throw ConfigError("name_tuning: offsets missing");
            if (!fixed_prompt) throw ConfigError("name_tuning: fixed prompt missing");
            if (!class_contexts.empty() || shared_context.rows() != 0)
                throw ConfigError("name_tuning: contexts must be absent");
            break;
        case Method::coop:
            if (shared_context.rows() == 0) throw ConfigError("coop: shared context missing");
            if (!offsets.empty()) throw ConfigError("coop: offsets must be absent");
            break;
        case Method::coop_csc:
            if (class_contexts.size() != n) throw ConfigError("coop_csc: need one context per class");
            if (!offsets.empty()) throw ConfigError("coop_csc: offsets must be absent");
            break;
        case Method::cona:
            if (offsets.size() != n) throw ConfigError("cona: offsets missing");
            if (!class_contexts.empty()) throw ConfigError("cona: class contexts must be absent");
            if (static_cast<int>(shared_context.rows()) != context_length)
                throw ConfigError("cona: shared context shape mismatch");
            break;
    }
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const Matrix& shape = ablation_random_names ? random_name_tokens[i] : classes[i].name_tokens.rows;
        if (!offsets[i].same_shape(shape))
            throw DimensionError("offset shape mismatch for class '" + classes[i].name_text + "'");
    }
}

TextParameterSet init_parameters(Method method, const std::vector<ClassEntry>& classes,
                                 int context_length, SeededRng& rng, bool ablation_random_names,
                                 std::optional<PromptSpec> fixed_prompt) {
    validate_class_set(classes);
    if (classes.empty()) throw ConfigError("init_parameters: empty class set");
    const bool needs_context = method != Method::name_tuning;
    if (needs_context && context_length < 0)
        throw ConfigError("init_parameters: context_length must be >= 0");
    const auto d = classes.front().name_tokens.width();

    TextParameterSet params;
    params.method = method;
    params.num_classes = static_cast<int>(classes.size());
    params.context_length = needs_context ? context_length : 0;
    if (method == Method::name_tuning) {
        if (!fixed_prompt) throw ConfigError("init_parameters: name_tuning needs a fixed prompt");
        params.fixed_prompt = std::move(fixed_prompt);
    }

    if (uses_shared_context(method)) {
        params.shared_context =
            normal_matrix(rng, static_cast<std::size_t>(params.context_length), d, kContextInitStd);
    } else if (method == Method::coop_csc) {
        params.class_contexts.reserve(classes.size());
        for (std::size_t i = 0; i < classes.size(); ++i)
            params.class_contexts.push_back(
                normal_matrix(rng, static_cast<std::size_t>(params.context_length), d, kContextInitStd));
    }

    if (uses_offsets(method)) {
        params.offsets.reserve(classes.size());
        for (const auto& entry : classes)
            params.offsets.emplace_back(entry.name_tokens.length(), entry.name_tokens.width());
    }

    if (ablation_random_names) {
        if (!uses_offsets(method))
            throw ConfigError("init_parameters: random-name ablation applies to offset methods only");
        params.ablation_random_names = true;
        params.random_name_tokens.reserve(classes.size());
        for (const auto& entry : classes)
            params.random_name_tokens.push_back(
                normal_matrix(rng, entry.name_tokens.length(), entry.name_tokens.width(), kContextInitStd));
    }

    params.validate(classes);
    return params;
}

TokenSequence assemble(const TextParameterSet& params, const ClassEntry& entry, int max_seq_len) {
    const auto idx = static_cast<std::size_t>(entry.class_id);
    TokenSequence replaced;
    const TokenSequence* name = &entry.name_tokens;
    if (params.ablation_random_names) {
        replaced = TokenSequence(params.random_name_tokens.at(idx), entry.name_text);
        name = &replaced;
    }
    const TokenSequence& base_name = *name;

    TokenSequence assembled;
    switch (params.method) {
        case Method::name_tuning:
            assembled = concat(params.fixed_prompt->tokenized_prefix,
                               add_offset(base_name, params.offsets.at(idx)));
            break;
        case Method::coop:
            assembled = concat(TokenSequence(params.shared_context), base_name);
            break;
        case Method::coop_csc:
            assembled = concat(TokenSequence(params.class_contexts.at(idx)), base_name);
            break;
        case Method::cona:
            assembled = concat(TokenSequence(params.shared_context),
                               add_offset(base_name, params.offsets.at(idx)));
            break;
    }
    if (max_seq_len > 0 && static_cast<int>(assembled.length()) > max_seq_len)
        throw SequenceLengthError("assemble: input for class '" + entry.name_text + "' has length " +
                                  std::to_string(assembled.length()) + " > max_seq_len " +
                                  std::to_string(max_seq_len));
    return assembled;
}

double parameter_l2(const TextParameterSet& params) {
    double acc = 0.0;
    for (const auto& eps : params.offsets) acc += squared_frobenius(eps);
    return 0.5 * acc;
}

TextParameterSet quantize_to_f32(const TextParameterSet& params) {
    TextParameterSet out = params;
    out.shared_context = quantize_matrix(params.shared_context);
    for (auto& m : out.class_contexts) m = quantize_matrix(m);
    for (auto& m : out.offsets) m = quantize_matrix(m);
    for (auto& m : out.random_name_tokens) m = quantize_matrix(m);
    return out;
}

ClassifierHead build_head(const FrozenDualEncoder& enc, const std::vector<ClassEntry>& classes,
                          const TextParameterSet& params) {
    if (classes.empty()) throw ConfigError("build_head: empty class set");
    ClassifierHead head;
    head.space = enc.space();
    head.class_text_embeddings = Matrix(classes.size(), static_cast<std::size_t>(head.space.d_embed));
    for (const auto& entry : classes) {
        const TokenSequence input = assemble(params, entry, head.space.max_seq_len);
        const Vector emb = enc.encode_text(input);
        auto row = head.class_text_embeddings.row(static_cast<std::size_t>(entry.class_id));
        std::copy(emb.begin(), emb.end(), row.begin());
    }
    return head;
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

template <class T>
void write_le(std::string& out, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const std::string& what) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw IoError("checkpoint: truncated while reading " + what);
    return value;
}

void write_tensor(std::string& out, const Matrix& m) {
    write_le<std::uint8_t>(out, 2u);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (std::size_t i = 0; i < m.size(); ++i)
        write_le<float>(out, static_cast<float>(m.data()[i]));
}

Matrix read_tensor(std::istream& in) {
    const auto rank = read_le<std::uint8_t>(in, "tensor rank");
    if (rank != 2) throw ParseError("checkpoint: unsupported tensor rank " + std::to_string(rank));
    const auto rows = read_le<std::uint32_t>(in, "tensor rows");
    const auto cols = read_le<std::uint32_t>(in, "tensor cols");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<double>(read_le<float>(in, "tensor payload"));
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const TextParameterSet& params, int epoch,
                     std::uint64_t seed) {
    std::string bytes;
    bytes.append("NTPC", 4);
    write_le<std::uint32_t>(bytes, 1u);
    write_le<std::uint8_t>(bytes, static_cast<std::uint8_t>(params.method));
    write_le<std::uint8_t>(bytes, params.ablation_random_names ? 1u : 0u);
    write_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(params.num_classes));
    write_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(epoch));
    write_le<std::uint64_t>(bytes, seed);

    if (params.method == Method::coop || params.method == Method::cona)
        write_tensor(bytes, params.shared_context);
    for (const auto& m : params.class_contexts) write_tensor(bytes, m);
    for (const auto& m : params.offsets) write_tensor(bytes, m);
    for (const auto& m : params.random_name_tokens) write_tensor(bytes, m);

    atomic_write_file(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "NTPC", 4) != 0)
        throw ParseError("checkpoint: bad magic in " + path);
    const auto version = read_le<std::uint32_t>(in, "version");
    if (version != 1) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    const auto method_code = read_le<std::uint8_t>(in, "method");
    if (method_code > 3) throw ParseError("checkpoint: bad method code " + std::to_string(method_code));
    const auto ablation = read_le<std::uint8_t>(in, "ablation flag");
    const auto n = read_le<std::uint32_t>(in, "class count");

    LoadedCheckpoint out;
    out.params.method = static_cast<Method>(method_code);
    out.params.ablation_random_names = ablation != 0;
    out.params.num_classes = static_cast<int>(n);
    out.epoch = static_cast<int>(read_le<std::uint32_t>(in, "epoch"));
    out.seed = read_le<std::uint64_t>(in, "seed");

    auto& p = out.params;
    if (p.method == Method::coop || p.method == Method::cona) {
        p.shared_context = read_tensor(in);
        p.context_length = static_cast<int>(p.shared_context.rows());
    }
    if (p.method == Method::coop_csc) {
        p.class_contexts.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) p.class_contexts.push_back(read_tensor(in));
        if (n > 0) p.context_length = static_cast<int>(p.class_contexts.front().rows());
    }
    if (p.method == Method::name_tuning || p.method == Method::cona) {
        p.offsets.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) p.offsets.push_back(read_tensor(in));
    }
    if (p.ablation_random_names) {
        p.random_name_tokens.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) p.random_name_tokens.push_back(read_tensor(in));
    }
    return out;
}

}  // namespace nametune
