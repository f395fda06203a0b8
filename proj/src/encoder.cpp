#include "nametune/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nametune/fileutil.hpp"

namespace nametune {

namespace {

constexpr double kLnEps = 1e-5;

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
        }
    return out;
}

Matrix random_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
    return m;
}

Vector random_vector(SeededRng& rng, std::size_t n, double mean, double stddev) {
    Vector v(n);
    for (auto& x : v) x = rng.normal(mean, stddev);
    return v;
}

std::uint64_t digest_matrix(std::uint64_t h, const Matrix& m) {
    return fnv1a64(m.data(), m.size() * sizeof(double), h);
}

std::uint64_t digest_vector(std::uint64_t h, const Vector& v) {
    return fnv1a64(v.data(), v.size() * sizeof(double), h);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); }

double gelu_grad(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return phi + x * pdf;
}

Vector synth_frame_embedding(std::uint64_t visual_seed, const MediaRef& media, int frame_index,
                             int d_embed) {
    SeededRng rng(mix_seed(mix_seed(visual_seed, fnv1a64(media.path)),
                           static_cast<std::uint64_t>(frame_index)));
    Vector v(d_embed);
    for (auto& x : v) x = rng.normal();
    return v;
}

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
        throw IoError("feature cache: truncated while reading " + what);
    return value;
}

}  // namespace

Vector FrozenDualEncoder::encode_text(const TokenSequence& t) const {
    if (t.length() < 1) throw SequenceLengthError("encode_text: empty token sequence");
    if (static_cast<int>(t.length()) > space_.max_seq_len)
        throw SequenceLengthError("encode_text: sequence length " + std::to_string(t.length()) +
                                  " exceeds max_seq_len " + std::to_string(space_.max_seq_len));
    if (static_cast<int>(t.width()) != space_.d_token)
        throw DimensionError("encode_text: token width " + std::to_string(t.width()) +
                             " != d_token " + std::to_string(space_.d_token));
    return encode_text_impl(t);
}

Matrix FrozenDualEncoder::text_input_gradient(const TokenSequence& t, const Vector& cotangent) const {
    if (t.length() < 1) throw SequenceLengthError("text_input_gradient: empty token sequence");
    if (static_cast<int>(t.length()) > space_.max_seq_len)
        throw SequenceLengthError("text_input_gradient: sequence length " +
                                  std::to_string(t.length()) + " exceeds max_seq_len " +
                                  std::to_string(space_.max_seq_len));
    if (static_cast<int>(t.width()) != space_.d_token)
        throw DimensionError("text_input_gradient: token width mismatch");
    if (static_cast<int>(cotangent.size()) != space_.d_embed)
        throw DimensionError("text_input_gradient: cotangent size " +
                             std::to_string(cotangent.size()) + " != d_embed " +
                             std::to_string(space_.d_embed));
    return text_input_gradient_impl(t, cotangent);
}

std::vector<int> uniform_frame_indices(int total, int k) {
    if (total < 1) throw ConfigError("uniform_frame_indices: total must be >= 1");
    if (k < 1) throw ConfigError("uniform_frame_indices: k must be >= 1");
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) {
        idx[i] = static_cast<int>((2 * i + 1) * static_cast<std::int64_t>(total) / (2 * k));
    }
    return idx;
}

Vector mean_embedding(const std::vector<Vector>& frames) {
    if (frames.empty()) throw DegenerateInputError("mean_embedding: empty frame list");
    Vector out(frames.front().size(), 0.0);
    for (const auto& f : frames) {
        if (f.size() != out.size()) throw DimensionError("mean_embedding: frame width mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += f[i];
    }
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (auto& x : out) x *= inv;
    return out;
}

Vector encode_video(const FrozenDualEncoder& enc, const MediaRef& media) {
    if (media.frame_count < 1)
        throw DegenerateInputError("encode_video: media '" + media.key + "' has no frames");
    const auto indices = uniform_frame_indices(media.frame_count, enc.frames_per_video());
    std::vector<Vector> frames;
    frames.reserve(indices.size());
    for (int idx : indices) frames.push_back(enc.encode_frame(media, idx));
    return mean_embedding(frames);
}

// ---------------------------------------------------------------------------
// ToyTokenizer

ToyTokenizer::ToyTokenizer(std::uint64_t seed, int d_token, int vocab_size, double scale)
    : d_token_(d_token), vocab_size_(vocab_size) {
    SeededRng rng(mix_seed(seed, 0x746F6B656EULL));  // "token"
    table_ = random_matrix(rng, static_cast<std::size_t>(vocab_size), static_cast<std::size_t>(d_token), scale);
}

TokenSequence ToyTokenizer::tokenize(const std::string& text) const {
    std::istringstream in(text);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    Matrix rows(words.size(), static_cast<std::size_t>(d_token_));
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto slot = fnv1a64(words[i]) % static_cast<std::uint64_t>(vocab_size_);
        const auto src = table_.row(static_cast<std::size_t>(slot));
        std::copy(src.begin(), src.end(), rows.row(i).begin());
    }
    return TokenSequence(std::move(rows), text);
}

std::uint64_t ToyTokenizer::digest(std::uint64_t h) const { return digest_matrix(h, table_); }

// ---------------------------------------------------------------------------
// ToyTransformerEncoder

struct LnTrace {
    Matrix xhat;
    Vector rstd;
};

struct ToyTransformerEncoder::Trace {
    struct BlockTrace {
        LnTrace ln1;
        Matrix q, k, v;
        std::vector<Matrix> attn;  // one l x l map per head
        LnTrace ln2;
        Matrix ffn_pre;
    };
    std::vector<BlockTrace> blocks;
    LnTrace lnf;
};

namespace {

Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, LnTrace* trace) {
    const std::size_t d = x.cols();
    Matrix y(x.rows(), d);
    if (trace) {
        trace->xhat = Matrix(x.rows(), d);
        trace->rstd.assign(x.rows(), 0.0);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (x(i, j) - mean) * rstd;
            if (trace) trace->xhat(i, j) = xhat;
            y(i, j) = gain[j] * xhat + bias[j];
        }
        if (trace) trace->rstd[i] = rstd;
    }
    return y;
}

Matrix layer_norm_backward(const LnTrace& trace, const Vector& gain, const Matrix& dy) {
    const std::size_t d = dy.cols();
    Matrix dx(dy.rows(), d);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dy(i, j) * gain[j];
            m1 += dxhat;
            m2 += dxhat * trace.xhat(i, j);
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = dy(i, j) * gain[j];
            dx(i, j) = trace.rstd[i] * (dxhat - m1 - trace.xhat(i, j) * m2);
        }
    }
    return dx;
}

void softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double mx = r[0];
        for (double v : r) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : r) v /= sum;
    }
}

}  // namespace

ToyTransformerEncoder::ToyTransformerEncoder(ToyTransformerConfig cfg)
    : FrozenDualEncoder(cfg.space, cfg.frames_per_video),
      cfg_(cfg),
      tokenizer_(cfg.seed, cfg.space.d_token, cfg.vocab_size,
                 1.0 / std::sqrt(static_cast<double>(cfg.space.d_token))) {
    if (cfg_.depth < 1 || cfg_.heads < 1 || cfg_.ffn_hidden < 1)
        throw ConfigError("toy transformer: depth, heads and ffn_hidden must be >= 1");
    if (cfg_.space.d_token % cfg_.heads != 0)
        throw ConfigError("toy transformer: d_token must be divisible by heads");

    const auto d = static_cast<std::size_t>(cfg_.space.d_token);
    const auto h = static_cast<std::size_t>(cfg_.ffn_hidden);
    SeededRng rng(mix_seed(cfg_.seed, 0x7765696768747355ULL));
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    pos_ = random_matrix(rng, static_cast<std::size_t>(cfg_.space.max_seq_len), d, 0.02);
    blocks_.resize(static_cast<std::size_t>(cfg_.depth));
    for (auto& blk : blocks_) {
        blk.wq = random_matrix(rng, d, d, wstd);
        blk.wk = random_matrix(rng, d, d, wstd);
        blk.wv = random_matrix(rng, d, d, wstd);
        blk.wo = random_matrix(rng, d, d, wstd);
        blk.ln1_g = random_vector(rng, d, 1.0, 0.1);
        blk.ln1_b = random_vector(rng, d, 0.0, 0.02);
        blk.w1 = random_matrix(rng, d, h, wstd);
        blk.b1 = random_vector(rng, h, 0.0, 0.02);
        blk.w2 = random_matrix(rng, h, d, 1.0 / std::sqrt(static_cast<double>(h)));
        blk.b2 = random_vector(rng, d, 0.0, 0.02);
        blk.ln2_g = random_vector(rng, d, 1.0, 0.1);
        blk.ln2_b = random_vector(rng, d, 0.0, 0.02);
    }
    lnf_g = random_vector(rng, d, 1.0, 0.1);
    lnf_b = random_vector(rng, d, 0.0, 0.02);
    w_out_ = random_matrix(rng, d, static_cast<std::size_t>(cfg_.space.d_embed), wstd);
    visual_seed_ = mix_seed(cfg_.seed, 0x76697375616CULL);  // "visual"
}

TokenSequence ToyTransformerEncoder::tokenize(const std::string& text) const {
    return tokenizer_.tokenize(text);
}

Vector ToyTransformerEncoder::encode_frame(const MediaRef& media, int frame_index) const {
    return synth_frame_embedding(visual_seed_, media, frame_index, space_.d_embed);
}

Vector ToyTransformerEncoder::forward(const TokenSequence& t, Trace* trace) const {
    const std::size_t l = t.length();
    const std::size_t d = t.width();
    const int nh = cfg_.heads;
    const std::size_t dh = d / static_cast<std::size_t>(nh);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix x = t.rows;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) += pos_(i, j);

    if (trace) trace->blocks.resize(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const Block& blk = blocks_[b];
        auto* bt = trace ? &trace->blocks[b] : nullptr;

        Matrix y = layer_norm(x, blk.ln1_g, blk.ln1_b, bt ? &bt->ln1 : nullptr);
        Matrix q = matmul(y, blk.wq);
        Matrix k = matmul(y, blk.wk);
        Matrix v = matmul(y, blk.wv);

        Matrix heads_out(l, d);
        std::vector<Matrix> attn(static_cast<std::size_t>(nh));
        for (int hh = 0; hh < nh; ++hh) {
            const std::size_t off = static_cast<std::size_t>(hh) * dh;
            Matrix scores(l, l);
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 0; j < l; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
                    scores(i, j) = s * att_scale;
                }
            softmax_rows(scores);
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t c = 0; c < dh; ++c) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < l; ++j) s += scores(i, j) * v(j, off + c);
                    heads_out(i, off + c) = s;
                }
            attn[static_cast<std::size_t>(hh)] = std::move(scores);
        }
        Matrix o = matmul(heads_out, blk.wo);
        x += o;

        if (bt) {
            bt->q = std::move(q);
            bt->k = std::move(k);
            bt->v = std::move(v);
            bt->attn = std::move(attn);
        }

        Matrix z = layer_norm(x, blk.ln2_g, blk.ln2_b, bt ? &bt->ln2 : nullptr);
        Matrix u = matmul(z, blk.w1);
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < u.cols(); ++j) u(i, j) += blk.b1[j];
        Matrix g(l, u.cols());
        for (std::size_t i = 0; i < u.size(); ++i) g.data()[i] = gelu(u.data()[i]);
        if (bt) bt->ffn_pre = std::move(u);
        Matrix m = matmul(g, blk.w2);
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < d; ++j) m(i, j) += blk.b2[j];
        x += m;
    }

    Matrix f = layer_norm(x, lnf_g, lnf_b, trace ? &trace->lnf : nullptr);
    Vector pooled(d, 0.0);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) pooled[j] += f(i, j);
    const double inv_l = 1.0 / static_cast<double>(l);
    for (auto& p : pooled) p *= inv_l;

    Vector out(static_cast<std::size_t>(cfg_.space.d_embed), 0.0);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t e = 0; e < out.size(); ++e) out[e] += pooled[j] * w_out_(j, e);
    return out;
}

Vector ToyTransformerEncoder::encode_text_impl(const TokenSequence& t) const {
    return forward(t, nullptr);
}

Matrix ToyTransformerEncoder::text_input_gradient_impl(const TokenSequence& t,
                                                       const Vector& cotangent) const {
    const std::size_t l = t.length();
    const std::size_t d = t.width();
    const int nh = cfg_.heads;
    const std::size_t dh = d / static_cast<std::size_t>(nh);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Trace trace;
    forward(t, &trace);

    // pooled projection and mean-pool, reversed
    Vector dpool(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t e = 0; e < cotangent.size(); ++e)
            dpool[j] += cotangent[e] * w_out_(j, e);
    const double inv_l = 1.0 / static_cast<double>(l);
    Matrix df(l, d);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) df(i, j) = dpool[j] * inv_l;

    Matrix dx = layer_norm_backward(trace.lnf, lnf_g, df);

    for (std::size_t b = blocks_.size(); b-- > 0;) {
        const Block& blk = blocks_[b];
        const auto& bt = trace.blocks[b];

        // FFN sub-block: x_out = x_mid + gelu(LN(x_mid) w1 + b1) w2 + b2
        Matrix dg = matmul_nt(dx, blk.w2);
        Matrix du(l, dg.cols());
        for (std::size_t i = 0; i < du.size(); ++i)
            du.data()[i] = dg.data()[i] * gelu_grad(bt.ffn_pre.data()[i]);
        Matrix dz = matmul_nt(du, blk.w1);
        dx += layer_norm_backward(bt.ln2, blk.ln2_g, dz);

        // attention sub-block: x_mid = x_in + MHA(LN(x_in)) wo
        Matrix dheads = matmul_nt(dx, blk.wo);
        Matrix dq(l, d), dk(l, d), dv(l, d);
        for (int hh = 0; hh < nh; ++hh) {
            const std::size_t off = static_cast<std::size_t>(hh) * dh;
            const Matrix& a = bt.attn[static_cast<std::size_t>(hh)];
            // dA = dH V^T, dV = A^T dH (within the head's column slice)
            Matrix da(l, l);
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 0; j < l; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += dheads(i, off + c) * bt.v(j, off + c);
                    da(i, j) = s;
                }
            for (std::size_t j = 0; j < l; ++j)
                for (std::size_t c = 0; c < dh; ++c) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < l; ++i) s += a(i, j) * dheads(i, off + c);
                    dv(j, off + c) = s;
                }
            // softmax rows backward
            Matrix ds(l, l);
            for (std::size_t i = 0; i < l; ++i) {
                double inner = 0.0;
                for (std::size_t j = 0; j < l; ++j) inner += da(i, j) * a(i, j);
                for (std::size_t j = 0; j < l; ++j) ds(i, j) = a(i, j) * (da(i, j) - inner);
            }
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t c = 0; c < dh; ++c) {
                    double sq = 0.0, sk = 0.0;
                    for (std::size_t j = 0; j < l; ++j) {
                        sq += ds(i, j) * bt.k(j, off + c);
                        sk += ds(j, i) * bt.q(j, off + c);
                    }
                    dq(i, off + c) = sq * att_scale;
                    dk(i, off + c) = sk * att_scale;
                }
        }
        Matrix dy = matmul_nt(dq, blk.wq);
        dy += matmul_nt(dk, blk.wk);
        dy += matmul_nt(dv, blk.wv);
        dx += layer_norm_backward(bt.ln1, blk.ln1_g, dy);
    }

    return dx;  // positional addition is constant in the input
}

std::uint64_t ToyTransformerEncoder::weight_digest() const {
    std::uint64_t h = tokenizer_.digest(0xCBF29CE484222325ULL);
    h = digest_matrix(h, pos_);
    for (const auto& blk : blocks_) {
        h = digest_matrix(h, blk.wq);
        h = digest_matrix(h, blk.wk);
        h = digest_matrix(h, blk.wv);
        h = digest_matrix(h, blk.wo);
        h = digest_vector(h, blk.ln1_g);
        h = digest_vector(h, blk.ln1_b);
        h = digest_matrix(h, blk.w1);
        h = digest_vector(h, blk.b1);
        h = digest_matrix(h, blk.w2);
        h = digest_vector(h, blk.b2);
        h = digest_vector(h, blk.ln2_g);
        h = digest_vector(h, blk.ln2_b);
    }
    h = digest_vector(h, lnf_g);
    h = digest_vector(h, lnf_b);
    h = digest_matrix(h, w_out_);
    return h;
}

// ---------------------------------------------------------------------------
// LinearEncoder

LinearEncoder::LinearEncoder(LinearEncoderConfig cfg)
    : FrozenDualEncoder(cfg.space, cfg.frames_per_video),
      cfg_(cfg),
      tokenizer_(cfg.seed, cfg.space.d_token, cfg.vocab_size,
                 1.0 / std::sqrt(static_cast<double>(cfg.space.d_token))) {
    const auto flat = static_cast<std::size_t>(cfg_.space.max_seq_len) *
                      static_cast<std::size_t>(cfg_.space.d_token);
    SeededRng rng(mix_seed(cfg_.seed, 0x6C696E5F77ULL));
    w_text_ = random_matrix(rng, static_cast<std::size_t>(cfg_.space.d_embed), flat,
                            1.0 / std::sqrt(static_cast<double>(cfg_.space.d_token)));
    visual_seed_ = mix_seed(cfg_.seed, 0x76697375616CULL);
}

TokenSequence LinearEncoder::tokenize(const std::string& text) const {
    return tokenizer_.tokenize(text);
}

Vector LinearEncoder::encode_frame(const MediaRef& media, int frame_index) const {
    return synth_frame_embedding(visual_seed_, media, frame_index, space_.d_embed);
}

Vector LinearEncoder::encode_text_impl(const TokenSequence& t) const {
    const std::size_t d = t.width();
    Vector out(static_cast<std::size_t>(space_.d_embed), 0.0);
    for (std::size_t e = 0; e < out.size(); ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.length(); ++i)
            for (std::size_t j = 0; j < d; ++j) acc += w_text_(e, i * d + j) * t.rows(i, j);
        out[e] = acc;
    }
    return out;
}

Matrix LinearEncoder::text_input_gradient_impl(const TokenSequence& t, const Vector& cotangent) const {
    const std::size_t d = t.width();
    Matrix grad(t.length(), d);
    for (std::size_t i = 0; i < t.length(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t e = 0; e < cotangent.size(); ++e)
                acc += cotangent[e] * w_text_(e, i * d + j);
            grad(i, j) = acc;
        }
    return grad;
}

std::uint64_t LinearEncoder::weight_digest() const {
    std::uint64_t h = tokenizer_.digest(0xCBF29CE484222325ULL);
    return digest_matrix(h, w_text_);
}

// ---------------------------------------------------------------------------
// Feature cache

void write_feature_cache(const std::string& path, const std::map<std::string, Vector>& entries,
                         int d_embed) {
    std::string bytes;
    bytes.append("NTFC", 4);
    write_le<std::uint32_t>(bytes, 1u);
    write_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(d_embed));
    write_le<std::uint8_t>(bytes, 0u);  // dtype 0 = float32
    write_le<std::uint64_t>(bytes, static_cast<std::uint64_t>(entries.size()));
    for (const auto& [key, vec] : entries) {  // std::map iterates in ascending key-byte order
        if (key.size() > 0xFFFF) throw IoError("feature cache: key longer than 65535 bytes");
        if (static_cast<int>(vec.size()) != d_embed)
            throw DimensionError("feature cache: entry '" + key + "' has width " +
                                 std::to_string(vec.size()) + ", expected " + std::to_string(d_embed));
        write_le<std::uint16_t>(bytes, static_cast<std::uint16_t>(key.size()));
        bytes.append(key);
        for (double v : vec) write_le<float>(bytes, static_cast<float>(v));
    }
    atomic_write_file(path, bytes);
}

std::map<std::string, Vector> read_feature_cache(const std::string& path, int* d_embed_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("feature cache: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "NTFC", 4) != 0)
        throw ParseError("feature cache: bad magic in " + path);
    const auto version = read_le<std::uint32_t>(in, "version");
    if (version != 1) throw ParseError("feature cache: unsupported version " + std::to_string(version));
    const auto d_embed = read_le<std::uint32_t>(in, "d_embed");
    const auto dtype = read_le<std::uint8_t>(in, "dtype");
    if (dtype != 0) throw ParseError("feature cache: unsupported dtype code " + std::to_string(dtype));
    const auto count = read_le<std::uint64_t>(in, "entry count");
    std::map<std::string, Vector> entries;
    std::string prev_key;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto key_len = read_le<std::uint16_t>(in, "key length");
        std::string key(key_len, '\0');
        if (key_len > 0 && !in.read(key.data(), key_len))
            throw IoError("feature cache: truncated key in " + path);
        if (i > 0 && !(prev_key < key))
            throw IntegrityError("feature cache: keys not sorted ascending at '" + key + "'");
        Vector vec(d_embed);
        for (auto& v : vec) v = static_cast<double>(read_le<float>(in, "payload"));
        entries.emplace(key, std::move(vec));
        prev_key = std::move(key);
    }
    if (d_embed_out) *d_embed_out = static_cast<int>(d_embed);
    return entries;
}

FeatureCacheEncoder::FeatureCacheEncoder(std::map<std::string, Vector> entries, EmbeddingSpace space)
    : FrozenDualEncoder(space, 1), entries_(std::move(entries)) {
    for (const auto& [key, vec] : entries_)
        if (static_cast<int>(vec.size()) != space_.d_embed)
            throw DimensionError("feature cache: entry '" + key + "' width != d_embed");
}

FeatureCacheEncoder FeatureCacheEncoder::load(const std::string& path, EmbeddingSpace space) {
    int d_embed = 0;
    auto entries = read_feature_cache(path, &d_embed);
    space.d_embed = d_embed;
    return FeatureCacheEncoder(std::move(entries), space);
}

const Vector& FeatureCacheEncoder::lookup(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw IntegrityError("feature cache: no entry for key '" + key + "'");
    return it->second;
}

TokenSequence FeatureCacheEncoder::tokenize(const std::string&) const {
    throw ConfigError("feature cache encoder: text capabilities are unsupported");
}

Vector FeatureCacheEncoder::encode_frame(const MediaRef& media, int) const {
    return lookup(media.key.empty() ? media.path : media.key);
}

Vector FeatureCacheEncoder::encode_text_impl(const TokenSequence&) const {
    throw ConfigError("feature cache encoder: text capabilities are unsupported");
}

Matrix FeatureCacheEncoder::text_input_gradient_impl(const TokenSequence&, const Vector&) const {
    throw ConfigError("feature cache encoder: text capabilities are unsupported");
}

std::uint64_t FeatureCacheEncoder::weight_digest() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& [key, vec] : entries_) {
        h = fnv1a64(key, h);
        h = digest_vector(h, vec);
    }
    return h;
}

}  // namespace nametune
