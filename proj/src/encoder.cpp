#include "dk/encoder.hpp"

#include "dk/error.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace dk::encoder {

using autodiff::Tape;
using autodiff::TensorPtr;

void EncoderConfig::validate() const {
    if (input_dim <= 0 || hidden_dim <= 0)
        throw Error("encoder config: dimensions must be positive");
    if (num_layers < 1 || num_heads < 1)
        throw Error("encoder config: need at least one layer and one head");
    if (hidden_dim % num_heads != 0)
        throw Error("encoder config: hidden_dim " + std::to_string(hidden_dim) +
                    " not divisible by num_heads " + std::to_string(num_heads));
    if (max_positions < 1) throw Error("encoder config: max_positions must be positive");
}

namespace {

TensorPtr uniform_init(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto t = autodiff::make_tensor({fan_in, fan_out}, /*requires_grad=*/true);
    for (auto& v : t->values) v = dist(rng);
    return t;
}

TensorPtr const_vector(std::size_t n, double v, bool requires_grad = true) {
    auto t = autodiff::make_tensor({n}, requires_grad);
    std::fill(t->values.begin(), t->values.end(), v);
    return t;
}

} // namespace

EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel m;
    m.config = config;
    std::mt19937_64 rng(seed);

    const auto d = static_cast<std::size_t>(config.input_dim);
    const auto D = static_cast<std::size_t>(config.hidden_dim);
    const auto Dh = static_cast<std::size_t>(config.head_dim());

    m.input_w = uniform_init(rng, d, D);
    m.input_b = const_vector(D, 0.0);

    m.pos_table = autodiff::make_tensor(
        {static_cast<std::size_t>(config.max_positions), D}, config.positional_learned);
    {
        std::normal_distribution<double> normal(0.0, 1.0);
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
        for (auto& v : m.pos_table->values) v = normal(rng) * inv_sqrt_d;
    }

    m.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (auto& layer : m.layers) {
        for (int h = 0; h < config.num_heads; ++h) {
            layer.wq.push_back(uniform_init(rng, D, Dh));
            layer.wk.push_back(uniform_init(rng, D, Dh));
            layer.wv.push_back(uniform_init(rng, D, Dh));
        }
        layer.wo = uniform_init(rng, D, D);
        layer.bo = const_vector(D, 0.0);
        layer.ff_w1 = uniform_init(rng, D, D);
        layer.ff_b1 = const_vector(D, 0.0);
        layer.ff_w2 = uniform_init(rng, D, D);
        layer.ff_b2 = const_vector(D, 0.0);
        layer.ln1_gain = const_vector(D, 1.0);
        layer.ln1_bias = const_vector(D, 0.0);
        layer.ln2_gain = const_vector(D, 1.0);
        layer.ln2_bias = const_vector(D, 0.0);
    }
    return m;
}

std::vector<std::pair<std::string, TensorPtr>> EncoderModel::named_parameters() const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("input.w", input_w);
    out.emplace_back("input.b", input_b);
    out.emplace_back("pos.table", pos_table);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        for (std::size_t h = 0; h < layer.wq.size(); ++h) {
            const std::string hp = p + "head" + std::to_string(h) + ".";
            out.emplace_back(hp + "wq", layer.wq[h]);
            out.emplace_back(hp + "wk", layer.wk[h]);
            out.emplace_back(hp + "wv", layer.wv[h]);
        }
        out.emplace_back(p + "attn.wo", layer.wo);
        out.emplace_back(p + "attn.bo", layer.bo);
        out.emplace_back(p + "ff.w1", layer.ff_w1);
        out.emplace_back(p + "ff.b1", layer.ff_b1);
        out.emplace_back(p + "ff.w2", layer.ff_w2);
        out.emplace_back(p + "ff.b2", layer.ff_b2);
        out.emplace_back(p + "ln1.gain", layer.ln1_gain);
        out.emplace_back(p + "ln1.bias", layer.ln1_bias);
        out.emplace_back(p + "ln2.gain", layer.ln2_gain);
        out.emplace_back(p + "ln2.bias", layer.ln2_bias);
    }
    return out;
}

std::vector<std::pair<std::string, TensorPtr>> EncoderModel::trainable_parameters() const {
    auto all = named_parameters();
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (auto& [name, t] : all) {
        if (name == "pos.table" && !config.positional_learned) continue;
        out.emplace_back(name, t);
    }
    return out;
}

TensorPtr positional_encode(Tape* tape, const TensorPtr& embedded, const TensorPtr& table) {
    const std::size_t t_len = embedded->shape[0];
    if (t_len > table->shape[0])
        throw Error("positional_encode: sequence length " + std::to_string(t_len) +
                    " exceeds max_positions " + std::to_string(table->shape[0]) +
                    "; configure a larger positional table");
    std::vector<std::size_t> idx(t_len);
    std::iota(idx.begin(), idx.end(), 0);
    return autodiff::add(tape, embedded, autodiff::gather_rows(tape, table, idx));
}

TensorPtr attention_block(Tape* tape, const TensorPtr& h, const LayerParams& layer,
                          const EncoderConfig& config, AttentionTrace* trace) {
    if (h->shape.size() != 2 || h->shape[1] != static_cast<std::size_t>(config.hidden_dim))
        throw Error("attention_block: expected [T x " + std::to_string(config.hidden_dim) +
                    "], got " + h->shape_str());
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(config.head_dim()));

    std::vector<TensorPtr> heads;
    heads.reserve(layer.wq.size());
    for (std::size_t i = 0; i < layer.wq.size(); ++i) {
        auto q = autodiff::matmul(tape, h, layer.wq[i]);
        auto k = autodiff::matmul(tape, h, layer.wk[i]);
        auto v = autodiff::matmul(tape, h, layer.wv[i]);
        auto scores = autodiff::scale(
            tape, autodiff::matmul(tape, q, autodiff::transpose(tape, k)), inv_sqrt_dh);
        auto weights = autodiff::softmax_rows(tape, scores);
        if (trace)
            trace->weights.emplace_back(weights->shape[0], weights->shape[1], weights->values);
        heads.push_back(autodiff::matmul(tape, weights, v));
    }
    auto attn = autodiff::add_row_bias(
        tape, autodiff::matmul(tape, autodiff::concat_cols(tape, heads), layer.wo), layer.bo);

    auto combine = [&](const TensorPtr& x, const TensorPtr& sub, const TensorPtr& gain,
                       const TensorPtr& bias) {
        TensorPtr merged = config.use_residual ? autodiff::add(tape, x, sub) : sub;
        return config.use_layer_norm
                   ? autodiff::layer_norm_rows(tape, merged, gain, bias, config.layer_norm_eps)
                   : merged;
    };

    auto h1 = combine(h, attn, layer.ln1_gain, layer.ln1_bias);
    auto ff = autodiff::conv1d_k1(
        tape, autodiff::relu(tape, autodiff::conv1d_k1(tape, h1, layer.ff_w1, layer.ff_b1)),
        layer.ff_w2, layer.ff_b2);
    return combine(h1, ff, layer.ln2_gain, layer.ln2_bias);
}

TensorPtr encode_frames(Tape* tape, const EncoderModel& model, const Mat& frames,
                        AttentionTrace* trace) {
    if (frames.cols != static_cast<std::size_t>(model.config.input_dim))
        throw Error("encode_frames: feature width " + std::to_string(frames.cols) +
                    " does not match encoder input_dim " +
                    std::to_string(model.config.input_dim));
    auto x = autodiff::make_tensor({frames.rows, frames.cols}, frames.data);
    auto h = autodiff::conv1d_k1(tape, x, model.input_w, model.input_b);
    if (model.config.use_positional) h = positional_encode(tape, h, model.pos_table);
    for (const auto& layer : model.layers) h = attention_block(tape, h, layer, model.config, trace);
    return autodiff::mean_rows(tape, h);
}

std::vector<double> embed_segment(const EncoderModel& model,
                                  const dsp::SegmentFeatures& features) {
    return encode_frames(nullptr, model, features.frames)->values;
}

Mat embed_batch(const EncoderModel& model,
                const std::vector<const dsp::SegmentFeatures*>& segments) {
    if (segments.empty()) return Mat(0, static_cast<std::size_t>(model.config.hidden_dim));
    const std::size_t t_len = segments[0]->frames.rows;
    for (const auto* s : segments)
        if (s->frames.rows != t_len)
            throw Error("embed_batch: ragged segment lengths (" + std::to_string(t_len) +
                        " vs " + std::to_string(s->frames.rows) + ")");
    Mat out(segments.size(), static_cast<std::size_t>(model.config.hidden_dim));
    const auto n = static_cast<long>(segments.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < n; ++i) {
        const auto e = embed_segment(model, *segments[static_cast<std::size_t>(i)]);
        std::copy(e.begin(), e.end(), out.row(static_cast<std::size_t>(i)));
    }
    return out;
}

Mat embed_batch(const EncoderModel& model, const std::vector<dsp::SegmentFeatures>& segments) {
    std::vector<const dsp::SegmentFeatures*> ptrs;
    ptrs.reserve(segments.size());
    for (const auto& s : segments) ptrs.push_back(&s);
    return embed_batch(model, ptrs);
}

} // namespace dk::encoder
