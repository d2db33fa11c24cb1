#pragma once

// Segment embedding network: kernel-1 convolution input embedding, additive
// positional table, L stacked multi-head self-attention blocks with a
// conv1d+ReLU+conv1d feed-forward, and temporal average pooling down to a
// single D-dimensional vector per segment.

#include "dk/autodiff.hpp"
#include "dk/dsp.hpp"
#include "dk/mat.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dk::encoder {

struct EncoderConfig {
    int input_dim = 60;    // d
    int hidden_dim = 256;  // D
    int num_layers = 2;    // L
    int num_heads = 8;     // H
    int max_positions = 512;
    bool use_positional = true;
    bool positional_learned = false; // "fixed locations": frozen by default
    bool use_residual = true;
    bool use_layer_norm = true;
    double layer_norm_eps = 1e-5;

    int head_dim() const { return hidden_dim / num_heads; }
    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
    std::vector<autodiff::TensorPtr> wq, wk, wv; // per head, [D x D/H]
    autodiff::TensorPtr wo, bo;                  // output projection [D x D], [D]
    autodiff::TensorPtr ff_w1, ff_b1, ff_w2, ff_b2;
    autodiff::TensorPtr ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderModel {
    EncoderConfig config;
    autodiff::TensorPtr input_w, input_b; // d -> D
    autodiff::TensorPtr pos_table;        // [T_max x D]
    std::vector<LayerParams> layers;

    // Deterministic parameter order; includes the positional table.
    std::vector<std::pair<std::string, autodiff::TensorPtr>> named_parameters() const;
    // Parameters the optimizer may update (positional table only when learned).
    std::vector<std::pair<std::string, autodiff::TensorPtr>> trainable_parameters() const;
};

// Scaled-uniform weight init, zero biases, unit layer-norm gains; positional
// table drawn N(0,1)/sqrt(D) and frozen unless configured learned.
// Bit-identical parameters for identical (config, seed).
EncoderModel init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Per-head attention weight matrices of the last forward call, for inspection.
struct AttentionTrace {
    std::vector<Mat> weights; // one [T x T] entry per (layer, head)
};

// embedded[t] + table[t] for t < T; errors when T exceeds the table.
autodiff::TensorPtr positional_encode(autodiff::Tape* tape, const autodiff::TensorPtr& embedded,
                                      const autodiff::TensorPtr& table);

// One multi-head self-attention block (scores, softmax weights, weighted sum,
// head concat + projection, feed-forward, residual/norm per config).
autodiff::TensorPtr attention_block(autodiff::Tape* tape, const autodiff::TensorPtr& h,
                                    const LayerParams& layer, const EncoderConfig& config,
                                    AttentionTrace* trace = nullptr);

// Full differentiable forward: frames [T x d] -> pooled embedding [D].
autodiff::TensorPtr encode_frames(autodiff::Tape* tape, const EncoderModel& model,
                                  const Mat& frames, AttentionTrace* trace = nullptr);

// Inference path (no tape).
std::vector<double> embed_segment(const EncoderModel& model, const dsp::SegmentFeatures& features);

// Inference over many segments, one embedding row per input, input order
// preserved. Segments must share T. Parallelized across segments.
Mat embed_batch(const EncoderModel& model, const std::vector<const dsp::SegmentFeatures*>& segments);
Mat embed_batch(const EncoderModel& model, const std::vector<dsp::SegmentFeatures>& segments);

} // namespace dk::encoder
