// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer: pre-norm blocks with rotary attention and a
// SiLU-gated FFN. Mixed input stream: multi-hot rows go through a learned
// projection, everything else through the token embedding table.

#pragma once

#include <string>
#include <vector>

#include "fillerlab/encoding.hpp"
#include "fillerlab/optim.hpp"
#include "fillerlab/rng.hpp"
#include "fillerlab/tensor.hpp"

namespace fillerlab {

struct ModelConfig {
  int layers = 4;
  int hidden = 384;
  int heads = 6;
  int ffn_hidden = 1024;
  int vocab_size = 0;
  int input_width = 0;   // multi-hot row width (10d + n)
  int output_width = 0;  // 3SUM: vocab; 2SUM: input_width + vocab
  int max_seq_len = 0;
  double rope_base = 10000.0;
  double init_std = 0.02;

  int head_dim() const { return heads > 0 ? hidden / heads : 0; }

  void validate() const {
    if (layers < 1 || hidden < 1 || heads < 1 || ffn_hidden < 1)
      throw ConfigError("model dims must be positive");
    if (hidden % heads != 0)
      throw ConfigError("hidden must be divisible by heads");
    if (head_dim() % 2 != 0) throw ConfigError("head dim must be even");
    if (vocab_size < 2 || input_width < 1 || output_width < 2)
      throw ConfigError("model io widths not set");
    if (max_seq_len < 2) throw ConfigError("max_seq_len too small");
    if (init_std <= 0.0) throw ConfigError("init_std must be positive");
  }
};

template <class S>
struct Model {
  ModelConfig cfg;
  ParameterStore<S> params;
};

inline std::string layer_param(int layer, const char* name) {
  return "layer" + std::to_string(layer) + "." + name;
}

template <class S>
Model<S> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model<S> model;
  model.cfg = cfg;
  std::uint64_t counter = 0;
  auto matrix = [&](const std::string& name, int rows, int cols) {
    Tensor<S> t({rows, cols});
    Rng rng(seed, counter++);
    for (long i = 0; i < t.size(); ++i)
      t.v[i] = static_cast<S>(rng.next_trunc_normal(cfg.init_std));
    model.params.add(name, std::move(t));
  };
  auto ones = [&](const std::string& name, int dim) {
    Tensor<S> t({dim});
    std::fill(t.v.begin(), t.v.end(), S(1));
    model.params.add(name, std::move(t));
  };

  matrix("input_proj", cfg.input_width, cfg.hidden);
  matrix("tok_embed", cfg.vocab_size, cfg.hidden);
  for (int l = 0; l < cfg.layers; ++l) {
    ones(layer_param(l, "attn_norm"), cfg.hidden);
    matrix(layer_param(l, "wq"), cfg.hidden, cfg.hidden);
    matrix(layer_param(l, "wk"), cfg.hidden, cfg.hidden);
    matrix(layer_param(l, "wv"), cfg.hidden, cfg.hidden);
    matrix(layer_param(l, "wo"), cfg.hidden, cfg.hidden);
    ones(layer_param(l, "ffn_norm"), cfg.hidden);
    matrix(layer_param(l, "w1"), cfg.hidden, cfg.ffn_hidden);
    matrix(layer_param(l, "w3"), cfg.hidden, cfg.ffn_hidden);
    matrix(layer_param(l, "w2"), cfg.ffn_hidden, cfg.hidden);
  }
  ones("final_norm", cfg.hidden);
  matrix("head", cfg.hidden, cfg.output_width);
  return model;
}

// Logits [B, T, output_width] for a collated batch.
template <class S>
NodeP<S> model_forward(Model<S>& model, Tape<S>& tape,
                       const EncodedBatch& batch) {
  const ModelConfig& cfg = model.cfg;
  const int B = batch.batch, T = batch.len;
  if (batch.input_width != cfg.input_width ||
      batch.target_width != cfg.output_width)
    throw ConfigError("batch widths do not match model");
  if (T > cfg.max_seq_len)
    throw ConfigError("batch length " + std::to_string(T) +
                      " exceeds max_seq_len");

  Tensor<S> rows({B, T, cfg.input_width});
  for (size_t i = 0; i < batch.rows.size(); ++i)
    rows.v[i] = static_cast<S>(batch.rows[i]);
  auto projected =
      mm(tape, tape.constant(std::move(rows)),
         model.params.leaf(tape, "input_proj"));

  auto embedded = embed(tape, model.params.leaf(tape, "tok_embed"), batch.ids,
                        {B, T});

  std::vector<S> row_w(batch.is_row.size()), tok_w(batch.is_row.size());
  for (size_t i = 0; i < batch.is_row.size(); ++i) {
    row_w[i] = batch.is_row[i] ? S(1) : S(0);
    tok_w[i] = batch.is_row[i] ? S(0) : S(1);
  }
  auto h = add(tape, scale_rows(tape, projected, std::move(row_w)),
               scale_rows(tape, embedded, std::move(tok_w)));

  for (int l = 0; l < cfg.layers; ++l) {
    auto normed = rmsnorm(tape, h,
                          model.params.leaf(tape, layer_param(l, "attn_norm")));
    auto q = split_heads(
        tape, mm(tape, normed, model.params.leaf(tape, layer_param(l, "wq"))),
        cfg.heads);
    auto k = split_heads(
        tape, mm(tape, normed, model.params.leaf(tape, layer_param(l, "wk"))),
        cfg.heads);
    auto v = split_heads(
        tape, mm(tape, normed, model.params.leaf(tape, layer_param(l, "wv"))),
        cfg.heads);
    auto attn = causal_attention(tape, rope(tape, q, cfg.rope_base),
                                 rope(tape, k, cfg.rope_base), v);
    auto attn_out = mm(tape, merge_heads(tape, attn, B),
                       model.params.leaf(tape, layer_param(l, "wo")));
    h = add(tape, h, attn_out);

    auto ffn_in = rmsnorm(tape, h,
                          model.params.leaf(tape, layer_param(l, "ffn_norm")));
    auto gate = mm(tape, ffn_in, model.params.leaf(tape, layer_param(l, "w1")));
    auto up = mm(tape, ffn_in, model.params.leaf(tape, layer_param(l, "w3")));
    auto ffn_out = mm(tape, silu_gate(tape, gate, up),
                      model.params.leaf(tape, layer_param(l, "w2")));
    h = add(tape, h, ffn_out);
  }

  auto final_h = rmsnorm(tape, h, model.params.leaf(tape, "final_norm"));
  return mm(tape, final_h, model.params.leaf(tape, "head"));
}

// Sequence loss for a batch: categorical CE on next tokens (3SUM) or
// element-wise BCE against the multi-hot next-step vectors (2SUM).
template <class S>
NodeP<S> model_loss(Tape<S>& tape, NodeP<S> logits, const EncodedBatch& batch) {
  std::vector<S> weights(batch.loss_w.begin(), batch.loss_w.end());
  if (batch.task == Task::ThreeSum)
    return ce_loss(tape, logits, batch.targets, std::move(weights));
  std::vector<S> targets(batch.target_vecs.begin(), batch.target_vecs.end());
  return bce_loss(tape, logits, targets, std::move(weights));
}

// Greedy answer prediction from logits at each record's answer position.
// 3SUM returns the vocab id of True/False; 2SUM the predicted count c.
template <class S>
std::vector<int> predict_answers(const Tensor<S>& logits,
                                 const EncodedBatch& batch,
                                 const Vocabulary& vocab) {
  const int W = logits.shape.back();
  std::vector<int> out;
  out.reserve(batch.batch);
  for (int r = 0; r < batch.batch; ++r) {
    const S* z = logits.data() +
                 (static_cast<long>(r) * batch.len + batch.answer_pos[r]) * W;
    if (batch.task == Task::ThreeSum) {
      const int t = vocab.id("True");
      const int f = vocab.id("False");
      out.push_back(z[t] >= z[f] ? t : f);
    } else {
      const int base = batch.input_width + vocab.id("ANS:0");
      const int count = vocab.size() - (base - batch.input_width);
      int best = 0;
      for (int c = 1; c < count; ++c)
        if (z[base + c] > z[base + best]) best = c;
      out.push_back(best);
    }
  }
  return out;
}

// Checkpoints (float models): binary weights plus the config as JSON.
void save_checkpoint(const Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);
void save_optimizer(const Adam<float>& opt, const std::string& path);
void load_optimizer(Adam<float>& opt, const std::string& path);

}  // namespace fillerlab
