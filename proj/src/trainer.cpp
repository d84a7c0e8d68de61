// SPDX-License-Identifier: Apache-2.0

#include "fillerlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fillerlab {

namespace {

constexpr std::uint64_t kShuffleSalt = 0x73687566666c6531ULL;

// Lazily applies a per-record transform to another source.
class MappedSource : public RecordSource {
 public:
  MappedSource(const RecordSource* base,
               std::function<SequenceRecord(SequenceRecord)> fn)
      : base_(base), fn_(std::move(fn)) {}
  long size() const override { return base_->size(); }
  SequenceRecord get(long i) const override { return fn_(base_->get(i)); }

 private:
  const RecordSource* base_;
  std::function<SequenceRecord(SequenceRecord)> fn_;
};

std::vector<EncodedSequence> encode_indices(const RecordSource& source,
                                            const std::vector<long>& order,
                                            long begin, long end,
                                            const Vocabulary& vocab) {
  std::vector<EncodedSequence> seqs;
  seqs.reserve(end - begin);
  for (long i = begin; i < end; ++i)
    seqs.push_back(encode_record(source.get(order[i]), vocab));
  return seqs;
}

// Per-record sequence loss and answer loss, read off the raw logits.
void accumulate_eval(const Tensor<float>& logits,
                     const std::vector<EncodedSequence>& seqs,
                     const EncodedBatch& batch, const Vocabulary& vocab,
                     EvalResult* out) {
  const int W = batch.target_width;
  const std::vector<int> preds = predict_answers(logits, batch, vocab);
  for (size_t r = 0; r < seqs.size(); ++r) {
    const EncodedSequence& s = seqs[r];
    const float* zr = logits.data() +
                      static_cast<long>(r) * batch.len * W;
    double loss = 0.0;
    long active = 0;
    for (int t = 0; t < s.len; ++t) {
      if (!s.loss_mask[t]) continue;
      const float* z = zr + static_cast<long>(t) * W;
      if (s.task == Task::ThreeSum) {
        double mx = z[0];
        for (int c = 1; c < W; ++c) mx = std::max(mx, double(z[c]));
        double lse = 0.0;
        for (int c = 0; c < W; ++c) lse += std::exp(z[c] - mx);
        loss += std::log(lse) + mx - z[s.targets[t]];
      } else {
        double acc = 0.0;
        std::vector<char> hot(W, 0);
        for (int b : s.target_bits[t]) hot[b] = 1;
        for (int c = 0; c < W; ++c) {
          const double zz = z[c];
          acc += std::max(zz, 0.0) - zz * (hot[c] ? 1.0 : 0.0) +
                 std::log1p(std::exp(-std::abs(zz)));
        }
        loss += acc / W;
      }
      ++active;
    }
    loss /= std::max<long>(active, 1);

    // Answer loss: -log softmax of the correct answer over the candidate
    // answers (True/False block, or the ANS:<c> block for counting).
    const float* za = zr + static_cast<long>(s.answer_pos) * W;
    double answer_loss;
    int predicted, truth;
    if (s.task == Task::ThreeSum) {
      const int t_id = vocab.id("True"), f_id = vocab.id("False");
      const double zt = za[t_id], zf = za[f_id];
      const double mx = std::max(zt, zf);
      const double lse = std::log(std::exp(zt - mx) + std::exp(zf - mx)) + mx;
      answer_loss = lse - za[s.answer_id];
      predicted = preds[r];
      truth = s.answer_id;
    } else {
      const int base = batch.input_width + vocab.id("ANS:0");
      const int block = W - base;
      double mx = za[base];
      for (int c = 1; c < block; ++c) mx = std::max(mx, double(za[base + c]));
      double lse = 0.0;
      for (int c = 0; c < block; ++c) lse += std::exp(za[base + c] - mx);
      answer_loss = std::log(lse) + mx - za[base + s.answer_id];
      predicted = preds[r];
      truth = s.answer_id;
    }

    auto bump = [&](RegimeEval& e) {
      ++e.count;
      if (predicted == truth) ++e.correct;
      e.loss += loss;
      e.answer_loss += answer_loss;
    };
    bump(out->overall);
    bump(out->by_regime[s.regime]);
  }
}

void finalize_eval(EvalResult* out) {
  auto finish = [](RegimeEval& e) {
    if (!e.count) return;
    e.loss /= e.count;
    e.answer_loss /= e.count;
  };
  finish(out->overall);
  for (auto& [r, e] : out->by_regime) finish(e);
}

void write_metrics_row(std::ofstream& out, int epoch, const std::string& split,
                       const std::string& regime, const RegimeEval& e) {
  out << epoch << ',' << split << ',' << regime << ',' << e.count << ','
      << e.loss << ',' << e.answer_loss << ',' << e.accuracy() << '\n';
}

}  // namespace

TrainConfig preset_filler_cot() {
  TrainConfig cfg;
  cfg.adam.lr = 1e-4;
  cfg.adam.weight_decay = 0.01;
  cfg.clip_norm = 1.0;
  cfg.epochs = 5;
  cfg.batch_size = 256;
  return cfg;
}

TrainConfig preset_immediate() {
  TrainConfig cfg;
  cfg.adam.lr = 1e-4;
  cfg.adam.weight_decay = 0.1;
  cfg.clip_norm = 0.5;
  cfg.epochs = 25;
  cfg.batch_size = 256;
  return cfg;
}

EvalResult evaluate(Model<float>& model, const RecordSource& test,
                    const Vocabulary& vocab, int batch_size) {
  if (batch_size < 1) throw ConfigError("eval batch_size must be positive");
  if (test.size() == 0) throw DataError("evaluate on an empty dataset");
  EvalResult result;
  std::vector<long> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  Tape<float> tape;
  for (long begin = 0; begin < test.size(); begin += batch_size) {
    const long end = std::min<long>(begin + batch_size, test.size());
    auto seqs = encode_indices(test, order, begin, end, vocab);
    EncodedBatch batch = collate_batch(seqs, vocab, model.cfg.max_seq_len);
    auto logits = model_forward(model, tape, batch);
    accumulate_eval(logits->val, seqs, batch, vocab, &result);
    tape.clear();
  }
  finalize_eval(&result);
  return result;
}

RunMetrics train(Model<float>& model, Adam<float>& opt, const TrainConfig& cfg,
                 const RecordSource& train, const RecordSource& test,
                 const Vocabulary& vocab) {
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (cfg.epochs < cfg.start_epoch)
    throw ConfigError("start_epoch beyond epochs");
  if (train.size() == 0) throw DataError("empty training split");

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = cfg.out_dir + "/metrics.csv";
    const bool fresh = cfg.start_epoch == 0 || !std::filesystem::exists(path);
    metrics.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw DataError("cannot write " + path);
    if (fresh) metrics << "epoch,split,regime,count,loss,answer_loss,accuracy\n";
  }

  RunMetrics run;
  Tape<float> tape;
  long global_step = static_cast<long>(opt.step_count());
  bool stop = false;
  for (int epoch = cfg.start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<long> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(cfg.seed, kShuffleSalt + static_cast<std::uint64_t>(epoch));
    for (long i = train.size() - 1; i > 0; --i)
      std::swap(order[i], order[shuffle.next_below(i + 1)]);

    double loss_sum = 0.0;
    long steps = 0;
    for (long begin = 0; begin < train.size(); begin += cfg.batch_size) {
      const long end = std::min<long>(begin + cfg.batch_size, train.size());
      auto seqs = encode_indices(train, order, begin, end, vocab);
      EncodedBatch batch = collate_batch(seqs, vocab, model.cfg.max_seq_len);

      model.params.zero_grad();
      auto logits = model_forward(model, tape, batch);
      auto loss = model_loss(tape, logits, batch);
      const double loss_val = loss->val.v[0];
      if (!std::isfinite(loss_val)) {
        tape.clear();
        throw NumericError("non-finite training loss at step " +
                           std::to_string(global_step));
      }
      tape.backward(loss);
      tape.clear();
      clip_global_norm(model.params, static_cast<float>(cfg.clip_norm));
      opt.step(model.params);

      loss_sum += loss_val;
      if (cfg.step_losses) cfg.step_losses->push_back(loss_val);
      ++steps;
      ++global_step;
      if (cfg.max_steps >= 0 && global_step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.steps = steps;
    em.train_loss = steps ? loss_sum / steps : 0.0;
    em.test = evaluate(model, test, vocab, cfg.eval_batch_size);
    run.total_steps += steps;

    if (metrics.is_open()) {
      RegimeEval train_row;
      train_row.count = steps;
      train_row.loss = em.train_loss;
      write_metrics_row(metrics, epoch, "train", "all", train_row);
      write_metrics_row(metrics, epoch, "test", "all", em.test.overall);
      for (const auto& [r, e] : em.test.by_regime)
        write_metrics_row(metrics, epoch, "test", regime_name(r), e);
      metrics.flush();
    }
    if (!cfg.out_dir.empty()) {
      const std::string tag = std::to_string(epoch);
      save_checkpoint(model, cfg.out_dir + "/model_epoch" + tag + ".ckpt");
      save_optimizer(opt, cfg.out_dir + "/optim_epoch" + tag + ".bin");
    }

    run.best_overall_accuracy =
        std::max(run.best_overall_accuracy, em.test.overall.accuracy());
    for (const auto& [r, e] : em.test.by_regime) {
      auto it = run.best_accuracy.find(r);
      const double acc = e.accuracy();
      if (it == run.best_accuracy.end()) run.best_accuracy[r] = acc;
      else it->second = std::max(it->second, acc);
    }
    run.epochs.push_back(std::move(em));
  }
  return run;
}

SequenceRecord with_filler_fraction(const SequenceRecord& rec,
                                    double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw ConfigError("filler fraction must be in (0, 1]");
  long dots = 0;
  for (auto it = rec.intermediate.rbegin();
       it != rec.intermediate.rend() && *it == "."; ++it)
    ++dots;
  if (dots == 0) return rec;
  const long keep = std::lround(fraction * dots);
  SequenceRecord out = rec;
  out.intermediate.resize(rec.intermediate.size() - (dots - keep));
  return out;
}

EvalResult probe_finetune(const Model<float>& model, const ProbeConfig& cfg,
                          const RecordSource& train_src,
                          const RecordSource& test_src,
                          const Vocabulary& vocab) {
  if (cfg.fraction <= 0.0 || cfg.fraction > 1.0)
    throw ConfigError("probe fraction must be in (0, 1]");

  Model<float> probe;
  probe.cfg = model.cfg;
  for (size_t i = 0; i < model.params.size(); ++i)
    probe.params.add(model.params.names()[i], model.params[i].value);

  const std::string last = "layer" + std::to_string(model.cfg.layers - 1) + ".";
  probe.params.set_trainable([&](const std::string& name) {
    if (name == "head") return true;
    if (name.rfind(last, 0) != 0) return false;
    const std::string suffix = name.substr(last.size());
    return suffix == "wq" || suffix == "wk" || suffix == "wv" || suffix == "wo";
  });

  auto truncate = [fraction = cfg.fraction](SequenceRecord rec) {
    return with_filler_fraction(rec, fraction);
  };
  MappedSource train_cut(&train_src, truncate);
  MappedSource test_cut(&test_src, truncate);

  TrainConfig tcfg;
  tcfg.adam.lr = cfg.lr;
  tcfg.adam.weight_decay = 0.0;
  tcfg.clip_norm = 1.0;
  tcfg.epochs = cfg.epochs;
  tcfg.batch_size = cfg.batch_size;
  tcfg.eval_batch_size = cfg.batch_size;
  tcfg.seed = cfg.seed;
  Adam<float> opt(tcfg.adam);
  RunMetrics run = train(probe, opt, tcfg, train_cut, test_cut, vocab);
  if (run.epochs.empty()) throw ConfigError("probe ran zero epochs");

  // Report the final-epoch evaluation on the truncated test split.
  return run.epochs.back().test;
}

}  // namespace fillerlab
