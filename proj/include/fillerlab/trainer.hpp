// SPDX-License-Identifier: Apache-2.0
//
// Training/evaluation loop over sequence records: deterministic shuffling,
// Adam with decoupled weight decay and global-norm clipping, per-epoch
// metrics and checkpoints, and the frozen-backbone filler probe.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fillerlab/dataset_io.hpp"
#include "fillerlab/model.hpp"

namespace fillerlab {

// Read-only record source so training can stream records instead of
// materializing a whole split in memory.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual long size() const = 0;
  virtual SequenceRecord get(long index) const = 0;
};

class VectorSource : public RecordSource {
 public:
  explicit VectorSource(std::vector<SequenceRecord> records)
      : records_(std::move(records)) {}
  long size() const override { return static_cast<long>(records_.size()); }
  SequenceRecord get(long i) const override { return records_.at(i); }

 private:
  std::vector<SequenceRecord> records_;
};

class StreamSource : public RecordSource {
 public:
  StreamSource(const RecordStream* stream, Split split, long count)
      : stream_(stream), split_(split), count_(count) {}
  long size() const override { return count_; }
  SequenceRecord get(long i) const override { return stream_->at(split_, i); }

 private:
  const RecordStream* stream_;
  Split split_;
  long count_;
};

struct TrainConfig {
  AdamConfig adam;          // lr 1e-4, betas .9/.999, eps 1e-8
  double clip_norm = 1.0;
  int epochs = 5;
  int batch_size = 256;
  int eval_batch_size = 64;
  std::uint64_t seed = 0;   // shuffle order; model init is the caller's
  long max_steps = -1;      // stop early after this many steps (<0 = off)
  std::string out_dir;      // metrics.csv + per-epoch checkpoints; "" = none
  int start_epoch = 0;      // resume: first epoch index to run
  std::vector<double>* step_losses = nullptr;  // optional per-step loss trace
};

// Answer-regime presets. Filler and both CoT regimes share one recipe; the
// immediate-answer regime needs heavier regularization and more epochs.
TrainConfig preset_filler_cot();
TrainConfig preset_immediate();

struct RegimeEval {
  long count = 0;
  long correct = 0;
  double loss = 0.0;         // mean sequence loss over this regime's records
  double answer_loss = 0.0;  // mean -log p(correct answer)
  double accuracy() const { return count ? double(correct) / count : 0.0; }
};

struct EvalResult {
  RegimeEval overall;
  std::map<Regime, RegimeEval> by_regime;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  long steps = 0;
  EvalResult test;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  long total_steps = 0;
  // Per regime, the maximum test accuracy over all epochs (the headline
  // number reported for every condition).
  std::map<Regime, double> best_accuracy;
  double best_overall_accuracy = 0.0;
};

// Evaluates greedy answer accuracy and losses; pure (no parameter writes).
EvalResult evaluate(Model<float>& model, const RecordSource& test,
                    const Vocabulary& vocab, int batch_size = 64);

// Runs cfg.epochs epochs of training, evaluating on `test` after each one.
// Writes metrics.csv and model_epoch<k>.ckpt / optim_epoch<k>.bin into
// cfg.out_dir when set. Throws NumericError (with the step index) when the
// loss turns non-finite.
RunMetrics train(Model<float>& model, Adam<float>& opt, const TrainConfig& cfg,
                 const RecordSource& train, const RecordSource& test,
                 const Vocabulary& vocab);

// Keeps round(fraction * L) of the record's trailing filler dots (L = dot
// count). Identity for records without filler dots. fraction in (0, 1].
SequenceRecord with_filler_fraction(const SequenceRecord& rec,
                                    double fraction);

struct ProbeConfig {
  double fraction = 1.0;  // filler retained during finetuning + eval
  int epochs = 3;
  int batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

// Filler-ablation probe: freezes everything except the last layer's
// attention projections and the output head, finetunes on truncated-filler
// records, and reports accuracy on the equally-truncated test split.
// The input model is copied; the caller's weights are untouched.
EvalResult probe_finetune(const Model<float>& model, const ProbeConfig& cfg,
                          const RecordSource& train, const RecordSource& test,
                          const Vocabulary& vocab);

}  // namespace fillerlab
