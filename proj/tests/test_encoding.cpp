// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fillerlab/encoding.hpp"

using namespace fillerlab;

namespace {

SequenceRecord sample_3sum_record(Regime regime, std::uint64_t trial) {
  Rng rng(41, trial);
  const Instance3Sum inst = sample_instance_3sum(4, 2, rng);
  Rng drop(42, trial);
  return render_3sum(inst, regime, drop);
}

}  // namespace

TEST_CASE("3SUM vocabulary contents and determinism") {
  const Vocabulary v = build_vocabulary(Task::ThreeSum, 4, 2);
  for (const char* tok : {":", "ANS", "True", "False", ".", "A", "B", "C", "D"})
    CHECK(v.contains(tok));
  for (int i = 0; i < 10; ++i) CHECK(v.contains(std::string(1, '0' + i)));
  CHECK_FALSE(v.contains("E"));
  CHECK_FALSE(v.contains("0_0"));
  CHECK(v.tokens[v.pad_id] == "<pad>");

  const Vocabulary again = build_vocabulary(Task::ThreeSum, 4, 2);
  CHECK(v.tokens == again.tokens);

  VocabOptions opts;
  opts.subscript_digits = true;
  const Vocabulary sub = build_vocabulary(Task::ThreeSum, 4, 2, opts);
  CHECK(sub.contains("0_0"));
  CHECK(sub.contains("9_1"));
  CHECK(sub.size() == v.size() + 20);

  CHECK_THROWS_WITH_AS(v.id("zzz"), "token not in vocabulary: 'zzz'",
                       DataError);
  CHECK_THROWS_AS(build_vocabulary(Task::ThreeSum, 27, 2), ConfigError);
}

TEST_CASE("2SUM vocabulary contents") {
  const Vocabulary v = build_vocabulary(Task::TwoSum, 4, 2);
  for (int k = 0; k < 10; ++k) CHECK(v.contains("P_" + std::to_string(k)));
  for (int c = 0; c <= 6; ++c) CHECK(v.contains("ANS:" + std::to_string(c)));
  CHECK_FALSE(v.contains("ANS:7"));
  CHECK(v.contains("."));
  CHECK_FALSE(v.contains("ANS"));
}

TEST_CASE("input slot rows have d digit bits plus a position bit") {
  const Vocabulary v = build_vocabulary(Task::ThreeSum, 4, 2);
  const SequenceRecord rec = sample_3sum_record(Regime::Immediate, 0);
  const EncodedSequence enc = encode_record(rec, v);
  REQUIRE(enc.input_width == 10 * 2 + 4);
  for (int i = 0; i < 4; ++i) {
    const float* row = enc.rows.data() + static_cast<size_t>(i) * enc.input_width;
    int set = 0;
    for (int b = 0; b < enc.input_width; ++b)
      if (row[b] != 0.0f) ++set;
    CHECK(set == 3);  // d digit bits + position bit
    CHECK(row[rec.input_slots[i][0]] == 1.0f);
    CHECK(row[10 + rec.input_slots[i][1]] == 1.0f);
    CHECK(row[20 + i] == 1.0f);
    CHECK(enc.is_row[i] == 1);
  }
  // 'A05'-style slot: digits (0,5) at position 0 sets bits {0, 15, 20}.
  SequenceRecord slot = rec;
  slot.input_slots[0] = {0, 5};
  const EncodedSequence enc2 = encode_record(slot, v);
  CHECK(enc2.rows[0] == 1.0f);
  CHECK(enc2.rows[15] == 1.0f);
  CHECK(enc2.rows[20] == 1.0f);
}

TEST_CASE("loss mask covers separator, intermediates and answer only") {
  const Vocabulary v = build_vocabulary(Task::ThreeSum, 4, 2);
  for (Regime regime : {Regime::Filler, Regime::ParallelCot,
                        Regime::AdaptiveCot, Regime::Immediate}) {
    const SequenceRecord rec = sample_3sum_record(regime, 3);
    const EncodedSequence enc = encode_record(rec, v);
    long active = 0;
    for (int t = 0; t < enc.len; ++t) active += enc.loss_mask[t];
    // Predicted tokens: ':' + intermediate + 'ANS' + label.
    CHECK(active == static_cast<long>(rec.intermediate.size()) + 3);
    for (int t = 0; t + 1 < rec.n; ++t) CHECK(enc.loss_mask[t] == 0);
    CHECK(enc.answer_pos == enc.len - 2);
    CHECK(enc.answer_id == v.id(rec.label_bool ? "True" : "False"));
    CHECK(enc.targets[enc.answer_pos] == enc.answer_id);
  }
}

TEST_CASE("2SUM targets are multi-hot rows or one-hot token bits") {
  const Vocabulary v = build_vocabulary(Task::TwoSum, 4, 2);
  const PermutationBank bank = build_permutation_bank(4, 2, 6);
  Rng rng(43, 0);
  const Instance2Sum inst = sample_instance_2sum(4, 2, bank, rng);
  const SequenceRecord rec = render_2sum(inst, Regime::ParallelCot, {});
  const EncodedSequence enc = encode_record(rec, v);
  CHECK(enc.target_width == enc.input_width + v.size());
  long active = 0;
  for (int t = 0; t < enc.len; ++t) {
    if (!enc.loss_mask[t]) {
      CHECK(enc.target_bits[t].empty());
      continue;
    }
    ++active;
    if (enc.is_row[t + 1]) {
      CHECK(enc.target_bits[t].size() == 3);  // d digit bits + position bit
      for (int b : enc.target_bits[t]) CHECK(b < enc.input_width);
    } else {
      REQUIRE(enc.target_bits[t].size() == 1);
      CHECK(enc.target_bits[t][0] >= enc.input_width);
    }
  }
  CHECK(active == static_cast<long>(rec.intermediate.size()) + 1);
  CHECK(enc.answer_id == inst.count_label);
}

TEST_CASE("round-trip decode(encode(r)) == r over all regimes") {
  const Vocabulary v3 = build_vocabulary(Task::ThreeSum, 5, 3);
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 5;
  spec.d = 3;
  spec.seed = 71;
  spec.train_count = 6000;
  spec.adaptive_calibration_samples = 1000;
  spec.mixture = {{Regime::Filler, 0.25},
                  {Regime::ParallelCot, 0.25},
                  {Regime::AdaptiveCot, 0.25},
                  {Regime::Immediate, 0.25}};
  const RecordStream stream(spec);
  for (long i = 0; i < spec.train_count; ++i) {
    const SequenceRecord rec = stream.at(Split::Train, i);
    CHECK(decode_record(encode_record(rec, v3), v3) == rec);
  }

  const Vocabulary v2 = build_vocabulary(Task::TwoSum, 4, 2);
  DatasetSpec spec2;
  spec2.task = Task::TwoSum;
  spec2.n = 4;
  spec2.d = 2;
  spec2.seed = 72;
  spec2.train_count = 4000;
  spec2.mixture = {{Regime::Filler, 0.34},
                   {Regime::ParallelCot, 0.33},
                   {Regime::Immediate, 0.33}};
  const RecordStream stream2(spec2);
  for (long i = 0; i < spec2.train_count; ++i) {
    const SequenceRecord rec = stream2.at(Split::Train, i);
    CHECK(decode_record(encode_record(rec, v2), v2) == rec);
  }
}

TEST_CASE("collate pads to the longest record with zero loss weight") {
  const Vocabulary v = build_vocabulary(Task::ThreeSum, 4, 2);
  const SequenceRecord imm = sample_3sum_record(Regime::Immediate, 1);
  const SequenceRecord fill = sample_3sum_record(Regime::Filler, 2);
  const std::vector<EncodedSequence> seqs = {encode_record(imm, v),
                                             encode_record(fill, v)};
  const EncodedBatch batch = collate_batch(seqs, v, 64);
  CHECK(batch.batch == 2);
  CHECK(batch.len == seqs[1].len);
  double wsum = 0.0;
  for (float w : batch.loss_w) wsum += w;
  long active = 0;
  for (const auto& s : seqs)
    for (auto m : s.loss_mask) active += m;
  CHECK(wsum == doctest::Approx(static_cast<double>(active)));
  // Padding tail of the short record: pad ids, no rows, zero weight.
  for (int t = seqs[0].len; t < batch.len; ++t) {
    CHECK(batch.ids[t] == v.pad_id);
    CHECK(batch.is_row[t] == 0);
    CHECK(batch.loss_w[t] == 0.0f);
  }

  CHECK_THROWS_AS(collate_batch(seqs, v, 8), DataError);
  CHECK_THROWS_AS(collate_batch({}, v, 8), DataError);

  const EncodedBatch single = collate_batch({seqs[0]}, v, 64);
  CHECK(single.batch == 1);
  CHECK(single.len == seqs[0].len);
}
