// SPDX-License-Identifier: Apache-2.0
//
// SequenceRecord -> numeric batch mapping. Input slots (and 2SUM echo
// values) become multi-hot vector rows of width 10d+n that enter the model
// through a learned projection; everything else is a one-hot token id.

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fillerlab/taskgen.hpp"

namespace fillerlab {

struct VocabOptions {
  bool subscript_digits = false;  // include "0_0".."9_<d-1>" tokens
};

struct Vocabulary {
  Task task = Task::ThreeSum;
  int n = 0;
  int d = 0;
  std::vector<std::string> tokens;  // id -> token, dense and stable
  std::unordered_map<std::string, int> ids;
  int pad_id = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  bool contains(const std::string& tok) const { return ids.count(tok) > 0; }
  int id(const std::string& tok) const;  // DataError naming the token
};

Vocabulary build_vocabulary(Task task, int n, int d,
                            const VocabOptions& opts = {});

// Multi-hot row layout: d blocks of 10 digit bits, then n position bits.
inline int input_row_width(int n, int d) { return 10 * d + n; }

struct EncodedSequence {
  Task task = Task::ThreeSum;
  Regime regime = Regime::Immediate;
  int n = 0, d = 0, len = 0;
  int input_width = 0;
  int target_width = 0;  // 3SUM: vocab; 2SUM: 10d + n + vocab

  std::vector<float> rows;         // len * input_width, zero on token slots
  std::vector<int> ids;            // len, pad on row slots
  std::vector<std::uint8_t> is_row;
  std::vector<int> targets;        // len (3SUM next-token ids; pad if inactive)
  std::vector<std::vector<int>> target_bits;  // len (2SUM multi-hot bits)
  std::vector<std::uint8_t> loss_mask;        // len

  int answer_pos = -1;  // position whose target is the answer token
  int answer_id = -1;   // 3SUM: vocab id of True/False; 2SUM: count c
};

EncodedSequence encode_record(const SequenceRecord& rec,
                              const Vocabulary& vocab);
SequenceRecord decode_record(const EncodedSequence& enc,
                             const Vocabulary& vocab);

struct EncodedBatch {
  Task task = Task::ThreeSum;
  int batch = 0, len = 0;
  int input_width = 0, vocab_size = 0, target_width = 0;

  std::vector<float> rows;     // B*T*input_width
  std::vector<int> ids;        // B*T
  std::vector<std::uint8_t> is_row;
  std::vector<float> loss_w;   // B*T, zero on masked and padded positions
  std::vector<int> targets;        // B*T (3SUM)
  std::vector<float> target_vecs;  // B*T*target_width (2SUM)

  std::vector<int> answer_pos;  // per record
  std::vector<int> answer_id;
  std::vector<int> seq_len;
};

EncodedBatch collate_batch(const std::vector<EncodedSequence>& seqs,
                           const Vocabulary& vocab, int max_len);

}  // namespace fillerlab
