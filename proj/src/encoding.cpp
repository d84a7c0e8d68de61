// SPDX-License-Identifier: Apache-2.0

#include "fillerlab/encoding.hpp"

#include <algorithm>

namespace fillerlab {

int Vocabulary::id(const std::string& tok) const {
  auto it = ids.find(tok);
  if (it == ids.end())
    throw DataError("token not in vocabulary: '" + tok + "'");
  return it->second;
}

Vocabulary build_vocabulary(Task task, int n, int d, const VocabOptions& opts) {
  if (n > 26) throw ConfigError("n > 26 exceeds letter markers");
  Vocabulary v;
  v.task = task;
  v.n = n;
  v.d = d;
  auto add = [&](const std::string& tok) {
    v.ids.emplace(tok, static_cast<int>(v.tokens.size()));
    v.tokens.push_back(tok);
  };
  add("<pad>");
  if (task == Task::ThreeSum) {
    add(":");
    add("ANS");
    add("True");
    add("False");
    add(".");
    for (int i = 0; i < 10; ++i) add(std::string(1, '0' + i));
    for (int i = 0; i < n; ++i) add(std::string(1, index_letter(i)));
    if (opts.subscript_digits) {
      for (int m = 0; m < d; ++m)
        for (int i = 0; i < 10; ++i)
          add(std::string(1, '0' + i) + "_" + std::to_string(m));
    }
  } else {
    add(".");
    for (int k = 0; k < 10; ++k) add("P_" + std::to_string(k));
    const int max_count = n * (n - 1) / 2;
    for (int c = 0; c <= max_count; ++c) add("ANS:" + std::to_string(c));
  }
  return v;
}

namespace {

bool is_digit_string(const std::string& s, int d) {
  if (static_cast<int>(s.size()) != d) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

void set_row(std::vector<float>& rows, int width, int pos,
             const DigitTuple& digits, int position_bit) {
  float* row = rows.data() + static_cast<size_t>(pos) * width;
  for (size_t m = 0; m < digits.size(); ++m) row[10 * m + digits[m]] = 1.0f;
  row[10 * digits.size() + position_bit] = 1.0f;
}

DigitTuple row_digits(const float* row, int d, int n, int* position_out) {
  DigitTuple t(d);
  for (int m = 0; m < d; ++m) {
    int digit = -1;
    for (int i = 0; i < 10; ++i) {
      if (row[10 * m + i] != 0.0f) {
        if (digit >= 0) throw DataError("row has multiple digit bits set");
        digit = i;
      }
    }
    if (digit < 0) throw DataError("row missing digit bit");
    t[m] = static_cast<std::uint8_t>(digit);
  }
  int pos = -1;
  for (int i = 0; i < n; ++i) {
    if (row[10 * d + i] != 0.0f) {
      if (pos >= 0) throw DataError("row has multiple position bits set");
      pos = i;
    }
  }
  if (pos < 0) throw DataError("row missing position bit");
  *position_out = pos;
  return t;
}

}  // namespace

EncodedSequence encode_record(const SequenceRecord& rec,
                              const Vocabulary& vocab) {
  if (vocab.task != rec.task || vocab.n != rec.n || vocab.d != rec.d)
    throw DataError("vocabulary family does not match record");
  if (static_cast<int>(rec.input_slots.size()) != rec.n)
    throw DataError("record has wrong input slot count");

  EncodedSequence enc;
  enc.task = rec.task;
  enc.regime = rec.regime;
  enc.n = rec.n;
  enc.d = rec.d;
  enc.len = record_length(rec);
  enc.input_width = input_row_width(rec.n, rec.d);
  enc.target_width = rec.task == Task::ThreeSum
                         ? vocab.size()
                         : enc.input_width + vocab.size();

  enc.rows.assign(static_cast<size_t>(enc.len) * enc.input_width, 0.0f);
  enc.ids.assign(enc.len, vocab.pad_id);
  enc.is_row.assign(enc.len, 0);
  enc.loss_mask.assign(enc.len, 0);
  if (rec.task == Task::ThreeSum) enc.targets.assign(enc.len, vocab.pad_id);
  else enc.target_bits.assign(enc.len, {});

  // Row/token layout. input_end marks the first loss-eligible position:
  // predicting anything inside [0, input_end) carries no loss.
  int pos = 0;
  const int input_end = rec.task == Task::ThreeSum ? rec.n : rec.n + 1;
  for (int i = 0; i < rec.n; ++i) {
    for (auto digit : rec.input_slots[i])
      if (digit > 9) throw DataError("input digit out of range");
    set_row(enc.rows, enc.input_width, pos, rec.input_slots[i], i);
    enc.is_row[pos] = 1;
    ++pos;
  }
  if (rec.task == Task::ThreeSum) {
    enc.ids[pos++] = vocab.id(":");
  } else {
    if (rec.perm_id < 0 || rec.perm_id > 9)
      throw DataError("2SUM record missing perm id");
    enc.ids[pos++] = vocab.id("P_" + std::to_string(rec.perm_id));
  }
  int echo_rows = 0;
  for (const auto& tok : rec.intermediate) {
    if (rec.task == Task::TwoSum && is_digit_string(tok, rec.d)) {
      DigitTuple digits(rec.d);
      for (int m = 0; m < rec.d; ++m)
        digits[m] = static_cast<std::uint8_t>(tok[m] - '0');
      const int echo_index =
          rec.regime == Regime::ParallelCot ? echo_rows / 2 : echo_rows;
      set_row(enc.rows, enc.input_width, pos, digits, echo_index);
      enc.is_row[pos] = 1;
      ++echo_rows;
    } else {
      enc.ids[pos] = vocab.id(tok);
    }
    ++pos;
  }
  for (const auto& tok : rec.answer) enc.ids[pos++] = vocab.id(tok);

  // Causal next-token targets; masked on input-slot predictions.
  for (int t = 0; t + 1 < enc.len; ++t) {
    if (t + 1 < input_end) continue;
    enc.loss_mask[t] = 1;
    if (rec.task == Task::ThreeSum) {
      enc.targets[t] = enc.ids[t + 1];
    } else {
      auto& bits = enc.target_bits[t];
      if (enc.is_row[t + 1]) {
        const float* row =
            enc.rows.data() + static_cast<size_t>(t + 1) * enc.input_width;
        for (int b = 0; b < enc.input_width; ++b)
          if (row[b] != 0.0f) bits.push_back(b);
      } else {
        bits.push_back(enc.input_width + enc.ids[t + 1]);
      }
    }
  }

  enc.answer_pos = enc.len - 2;
  if (rec.task == Task::ThreeSum) {
    enc.answer_id = vocab.id(rec.label_bool ? "True" : "False");
  } else {
    enc.answer_id = rec.label_count;
  }
  return enc;
}

SequenceRecord decode_record(const EncodedSequence& enc,
                             const Vocabulary& vocab) {
  SequenceRecord rec;
  rec.task = enc.task;
  rec.regime = enc.regime;
  rec.n = enc.n;
  rec.d = enc.d;
  const int input_end = enc.task == Task::ThreeSum ? enc.n : enc.n + 1;
  for (int i = 0; i < enc.n; ++i) {
    int position = -1;
    rec.input_slots.push_back(row_digits(
        enc.rows.data() + static_cast<size_t>(i) * enc.input_width, enc.d,
        enc.n, &position));
    if (position != i) throw DataError("input slot position bit mismatch");
  }
  if (enc.task == Task::TwoSum) {
    const std::string& perm = vocab.tokens.at(enc.ids[enc.n]);
    rec.perm_id = perm.back() - '0';
  }
  const int answer_len = enc.task == Task::ThreeSum ? 2 : 1;
  for (int t = input_end; t < enc.len - answer_len; ++t) {
    if (enc.is_row[t]) {
      int position = -1;
      rec.intermediate.push_back(digits_text(row_digits(
          enc.rows.data() + static_cast<size_t>(t) * enc.input_width, enc.d,
          enc.n, &position)));
    } else {
      rec.intermediate.push_back(vocab.tokens.at(enc.ids[t]));
    }
  }
  // 3SUM keeps the ':' out of the intermediate list.
  if (enc.task == Task::ThreeSum) rec.intermediate.erase(rec.intermediate.begin());
  for (int t = enc.len - answer_len; t < enc.len; ++t)
    rec.answer.push_back(vocab.tokens.at(enc.ids[t]));
  if (enc.task == Task::ThreeSum) {
    rec.label_bool = rec.answer.at(1) == "True";
  } else {
    rec.label_count = std::stoi(rec.answer.at(0).substr(4));
  }
  return rec;
}

EncodedBatch collate_batch(const std::vector<EncodedSequence>& seqs,
                           const Vocabulary& vocab, int max_len) {
  if (seqs.empty()) throw DataError("collate_batch on empty batch");
  EncodedBatch b;
  b.task = seqs.front().task;
  b.batch = static_cast<int>(seqs.size());
  b.input_width = seqs.front().input_width;
  b.target_width = seqs.front().target_width;
  b.vocab_size = vocab.size();
  for (const auto& s : seqs) {
    if (s.task != b.task || s.input_width != b.input_width ||
        s.target_width != b.target_width)
      throw DataError("mixed sequence families in batch");
    if (s.len > max_len)
      throw DataError("sequence length " + std::to_string(s.len) +
                      " exceeds max_len " + std::to_string(max_len));
    b.len = std::max(b.len, s.len);
  }
  const size_t bt = static_cast<size_t>(b.batch) * b.len;
  b.rows.assign(bt * b.input_width, 0.0f);
  b.ids.assign(bt, vocab.pad_id);
  b.is_row.assign(bt, 0);
  b.loss_w.assign(bt, 0.0f);
  if (b.task == Task::ThreeSum) b.targets.assign(bt, vocab.pad_id);
  else b.target_vecs.assign(bt * b.target_width, 0.0f);

  for (int r = 0; r < b.batch; ++r) {
    const auto& s = seqs[r];
    const size_t base = static_cast<size_t>(r) * b.len;
    std::copy(s.rows.begin(), s.rows.end(),
              b.rows.begin() + base * b.input_width);
    std::copy(s.ids.begin(), s.ids.end(), b.ids.begin() + base);
    std::copy(s.is_row.begin(), s.is_row.end(), b.is_row.begin() + base);
    for (int t = 0; t < s.len; ++t) {
      if (!s.loss_mask[t]) continue;
      b.loss_w[base + t] = 1.0f;
      if (b.task == Task::ThreeSum) {
        b.targets[base + t] = s.targets[t];
      } else {
        for (int bit : s.target_bits[t])
          b.target_vecs[(base + t) * b.target_width + bit] = 1.0f;
      }
    }
    b.answer_pos.push_back(s.answer_pos);
    b.answer_id.push_back(s.answer_id);
    b.seq_len.push_back(s.len);
  }
  return b;
}

}  // namespace fillerlab
