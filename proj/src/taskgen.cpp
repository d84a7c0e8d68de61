// SPDX-License-Identifier: Apache-2.0

#include "fillerlab/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fillerlab {

std::string task_name(Task t) {
  return t == Task::ThreeSum ? "3sum" : "2sum";
}

Task task_from_name(const std::string& s) {
  if (s == "3sum") return Task::ThreeSum;
  if (s == "2sum") return Task::TwoSum;
  throw ConfigError("unknown task: " + s);
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Filler: return "filler";
    case Regime::ParallelCot: return "cot";
    case Regime::AdaptiveCot: return "adaptive";
    case Regime::Immediate: return "immediate";
  }
  throw ConfigError("bad regime");
}

char regime_tag(Regime r) {
  switch (r) {
    case Regime::Filler: return 'F';
    case Regime::ParallelCot: return 'P';
    case Regime::AdaptiveCot: return 'A';
    case Regime::Immediate: return 'I';
  }
  throw ConfigError("bad regime");
}

Regime regime_from_tag(char c) {
  switch (c) {
    case 'F': return Regime::Filler;
    case 'P': return Regime::ParallelCot;
    case 'A': return Regime::AdaptiveCot;
    case 'I': return Regime::Immediate;
  }
  throw DataError(std::string("bad regime tag: ") + c);
}

Regime regime_from_name(const std::string& s) {
  if (s == "filler") return Regime::Filler;
  if (s == "cot") return Regime::ParallelCot;
  if (s == "adaptive") return Regime::AdaptiveCot;
  if (s == "immediate") return Regime::Immediate;
  throw ConfigError("unknown regime: " + s);
}

char index_letter(int i) {
  if (i < 0 || i >= 26) throw ConfigError("input index out of letter range");
  return static_cast<char>('A' + i);
}

std::string digits_text(const DigitTuple& t) {
  std::string s;
  s.reserve(t.size());
  for (auto d : t) s.push_back(static_cast<char>('0' + d));
  return s;
}

static void check_uniform_dim(const std::vector<DigitTuple>& tuples) {
  for (const auto& t : tuples) {
    if (t.size() != tuples.front().size())
      throw DataError("tuples have mixed dimensions");
  }
}

std::pair<bool, std::optional<std::array<int, 3>>> label_3sum_bruteforce(
    const std::vector<DigitTuple>& tuples) {
  if (tuples.size() < 3) throw DataError("3SUM needs at least 3 tuples");
  check_uniform_dim(tuples);
  const int n = static_cast<int>(tuples.size());
  const int d = static_cast<int>(tuples.front().size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        bool zero = true;
        for (int m = 0; m < d; ++m) {
          if ((tuples[i][m] + tuples[j][m] + tuples[k][m]) % 10 != 0) {
            zero = false;
            break;
          }
        }
        if (zero) return {true, std::array<int, 3>{i, j, k}};
      }
    }
  }
  return {false, std::nullopt};
}

int count_2sum_bruteforce(const std::vector<DigitTuple>& tuples) {
  if (tuples.size() < 2) throw DataError("2SUM needs at least 2 tuples");
  check_uniform_dim(tuples);
  const int n = static_cast<int>(tuples.size());
  const int d = static_cast<int>(tuples.front().size());
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      bool zero = true;
      for (int m = 0; m < d; ++m) {
        if ((tuples[i][m] + tuples[j][m]) % 10 != 0) {
          zero = false;
          break;
        }
      }
      if (zero) ++count;
    }
  }
  return count;
}

Instance3Sum sample_instance_3sum(int n, int d, Rng& rng) {
  if (n < 3 || d < 1) throw ConfigError("3SUM requires n >= 3 and d >= 1");
  Instance3Sum inst;
  inst.n = n;
  inst.d = d;
  inst.tuples.resize(n);
  for (auto& t : inst.tuples) {
    t.resize(d);
    for (auto& digit : t) digit = static_cast<std::uint8_t>(rng.next_digit());
  }
  auto [label, witness] = label_3sum_bruteforce(inst.tuples);
  inst.label = label;
  inst.witness = witness;
  return inst;
}

DigitTuple PermutationBank::apply(int k, const DigitTuple& x,
                                  int position) const {
  DigitTuple out(x.size());
  for (size_t m = 0; m < x.size(); ++m)
    out[m] = static_cast<std::uint8_t>(
        (x[m] + offsets[k][position * d + static_cast<int>(m)]) % 10);
  return out;
}

DigitTuple PermutationBank::invert(int k, const DigitTuple& x,
                                   int position) const {
  DigitTuple out(x.size());
  for (size_t m = 0; m < x.size(); ++m)
    out[m] = static_cast<std::uint8_t>(
        (x[m] + 10 - offsets[k][position * d + static_cast<int>(m)]) % 10);
  return out;
}

PermutationBank build_permutation_bank(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("bank requires n >= 1 and d >= 1");
  PermutationBank bank;
  bank.n = n;
  bank.d = d;
  bank.seed = seed;
  Rng rng(seed);
  for (auto& offs : bank.offsets) {
    offs.resize(static_cast<size_t>(n) * d);
    for (auto& o : offs) o = static_cast<std::uint8_t>(rng.next_digit());
  }
  return bank;
}

Instance2Sum sample_instance_2sum(int n, int d, const PermutationBank& bank,
                                  Rng& rng) {
  if (n < 2) throw ConfigError("2SUM requires n >= 2");
  if (bank.n != n || bank.d != d)
    throw ConfigError("permutation bank shape does not match (n, d)");
  Instance2Sum inst;
  inst.n = n;
  inst.d = d;
  inst.originals.resize(n);
  for (auto& t : inst.originals) {
    t.resize(d);
    for (auto& digit : t) digit = static_cast<std::uint8_t>(rng.next_digit());
  }
  inst.perm_id = static_cast<int>(rng.next_below(10));
  inst.permuted.resize(n);
  for (int i = 0; i < n; ++i)
    inst.permuted[i] = bank.apply(inst.perm_id, inst.originals[i], i);
  inst.count_label = count_2sum_bruteforce(inst.originals);
  return inst;
}

static TokenGroup digit_group(const DigitTuple& t) {
  TokenGroup g;
  for (auto d : t) g.symbols.push_back(std::string(1, '0' + d));
  return g;
}

GroupList gen_parallel_cot(const Instance3Sum& inst, CotStyle style) {
  GroupList out;
  for (int i = 0; i < inst.n; ++i) {
    for (int j = i + 1; j < inst.n; ++j) {
      DigitTuple sum(inst.d);
      for (int m = 0; m < inst.d; ++m)
        sum[m] = static_cast<std::uint8_t>(
            (inst.tuples[i][m] + inst.tuples[j][m]) % 10);
      if (style == CotStyle::Labeled) {
        TokenGroup label;
        label.symbols = {std::string(1, index_letter(i)),
                         std::string(1, index_letter(j))};
        out.push_back(std::move(label));
        // Substitute the third input's letter when an input written before
        // this pair completes it to a zero triple (smallest such index).
        int third = -1;
        for (int k = 0; k < i && third < 0; ++k) {
          bool zero = true;
          for (int m = 0; m < inst.d; ++m) {
            if ((sum[m] + inst.tuples[k][m]) % 10 != 0) {
              zero = false;
              break;
            }
          }
          if (zero) third = k;
        }
        if (third >= 0) {
          TokenGroup g;
          g.symbols = {std::string(1, index_letter(third))};
          out.push_back(std::move(g));
        } else {
          out.push_back(digit_group(sum));
        }
      } else {
        out.push_back(digit_group(sum));
      }
    }
  }
  return out;
}

GroupList gen_adaptive_cot(const Instance3Sum& inst, Rng& rng,
                           const AdaptiveOptions& opts) {
  if (inst.d < 2)
    throw ConfigError("adaptive CoT needs d >= 2 (dimension decomposition)");
  GroupList out;
  for (int i = 0; i < inst.n; ++i) {
    for (int j = i + 1; j < inst.n; ++j) {
      for (int k = j + 1; k < inst.n; ++k) {
        const int s0 =
            (inst.tuples[i][0] + inst.tuples[j][0] + inst.tuples[k][0]) % 10;
        if (s0 != 0) continue;
        for (int idx : {i, j, k}) {
          TokenGroup g;
          g.symbols = {std::string(1, index_letter(idx))};
          out.push_back(std::move(g));
        }
        if (opts.subscript_drop) {
          const int dim = static_cast<int>(rng.next_below(inst.d));
          for (int idx : {i, j, k}) {
            TokenGroup g;
            g.symbols = {std::string(1, '0' + inst.tuples[idx][dim]) + "_" +
                         std::to_string(dim)};
            out.push_back(std::move(g));
          }
        } else {
          for (int idx : {i, j, k}) out.push_back(digit_group(inst.tuples[idx]));
        }
        // Per-dimension sums from dimension 1 on, stopping after the first
        // nonzero result.
        for (int m = 1; m < inst.d; ++m) {
          const int sm =
              (inst.tuples[i][m] + inst.tuples[j][m] + inst.tuples[k][m]) % 10;
          TokenGroup g;
          g.symbols = {std::string(1, '0' + sm)};
          out.push_back(std::move(g));
          if (sm != 0) break;
        }
      }
    }
  }
  return out;
}

int filler_token_count(int n) { return n * (n - 1) + 2; }

GroupList gen_filler(const Instance3Sum& inst) {
  GroupList out;
  const int count = filler_token_count(inst.n);
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    TokenGroup g;
    g.symbols = {"."};
    out.push_back(std::move(g));
  }
  return out;
}

GroupList gen_immediate(const Instance3Sum&) { return {}; }

TokenList apply_symbol_drop(const GroupList& groups, Rng& rng) {
  TokenList out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.symbols.size() == 1) {
      out.push_back(g.symbols[0]);
    } else {
      out.push_back(g.symbols[rng.next_below(g.symbols.size())]);
    }
  }
  return out;
}

TokenList split_groups(const GroupList& groups) {
  TokenList out;
  for (const auto& g : groups)
    for (const auto& s : g.symbols) out.push_back(s);
  return out;
}

std::string join_groups(const GroupList& groups) {
  std::string out;
  for (size_t i = 0; i < groups.size(); ++i) {
    if (i) out += ' ';
    for (const auto& s : groups[i].symbols) out += s;
  }
  return out;
}

std::string input_text_3sum(const Instance3Sum& inst, bool lettered) {
  std::string out;
  for (int i = 0; i < inst.n; ++i) {
    if (i) out += ' ';
    if (lettered) out += index_letter(i);
    out += digits_text(inst.tuples[i]);
  }
  return out;
}

SequenceRecord render_3sum(const Instance3Sum& inst, Regime regime, Rng& rng,
                           const RenderOptions& opts) {
  SequenceRecord rec;
  rec.task = Task::ThreeSum;
  rec.regime = regime;
  rec.n = inst.n;
  rec.d = inst.d;
  rec.input_slots = inst.tuples;
  rec.label_bool = inst.label;
  switch (regime) {
    case Regime::Filler:
      rec.intermediate = split_groups(gen_filler(inst));
      break;
    case Regime::ParallelCot: {
      GroupList groups = gen_parallel_cot(inst, CotStyle::Labeled);
      rec.intermediate =
          opts.drop ? apply_symbol_drop(groups, rng) : split_groups(groups);
      break;
    }
    case Regime::AdaptiveCot:
      rec.intermediate = split_groups(gen_adaptive_cot(inst, rng, opts.adaptive));
      break;
    case Regime::Immediate:
      break;
  }
  rec.answer = {"ANS", inst.label ? "True" : "False"};
  return rec;
}

SequenceRecord render_2sum(const Instance2Sum& inst, Regime regime,
                           const RenderOptions& opts) {
  if (regime == Regime::AdaptiveCot)
    throw ConfigError("2SUM has no adaptive-CoT regime");
  SequenceRecord rec;
  rec.task = Task::TwoSum;
  rec.regime = regime;
  rec.n = inst.n;
  rec.d = inst.d;
  rec.input_slots = inst.permuted;
  rec.perm_id = inst.perm_id;
  rec.label_count = inst.count_label;
  const int echo = opts.echo_count < 0 ? inst.n : opts.echo_count;
  if (echo > inst.n) throw ConfigError("echo_count exceeds n");
  switch (regime) {
    case Regime::Filler:
      for (int i = 0; i < echo; ++i) {
        rec.intermediate.push_back(digits_text(inst.permuted[i]));
        rec.intermediate.push_back(".");
      }
      break;
    case Regime::ParallelCot:
      for (int i = 0; i < echo; ++i) {
        rec.intermediate.push_back(digits_text(inst.permuted[i]));
        rec.intermediate.push_back(digits_text(inst.originals[i]));
      }
      break;
    case Regime::Immediate:
      break;
    case Regime::AdaptiveCot:
      break;  // unreachable
  }
  rec.answer = {"ANS:" + std::to_string(inst.count_label)};
  return rec;
}

std::string record_text(const SequenceRecord& rec) {
  std::string out;
  if (rec.task == Task::ThreeSum) {
    for (int i = 0; i < rec.n; ++i) {
      if (i) out += ' ';
      out += index_letter(i);
      out += digits_text(rec.input_slots[i]);
    }
    out += " :";
  } else {
    for (int i = 0; i < rec.n; ++i) {
      if (i) out += ' ';
      out += digits_text(rec.input_slots[i]);
    }
    out += " P_" + std::to_string(rec.perm_id);
  }
  for (const auto& t : rec.intermediate) {
    out += ' ';
    out += t;
  }
  for (const auto& t : rec.answer) {
    out += ' ';
    out += t;
  }
  return out;
}

int record_length(const SequenceRecord& rec) {
  return rec.n + 1 + static_cast<int>(rec.intermediate.size()) +
         static_cast<int>(rec.answer.size());
}

void validate_spec(const DatasetSpec& spec) {
  if (spec.task == Task::ThreeSum) {
    if (spec.n < 3 || spec.d < 1)
      throw ConfigError("3SUM requires n >= 3 and d >= 1");
  } else {
    if (spec.n < 2 || spec.d < 1)
      throw ConfigError("2SUM requires n >= 2 and d >= 1");
  }
  if (spec.n > 26) throw ConfigError("n > 26 exceeds letter markers");
  if (spec.train_count < 0 || spec.test_count < 0)
    throw ConfigError("negative sample count");
  if (spec.mixture.empty()) throw ConfigError("empty regime mixture");
  double total = 0.0;
  for (const auto& [regime, w] : spec.mixture) {
    if (w < 0.0) throw ConfigError("negative mixture weight");
    total += w;
    if (w > 0.0 && regime == Regime::AdaptiveCot) {
      if (spec.task == Task::TwoSum)
        throw ConfigError("2SUM mixture cannot include adaptive CoT");
      if (spec.d < 2)
        throw ConfigError("adaptive CoT in mixture requires d >= 2");
    }
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("mixture weights must sum to 1");
}

namespace {

// Disjoint counter namespaces so every (split, index, retry) triple maps to
// a unique counter.
constexpr std::uint64_t kTestBase = 1ULL << 40;
constexpr std::uint64_t kCalibBase = 2ULL << 40;
constexpr std::uint64_t kRetryStride = 1ULL << 48;

constexpr std::uint64_t kInstanceSalt = 0x7461736b67656e01ULL;
constexpr std::uint64_t kRegimeSalt = 0x7461736b67656e02ULL;
constexpr std::uint64_t kDropSalt = 0x7461736b67656e03ULL;
constexpr std::uint64_t kBankSalt = 0x7461736b67656e04ULL;

}  // namespace

RecordStream::RecordStream(const DatasetSpec& spec) : spec_(spec) {
  validate_spec(spec_);
  if (spec_.task == Task::TwoSum) {
    const std::uint64_t bank_seed =
        spec_.bank_seed ? spec_.bank_seed : splitmix64(spec_.seed ^ kBankSalt);
    bank_ = build_permutation_bank(spec_.n, spec_.d, bank_seed);
  }
  double cum = 0.0;
  for (const auto& [regime, w] : spec_.mixture) {
    if (w <= 0.0) continue;
    cum += w;
    regimes_.push_back(regime);
    cum_weights_.push_back(cum);
  }
  cum_weights_.back() = 1.0;

  adaptive_cutoff_ = std::numeric_limits<double>::infinity();
  if (spec_.mixture.count(Regime::AdaptiveCot) &&
      spec_.mixture.at(Regime::AdaptiveCot) > 0.0 &&
      spec_.adaptive_calibration_samples > 0) {
    std::vector<int> lengths;
    lengths.reserve(spec_.adaptive_calibration_samples);
    for (long c = 0; c < spec_.adaptive_calibration_samples; ++c) {
      const std::uint64_t counter = kCalibBase + static_cast<std::uint64_t>(c);
      Rng inst_rng(spec_.seed ^ kInstanceSalt, counter);
      const Instance3Sum inst = sample_instance_3sum(spec_.n, spec_.d, inst_rng);
      Rng drop_rng(spec_.seed ^ kDropSalt, counter);
      const GroupList groups =
          gen_adaptive_cot(inst, drop_rng, spec_.render.adaptive);
      lengths.push_back(static_cast<int>(split_groups(groups).size()));
    }
    std::sort(lengths.begin(), lengths.end());
    const double p = spec_.adaptive_truncation_percentile / 100.0;
    const size_t rank = std::min(
        lengths.size() - 1,
        static_cast<size_t>(std::ceil(p * static_cast<double>(lengths.size()))));
    adaptive_cutoff_ = lengths[rank];
  }
}

std::uint64_t RecordStream::counter_for(Split split, long index) const {
  return (split == Split::Train ? 0ULL : kTestBase) +
         static_cast<std::uint64_t>(index);
}

Regime RecordStream::regime_at(Split split, long index) const {
  Rng rng(spec_.seed ^ kRegimeSalt, counter_for(split, index));
  const double u = rng.next_unit();
  for (size_t i = 0; i < cum_weights_.size(); ++i)
    if (u < cum_weights_[i]) return regimes_[i];
  return regimes_.back();
}

SequenceRecord RecordStream::render_candidate(std::uint64_t counter,
                                              Regime regime) const {
  Rng inst_rng(spec_.seed ^ kInstanceSalt, counter);
  Rng drop_rng(spec_.seed ^ kDropSalt, counter);
  if (spec_.task == Task::ThreeSum) {
    const Instance3Sum inst = sample_instance_3sum(spec_.n, spec_.d, inst_rng);
    return render_3sum(inst, regime, drop_rng, spec_.render);
  }
  const Instance2Sum inst =
      sample_instance_2sum(spec_.n, spec_.d, bank_, inst_rng);
  return render_2sum(inst, regime, spec_.render);
}

SequenceRecord RecordStream::at(Split split, long index) const {
  const Regime regime = regime_at(split, index);
  const std::uint64_t base = counter_for(split, index);
  for (std::uint64_t retry = 0; retry < 10000; ++retry) {
    SequenceRecord rec = render_candidate(base + retry * kRetryStride, regime);
    if (regime == Regime::AdaptiveCot &&
        static_cast<double>(rec.intermediate.size()) > adaptive_cutoff_)
      continue;
    return rec;
  }
  throw DataError("adaptive-CoT rejection did not terminate");
}

DatasetStats dataset_stats(const std::vector<SequenceRecord>& records) {
  if (records.empty()) throw DataError("dataset_stats on empty dataset");
  DatasetStats stats;
  stats.total = static_cast<long>(records.size());
  std::vector<int> lengths;
  lengths.reserve(records.size());
  for (const auto& rec : records) {
    const std::string label =
        rec.task == Task::ThreeSum ? rec.answer.at(1) : rec.answer.at(0);
    ++stats.label_counts[label];
    ++stats.regime_counts[rec.regime];
    lengths.push_back(record_length(rec));
  }
  long best = 0;
  for (const auto& [label, count] : stats.label_counts)
    best = std::max(best, count);
  stats.majority_baseline =
      static_cast<double>(best) / static_cast<double>(stats.total);
  std::sort(lengths.begin(), lengths.end());
  auto pct = [&](double p) {
    const size_t rank = std::min(
        lengths.size() - 1,
        static_cast<size_t>(std::ceil(p / 100.0 * lengths.size())));
    return lengths[rank];
  };
  stats.min_len = lengths.front();
  stats.max_len = lengths.back();
  stats.p50 = pct(50);
  stats.p95 = pct(95);
  stats.p99 = pct(99);
  return stats;
}

}  // namespace fillerlab
