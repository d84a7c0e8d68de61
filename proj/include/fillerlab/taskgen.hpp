// SPDX-License-Identifier: Apache-2.0
//
// 3SUM / 2SUM-Transform instance sampling, brute-force labeling, and the
// four sequence regimes (filler, parallel CoT, instance-adaptive CoT,
// immediate answer).

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fillerlab/errors.hpp"
#include "fillerlab/rng.hpp"

namespace fillerlab {

// A point in Z_10^d.
using DigitTuple = std::vector<std::uint8_t>;

enum class Task { ThreeSum, TwoSum };
enum class Regime { Filler, ParallelCot, AdaptiveCot, Immediate };

std::string task_name(Task t);
Task task_from_name(const std::string& s);
std::string regime_name(Regime r);
char regime_tag(Regime r);
Regime regime_from_tag(char c);
Regime regime_from_name(const std::string& s);

struct Instance3Sum {
  int n = 0;
  int d = 0;
  std::vector<DigitTuple> tuples;
  bool label = false;
  std::optional<std::array<int, 3>> witness;
};

// True with the lexicographically-first witness iff some distinct-index
// triple sums to the zero tuple mod 10. O(n^3 d).
std::pair<bool, std::optional<std::array<int, 3>>> label_3sum_bruteforce(
    const std::vector<DigitTuple>& tuples);

// Unordered distinct-index pairs summing to zero mod 10 in every dimension.
int count_2sum_bruteforce(const std::vector<DigitTuple>& tuples);

Instance3Sum sample_instance_3sum(int n, int d, Rng& rng);

// Ten fixed per-position digit shifts P_0..P_9 over inputs of shape (n, d).
struct PermutationBank {
  int n = 0;
  int d = 0;
  std::uint64_t seed = 0;
  std::array<std::vector<std::uint8_t>, 10> offsets;  // each n*d, in [0,9]

  DigitTuple apply(int k, const DigitTuple& x, int position) const;
  DigitTuple invert(int k, const DigitTuple& x, int position) const;
};

PermutationBank build_permutation_bank(int n, int d, std::uint64_t seed);

struct Instance2Sum {
  int n = 0;
  int d = 0;
  std::vector<DigitTuple> originals;
  int perm_id = 0;
  std::vector<DigitTuple> permuted;
  int count_label = 0;
};

Instance2Sum sample_instance_2sum(int n, int d, const PermutationBank& bank,
                                  Rng& rng);

// Intermediate tokens are generated as groups of symbols; the symbol-drop
// pass keeps one symbol per group, the split pass emits every symbol as its
// own token. "AB" is the group {A, B}; a dimension-subscripted digit like
// "1_0" is a single symbol.
struct TokenGroup {
  std::vector<std::string> symbols;
};
using GroupList = std::vector<TokenGroup>;
using TokenList = std::vector<std::string>;

// Labeled: "AB 70 ... CD B" with the third-input index substituted when an
// earlier input completes the pair to a zero triple. PlainSums: bare pair
// sums, no labels, no substitution (the schematic-figure rendering).
enum class CotStyle { Labeled, PlainSums };

GroupList gen_parallel_cot(const Instance3Sum& inst,
                           CotStyle style = CotStyle::Labeled);

struct AdaptiveOptions {
  bool subscript_drop = false;  // keep one random dimension per triple
};

GroupList gen_adaptive_cot(const Instance3Sum& inst, Rng& rng,
                           const AdaptiveOptions& opts = {});
GroupList gen_filler(const Instance3Sum& inst);
GroupList gen_immediate(const Instance3Sum& inst);

// n(n-1) dropped-CoT tokens plus the two separators.
int filler_token_count(int n);

TokenList apply_symbol_drop(const GroupList& groups, Rng& rng);
TokenList split_groups(const GroupList& groups);

std::string join_groups(const GroupList& groups);
std::string digits_text(const DigitTuple& t);
char index_letter(int i);

// "A05 B75 ..." (lettered) or "01 10 ..." (plain, figure style).
std::string input_text_3sum(const Instance3Sum& inst, bool lettered = true);

// One tokenized training/eval sample.
struct SequenceRecord {
  Task task = Task::ThreeSum;
  Regime regime = Regime::Immediate;
  int n = 0;
  int d = 0;
  std::vector<DigitTuple> input_slots;  // 3SUM: x_i; 2SUM: P_k(x_i)
  int perm_id = -1;                     // 2SUM only
  TokenList intermediate;               // final tokens (post drop/split)
  TokenList answer;                     // {"ANS","True"} or {"ANS:<c>"}
  bool label_bool = false;
  int label_count = 0;

  bool operator==(const SequenceRecord&) const = default;
};

struct RenderOptions {
  bool drop = true;  // symbol-drop the parallel CoT (vocabulary reduction)
  AdaptiveOptions adaptive;
  int echo_count = -1;  // 2SUM: inputs echoed back; -1 = all n
};

SequenceRecord render_3sum(const Instance3Sum& inst, Regime regime, Rng& rng,
                           const RenderOptions& opts = {});
SequenceRecord render_2sum(const Instance2Sum& inst, Regime regime,
                           const RenderOptions& opts = {});

// Full sequence as space-separated text, input slots as letter+digits (3SUM)
// or digit strings (2SUM). This is also the dataset line format minus the
// leading regime tag.
std::string record_text(const SequenceRecord& rec);

// Number of model positions the record occupies (input slots + separator +
// intermediate + answer).
int record_length(const SequenceRecord& rec);

struct DatasetSpec {
  Task task = Task::ThreeSum;
  int n = 4;
  int d = 2;
  long train_count = 0;
  long test_count = 0;
  std::map<Regime, double> mixture;  // weights sum to 1
  std::uint64_t seed = 0;
  double adaptive_truncation_percentile = 95.0;
  long adaptive_calibration_samples = 100000;
  std::uint64_t bank_seed = 0;  // 2SUM permutation bank
  RenderOptions render;
};

void validate_spec(const DatasetSpec& spec);  // throws ConfigError

enum class Split { Train, Test };

// Deterministic record stream: record (split, index) is a pure function of
// the spec, so shards can be generated concurrently in any order.
class RecordStream {
 public:
  explicit RecordStream(const DatasetSpec& spec);

  SequenceRecord at(Split split, long index) const;
  Regime regime_at(Split split, long index) const;

  // Intermediate-length cutoff applied to adaptive-CoT records (+inf when
  // the mixture has no adaptive component).
  double adaptive_cutoff() const { return adaptive_cutoff_; }

  const DatasetSpec& spec() const { return spec_; }
  const PermutationBank& bank() const { return bank_; }

 private:
  SequenceRecord render_candidate(std::uint64_t counter, Regime regime) const;
  std::uint64_t counter_for(Split split, long index) const;

  DatasetSpec spec_;
  PermutationBank bank_;  // 2SUM only
  std::vector<Regime> regimes_;
  std::vector<double> cum_weights_;
  double adaptive_cutoff_ = 0.0;
};

struct DatasetStats {
  long total = 0;
  std::map<std::string, long> label_counts;  // "True"/"False" or "ANS:<c>"
  double majority_baseline = 0.0;
  std::map<Regime, long> regime_counts;
  int min_len = 0, max_len = 0;
  int p50 = 0, p95 = 0, p99 = 0;  // record_length percentiles
};

DatasetStats dataset_stats(const std::vector<SequenceRecord>& records);

}  // namespace fillerlab
