// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fillerlab/taskgen.hpp"

using namespace fillerlab;

namespace {

Instance3Sum make_instance(std::vector<DigitTuple> tuples) {
  Instance3Sum inst;
  inst.n = static_cast<int>(tuples.size());
  inst.d = static_cast<int>(tuples.front().size());
  inst.tuples = std::move(tuples);
  auto [label, witness] = label_3sum_bruteforce(inst.tuples);
  inst.label = label;
  inst.witness = witness;
  return inst;
}

std::string join(const TokenList& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

// Independent labeler: set-membership formulation. For each unordered pair,
// look up whether the complement value exists at a third index.
bool label_3sum_by_lookup(const std::vector<DigitTuple>& tuples) {
  const int n = static_cast<int>(tuples.size());
  const int d = static_cast<int>(tuples.front().size());
  std::multiset<std::vector<int>> values;
  for (const auto& t : tuples) values.insert(std::vector<int>(t.begin(), t.end()));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      std::vector<int> need(d);
      for (int m = 0; m < d; ++m)
        need[m] = (30 - tuples[i][m] - tuples[j][m]) % 10;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        bool eq = true;
        for (int m = 0; m < d; ++m)
          if (tuples[k][m] != need[m]) { eq = false; break; }
        if (eq) return true;
      }
    }
  }
  return false;
}

}  // namespace

TEST_CASE("brute-force 3SUM labeling with lexicographic witness") {
  auto [label, witness] =
      label_3sum_bruteforce({{0, 5}, {7, 5}, {2, 2}, {1, 3}});
  CHECK(label);
  REQUIRE(witness.has_value());
  CHECK(*witness == std::array<int, 3>{1, 2, 3});

  auto [neg, no_witness] = label_3sum_bruteforce({{1, 1}, {1, 1}, {1, 1}});
  CHECK_FALSE(neg);
  CHECK_FALSE(no_witness.has_value());

  auto [zero, w0] = label_3sum_bruteforce({{0, 0}, {0, 0}, {0, 0}});
  CHECK(zero);
  CHECK(*w0 == std::array<int, 3>{0, 1, 2});

  CHECK_THROWS_AS(label_3sum_bruteforce({{1}, {2}}), DataError);
}

TEST_CASE("dual-implementation 3SUM oracle agreement") {
  long trues = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    Rng rng(99, static_cast<std::uint64_t>(trial));
    const int n = 3 + static_cast<int>(rng.next_below(12));
    const int d = 1 + static_cast<int>(rng.next_below(6));
    const Instance3Sum inst = sample_instance_3sum(n, d, rng);
    CHECK(inst.label == label_3sum_by_lookup(inst.tuples));
    if (inst.label) ++trues;
    if (inst.witness) {
      const auto& [i, j, k] = *inst.witness;
      for (int m = 0; m < d; ++m)
        CHECK((inst.tuples[i][m] + inst.tuples[j][m] + inst.tuples[k][m]) %
                  10 ==
              0);
    }
  }
  CHECK(trues > 0);
  CHECK(trues < 10000);
}

TEST_CASE("2SUM pair counting") {
  CHECK(count_2sum_bruteforce({{0, 0}, {0, 0}}) == 1);
  CHECK(count_2sum_bruteforce({{1, 7}, {9, 3}, {5, 5}}) == 1);
  CHECK(count_2sum_bruteforce({{1, 1}, {2, 2}, {3, 3}}) == 0);
  CHECK(count_2sum_bruteforce({{0, 0}, {0, 0}, {0, 0}, {0, 0}}) == 6);
  CHECK_THROWS_AS(count_2sum_bruteforce({{1, 2}}), DataError);
}

TEST_CASE("parallel CoT golden: schematic-figure instance, plain sums") {
  const Instance3Sum inst = make_instance({{0, 1}, {1, 0}, {7, 3}, {2, 7}});
  CHECK(inst.label);
  CHECK(*inst.witness == std::array<int, 3>{1, 2, 3});
  const GroupList groups = gen_parallel_cot(inst, CotStyle::PlainSums);
  CHECK(join_groups(groups) == "11 74 28 83 37 90");
  CHECK(input_text_3sum(inst, false) + " : " + join_groups(groups) +
            " ANS True" ==
        "01 10 73 27 : 11 74 28 83 37 90 ANS True");
}

TEST_CASE("parallel CoT golden: labeled form with third-input substitution") {
  const Instance3Sum inst = make_instance({{0, 5}, {7, 5}, {2, 2}, {1, 3}});
  const GroupList groups = gen_parallel_cot(inst, CotStyle::Labeled);
  CHECK(join_groups(groups) == "AB 70 AC 27 AD 18 BC 97 BD 88 CD B");
  CHECK(input_text_3sum(inst) == "A05 B75 C22 D13");
}

TEST_CASE("symbol drop golden under the frozen seed") {
  const Instance3Sum inst = make_instance({{0, 5}, {7, 5}, {2, 2}, {1, 3}});
  const GroupList groups = gen_parallel_cot(inst, CotStyle::Labeled);
  // Seed searched offline so the uniform per-group draws reproduce the
  // documented example; any seed change must re-derive this constant.
  Rng rng(3317, 0);
  CHECK(join(apply_symbol_drop(groups, rng)) == "A 7 C 2 D 1 B 9 D 8 C B");
}

TEST_CASE("symbol drop keeps one symbol per group, uniformly") {
  GroupList groups;
  TokenGroup pair;
  pair.symbols = {"A", "B"};
  groups.push_back(pair);
  long kept_a = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Rng rng(5, static_cast<std::uint64_t>(t));
    const TokenList out = apply_symbol_drop(groups, rng);
    REQUIRE(out.size() == 1);
    if (out[0] == "A") ++kept_a;
    else CHECK(out[0] == "B");
  }
  const double freq = static_cast<double>(kept_a) / trials;
  CHECK(freq == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("dropped parallel CoT length is n(n-1); filler adds 2") {
  for (int n = 4; n <= 14; ++n) {
    Rng rng(7, static_cast<std::uint64_t>(n));
    const Instance3Sum inst = sample_instance_3sum(n, 3, rng);
    Rng drop(8, static_cast<std::uint64_t>(n));
    const TokenList cot =
        apply_symbol_drop(gen_parallel_cot(inst, CotStyle::Labeled), drop);
    CHECK(static_cast<int>(cot.size()) == n * (n - 1));
    CHECK(static_cast<int>(split_groups(gen_filler(inst)).size()) ==
          filler_token_count(n));
    CHECK(filler_token_count(n) == static_cast<int>(cot.size()) + 2);
  }
  CHECK(filler_token_count(14) == 184);
  CHECK(filler_token_count(4) == 14);
}

TEST_CASE("third-input substitution references a true witness") {
  for (int trial = 0; trial < 500; ++trial) {
    Rng rng(11, static_cast<std::uint64_t>(trial));
    const Instance3Sum inst = sample_instance_3sum(6, 2, rng);
    const GroupList groups = gen_parallel_cot(inst, CotStyle::Labeled);
    REQUIRE(groups.size() == 2u * 15);
    size_t g = 0;
    for (int i = 0; i < inst.n; ++i) {
      for (int j = i + 1; j < inst.n; ++j) {
        const TokenGroup& value = groups[g + 1];
        if (value.symbols.size() == 1 && value.symbols[0][0] >= 'A') {
          const int k = value.symbols[0][0] - 'A';
          CHECK(k < i);  // completer already written before the pair
          for (int m = 0; m < inst.d; ++m)
            CHECK((inst.tuples[i][m] + inst.tuples[j][m] + inst.tuples[k][m]) %
                      10 ==
                  0);
        }
        g += 2;
      }
    }
  }
}

TEST_CASE("adaptive CoT golden and gate structure") {
  const Instance3Sum inst = make_instance({{1, 5}, {7, 5}, {2, 2}, {1, 3}});
  Rng rng(0, 0);
  CHECK(join_groups(gen_adaptive_cot(inst, rng)) ==
        "A B C 15 75 22 2 B C D 75 22 13 0");
  CHECK(inst.label);

  // Subscripted-drop variant under its frozen seed (both triples keep dim 0).
  Rng sub_rng(17, 0);
  AdaptiveOptions opts;
  opts.subscript_drop = true;
  CHECK(join_groups(gen_adaptive_cot(inst, sub_rng, opts)) ==
        "A B C 1_0 7_0 2_0 2 B C D 7_0 2_0 1_0 0");

  const Instance3Sum no_gate = make_instance({{1, 0}, {1, 0}, {1, 0}});
  Rng rng2(0, 0);
  CHECK(gen_adaptive_cot(no_gate, rng2).empty());

  Rng rng3(0, 0);
  const Instance3Sum flat = make_instance({{1}, {2}, {3}});
  CHECK_THROWS_AS(gen_adaptive_cot(flat, rng3), ConfigError);
}

TEST_CASE("adaptive CoT label always matches the oracle") {
  for (int trial = 0; trial < 2000; ++trial) {
    Rng rng(13, static_cast<std::uint64_t>(trial));
    const Instance3Sum inst = sample_instance_3sum(5, 3, rng);
    Rng drop(14, static_cast<std::uint64_t>(trial));
    const SequenceRecord rec = render_3sum(inst, Regime::AdaptiveCot, drop);
    CHECK(rec.label_bool == label_3sum_by_lookup(inst.tuples));
    CHECK(rec.answer[1] == (inst.label ? "True" : "False"));
  }
}

TEST_CASE("permutation bank build, apply, invert") {
  const PermutationBank bank = build_permutation_bank(4, 2, 42);
  const PermutationBank again = build_permutation_bank(4, 2, 42);
  for (int k = 0; k < 10; ++k) CHECK(bank.offsets[k] == again.offsets[k]);

  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(21, static_cast<std::uint64_t>(trial));
    DigitTuple x{static_cast<std::uint8_t>(rng.next_digit()),
                 static_cast<std::uint8_t>(rng.next_digit())};
    const int k = static_cast<int>(rng.next_below(10));
    const int pos = static_cast<int>(rng.next_below(4));
    CHECK(bank.invert(k, bank.apply(k, x, pos), pos) == x);
  }

  PermutationBank ident = bank;
  for (auto& offs : ident.offsets) std::fill(offs.begin(), offs.end(), 0);
  DigitTuple x{3, 7};
  CHECK(ident.apply(5, x, 2) == x);
}

TEST_CASE("2SUM sampling is consistent with its oracle") {
  const PermutationBank bank = build_permutation_bank(6, 2, 9);
  for (int trial = 0; trial < 2000; ++trial) {
    Rng rng(23, static_cast<std::uint64_t>(trial));
    const Instance2Sum inst = sample_instance_2sum(6, 2, bank, rng);
    CHECK(inst.count_label == count_2sum_bruteforce(inst.originals));
    for (int i = 0; i < inst.n; ++i)
      CHECK(bank.apply(inst.perm_id, inst.originals[i], i) ==
            inst.permuted[i]);
  }
}

TEST_CASE("2SUM golden: filler repeats the question back") {
  Instance2Sum inst;
  inst.n = 4;
  inst.d = 2;
  inst.originals = {{1, 1}, {9, 9}, {1, 1}, {9, 9}};
  inst.perm_id = 8;
  inst.permuted = {{9, 7}, {8, 0}, {9, 4}, {4, 4}};
  inst.count_label = count_2sum_bruteforce(inst.originals);
  REQUIRE(inst.count_label == 4);
  RenderOptions opts;
  opts.echo_count = 3;
  const SequenceRecord rec = render_2sum(inst, Regime::Filler, opts);
  CHECK(record_text(rec) == "97 80 94 44 P_8 97 . 80 . 94 . ANS:4");
}

TEST_CASE("2SUM golden: CoT interleaves permuted and original inputs") {
  Instance2Sum inst;
  inst.n = 4;
  inst.d = 2;
  inst.originals = {{0, 8}, {7, 3}, {3, 5}, {0, 2}};
  inst.perm_id = 5;
  inst.permuted = {{1, 7}, {8, 4}, {0, 9}, {3, 9}};
  inst.count_label = count_2sum_bruteforce(inst.originals);
  RenderOptions opts;
  opts.echo_count = 3;
  const SequenceRecord rec = render_2sum(inst, Regime::ParallelCot, opts);
  const std::string text = record_text(rec);
  // The documented example ends in a count its own first three originals
  // cannot produce; we keep the sequence byte-exact through the echo and
  // require the answer to be instance-consistent instead.
  CHECK(text.rfind("17 84 09 39 P_5 17 08 84 73 09 35 ANS:", 0) == 0);
  CHECK(rec.answer[0] == "ANS:" + std::to_string(inst.count_label));

  // Identity permutation: echo pairs coincide.
  Instance2Sum same = inst;
  same.permuted = same.originals;
  const SequenceRecord rec2 = render_2sum(same, Regime::ParallelCot, opts);
  for (size_t i = 0; i + 1 < rec2.intermediate.size(); i += 2)
    CHECK(rec2.intermediate[i] == rec2.intermediate[i + 1]);
}

TEST_CASE("record text and length formulas") {
  const Instance3Sum inst = make_instance({{0, 5}, {7, 5}, {2, 2}, {1, 3}});
  Rng rng(0, 0);
  const SequenceRecord imm = render_3sum(inst, Regime::Immediate, rng);
  CHECK(record_text(imm) == "A05 B75 C22 D13 : ANS True");
  CHECK(record_length(imm) == 4 + 1 + 2);

  const SequenceRecord fill = render_3sum(inst, Regime::Filler, rng);
  CHECK(record_length(fill) == 4 + 1 + filler_token_count(4) + 2);
  CHECK(fill.intermediate.front() == ".");
  CHECK(fill.intermediate.back() == ".");

  // Filler sequences for True/False instances differ only in the label.
  const Instance3Sum neg = make_instance({{1, 1}, {1, 1}, {1, 1}, {2, 2}});
  CHECK_FALSE(neg.label);
  const SequenceRecord fneg = render_3sum(neg, Regime::Filler, rng);
  CHECK(fneg.intermediate == fill.intermediate);
  CHECK(fneg.answer[1] == "False");
}

TEST_CASE("spec validation errors") {
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 4;
  spec.d = 2;
  spec.mixture = {{Regime::Filler, 0.5}, {Regime::ParallelCot, 0.5}};
  CHECK_NOTHROW(validate_spec(spec));

  DatasetSpec bad = spec;
  bad.mixture = {{Regime::Filler, 0.4}, {Regime::ParallelCot, 0.4}};
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);

  bad = spec;
  bad.mixture = {{Regime::AdaptiveCot, 1.0}};
  bad.d = 1;
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);

  bad = spec;
  bad.task = Task::TwoSum;
  bad.mixture = {{Regime::AdaptiveCot, 1.0}};
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);

  bad = spec;
  bad.n = 27;
  CHECK_THROWS_AS(validate_spec(bad), ConfigError);

  Rng rng(0, 0);
  CHECK_THROWS_AS(sample_instance_3sum(2, 1, rng), ConfigError);
}

TEST_CASE("record stream determinism and order independence") {
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 5;
  spec.d = 2;
  spec.train_count = 200;
  spec.test_count = 50;
  spec.seed = 77;
  spec.mixture = {{Regime::Filler, 0.5}, {Regime::ParallelCot, 0.5}};
  const RecordStream a(spec);
  const RecordStream b(spec);
  // Access in different orders; records depend only on (split, index).
  for (long i = 199; i >= 0; --i) CHECK(a.at(Split::Train, i) == b.at(Split::Train, i));
  CHECK(a.at(Split::Test, 3) == b.at(Split::Test, 3));
  // Train and test streams are disjoint namespaces.
  CHECK_FALSE(a.at(Split::Train, 3) == a.at(Split::Test, 3));
}

TEST_CASE("mixture concentration over a large draw") {
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 4;
  spec.d = 2;
  spec.train_count = 20000;
  spec.seed = 3;
  spec.mixture = {{Regime::Filler, 0.5}, {Regime::ParallelCot, 0.5}};
  const RecordStream stream(spec);
  long filler = 0;
  for (long i = 0; i < spec.train_count; ++i)
    if (stream.regime_at(Split::Train, i) == Regime::Filler) ++filler;
  const double frac = static_cast<double>(filler) / spec.train_count;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("immediate-only mixture yields empty intermediates") {
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 4;
  spec.d = 2;
  spec.train_count = 50;
  spec.seed = 5;
  spec.mixture = {{Regime::Immediate, 1.0}};
  const RecordStream stream(spec);
  for (long i = 0; i < 50; ++i)
    CHECK(stream.at(Split::Train, i).intermediate.empty());
}

TEST_CASE("adaptive stream respects the length cutoff") {
  DatasetSpec spec;
  spec.task = Task::ThreeSum;
  spec.n = 6;
  spec.d = 3;
  spec.train_count = 500;
  spec.seed = 31;
  spec.mixture = {{Regime::AdaptiveCot, 1.0}};
  spec.adaptive_calibration_samples = 2000;
  const RecordStream stream(spec);
  CHECK(stream.adaptive_cutoff() > 0.0);
  for (long i = 0; i < spec.train_count; ++i) {
    const SequenceRecord rec = stream.at(Split::Train, i);
    CHECK(static_cast<double>(rec.intermediate.size()) <=
          stream.adaptive_cutoff());
    CHECK(rec.label_bool == label_3sum_by_lookup(rec.input_slots));
  }
}

TEST_CASE("dataset stats: balance, baseline, percentiles") {
  std::vector<SequenceRecord> recs;
  const Instance3Sum pos = make_instance({{0, 0}, {0, 0}, {0, 0}});
  const Instance3Sum neg = make_instance({{1, 1}, {1, 1}, {1, 1}});
  Rng rng(0, 0);
  for (int i = 0; i < 5; ++i) {
    recs.push_back(render_3sum(pos, Regime::Immediate, rng));
    recs.push_back(render_3sum(neg, Regime::Immediate, rng));
  }
  const DatasetStats stats = dataset_stats(recs);
  CHECK(stats.total == 10);
  CHECK(stats.label_counts.at("True") == 5);
  CHECK(stats.label_counts.at("False") == 5);
  CHECK(stats.majority_baseline == doctest::Approx(0.5));
  CHECK(stats.min_len == stats.max_len);
  CHECK_THROWS_AS(dataset_stats({}), DataError);
}
