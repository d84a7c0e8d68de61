// SPDX-License-Identifier: Apache-2.0

#include "fillerlab/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fillerlab {

using nlohmann::json;

namespace {

json stats_to_json(const DatasetStats& s) {
  json regimes = json::object();
  for (const auto& [r, c] : s.regime_counts) regimes[regime_name(r)] = c;
  return json{{"total", s.total},
              {"label_counts", s.label_counts},
              {"majority_baseline", s.majority_baseline},
              {"regime_counts", regimes},
              {"length", {{"min", s.min_len},
                          {"p50", s.p50},
                          {"p95", s.p95},
                          {"p99", s.p99},
                          {"max", s.max_len}}}};
}

DatasetStats stats_from_json(const json& j) {
  DatasetStats s;
  s.total = j.at("total").get<long>();
  for (auto& [k, v] : j.at("label_counts").items())
    s.label_counts[k] = v.get<long>();
  s.majority_baseline = j.at("majority_baseline").get<double>();
  for (auto& [k, v] : j.at("regime_counts").items())
    s.regime_counts[regime_from_name(k)] = v.get<long>();
  const auto& len = j.at("length");
  s.min_len = len.at("min").get<int>();
  s.p50 = len.at("p50").get<int>();
  s.p95 = len.at("p95").get<int>();
  s.p99 = len.at("p99").get<int>();
  s.max_len = len.at("max").get<int>();
  return s;
}

DatasetStats stats_accumulate(std::vector<int>& lengths,
                              std::map<std::string, long>& labels,
                              std::map<Regime, long>& regimes) {
  // Shares the percentile convention with dataset_stats().
  DatasetStats s;
  s.total = static_cast<long>(lengths.size());
  s.label_counts = labels;
  s.regime_counts = regimes;
  long best = 0;
  for (const auto& [k, c] : labels) best = std::max(best, c);
  s.majority_baseline = s.total ? static_cast<double>(best) / s.total : 0.0;
  std::sort(lengths.begin(), lengths.end());
  auto pct = [&](double p) {
    const size_t rank =
        std::min(lengths.size() - 1,
                 static_cast<size_t>(std::ceil(p / 100.0 * lengths.size())));
    return lengths[rank];
  };
  if (!lengths.empty()) {
    s.min_len = lengths.front();
    s.max_len = lengths.back();
    s.p50 = pct(50);
    s.p95 = pct(95);
    s.p99 = pct(99);
  }
  return s;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
  json mixture = json::object();
  for (const auto& [r, w] : m.spec.mixture) mixture[regime_name(r)] = w;
  json j{{"format_version", m.format_version},
         {"task", task_name(m.spec.task)},
         {"n", m.spec.n},
         {"d", m.spec.d},
         {"seed", m.spec.seed},
         {"bank_seed", m.spec.bank_seed},
         {"mixture", mixture},
         {"train_count", m.spec.train_count},
         {"test_count", m.spec.test_count},
         {"adaptive_truncation_percentile", m.spec.adaptive_truncation_percentile},
         {"adaptive_calibration_samples", m.spec.adaptive_calibration_samples},
         // +inf (no adaptive regime) is not representable in JSON.
         {"adaptive_cutoff",
          std::isfinite(m.adaptive_cutoff) ? json(m.adaptive_cutoff)
                                           : json(nullptr)},
         {"render", {{"drop", m.spec.render.drop},
                     {"subscript_drop", m.spec.render.adaptive.subscript_drop},
                     {"echo_count", m.spec.render.echo_count}}},
         {"vocab", m.vocab_tokens},
         {"input_width", m.input_width},
         {"target_width", m.target_width},
         {"max_len", m.max_len},
         {"train_stats", stats_to_json(m.train_stats)},
         {"test_stats", stats_to_json(m.test_stats)}};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad manifest json: ") + e.what());
  }
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  m.spec.task = task_from_name(j.at("task").get<std::string>());
  m.spec.n = j.at("n").get<int>();
  m.spec.d = j.at("d").get<int>();
  m.spec.seed = j.at("seed").get<std::uint64_t>();
  m.spec.bank_seed = j.at("bank_seed").get<std::uint64_t>();
  for (auto& [k, v] : j.at("mixture").items())
    m.spec.mixture[regime_from_name(k)] = v.get<double>();
  m.spec.train_count = j.at("train_count").get<long>();
  m.spec.test_count = j.at("test_count").get<long>();
  m.spec.adaptive_truncation_percentile =
      j.at("adaptive_truncation_percentile").get<double>();
  m.spec.adaptive_calibration_samples =
      j.at("adaptive_calibration_samples").get<long>();
  const json& cutoff = j.at("adaptive_cutoff");
  m.adaptive_cutoff = cutoff.is_null()
                          ? std::numeric_limits<double>::infinity()
                          : cutoff.get<double>();
  m.spec.render.drop = j.at("render").at("drop").get<bool>();
  m.spec.render.adaptive.subscript_drop =
      j.at("render").at("subscript_drop").get<bool>();
  m.spec.render.echo_count = j.at("render").at("echo_count").get<int>();
  m.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  m.input_width = j.at("input_width").get<int>();
  m.target_width = j.at("target_width").get<int>();
  m.max_len = j.at("max_len").get<int>();
  m.train_stats = stats_from_json(j.at("train_stats"));
  m.test_stats = stats_from_json(j.at("test_stats"));
  return m;
}

std::string record_line(const SequenceRecord& rec) {
  return std::string(1, regime_tag(rec.regime)) + " " + record_text(rec);
}

SequenceRecord parse_record_line(const std::string& line, Task task, int n,
                                 int d) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string tok;
  while (ss >> tok) toks.push_back(tok);
  if (toks.size() < static_cast<size_t>(n) + 3)
    throw DataError("record line too short: " + line);

  SequenceRecord rec;
  rec.task = task;
  rec.n = n;
  rec.d = d;
  if (toks[0].size() != 1) throw DataError("bad regime tag: " + toks[0]);
  rec.regime = regime_from_tag(toks[0][0]);

  auto parse_digits = [&](const std::string& s, size_t offset) {
    if (s.size() != offset + static_cast<size_t>(d))
      throw DataError("bad input slot: " + s);
    DigitTuple t(d);
    for (int m = 0; m < d; ++m) {
      const char c = s[offset + m];
      if (c < '0' || c > '9') throw DataError("bad input slot: " + s);
      t[m] = static_cast<std::uint8_t>(c - '0');
    }
    return t;
  };

  size_t p = 1;
  for (int i = 0; i < n; ++i, ++p) {
    if (task == Task::ThreeSum) {
      if (toks[p].empty() || toks[p][0] != index_letter(i))
        throw DataError("bad slot letter in: " + toks[p]);
      rec.input_slots.push_back(parse_digits(toks[p], 1));
    } else {
      rec.input_slots.push_back(parse_digits(toks[p], 0));
    }
  }
  if (task == Task::ThreeSum) {
    if (toks[p] != ":") throw DataError("missing ':' separator");
    ++p;
    size_t ans = p;
    while (ans < toks.size() && toks[ans] != "ANS") ++ans;
    if (ans + 1 >= toks.size()) throw DataError("missing ANS/label");
    for (size_t t = p; t < ans; ++t) rec.intermediate.push_back(toks[t]);
    rec.answer = {toks[ans], toks[ans + 1]};
    rec.label_bool = toks[ans + 1] == "True";
  } else {
    if (toks[p].rfind("P_", 0) != 0) throw DataError("missing perm token");
    rec.perm_id = std::stoi(toks[p].substr(2));
    ++p;
    if (toks.back().rfind("ANS:", 0) != 0) throw DataError("missing ANS:<c>");
    for (size_t t = p; t + 1 < toks.size(); ++t)
      rec.intermediate.push_back(toks[t]);
    rec.answer = {toks.back()};
    rec.label_count = std::stoi(toks.back().substr(4));
  }
  return rec;
}

Vocabulary dataset_vocabulary(const DatasetSpec& spec) {
  VocabOptions opts;
  opts.subscript_digits = spec.render.adaptive.subscript_drop;
  return build_vocabulary(spec.task, spec.n, spec.d, opts);
}

DatasetManifest write_dataset(const DatasetSpec& spec, const std::string& dir) {
  RecordStream stream(spec);
  std::filesystem::create_directories(dir);

  DatasetManifest m;
  m.spec = spec;
  m.adaptive_cutoff = stream.adaptive_cutoff();
  const Vocabulary vocab = dataset_vocabulary(spec);
  m.vocab_tokens = vocab.tokens;
  m.input_width = input_row_width(spec.n, spec.d);
  m.target_width = spec.task == Task::ThreeSum
                       ? vocab.size()
                       : m.input_width + vocab.size();

  auto emit_split = [&](Split split, long count, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    std::vector<int> lengths;
    lengths.reserve(count);
    std::map<std::string, long> labels;
    std::map<Regime, long> regimes;
    for (long i = 0; i < count; ++i) {
      const SequenceRecord rec = stream.at(split, i);
      out << record_line(rec) << '\n';
      lengths.push_back(record_length(rec));
      ++labels[rec.task == Task::ThreeSum ? rec.answer[1] : rec.answer[0]];
      ++regimes[rec.regime];
    }
    return stats_accumulate(lengths, labels, regimes);
  };

  m.train_stats = emit_split(Split::Train, spec.train_count, dir + "/train.txt");
  m.test_stats = emit_split(Split::Test, spec.test_count, dir + "/test.txt");
  m.max_len = std::max(m.train_stats.max_len, m.test_stats.max_len);

  std::ofstream mf(dir + "/manifest.json", std::ios::binary);
  if (!mf) throw DataError("cannot write manifest in " + dir);
  mf << manifest_to_json(m);
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json", std::ios::binary);
  if (!in) throw DataError("no manifest.json in " + dir);
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

std::vector<SequenceRecord> read_records(const std::string& path, Task task,
                                         int n, int d) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<SequenceRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_record_line(line, task, n, d));
  }
  return out;
}

}  // namespace fillerlab
