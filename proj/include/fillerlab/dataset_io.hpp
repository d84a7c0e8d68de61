// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset layout: <dir>/train.txt, <dir>/test.txt (one record per
// line, space-separated tokens, leading regime tag) plus manifest.json.

#pragma once

#include <string>
#include <vector>

#include "fillerlab/encoding.hpp"
#include "fillerlab/taskgen.hpp"

namespace fillerlab {

struct DatasetManifest {
  int format_version = 1;
  DatasetSpec spec;
  double adaptive_cutoff = 0.0;
  std::vector<std::string> vocab_tokens;
  int input_width = 0;
  int target_width = 0;
  int max_len = 0;
  DatasetStats train_stats;
  DatasetStats test_stats;
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

std::string record_line(const SequenceRecord& rec);
SequenceRecord parse_record_line(const std::string& line, Task task, int n,
                                 int d);

// Generates every record of the spec and writes train.txt/test.txt plus the
// manifest. Byte-identical for identical specs.
DatasetManifest write_dataset(const DatasetSpec& spec, const std::string& dir);

DatasetManifest read_manifest(const std::string& dir);
std::vector<SequenceRecord> read_records(const std::string& path, Task task,
                                         int n, int d);

// Vocabulary for a dataset (mirrors what the manifest serializes).
Vocabulary dataset_vocabulary(const DatasetSpec& spec);

}  // namespace fillerlab
