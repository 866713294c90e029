/*
 * Copyright 2026 The HTR Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace htr {

// Levenshtein distance with unit insert/delete/substitute costs.
int64_t edit_distance(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);

// Micro-averaged character error rate in percent: sum of edit distances over
// sum of reference lengths. May exceed 100%; never clamped.
double corpus_cer(
    const std::vector<std::pair<std::vector<uint32_t>, std::vector<uint32_t>>>& ref_hyp_pairs);

struct EpochStat {
  double cum_seconds = 0.0;  // cumulative wall-clock time
  double train_loss = 0.0;
  double val_cer = 0.0;  // percent
};

struct RunRecord {
  std::vector<EpochStat> epochs;
};

// Wall-clock time of the first epoch whose validation CER is below
// factor * min CER of the run. The min-achieving epoch always qualifies
// (down to equality when the minimum is zero).
double time_to_threshold(const RunRecord& run, double factor = 1.05);

// CSV: header `epoch,cum_seconds,train_loss,val_cer`, epochs numbered from 1.
void write_run_csv(const std::string& path, const RunRecord& run);
RunRecord read_run_csv(const std::string& path);

}  // namespace htr
