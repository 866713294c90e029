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

#include "htr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "htr/common.hpp"

namespace htr {

int64_t edit_distance(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
  const size_t n = a.size(), m = b.size();
  if (n == 0) return static_cast<int64_t>(m);
  if (m == 0) return static_cast<int64_t>(n);
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double corpus_cer(
    const std::vector<std::pair<std::vector<uint32_t>, std::vector<uint32_t>>>& ref_hyp_pairs) {
  int64_t dist = 0, len = 0;
  for (const auto& [ref, hyp] : ref_hyp_pairs) {
    dist += edit_distance(ref, hyp);
    len += static_cast<int64_t>(ref.size());
  }
  if (len == 0) throw ConfigError("corpus_cer: all references are empty");
  return 100.0 * static_cast<double>(dist) / static_cast<double>(len);
}

double time_to_threshold(const RunRecord& run, double factor) {
  if (run.epochs.empty()) throw ConfigError("time_to_threshold: empty run");
  double min_cer = std::numeric_limits<double>::infinity();
  for (const auto& e : run.epochs) min_cer = std::min(min_cer, e.val_cer);
  const double threshold = factor * min_cer;
  for (const auto& e : run.epochs)
    if (e.val_cer < threshold || e.val_cer == min_cer) return e.cum_seconds;
  throw StateError("time_to_threshold: unreachable");  // the min epoch qualifies
}

void write_run_csv(const std::string& path, const RunRecord& run) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open run record for writing: " + path);
  os << "epoch,cum_seconds,train_loss,val_cer\n";
  char buf[128];
  for (size_t i = 0; i < run.epochs.size(); ++i) {
    const auto& e = run.epochs[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i + 1, e.cum_seconds,
                  e.train_loss, e.val_cer);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path);
}

RunRecord read_run_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open run record: " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("epoch,", 0) != 0)
    throw IoError("bad run record header in " + path);
  RunRecord run;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EpochStat e;
    unsigned long epoch = 0;
    if (std::sscanf(line.c_str(), "%lu,%lg,%lg,%lg", &epoch, &e.cum_seconds, &e.train_loss,
                    &e.val_cer) != 4)
      throw IoError("bad run record row in " + path + ": " + line);
    run.epochs.push_back(e);
  }
  return run;
}

}  // namespace htr
