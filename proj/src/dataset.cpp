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

#include "htr/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace htr {

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path);
  std::vector<ManifestEntry> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("manifest " + manifest_path + " line " + std::to_string(lineno) +
                    ": missing TAB separator");
    ManifestEntry e;
    e.path = line.substr(0, tab);
    e.label = utf8_decode(line.substr(tab + 1));
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& manifest_path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw IoError("cannot open manifest for writing: " + manifest_path);
  for (const auto& e : entries) {
    const std::string text = utf8_encode(e.label);
    if (text.find('\t') != std::string::npos || text.find('\n') != std::string::npos)
      throw IoError("manifest transcription may not contain TAB or newline");
    os << e.path << '\t' << text << '\n';
  }
  if (!os) throw IoError("write failed: " + manifest_path);
}

std::vector<LabeledSample> load_samples(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<LabeledSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    LabeledSample s;
    s.image = read_pgm((dir / e.path).string());
    s.label = e.label;
    out.push_back(std::move(s));
  }
  return out;
}

Vocabulary vocab_from_samples(const std::vector<LabeledSample>& samples) {
  std::set<uint32_t> seen;
  for (const auto& s : samples) seen.insert(s.label.begin(), s.label.end());
  Vocabulary v;
  v.symbols.assign(seen.begin(), seen.end());
  return v;
}

}  // namespace htr
