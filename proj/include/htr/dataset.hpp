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

#include <string>
#include <vector>

#include "htr/ctc.hpp"
#include "htr/preprocess.hpp"

namespace htr {

struct LabeledSample {
  LineImage image;
  std::vector<uint32_t> label;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest file
  std::vector<uint32_t> label;
};

// One record per line: `relative/path.pgm<TAB>transcription`, UTF-8.
// Transcriptions are raw codepoints; TAB and newline cannot appear in them.
std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path,
                    const std::vector<ManifestEntry>& entries);

// Loads the images referenced by a manifest.
std::vector<LabeledSample> load_samples(const std::string& manifest_path);

// Sorted set of all codepoints appearing in the labels.
Vocabulary vocab_from_samples(const std::vector<LabeledSample>& samples);

}  // namespace htr
