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

#include <map>
#include <string>

#include "htr/tensor.hpp"

namespace htr {

// Flat binary container: versioned header, then entries sorted by name, each
// name + shape + little-endian float64 payload. Round-trips bit-exactly.
//
//   magic "HTRCKPT1" | u32 version | u32 count
//   per entry: u32 name_len | name | u32 rank | u64 dims[rank] | f64 data[.]
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace htr
