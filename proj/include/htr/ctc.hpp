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

#include "htr/tape.hpp"
#include "htr/tensor.hpp"

namespace htr {

// Ordered distinct codepoints; the blank class is the last index n, so logit
// rows have width n+1.
struct Vocabulary {
  std::vector<uint32_t> symbols;

  int size() const { return static_cast<int>(symbols.size()); }
  int blank_index() const { return size(); }
  int num_classes() const { return size() + 1; }
  bool contains(uint32_t cp) const;
  int index_of(uint32_t cp) const;  // VocabError if missing

  std::vector<int> encode(const std::vector<uint32_t>& text) const;

  static Vocabulary from_utf8(const std::string& s);
  std::string to_utf8() const;
};

// Minimum frame count that can align `label`: |l| plus one blank per pair of
// adjacent repeated characters.
int64_t ctc_required_frames(const std::vector<int>& label_ids);

// Negative log likelihood -log sum over paths collapsing to `label`, computed
// by the forward recursion over the blank-extended label in log space.
// `probs` is (T, n+1) of per-frame class probabilities. Throws
// UnalignableError when the label cannot fit in T frames (or the path sum is
// exactly zero), VocabError on unknown codepoints.
double ctc_loss(const Tensor& probs, const std::vector<uint32_t>& label,
                const Vocabulary& vocab);

// d(loss)/d(probs), same shape as probs, via the forward-backward recursions.
Tensor ctc_grad(const Tensor& probs, const std::vector<uint32_t>& label,
                const Vocabulary& vocab);

// Verification oracle: enumerates all (n+1)^T frame paths, collapses each
// (remove adjacent repeats, then blanks) and sums the probabilities of the
// paths that collapse to `label`. ctc_loss must equal -log of this.
double ctc_brute_force(const Tensor& probs, const std::vector<uint32_t>& label,
                       const Vocabulary& vocab, int max_T = 8);

// Greedy decoding: per-frame argmax (ties to the lowest class index), collapse
// adjacent repeats, strip blanks.
std::vector<uint32_t> best_path_decode(const Tensor& probs, const Vocabulary& vocab);

// Tape node wrapping ctc_loss so the gradient flows into the probability
// input (and through the softmax that produced it).
Var ctc_loss_node(Var probs, const std::vector<uint32_t>& label, const Vocabulary& vocab);

}  // namespace htr
