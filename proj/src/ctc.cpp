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

#include "htr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>

namespace htr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// Blank-extended label l' of length 2|l|+1: blank, l0, blank, l1, ..., blank.
std::vector<int> extend_label(const std::vector<int>& ids, int blank) {
  std::vector<int> ext(2 * ids.size() + 1, blank);
  for (size_t i = 0; i < ids.size(); ++i) ext[2 * i + 1] = ids[i];
  return ext;
}

struct CtcWork {
  double log_p = kNegInf;
  std::vector<int> ext;       // l'
  std::vector<double> log_a;  // T x S prefix sums excluding y at t
  int64_t T = 0, S = 0;
};

void validate_probs(const Tensor& probs, const Vocabulary& vocab) {
  if (probs.rank() != 2 || probs.dim(1) != vocab.num_classes())
    throw ShapeError("ctc: probs must be (T," + std::to_string(vocab.num_classes()) +
                     "), got " + shape_str(probs.shape()));
  if (probs.dim(0) < 1) throw ShapeError("ctc: need at least one frame");
  for (int64_t i = 0; i < probs.numel(); ++i)
    if (!(probs[i] >= 0.0))
      throw ConfigError("ctc: probabilities must be non-negative and finite");
}

// Forward pass. log_a[t][s] is the sum over prefixes that reach state s at
// time t, excluding the emission y[t]; alpha[t][s] = log_a[t][s] + log y[t][l's].
// Keeping the emission factored out makes the gradient a plain product of the
// prefix and suffix sums, with no division by y.
CtcWork ctc_forward(const Tensor& probs, const std::vector<uint32_t>& label,
                    const Vocabulary& vocab) {
  validate_probs(probs, vocab);
  const std::vector<int> ids = vocab.encode(label);
  const int64_t T = probs.dim(0);
  const int64_t need = ctc_required_frames(ids);
  if (T < need)
    throw UnalignableError("label of length " + std::to_string(ids.size()) + " needs at least " +
                           std::to_string(need) + " frames but got " + std::to_string(T));

  CtcWork w;
  w.T = T;
  w.ext = extend_label(ids, vocab.blank_index());
  w.S = static_cast<int64_t>(w.ext.size());
  const int64_t S = w.S;
  const int64_t C = probs.dim(1);
  w.log_a.assign(static_cast<size_t>(T * S), kNegInf);

  auto log_y = [&](int64_t t, int64_t s) { return safe_log(probs[t * C + w.ext[static_cast<size_t>(s)]]); };
  auto la = [&](int64_t t, int64_t s) -> double& { return w.log_a[static_cast<size_t>(t * S + s)]; };

  la(0, 0) = 0.0;
  if (S > 1) la(0, 1) = 0.0;
  for (int64_t t = 1; t < T; ++t) {
    for (int64_t s = 0; s < S; ++s) {
      double acc = la(t - 1, s) == kNegInf ? kNegInf : la(t - 1, s) + log_y(t - 1, s);
      if (s >= 1) {
        const double p = la(t - 1, s - 1);
        if (p != kNegInf) acc = log_add(acc, p + log_y(t - 1, s - 1));
      }
      if (s >= 2 && w.ext[static_cast<size_t>(s)] != vocab.blank_index() &&
          w.ext[static_cast<size_t>(s)] != w.ext[static_cast<size_t>(s - 2)]) {
        const double p = la(t - 1, s - 2);
        if (p != kNegInf) acc = log_add(acc, p + log_y(t - 1, s - 2));
      }
      la(t, s) = acc;
    }
  }

  double lp = kNegInf;
  if (la(T - 1, S - 1) != kNegInf) lp = log_add(lp, la(T - 1, S - 1) + log_y(T - 1, S - 1));
  if (S > 1 && la(T - 1, S - 2) != kNegInf)
    lp = log_add(lp, la(T - 1, S - 2) + log_y(T - 1, S - 2));
  w.log_p = lp;
  if (w.log_p == kNegInf)
    throw UnalignableError("path probability is zero for this label and frame sequence");
  return w;
}

}  // namespace

bool Vocabulary::contains(uint32_t cp) const {
  return std::find(symbols.begin(), symbols.end(), cp) != symbols.end();
}

int Vocabulary::index_of(uint32_t cp) const {
  auto it = std::find(symbols.begin(), symbols.end(), cp);
  if (it == symbols.end())
    throw VocabError("codepoint U+" + std::to_string(cp) + " ('" + utf8_encode({cp}) +
                     "') is not in the vocabulary");
  return static_cast<int>(it - symbols.begin());
}

std::vector<int> Vocabulary::encode(const std::vector<uint32_t>& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (uint32_t cp : text) out.push_back(index_of(cp));
  return out;
}

Vocabulary Vocabulary::from_utf8(const std::string& s) {
  Vocabulary v;
  v.symbols = utf8_decode(s);
  std::set<uint32_t> seen;
  for (uint32_t cp : v.symbols)
    if (!seen.insert(cp).second)
      throw VocabError("duplicate symbol '" + utf8_encode({cp}) + "' in vocabulary");
  return v;
}

std::string Vocabulary::to_utf8() const { return utf8_encode(symbols); }

int64_t ctc_required_frames(const std::vector<int>& label_ids) {
  int64_t need = static_cast<int64_t>(label_ids.size());
  for (size_t i = 1; i < label_ids.size(); ++i)
    if (label_ids[i] == label_ids[i - 1]) ++need;
  return need;
}

double ctc_loss(const Tensor& probs, const std::vector<uint32_t>& label,
                const Vocabulary& vocab) {
  return -ctc_forward(probs, label, vocab).log_p;
}

Tensor ctc_grad(const Tensor& probs, const std::vector<uint32_t>& label,
                const Vocabulary& vocab) {
  const CtcWork w = ctc_forward(probs, label, vocab);
  const int64_t T = w.T, S = w.S;
  const int64_t C = probs.dim(1);
  const int blank = vocab.blank_index();

  // Suffix sums excluding the emission at t: log_b[t][s] sums all paths from
  // state s at time t to the end, counting emissions strictly after t.
  std::vector<double> log_b(static_cast<size_t>(T * S), kNegInf);
  auto lb = [&](int64_t t, int64_t s) -> double& { return log_b[static_cast<size_t>(t * S + s)]; };
  auto log_y = [&](int64_t t, int64_t s) { return safe_log(probs[t * C + w.ext[static_cast<size_t>(s)]]); };

  lb(T - 1, S - 1) = 0.0;
  if (S > 1) lb(T - 1, S - 2) = 0.0;
  for (int64_t t = T - 2; t >= 0; --t) {
    for (int64_t s = S - 1; s >= 0; --s) {
      double acc = lb(t + 1, s) == kNegInf ? kNegInf : lb(t + 1, s) + log_y(t + 1, s);
      if (s + 1 < S) {
        const double p = lb(t + 1, s + 1);
        if (p != kNegInf) acc = log_add(acc, p + log_y(t + 1, s + 1));
      }
      if (s + 2 < S && w.ext[static_cast<size_t>(s + 2)] != blank &&
          w.ext[static_cast<size_t>(s + 2)] != w.ext[static_cast<size_t>(s)]) {
        const double p = lb(t + 1, s + 2);
        if (p != kNegInf) acc = log_add(acc, p + log_y(t + 1, s + 2));
      }
      lb(t, s) = acc;
    }
  }

  // dP/dy[t][k] = sum over states s with l'_s == k of A[t][s] * B[t][s];
  // d(-log P)/dy = -exp(log A + log B - log P) accumulated.
  Tensor grad(probs.shape());
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t s = 0; s < S; ++s) {
      const double a = w.log_a[static_cast<size_t>(t * S + s)];
      const double b = log_b[static_cast<size_t>(t * S + s)];
      if (a == kNegInf || b == kNegInf) continue;
      grad[t * C + w.ext[static_cast<size_t>(s)]] -= std::exp(a + b - w.log_p);
    }
  }
  return grad;
}

double ctc_brute_force(const Tensor& probs, const std::vector<uint32_t>& label,
                       const Vocabulary& vocab, int max_T) {
  validate_probs(probs, vocab);
  const int64_t T = probs.dim(0);
  const int64_t C = probs.dim(1);
  if (T > max_T)
    throw ConfigError("ctc_brute_force: T=" + std::to_string(T) + " exceeds max_T=" +
                      std::to_string(max_T));
  if (C > 5)
    throw ConfigError("ctc_brute_force: enumeration bound requires n+1 <= 5, got " +
                      std::to_string(C));
  const std::vector<int> target = vocab.encode(label);
  const int blank = vocab.blank_index();

  std::vector<int> path(static_cast<size_t>(T), 0);
  std::vector<int> collapsed;
  collapsed.reserve(static_cast<size_t>(T));
  double total = 0.0;
  while (true) {
    double p = 1.0;
    for (int64_t t = 0; t < T; ++t) p *= probs[t * C + path[static_cast<size_t>(t)]];
    if (p > 0.0) {
      // collapse: drop adjacent repeats, then blanks
      collapsed.clear();
      int prev = -1;
      for (int64_t t = 0; t < T; ++t) {
        const int c = path[static_cast<size_t>(t)];
        if (c != prev && c != blank) collapsed.push_back(c);
        prev = c;
      }
      if (collapsed == target) total += p;
    }
    // odometer increment
    int64_t pos = T - 1;
    while (pos >= 0 && ++path[static_cast<size_t>(pos)] == C) {
      path[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return total;
}

std::vector<uint32_t> best_path_decode(const Tensor& probs, const Vocabulary& vocab) {
  if (probs.rank() != 2 || probs.dim(1) != vocab.num_classes())
    throw ShapeError("decode: probs must be (T," + std::to_string(vocab.num_classes()) +
                     "), got " + shape_str(probs.shape()));
  const int64_t T = probs.dim(0), C = probs.dim(1);
  const int blank = vocab.blank_index();
  std::vector<uint32_t> out;
  int prev = -1;
  for (int64_t t = 0; t < T; ++t) {
    int best = 0;
    double bv = probs[t * C];
    for (int64_t c = 1; c < C; ++c) {
      if (probs[t * C + c] > bv) {  // strict: ties break to the lowest index
        bv = probs[t * C + c];
        best = static_cast<int>(c);
      }
    }
    if (best != prev && best != blank)
      out.push_back(vocab.symbols[static_cast<size_t>(best)]);
    prev = best;
  }
  return out;
}

Var ctc_loss_node(Var probs, const std::vector<uint32_t>& label, const Vocabulary& vocab) {
  Tape& t = *probs.tape;
  const double loss = ctc_loss(probs.value(), label, vocab);
  auto grad = std::make_shared<Tensor>(ctc_grad(probs.value(), label, vocab));
  const int ip = probs.id;
  return t.make_node(Tensor::scalar(loss), {ip}, [ip, grad](Tape& t, int self) {
    if (!t.needs_grad(ip)) return;
    const double g = (*t.grad(self))[0];
    Tensor& dp = t.grad_acc(ip);
    for (int64_t i = 0; i < dp.numel(); ++i) dp[i] += g * (*grad)[i];
  });
}

}  // namespace htr
