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

#include "htr/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "htr/canonical_arch.hpp"

namespace htr {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::cnn_dense: return "cnn_dense";
    case Variant::gcnn: return "gcnn";
  }
  return "?";
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::a1: return "a1";
    case Ablation::a2: return "a2";
    case Ablation::a3: return "a3";
    case Ablation::a4: return "a4";
    case Ablation::a5: return "a5";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "cnn_dense") return Variant::cnn_dense;
  if (s == "gcnn") return Variant::gcnn;
  throw ConfigError("unknown variant '" + s + "' (baseline|cnn_dense|gcnn)");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "a1") return Ablation::a1;
  if (s == "a2") return Ablation::a2;
  if (s == "a3") return Ablation::a3;
  if (s == "a4") return Ablation::a4;
  if (s == "a5") return Ablation::a5;
  throw ConfigError("unknown ablation '" + s + "' (none|a1..a5)");
}

ModelConfig apply_ablation(ModelConfig cfg, Ablation which) {
  if (which != Ablation::none && cfg.variant != Variant::gcnn)
    throw ConfigError("ablations apply to the gcnn variant only, got variant " +
                      to_string(cfg.variant));
  cfg.ablation = which;
  return cfg;
}

const char* canonical_arch_text() { return kCanonicalArchText; }

namespace {

struct ArchLayer {
  enum class K { conv, sepconv, pool, dropout, gate, tap, fuse, flatten, dense, blstm };
  K k;
  std::string name;
  int out = 0;
  int kh = 3, kw = 3;
  std::string share;
  bool double_mid = false;
  bool mid_separable = true;
};

struct ArchModel {
  std::string name;
  std::vector<ArchLayer> layers;
};

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

std::map<std::string, ArchModel> parse_arch(const std::string& text) {
  std::map<std::string, ArchModel> models;
  ArchModel* cur = nullptr;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool version_seen = false;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    auto fail = [&](const std::string& msg) {
      throw ConfigError("arch config line " + std::to_string(lineno) + ": " + msg);
    };
    auto parse_kernel = [&](const std::string& s, int& kh, int& kw) {
      const size_t x = s.find('x');
      if (x == std::string::npos) fail("bad kernel '" + s + "', expected KHxKW");
      kh = std::stoi(s.substr(0, x));
      kw = std::stoi(s.substr(x + 1));
    };
    // `key value` pairs after the positional part
    auto named = [&](size_t from) {
      std::map<std::string, std::string> kv;
      for (size_t i = from; i + 1 < toks.size(); i += 2) kv[toks[i]] = toks[i + 1];
      if ((toks.size() - from) % 2 != 0) fail("dangling token '" + toks.back() + "'");
      return kv;
    };

    if (toks[0] == "version") {
      version_seen = true;
      if (toks.size() != 2 || toks[1] != "1") fail("unsupported arch config version");
    } else if (toks[0] == "model") {
      if (toks.size() != 2) fail("model needs a name");
      cur = &models[toks[1]];
      cur->name = toks[1];
    } else if (toks[0] == "end") {
      cur = nullptr;
    } else {
      if (!cur) fail("layer line outside a model block");
      ArchLayer l;
      if (toks[0] == "conv" || toks[0] == "sepconv") {
        if (toks.size() < 5) fail("conv needs: conv NAME KHxKW out N [share S]");
        l.k = toks[0] == "conv" ? ArchLayer::K::conv : ArchLayer::K::sepconv;
        l.name = toks[1];
        parse_kernel(toks[2], l.kh, l.kw);
        auto kv = named(3);
        if (!kv.count("out")) fail("conv needs 'out N'");
        l.out = std::stoi(kv["out"]);
        if (kv.count("share")) l.share = kv["share"];
      } else if (toks[0] == "gate") {
        if (toks.size() < 2) fail("gate needs a name");
        l.k = ArchLayer::K::gate;
        l.name = toks[1];
        auto kv = named(2);
        if (kv.count("share")) l.share = kv["share"];
      } else if (toks[0] == "pool") {
        l.k = ArchLayer::K::pool;
      } else if (toks[0] == "dropout") {
        l.k = ArchLayer::K::dropout;
      } else if (toks[0] == "tap") {
        l.k = ArchLayer::K::tap;
      } else if (toks[0] == "fuse") {
        l.k = ArchLayer::K::fuse;
        auto kv = named(1);
        if (!kv.count("out")) fail("fuse needs 'out N'");
        l.out = std::stoi(kv["out"]);
        l.name = "fuse";
      } else if (toks[0] == "flatten") {
        l.k = ArchLayer::K::flatten;
      } else if (toks[0] == "dense") {
        if (toks.size() != 3) fail("dense needs: dense NAME UNITS");
        l.k = ArchLayer::K::dense;
        l.name = toks[1];
        l.out = std::stoi(toks[2]);
      } else if (toks[0] == "blstm") {
        if (toks.size() != 3) fail("blstm needs: blstm NAME UNITS");
        l.k = ArchLayer::K::blstm;
        l.name = toks[1];
        l.out = std::stoi(toks[2]);
      } else {
        fail("unknown layer kind '" + toks[0] + "'");
      }
      cur->layers.push_back(std::move(l));
    }
  }
  if (!version_seen) throw ConfigError("arch config: missing 'version' line");
  return models;
}

bool is_conv_like(const ArchLayer& l) {
  return l.k == ArchLayer::K::conv || l.k == ArchLayer::K::sepconv;
}

// Ablation transforms over the parsed layer list.
void transform_arch(std::vector<ArchLayer>& layers, Ablation ab) {
  switch (ab) {
    case Ablation::none:
      break;
    case Ablation::a1:
      // separable convolutions replaced by standard ones, share groups kept
      for (auto& l : layers) {
        if (l.k == ArchLayer::K::sepconv) l.k = ArchLayer::K::conv;
        if (l.k == ArchLayer::K::gate) l.mid_separable = false;
      }
      break;
    case Ablation::a2: {
      // pooling moved back after every second convolution, as in the baseline
      std::vector<ArchLayer> out;
      int convs = 0;
      for (auto& l : layers) {
        if (l.k == ArchLayer::K::pool) continue;
        out.push_back(l);
        if (is_conv_like(l)) {
          ++convs;
          if (convs % 2 == 0 && convs <= 8) out.push_back(ArchLayer{ArchLayer::K::pool});
        }
      }
      layers = std::move(out);
      break;
    }
    case Ablation::a3:
      // every shared layer becomes a fresh one per use site
      for (auto& l : layers) l.share.clear();
      break;
    case Ablation::a4:
      // two mid convolutions per GateBlock sharing weights with each other;
      // the cross-block share group is dropped
      for (auto& l : layers) {
        if (l.k == ArchLayer::K::gate) {
          l.double_mid = true;
          l.share.clear();
        }
      }
      break;
    case Ablation::a5: {
      // GateBlocks removed entirely (they preserve channels, so the wiring
      // around them is unchanged)
      std::vector<ArchLayer> out;
      for (auto& l : layers)
        if (l.k != ArchLayer::K::gate) out.push_back(l);
      layers = std::move(out);
      break;
    }
  }
}

int round_even(double x) {
  return static_cast<int>(std::max<int64_t>(2, 2 * std::llround(x / 2.0)));
}

}  // namespace

struct Model::Stage {
  ArchLayer::K kind;
  std::string name;
  std::unique_ptr<Conv2d> conv;  // conv / sepconv / fuse
  std::unique_ptr<GateBlock> gate;
  std::unique_ptr<Dense> dense;
  std::unique_ptr<Blstm> blstm;
  SummaryRow row;
};

Var Model::forward(Tape& t, const Tensor& frames, Mode mode) {
  if (frames.rank() != 4 || frames.dim(1) != 1 || frames.dim(2) != 32 || frames.dim(3) != 32)
    throw ShapeError("model forward expects frames (T,1,32,32), got " +
                     shape_str(frames.shape()));
  Var cur = t.constant(frames);
  std::vector<Var> taps;
  for (auto& stp : stages_) {
    Stage& st = *stp;
    switch (st.kind) {
      case ArchLayer::K::conv:
      case ArchLayer::K::sepconv:
        cur = st.conv->forward(t, cur);
        break;
      case ArchLayer::K::pool:
        cur = maxpool2d_op(cur);
        break;
      case ArchLayer::K::dropout:
        cur = dropout_op(cur, cfg_.dropout, mode, *dropout_rng_);
        break;
      case ArchLayer::K::gate:
        cur = st.gate->forward(t, cur, mode);
        break;
      case ArchLayer::K::tap:
        taps.push_back(cur);
        break;
      case ArchLayer::K::fuse: {
        const int64_t h = cur.value().dim(2), w = cur.value().dim(3);
        std::vector<Var> pooled;
        for (Var tap : taps) {
          const int64_t th = tap.value().dim(2), tw = tap.value().dim(3);
          if (th == h && tw == w) {
            pooled.push_back(tap);
          } else {
            if (th % h != 0 || tw % w != 0)
              throw StateError("fuse: tap resolution " + std::to_string(th) + "x" +
                               std::to_string(tw) + " not divisible by " + std::to_string(h) +
                               "x" + std::to_string(w));
            const int wh = static_cast<int>(th / h), ww = static_cast<int>(tw / w);
            pooled.push_back(maxpool2d_op(tap, wh, ww, wh, ww));
          }
        }
        cur = st.conv->forward(t, ops::concat(pooled, 1));
        break;
      }
      case ArchLayer::K::flatten: {
        const auto& s = cur.value().shape();
        cur = ops::reshape(cur, {s[0], s[1] * s[2] * s[3]});
        break;
      }
      case ArchLayer::K::dense:
        cur = st.dense->forward(t, cur);
        break;
      case ArchLayer::K::blstm: {
        const auto& s = cur.value().shape();
        Var seq = ops::reshape(cur, {s[0], 1, s[1]});
        seq = st.blstm->forward(t, seq);
        cur = ops::reshape(seq, {s[0], seq.value().dim(2)});
        break;
      }
    }
  }
  cur = output_->forward(t, cur);
  return ops::softmax(cur, 1);
}

std::vector<ParamPtr> Model::parameters() const {
  std::map<std::string, ParamPtr> uniq;
  auto absorb = [&](const std::vector<std::pair<std::string, ParamPtr>>& ps) {
    for (const auto& [k, p] : ps) uniq.emplace(k, p);
  };
  for (const auto& st : stages_) {
    if (st->conv) absorb(st->conv->params());
    if (st->gate) absorb(st->gate->params());
    if (st->dense) absorb(st->dense->params());
    if (st->blstm) absorb(st->blstm->params());
  }
  absorb(output_->params());
  std::vector<ParamPtr> out;
  out.reserve(uniq.size());
  for (auto& [k, p] : uniq) out.push_back(p);
  return out;
}

int64_t Model::param_count() const {
  int64_t total = 0;
  for (const auto& p : parameters()) total += p->numel();
  return total;
}

ModelSummary Model::summarize() const {
  ModelSummary s;
  for (const auto& st : stages_)
    if (!st->row.kind.empty()) s.rows.push_back(st->row);
  SummaryRow out_row;
  out_row.name = "out";
  out_row.kind = "dense";
  out_row.out_shape = "(T," + std::to_string(num_classes()) + ")";
  out_row.params = output_->param_count();
  s.rows.push_back(out_row);
  s.total_params = param_count();
  return s;
}

std::string summary_csv(const ModelSummary& s) {
  std::string csv = "layer,name,shape,params,share_id\n";
  for (size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    csv += std::to_string(i + 1) + "," + r.name + ",\"" + r.out_shape + "\"," +
           std::to_string(r.params) + "," + r.share_id + "\n";
  }
  csv += "total,,," + std::to_string(s.total_params) + ",\n";
  return csv;
}

std::map<std::string, Tensor> Model::named_tensors() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : parameters()) out.emplace(p->share_id, p->value);
  for (const auto& st : stages_) {
    if (st->gate)
      for (auto& [name, buf] : st->gate->buffers()) out.emplace(name, *buf);
  }
  return out;
}

void Model::load_tensors(const std::map<std::string, Tensor>& tensors) {
  size_t used = 0;
  auto take = [&](const std::string& name, Tensor& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw IoError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != dst.shape())
      throw IoError("checkpoint tensor '" + name + "' has shape " +
                    shape_str(it->second.shape()) + ", model expects " +
                    shape_str(dst.shape()));
    dst = it->second;
    ++used;
  };
  for (const auto& p : parameters()) take(p->share_id, p->value);
  for (const auto& st : stages_) {
    if (st->gate)
      for (auto& [name, buf] : st->gate->buffers()) take(name, *buf);
  }
  if (used != tensors.size())
    throw IoError("checkpoint holds " + std::to_string(tensors.size()) +
                  " tensors but the model uses " + std::to_string(used));
}

Model build_model(const ModelConfig& cfg, uint64_t init_seed, const std::string& arch_text) {
  if (cfg.vocab_size < 1) throw ConfigError("vocab_size must be at least 1");
  if (cfg.blstm_units < 1) throw ConfigError("blstm_units must be at least 1");
  if (cfg.gcnn_max_channels < 2) throw ConfigError("gcnn_max_channels must be at least 2");
  if (cfg.gate_blocks < 0) throw ConfigError("gate_blocks must be non-negative");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (cfg.ablation != Ablation::none && cfg.variant != Variant::gcnn)
    throw ConfigError("ablations apply to the gcnn variant only, got variant " +
                      to_string(cfg.variant));

  auto archs = parse_arch(arch_text.empty() ? canonical_arch_text() : arch_text);
  const std::string arch_name = cfg.variant == Variant::gcnn ? "gcnn" : "baseline";
  if (!archs.count(arch_name))
    throw ConfigError("arch config does not define model '" + arch_name + "'");
  std::vector<ArchLayer> layers = archs.at(arch_name).layers;

  if (cfg.variant == Variant::cnn_dense) {
    std::erase_if(layers, [](const ArchLayer& l) { return l.k == ArchLayer::K::blstm; });
  }
  if (cfg.variant == Variant::gcnn) {
    int declared = 0;
    for (const auto& l : layers) declared += l.k == ArchLayer::K::gate ? 1 : 0;
    if (cfg.gate_blocks > declared)
      throw ConfigError("config asks for " + std::to_string(cfg.gate_blocks) +
                        " gate blocks but the architecture declares " +
                        std::to_string(declared));
    int seen = 0;
    std::erase_if(layers, [&](const ArchLayer& l) {
      return l.k == ArchLayer::K::gate && ++seen > cfg.gate_blocks;
    });
    transform_arch(layers, cfg.ablation);
  }

  const double factor = cfg.variant == Variant::gcnn
                            ? static_cast<double>(cfg.gcnn_max_channels) / 512.0
                            : static_cast<double>(cfg.blstm_units) / 256.0;

  Model model;
  model.cfg_ = cfg;
  model.dropout_seed_ = hash_combine(init_seed, 0xd509);
  model.dropout_rng_ = std::make_unique<Rng>(model.dropout_seed_);
  ParameterStore store(init_seed);

  // analytic shape walk, also recorded for the summary
  int64_t c = 1, h = 32, w = 32;
  int64_t feat = 0;
  bool image = true;
  std::vector<int64_t> tap_channels;
  auto img_shape = [&]() {
    return "(T," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  };

  for (const ArchLayer& l : layers) {
    auto st = std::make_shared<Model::Stage>();
    st->kind = l.k;
    st->name = l.name;
    switch (l.k) {
      case ArchLayer::K::conv:
      case ArchLayer::K::sepconv: {
        if (!image) throw ConfigError("arch: conv after flatten");
        ConvSpec spec;
        spec.in_channels = static_cast<int>(c);
        spec.out_channels = round_even(l.out * factor);
        spec.kh = l.kh;
        spec.kw = l.kw;
        spec.separable = l.k == ArchLayer::K::sepconv;
        spec.share_id = l.share;
        st->conv = std::make_unique<Conv2d>(store, l.name, spec);
        c = spec.out_channels;
        st->row = {l.name, spec.separable ? "sepconv" : "conv", img_shape(),
                   spec.param_count(), l.share};
        break;
      }
      case ArchLayer::K::pool:
        if (!image) throw ConfigError("arch: pool after flatten");
        h /= 2;
        w /= 2;
        st->row = {"", "pool", img_shape(), 0, ""};
        break;
      case ArchLayer::K::dropout:
        st->row = {"", "dropout", image ? img_shape() : "(T," + std::to_string(feat) + ")", 0,
                   ""};
        break;
      case ArchLayer::K::gate: {
        if (!image) throw ConfigError("arch: gate after flatten");
        st->gate = std::make_unique<GateBlock>(store, l.name, static_cast<int>(c), l.share,
                                               l.mid_separable, l.double_mid);
        int64_t params = 0;
        for (const auto& [k, p] : st->gate->params()) params += p->numel();
        st->row = {l.name, "gate", img_shape(), params, l.share};
        break;
      }
      case ArchLayer::K::tap:
        tap_channels.push_back(c);
        break;
      case ArchLayer::K::fuse: {
        if (tap_channels.empty()) throw ConfigError("arch: fuse without taps");
        int64_t cin = 0;
        for (int64_t tc : tap_channels) cin += tc;
        ConvSpec spec;
        spec.in_channels = static_cast<int>(cin);
        spec.out_channels = round_even(l.out * factor);
        spec.kh = spec.kw = 1;
        st->conv = std::make_unique<Conv2d>(store, "fuse", spec);
        c = spec.out_channels;
        st->row = {"fuse", "pointwise", img_shape(), spec.param_count(), ""};
        break;
      }
      case ArchLayer::K::flatten:
        feat = c * h * w;
        image = false;
        st->row = {"", "flatten", "(T," + std::to_string(feat) + ")", 0, ""};
        break;
      case ArchLayer::K::dense: {
        if (image) throw ConfigError("arch: dense before flatten");
        const int units = round_even(l.out * factor);
        st->dense = std::make_unique<Dense>(store, l.name, static_cast<int>(feat), units);
        feat = units;
        st->row = {l.name, "dense", "(T," + std::to_string(feat) + ")",
                   st->dense->param_count(), ""};
        break;
      }
      case ArchLayer::K::blstm: {
        if (image) throw ConfigError("arch: blstm before flatten");
        st->blstm = std::make_unique<Blstm>(store, l.name, static_cast<int>(feat),
                                            cfg.blstm_units);
        feat = 2LL * cfg.blstm_units;
        st->row = {l.name, "blstm", "(T," + std::to_string(feat) + ")",
                   st->blstm->param_count(), ""};
        break;
      }
    }
    model.stages_.push_back(std::move(st));
  }

  if (image) {
    // architectures without an explicit flatten project from the last map
    feat = c * h * w;
    auto st = std::make_shared<Model::Stage>();
    st->kind = ArchLayer::K::flatten;
    st->row = {"", "flatten", "(T," + std::to_string(feat) + ")", 0, ""};
    model.stages_.push_back(std::move(st));
  }
  // small output init keeps the initial softmax near uniform
  model.output_ = std::make_unique<Dense>(store, "out", static_cast<int>(feat),
                                          cfg.vocab_size + 1, true, 0.1);
  return model;
}

}  // namespace htr
