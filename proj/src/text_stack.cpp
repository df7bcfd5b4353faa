// SPDX-License-Identifier: Apache-2.0
#include "langtrack/text_stack.hpp"

#include <cstring>
#include <stdexcept>

namespace langtrack {

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, int rows, int cols, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * stddev;
  }
  return m;
}

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, ParamStore& store,
                         std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  if (cfg_.d_text % cfg_.n_heads != 0) {
    throw std::runtime_error("text encoder: heads must divide d_text");
  }
  const double emb_std = 0.02;
  const double pos_std = 0.01;
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_text));
  const double ff2_std = 1.0 / std::sqrt(static_cast<double>(cfg_.d_ff));

  auto create = [&](const std::string& name, int rows, int cols, double stddev,
                    double diag_bias = 0.0) {
    Param& p = store_->add(prefix_ + name, rows, cols, /*frozen=*/true);
    if (stddev > 0.0) {
      Rng rng(Rng::derive(cfg_.seed, name));
      p.value = gaussian_matrix(rng, rows, cols, stddev);
    }
    if (diag_bias != 0.0) {
      for (int i = 0; i < std::min(rows, cols); ++i) p.value(i, i) += diag_bias;
    }
    names_.push_back(name);
  };
  auto create_ln = [&](const std::string& name) {
    Param& g = store_->add(prefix_ + name + ".gain", 1, cfg_.d_text, true);
    g.value.setOnes();
    names_.push_back(name + ".gain");
    store_->add(prefix_ + name + ".bias", 1, cfg_.d_text, true);
    names_.push_back(name + ".bias");
  };

  create("token_embedding", cfg_.vocab_size, cfg_.d_text, emb_std);
  create("positional_embedding", cfg_.max_len, cfg_.d_text, pos_std);
  for (int i = 0; i < cfg_.n_layers; ++i) {
    const std::string lp = "layer" + std::to_string(i) + ".";
    create_ln(lp + "ln1");
    create(lp + "attn.q", cfg_.d_text, cfg_.d_text, attn_std);
    create(lp + "attn.k", cfg_.d_text, cfg_.d_text, attn_std);
    create(lp + "attn.v", cfg_.d_text, cfg_.d_text, attn_std);
    create(lp + "attn.o", cfg_.d_text, cfg_.d_text, attn_std);
    create_ln(lp + "ln2");
    create(lp + "ff.w1", cfg_.d_text, cfg_.d_ff, attn_std);
    create(lp + "ff.w2", cfg_.d_ff, cfg_.d_text, ff2_std);
  }
  if (cfg_.n_layers >= 1) create_ln("final_ln");
  if (cfg_.d_visual != cfg_.d_text) {
    create("visual_proj", cfg_.d_visual, cfg_.d_text,
           1.0 / std::sqrt(static_cast<double>(cfg_.d_visual)));
  }
}

Param& TextEncoder::param(const std::string& canonical) const {
  return store_->at(prefix_ + canonical);
}

Eigen::MatrixXd TextEncoder::causal_mask(int len) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(len, len);
  for (int i = 0; i < len; ++i) {
    for (int j = 0; j <= i; ++j) m(i, j) = 1.0;
  }
  return m;
}

Eigen::MatrixXd TextEncoder::joint_mask(int m, const std::vector<int>& lengths) {
  int s = m;
  for (int l : lengths) s += l;
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(s, s);
  mask.topLeftCorner(m, m).setOnes();
  int off = m;
  for (int l : lengths) {
    for (int i = 0; i < l; ++i) {
      for (int j = 0; j <= i; ++j) mask(off + i, off + j) = 1.0;
    }
    off += l;
  }
  return mask;
}

ad::Var TextEncoder::sentence_input(ad::Tape& t, const TokenSequence& tokens) const {
  const int len = tokens.length();
  if (len > cfg_.max_len) {
    throw std::runtime_error("text encoder: sentence longer than max_len");
  }
  if (tokens.eos_pos < 0) {
    throw std::runtime_error("text encoder: token sequence has no EOS");
  }
  for (int id : tokens.ids) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw std::runtime_error("text encoder: token id out of range");
    }
  }
  ad::Var emb = ad::gather_rows(t.leaf(param("token_embedding")), tokens.ids);
  ad::Var pos = ad::slice_rows(t.leaf(param("positional_embedding")), 0, len);
  return ad::add(emb, pos);
}

ad::Var TextEncoder::visual_input(ad::Tape& t, ad::Var prompts) const {
  if (prompts.cols() != cfg_.d_visual) {
    throw std::runtime_error("text encoder: visual prompt width mismatch");
  }
  if (cfg_.d_visual == cfg_.d_text) return prompts;
  return ad::matmul(prompts, t.leaf(param("visual_proj")));
}

ad::Var TextEncoder::run_stack(ad::Tape& t, ad::Var x,
                               const Eigen::MatrixXd* mask) const {
  for (int i = 0; i < cfg_.n_layers; ++i) {
    const std::string lp = "layer" + std::to_string(i) + ".";
    ad::Var n1 = ad::layer_norm_rows(x, t.leaf(param(lp + "ln1.gain")),
                                     t.leaf(param(lp + "ln1.bias")));
    ad::Var att = ad::attention(n1, n1, n1, t.leaf(param(lp + "attn.q")),
                                t.leaf(param(lp + "attn.k")),
                                t.leaf(param(lp + "attn.v")),
                                t.leaf(param(lp + "attn.o")), cfg_.n_heads, mask);
    x = ad::add(x, att);
    ad::Var n2 = ad::layer_norm_rows(x, t.leaf(param(lp + "ln2.gain")),
                                     t.leaf(param(lp + "ln2.bias")));
    ad::Var ff = ad::matmul(ad::relu(ad::matmul(n2, t.leaf(param(lp + "ff.w1")))),
                            t.leaf(param(lp + "ff.w2")));
    x = ad::add(x, ff);
  }
  if (cfg_.n_layers >= 1) {
    x = ad::layer_norm_rows(x, t.leaf(param("final_ln.gain")),
                            t.leaf(param("final_ln.bias")));
  }
  return x;
}

ad::Var TextEncoder::encode_sentence(ad::Tape& t, const TokenSequence& tokens) const {
  ad::Var x = sentence_input(t, tokens);
  const Eigen::MatrixXd mask = causal_mask(tokens.length());
  x = run_stack(t, x, &mask);
  return ad::slice_rows(x, tokens.eos_pos, 1);
}

ad::Var TextEncoder::encode_visual(ad::Tape& t, ad::Var prompts) const {
  ad::Var x = visual_input(t, prompts);
  return run_stack(t, x, nullptr);
}

std::pair<ad::Var, ad::Var> TextEncoder::encode_joint(
    ad::Tape& t, ad::Var prompts,
    const std::vector<TokenSequence>& sentences) const {
  const int m = static_cast<int>(prompts.rows());
  std::vector<ad::Var> parts;
  parts.push_back(visual_input(t, prompts));
  std::vector<int> lengths;
  for (const TokenSequence& s : sentences) {
    parts.push_back(sentence_input(t, s));
    lengths.push_back(s.length());
  }
  ad::Var x = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
  const Eigen::MatrixXd mask = joint_mask(m, lengths);
  x = run_stack(t, x, &mask);

  ad::Var visual = ad::slice_rows(x, 0, m);
  if (sentences.empty()) {
    return {visual, t.constant(Eigen::MatrixXd(0, cfg_.d_text))};
  }
  std::vector<ad::Var> eos_rows;
  int off = m;
  for (const TokenSequence& s : sentences) {
    eos_rows.push_back(ad::slice_rows(x, off + s.eos_pos, 1));
    off += s.length();
  }
  ad::Var textual =
      eos_rows.size() == 1 ? eos_rows[0] : ad::concat_rows(eos_rows);
  return {visual, textual};
}

Eigen::MatrixXd TextEncoder::encode_sentences(
    const std::vector<TokenSequence>& all) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(all.size()), cfg_.d_text);
  for (std::size_t k = 0; k < all.size(); ++k) {
    ad::Tape t;
    out.row(static_cast<Eigen::Index>(k)) = t.val(encode_sentence(t, all[k]));
  }
  return out;
}

std::uint64_t TextEncoder::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const std::string& name : names_) {
    const Param& p = param(name);
    fnv_bytes(h, name.data(), name.size());
    const Eigen::Index rows = p.value.rows(), cols = p.value.cols();
    fnv_bytes(h, &rows, sizeof rows);
    fnv_bytes(h, &cols, sizeof cols);
    fnv_bytes(h, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
  }
  return h;
}

void TextEncoder::import_weights(const TensorFile& file) {
  for (const std::string& name : file.names()) {
    bool known = false;
    for (const std::string& n : names_) {
      if (n == name) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("text encoder import: unexpected tensor '" +
                               name + "'");
    }
  }
  for (const std::string& name : names_) {
    if (!file.has(name)) {
      throw std::runtime_error("text encoder import: missing tensor '" + name +
                               "'");
    }
    const Eigen::MatrixXd& v = file.get(name);
    Param& p = param(name);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw std::runtime_error("text encoder import: shape mismatch for '" +
                               name + "'");
    }
    p.value = v;
  }
}

TensorFile TextEncoder::export_weights() const {
  TensorFile out;
  for (const std::string& name : names_) {
    out.put(name, param(name).value, /*frozen=*/true);
  }
  return out;
}

Adapter::Adapter(const AdapterConfig& cfg, ParamStore& store, Rng& rng,
                 std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  Param& w1 = store_->add(prefix_ + "w1", cfg_.d, cfg_.hidden, false);
  w1.value = gaussian_matrix(rng, cfg_.d, cfg_.hidden, 0.02);
  store_->add(prefix_ + "w2", cfg_.hidden, cfg_.d, false);
}

ad::Var Adapter::apply(ad::Tape& t, ad::Var x) const {
  if (x.cols() != cfg_.d) {
    throw std::runtime_error("adapter: input width mismatch");
  }
  ad::Var hidden = ad::relu(ad::matmul(x, t.leaf(store_->at(prefix_ + "w1"))));
  return ad::add(ad::matmul(hidden, t.leaf(store_->at(prefix_ + "w2"))), x);
}

}  // namespace langtrack
