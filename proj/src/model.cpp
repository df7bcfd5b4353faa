// SPDX-License-Identifier: Apache-2.0
#include "langtrack/model.hpp"

#include <stdexcept>

namespace langtrack {

ModelConfig model_config_from(const Config& c) {
  ModelConfig m;
  m.dim = static_cast<int>(c.integer("model.dim", m.dim));
  m.heads = static_cast<int>(c.integer("model.heads", m.heads));
  m.ff_hidden = static_cast<int>(c.integer("model.ff", m.ff_hidden));
  m.n_enc_layers = static_cast<int>(c.integer("model.enc_layers", m.n_enc_layers));
  m.n_dec_layers = static_cast<int>(c.integer("model.dec_layers", m.n_dec_layers));
  m.n_detect = static_cast<int>(c.integer("model.n_detect", m.n_detect));
  m.text_layers = static_cast<int>(c.integer("model.text_layers", m.text_layers));
  m.text_heads = static_cast<int>(c.integer("model.text_heads", m.text_heads));
  m.text_ff = static_cast<int>(c.integer("model.text_ff", m.text_ff));
  m.max_len = static_cast<int>(c.integer("model.max_len", m.max_len));
  m.token_len = static_cast<int>(c.integer("model.token_len", m.token_len));
  m.adapter_hidden =
      static_cast<int>(c.integer("model.adapter_hidden", m.adapter_hidden));
  m.template_prefix = c.str("model.template", m.template_prefix);
  m.context_source = c.str("model.context", m.context_source);
  m.prompt_mode = c.str("model.prompts", m.prompt_mode);
  m.use_adapter = c.flag("model.adapter", m.use_adapter);
  m.use_fusion = c.flag("model.fusion", m.use_fusion);
  m.seed = static_cast<std::uint64_t>(c.integer("model.seed", static_cast<long>(m.seed)));
  return m;
}

Config model_config_to(const ModelConfig& cfg) {
  Config c;
  c.set("model.dim", std::to_string(cfg.dim));
  c.set("model.heads", std::to_string(cfg.heads));
  c.set("model.ff", std::to_string(cfg.ff_hidden));
  c.set("model.enc_layers", std::to_string(cfg.n_enc_layers));
  c.set("model.dec_layers", std::to_string(cfg.n_dec_layers));
  c.set("model.n_detect", std::to_string(cfg.n_detect));
  c.set("model.text_layers", std::to_string(cfg.text_layers));
  c.set("model.text_heads", std::to_string(cfg.text_heads));
  c.set("model.text_ff", std::to_string(cfg.text_ff));
  c.set("model.max_len", std::to_string(cfg.max_len));
  c.set("model.token_len", std::to_string(cfg.token_len));
  c.set("model.adapter_hidden", std::to_string(cfg.adapter_hidden));
  c.set("model.template", cfg.template_prefix);
  c.set("model.context", cfg.context_source);
  c.set("model.prompts", cfg.prompt_mode);
  c.set("model.adapter", cfg.use_adapter ? "true" : "false");
  c.set("model.fusion", cfg.use_fusion ? "true" : "false");
  c.set("model.seed", std::to_string(cfg.seed));
  return c;
}

namespace {

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.dim <= 0 || cfg.dim % cfg.heads != 0)
    throw std::invalid_argument("model dim must be divisible by heads");
  if (cfg.context_source != "c3" && cfg.context_source != "c4" &&
      cfg.context_source != "c5" && cfg.context_source != "enc")
    throw std::invalid_argument("unknown context source '" +
                                cfg.context_source + "'");
  if (cfg.prompt_mode != "textual" && cfg.prompt_mode != "visual" &&
      cfg.prompt_mode != "both")
    throw std::invalid_argument("unknown prompt mode '" + cfg.prompt_mode + "'");
  if (cfg.token_len < 3 || cfg.token_len > cfg.max_len)
    throw std::invalid_argument("token length must be in [3, max_len]");
  if (cfg.n_detect < 1) throw std::invalid_argument("need detect queries");
}

}  // namespace

TrackModel::TrackModel(const ModelConfig& cfg, const Trackbook& book)
    : cfg_(cfg), book_(book), store_(std::make_unique<ParamStore>()) {
  validate_model_config(cfg_);
  std::vector<std::string> sentences =
      render_sentences(book_, PromptTemplate{cfg_.template_prefix});
  if (sentences.empty()) throw std::invalid_argument("empty trackbook");
  vocab_ = Vocabulary::build(sentences);

  TextEncoderConfig tc;
  tc.vocab_size = vocab_.size();
  tc.d_text = cfg_.dim;
  tc.n_layers = cfg_.text_layers;
  tc.n_heads = cfg_.text_heads;
  tc.d_ff = cfg_.text_ff;
  tc.max_len = cfg_.max_len;
  tc.d_visual = cfg_.dim;
  text_ = std::make_unique<TextEncoder>(tc, *store_);

  std::vector<TokenSequence> tokens;
  for (const auto& s : sentences)
    tokens.push_back(tokenize(s, vocab_, cfg_.token_len));
  sentences_ = text_->encode_sentences(tokens);

  Rng rng(cfg_.seed);
  adapter_ = std::make_unique<Adapter>(
      AdapterConfig{cfg_.dim, cfg_.adapter_hidden}, *store_, rng);
  PerceptionConfig pc;
  pc.dim = cfg_.dim;
  pc.heads = cfg_.heads;
  pc.ff_hidden = cfg_.ff_hidden;
  pc.n_enc_layers = cfg_.n_enc_layers;
  pc.n_dec_layers = cfg_.n_dec_layers;
  pc.n_detect = cfg_.n_detect;
  perc_ = std::make_unique<Perception>(pc, *store_, rng);
  PromptBlockConfig bc{cfg_.dim, cfg_.heads, cfg_.ff_hidden};
  vcp_ = std::make_unique<VisualPrompter>(bc, *store_, rng);
  vlm_ = std::make_unique<PromptMixer>(bc, *store_, rng);
  fuse_ = std::make_unique<QueryFusion>(cfg_.dim, *store_);
  // learned query bank for the textual-only pathway; always allocated so the
  // parameter layout does not depend on the prompt mode
  Param& bank = store_->add("bank.q", 1, cfg_.dim);
  for (int j = 0; j < cfg_.dim; ++j) bank.value(0, j) = 0.02 * rng.gaussian();
}

ad::Var TrackModel::empty_queries(ad::Tape& t) const {
  return t.constant(Eigen::MatrixXd::Zero(0, cfg_.dim));
}

ad::Var TrackModel::describe(ad::Tape& t, ad::Var track_queries,
                             const ContextTokens& context) const {
  const int m = static_cast<int>(track_queries.rows());
  if (cfg_.prompt_mode == "textual") {
    ad::Var bank = t.leaf(store_->at("bank.q"));
    ad::Var queries =
        ad::matmul(t.constant(Eigen::MatrixXd::Ones(m, 1)), bank);
    ad::Var keys = t.constant(sentences_);
    if (cfg_.use_adapter) keys = adapter_->apply(t, keys);
    return vlm_->forward(t, queries, keys);
  }
  ad::Var prompts = vcp_->forward(t, track_queries, context.values);
  ad::Var encoded = text_->encode_visual(t, prompts);
  if (cfg_.prompt_mode == "visual") {
    return cfg_.use_adapter ? adapter_->apply(t, encoded) : encoded;
  }
  if (cfg_.use_adapter)
    return describe_tracks(t, *text_, *adapter_, *vlm_, prompts, sentences_);
  return vlm_->forward(t, encoded, t.constant(sentences_));
}

TrackModel::FrameForward TrackModel::forward_frame(ad::Tape& t,
                                                   const ImageFrame& frame,
                                                   ad::Var track_queries) const {
  if (track_queries.cols() != cfg_.dim && track_queries.rows() > 0)
    throw std::invalid_argument("track queries must be M x dim");
  FrameForward fw;
  FeatureMaps maps = perc_->backbone_forward(t, frame);
  fw.encoded = perc_->encoder_forward(t, maps);
  fw.fused = track_queries;
  if (track_queries.rows() > 0 && cfg_.use_fusion) {
    ContextTokens vcp_ctx =
        perc_->select_context(t, maps, fw.encoded, cfg_.context_source);
    ad::Var description = describe(t, track_queries, vcp_ctx);
    fw.fused = fuse_->forward(t, track_queries, description);
  }
  fw.out = perc_->decoder_forward(t, fw.fused, fw.encoded);
  return fw;
}

}  // namespace langtrack
