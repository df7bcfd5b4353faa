// SPDX-License-Identifier: Apache-2.0
#include "langtrack/prompting.hpp"

#include "langtrack/blocks.hpp"

#include <stdexcept>

namespace langtrack {

VisualPrompter::VisualPrompter(const PromptBlockConfig& cfg, ParamStore& store,
                               Rng& rng, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  if (cfg_.dim % cfg_.heads != 0) {
    throw std::runtime_error("visual prompter: heads must divide dim");
  }
  blocks::add_attention(store, rng, prefix_ + "self.", cfg_.dim);
  blocks::add_attention(store, rng, prefix_ + "cross.", cfg_.dim);
  blocks::add_feedforward(store, rng, prefix_ + "ff.", cfg_.dim,
                          cfg_.ff_hidden);
  blocks::add_norm(store, prefix_ + "ln1", cfg_.dim);
  blocks::add_norm(store, prefix_ + "ln2", cfg_.dim);
  blocks::add_norm(store, prefix_ + "ln3", cfg_.dim);
}

ad::Var VisualPrompter::forward(ad::Tape& t, ad::Var q_prev,
                                ad::Var context) const {
  if (q_prev.cols() != cfg_.dim || context.cols() != cfg_.dim) {
    throw std::runtime_error("visual prompter: width mismatch");
  }
  if (context.rows() == 0) {
    throw std::runtime_error("visual prompter: empty context");
  }
  ParamStore& s = *store_;
  ad::Var x = blocks::norm(
      t, s, prefix_ + "ln1",
      ad::add(q_prev, blocks::attention(t, s, prefix_ + "self.", cfg_.heads,
                                        q_prev, q_prev)));
  x = blocks::norm(t, s, prefix_ + "ln2",
                   ad::add(x, blocks::attention(t, s, prefix_ + "cross.",
                                                cfg_.heads, x, context)));
  return blocks::norm(
      t, s, prefix_ + "ln3",
      ad::add(x, blocks::feedforward(t, s, prefix_ + "ff.", x)));
}

PromptMixer::PromptMixer(const PromptBlockConfig& cfg, ParamStore& store,
                         Rng& rng, std::string prefix)
    : cfg_(cfg), prefix_(std::move(prefix)), store_(&store) {
  if (cfg_.dim % cfg_.heads != 0) {
    throw std::runtime_error("prompt mixer: heads must divide dim");
  }
  blocks::add_attention(store, rng, prefix_ + "cross.", cfg_.dim);
  blocks::add_feedforward(store, rng, prefix_ + "ff.", cfg_.dim,
                          cfg_.ff_hidden);
  blocks::add_norm(store, prefix_ + "ln1", cfg_.dim);
  blocks::add_norm(store, prefix_ + "ln2", cfg_.dim);
}

ad::Var PromptMixer::forward(ad::Tape& t, ad::Var queries, ad::Var kv) const {
  if (queries.cols() != cfg_.dim || kv.cols() != cfg_.dim) {
    throw std::runtime_error("prompt mixer: width mismatch");
  }
  if (queries.rows() > 0 && kv.rows() == 0) {
    throw std::runtime_error("prompt mixer: no rows to attend to");
  }
  ParamStore& s = *store_;
  ad::Var x = blocks::norm(
      t, s, prefix_ + "ln1",
      ad::add(queries, blocks::attention(t, s, prefix_ + "cross.", cfg_.heads,
                                         queries, kv)));
  return blocks::norm(
      t, s, prefix_ + "ln2",
      ad::add(x, blocks::feedforward(t, s, prefix_ + "ff.", x)));
}

QueryFusion::QueryFusion(int dim, ParamStore& store, std::string prefix)
    : dim_(dim), prefix_(std::move(prefix)), store_(&store) {
  Param& w = store.add(prefix_ + "w", 2 * dim, dim);
  w.value.topRows(dim) = Eigen::MatrixXd::Identity(dim, dim);
  store.add(prefix_ + "b", 1, dim);
  blocks::add_norm(store, prefix_ + "ln", dim);
}

ad::Var QueryFusion::forward(ad::Tape& t, ad::Var q_prev,
                             ad::Var description) const {
  if (q_prev.rows() != description.rows()) {
    throw std::runtime_error("query fusion: row count mismatch");
  }
  if (q_prev.cols() != dim_ || description.cols() != dim_) {
    throw std::runtime_error("query fusion: width mismatch");
  }
  ad::Var z = ad::matmul(ad::concat_cols({q_prev, description}),
                         t.leaf(store_->at(prefix_ + "w")));
  z = ad::add_rowvec(z, t.leaf(store_->at(prefix_ + "b")));
  return blocks::norm(t, *store_, prefix_ + "ln", z);
}

ad::Var describe_tracks(ad::Tape& t, const TextEncoder& enc,
                        const Adapter& adapter, const PromptMixer& mixer,
                        ad::Var visual_prompts,
                        const Eigen::MatrixXd& sentence_embeddings) {
  ad::Var visual = adapter.apply(t, enc.encode_visual(t, visual_prompts));
  ad::Var textual = adapter.apply(t, t.constant(sentence_embeddings));
  return mixer.forward(t, visual, textual);
}

}  // namespace langtrack
