// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <langtrack/prompting.hpp>

#include "support/gradcheck.hpp"

#include <memory>
#include <string>
#include <vector>

using namespace langtrack;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * scale;
  }
  return m;
}

PromptBlockConfig small_block() {
  PromptBlockConfig cfg;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.ff_hidden = 32;
  return cfg;
}

Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& m,
                             const std::vector<int>& perm) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (size_t i = 0; i < perm.size(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd manual_layer_norm(const Eigen::MatrixXd& m,
                                  const ParamStore& store,
                                  const std::string& prefix) {
  const Eigen::RowVectorXd g = store.at(prefix + ".gain").value.row(0);
  const Eigen::RowVectorXd b = store.at(prefix + ".bias").value.row(0);
  Eigen::VectorXd mu = m.rowwise().mean();
  Eigen::MatrixXd centered = m.colwise() - mu;
  Eigen::VectorXd var = centered.array().square().rowwise().mean();
  Eigen::VectorXd inv = (var.array() + 1e-5).rsqrt();
  Eigen::MatrixXd xhat = centered.array().colwise() * inv.array();
  return ((xhat.array().rowwise() * g.array()).rowwise() + b.array()).matrix();
}

}  // namespace

TEST_CASE("visual prompter maps query rows to prompt rows") {
  ParamStore store;
  Rng rng(11);
  VisualPrompter vcp(small_block(), store, rng);

  Rng data(12);
  const Eigen::MatrixXd q = random_matrix(data, 7, 16);
  const Eigen::MatrixXd ctx = random_matrix(data, 10, 16);

  ad::Tape t;
  ad::Var out = vcp.forward(t, t.constant(q), t.constant(ctx));
  CHECK(out.rows() == 7);
  CHECK(out.cols() == 16);
  CHECK(out.value().allFinite());

  SUBCASE("no queries passes through empty") {
    ad::Var empty = vcp.forward(t, t.constant(Eigen::MatrixXd(0, 16)),
                                t.constant(ctx));
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 16);
  }
  SUBCASE("empty context is an error") {
    CHECK_THROWS(vcp.forward(t, t.constant(q),
                             t.constant(Eigen::MatrixXd(0, 16))));
  }
  SUBCASE("width mismatch is an error") {
    CHECK_THROWS(vcp.forward(t, t.constant(random_matrix(data, 7, 8)),
                             t.constant(ctx)));
    CHECK_THROWS(vcp.forward(t, t.constant(q),
                             t.constant(random_matrix(data, 10, 8))));
  }
  SUBCASE("same seed rebuilds the same weights") {
    ParamStore s1, s2;
    Rng r1(77), r2(77);
    VisualPrompter a(small_block(), s1, r1);
    VisualPrompter b(small_block(), s2, r2);
    CHECK(s1.at("vcp.cross.wq").value == s2.at("vcp.cross.wq").value);
    CHECK(s1.at("vcp.ff.w2").value == s2.at("vcp.ff.w2").value);
  }
}

TEST_CASE("visual prompter is permutation equivariant") {
  ParamStore store;
  Rng rng(21);
  VisualPrompter vcp(small_block(), store, rng);

  Rng data(22);
  const Eigen::MatrixXd q = random_matrix(data, 5, 16);
  const Eigen::MatrixXd ctx = random_matrix(data, 7, 16);
  const std::vector<int> perm = {3, 0, 4, 1, 2};

  ad::Tape t;
  const Eigen::MatrixXd base =
      vcp.forward(t, t.constant(q), t.constant(ctx)).value();
  const Eigen::MatrixXd permuted =
      vcp.forward(t, t.constant(permute_rows(q, perm)), t.constant(ctx))
          .value();
  CHECK(max_abs_diff(permuted, permute_rows(base, perm)) <= 1e-12);
}

TEST_CASE("prompt mixer shapes and errors") {
  ParamStore store;
  Rng rng(31);
  PromptMixer mixer(small_block(), store, rng);

  Rng data(32);
  const Eigen::MatrixXd q = random_matrix(data, 4, 16);
  const Eigen::MatrixXd kv = random_matrix(data, 6, 16);

  ad::Tape t;
  ad::Var out = mixer.forward(t, t.constant(q), t.constant(kv));
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 16);
  CHECK(out.value().allFinite());

  ad::Var empty = mixer.forward(t, t.constant(Eigen::MatrixXd(0, 16)),
                                t.constant(kv));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 16);

  CHECK_THROWS(mixer.forward(t, t.constant(q),
                             t.constant(Eigen::MatrixXd(0, 16))));
  CHECK_THROWS(mixer.forward(t, t.constant(random_matrix(data, 4, 8)),
                             t.constant(kv)));
}

TEST_CASE("single sentence mixer matches the closed form") {
  ParamStore store;
  Rng rng(41);
  PromptMixer mixer(small_block(), store, rng);
  // Non-trivial norm affines so the check exercises them.
  Rng aff(42);
  store.at("vlm.ln1.gain").value = random_matrix(aff, 1, 16, 0.5).array() + 1.0;
  store.at("vlm.ln1.bias").value = random_matrix(aff, 1, 16, 0.3);
  store.at("vlm.ln2.gain").value = random_matrix(aff, 1, 16, 0.5).array() + 1.0;
  store.at("vlm.ln2.bias").value = random_matrix(aff, 1, 16, 0.3);

  Rng data(43);
  const Eigen::MatrixXd q = random_matrix(data, 5, 16);
  const Eigen::MatrixXd kv = random_matrix(data, 1, 16);

  ad::Tape t;
  const Eigen::MatrixXd got =
      mixer.forward(t, t.constant(q), t.constant(kv)).value();

  // One key: every query attends to it with weight one, so the attention
  // contribution is the same projected row everywhere.
  const Eigen::RowVectorXd attn_row =
      ((kv * store.at("vlm.cross.wv").value) * store.at("vlm.cross.wo").value)
          .row(0);
  Eigen::MatrixXd x = q.rowwise() + attn_row;
  x = manual_layer_norm(x, store, "vlm.ln1");
  Eigen::MatrixXd hidden = (x * store.at("vlm.ff.w1").value).cwiseMax(0.0);
  Eigen::MatrixXd y = x + hidden * store.at("vlm.ff.w2").value;
  y = manual_layer_norm(y, store, "vlm.ln2");

  CHECK(max_abs_diff(got, y) <= 1e-12);
}

TEST_CASE("duplicated sentence rows do not change the mixer output") {
  ParamStore store;
  Rng rng(51);
  PromptMixer mixer(small_block(), store, rng);

  Rng data(52);
  const Eigen::MatrixXd q = random_matrix(data, 3, 16);
  const Eigen::MatrixXd kv = random_matrix(data, 5, 16);
  Eigen::MatrixXd doubled(10, 16);
  doubled << kv, kv;

  ad::Tape t;
  const Eigen::MatrixXd once =
      mixer.forward(t, t.constant(q), t.constant(kv)).value();
  const Eigen::MatrixXd twice =
      mixer.forward(t, t.constant(q), t.constant(doubled)).value();
  CHECK(max_abs_diff(once, twice) <= 1e-12);
}

TEST_CASE("query fusion starts as plain normalization of the queries") {
  ParamStore store;
  QueryFusion fuse(16, store);

  Rng data(61);
  const Eigen::MatrixXd q = random_matrix(data, 6, 16);
  const Eigen::MatrixXd l = random_matrix(data, 6, 16);

  ad::Tape t;
  const Eigen::MatrixXd got =
      fuse.forward(t, t.constant(q), t.constant(l)).value();
  const Eigen::MatrixXd want = manual_layer_norm(q, store, "fuse.ln");
  CHECK(max_abs_diff(got, want) == 0.0);

  SUBCASE("rows are standardized before the affine") {
    for (int r = 0; r < got.rows(); ++r) {
      CHECK(std::abs(got.row(r).mean()) <= 1e-12);
      const double var = (got.row(r).array() - got.row(r).mean()).square().mean();
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("query fusion is row local") {
  ParamStore store;
  QueryFusion fuse(16, store);
  // Randomize the weights so the description half actually matters.
  Rng rng(71);
  store.at("fuse.w").value = random_matrix(rng, 32, 16, 0.3);
  store.at("fuse.b").value = random_matrix(rng, 1, 16, 0.1);

  Rng data(72);
  const Eigen::MatrixXd q = random_matrix(data, 5, 16);
  Eigen::MatrixXd l = random_matrix(data, 5, 16);

  ad::Tape t;
  const Eigen::MatrixXd base =
      fuse.forward(t, t.constant(q), t.constant(l)).value();
  l.row(2).array() += 0.5;
  const Eigen::MatrixXd bumped =
      fuse.forward(t, t.constant(q), t.constant(l)).value();

  for (int r = 0; r < 5; ++r) {
    if (r == 2) {
      CHECK((base.row(r) - bumped.row(r)).cwiseAbs().maxCoeff() > 1e-6);
    } else {
      CHECK(base.row(r) == bumped.row(r));
    }
  }

  CHECK_THROWS(fuse.forward(t, t.constant(q),
                            t.constant(Eigen::MatrixXd(3, 16))));
}

namespace {

// Shared fixture for the full pathway: prompter -> frozen stack -> adapter ->
// mixer -> fusion, at a reduced width so finite differences stay cheap.
struct Pathway {
  ParamStore store;
  TextEncoderConfig text_cfg;
  std::unique_ptr<TextEncoder> enc;
  std::unique_ptr<VisualPrompter> vcp;
  std::unique_ptr<PromptMixer> mixer;
  std::unique_ptr<Adapter> adapter;
  std::unique_ptr<QueryFusion> fuse;
  Eigen::MatrixXd sentences;
  Eigen::MatrixXd context;

  explicit Pathway(std::uint64_t seed) {
    Vocabulary vocab = Vocabulary::build({"a b", "b c", "c a", "a c"});
    text_cfg.vocab_size = vocab.size();
    text_cfg.d_text = 16;
    text_cfg.n_layers = 1;
    text_cfg.n_heads = 2;
    text_cfg.d_ff = 32;
    text_cfg.max_len = 6;
    text_cfg.d_visual = 16;
    enc = std::make_unique<TextEncoder>(text_cfg, store);

    Rng rng(seed);
    vcp = std::make_unique<VisualPrompter>(small_block(), store, rng);
    mixer = std::make_unique<PromptMixer>(small_block(), store, rng);
    AdapterConfig acfg;
    acfg.d = 16;
    acfg.hidden = 8;
    adapter = std::make_unique<Adapter>(acfg, store, rng);
    fuse = std::make_unique<QueryFusion>(16, store);

    std::vector<TokenSequence> toks;
    for (const std::string& s : {"a b", "b c", "c a", "a c"}) {
      toks.push_back(tokenize(s, vocab, 6));
    }
    sentences = enc->encode_sentences(toks);
    Rng data(seed + 1);
    context = random_matrix(data, 5, 16);
  }

  ad::Var run(ad::Tape& t, ad::Var q_prev) const {
    ad::Var prompts = vcp->forward(t, q_prev, t.constant(context));
    ad::Var descr =
        describe_tracks(t, *enc, *adapter, *mixer, prompts, sentences);
    return fuse->forward(t, q_prev, descr);
  }
};

}  // namespace

TEST_CASE("track descriptions flow end to end") {
  Pathway path(81);
  Rng data(82);
  const Eigen::MatrixXd q = random_matrix(data, 3, 16);

  ad::Tape t;
  ad::Var out = path.run(t, t.constant(q));
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 16);
  CHECK(out.value().allFinite());
  CHECK(path.sentences.rows() == 4);

  ad::Var none = path.run(t, t.constant(Eigen::MatrixXd(0, 16)));
  CHECK(none.rows() == 0);
  CHECK(none.cols() == 16);
}

TEST_CASE("full pathway keeps rows aligned under permutation") {
  Pathway path(91);
  Rng data(92);
  const Eigen::MatrixXd q = random_matrix(data, 4, 16);
  const std::vector<int> perm = {2, 0, 3, 1};

  ad::Tape t;
  const Eigen::MatrixXd base = path.run(t, t.constant(q)).value();
  const Eigen::MatrixXd permuted =
      path.run(t, t.constant(permute_rows(q, perm))).value();
  CHECK(max_abs_diff(permuted, permute_rows(base, perm)) <= 1e-9);
}

TEST_CASE("language pathway gradients match finite differences") {
  Pathway path(101);
  Param& probe = path.store.add("probe.q", 3, 16);
  Rng data(102);
  probe.value = random_matrix(data, 3, 16, 0.5);
  const Eigen::MatrixXd pick = random_matrix(data, 3, 16, 0.7);

  for (const Param* p : path.store.trainable()) {
    CHECK(p->name.rfind("text.", 0) != 0);
  }

  testsupport::LossBuilder build = [&](ad::Tape& t) {
    ad::Var q = t.leaf(path.store.at("probe.q"));
    return ad::sum(ad::cmul(path.run(t, q), t.constant(pick)));
  };
  const testsupport::GradReport rep =
      testsupport::gradcheck(path.store, build, 1e-5, 7);
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);
}
