// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <langtrack/text_stack.hpp>

#include "support/gradcheck.hpp"

#include <cstdio>

using namespace langtrack;
using testsupport::gradcheck;

namespace {

const std::string kBookPath =
    std::string(LANGTRACK_SOURCE_DIR) + "/data/trackbook.txt";

struct Fixture {
  ParamStore store;
  Trackbook book = load_trackbook(kBookPath);
  Vocabulary vocab;
  TextEncoderConfig cfg;
  Fixture(int n_layers = 2, int max_len = 32) {
    auto sentences = render_sentences(book, PromptTemplate{"A photo of"});
    vocab = Vocabulary::build(sentences);
    cfg.vocab_size = vocab.size();
    cfg.n_layers = n_layers;
    cfg.max_len = max_len;
  }
};

Eigen::MatrixXd rand_mat(Rng& rng, int r, int c, double s = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(-s, s);
  }
  return m;
}

}  // namespace

TEST_CASE("adapter algebra") {
  ParamStore store;
  Rng rng(41);
  Adapter adapter(AdapterConfig{4, 3}, store, rng);

  // W2 starts at zero, so the adapter opens as the identity.
  Eigen::MatrixXd x = rand_mat(rng, 5, 4);
  {
    ad::Tape t;
    ad::Var out = adapter.apply(t, t.input(x));
    CHECK((t.val(out) - x).cwiseAbs().maxCoeff() == 0.0);
  }

  // Zero input stays zero for any weights.
  store.at("adapter.w2").value = rand_mat(rng, 3, 4);
  {
    ad::Tape t;
    ad::Var out = adapter.apply(t, t.input(Eigen::MatrixXd::Zero(2, 4)));
    CHECK(t.val(out).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adapter scalar case") {
  ParamStore store;
  Rng rng(42);
  Adapter adapter(AdapterConfig{1, 1}, store, rng);
  store.at("adapter.w1").value(0, 0) = 3.0;
  store.at("adapter.w2").value(0, 0) = 0.5;
  ad::Tape t;
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 2.0;
  // relu(2*3)*0.5 + 2 = 5
  CHECK(t.scalar(adapter.apply(t, t.input(x))) == doctest::Approx(5.0));
}

TEST_CASE("adapter gradients") {
  ParamStore store;
  Rng rng(43);
  Adapter adapter(AdapterConfig{6, 3}, store, rng);
  Param& x = store.add("x", 4, 6);
  x.value = rand_mat(rng, 4, 6);
  store.at("adapter.w1").value = rand_mat(rng, 6, 3, 0.7);
  store.at("adapter.w2").value = rand_mat(rng, 3, 6, 0.7);
  const Eigen::MatrixXd w = rand_mat(rng, 4, 6);

  auto rep = gradcheck(store, [&](ad::Tape& t) {
    return ad::sum(ad::cmul(adapter.apply(t, t.leaf(x)), t.constant(w)));
  });
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);
}

TEST_CASE("masks") {
  Eigen::MatrixXd c = TextEncoder::causal_mask(3);
  Eigen::MatrixXd expect(3, 3);
  expect << 1, 0, 0, 1, 1, 0, 1, 1, 1;
  CHECK((c - expect).cwiseAbs().maxCoeff() == 0.0);

  CHECK((TextEncoder::joint_mask(2, {}) - Eigen::MatrixXd::Ones(2, 2))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((TextEncoder::joint_mask(0, {3}) - expect).cwiseAbs().maxCoeff() == 0.0);

  // One visual token plus two 2-token sentences: block diagonal, causal in
  // the sentence blocks, nothing across block boundaries.
  Eigen::MatrixXd j = TextEncoder::joint_mask(1, {2, 2});
  Eigen::MatrixXd je(5, 5);
  je << 1, 0, 0, 0, 0,
        0, 1, 0, 0, 0,
        0, 1, 1, 0, 0,
        0, 0, 0, 1, 0,
        0, 0, 0, 1, 1;
  CHECK((j - je).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sentence encoding determinism and shape") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  TokenSequence s = tokenize("A photo of person riding bike", f.vocab, 15);

  ad::Tape t1, t2;
  const Eigen::MatrixXd a = t1.val(enc.encode_sentence(t1, s));
  const Eigen::MatrixXd b = t2.val(enc.encode_sentence(t2, s));
  CHECK(a.rows() == 1);
  CHECK(a.cols() == 64);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-layer encoder reduces to embeddings") {
  Fixture f(0);
  TextEncoder enc(f.cfg, f.store);
  TokenSequence s = tokenize("A photo of person running", f.vocab, 9);
  ad::Tape t;
  const Eigen::MatrixXd out = t.val(enc.encode_sentence(t, s));
  const Eigen::MatrixXd& emb = f.store.at("text.token_embedding").value;
  const Eigen::MatrixXd& pos = f.store.at("text.positional_embedding").value;
  const Eigen::MatrixXd expect =
      emb.row(Vocabulary::kEos) + pos.row(s.eos_pos);
  CHECK((out - expect).cwiseAbs().maxCoeff() == 0.0);

  // Zero-layer visual pass is the identity on its input.
  Rng rng(44);
  Eigen::MatrixXd prompts = rand_mat(rng, 1, 64);
  ad::Tape t2;
  const Eigen::MatrixXd vis = t2.val(enc.encode_visual(t2, t2.input(prompts)));
  CHECK((vis - prompts).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("token order matters") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  TokenSequence s1 = tokenize("person riding bike", f.vocab, 8);
  TokenSequence s2 = tokenize("person bike riding", f.vocab, 8);
  ad::Tape t;
  const Eigen::MatrixXd a = t.val(enc.encode_sentence(t, s1));
  const Eigen::MatrixXd b = t.val(enc.encode_sentence(t, s2));
  CHECK((a - b).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("causality: tokens after a position cannot affect it") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  TokenSequence s = tokenize("person riding bike", f.vocab, 10);
  TokenSequence mutated = s;
  // Rewrite the padding after EOS with arbitrary valid ids.
  for (int i = s.eos_pos + 1; i < s.length(); ++i) {
    mutated.ids[i] = f.vocab.id("person");
  }
  ad::Tape t;
  const Eigen::MatrixXd a = t.val(enc.encode_sentence(t, s));
  const Eigen::MatrixXd b = t.val(enc.encode_sentence(t, mutated));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("visual encoding is permutation-equivariant and duplicates rows") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  Rng rng(45);
  Eigen::MatrixXd prompts = rand_mat(rng, 4, 64);
  prompts.row(2) = prompts.row(0);
  ad::Tape t;
  const Eigen::MatrixXd out = t.val(enc.encode_visual(t, t.input(prompts)));
  CHECK(out.rows() == 4);
  CHECK((out.row(2) - out.row(0)).cwiseAbs().maxCoeff() == 0.0);

  // Swapping two prompt rows swaps the two output rows.
  Eigen::MatrixXd swapped = prompts;
  swapped.row(1).swap(swapped.row(3));
  ad::Tape t2;
  const Eigen::MatrixXd out2 = t2.val(enc.encode_visual(t2, t2.input(swapped)));
  CHECK((out2.row(1) - out.row(3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out2.row(3) - out.row(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradients flow through the frozen visual pass") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  Rng rng(46);
  Param& prompts = f.store.add("probe.prompts", 2, 64);
  prompts.value = rand_mat(rng, 2, 64, 0.5);
  const Eigen::MatrixXd w = rand_mat(rng, 2, 64);

  auto rep = gradcheck(f.store, [&](ad::Tape& t) {
    return ad::sum(ad::cmul(enc.encode_visual(t, t.leaf(prompts)), t.constant(w)));
  });
  INFO(rep.where);
  CHECK(rep.max_err < 1e-4);

  // And the frozen weights stay untouched by backward.
  const std::uint64_t before = enc.checksum();
  testsupport::backprop_loss(f.store, [&](ad::Tape& t) {
    return ad::sum(enc.encode_visual(t, t.leaf(prompts)));
  });
  CHECK(enc.checksum() == before);
  for (const std::string& n : enc.names()) {
    CHECK(f.store.at("text." + n).grad.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("joint encoding matches independent passes") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  auto sentences = render_sentences(f.book, PromptTemplate{"A photo of"});
  Rng rng(47);

  for (int trial = 0; trial < 10; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(1, 8));
    const int k = static_cast<int>(rng.uniform_int(0, 8));
    const int L = static_cast<int>(rng.uniform_int(5, 15));
    Eigen::MatrixXd prompts = rand_mat(rng, m, 64);
    std::vector<TokenSequence> toks;
    for (int i = 0; i < k; ++i) {
      toks.push_back(tokenize(
          sentences[static_cast<std::size_t>(rng.uniform_int(0, 55))], f.vocab,
          L));
    }

    ad::Tape t;
    auto [jv, jt] = enc.encode_joint(t, t.input(prompts), toks);
    const Eigen::MatrixXd sep_v = t.val(enc.encode_visual(t, t.input(prompts)));
    CHECK((t.val(jv) - sep_v).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(t.val(jt).rows() == k);
    for (int i = 0; i < k; ++i) {
      const Eigen::MatrixXd sep_s =
          t.val(enc.encode_sentence(t, toks[static_cast<std::size_t>(i)]));
      CHECK((t.val(jt).row(i) - sep_s.row(0)).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("joint visual half ignores sentence content bitwise") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  Rng rng(48);
  Eigen::MatrixXd prompts = rand_mat(rng, 3, 64);
  std::vector<TokenSequence> s1 = {tokenize("person running", f.vocab, 9),
                                   tokenize("person dancing", f.vocab, 9)};
  std::vector<TokenSequence> s2 = {tokenize("short person", f.vocab, 9),
                                   tokenize("tall person", f.vocab, 9)};
  ad::Tape t;
  auto [v1, t1] = enc.encode_joint(t, t.input(prompts), s1);
  auto [v2, t2] = enc.encode_joint(t, t.input(prompts), s2);
  CHECK((t.val(v1) - t.val(v2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((t.val(t1) - t.val(t2)).cwiseAbs().maxCoeff() > 0.0);

  // Empty sentence list degenerates to the visual pass alone.
  auto [v3, t3] = enc.encode_joint(t, t.input(prompts), {});
  CHECK(t3.rows() == 0);
  CHECK((t.val(v3) - t.val(enc.encode_visual(t, t.input(prompts))))
            .cwiseAbs()
            .maxCoeff() <= 1e-6);
}

TEST_CASE("cached sentence matrix equals per-sentence passes") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  std::vector<TokenSequence> toks = {
      tokenize("person running", f.vocab, 12),
      tokenize("person walking slowly", f.vocab, 12),
      tokenize("person in red clothes", f.vocab, 12)};
  const Eigen::MatrixXd cached = enc.encode_sentences(toks);
  CHECK(cached.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    ad::Tape t;
    const Eigen::MatrixXd one =
        t.val(enc.encode_sentence(t, toks[static_cast<std::size_t>(i)]));
    CHECK((cached.row(i) - one.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("weight export and import round-trip") {
  Fixture fa, fb;
  TextEncoder a(fa.cfg, fa.store);
  TextEncoderConfig cfg_b = fb.cfg;
  cfg_b.seed = 12345;  // different init
  TextEncoder b(cfg_b, fb.store);
  CHECK(a.checksum() != b.checksum());

  const std::string path = "/tmp/langtrack_test_text_weights.bin";
  a.export_weights().save(path, "f4");
  TensorFile file = TensorFile::load(path);
  for (const std::string& n : file.names()) CHECK(file.frozen(n));
  b.import_weights(file);
  std::remove(path.c_str());

  // Imported weights went through fp32, so compare against the quantized a.
  TokenSequence s = tokenize("A photo of person riding bike", fa.vocab, 15);
  for (const std::string& n : a.names()) {
    Param& p = fa.store.at("text." + n);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      *(p.value.data() + i) =
          static_cast<double>(static_cast<float>(*(p.value.data() + i)));
    }
  }
  CHECK(a.checksum() == b.checksum());
  ad::Tape t;
  const Eigen::MatrixXd ea = t.val(a.encode_sentence(t, s));
  const Eigen::MatrixXd eb = t.val(b.encode_sentence(t, s));
  CHECK((ea - eb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("weight import rejects bad files") {
  Fixture f;
  TextEncoder enc(f.cfg, f.store);
  TensorFile good = enc.export_weights();

  TensorFile extra = good;
  extra.put("unknown_tensor", Eigen::MatrixXd::Zero(1, 1));
  CHECK_THROWS(enc.import_weights(extra));

  TensorFile bad_shape = good;
  bad_shape.put("final_ln.gain", Eigen::MatrixXd::Zero(1, 32), true);
  CHECK_THROWS(enc.import_weights(bad_shape));
}

TEST_CASE("encoder init is reproducible and depends on its own seed") {
  Fixture f1, f2;
  TextEncoder a(f1.cfg, f1.store);
  TextEncoder b(f2.cfg, f2.store);
  CHECK(a.checksum() == b.checksum());
}

TEST_CASE("sentence errors") {
  Fixture f(2, 8);
  TextEncoder enc(f.cfg, f.store);
  ad::Tape t;
  TokenSequence too_long = tokenize("person riding bike", f.vocab, 9);
  CHECK_THROWS(enc.encode_sentence(t, too_long));
  TokenSequence bad = tokenize("person riding bike", f.vocab, 8);
  bad.ids[1] = f.cfg.vocab_size;  // out of range
  CHECK_THROWS(enc.encode_sentence(t, bad));
}
