// SPDX-License-Identifier: Apache-2.0
#include "langtrack/blocks.hpp"

#include <cmath>

namespace langtrack::blocks {

Eigen::MatrixXd gaussian(Rng& rng, int rows, int cols, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.gaussian() * stddev;
  }
  return m;
}

void add_attention(ParamStore& store, Rng& rng, const std::string& prefix,
                   int d) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* nm : {"wq", "wk", "wv", "wo"}) {
    store.add(prefix + nm, d, d).value = gaussian(rng, d, d, stddev);
  }
}

void add_feedforward(ParamStore& store, Rng& rng, const std::string& prefix,
                     int d, int f) {
  store.add(prefix + "w1", d, f).value =
      gaussian(rng, d, f, 1.0 / std::sqrt(static_cast<double>(d)));
  store.add(prefix + "w2", f, d).value =
      gaussian(rng, f, d, 1.0 / std::sqrt(static_cast<double>(f)));
}

void add_norm(ParamStore& store, const std::string& prefix, int d) {
  store.add(prefix + ".gain", 1, d).value.setOnes();
  store.add(prefix + ".bias", 1, d);
}

ad::Var attention(ad::Tape& t, ParamStore& store, const std::string& prefix,
                  int heads, ad::Var q, ad::Var kv,
                  const Eigen::MatrixXd* allow) {
  return ad::attention(q, kv, kv, t.leaf(store.at(prefix + "wq")),
                       t.leaf(store.at(prefix + "wk")),
                       t.leaf(store.at(prefix + "wv")),
                       t.leaf(store.at(prefix + "wo")), heads, allow);
}

ad::Var feedforward(ad::Tape& t, ParamStore& store, const std::string& prefix,
                    ad::Var x) {
  ad::Var h = ad::relu(ad::matmul(x, t.leaf(store.at(prefix + "w1"))));
  return ad::matmul(h, t.leaf(store.at(prefix + "w2")));
}

ad::Var norm(ad::Tape& t, ParamStore& store, const std::string& prefix,
             ad::Var x) {
  return ad::layer_norm_rows(x, t.leaf(store.at(prefix + ".gain")),
                             t.leaf(store.at(prefix + ".bias")));
}

}  // namespace langtrack::blocks
