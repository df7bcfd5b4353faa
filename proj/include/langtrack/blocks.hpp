// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/autodiff.hpp"
#include "langtrack/rng.hpp"

#include <string>

namespace langtrack::blocks {

Eigen::MatrixXd gaussian(Rng& rng, int rows, int cols, double stddev);

// Parameter bundles for transformer sublayers. Attention is four d x d
// square matrices under prefix{wq,wk,wv,wo}; the feed-forward is a bias-free
// two-layer relu MLP under prefix{w1,w2}; a norm owns prefix.{gain,bias}.
void add_attention(ParamStore& store, Rng& rng, const std::string& prefix,
                   int d);
void add_feedforward(ParamStore& store, Rng& rng, const std::string& prefix,
                     int d, int f);
void add_norm(ParamStore& store, const std::string& prefix, int d);

ad::Var attention(ad::Tape& t, ParamStore& store, const std::string& prefix,
                  int heads, ad::Var q, ad::Var kv,
                  const Eigen::MatrixXd* allow = nullptr);
ad::Var feedforward(ad::Tape& t, ParamStore& store, const std::string& prefix,
                    ad::Var x);
ad::Var norm(ad::Tape& t, ParamStore& store, const std::string& prefix,
             ad::Var x);

}  // namespace langtrack::blocks
