#pragma once

#include <span>
#include <string>
#include <vector>

#include "can/autodiff.hpp"

namespace can {

// Weights of one gated recurrent unit with hidden size K and input size D.
struct GruParams {
  GruParams() = default;
  GruParams(const std::string& prefix, std::size_t hidden, std::size_t input);

  std::size_t hidden() const { return b_h.value.size(); }
  std::size_t input() const { return U_h.value.shape().cols(); }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  ad::Parameter U_r, U_z, U_h;  // K x D
  ad::Parameter W_r, W_z, W_h;  // K x K
  ad::Parameter b_r, b_z, b_h;  // K
};

// One step:
//   r = sigmoid(U_r x + W_r h + b_r)
//   z = sigmoid(U_z x + W_z h + b_z)
//   h~ = tanh(U_h x + W_h (r * h) + b_h)
//   h' = z * h + (1 - z) * h~
ad::Var gru_step(ad::Tape& tape, const GruParams& p, ad::Var h_prev, ad::Var x);

// Runs gru_step over xs starting from h0 and returns every hidden state.
std::vector<ad::Var> gru_sequence(ad::Tape& tape, const GruParams& p, ad::Var h0, std::span<const ad::Var> xs);

}  // namespace can
