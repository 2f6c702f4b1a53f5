#pragma once

// GRU decoder shared by CAN and the EncDec baseline. Each step reads
// [context; embedding of the previous token], starting from <go> and z_0 = 0,
// and emits softmax(W_od z_k + b_o).

#include <span>
#include <vector>

#include "can/gru.hpp"
#include "can/model.hpp"

namespace can {

struct DecoderParams {
  DecoderParams() = default;
  // GRU with hidden K_o over inputs of context_size + K_w, projection to V.
  DecoderParams(const std::string& prefix, std::size_t K_o, std::size_t context_size, std::size_t K_w,
                std::size_t vocab_size);

  std::vector<ad::Parameter*> parameters();

  GruParams gru;
  ad::Parameter W_od;  // V x K_o
  ad::Parameter b_o;   // V
};

struct DecodeResult {
  OutputKind kind = OutputKind::Answer;
  TokenIds tokens;
  std::vector<ad::Var> probs;  // one distribution per emitted token
};

// Greedy decoding until "?" or ".". With allow_question false the "?" entry
// is never selected. Throws NoEosEmitted after max_len tokens.
DecodeResult decode_greedy(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p, ad::Var context,
                           std::size_t max_len, bool allow_question = true);

// Teacher forcing: returns one distribution per target token.
std::vector<ad::Var> decode_teacher(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p,
                                    ad::Var context, const TokenIds& target);

// Sum of -ln p(target_k) under teacher forcing.
ad::Var sequence_loss(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p, ad::Var context,
                      const TokenIds& target);

}  // namespace can
