#pragma once

// EncDec baseline: one GRU reads every statement token and then the question
// tokens; its last state conditions the decoder. The IQA variant appends the
// feedback tokens and re-encodes from scratch.

#include <vector>

#include "can/decoder.hpp"
#include "can/gru.hpp"
#include "can/model.hpp"

namespace can {

struct EncDecParams {
  EncDecParams() = default;
  EncDecParams(const ModelDims& dims, std::size_t vocab_size);

  std::vector<ad::Parameter*> parameters();

  ad::Parameter W_w;  // K_w x V
  GruParams enc;      // K_h over K_w
  DecoderParams dec;  // context K_h
};

// Statements in order, then the question, then any extra tokens.
TokenIds encdec_input(const std::vector<TokenIds>& story, const TokenIds& question, const TokenIds& extra = {});
// Encoder states, one per input token.
std::vector<ad::Var> encdec_encode(ad::Tape& tape, const EncDecParams& p, const TokenIds& input);

class EncDecModel final : public QaModel {
 public:
  EncDecModel(Vocabulary vocab, ModelDims dims);

  ModelKind kind() const override { return ModelKind::EncDec; }
  std::vector<ad::Parameter*> parameters() override { return params_.parameters(); }
  using QaModel::parameters;

  ad::Var example_loss(ad::Tape& tape, const StoryExample& ex) const override;
  Turn first_turn(const std::vector<TokenIds>& story, const TokenIds& question,
                  std::size_t max_len = kDefaultMaxLen) const override;
  Turn feedback_turn(const TurnState& state, const TokenIds& feedback,
                     std::size_t max_len = kDefaultMaxLen) const override;

  const EncDecParams& params() const { return params_; }
  EncDecParams& params() { return params_; }

 private:
  EncDecParams params_;
};

}  // namespace can
