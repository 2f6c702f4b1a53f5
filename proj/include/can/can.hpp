#pragma once

// Context-aware attention network: question attention, context-aware word and
// sentence attention, and the feedback-driven attention refinement.

#include <vector>

#include "can/decoder.hpp"
#include "can/gru.hpp"
#include "can/model.hpp"

namespace can {

struct CanParams {
  CanParams() = default;
  CanParams(const ModelDims& dims, std::size_t vocab_size);

  std::vector<ad::Parameter*> parameters();

  ad::Parameter W_w;  // K_w x V, shared by every path
  GruParams gru_w;    // K_h over K_w: question, sentence and feedback words
  GruParams gru_s;    // K_c over K_h: sentences
  ad::Parameter v;    // K_h
  ad::Parameter W_ch, b_c_q;
  ad::Parameter W_ee, W_es, W_eh, b_e1, b_e2;
  ad::Parameter W_rf, b_r_f;
  DecoderParams dec;  // context K_c
};

struct QuestionEncoding {
  std::vector<ad::Var> g;
  ad::Var gamma;
  ad::Var u;
};

struct SentenceEncoding {
  std::vector<ad::Var> h;
  std::vector<ad::Var> e;
  ad::Var alpha;
  ad::Var y;
};

struct ContextEncoding {
  std::vector<ad::Var> s;
  ad::Var S;  // s stacked as rows
  ad::Var beta;
  ad::Var m;
  std::vector<SentenceEncoding> sentences;
};

struct FeedbackEncoding {
  std::vector<ad::Var> g;
  ad::Var f;
  ad::Var r;
};

struct RefinedAttention {
  ad::Var beta;
  ad::Var m;
};

QuestionEncoding encode_question(ad::Tape& tape, const CanParams& p, const TokenIds& q);
SentenceEncoding encode_sentence(ad::Tape& tape, const CanParams& p, const TokenIds& sent, ad::Var s_prev,
                                 ad::Var u);
ContextEncoding encode_story(ad::Tape& tape, const CanParams& p, const std::vector<TokenIds>& sentences, ad::Var u);
FeedbackEncoding encode_feedback(ad::Tape& tape, const CanParams& p, const TokenIds& fb);
// beta' = softmax(S u + S r), m' = S^T beta'.
RefinedAttention refine_attention(ad::Var u, ad::Var r, ad::Var S);

class CanModel final : public QaModel {
 public:
  CanModel(Vocabulary vocab, ModelDims dims);

  ModelKind kind() const override { return ModelKind::Can; }
  std::vector<ad::Parameter*> parameters() override { return params_.parameters(); }
  using QaModel::parameters;

  ad::Var example_loss(ad::Tape& tape, const StoryExample& ex) const override;
  Turn first_turn(const std::vector<TokenIds>& story, const TokenIds& question,
                  std::size_t max_len = kDefaultMaxLen) const override;
  Turn feedback_turn(const TurnState& state, const TokenIds& feedback,
                     std::size_t max_len = kDefaultMaxLen) const override;

  const CanParams& params() const { return params_; }
  CanParams& params() { return params_; }

 private:
  CanParams params_;
};

}  // namespace can
