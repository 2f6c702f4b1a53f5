#include "can/model.hpp"

#include "can/can.hpp"
#include "can/encdec.hpp"
#include "can/error.hpp"

namespace can {

std::string to_string(ModelKind kind) { return kind == ModelKind::Can ? "can" : "encdec"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "can") return ModelKind::Can;
  if (s == "encdec") return ModelKind::EncDec;
  throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + s + "' (expected can or encdec)");
}

std::string to_string(OutputKind kind) {
  return kind == OutputKind::Answer ? "answer" : "supplementary_question";
}

OutputKind classify_output(const TokenIds& tokens) {
  if (!tokens.empty() && tokens.back() == kQuestionMarkId) return OutputKind::SupplementaryQuestion;
  if (!tokens.empty() && tokens.back() == kPeriodId) return OutputKind::Answer;
  throw Error(ErrorCode::NoEosToken, "output does not end in '?' or '.'");
}

OutputKind classify_output(const Tokens& tokens) {
  if (!tokens.empty() && tokens.back() == kQuestionMark) return OutputKind::SupplementaryQuestion;
  if (!tokens.empty() && tokens.back() == kPeriod) return OutputKind::Answer;
  throw Error(ErrorCode::NoEosToken, "output does not end in '?' or '.'");
}

std::vector<const ad::Parameter*> QaModel::parameters() const {
  auto mutable_params = const_cast<QaModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t QaModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

std::unique_ptr<QaModel> make_model(ModelKind kind, Vocabulary vocab, ModelDims dims) {
  if (kind == ModelKind::Can) return std::make_unique<CanModel>(std::move(vocab), dims);
  return std::make_unique<EncDecModel>(std::move(vocab), dims);
}

Transcript answer_question(const QaModel& model, const std::vector<TokenIds>& story, const TokenIds& question,
                           const FeedbackProvider& provider, std::size_t max_len) {
  Transcript t{model.first_turn(story, question, max_len), std::nullopt, std::nullopt};
  if (!t.asked()) return t;
  auto fb = provider(t.first.tokens);
  if (!fb) throw Error(ErrorCode::FeedbackRefused, "no feedback for the supplementary question");
  if (fb->empty()) throw Error(ErrorCode::EmptyFeedback, "feedback has no tokens");
  t.feedback = *fb;
  t.second = model.feedback_turn(t.first.state, *fb, max_len);
  return t;
}

}  // namespace can
