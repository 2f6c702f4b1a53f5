#include "can/encdec.hpp"

#include "can/error.hpp"

namespace can {

namespace {

ad::Parameter zeros(const std::string& name, ad::Shape shape) { return {name, ad::Tensor(shape)}; }

void check_story(const std::vector<TokenIds>& story, const TokenIds& question) {
  if (question.empty()) throw Error(ErrorCode::EmptyQuestion, "question has no tokens");
  if (story.empty()) throw Error(ErrorCode::EmptyStory, "story has no sentences");
  for (std::size_t t = 0; t < story.size(); ++t)
    if (story[t].empty()) throw Error(ErrorCode::EmptySentence, "sentence " + std::to_string(t + 1) + " is empty");
}

ad::Var context_of(ad::Tape& tape, const EncDecParams& p, const TokenIds& input) {
  return encdec_encode(tape, p, input).back();
}

}  // namespace

EncDecParams::EncDecParams(const ModelDims& d, std::size_t V)
    : W_w(zeros("W_w", ad::Shape::mat(d.K_w, V))), enc("enc", d.K_h, d.K_w), dec("dec", d.K_o, d.K_h, d.K_w, V) {}

std::vector<ad::Parameter*> EncDecParams::parameters() {
  std::vector<ad::Parameter*> ps{&W_w};
  for (auto* q : enc.parameters()) ps.push_back(q);
  for (auto* q : dec.parameters()) ps.push_back(q);
  return ps;
}

TokenIds encdec_input(const std::vector<TokenIds>& story, const TokenIds& question, const TokenIds& extra) {
  TokenIds seq;
  for (const auto& s : story) seq.insert(seq.end(), s.begin(), s.end());
  seq.insert(seq.end(), question.begin(), question.end());
  seq.insert(seq.end(), extra.begin(), extra.end());
  return seq;
}

std::vector<ad::Var> encdec_encode(ad::Tape& tape, const EncDecParams& p, const TokenIds& input) {
  ad::Var table = tape.param(p.W_w);
  std::vector<ad::Var> xs;
  xs.reserve(input.size());
  for (TokenId id : input) xs.push_back(ad::embedding(table, id));
  return gru_sequence(tape, p.enc, tape.constant(ad::Tensor(ad::Shape::vec(p.enc.hidden()))), xs);
}

EncDecModel::EncDecModel(Vocabulary vocab, ModelDims dims)
    : QaModel(std::move(vocab), dims), params_(dims, this->vocab().size()) {}

ad::Var EncDecModel::example_loss(ad::Tape& tape, const StoryExample& ex) const {
  const TokenIds input = encdec_input(ex.sentences, ex.question);
  if (!ex.is_iqa()) return sequence_loss(tape, params_.W_w, params_.dec, context_of(tape, params_, input), ex.answer);
  if (!ex.feedback) throw Error(ErrorCode::EmptyFeedback, "IQA example without feedback");
  ad::Var ask =
      sequence_loss(tape, params_.W_w, params_.dec, context_of(tape, params_, input), *ex.supplementary_question);
  ad::Var second = context_of(tape, params_, encdec_input(ex.sentences, ex.question, *ex.feedback));
  return ad::add(ask, sequence_loss(tape, params_.W_w, params_.dec, second, ex.answer));
}

Turn EncDecModel::first_turn(const std::vector<TokenIds>& story, const TokenIds& question,
                             std::size_t max_len) const {
  check_story(story, question);
  ad::Tape tape(false);
  auto d = decode_greedy(tape, params_.W_w, params_.dec, context_of(tape, params_, encdec_input(story, question)),
                         max_len, true);
  Turn t;
  t.kind = d.kind;
  t.tokens = std::move(d.tokens);
  t.state.story = story;
  t.state.question = question;
  return t;
}

Turn EncDecModel::feedback_turn(const TurnState& state, const TokenIds& feedback, std::size_t max_len) const {
  if (feedback.empty()) throw Error(ErrorCode::EmptyFeedback, "feedback has no tokens");
  ad::Tape tape(false);
  const TokenIds input = encdec_input(state.story, state.question, feedback);
  auto d = decode_greedy(tape, params_.W_w, params_.dec, context_of(tape, params_, input), max_len, false);
  Turn t;
  t.kind = d.kind;
  t.tokens = std::move(d.tokens);
  t.state = state;
  return t;
}

}  // namespace can
