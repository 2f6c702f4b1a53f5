#include "can/can.hpp"

#include "can/error.hpp"

namespace can {

namespace {

ad::Parameter zeros(const std::string& name, ad::Shape shape) { return {name, ad::Tensor(shape)}; }

ad::Var zero_state(ad::Tape& tape, std::size_t n) { return tape.constant(ad::Tensor(ad::Shape::vec(n))); }

std::vector<ad::Var> embed(ad::Tape& tape, const ad::Parameter& W_w, const TokenIds& ids) {
  ad::Var table = tape.param(W_w);
  std::vector<ad::Var> xs;
  xs.reserve(ids.size());
  for (TokenId id : ids) xs.push_back(ad::embedding(table, id));
  return xs;
}

std::vector<ad::Var> word_annotations(ad::Tape& tape, const CanParams& p, const TokenIds& ids) {
  const auto xs = embed(tape, p.W_w, ids);
  return gru_sequence(tape, p.gru_w, zero_state(tape, p.gru_w.hidden()), xs);
}

// Attention over the rows of M with query q: (softmax(M q), M^T softmax(M q)).
std::pair<ad::Var, ad::Var> attend(ad::Var M, ad::Var logits) {
  ad::Var w = ad::softmax(logits);
  return {w, ad::matmul(ad::transpose(M), w)};
}

std::vector<double> values_of(ad::Var v) { return {v.values().begin(), v.values().end()}; }

void check_story(const std::vector<TokenIds>& story, const TokenIds& question) {
  if (question.empty()) throw Error(ErrorCode::EmptyQuestion, "question has no tokens");
  if (story.empty()) throw Error(ErrorCode::EmptyStory, "story has no sentences");
  for (std::size_t t = 0; t < story.size(); ++t)
    if (story[t].empty()) throw Error(ErrorCode::EmptySentence, "sentence " + std::to_string(t + 1) + " is empty");
}

}  // namespace

CanParams::CanParams(const ModelDims& d, std::size_t V)
    : W_w(zeros("W_w", ad::Shape::mat(d.K_w, V))),
      gru_w("gru_w", d.K_h, d.K_w),
      gru_s("gru_s", d.K_c, d.K_h),
      v(zeros("v", ad::Shape::vec(d.K_h))),
      W_ch(zeros("W_ch", ad::Shape::mat(d.K_c, d.K_h))),
      b_c_q(zeros("b_c_q", ad::Shape::vec(d.K_c))),
      W_ee(zeros("W_ee", ad::Shape::mat(d.K_c, d.K_c))),
      W_es(zeros("W_es", ad::Shape::mat(d.K_c, d.K_c))),
      W_eh(zeros("W_eh", ad::Shape::mat(d.K_c, d.K_h))),
      b_e1(zeros("b_e1", ad::Shape::vec(d.K_c))),
      b_e2(zeros("b_e2", ad::Shape::vec(d.K_c))),
      W_rf(zeros("W_rf", ad::Shape::mat(d.K_c, d.K_h))),
      b_r_f(zeros("b_r_f", ad::Shape::vec(d.K_c))),
      dec("dec", d.K_o, d.K_c, d.K_w, V) {}

std::vector<ad::Parameter*> CanParams::parameters() {
  std::vector<ad::Parameter*> ps{&W_w};
  for (auto* q : gru_w.parameters()) ps.push_back(q);
  for (auto* q : gru_s.parameters()) ps.push_back(q);
  for (auto* q : {&v, &W_ch, &b_c_q, &W_ee, &W_es, &W_eh, &b_e1, &b_e2, &W_rf, &b_r_f}) ps.push_back(q);
  for (auto* q : dec.parameters()) ps.push_back(q);
  return ps;
}

QuestionEncoding encode_question(ad::Tape& tape, const CanParams& p, const TokenIds& q) {
  if (q.empty()) throw Error(ErrorCode::EmptyQuestion, "question has no tokens");
  QuestionEncoding out;
  out.g = word_annotations(tape, p, q);
  ad::Var G = ad::stack_rows(out.g);
  auto [gamma, pooled] = attend(G, ad::matmul(G, tape.param(p.v)));
  out.gamma = gamma;
  out.u = ad::add(ad::matmul(tape.param(p.W_ch), pooled), tape.param(p.b_c_q));
  return out;
}

SentenceEncoding encode_sentence(ad::Tape& tape, const CanParams& p, const TokenIds& sent, ad::Var s_prev,
                                 ad::Var u) {
  if (sent.empty()) throw Error(ErrorCode::EmptySentence, "sentence has no tokens");
  SentenceEncoding out;
  out.h = word_annotations(tape, p, sent);
  ad::Var context = ad::add(ad::matmul(tape.param(p.W_es), s_prev), tape.param(p.b_e1));
  ad::Var W_ee = tape.param(p.W_ee), W_eh = tape.param(p.W_eh), b_e2 = tape.param(p.b_e2);
  out.e.reserve(out.h.size());
  for (const ad::Var& h : out.h) {
    ad::Var hidden = ad::tanh(ad::add(context, ad::matmul(W_eh, h)));
    out.e.push_back(ad::sigmoid(ad::add(ad::matmul(W_ee, hidden), b_e2)));
  }
  ad::Var H = ad::stack_rows(out.h);
  auto [alpha, y] = attend(H, ad::matmul(ad::stack_rows(out.e), u));
  out.alpha = alpha;
  out.y = y;
  return out;
}

ContextEncoding encode_story(ad::Tape& tape, const CanParams& p, const std::vector<TokenIds>& sentences, ad::Var u) {
  if (sentences.empty()) throw Error(ErrorCode::EmptyStory, "story has no sentences");
  ContextEncoding out;
  ad::Var s = zero_state(tape, p.gru_s.hidden());
  for (const auto& sent : sentences) {
    out.sentences.push_back(encode_sentence(tape, p, sent, s, u));
    s = gru_step(tape, p.gru_s, s, out.sentences.back().y);
    out.s.push_back(s);
  }
  out.S = ad::stack_rows(out.s);
  auto [beta, m] = attend(out.S, ad::matmul(out.S, u));
  out.beta = beta;
  out.m = m;
  return out;
}

FeedbackEncoding encode_feedback(ad::Tape& tape, const CanParams& p, const TokenIds& fb) {
  if (fb.empty()) throw Error(ErrorCode::EmptyFeedback, "feedback has no tokens");
  FeedbackEncoding out;
  out.g = word_annotations(tape, p, fb);
  const double w = 1.0 / static_cast<double>(out.g.size());
  ad::Var weights = tape.constant(ad::Tensor(ad::Shape::vec(out.g.size()), std::vector<double>(out.g.size(), w)));
  out.f = ad::matmul(ad::transpose(ad::stack_rows(out.g)), weights);
  out.r = ad::tanh(ad::add(ad::matmul(tape.param(p.W_rf), out.f), tape.param(p.b_r_f)));
  return out;
}

RefinedAttention refine_attention(ad::Var u, ad::Var r, ad::Var S) {
  if (S.shape().rank() != 2 || S.shape().rows() == 0)
    throw Error(ErrorCode::EmptyStory, "no sentence annotations to refine");
  auto [beta, m] = attend(S, ad::add(ad::matmul(S, u), ad::matmul(S, r)));
  return {beta, m};
}

CanModel::CanModel(Vocabulary vocab, ModelDims dims)
    : QaModel(std::move(vocab), dims), params_(dims, this->vocab().size()) {}

ad::Var CanModel::example_loss(ad::Tape& tape, const StoryExample& ex) const {
  const auto q = encode_question(tape, params_, ex.question);
  const auto ctx = encode_story(tape, params_, ex.sentences, q.u);
  if (!ex.is_iqa()) return sequence_loss(tape, params_.W_w, params_.dec, ad::add(ctx.m, q.u), ex.answer);
  if (!ex.feedback) throw Error(ErrorCode::EmptyFeedback, "IQA example without feedback");
  ad::Var ask = sequence_loss(tape, params_.W_w, params_.dec, ad::add(ctx.m, q.u), *ex.supplementary_question);
  const auto fb = encode_feedback(tape, params_, *ex.feedback);
  const auto refined = refine_attention(q.u, fb.r, ctx.S);
  return ad::add(ask, sequence_loss(tape, params_.W_w, params_.dec, ad::add(refined.m, q.u), ex.answer));
}

Turn CanModel::first_turn(const std::vector<TokenIds>& story, const TokenIds& question, std::size_t max_len) const {
  check_story(story, question);
  ad::Tape tape(false);
  const auto q = encode_question(tape, params_, question);
  const auto ctx = encode_story(tape, params_, story, q.u);
  auto d = decode_greedy(tape, params_.W_w, params_.dec, ad::add(ctx.m, q.u), max_len, true);
  Turn t;
  t.kind = d.kind;
  t.tokens = std::move(d.tokens);
  t.attention = values_of(ctx.beta);
  t.state = {story, question, q.u.tensor(), ctx.S.tensor(), t.attention};
  return t;
}

Turn CanModel::feedback_turn(const TurnState& state, const TokenIds& feedback, std::size_t max_len) const {
  ad::Tape tape(false);
  const auto fb = encode_feedback(tape, params_, feedback);
  ad::Var u = tape.constant(state.u);
  const auto refined = refine_attention(u, fb.r, tape.constant(state.S));
  auto d = decode_greedy(tape, params_.W_w, params_.dec, ad::add(refined.m, u), max_len, false);
  Turn t;
  t.kind = d.kind;
  t.tokens = std::move(d.tokens);
  t.attention = values_of(refined.beta);
  t.state = state;
  return t;
}

}  // namespace can
