#include "can/decoder.hpp"

#include "can/error.hpp"

namespace can {

namespace {

ad::Parameter zeros(const std::string& name, ad::Shape shape) { return {name, ad::Tensor(shape)}; }

ad::Var zero_state(ad::Tape& tape, std::size_t n) { return tape.constant(ad::Tensor(ad::Shape::vec(n))); }

ad::Var output_distribution(ad::Tape& tape, const DecoderParams& p, ad::Var z) {
  return ad::softmax(ad::add(ad::matmul(tape.param(p.W_od), z), tape.param(p.b_o)));
}

}  // namespace

DecoderParams::DecoderParams(const std::string& prefix, std::size_t K_o, std::size_t context_size, std::size_t K_w,
                             std::size_t vocab_size)
    : gru(prefix + ".gru", K_o, context_size + K_w),
      W_od(zeros(prefix + ".W_od", ad::Shape::mat(vocab_size, K_o))),
      b_o(zeros(prefix + ".b_o", ad::Shape::vec(vocab_size))) {}

std::vector<ad::Parameter*> DecoderParams::parameters() {
  auto ps = gru.parameters();
  ps.push_back(&W_od);
  ps.push_back(&b_o);
  return ps;
}

DecodeResult decode_greedy(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p, ad::Var context,
                           std::size_t max_len, bool allow_question) {
  if (max_len == 0) throw Error(ErrorCode::InvalidConfig, "max_len must be at least 1");
  ad::Var table = tape.param(W_w);
  ad::Var z = zero_state(tape, p.gru.hidden());
  TokenId prev = kGoId;
  DecodeResult out;
  for (std::size_t k = 0; k < max_len; ++k) {
    z = gru_step(tape, p.gru, z, ad::concat(context, ad::embedding(table, prev)));
    ad::Var probs = output_distribution(tape, p, z);
    const auto values = probs.values();
    std::size_t best = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!allow_question && i == kQuestionMarkId) continue;
      if (best == values.size() || values[i] > values[best]) best = i;
    }
    out.tokens.push_back(static_cast<TokenId>(best));
    out.probs.push_back(probs);
    if (best == kQuestionMarkId || best == kPeriodId) {
      out.kind = classify_output(out.tokens);
      return out;
    }
    prev = static_cast<TokenId>(best);
  }
  throw Error(ErrorCode::NoEosEmitted, "no '?' or '.' within " + std::to_string(max_len) + " tokens");
}

std::vector<ad::Var> decode_teacher(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p,
                                    ad::Var context, const TokenIds& target) {
  if (target.empty()) throw Error(ErrorCode::EmptySequence, "teacher forcing needs a target");
  ad::Var table = tape.param(W_w);
  ad::Var z = zero_state(tape, p.gru.hidden());
  std::vector<ad::Var> probs;
  probs.reserve(target.size());
  TokenId prev = kGoId;
  for (TokenId t : target) {
    z = gru_step(tape, p.gru, z, ad::concat(context, ad::embedding(table, prev)));
    probs.push_back(output_distribution(tape, p, z));
    prev = t;
  }
  return probs;
}

ad::Var sequence_loss(ad::Tape& tape, const ad::Parameter& W_w, const DecoderParams& p, ad::Var context,
                      const TokenIds& target) {
  const auto probs = decode_teacher(tape, W_w, p, context, target);
  ad::Var loss = ad::cross_entropy(probs[0], target[0]);
  for (std::size_t k = 1; k < target.size(); ++k) loss = ad::add(loss, ad::cross_entropy(probs[k], target[k]));
  return loss;
}

}  // namespace can
