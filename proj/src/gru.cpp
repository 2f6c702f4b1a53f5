#include "can/gru.hpp"

namespace can {

namespace {

ad::Parameter zeros(const std::string& name, ad::Shape shape) { return {name, ad::Tensor(shape)}; }

}  // namespace

GruParams::GruParams(const std::string& prefix, std::size_t hidden, std::size_t input)
    : U_r(zeros(prefix + ".U_r", ad::Shape::mat(hidden, input))),
      U_z(zeros(prefix + ".U_z", ad::Shape::mat(hidden, input))),
      U_h(zeros(prefix + ".U_h", ad::Shape::mat(hidden, input))),
      W_r(zeros(prefix + ".W_r", ad::Shape::mat(hidden, hidden))),
      W_z(zeros(prefix + ".W_z", ad::Shape::mat(hidden, hidden))),
      W_h(zeros(prefix + ".W_h", ad::Shape::mat(hidden, hidden))),
      b_r(zeros(prefix + ".b_r", ad::Shape::vec(hidden))),
      b_z(zeros(prefix + ".b_z", ad::Shape::vec(hidden))),
      b_h(zeros(prefix + ".b_h", ad::Shape::vec(hidden))) {}

std::vector<ad::Parameter*> GruParams::parameters() {
  return {&U_r, &U_z, &U_h, &W_r, &W_z, &W_h, &b_r, &b_z, &b_h};
}

std::vector<const ad::Parameter*> GruParams::parameters() const {
  return {&U_r, &U_z, &U_h, &W_r, &W_z, &W_h, &b_r, &b_z, &b_h};
}

ad::Var gru_step(ad::Tape& tape, const GruParams& p, ad::Var h_prev, ad::Var x) {
  const std::size_t k = p.hidden();
  if (h_prev.shape() != ad::Shape::vec(k) || x.shape() != ad::Shape::vec(p.input())) {
    throw Error(ErrorCode::ShapeMismatch, "gru_step: state " + h_prev.shape().str() + ", input " + x.shape().str() +
                                              " for K=" + std::to_string(k) + " D=" + std::to_string(p.input()));
  }
  auto gate = [&](const ad::Parameter& U, const ad::Parameter& W, const ad::Parameter& b, ad::Var h) {
    return ad::add(ad::add(ad::matmul(tape.param(U), x), ad::matmul(tape.param(W), h)), tape.param(b));
  };
  ad::Var r = ad::sigmoid(gate(p.U_r, p.W_r, p.b_r, h_prev));
  ad::Var z = ad::sigmoid(gate(p.U_z, p.W_z, p.b_z, h_prev));
  ad::Var candidate = ad::tanh(gate(p.U_h, p.W_h, p.b_h, ad::mul(r, h_prev)));
  ad::Var ones = tape.constant(ad::Tensor(ad::Shape::vec(k), std::vector<double>(k, 1.0)));
  return ad::add(ad::mul(z, h_prev), ad::mul(ad::sub(ones, z), candidate));
}

std::vector<ad::Var> gru_sequence(ad::Tape& tape, const GruParams& p, ad::Var h0, std::span<const ad::Var> xs) {
  if (xs.empty()) throw Error(ErrorCode::EmptySequence, "gru_sequence needs at least one input");
  std::vector<ad::Var> states;
  states.reserve(xs.size());
  ad::Var h = h0;
  for (const ad::Var& x : xs) {
    h = gru_step(tape, p, h, x);
    states.push_back(h);
  }
  return states;
}

}  // namespace can
