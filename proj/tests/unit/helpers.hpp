#pragma once

// Straight-line reference math and small fixtures shared by the unit tests.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "can/autodiff.hpp"
#include "can/gru.hpp"
#include "can/model.hpp"
#include "can/text.hpp"

namespace testing {

using Vec = std::vector<double>;

inline void fill_random(can::ad::Parameter& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (double& x : p.value.data()) x = d(rng);
}

inline void randomize(std::vector<can::ad::Parameter*> params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  for (auto* p : params) fill_random(*p, rng, scale);
}

// y = W x for a row-major rows x cols matrix.
inline Vec mv(const can::ad::Parameter& W, const Vec& x) {
  const auto& s = W.value.shape();
  Vec y(s.rows(), 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) y[i] += W.value.at(i, j) * x[j];
  return y;
}

inline Vec vals(const can::ad::Parameter& p) { return p.value.values(); }

inline Vec plus(const Vec& a, const Vec& b) {
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

inline Vec times(const Vec& a, const Vec& b) {
  Vec c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

inline Vec scaled(const Vec& a, double s) {
  Vec c(a);
  for (double& x : c) x *= s;
  return c;
}

inline Vec sig(Vec a) {
  for (double& x : a) x = 1.0 / (1.0 + std::exp(-x));
  return a;
}

inline Vec th(Vec a) {
  for (double& x : a) x = std::tanh(x);
  return a;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec softmax(const Vec& a) {
  double mx = a[0];
  for (double x : a) mx = std::max(mx, x);
  Vec e(a.size());
  double z = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) z += e[i] = std::exp(a[i] - mx);
  for (double& x : e) x /= z;
  return e;
}

inline double sum(const Vec& a) {
  double s = 0.0;
  for (double x : a) s += x;
  return s;
}

inline Vec column(const can::ad::Parameter& table, std::size_t j) {
  const auto& s = table.value.shape();
  Vec c(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) c[i] = table.value.at(i, j);
  return c;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Vec gru_ref(const can::GruParams& p, const Vec& h, const Vec& x) {
  const Vec r = sig(plus(plus(mv(p.U_r, x), mv(p.W_r, h)), vals(p.b_r)));
  const Vec z = sig(plus(plus(mv(p.U_z, x), mv(p.W_z, h)), vals(p.b_z)));
  const Vec c = th(plus(plus(mv(p.U_h, x), mv(p.W_h, times(r, h))), vals(p.b_h)));
  Vec out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = z[i] * h[i] + (1.0 - z[i]) * c[i];
  return out;
}

// A tiny vocabulary covering the toy stories used across tests.
inline can::Vocabulary toy_vocab() {
  const std::vector<can::Tokens> corpus = {
      can::tokenize("mary moved to the bathroom ."), can::tokenize("john went to the hallway ."),
      can::tokenize("where is mary ?"), can::tokenize("who is she ?"), can::tokenize("sandra daniel")};
  return can::Vocabulary::build(corpus);
}

// Answers from a lookup keyed by the question; asks `sq` when the question is
// listed in `ambiguous` and then answers per feedback.
class ScriptedModel final : public can::QaModel {
 public:
  ScriptedModel(can::Vocabulary vocab) : QaModel(std::move(vocab), {2, 2, 2, 2}) {}

  std::map<can::TokenIds, can::TokenIds> answers;
  std::map<can::TokenIds, can::TokenIds> questions;         // question -> SQ
  std::map<can::TokenIds, can::TokenIds> after_feedback;    // feedback -> answer
  mutable int first_calls = 0;
  mutable int feedback_calls = 0;

  can::ModelKind kind() const override { return can::ModelKind::Can; }
  std::vector<can::ad::Parameter*> parameters() override { return {}; }
  using QaModel::parameters;
  can::ad::Var example_loss(can::ad::Tape& tape, const can::StoryExample&) const override {
    return tape.constant(can::ad::Tensor::scalar(0.0));
  }
  can::Turn first_turn(const std::vector<can::TokenIds>& story, const can::TokenIds& q,
                       std::size_t) const override {
    ++first_calls;
    can::Turn t;
    t.state.story = story;
    t.state.question = q;
    t.attention.assign(story.size(), 1.0 / static_cast<double>(story.size()));
    t.state.beta = t.attention;
    if (auto it = questions.find(q); it != questions.end()) {
      t.tokens = it->second;
    } else if (auto a = answers.find(q); a != answers.end()) {
      t.tokens = a->second;
    } else {
      t.tokens = {can::kPeriodId};
    }
    t.kind = can::classify_output(t.tokens);
    return t;
  }
  can::Turn feedback_turn(const can::TurnState& state, const can::TokenIds& fb, std::size_t) const override {
    ++feedback_calls;
    can::Turn t;
    t.state = state;
    t.attention.assign(state.story.size(), 0.0);
    t.attention.back() = 1.0;
    auto it = after_feedback.find(fb);
    t.tokens = it == after_feedback.end() ? can::TokenIds{can::kPeriodId} : it->second;
    t.kind = can::OutputKind::Answer;
    return t;
  }
};

}  // namespace testing
