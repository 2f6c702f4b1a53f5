#include "can/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "can/error.hpp"
#include "can/ibabi.hpp"

namespace can {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(std::size_t a, std::size_t b) {
  return b == 0 ? kNaN : static_cast<double>(a) / static_cast<double>(b);
}

Tokens strip_period(Tokens t) {
  if (!t.empty() && t.back() == kPeriod) t.pop_back();
  return t;
}

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

// Fewest chunks over alignments with `target` matches.
struct ChunkSearch {
  const Tokens& cand;
  const Tokens& ref;
  std::size_t target;
  std::vector<bool> used;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::size_t budget = 2'000'000;

  void run(std::size_t i, std::size_t matched, std::size_t chunks, std::ptrdiff_t prev_ref) {
    if (budget == 0 || chunks >= best) return;
    --budget;
    if (matched == target) {
      best = chunks;
      return;
    }
    if (i == cand.size() || matched + (cand.size() - i) < target) return;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != cand[i]) continue;
      used[j] = true;
      const bool extends = prev_ref >= 0 && static_cast<std::ptrdiff_t>(j) == prev_ref + 1;
      run(i + 1, matched + 1, chunks + (extends ? 0 : 1), static_cast<std::ptrdiff_t>(j));
      used[j] = false;
    }
    run(i + 1, matched, chunks, -1);
  }
};

}  // namespace

double eval_qa(const QaModel& model, const Dataset& data, std::size_t max_len) {
  if (data.examples.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& text : data.texts()) {
    const StoryExample ex = encode_example(text, model.vocab());
    try {
      const Turn t = model.first_turn(ex.sentences, ex.question, max_len);
      const bool ok = t.kind == OutputKind::Answer &&
                      strip_period(model.vocab().decode(t.tokens)) == strip_period(text.answer);
      wrong += !ok;
    } catch (const Error&) {
      ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.examples.size());
}

Tokens simulate_user(const Tokens& sq, const std::vector<Tokens>& story, const Tokens& question, int task,
                     std::mt19937_64& rng) {
  const auto referents = feedback_referents(task, story, question, sq);
  if (referents.empty()) throw Error(ErrorCode::NoValidReferent, "nothing in the story answers '" + join(sq) + "'");
  if (task != 7) {
    return referents[std::uniform_int_distribution<std::size_t>(0, referents.size() - 1)(rng)];
  }
  if (referents.size() >= 63) throw Error(ErrorCode::NoValidReferent, "too many referents");
  const std::uint64_t mask =
      std::uniform_int_distribution<std::uint64_t>(1, (std::uint64_t{1} << referents.size()) - 1)(rng);
  std::vector<Tokens> chosen;
  for (std::size_t i = 0; i < referents.size(); ++i)
    if (mask >> i & 1U) chosen.push_back(referents[i]);
  std::shuffle(chosen.begin(), chosen.end(), rng);
  Tokens out;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (i) out.emplace_back(",");
    out.insert(out.end(), chosen[i].begin(), chosen[i].end());
  }
  return out;
}

EvalReport eval_iqa(const QaModel& model, const Dataset& data, std::uint64_t seed, std::size_t max_len) {
  EvalReport r;
  const auto texts = data.texts();
  double bleu1_sum = 0.0, bleu4_sum = 0.0, meteor_sum = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const TextExample& text = texts[i];
    const StoryExample ex = encode_example(text, model.vocab());
    ExampleTranscript tr;
    tr.index = i;
    tr.iqa = text.is_iqa();
    ++(tr.iqa ? r.n_s : r.n_a);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    try {
      const Turn first = model.first_turn(ex.sentences, ex.question, max_len);
      tr.first = model.vocab().decode(first.tokens);
      tr.attention_before = first.attention;
      if (first.kind == OutputKind::SupplementaryQuestion) {
        if (tr.iqa) {
          tr.sq_exact = *tr.first == *text.supplementary_question;
          bleu1_sum += bleu(*tr.first, *text.supplementary_question, 1);
          bleu4_sum += bleu(*tr.first, *text.supplementary_question, 4);
          meteor_sum += meteor_lite(*tr.first, *text.supplementary_question);
          ++r.n_scored_sq;
        }
        tr.feedback = simulate_user(*tr.first, text.sentences, text.question, data.info.task, rng);
        const Turn second = model.feedback_turn(first.state, model.vocab().encode(*tr.feedback), max_len);
        tr.answer = model.vocab().decode(second.tokens);
        tr.attention_after = second.attention;
        tr.gold = oracle_answer(data.info.task, text.sentences, text.question, tr.feedback);
        tr.correct = *tr.answer == *tr.gold;
      } else {
        tr.answer = tr.first;
        // An ambiguous question answered without asking has no defined gold answer.
        if (!tr.iqa) {
          tr.gold = text.answer;
          tr.correct = *tr.answer == *tr.gold;
        }
      }
    } catch (const Error& e) {
      tr.error = e.what();
    }
    if (tr.iqa && tr.sq_exact) ++r.n_s_hat;
    if (!tr.iqa && tr.first && classify_output(*tr.first) == OutputKind::Answer) ++r.n_a_hat;
    r.n_correct += tr.correct;
    r.transcripts.push_back(std::move(tr));
  }
  r.n = texts.size();
  r.accuracy = r.n ? static_cast<double>(r.n_correct) / static_cast<double>(r.n) : kNaN;
  r.error_rate = 1.0 - r.accuracy;
  r.sque_acc = ratio(r.n_s_hat, r.n_s);
  r.ans_acc = ratio(r.n_a_hat, r.n_a);
  r.sque_ans_acc = ratio(r.n_s_hat + r.n_a_hat, r.n);
  r.bleu1 = r.n_scored_sq ? bleu1_sum / static_cast<double>(r.n_scored_sq) : kNaN;
  r.bleu4 = r.n_scored_sq ? bleu4_sum / static_cast<double>(r.n_scored_sq) : kNaN;
  r.meteor = r.n_scored_sq ? meteor_sum / static_cast<double>(r.n_scored_sq) : kNaN;
  return r;
}

double bleu(const Tokens& candidate, const Tokens& reference, int max_n) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "BLEU needs a nonempty reference");
  if (max_n < 1) throw Error(ErrorCode::InvalidConfig, "BLEU order must be at least 1");
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto un = static_cast<std::size_t>(n);
    if (candidate.size() < un) return 0.0;
    const auto cand = ngrams(candidate, un);
    const auto ref = ngrams(reference, un);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) clipped += std::min(count, it->second);
    }
    if (clipped == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(candidate.size() - un + 1));
  }
  const double c = static_cast<double>(candidate.size());
  const double rl = static_cast<double>(reference.size());
  const double bp = c < rl ? std::exp(1.0 - rl / c) : 1.0;
  return bp * std::exp(log_sum / max_n);
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  if (reference.empty()) throw Error(ErrorCode::EmptyReference, "METEOR needs a nonempty reference");
  std::map<std::string, std::size_t> ref_counts, cand_counts;
  for (const auto& t : reference) ++ref_counts[t];
  for (const auto& t : candidate) ++cand_counts[t];
  std::size_t m = 0;
  for (const auto& [tok, c] : cand_counts)
    if (auto it = ref_counts.find(tok); it != ref_counts.end()) m += std::min(c, it->second);
  if (m == 0) return 0.0;
  ChunkSearch search{candidate, reference, m, std::vector<bool>(reference.size(), false)};
  search.run(0, 0, 0, -1);
  const double md = static_cast<double>(m);
  const double P = md / static_cast<double>(candidate.size());
  const double R = md / static_cast<double>(reference.size());
  const double F = 10.0 * P * R / (R + 9.0 * P);
  const double frag = static_cast<double>(search.best) / md;
  return F * (1.0 - 0.5 * frag * frag * frag);
}

nlohmann::json report_to_json(const EvalReport& r, bool with_transcripts) {
  auto num = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
  nlohmann::json j = {
      {"n", r.n},
      {"n_s", r.n_s},
      {"n_a", r.n_a},
      {"n_s_hat", r.n_s_hat},
      {"n_a_hat", r.n_a_hat},
      {"n_correct", r.n_correct},
      {"n_scored_sq", r.n_scored_sq},
      {"accuracy", num(r.accuracy)},
      {"error_rate", num(r.error_rate)},
      {"sque_acc", num(r.sque_acc)},
      {"ans_acc", num(r.ans_acc)},
      {"sque_ans_acc", num(r.sque_ans_acc)},
      {"bleu1", num(r.bleu1)},
      {"bleu4", num(r.bleu4)},
      {"meteor", num(r.meteor)},
  };
  if (with_transcripts) {
    auto opt = [](const std::optional<Tokens>& t) { return t ? nlohmann::json(join(*t)) : nlohmann::json(nullptr); };
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : r.transcripts) {
      list.push_back({{"index", t.index},
                      {"iqa", t.iqa},
                      {"first", opt(t.first)},
                      {"feedback", opt(t.feedback)},
                      {"answer", opt(t.answer)},
                      {"gold", opt(t.gold)},
                      {"correct", t.correct},
                      {"sq_exact", t.sq_exact},
                      {"error", t.error ? nlohmann::json(*t.error) : nlohmann::json(nullptr)},
                      {"attention_before", t.attention_before},
                      {"attention_after", t.attention_after}});
    }
    j["transcripts"] = std::move(list);
  }
  return j;
}

}  // namespace can
