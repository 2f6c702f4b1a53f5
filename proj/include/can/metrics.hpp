#pragma once

// Test-time evaluation: QA error rate, interactive accuracy against simulated
// users, decision metrics for supplementary questions, BLEU and METEOR.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "can/model.hpp"
#include "can/text.hpp"

namespace can {

// Fraction of examples whose first decode is not exactly the reference answer.
double eval_qa(const QaModel& model, const Dataset& data, std::size_t max_len = kDefaultMaxLen);

// Feedback a simulated user gives to `sq`: a uniform referent for tasks 1 and
// 4, a uniformly drawn nonempty subset of the held objects for task 7 (in
// random order, joined with ","). Throws NoValidReferent.
Tokens simulate_user(const Tokens& sq, const std::vector<Tokens>& story, const Tokens& question, int task,
                     std::mt19937_64& rng);

struct ExampleTranscript {
  std::size_t index = 0;
  bool iqa = false;
  std::optional<Tokens> first;  // absent when decoding failed
  std::optional<Tokens> feedback;
  std::optional<Tokens> answer;
  std::optional<Tokens> gold;
  bool correct = false;
  bool sq_exact = false;
  std::optional<std::string> error;
  std::vector<double> attention_before;
  std::vector<double> attention_after;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t n_s = 0;       // IQA examples
  std::size_t n_a = 0;       // QA examples
  std::size_t n_s_hat = 0;   // IQA examples whose SQ matched the reference exactly
  std::size_t n_a_hat = 0;   // QA examples answered without an SQ
  std::size_t n_correct = 0;
  std::size_t n_scored_sq = 0;  // SQs scored by BLEU and METEOR
  double accuracy = 0.0;
  double error_rate = 0.0;
  double sque_acc = 0.0;     // NaN when n_s == 0
  double ans_acc = 0.0;      // NaN when n_a == 0
  double sque_ans_acc = 0.0;
  double bleu1 = 0.0;        // NaN when no SQ was scored
  double bleu4 = 0.0;
  double meteor = 0.0;
  std::vector<ExampleTranscript> transcripts;
};

// Runs the interactive loop on every example with simulate_user answering any
// SQ; the user's rng for example i is seeded from (seed, i). The gold answer
// is recomputed by the task oracle for the drawn feedback.
EvalReport eval_iqa(const QaModel& model, const Dataset& data, std::uint64_t seed,
                    std::size_t max_len = kDefaultMaxLen);

// Clipped n-gram precision up to max_n, geometric mean, brevity penalty, no
// smoothing. Throws EmptyReference.
double bleu(const Tokens& candidate, const Tokens& reference, int max_n);

// Exact-match METEOR: F = 10PR / (R + 9P), penalty 0.5 (chunks / m)^3 with the
// fewest chunks over maximum alignments. Throws EmptyReference.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

// Sorted keys; NaN fractions become null.
nlohmann::json report_to_json(const EvalReport& report, bool with_transcripts = false);

}  // namespace can
