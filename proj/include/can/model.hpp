#pragma once

// Common interface of the trainable question-answering models (CAN and the
// EncDec baseline) and the one-round interactive answering loop on top of it.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "can/autodiff.hpp"
#include "can/text.hpp"

namespace can {

enum class ModelKind { Can, EncDec };

std::string to_string(ModelKind kind);
// Accepts "can" and "encdec".
ModelKind model_kind_from_string(const std::string& s);

struct ModelDims {
  std::size_t K_w = 32;
  std::size_t K_h = 64;
  std::size_t K_c = 64;
  std::size_t K_o = 64;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

enum class OutputKind { Answer, SupplementaryQuestion };

std::string to_string(OutputKind kind);

// "?" ends a supplementary question, "." an answer. Throws NoEosToken otherwise.
OutputKind classify_output(const TokenIds& tokens);
OutputKind classify_output(const Tokens& tokens);

// What has to survive between emitting a supplementary question and
// receiving the feedback.
struct TurnState {
  std::vector<TokenIds> story;
  TokenIds question;
  ad::Tensor u;  // CAN only: question vector
  ad::Tensor S;  // CAN only: N x K_c sentence annotations
  std::vector<double> beta;
};

struct Turn {
  OutputKind kind = OutputKind::Answer;
  TokenIds tokens;                 // ends in "?" or "."
  std::vector<double> attention;   // sentence attention; empty for EncDec
  TurnState state;
};

inline constexpr std::size_t kDefaultMaxLen = 12;

class QaModel {
 public:
  QaModel(Vocabulary vocab, ModelDims dims) : vocab_(std::move(vocab)), dims_(dims) {}
  virtual ~QaModel() = default;
  QaModel(const QaModel&) = delete;
  QaModel& operator=(const QaModel&) = delete;

  virtual ModelKind kind() const = 0;
  const Vocabulary& vocab() const { return vocab_; }
  const ModelDims& dims() const { return dims_; }

  // Every trainable array in a fixed order (the checkpoint manifest order).
  virtual std::vector<ad::Parameter*> parameters() = 0;
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;

  // Teacher-forced cross-entropy summed over target tokens (and over both
  // passes for IQA examples).
  virtual ad::Var example_loss(ad::Tape& tape, const StoryExample& ex) const = 0;

  // Encodes and decodes once. Throws EmptyStory/EmptySentence/EmptyQuestion or
  // NoEosEmitted.
  virtual Turn first_turn(const std::vector<TokenIds>& story, const TokenIds& question,
                          std::size_t max_len = kDefaultMaxLen) const = 0;
  // Second decode after feedback; never emits another question. Throws
  // EmptyFeedback or NoEosEmitted.
  virtual Turn feedback_turn(const TurnState& state, const TokenIds& feedback,
                             std::size_t max_len = kDefaultMaxLen) const = 0;

 private:
  Vocabulary vocab_;
  ModelDims dims_;
};

std::unique_ptr<QaModel> make_model(ModelKind kind, Vocabulary vocab, ModelDims dims);

// Returning nullopt declines to answer the supplementary question.
using FeedbackProvider = std::function<std::optional<TokenIds>(const TokenIds& sq)>;

struct Transcript {
  Turn first;
  std::optional<TokenIds> feedback;
  std::optional<Turn> second;

  bool asked() const { return first.kind == OutputKind::SupplementaryQuestion; }
  // Tokens of the final answer including the trailing ".".
  const TokenIds& answer() const { return second ? second->tokens : first.tokens; }
};

// At most one supplementary-question round. Throws FeedbackRefused when the
// provider declines and EmptyFeedback when it returns nothing.
Transcript answer_question(const QaModel& model, const std::vector<TokenIds>& story, const TokenIds& question,
                           const FeedbackProvider& provider, std::size_t max_len = kDefaultMaxLen);

}  // namespace can
