#pragma once

// Tokenization, vocabulary and the (i)bAbI line format.
//
// Question lines carry tab-separated fields after "<id> <question>":
//   QA : answer TAB supporting_ids
//   IQA: answer TAB supporting_ids TAB supplementary_question TAB feedback
// so every plain bAbI file is also a valid ibAbI file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace can {

using Tokens = std::vector<std::string>;
using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr TokenId kUnkId = 0;
inline constexpr TokenId kGoId = 1;
inline constexpr TokenId kQuestionMarkId = 2;
inline constexpr TokenId kPeriodId = 3;

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kGo = "<go>";
inline constexpr std::string_view kQuestionMark = "?";
inline constexpr std::string_view kPeriod = ".";

// Lowercases, splits on whitespace and detaches trailing '?', '.' and ','.
Tokens tokenize(std::string_view line);
std::string join(const Tokens& tokens);

class Vocabulary {
 public:
  // Only the four reserved tokens.
  Vocabulary();

  // Reserved tokens first, then first-occurrence order. Throws EmptyInput on an
  // empty corpus.
  static Vocabulary build(std::span<const Tokens> corpus);
  // Rebuilds a vocabulary from its id-ordered token list (checkpoint headers).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  TokenId add(const std::string& token);
  std::optional<TokenId> find(const std::string& token) const;
  // Unknown tokens map to <unk>.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenIds encode(const Tokens& tokens) const;
  Tokens decode(const TokenIds& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// One QA or IQA instance as surface tokens.
struct TextExample {
  std::vector<Tokens> sentences;  // each ends in "."
  Tokens question;                // ends in "?"
  Tokens answer;                  // ends in "."
  std::optional<Tokens> supplementary_question;
  std::optional<Tokens> feedback;
  std::vector<int> supporting_ids;  // 1-based sentence indices, metadata only

  bool is_iqa() const { return supplementary_question.has_value(); }
  friend bool operator==(const TextExample&, const TextExample&) = default;
};

// The same instance as vocabulary ids.
struct StoryExample {
  std::vector<TokenIds> sentences;
  TokenIds question;
  TokenIds answer;
  std::optional<TokenIds> supplementary_question;
  std::optional<TokenIds> feedback;
  std::vector<int> supporting_ids;

  bool is_iqa() const { return supplementary_question.has_value(); }
  friend bool operator==(const StoryExample&, const StoryExample&) = default;
};

StoryExample encode_example(const TextExample& ex, const Vocabulary& vocab);
TextExample decode_example(const StoryExample& ex, const Vocabulary& vocab);

struct DatasetInfo {
  int task = 0;
  double r_iqa = 0.0;
  friend bool operator==(const DatasetInfo&, const DatasetInfo&) = default;
};

struct Dataset {
  std::vector<StoryExample> examples;
  Vocabulary vocab;
  DatasetInfo info;

  std::vector<TextExample> texts() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Every token sequence of an example (sentences, question, answer, SQ, FB).
std::vector<Tokens> corpus_of(std::span<const TextExample> examples);

// Throws MalformedLine or DanglingFeedback with the 1-based line number.
std::vector<TextExample> parse_examples(std::string_view text);
std::string format_examples(std::span<const TextExample> examples);

// Builds a vocabulary from the parsed text unless one is supplied.
Dataset parse_dataset(std::string_view text, const Vocabulary* vocab = nullptr);
Dataset load_dataset(const std::filesystem::path& path, const Vocabulary* vocab = nullptr);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

// "<task>_<ratio>_train.txt" naming; ratio printed with at least one decimal.
std::string split_file_name(int task, double r_iqa, std::string_view split);
// Task and ratio recovered from either our naming or the bAbI "qaN_..." naming.
DatasetInfo info_from_file_name(const std::filesystem::path& path);

// The single "*_<split>.txt" file in dir, optionally restricted to one task.
// Throws IoFailure when none or several match.
std::filesystem::path find_split_file(const std::filesystem::path& dir, std::string_view split,
                                      std::optional<int> task = std::nullopt);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace can
