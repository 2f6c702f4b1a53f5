#include "can/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "can/error.hpp"

namespace can {

namespace {

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
}

// Answers in bAbI files join list items with bare commas ("milk,football").
Tokens tokenize_answer(std::string_view field) {
  std::string spaced;
  for (char c : field) {
    if (c == ',') spaced += " , ";
    else spaced += c;
  }
  Tokens t = tokenize(spaced);
  if (t.empty() || t.back() != kPeriod) t.emplace_back(kPeriod);
  return t;
}

std::string render_answer(const Tokens& answer) {
  Tokens body(answer.begin(), answer.end());
  if (!body.empty() && body.back() == kPeriod) body.pop_back();
  return join(body);
}

}  // namespace

Tokens tokenize(std::string_view line) {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    Tokens trailing;
    while (!word.empty() && (word.back() == '?' || word.back() == '.' || word.back() == ',')) {
      trailing.emplace_back(1, word.back());
      word.pop_back();
    }
    if (!word.empty()) out.push_back(word);
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
    word.clear();
  };
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) flush();
    else word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  flush();
  return out;
}

std::string join(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

Vocabulary::Vocabulary() {
  for (auto t : {kUnk, kGo, kQuestionMark, kPeriod}) add(std::string(t));
}

Vocabulary Vocabulary::build(std::span<const Tokens> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyInput, "cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  for (const auto& seq : corpus)
    for (const auto& tok : seq) v.add(tok);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < v.size() || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin()))
    throw Error(ErrorCode::ManifestMismatch, "vocabulary does not start with the reserved tokens");
  for (std::size_t i = v.size(); i < tokens.size(); ++i) {
    if (v.find(tokens[i])) throw Error(ErrorCode::ManifestMismatch, "duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

TokenId Vocabulary::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  return std::nullopt;
}

TokenId Vocabulary::id(const std::string& token) const { return find(token).value_or(kUnkId); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size())
    throw Error(ErrorCode::IndexOutOfVocabulary, "token id " + std::to_string(id) + " >= " + std::to_string(size()));
  return tokens_[id];
}

TokenIds Vocabulary::encode(const Tokens& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const TokenIds& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

StoryExample encode_example(const TextExample& ex, const Vocabulary& vocab) {
  StoryExample out;
  for (const auto& s : ex.sentences) out.sentences.push_back(vocab.encode(s));
  out.question = vocab.encode(ex.question);
  out.answer = vocab.encode(ex.answer);
  if (ex.supplementary_question) out.supplementary_question = vocab.encode(*ex.supplementary_question);
  if (ex.feedback) out.feedback = vocab.encode(*ex.feedback);
  out.supporting_ids = ex.supporting_ids;
  return out;
}

TextExample decode_example(const StoryExample& ex, const Vocabulary& vocab) {
  TextExample out;
  for (const auto& s : ex.sentences) out.sentences.push_back(vocab.decode(s));
  out.question = vocab.decode(ex.question);
  out.answer = vocab.decode(ex.answer);
  if (ex.supplementary_question) out.supplementary_question = vocab.decode(*ex.supplementary_question);
  if (ex.feedback) out.feedback = vocab.decode(*ex.feedback);
  out.supporting_ids = ex.supporting_ids;
  return out;
}

std::vector<TextExample> Dataset::texts() const {
  std::vector<TextExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(decode_example(ex, vocab));
  return out;
}

std::vector<Tokens> corpus_of(std::span<const TextExample> examples) {
  std::vector<Tokens> corpus;
  for (const auto& ex : examples) {
    corpus.insert(corpus.end(), ex.sentences.begin(), ex.sentences.end());
    corpus.push_back(ex.question);
    corpus.push_back(ex.answer);
    if (ex.supplementary_question) corpus.push_back(*ex.supplementary_question);
    if (ex.feedback) corpus.push_back(*ex.feedback);
  }
  return corpus;
}

std::vector<TextExample> parse_examples(std::string_view text) {
  std::vector<TextExample> out;
  std::vector<Tokens> story;
  std::vector<int> line_ids;  // file id of each statement in `story`
  int last_id = 0;
  std::size_t line_no = 0;
  for (std::string_view raw : split_on(text, '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    if (trim(raw).empty()) continue;

    const auto fields = split_on(raw, '\t');
    std::string_view head = trim(fields[0]);
    const auto space = head.find(' ');
    if (space == std::string_view::npos) malformed(line_no, "expected '<id> <text>'");
    const auto id = parse_int(head.substr(0, space));
    if (!id || *id < 1) malformed(line_no, "line id is not a positive integer");
    if (*id == 1 || *id <= last_id) {
      story.clear();
      line_ids.clear();
    }
    last_id = *id;

    Tokens tokens = tokenize(head.substr(space + 1));
    if (tokens.empty()) malformed(line_no, "empty text");

    if (fields.size() == 1) {
      if (tokens.back() == kQuestionMark) malformed(line_no, "question without an answer field");
      if (tokens.back() != kPeriod) tokens.emplace_back(kPeriod);
      story.push_back(std::move(tokens));
      line_ids.push_back(*id);
      continue;
    }

    if (fields.size() != 3 && fields.size() != 5)
      malformed(line_no, "expected 2 or 4 tab-separated fields after the question, got " +
                             std::to_string(fields.size() - 1));
    if (tokens.back() != kQuestionMark) malformed(line_no, "question must end with '?'");
    if (story.empty()) malformed(line_no, "question before any statement");

    TextExample ex;
    ex.sentences = story;
    ex.question = std::move(tokens);
    ex.answer = tokenize_answer(trim(fields[1]));
    if (ex.answer.size() < 2) malformed(line_no, "empty answer");
    std::istringstream support{std::string(fields[2])};
    std::string item;
    while (support >> item) {
      const auto ref = parse_int(item);
      if (!ref) malformed(line_no, "supporting id '" + item + "' is not an integer");
      auto it = std::find(line_ids.begin(), line_ids.end(), *ref);
      if (it == line_ids.end()) malformed(line_no, "supporting id " + item + " is not a statement of this story");
      ex.supporting_ids.push_back(static_cast<int>(it - line_ids.begin()) + 1);
    }

    if (fields.size() == 5) {
      Tokens sq = tokenize(fields[3]);
      Tokens fb = tokenize(fields[4]);
      if (sq.empty() && !fb.empty())
        throw Error(ErrorCode::DanglingFeedback, "line " + std::to_string(line_no) + ": feedback without question");
      if (sq.empty() || fb.empty()) malformed(line_no, "supplementary question and feedback must both be present");
      if (sq.back() != kQuestionMark) malformed(line_no, "supplementary question must end with '?'");
      ex.supplementary_question = std::move(sq);
      ex.feedback = std::move(fb);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::string format_examples(std::span<const TextExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    int id = 1;
    for (const auto& s : ex.sentences) out += std::to_string(id++) + ' ' + join(s) + '\n';
    out += std::to_string(id) + ' ' + join(ex.question) + '\t' + render_answer(ex.answer) + '\t';
    for (std::size_t i = 0; i < ex.supporting_ids.size(); ++i)
      out += (i ? " " : "") + std::to_string(ex.supporting_ids[i]);
    if (ex.is_iqa()) out += '\t' + join(*ex.supplementary_question) + '\t' + join(ex.feedback.value_or(Tokens{}));
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::string_view text, const Vocabulary* vocab) {
  const auto texts = parse_examples(text);
  Dataset d;
  if (vocab) {
    d.vocab = *vocab;
  } else if (!texts.empty()) {
    const auto corpus = corpus_of(texts);
    d.vocab = Vocabulary::build(corpus);
  }
  d.examples.reserve(texts.size());
  for (const auto& t : texts) d.examples.push_back(encode_example(t, d.vocab));
  return d;
}

Dataset load_dataset(const std::filesystem::path& path, const Vocabulary* vocab) {
  Dataset d = parse_dataset(read_file(path), vocab);
  d.info = info_from_file_name(path);
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  const auto texts = d.texts();
  write_file(path, format_examples(texts));
}

std::string split_file_name(int task, double r_iqa, std::string_view split) {
  char ratio[32];
  const double rounded = static_cast<double>(static_cast<long long>(r_iqa));
  std::snprintf(ratio, sizeof ratio, rounded == r_iqa ? "%.1f" : "%g", r_iqa);
  return std::to_string(task) + "_" + ratio + "_" + std::string(split) + ".txt";
}

DatasetInfo info_from_file_name(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  static const std::regex ours(R"(^(\d+)_([0-9.]+)_(train|test)\.txt$)");
  static const std::regex babi(R"(^qa(\d+)_.*\.txt$)");
  std::smatch m;
  DatasetInfo info;
  if (std::regex_match(name, m, ours)) {
    info.task = std::stoi(m[1]);
    info.r_iqa = std::stod(m[2]);
  } else if (std::regex_match(name, m, babi)) {
    info.task = std::stoi(m[1]);
  }
  return info;
}

std::filesystem::path find_split_file(const std::filesystem::path& dir, std::string_view split,
                                      std::optional<int> task) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorCode::IoFailure, dir.string() + " is not a directory");
  const std::string suffix = "_" + std::string(split) + ".txt";
  std::vector<std::filesystem::path> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    if (task && info_from_file_name(entry.path()).task != *task) continue;
    found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) throw Error(ErrorCode::IoFailure, "no *" + suffix + " file in " + dir.string());
  if (found.size() > 1) {
    std::string names;
    for (const auto& f : found) names += " " + f.filename().string();
    throw Error(ErrorCode::IoFailure, "several *" + suffix + " files in " + dir.string() + ":" + names +
                                          " (select one with --task)");
  }
  return found.front();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace can
