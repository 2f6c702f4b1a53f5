#include <doctest.h>

#include <functional>

#include <filesystem>

#include "can/error.hpp"
#include "can/text.hpp"

using namespace can;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidConfig;
}

const char* kBabi =
    "1 Mary moved to the bathroom.\n"
    "2 John went to the hallway.\n"
    "3 Where is Mary? \tbathroom\t1\n"
    "4 Daniel went back to the hallway.\n"
    "5 Sandra moved to the garden.\n"
    "6 Where is Daniel? \thallway\t4\n"
    "1 Sandra travelled to the office.\n"
    "2 Where is Sandra? \toffice\t1\n";

}  // namespace

TEST_CASE("tokenize lowercases and detaches punctuation") {
  CHECK(tokenize("Where is Mary?") == Tokens{"where", "is", "mary", "?"});
  CHECK(tokenize("  The office is north of the kitchen. ") ==
        Tokens{"the", "office", "is", "north", "of", "the", "kitchen", "."});
  CHECK(tokenize("Which bedroom, master one or guest one?") ==
        Tokens{"which", "bedroom", ",", "master", "one", "or", "guest", "one", "?"});
  CHECK(tokenize("").empty());
  CHECK(join(tokenize("who is he ?")) == "who is he ?");
}

TEST_CASE("vocabulary reserves the special tokens") {
  const std::vector<Tokens> corpus = {tokenize("john went home ."), tokenize("where is john ?")};
  const Vocabulary v = Vocabulary::build(corpus);
  CHECK(v.token(kUnkId) == "<unk>");
  CHECK(v.token(kGoId) == "<go>");
  CHECK(v.token(kQuestionMarkId) == "?");
  CHECK(v.token(kPeriodId) == ".");
  CHECK(v.tokens() == std::vector<std::string>{"<unk>", "<go>", "?", ".", "john", "went", "home", "where", "is"});
  CHECK(v.id("nobody") == kUnkId);
  CHECK(v.decode(v.encode(tokenize("where is john ?"))) == tokenize("where is john ?"));
  CHECK(code_of([&] { v.token(99); }) == ErrorCode::IndexOutOfVocabulary);
  CHECK(code_of([] { Vocabulary::build(std::vector<Tokens>{}); }) == ErrorCode::EmptyInput);
  CHECK(Vocabulary::from_tokens(v.tokens()) == v);
  CHECK(code_of([] { Vocabulary::from_tokens({"a", "b"}); }) == ErrorCode::ManifestMismatch);
  CHECK(code_of([] { Vocabulary::from_tokens({"<unk>", "<go>", "?", ".", "x", "x"}); }) == ErrorCode::ManifestMismatch);
}

TEST_CASE("plain bAbI text parses into one example per question") {
  const auto ex = parse_examples(kBabi);
  REQUIRE(ex.size() == 3);
  CHECK(ex[0].sentences.size() == 2);
  CHECK(ex[0].question == tokenize("where is mary ?"));
  CHECK(ex[0].answer == Tokens{"bathroom", "."});
  CHECK(ex[0].supporting_ids == std::vector<int>{1});
  CHECK_FALSE(ex[0].is_iqa());
  // Statements continue across questions within a story.
  CHECK(ex[1].sentences.size() == 4);
  CHECK(ex[1].supporting_ids == std::vector<int>{3});
  CHECK(ex[1].sentences[2] == tokenize("daniel went back to the hallway ."));
  // A line id of 1 starts a new story.
  CHECK(ex[2].sentences.size() == 1);
}

TEST_CASE("ibAbI lines carry the supplementary question and feedback") {
  const char* text =
      "1 John grabbed the bread.\n"
      "2 John grabbed the milk.\n"
      "3 How many special objects is John holding?\ttwo\t1 2\tWhat objects are you referring to?\tMilk, bread\n";
  const auto ex = parse_examples(text);
  REQUIRE(ex.size() == 1);
  REQUIRE(ex[0].is_iqa());
  CHECK(*ex[0].supplementary_question == tokenize("what objects are you referring to ?"));
  CHECK(*ex[0].feedback == Tokens{"milk", ",", "bread"});
  CHECK(ex[0].answer == Tokens{"two", "."});
}

TEST_CASE("list answers keep their commas as tokens") {
  const auto ex = parse_examples("1 John took the milk.\n2 What is John carrying?\tmilk,apple\t1\n");
  CHECK(ex[0].answer == Tokens{"milk", ",", "apple", "."});
}

TEST_CASE("malformed lines are reported with their line number") {
  CHECK(code_of([] { parse_examples("1 John went home.\n2 Where is John?\thome\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse_examples("x John went home.\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse_examples("1 Where is John?\thome\t1\n"); }) == ErrorCode::MalformedLine);
  CHECK(code_of([] { parse_examples("1 John went home.\n2 Where is John?\thome\t7\n"); }) ==
        ErrorCode::MalformedLine);
  CHECK(code_of([] { parse_examples("1 John went home.\n2 Where is he?\thome\t1\t\tjohn\n"); }) ==
        ErrorCode::DanglingFeedback);
  try {
    parse_examples("1 John went home.\n\n3 Where is John?\thome\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("format and parse round trip exactly") {
  auto original = parse_examples(kBabi);
  TextExample iqa;
  iqa.sentences = {tokenize("the master bedroom is east of the garden ."),
                   tokenize("the guest bedroom is east of the office .")};
  iqa.question = tokenize("what is the bedroom east of ?");
  iqa.answer = tokenize("garden .");
  iqa.supplementary_question = tokenize("which bedroom , master one or guest one ?");
  iqa.feedback = tokenize("master bedroom");
  iqa.supporting_ids = {1};
  original.push_back(iqa);
  const std::string text = format_examples(original);
  CHECK(parse_examples(text) == original);
  CHECK(format_examples(parse_examples(text)) == text);
}

TEST_CASE("datasets round trip through files") {
  const auto dir = std::filesystem::temp_directory_path() / "can_text_test";
  std::filesystem::create_directories(dir);
  const Dataset d = parse_dataset(kBabi);
  const auto path = dir / split_file_name(1, 0.8, "train");
  write_dataset(d, path);
  const Dataset back = load_dataset(path, &d.vocab);
  CHECK(back.examples == d.examples);
  CHECK(back.info == DatasetInfo{1, 0.8});
  CHECK(find_split_file(dir, "train") == path);
  CHECK(code_of([&] { find_split_file(dir, "test"); }) == ErrorCode::IoFailure);
  CHECK(code_of([&] { read_file(dir / "missing.txt"); }) == ErrorCode::IoFailure);
  std::filesystem::remove_all(dir);
}

TEST_CASE("split file names") {
  CHECK(split_file_name(1, 0.8, "train") == "1_0.8_train.txt");
  CHECK(split_file_name(7, 1.0, "test") == "7_1.0_test.txt");
  CHECK(split_file_name(4, 0.0, "test") == "4_0.0_test.txt");
  CHECK(info_from_file_name("qa4_two-arg-relations_train.txt").task == 4);
  CHECK(info_from_file_name("7_0.3_test.txt") == DatasetInfo{7, 0.3});
}
