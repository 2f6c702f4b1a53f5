#pragma once

// Synthetic bAbI / ibAbI tasks 1 (where is), 4 (two-argument relations) and
// 7 (counting), plus a replaying oracle that answers any generated question.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "can/text.hpp"

namespace can {

struct GeneratorConfig {
  int task = 1;  // 1, 4 or 7
  double r_iqa = 0.0;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
  // 0 selects the task default: task 1 2-10, task 7 4-8. Task 4 is always
  // 2 statements for QA and 4 for IQA.
  std::size_t min_sentences = 0;
  std::size_t max_sentences = 0;

  void validate() const;
};

namespace lexicon {
inline const std::vector<std::string> kFemale = {"mary", "sandra"};
inline const std::vector<std::string> kMale = {"john", "daniel"};
inline const std::vector<std::string> kLocations = {"kitchen", "garden", "office", "bathroom", "bedroom", "hallway"};
inline const std::vector<std::string> kObjects = {"apple", "milk", "bread", "football"};
inline const std::vector<std::string> kMoveVerbs = {"journeyed", "moved", "went", "travelled"};
inline const std::vector<std::string> kCountWords = {"none", "one", "two", "three"};
inline const std::vector<std::string> kDirections = {"north", "east", "south", "west"};
inline const std::vector<std::string> kQualifiers = {"master", "guest"};
}  // namespace lexicon

// Supplementary-question templates.
Tokens who_is_template(bool male);
Tokens which_bedroom_template();
Tokens which_objects_template();

TextExample generate_example(const GeneratorConfig& cfg, std::mt19937_64& rng, bool want_iqa);

// Replays the story and answers the (disambiguated) question. Answers end in
// ".". Throws InvalidFeedback when the feedback is missing, unknown to the
// story, or inconsistent with the question.
Tokens oracle_answer(int task, const std::vector<Tokens>& sentences, const Tokens& question,
                     const std::optional<Tokens>& feedback);

// Atomic referents a user may name in reply to `sq`: same-gender actors
// (task 1), qualified bedrooms (task 4) or the objects held by the asked-about
// actor (task 7). Empty when the story has none.
std::vector<Tokens> feedback_referents(int task, const std::vector<Tokens>& sentences, const Tokens& question,
                                       const Tokens& sq);

// Exactly round(r_iqa * n) IQA examples per split, shuffled; a pure function
// of cfg. Both splits share one vocabulary.
std::pair<Dataset, Dataset> mix_and_emit(const GeneratorConfig& cfg);

// Writes <task>_<ratio>_{train,test}.txt into dir and returns both paths.
std::pair<std::filesystem::path, std::filesystem::path> write_generated(const GeneratorConfig& cfg,
                                                                        const std::filesystem::path& dir);

}  // namespace can
