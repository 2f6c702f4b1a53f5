#include "can/ibabi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "can/error.hpp"

namespace can {

namespace {

using Rng = std::mt19937_64;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[uniform(rng, 0, v.size() - 1)];
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> all_actors() {
  auto a = lexicon::kFemale;
  a.insert(a.end(), lexicon::kMale.begin(), lexicon::kMale.end());
  return a;
}

bool is_male(const std::string& actor) { return contains(lexicon::kMale, actor); }
bool is_actor(const std::string& s) { return contains(lexicon::kMale, s) || contains(lexicon::kFemale, s); }

Tokens with_period(Tokens t) {
  t.emplace_back(kPeriod);
  return t;
}

[[noreturn]] void invalid(const std::string& why) { throw Error(ErrorCode::InvalidFeedback, why); }

// Feedback tokens with list separators removed.
std::vector<std::string> feedback_items(const std::optional<Tokens>& fb) {
  std::vector<std::string> items;
  if (!fb) return items;
  for (const auto& t : *fb)
    if (t != "," && t != kPeriod) items.push_back(t);
  return items;
}

// ---------------------------------------------------------------- task 1

struct ActorWorld {
  std::map<std::string, std::string> location;
  std::map<std::string, std::size_t> last_sentence;  // 1-based
  std::vector<std::string> order;                     // first appearance
};

ActorWorld replay_moves(const std::vector<Tokens>& sentences) {
  static const std::vector<std::string> kObjectVerbs = {"grabbed", "got", "took", "picked", "dropped",
                                                        "left", "discarded", "put"};
  ActorWorld w;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.size() < 3 || !is_actor(s[0]) || contains(kObjectVerbs, s[1])) continue;
    if (!w.location.count(s[0])) w.order.push_back(s[0]);
    w.location[s[0]] = s[s.size() - 2];
    w.last_sentence[s[0]] = i + 1;
  }
  for (const auto& s : sentences)
    if (!s.empty() && is_actor(s[0]) && !contains(w.order, s[0])) w.order.push_back(s[0]);
  return w;
}

Tokens task1_answer(const std::vector<Tokens>& sentences, const Tokens& question, const std::optional<Tokens>& fb) {
  if (question.size() != 4 || question[0] != "where" || question[1] != "is") invalid("not a task 1 question");
  const ActorWorld w = replay_moves(sentences);
  std::string actor = question[2];
  if (actor == "he" || actor == "she") {
    const auto items = feedback_items(fb);
    if (items.size() != 1) invalid("task 1 feedback must name exactly one actor");
    actor = items[0];
    if (!is_actor(actor) || is_male(actor) != (question[2] == "he")) invalid("'" + actor + "' is not a '" + question[2] + "'");
  }
  auto it = w.location.find(actor);
  if (it == w.location.end()) invalid("actor '" + actor + "' never moves in the story");
  return with_period({it->second});
}

// ---------------------------------------------------------------- task 4

struct Fact {
  std::string subject;  // subject is `dir` of object
  std::string dir;
  std::string object;
};

std::string opposite(const std::string& d) {
  if (d == "north") return "south";
  if (d == "south") return "north";
  if (d == "east") return "west";
  if (d == "west") return "east";
  return d;
}

std::vector<Fact> parse_facts(const std::vector<Tokens>& sentences) {
  std::vector<Fact> facts;
  for (const auto& s : sentences) {
    auto is = std::find(s.begin(), s.end(), "is");
    if (s.size() < 8 || s[0] != "the" || is == s.end() || is + 4 >= s.end()) continue;
    if (*(is + 2) != "of" || *(is + 3) != "the") continue;
    facts.push_back({join(Tokens(s.begin() + 1, is)), *(is + 1), join(Tokens(is + 4, s.end() - 1))});
  }
  return facts;
}

// Entities X with "X is dir of anchor" (anchor_is_object) or "anchor is dir of X".
std::set<std::string> related(const std::vector<Fact>& facts, const std::string& anchor, const std::string& dir,
                              bool anchor_is_object) {
  std::set<std::string> out;
  for (const auto& f : facts) {
    if (anchor_is_object) {
      if (f.object == anchor && f.dir == dir) out.insert(f.subject);
      if (f.subject == anchor && f.dir == opposite(dir)) out.insert(f.object);
    } else {
      if (f.subject == anchor && f.dir == dir) out.insert(f.object);
      if (f.object == anchor && f.dir == opposite(dir)) out.insert(f.subject);
    }
  }
  return out;
}

std::set<std::string> entities(const std::vector<Fact>& facts) {
  std::set<std::string> e;
  for (const auto& f : facts) {
    e.insert(f.subject);
    e.insert(f.object);
  }
  return e;
}

struct RelationQuestion {
  std::string entity;
  std::string dir;
  bool entity_is_object;  // "what is <dir> of the <entity> ?"
};

RelationQuestion parse_relation_question(const Tokens& q) {
  if (q.size() < 6 || q[0] != "what" || q[1] != "is" || q.back() != kQuestionMark) invalid("not a task 4 question");
  if (q[2] == "the") {
    if (q[q.size() - 2] != "of") invalid("not a task 4 question");
    return {join(Tokens(q.begin() + 3, q.end() - 3)), q[q.size() - 3], false};
  }
  if (q[3] != "of" || q[4] != "the") invalid("not a task 4 question");
  return {join(Tokens(q.begin() + 5, q.end() - 1)), q[2], true};
}

std::vector<std::string> qualified_variants(const std::vector<Fact>& facts, const std::string& base) {
  std::vector<std::string> out;
  for (const auto& q : lexicon::kQualifiers) {
    const std::string name = q + " " + base;
    if (entities(facts).count(name)) out.push_back(name);
  }
  return out;
}

Tokens task4_answer(const std::vector<Tokens>& sentences, const Tokens& question, const std::optional<Tokens>& fb) {
  const auto facts = parse_facts(sentences);
  const auto rq = parse_relation_question(question);
  std::string entity = rq.entity;
  if (!entities(facts).count(entity)) {
    const auto variants = qualified_variants(facts, entity);
    if (variants.empty()) invalid("'" + entity + "' does not occur in the story");
    const std::string named = fb ? join(*fb) : std::string();
    if (!contains(variants, named)) invalid("feedback '" + named + "' does not pick one " + entity);
    entity = named;
  }
  const auto answers = related(facts, entity, rq.dir, rq.entity_is_object);
  if (answers.size() != 1) invalid("question has " + std::to_string(answers.size()) + " answers");
  return with_period(tokenize(*answers.begin()));
}

// ---------------------------------------------------------------- task 7

struct HoldingWorld {
  std::map<std::string, std::vector<std::string>> held;  // acquisition order
};

HoldingWorld replay_holding(const std::vector<Tokens>& sentences) {
  static const std::vector<std::string> kGrab = {"grabbed", "got", "took", "picked"};
  static const std::vector<std::string> kDrop = {"dropped", "left", "discarded", "put"};
  HoldingWorld w;
  for (const auto& s : sentences) {
    if (s.size() < 4 || !is_actor(s[0])) continue;
    const std::string& object = s[s.size() - 2];
    if (contains(kGrab, s[1])) {
      for (auto& [actor, objs] : w.held) std::erase(objs, object);
      w.held[s[0]].push_back(object);
    } else if (contains(kDrop, s[1])) {
      std::erase(w.held[s[0]], object);
    }
  }
  return w;
}

std::string count_word(std::size_t n) {
  if (n >= lexicon::kCountWords.size()) return std::to_string(n);
  return lexicon::kCountWords[n];
}

// Actor asked about in "how many [special] objects is <actor> holding ?".
std::pair<std::string, bool> parse_count_question(const Tokens& q) {
  if (q.size() == 7 && q[0] == "how" && q[1] == "many" && q[2] == "objects") return {q[4], false};
  if (q.size() == 8 && q[0] == "how" && q[1] == "many" && q[2] == "special") return {q[5], true};
  invalid("not a task 7 question");
}

Tokens task7_answer(const std::vector<Tokens>& sentences, const Tokens& question, const std::optional<Tokens>& fb) {
  const auto [actor, special] = parse_count_question(question);
  const auto w = replay_holding(sentences);
  const auto it = w.held.find(actor);
  const std::vector<std::string> held = it == w.held.end() ? std::vector<std::string>{} : it->second;
  if (!special) return with_period({count_word(held.size())});
  const auto items = feedback_items(fb);
  if (items.empty()) invalid("task 7 feedback must list objects");
  std::set<std::string> named(items.begin(), items.end());
  for (const auto& o : named)
    if (!contains(held, o)) invalid("'" + actor + "' is not holding '" + o + "'");
  return with_period({count_word(named.size())});
}

// ---------------------------------------------------------------- generation

Tokens move_sentence(const std::string& actor, Rng& rng) {
  return {actor, pick(lexicon::kMoveVerbs, rng), "to", "the", pick(lexicon::kLocations, rng), std::string(kPeriod)};
}

TextExample generate_task1(const GeneratorConfig& cfg, Rng& rng, bool iqa) {
  const std::size_t lo = cfg.min_sentences ? cfg.min_sentences : 2;
  const std::size_t hi = cfg.max_sentences ? cfg.max_sentences : 10;
  const std::size_t n = uniform(rng, std::max<std::size_t>(lo, 2), std::max(lo, hi));
  const auto actors = all_actors();
  TextExample ex;
  if (!iqa) {
    for (std::size_t i = 0; i < n; ++i) ex.sentences.push_back(move_sentence(pick(actors, rng), rng));
    const ActorWorld w = replay_moves(ex.sentences);
    const std::string& who = pick(w.order, rng);
    ex.question = {"where", "is", who, std::string(kQuestionMark)};
    ex.answer = task1_answer(ex.sentences, ex.question, std::nullopt);
    ex.supporting_ids = {static_cast<int>(w.last_sentence.at(who))};
    return ex;
  }
  const bool male = uniform(rng, 0, 1) == 1;
  const auto& pair = male ? lexicon::kMale : lexicon::kFemale;
  std::vector<std::string> speakers(n);
  for (auto& s : speakers) s = pick(actors, rng);
  // Both same-gender actors must appear: pin them to two distinct slots.
  const std::size_t first = uniform(rng, 0, n - 1);
  std::size_t second = uniform(rng, 0, n - 2);
  if (second >= first) ++second;
  speakers[first] = pair[0];
  speakers[second] = pair[1];
  for (const auto& s : speakers) ex.sentences.push_back(move_sentence(s, rng));
  const std::string pronoun = male ? "he" : "she";
  ex.question = {"where", "is", pronoun, std::string(kQuestionMark)};
  ex.supplementary_question = who_is_template(male);
  const std::string& referent = pick(pair, rng);
  ex.feedback = Tokens{referent};
  ex.answer = task1_answer(ex.sentences, ex.question, ex.feedback);
  ex.supporting_ids = {static_cast<int>(replay_moves(ex.sentences).last_sentence.at(referent))};
  return ex;
}

struct Grid {
  std::map<std::string, std::pair<int, int>> at;

  static std::pair<int, int> step(const std::string& d) {
    if (d == "north") return {0, 1};
    if (d == "south") return {0, -1};
    if (d == "east") return {1, 0};
    return {-1, 0};
  }
  bool occupied(std::pair<int, int> cell) const {
    return std::any_of(at.begin(), at.end(), [&](const auto& kv) { return kv.second == cell; });
  }
  std::pair<int, int> neighbour(const std::string& entity, const std::string& d) const {
    const auto [dx, dy] = step(d);
    const auto [x, y] = at.at(entity);
    return {x + dx, y + dy};
  }
};

Tokens relation_sentence(const std::string& subject, const std::string& dir, const std::string& object) {
  Tokens t{"the"};
  for (auto& w : tokenize(subject)) t.push_back(w);
  t.insert(t.end(), {"is", dir, "of", "the"});
  for (auto& w : tokenize(object)) t.push_back(w);
  t.emplace_back(kPeriod);
  return t;
}

// Places `fresh` next to `anchor` in direction `dir` and states it either way round.
Tokens attach(Grid& g, const std::string& anchor, const std::string& dir, const std::string& fresh, Rng& rng) {
  g.at[fresh] = g.neighbour(anchor, dir);
  if (uniform(rng, 0, 1)) return relation_sentence(fresh, dir, anchor);
  return relation_sentence(anchor, opposite(dir), fresh);
}

// Random fresh attachment to any placed entity with a free neighbouring cell.
Tokens attach_anywhere(Grid& g, std::vector<std::string>& pool, Rng& rng) {
  while (true) {
    auto it = g.at.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(uniform(rng, 0, g.at.size() - 1)));
    const std::string anchor = it->first;
    const std::string& dir = pick(lexicon::kDirections, rng);
    if (g.occupied(g.neighbour(anchor, dir))) continue;
    const std::size_t idx = uniform(rng, 0, pool.size() - 1);
    const std::string fresh = pool[idx];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
    return attach(g, anchor, dir, fresh, rng);
  }
}

Tokens relation_question(const std::string& entity, const std::string& dir, bool entity_is_object) {
  Tokens q{"what", "is"};
  if (entity_is_object) {
    q.insert(q.end(), {dir, "of", "the"});
    for (auto& w : tokenize(entity)) q.push_back(w);
  } else {
    q.emplace_back("the");
    for (auto& w : tokenize(entity)) q.push_back(w);
    q.insert(q.end(), {dir, "of"});
  }
  q.emplace_back(kQuestionMark);
  return q;
}

int supporting_fact(const std::vector<Tokens>& sentences, const std::string& a, const std::string& b) {
  const auto facts = parse_facts(sentences);
  for (std::size_t i = 0; i < facts.size(); ++i)
    if ((facts[i].subject == a && facts[i].object == b) || (facts[i].subject == b && facts[i].object == a))
      return static_cast<int>(i) + 1;
  return 0;
}

TextExample generate_task4(Rng& rng, bool iqa) {
  TextExample ex;
  Grid g;
  if (!iqa) {
    std::vector<std::string> pool = lexicon::kLocations;
    std::shuffle(pool.begin(), pool.end(), rng);
    g.at[pool.back()] = {0, 0};
    pool.pop_back();
    ex.sentences.push_back(attach_anywhere(g, pool, rng));
    ex.sentences.push_back(attach_anywhere(g, pool, rng));
    const auto facts = parse_facts(ex.sentences);
    const Fact& f = pick(facts, rng);
    const bool ask_subject = uniform(rng, 0, 1) == 1;
    ex.question = ask_subject ? relation_question(f.object, f.dir, true) : relation_question(f.subject, f.dir, false);
    ex.answer = task4_answer(ex.sentences, ex.question, std::nullopt);
    ex.supporting_ids = {supporting_fact(ex.sentences, f.subject, f.object)};
    return ex;
  }
  std::vector<std::string> pool;
  for (const auto& l : lexicon::kLocations)
    if (l != "bedroom") pool.push_back(l);
  std::shuffle(pool.begin(), pool.end(), rng);
  const std::string master = "master bedroom", guest = "guest bedroom";
  const std::string& dir = pick(lexicon::kDirections, rng);
  const bool entity_is_object = uniform(rng, 0, 1) == 1;
  // Answer cell: "X is dir of bedroom" puts X at bedroom+dir; otherwise bedroom-dir.
  const std::string toward = entity_is_object ? dir : opposite(dir);
  g.at[master] = {0, 0};
  g.at[guest] = {3 * static_cast<int>(uniform(rng, 1, 2)), 3 * static_cast<int>(uniform(rng, 0, 1))};
  std::vector<Tokens> sentences;
  for (const auto& room : {master, guest}) {
    const std::string fresh = pool.back();
    pool.pop_back();
    sentences.push_back(attach(g, room, toward, fresh, rng));
  }
  sentences.push_back(attach_anywhere(g, pool, rng));
  sentences.push_back(attach_anywhere(g, pool, rng));
  std::shuffle(sentences.begin(), sentences.end(), rng);
  ex.sentences = std::move(sentences);
  ex.question = relation_question("bedroom", dir, entity_is_object);
  ex.supplementary_question = which_bedroom_template();
  const std::string& chosen = uniform(rng, 0, 1) ? master : guest;
  ex.feedback = tokenize(chosen);
  ex.answer = task4_answer(ex.sentences, ex.question, ex.feedback);
  ex.supporting_ids = {supporting_fact(ex.sentences, chosen, ex.answer[0])};
  return ex;
}

TextExample generate_task7(const GeneratorConfig& cfg, Rng& rng, bool iqa) {
  const std::size_t lo = cfg.min_sentences ? cfg.min_sentences : 4;
  const std::size_t hi = cfg.max_sentences ? cfg.max_sentences : 8;
  const auto actors = all_actors();
  while (true) {
    TextExample ex;
    const std::size_t n = uniform(rng, lo, std::max(lo, hi));
    const std::string holder = pick(actors, rng);
    std::map<std::string, std::string> owner;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string actor = uniform(rng, 0, 1) ? holder : pick(actors, rng);
      std::vector<std::string> free, mine;
      for (const auto& o : lexicon::kObjects) {
        if (!owner.count(o)) free.push_back(o);
        else if (owner[o] == actor) mine.push_back(o);
      }
      const std::size_t roll = uniform(rng, 0, 9);
      if (roll < 5 && !free.empty()) {
        const std::string o = pick(free, rng);
        owner[o] = actor;
        ex.sentences.push_back({actor, "grabbed", "the", o, std::string(kPeriod)});
      } else if (roll < 7 && !mine.empty()) {
        const std::string o = pick(mine, rng);
        owner.erase(o);
        ex.sentences.push_back({actor, uniform(rng, 0, 1) ? "dropped" : "left", "the", o, std::string(kPeriod)});
      } else {
        ex.sentences.push_back(move_sentence(actor, rng));
      }
    }
    const auto w = replay_holding(ex.sentences);
    const auto it = w.held.find(holder);
    const std::vector<std::string> held = it == w.held.end() ? std::vector<std::string>{} : it->second;
    if (held.size() > 3) continue;
    if (iqa && held.size() < 2) continue;
    for (std::size_t i = 0; i < ex.sentences.size(); ++i) {
      const auto& s = ex.sentences[i];
      if (s[0] == holder && s.size() == 5 && contains(held, s[3])) ex.supporting_ids.push_back(static_cast<int>(i) + 1);
    }
    if (!iqa) {
      ex.question = {"how", "many", "objects", "is", holder, "holding", std::string(kQuestionMark)};
      ex.answer = task7_answer(ex.sentences, ex.question, std::nullopt);
      return ex;
    }
    ex.question = {"how", "many", "special", "objects", "is", holder, "holding", std::string(kQuestionMark)};
    ex.supplementary_question = which_objects_template();
    std::vector<std::string> subset;
    do {
      subset.clear();
      for (const auto& o : held)
        if (uniform(rng, 0, 1)) subset.push_back(o);
    } while (subset.empty());
    std::shuffle(subset.begin(), subset.end(), rng);
    Tokens fb;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      if (i) fb.emplace_back(",");
      fb.push_back(subset[i]);
    }
    ex.feedback = fb;
    ex.answer = task7_answer(ex.sentences, ex.question, ex.feedback);
    return ex;
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (task != 1 && task != 4 && task != 7) throw Error(ErrorCode::InvalidConfig, "task must be 1, 4 or 7");
  if (!(r_iqa >= 0.0 && r_iqa <= 1.0)) throw Error(ErrorCode::InvalidConfig, "r_iqa must lie in [0, 1]");
  if (n_train == 0 || n_test == 0) throw Error(ErrorCode::InvalidConfig, "example counts must be positive");
  if (min_sentences && max_sentences && min_sentences > max_sentences)
    throw Error(ErrorCode::InvalidConfig, "min_sentences > max_sentences");
}

Tokens who_is_template(bool male) { return {"who", "is", male ? "he" : "she", std::string(kQuestionMark)}; }

Tokens which_bedroom_template() {
  return {"which", "bedroom", ",", "master", "one", "or", "guest", "one", std::string(kQuestionMark)};
}

Tokens which_objects_template() {
  return {"what", "objects", "are", "you", "referring", "to", std::string(kQuestionMark)};
}

TextExample generate_example(const GeneratorConfig& cfg, std::mt19937_64& rng, bool want_iqa) {
  cfg.validate();
  switch (cfg.task) {
    case 1: return generate_task1(cfg, rng, want_iqa);
    case 4: return generate_task4(rng, want_iqa);
    default: return generate_task7(cfg, rng, want_iqa);
  }
}

Tokens oracle_answer(int task, const std::vector<Tokens>& sentences, const Tokens& question,
                     const std::optional<Tokens>& feedback) {
  switch (task) {
    case 1: return task1_answer(sentences, question, feedback);
    case 4: return task4_answer(sentences, question, feedback);
    case 7: return task7_answer(sentences, question, feedback);
    default: invalid("no oracle for task " + std::to_string(task));
  }
}

std::vector<Tokens> feedback_referents(int task, const std::vector<Tokens>& sentences, const Tokens& question,
                                       const Tokens& sq) {
  std::vector<Tokens> out;
  if (task == 1) {
    std::string pronoun = sq.size() == 4 && sq[0] == "who" ? sq[2] : (question.size() > 2 ? question[2] : "");
    if (pronoun != "he" && pronoun != "she") return out;
    for (const auto& a : replay_moves(sentences).order)
      if (is_male(a) == (pronoun == "he")) out.push_back({a});
  } else if (task == 4) {
    std::string base = "bedroom";
    try {
      base = parse_relation_question(question).entity;
    } catch (const Error&) {
    }
    for (const auto& v : qualified_variants(parse_facts(sentences), base)) out.push_back(tokenize(v));
  } else if (task == 7) {
    std::string actor;
    try {
      actor = parse_count_question(question).first;
    } catch (const Error&) {
      return out;
    }
    const auto w = replay_holding(sentences);
    if (auto it = w.held.find(actor); it != w.held.end())
      for (const auto& o : it->second) out.push_back({o});
  }
  return out;
}

std::pair<Dataset, Dataset> mix_and_emit(const GeneratorConfig& cfg) {
  cfg.validate();
  auto make_split = [&](std::size_t n, std::uint64_t salt) {
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + salt);
    const auto n_iqa = static_cast<std::size_t>(std::llround(cfg.r_iqa * static_cast<double>(n)));
    std::vector<bool> flags(n, false);
    std::fill(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(n_iqa), true);
    std::shuffle(flags.begin(), flags.end(), rng);
    std::vector<TextExample> out;
    out.reserve(n);
    for (bool iqa : flags) out.push_back(generate_example(cfg, rng, iqa));
    return out;
  };
  const auto train = make_split(cfg.n_train, 1);
  const auto test = make_split(cfg.n_test, 2);
  auto corpus = corpus_of(train);
  const auto test_corpus = corpus_of(test);
  corpus.insert(corpus.end(), test_corpus.begin(), test_corpus.end());
  const Vocabulary vocab = Vocabulary::build(corpus);
  auto to_dataset = [&](const std::vector<TextExample>& texts) {
    Dataset d;
    d.vocab = vocab;
    d.info = {cfg.task, cfg.r_iqa};
    for (const auto& t : texts) d.examples.push_back(encode_example(t, vocab));
    return d;
  };
  return {to_dataset(train), to_dataset(test)};
}

std::pair<std::filesystem::path, std::filesystem::path> write_generated(const GeneratorConfig& cfg,
                                                                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto [train, test] = mix_and_emit(cfg);
  const auto train_path = dir / split_file_name(cfg.task, cfg.r_iqa, "train");
  const auto test_path = dir / split_file_name(cfg.task, cfg.r_iqa, "test");
  write_dataset(train, train_path);
  write_dataset(test, test_path);
  return {train_path, test_path};
}

}  // namespace can
