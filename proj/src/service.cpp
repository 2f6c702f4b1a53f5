#include "can/service.hpp"

#include <cmath>
#include <cstdio>

#include <httplib.h>

#include "can/error.hpp"

namespace can {

namespace {

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::WrongStage: return 409;
    case ErrorCode::NoEosEmitted: return 422;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("request body is not JSON: ") + e.what());
  }
}

template <class T>
T field(const nlohmann::json& body, const char* key) {
  try {
    return body.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidConfig, std::string("request needs field '") + key + "'");
  }
}

// Runs fn and converts library errors into JSON error responses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e);
  }
}

}  // namespace

std::string to_string(Stage stage) { return stage == Stage::AwaitingFeedback ? "awaiting_feedback" : "done"; }

std::string render_output(const Tokens& tokens) {
  Tokens t = tokens;
  if (!t.empty() && t.back() == kPeriod) t.pop_back();
  return join(t);
}

std::vector<Tokens> story_from_lines(const std::vector<std::string>& lines) {
  std::vector<Tokens> story;
  for (const auto& line : lines) {
    Tokens t = tokenize(line);
    if (!t.empty() && is_number(t.front())) t.erase(t.begin());
    if (t.empty()) continue;
    if (t.back() != kPeriod) t.emplace_back(kPeriod);
    story.push_back(std::move(t));
  }
  if (story.empty()) throw Error(ErrorCode::EmptyStory, "story has no sentences");
  return story;
}

Tokens question_from_text(const std::string& text) {
  Tokens q = tokenize(text);
  if (q.empty()) throw Error(ErrorCode::EmptyQuestion, "question is empty");
  if (q.back() != kQuestionMark) q.emplace_back(kQuestionMark);
  return q;
}

SessionManager::SessionManager(std::shared_ptr<const QaModel> model, Clock::duration idle_ttl,
                               std::function<Clock::time_point()> now, std::size_t max_len)
    : model_(std::move(model)), ttl_(idle_ttl), now_(std::move(now)), max_len_(max_len), id_rng_(std::random_device{}()) {}

std::string SessionManager::new_id() {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng_()),
                static_cast<unsigned long long>(id_rng_()));
  return buf;
}

SessionResponse SessionManager::create(const std::vector<std::string>& story_lines, const std::string& question) {
  const Tokens q = question_from_text(question);
  const auto story = story_from_lines(story_lines);
  std::vector<TokenIds> ids;
  for (const auto& s : story) ids.push_back(model_->vocab().encode(s));
  Turn turn = model_->first_turn(ids, model_->vocab().encode(q), max_len_);

  auto session = std::make_shared<Session>();
  SessionView& v = session->view;
  for (const auto& s : story) v.story.push_back(join(s));
  v.question = join(q);
  v.stage = turn.kind == OutputKind::SupplementaryQuestion ? Stage::AwaitingFeedback : Stage::Done;
  v.attention_before = turn.attention;
  for (const auto& s : v.story) v.transcript.push_back({"user", "story", s});
  v.transcript.push_back({"user", "question", v.question});
  const std::string text = render_output(model_->vocab().decode(turn.tokens));
  v.transcript.push_back({"system", to_string(turn.kind), text});
  session->state = std::move(turn.state);
  session->last_used = now_();

  purge_expired();
  std::lock_guard lock(mu_);
  std::string id;
  do id = new_id();
  while (sessions_.count(id));
  v.session_id = id;
  sessions_.emplace(id, session);
  return {id, turn.kind, text, turn.attention};
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) {
  purge_expired();
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  return it->second;
}

FeedbackResponse SessionManager::feedback(const std::string& id, const std::string& text) {
  auto session = find(id);
  std::lock_guard lock(session->mu);
  session->last_used = now_();
  SessionView& v = session->view;
  if (v.stage != Stage::AwaitingFeedback)
    throw Error(ErrorCode::WrongStage, "session '" + id + "' is not waiting for feedback");
  const Tokens fb = tokenize(text);
  if (fb.empty()) throw Error(ErrorCode::EmptyFeedback, "feedback is empty");
  const Turn turn = model_->feedback_turn(session->state, model_->vocab().encode(fb), max_len_);
  const std::string answer = render_output(model_->vocab().decode(turn.tokens));
  v.transcript.push_back({"user", "feedback", join(fb)});
  v.transcript.push_back({"system", to_string(turn.kind), answer});
  v.attention_after = turn.attention;
  v.stage = Stage::Done;
  return {turn.kind, answer, v.attention_before, v.attention_after};
}

SessionView SessionManager::get(const std::string& id) {
  auto session = find(id);
  std::lock_guard lock(session->mu);
  session->last_used = now_();
  return session->view;
}

std::size_t SessionManager::purge_expired() {
  const auto t = now_();
  std::lock_guard lock(mu_);
  return std::erase_if(sessions_, [&](const auto& kv) {
    std::lock_guard session_lock(kv.second->mu);
    return t - kv.second->last_used > ttl_;
  });
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

nlohmann::json attention_json(const std::vector<double>& weights) {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < weights.size(); ++i) list.push_back({{"index", i + 1}, {"weight", round6(weights[i])}});
  return list;
}

nlohmann::json to_json(const SessionResponse& r) {
  return {{"session_id", r.session_id}, {"kind", to_string(r.kind)}, {"text", r.text},
          {"attention", attention_json(r.attention)}};
}

nlohmann::json to_json(const FeedbackResponse& r) {
  return {{"kind", to_string(r.kind)}, {"text", r.text}, {"attention_before", attention_json(r.attention_before)},
          {"attention_after", attention_json(r.attention_after)}};
}

nlohmann::json to_json(const SessionView& v) {
  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& e : v.transcript) transcript.push_back({{"role", e.role}, {"kind", e.kind}, {"text", e.text}});
  return {{"session_id", v.session_id},
          {"stage", to_string(v.stage)},
          {"story", v.story},
          {"question", v.question},
          {"transcript", transcript},
          {"attention_before", attention_json(v.attention_before)},
          {"attention_after", attention_json(v.attention_after)}};
}

nlohmann::json health_json(const QaModel& model) {
  const auto& d = model.dims();
  return {{"status", "ok"},
          {"model_kind", to_string(model.kind())},
          {"dims", {{"K_w", d.K_w}, {"K_h", d.K_h}, {"K_c", d.K_c}, {"K_o", d.K_o}, {"V", model.vocab().size()}}}};
}

void register_routes(httplib::Server& server, SessionManager& sessions,
                     const std::optional<std::filesystem::path>& static_dir) {
  server.Get("/api/health", [&sessions](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, health_json(sessions.model()));
  });
  server.Post("/api/sessions", [&sessions](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto story = field<std::vector<std::string>>(body, "story");
      const auto question = field<std::string>(body, "question");
      send_json(res, 201, to_json(sessions.create(story, question)));
    });
  });
  server.Post(R"(/api/sessions/([^/]+)/feedback)", [&sessions](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      send_json(res, 200, to_json(sessions.feedback(req.matches[1], field<std::string>(body, "text"))));
    });
  });
  server.Get(R"(/api/sessions/([^/]+))", [&sessions](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(sessions.get(req.matches[1]))); });
  });
  if (static_dir && !server.set_mount_point("/", static_dir->string()))
    throw Error(ErrorCode::IoFailure, "cannot serve static files from " + static_dir->string());
}

}  // namespace can
