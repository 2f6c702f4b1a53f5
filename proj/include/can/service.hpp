#pragma once

// Interactive sessions over a shared read-only model, and their HTTP routes.

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "can/model.hpp"

namespace httplib {
class Server;
}

namespace can {

enum class Stage { AwaitingFeedback, Done };

std::string to_string(Stage stage);

// Decoder output as display text: answers lose their trailing ".".
std::string render_output(const Tokens& tokens);

// Story lines may carry a leading bAbI line number; missing "." / "?" are added.
std::vector<Tokens> story_from_lines(const std::vector<std::string>& lines);
Tokens question_from_text(const std::string& text);

struct SessionResponse {
  std::string session_id;
  OutputKind kind = OutputKind::Answer;
  std::string text;
  std::vector<double> attention;
};

struct FeedbackResponse {
  OutputKind kind = OutputKind::Answer;
  std::string text;
  std::vector<double> attention_before;
  std::vector<double> attention_after;
};

struct TranscriptEntry {
  std::string role;  // "user" or "system"
  std::string kind;  // story, question, supplementary_question, feedback, answer
  std::string text;
};

struct SessionView {
  std::string session_id;
  Stage stage = Stage::Done;
  std::vector<std::string> story;
  std::string question;
  std::vector<TranscriptEntry> transcript;
  std::vector<double> attention_before;
  std::vector<double> attention_after;
};

class SessionManager {
 public:
  using Clock = std::chrono::steady_clock;

  explicit SessionManager(std::shared_ptr<const QaModel> model,
                          Clock::duration idle_ttl = std::chrono::minutes(30),
                          std::function<Clock::time_point()> now = [] { return Clock::now(); },
                          std::size_t max_len = kDefaultMaxLen);

  // Throws EmptyStory, EmptySentence, EmptyQuestion or NoEosEmitted.
  SessionResponse create(const std::vector<std::string>& story_lines, const std::string& question);
  // Throws UnknownSession, WrongStage, EmptyFeedback or NoEosEmitted.
  FeedbackResponse feedback(const std::string& id, const std::string& text);
  // Throws UnknownSession.
  SessionView get(const std::string& id);

  // Drops sessions idle for longer than the ttl; returns how many.
  std::size_t purge_expired();
  std::size_t size() const;
  const QaModel& model() const { return *model_; }

 private:
  struct Session {
    std::mutex mu;
    SessionView view;
    TurnState state;
    Clock::time_point last_used;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::string new_id();

  std::shared_ptr<const QaModel> model_;
  Clock::duration ttl_;
  std::function<Clock::time_point()> now_;
  std::size_t max_len_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 id_rng_;
};

// Attention as [{index (1-based), weight rounded to 6 decimals}].
nlohmann::json attention_json(const std::vector<double>& weights);
nlohmann::json to_json(const SessionResponse& r);
nlohmann::json to_json(const FeedbackResponse& r);
nlohmann::json to_json(const SessionView& v);
nlohmann::json health_json(const QaModel& model);

// POST /api/sessions, POST /api/sessions/{id}/feedback, GET /api/sessions/{id},
// GET /api/health, and static files under "/" when static_dir is given.
void register_routes(httplib::Server& server, SessionManager& sessions,
                     const std::optional<std::filesystem::path>& static_dir = std::nullopt);

}  // namespace can
