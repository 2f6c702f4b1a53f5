// can: generate ibAbI data, train, evaluate, serve and chat with a model.

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <httplib.h>

#include "can/checkpoint.hpp"
#include "can/error.hpp"
#include "can/ibabi.hpp"
#include "can/metrics.hpp"
#include "can/service.hpp"
#include "can/train.hpp"

namespace {

using namespace can;

int run_generate(int task, double ratio, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                 const std::string& out) {
  GeneratorConfig cfg;
  cfg.task = task;
  cfg.r_iqa = ratio;
  cfg.n_train = n_train;
  cfg.n_test = n_test;
  cfg.seed = seed;
  const auto [train_path, test_path] = write_generated(cfg, out);
  std::cout << train_path.string() << "\n" << test_path.string() << "\n";
  return 0;
}

int run_train(const std::string& data, const std::string& config, const std::string& out,
              const std::optional<std::string>& model, std::optional<int> task, bool grid) {
  TrainConfig cfg = config.empty() ? TrainConfig{} : load_train_config(config);
  if (model) cfg.model = model_kind_from_string(*model);
  const auto path = find_split_file(data, "train", task);
  const Dataset ds = load_dataset(path);
  std::cerr << "training " << to_string(cfg.model) << " on " << path.string() << " (" << ds.examples.size()
            << " examples, vocabulary " << ds.vocab.size() << ")\n";
  std::ofstream history(out + ".history.jsonl");
  auto log = [&](const EpochRecord& r) {
    const std::string line = history_line(r);
    history << line << "\n" << std::flush;
    std::cerr << line << "\n";
  };
  std::unique_ptr<QaModel> trained;
  if (grid) {
    const auto g = default_grid(cfg);
    GridResult r = grid_search(ds, g, log);
    for (const auto& [c, err] : r.scores)
      std::cerr << "grid K_h=" << c.dims.K_h << " batch=" << c.batch_size << " val_error=" << err << "\n";
    trained = std::move(r.result.model);
  } else {
    TrainResult r = train(ds, cfg, log);
    std::cerr << "best epoch " << r.best_epoch << " val_error " << r.best_val_error << "\n";
    trained = std::move(r.model);
  }
  save_checkpoint(*trained, out);
  std::cout << out << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& data, std::uint64_t seed, const std::string& report,
             std::optional<int> task, bool transcripts) {
  const auto model = load_checkpoint(model_path);
  const auto path = find_split_file(data, "test", task);
  const Dataset ds = load_dataset(path);
  const EvalReport r = eval_iqa(*model, ds, seed);
  nlohmann::json j = report_to_json(r, transcripts);
  j["qa_error_rate"] = eval_qa(*model, ds);
  j["dataset"] = path.filename().string();
  j["task"] = ds.info.task;
  j["r_iqa"] = ds.info.r_iqa;
  j["seed"] = seed;
  const std::string text = j.dump(2) + "\n";
  if (report.empty() || report == "-") std::cout << text;
  else write_file(report, text);
  std::cerr << "accuracy " << r.accuracy << " qa_error_rate " << j["qa_error_rate"].get<double>() << "\n";
  return 0;
}

int run_serve(const std::string& model_path, const std::string& addr, const std::string& static_dir) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--addr must be HOST:PORT");
  const std::string host = addr.substr(0, colon);
  const int port = std::stoi(addr.substr(colon + 1));
  std::shared_ptr<const QaModel> model = load_checkpoint(model_path);
  SessionManager sessions(model);
  httplib::Server server;
  register_routes(server, sessions, static_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(static_dir));
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) throw Error(ErrorCode::IoFailure, "cannot listen on " + addr);
  return 0;
}

int run_ask(const std::string& model_path, const std::string& story_path, const std::string& question) {
  const auto model = load_checkpoint(model_path);
  std::vector<std::string> lines;
  {
    std::istringstream in(read_file(story_path));
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  const auto story = story_from_lines(lines);
  std::vector<TokenIds> ids;
  for (const auto& s : story) ids.push_back(model->vocab().encode(s));
  for (std::size_t i = 0; i < story.size(); ++i) std::cout << i + 1 << " " << join(story[i]) << "\n";

  auto ask_one = [&](const std::string& text) {
    const TokenIds q = model->vocab().encode(question_from_text(text));
    const FeedbackProvider provider = [&](const TokenIds& sq) -> std::optional<TokenIds> {
      std::cout << "system: " << join(model->vocab().decode(sq)) << "\nfeedback> " << std::flush;
      std::string fb;
      if (!std::getline(std::cin, fb)) return std::nullopt;
      return model->vocab().encode(tokenize(fb));
    };
    const Transcript t = answer_question(*model, ids, q, provider);
    std::cout << "system: " << render_output(model->vocab().decode(t.answer())) << "\n";
  };

  if (!question.empty()) {
    ask_one(question);
    return 0;
  }
  std::cout << "question> " << std::flush;
  for (std::string line; std::getline(std::cin, line); std::cout << "question> " << std::flush) {
    if (line.empty()) continue;
    try {
      ask_one(line);
    } catch (const Error& e) {
      std::cout << "error: " << e.what() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware attention network for interactive question answering"};
  app.require_subcommand(1);

  int task = 1;
  double ratio = 0.0;
  std::size_t n_train = 1000, n_test = 1000;
  std::uint64_t seed = 0;
  std::string out, data, config, model, report, addr = "127.0.0.1:8080", static_dir, story, question;
  std::optional<std::string> kind;
  std::optional<int> task_filter;
  bool grid = false, transcripts = false;

  auto* gen = app.add_subcommand("generate", "write ibAbI train/test files");
  gen->add_option("--task", task, "task id (1, 4 or 7)")->check(CLI::IsMember({1, 4, 7}));
  gen->add_option("--ratio", ratio, "fraction of IQA examples")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--train", n_train, "training examples");
  gen->add_option("--test", n_test, "test examples");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--data", data, "directory with a *_train.txt file")->required();
  tr->add_option("--config", config, "key = value training configuration");
  tr->add_option("--out", out, "checkpoint path")->required();
  tr->add_option("--model", kind, "can or encdec")->check(CLI::IsMember({"can", "encdec"}));
  tr->add_option("--task", task_filter, "pick the task when the directory holds several");
  tr->add_flag("--grid", grid, "grid search K_h x batch size around the configuration");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a *_test.txt file");
  ev->add_option("--model", model, "checkpoint")->required();
  ev->add_option("--data", data, "directory with a *_test.txt file")->required();
  ev->add_option("--seed", seed, "simulated-user seed");
  ev->add_option("--report", report, "report path ('-' for stdout)");
  ev->add_option("--task", task_filter, "pick the task when the directory holds several");
  ev->add_flag("--transcripts", transcripts, "include per-example transcripts");

  auto* sv = app.add_subcommand("serve", "serve the session API");
  sv->add_option("--model", model, "checkpoint")->required();
  sv->add_option("--addr", addr, "HOST:PORT");
  sv->add_option("--static", static_dir, "directory served under /");

  auto* ask = app.add_subcommand("ask", "answer questions about a story in the terminal");
  ask->add_option("--model", model, "checkpoint")->required();
  ask->add_option("--story", story, "file with one statement per line")->required();
  ask->add_option("--question", question, "ask once and exit");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return run_generate(task, ratio, n_train, n_test, seed, out);
    if (*tr) return run_train(data, config, out, kind, task_filter, grid);
    if (*ev) return run_eval(model, data, seed, report, task_filter, transcripts);
    if (*sv) return run_serve(model, addr, static_dir);
    if (*ask) return run_ask(model, story, question);
  } catch (const can::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
