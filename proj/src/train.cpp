#include "can/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "can/error.hpp"

namespace can {

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_config("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

std::string last_component(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

auto config_key(const TrainConfig& c) {
  return std::make_tuple(static_cast<int>(c.model), c.dims.K_w, c.dims.K_h, c.dims.K_c, c.dims.K_o, c.batch_size,
                         c.learning_rate, c.epochs, c.seed, c.val_fraction, c.clip_norm, c.patience, c.max_seconds,
                         c.max_len, c.beta1, c.beta2, c.epsilon);
}

bool matches(const TokenIds& got, const TokenIds& want) { return got == want; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) bad_config("learning_rate must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) bad_config("val_fraction must lie in (0, 0.5)");
  if (batch_size == 0) bad_config("batch_size must be positive");
  if (epochs == 0) bad_config("epochs must be positive");
  if (dims.K_w == 0 || dims.K_h == 0 || dims.K_c == 0 || dims.K_o == 0) bad_config("dimensions must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) bad_config("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) bad_config("epsilon must be positive");
  if (clip_norm < 0.0 || max_seconds < 0.0) bad_config("clip_norm and max_seconds must be non-negative");
  if (max_len == 0) bad_config("max_len must be positive");
}

TrainConfig parse_train_config(std::string_view text, TrainConfig c) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad_config("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "model") c.model = model_kind_from_string(value);
    else if (key == "K_w") c.dims.K_w = parse_number<std::size_t>(key, value);
    else if (key == "K_h") c.dims.K_h = parse_number<std::size_t>(key, value);
    else if (key == "K_c") c.dims.K_c = parse_number<std::size_t>(key, value);
    else if (key == "K_o") c.dims.K_o = parse_number<std::size_t>(key, value);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
    else if (key == "beta1") c.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") c.beta2 = parse_number<double>(key, value);
    else if (key == "epsilon") c.epsilon = parse_number<double>(key, value);
    else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "val_fraction") c.val_fraction = parse_number<double>(key, value);
    else if (key == "clip_norm") c.clip_norm = parse_number<double>(key, value);
    else if (key == "patience") c.patience = parse_number<std::size_t>(key, value);
    else if (key == "max_seconds") c.max_seconds = parse_number<double>(key, value);
    else if (key == "max_len") c.max_len = parse_number<std::size_t>(key, value);
    else bad_config("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) { return parse_train_config(read_file(path)); }

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "model = " << to_string(c.model) << "\n"
      << "K_w = " << c.dims.K_w << "\nK_h = " << c.dims.K_h << "\nK_c = " << c.dims.K_c << "\nK_o = " << c.dims.K_o
      << "\nlearning_rate = " << c.learning_rate << "\nbeta1 = " << c.beta1 << "\nbeta2 = " << c.beta2
      << "\nepsilon = " << c.epsilon << "\nbatch_size = " << c.batch_size << "\nepochs = " << c.epochs
      << "\nseed = " << c.seed << "\nval_fraction = " << c.val_fraction << "\nclip_norm = " << c.clip_norm
      << "\npatience = " << c.patience << "\nmax_seconds = " << c.max_seconds << "\nmax_len = " << c.max_len << "\n";
  return out.str();
}

void init_params(QaModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (ad::Parameter* p : model.parameters()) {
    const std::string leaf = last_component(p->name);
    auto data = p->value.data();
    if (leaf.rfind("b_", 0) == 0) {
      std::fill(data.begin(), data.end(), 0.0);
      continue;
    }
    double bound = std::sqrt(3.0);
    if (leaf != "W_w") {
      const auto& s = p->value.shape();
      bound = std::sqrt(6.0 / static_cast<double>(s.rows() + s.cols()));
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : data) x = dist(rng);
  }
}

Gradients zero_gradients(std::span<ad::Parameter* const> params) {
  Gradients g;
  g.reserve(params.size());
  for (const auto* p : params) g.emplace_back(p->value.size(), 0.0);
  return g;
}

Gradients zero_gradients(const QaModel& model) {
  Gradients g;
  for (const auto* p : model.parameters()) g.emplace_back(p->value.size(), 0.0);
  return g;
}

double clip_global_norm(Gradients& grads, double threshold) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (threshold > 0.0 && norm > threshold) {
    const double scale = threshold / norm;
    for (auto& g : grads)
      for (double& x : g) x *= scale;
  }
  return norm;
}

OptimizerState::OptimizerState(std::span<ad::Parameter* const> params, double lr_, double b1, double b2, double eps)
    : m(zero_gradients(params)), v(zero_gradients(params)), lr(lr_), beta1(b1), beta2(b2), epsilon(eps) {}

void adam_step(OptimizerState& opt, std::span<ad::Parameter* const> params, const Gradients& grads) {
  if (grads.size() != params.size() || opt.m.size() != params.size())
    throw Error(ErrorCode::ShapeMismatch, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                              std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->value.size() || opt.m[i].size() != grads[i].size())
      throw Error(ErrorCode::ShapeMismatch, "adam_step: gradient size mismatch for " + params[i]->name);
    for (double g : grads[i])
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient for " + params[i]->name);
  }
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value.data();
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      w[j] -= opt.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + opt.epsilon);
    }
  }
}

double accumulate_example(const QaModel& model, const StoryExample& ex, Gradients& acc) {
  ad::Tape tape;
  ad::Var loss = model.example_loss(tape, ex);
  tape.backward(loss);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* g = tape.param_grad(*params[i]);
    if (!g) continue;
    for (std::size_t j = 0; j < g->size(); ++j) acc[i][j] += (*g)[j];
  }
  return loss[0];
}

double validation_error(const QaModel& model, std::span<const StoryExample> examples, std::size_t max_len) {
  if (examples.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& ex : examples) {
    try {
      const Turn first = model.first_turn(ex.sentences, ex.question, max_len);
      if (!ex.is_iqa()) {
        wrong += !matches(first.tokens, ex.answer);
        continue;
      }
      if (!matches(first.tokens, *ex.supplementary_question)) {
        ++wrong;
        continue;
      }
      wrong += !matches(model.feedback_turn(first.state, *ex.feedback, max_len).tokens, ex.answer);
    } catch (const Error&) {
      ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(examples.size());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::size_t n, double fraction,
                                                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  else n_val = 0;
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

std::string history_line(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_error", r.val_error},
                      {"seconds", r.seconds}};
  return j.dump();
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.examples.empty()) throw Error(ErrorCode::EmptyInput, "training set is empty");
  TrainResult result;
  result.model = make_model(cfg.model, data.vocab, cfg.dims);
  QaModel& model = *result.model;
  init_params(model, cfg.seed);
  const auto params = model.parameters();
  OptimizerState opt(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  auto [train_idx, val_idx] = split_validation(data.examples.size(), cfg.val_fraction, cfg.seed);
  std::vector<StoryExample> val;
  for (auto i : val_idx) val.push_back(data.examples[i]);

  std::vector<ad::Tensor> best;
  for (const auto* p : params) best.push_back(p->value);
  result.best_val_error = std::numeric_limits<double>::infinity();

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed + 1);
  Gradients acc = zero_gradients(params);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < train_idx.size(); b += cfg.batch_size) {
      for (auto& g : acc) std::fill(g.begin(), g.end(), 0.0);
      const std::size_t e = std::min(train_idx.size(), b + cfg.batch_size);
      for (std::size_t k = b; k < e; ++k) total += accumulate_example(model, data.examples[train_idx[k]], acc);
      clip_global_norm(acc, cfg.clip_norm);
      adam_step(opt, params, acc);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(std::max<std::size_t>(1, train_idx.size()));
    rec.val_error = validation_error(model, val, cfg.max_len);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_error < result.best_val_error) {
      result.best_val_error = rec.val_error;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
    }
    if (cfg.patience && epoch - result.best_epoch >= cfg.patience) break;
    if (cfg.max_seconds > 0.0 && rec.seconds >= cfg.max_seconds) break;
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

GridResult grid_search(const Dataset& data, std::span<const TrainConfig> grid, const EpochCallback& on_epoch) {
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "grid is empty");
  GridResult out;
  bool have = false;
  std::size_t best_count = 0;
  for (const auto& cfg : grid) {
    TrainResult r = train(data, cfg, on_epoch);
    out.scores.emplace_back(cfg, r.best_val_error);
    const std::size_t count = r.model->parameter_count();
    const bool better = !have || r.best_val_error < out.result.best_val_error ||
                        (r.best_val_error == out.result.best_val_error &&
                         (count < best_count || (count == best_count && config_key(cfg) < config_key(out.best))));
    if (better) {
      out.best = cfg;
      out.result = std::move(r);
      best_count = count;
      have = true;
    }
  }
  return out;
}

std::vector<TrainConfig> default_grid(const TrainConfig& base) {
  std::vector<TrainConfig> grid;
  for (std::size_t k : {32, 64})
    for (std::size_t batch : {16, 32}) {
      TrainConfig c = base;
      c.dims.K_h = k;
      c.batch_size = batch;
      grid.push_back(c);
    }
  return grid;
}

}  // namespace can
