#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "can/checkpoint.hpp"
#include "can/error.hpp"
#include "can/ibabi.hpp"
#include "can/metrics.hpp"
#include "can/service.hpp"
#include "can/train.hpp"

namespace py = pybind11;
using namespace can;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<Tokens> tokenize_all(const std::vector<std::string>& lines) {
  std::vector<Tokens> out;
  for (const auto& l : lines) out.push_back(tokenize(l));
  return out;
}

py::dict example_dict(const TextExample& ex) {
  py::dict d;
  std::vector<std::string> story;
  for (const auto& s : ex.sentences) story.push_back(join(s));
  d["story"] = story;
  d["question"] = join(ex.question);
  d["answer"] = join(ex.answer);
  d["supplementary_question"] = ex.supplementary_question ? py::cast(join(*ex.supplementary_question)) : py::none();
  d["feedback"] = ex.feedback ? py::cast(join(*ex.feedback)) : py::none();
  d["supporting_ids"] = ex.supporting_ids;
  return d;
}

py::dict dims_dict(const ModelDims& d) {
  py::dict out;
  out["K_w"] = d.K_w;
  out["K_h"] = d.K_h;
  out["K_c"] = d.K_c;
  out["K_o"] = d.K_o;
  return out;
}

struct Model {
  std::shared_ptr<QaModel> impl;

  // One interactive round: the first decode and, when it is a supplementary
  // question and feedback is given, the refined answer.
  py::dict ask(const std::vector<std::string>& story_lines, const std::string& question,
               const std::optional<std::string>& feedback, std::size_t max_len) const {
    const auto story = story_from_lines(story_lines);
    std::vector<TokenIds> ids;
    for (const auto& s : story) ids.push_back(impl->vocab().encode(s));
    const Turn first = impl->first_turn(ids, impl->vocab().encode(question_from_text(question)), max_len);
    py::dict out;
    out["kind"] = to_string(first.kind);
    out["text"] = render_output(impl->vocab().decode(first.tokens));
    out["attention"] = first.attention;
    if (first.kind == OutputKind::SupplementaryQuestion && feedback) {
      const Tokens fb = tokenize(*feedback);
      if (fb.empty()) throw Error(ErrorCode::EmptyFeedback, "feedback is empty");
      const Turn second = impl->feedback_turn(first.state, impl->vocab().encode(fb), max_len);
      out["answer"] = render_output(impl->vocab().decode(second.tokens));
      out["attention_after"] = second.attention;
    }
    return out;
  }
};

}  // namespace

PYBIND11_MODULE(canqa, m) {
  m.doc() = "Context-aware attention network for interactive question answering";

  py::register_exception<Error>(m, "CanError");

  m.def("tokenize", [](const std::string& s) { return tokenize(s); });
  m.def("bleu", [](const std::string& c, const std::string& r, int n) { return bleu(tokenize(c), tokenize(r), n); },
        py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4);
  m.def("meteor", [](const std::string& c, const std::string& r) { return meteor_lite(tokenize(c), tokenize(r)); },
        py::arg("candidate"), py::arg("reference"));
  m.def(
      "oracle_answer",
      [](int task, const std::vector<std::string>& story, const std::string& question,
         const std::optional<std::string>& feedback) {
        std::optional<Tokens> fb;
        if (feedback) fb = tokenize(*feedback);
        return join(oracle_answer(task, tokenize_all(story), tokenize(question), fb));
      },
      py::arg("task"), py::arg("story"), py::arg("question"), py::arg("feedback") = py::none());

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& p) { return load_dataset(p); })
      .def_static("parse", [](const std::string& text) { return parse_dataset(text); })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { write_dataset(d, p); })
      .def("__len__", [](const Dataset& d) { return d.examples.size(); })
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.examples.size()) throw py::index_error();
             return example_dict(decode_example(d.examples[i], d.vocab));
           })
      .def_property_readonly("vocabulary", [](const Dataset& d) { return d.vocab.tokens(); })
      .def_property_readonly("task", [](const Dataset& d) { return d.info.task; })
      .def_property_readonly("r_iqa", [](const Dataset& d) { return d.info.r_iqa; })
      .def("to_text", [](const Dataset& d) { return format_examples(d.texts()); });

  m.def(
      "generate",
      [](int task, double r_iqa, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
        GeneratorConfig g;
        g.task = task;
        g.r_iqa = r_iqa;
        g.n_train = n_train;
        g.n_test = n_test;
        g.seed = seed;
        return mix_and_emit(g);
      },
      py::arg("task"), py::arg("r_iqa") = 0.0, py::arg("n_train") = 1000, py::arg("n_test") = 1000,
      py::arg("seed") = 0);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_train_config(text); })
      .def_property(
          "model", [](const TrainConfig& c) { return to_string(c.model); },
          [](TrainConfig& c, const std::string& s) { c.model = model_kind_from_string(s); })
      .def_property(
          "K_w", [](const TrainConfig& c) { return c.dims.K_w; }, [](TrainConfig& c, std::size_t v) { c.dims.K_w = v; })
      .def_property(
          "K_h", [](const TrainConfig& c) { return c.dims.K_h; }, [](TrainConfig& c, std::size_t v) { c.dims.K_h = v; })
      .def_property(
          "K_c", [](const TrainConfig& c) { return c.dims.K_c; }, [](TrainConfig& c, std::size_t v) { c.dims.K_c = v; })
      .def_property(
          "K_o", [](const TrainConfig& c) { return c.dims.K_o; }, [](TrainConfig& c, std::size_t v) { c.dims.K_o = v; })
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("val_fraction", &TrainConfig::val_fraction)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("max_seconds", &TrainConfig::max_seconds)
      .def_readwrite("max_len", &TrainConfig::max_len)
      .def("__str__", [](const TrainConfig& c) { return format_train_config(c); });

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return Model{load_checkpoint(p)}; })
      .def("save", [](const Model& mo, const std::filesystem::path& p) { save_checkpoint(*mo.impl, p); })
      .def_property_readonly("kind", [](const Model& mo) { return to_string(mo.impl->kind()); })
      .def_property_readonly("dims", [](const Model& mo) { return dims_dict(mo.impl->dims()); })
      .def_property_readonly("vocabulary", [](const Model& mo) { return mo.impl->vocab().tokens(); })
      .def_property_readonly("parameter_count", [](const Model& mo) { return mo.impl->parameter_count(); })
      .def("ask", &Model::ask, py::arg("story"), py::arg("question"), py::arg("feedback") = py::none(),
           py::arg("max_len") = kDefaultMaxLen)
      .def("evaluate_qa", [](const Model& mo, const Dataset& d) { return eval_qa(*mo.impl, d); })
      .def(
          "evaluate_iqa",
          [](const Model& mo, const Dataset& d, std::uint64_t seed, bool transcripts) {
            return to_py(report_to_json(eval_iqa(*mo.impl, d, seed), transcripts));
          },
          py::arg("dataset"), py::arg("seed") = 0, py::arg("transcripts") = false);

  m.def(
      "train",
      [](const Dataset& d, const TrainConfig& cfg, const std::function<void(py::dict)>& on_epoch) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(d, cfg, [&](const EpochRecord& e) {
            if (!on_epoch) return;
            py::gil_scoped_acquire acquire;
            py::dict rec;
            rec["epoch"] = e.epoch;
            rec["train_loss"] = e.train_loss;
            rec["val_error"] = e.val_error;
            rec["seconds"] = e.seconds;
            on_epoch(rec);
          });
        }
        py::dict info;
        info["best_epoch"] = r.best_epoch;
        info["best_val_error"] = r.best_val_error;
        info["epochs"] = r.history.size();
        return py::make_tuple(Model{std::shared_ptr<QaModel>(std::move(r.model))}, info);
      },
      py::arg("dataset"), py::arg("config"), py::arg("on_epoch") = nullptr);
}
