#include "can/checkpoint.hpp"

#include <bit>

#include "can/error.hpp"

namespace can {

namespace {

[[noreturn]] void mismatch(const std::string& why) { throw Error(ErrorCode::ManifestMismatch, why); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

nlohmann::json manifest(const QaModel& model) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto* p : model.parameters()) list.push_back({{"name", p->name}, {"shape", p->value.shape().dims()}});
  return list;
}

}  // namespace

nlohmann::json checkpoint_header(const QaModel& model) {
  const auto& d = model.dims();
  return {{"version", kCheckpointVersion},
          {"model", to_string(model.kind())},
          {"dims", {{"K_w", d.K_w}, {"K_h", d.K_h}, {"K_c", d.K_c}, {"K_o", d.K_o}}},
          {"vocabulary", model.vocab().tokens()},
          {"parameters", manifest(model)}};
}

std::string serialize_checkpoint(const QaModel& model) {
  const std::string header = checkpoint_header(model).dump();
  std::string out(kCheckpointMagic);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto* p : model.parameters()) {
    for (double x : p->value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

std::unique_ptr<QaModel> parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw Error(ErrorCode::BadMagic, "not a checkpoint (magic bytes differ)");
  std::size_t at = kCheckpointMagic.size();
  if (bytes.size() < at + 4) mismatch("truncated header length");
  const std::uint32_t header_len = get_u32(bytes, at);
  at += 4;
  if (bytes.size() < at + header_len) mismatch("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(at, header_len));
  } catch (const nlohmann::json::exception& e) {
    mismatch(std::string("unreadable header: ") + e.what());
  }
  at += header_len;

  std::unique_ptr<QaModel> model;
  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw Error(ErrorCode::VersionUnsupported, "checkpoint version " + std::to_string(version));
    const auto& d = header.at("dims");
    ModelDims dims{d.at("K_w").get<std::size_t>(), d.at("K_h").get<std::size_t>(), d.at("K_c").get<std::size_t>(),
                   d.at("K_o").get<std::size_t>()};
    const auto tokens = header.at("vocabulary").get<std::vector<std::string>>();
    model = make_model(model_kind_from_string(header.at("model").get<std::string>()), Vocabulary::from_tokens(tokens),
                       dims);
    if (header.at("parameters") != manifest(*model)) mismatch("parameter manifest does not match the model layout");
  } catch (const nlohmann::json::exception& e) {
    mismatch(std::string("malformed header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::VersionUnsupported || e.code() == ErrorCode::ManifestMismatch) throw;
    mismatch(e.what());
  }

  const std::size_t expected = model->parameter_count() * 4;
  if (bytes.size() - at != expected)
    mismatch("payload has " + std::to_string(bytes.size() - at) + " bytes, manifest needs " + std::to_string(expected));
  for (auto* p : model->parameters()) {
    for (double& x : p->value.data()) {
      x = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
      at += 4;
    }
  }
  return model;
}

void save_checkpoint(const QaModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

std::unique_ptr<QaModel> load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace can
