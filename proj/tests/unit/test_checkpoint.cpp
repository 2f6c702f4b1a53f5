#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "can/can.hpp"
#include "can/checkpoint.hpp"
#include "can/error.hpp"
#include "helpers.hpp"

using namespace can;
using namespace testing;

namespace {

std::unique_ptr<QaModel> float_model(ModelKind kind, std::uint64_t seed) {
  auto m = make_model(kind, toy_vocab(), {3, 4, 5, 2});
  randomize(m->parameters(), seed);
  for (auto* p : m->parameters())
    for (double& x : p->value.data()) x = static_cast<double>(static_cast<float>(x));
  return m;
}

ErrorCode parse_code(std::string_view bytes) {
  try {
    parse_checkpoint(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidConfig;
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[at + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

}  // namespace

TEST_CASE("checkpoints round trip exactly") {
  for (ModelKind kind : {ModelKind::Can, ModelKind::EncDec}) {
    auto m = float_model(kind, 3);
    const std::string bytes = serialize_checkpoint(*m);
    auto back = parse_checkpoint(bytes);
    CHECK(back->kind() == kind);
    CHECK(back->vocab() == m->vocab());
    CHECK(back->dims() == m->dims());
    const auto a = std::as_const(*m).parameters();
    const auto b = std::as_const(*back).parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      CHECK(a[i]->value == b[i]->value);
    }
    CHECK(serialize_checkpoint(*back) == bytes);
  }
}

TEST_CASE("the layout is magic, little-endian header length, JSON header, float32 payload") {
  auto m = float_model(ModelKind::Can, 4);
  const std::string bytes = serialize_checkpoint(*m);
  CHECK(bytes.substr(0, 8) == "CANCKPT1");
  const std::uint32_t len = static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8 |
                            static_cast<unsigned char>(bytes[10]) << 16 |
                            static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[11])) << 24;
  const auto header = nlohmann::json::parse(bytes.substr(12, len));
  CHECK(header.at("version") == 1);
  CHECK(header.at("model") == "can");
  CHECK(header.at("dims").at("K_c") == 5);
  CHECK(header.at("vocabulary").get<std::vector<std::string>>() == m->vocab().tokens());
  CHECK(header.at("parameters")[0].at("name") == "W_w");
  CHECK(header.at("parameters")[0].at("shape") == nlohmann::json::array({3, m->vocab().size()}));
  CHECK(bytes.size() == 12 + len + 4 * m->parameter_count());
  float first;
  std::memcpy(&first, bytes.data() + 12 + len, 4);
  CHECK(static_cast<double>(first) == m->parameters()[0]->value[0]);
}

TEST_CASE("a reloaded model answers identically") {
  auto m = float_model(ModelKind::Can, 5);
  auto* can = dynamic_cast<CanModel*>(m.get());
  can->params().dec.b_o.value[kPeriodId] = 3.0f;
  auto back = parse_checkpoint(serialize_checkpoint(*m));
  const Vocabulary v = toy_vocab();
  const std::vector<TokenIds> story = {v.encode(tokenize("mary moved to the bathroom ."))};
  const TokenIds q = v.encode(tokenize("where is mary ?"));
  const Turn a = m->first_turn(story, q);
  const Turn b = back->first_turn(story, q);
  CHECK(a.tokens == b.tokens);
  CHECK(a.attention == b.attention);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto m = float_model(ModelKind::EncDec, 6);
  const std::string bytes = serialize_checkpoint(*m);
  CHECK(parse_code("") == ErrorCode::BadMagic);
  CHECK(parse_code("CANCKPT2" + bytes.substr(8)) == ErrorCode::BadMagic);
  CHECK(parse_code(bytes.substr(0, 10)) == ErrorCode::ManifestMismatch);
  CHECK(parse_code(bytes.substr(0, 40)) == ErrorCode::ManifestMismatch);
  CHECK(parse_code(bytes.substr(0, bytes.size() - 4)) == ErrorCode::ManifestMismatch);
  CHECK(parse_code(bytes + "xxxx") == ErrorCode::ManifestMismatch);

  std::string wrong_len = bytes;
  put_u32(wrong_len, 8, 5);
  CHECK(parse_code(wrong_len) == ErrorCode::ManifestMismatch);

  const std::uint32_t len = static_cast<std::uint32_t>(nlohmann::json(checkpoint_header(*m)).dump().size());
  auto rewrite = [&](const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json h = checkpoint_header(*m);
    edit(h);
    const std::string hs = h.dump();
    std::string out(kCheckpointMagic);
    out += std::string(4, '\0');
    put_u32(out, 8, static_cast<std::uint32_t>(hs.size()));
    return out + hs + bytes.substr(12 + len);
  };
  CHECK_NOTHROW(parse_checkpoint(rewrite([](nlohmann::json&) {})));
  CHECK(parse_code(rewrite([](nlohmann::json& h) { h["version"] = 2; })) == ErrorCode::VersionUnsupported);
  CHECK(parse_code(rewrite([](nlohmann::json& h) { h["dims"]["K_h"] = 7; })) == ErrorCode::ManifestMismatch);
  CHECK(parse_code(rewrite([](nlohmann::json& h) { h["parameters"][0]["name"] = "W_x"; })) ==
        ErrorCode::ManifestMismatch);
  CHECK(parse_code(rewrite([](nlohmann::json& h) { h["model"] = "dmn"; })) == ErrorCode::ManifestMismatch);
  CHECK(parse_code(rewrite([](nlohmann::json& h) { h.erase("vocabulary"); })) == ErrorCode::ManifestMismatch);
}

TEST_CASE("checkpoint files") {
  const auto path = std::filesystem::temp_directory_path() / "can_ckpt_test.bin";
  auto m = float_model(ModelKind::Can, 7);
  save_checkpoint(*m, path);
  CHECK(serialize_checkpoint(*load_checkpoint(path)) == serialize_checkpoint(*m));
  std::filesystem::remove(path);
  try {
    load_checkpoint(path);
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoFailure);
  }
}
