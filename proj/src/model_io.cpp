// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fillerlab/model.hpp"

namespace fillerlab {

using nlohmann::json;

namespace {

constexpr char kModelMagic[8] = {'F', 'L', 'M', 'D', 'L', '0', '0', '1'};
constexpr char kOptMagic[8] = {'F', 'L', 'O', 'P', 'T', '0', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::string s(read_u32(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  if (!in) throw DataError("truncated checkpoint");
  return s;
}

template <class S>
void write_array(std::ostream& out, const Tensor<S>& t) {
  write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(S)));
}

template <class S>
Tensor<S> read_array(std::istream& in) {
  std::vector<int> shape(read_u32(in));
  for (int& d : shape) d = static_cast<int>(read_u32(in));
  Tensor<S> t(shape);
  in.read(reinterpret_cast<char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(S)));
  if (!in) throw DataError("truncated checkpoint array");
  return t;
}

json config_to_json(const ModelConfig& c) {
  return json{{"layers", c.layers},
              {"hidden", c.hidden},
              {"heads", c.heads},
              {"ffn_hidden", c.ffn_hidden},
              {"vocab_size", c.vocab_size},
              {"input_width", c.input_width},
              {"output_width", c.output_width},
              {"max_seq_len", c.max_seq_len},
              {"rope_base", c.rope_base},
              {"init_std", c.init_std}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.input_width = j.at("input_width").get<int>();
  c.output_width = j.at("output_width").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.rope_base = j.at("rope_base").get<double>();
  c.init_std = j.at("init_std").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kModelMagic, sizeof kModelMagic);
  write_string(out, config_to_json(model.cfg).dump());
  write_u32(out, static_cast<std::uint32_t>(model.params.size()));
  for (size_t i = 0; i < model.params.size(); ++i) {
    write_string(out, model.params.names()[i]);
    write_array(out, model.params[i].value);
  }
  if (!out) throw DataError("write failed for checkpoint " + path);
}

Model<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw DataError("not a model checkpoint: " + path);
  ModelConfig cfg;
  try {
    cfg = config_from_json(json::parse(read_string(in)));
  } catch (const json::exception& e) {
    throw DataError(std::string("bad checkpoint config: ") + e.what());
  }
  cfg.validate();
  Model<float> model;
  model.cfg = cfg;
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    model.params.add(name, read_array<float>(in));
  }
  return model;
}

void save_optimizer(const Adam<float>& opt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write optimizer state " + path);
  out.write(kOptMagic, sizeof kOptMagic);
  const std::int64_t step = opt.step_count();
  out.write(reinterpret_cast<const char*>(&step), sizeof step);
  auto& state = const_cast<Adam<float>&>(opt).state();
  write_u32(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, slot] : state) {
    write_string(out, name);
    write_array(out, slot.m);
    write_array(out, slot.v);
  }
  if (!out) throw DataError("write failed for optimizer state " + path);
}

void load_optimizer(Adam<float>& opt, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open optimizer state " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kOptMagic, sizeof magic) != 0)
    throw DataError("not an optimizer state file: " + path);
  std::int64_t step = 0;
  in.read(reinterpret_cast<char*>(&step), sizeof step);
  if (!in) throw DataError("truncated optimizer state");
  opt.set_step(step);
  opt.state().clear();
  const std::uint32_t count = read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    auto& slot = opt.state()[name];
    slot.m = read_array<double>(in);
    slot.v = read_array<double>(in);
  }
}

}  // namespace fillerlab
