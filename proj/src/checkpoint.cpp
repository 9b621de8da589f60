#include "evdl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "evdl/errors.hpp"

namespace evdl {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'V', 'D', 'L'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::uint32_t crc32_of(const std::string& data, std::size_t pos, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + pos), static_cast<uInt>(len));
  return static_cast<std::uint32_t>(crc);
}

// Visits every tensor in payload order.
template <typename Model, typename Fn>
void for_each_tensor(Model& model, Fn&& fn) {
  auto& layers = model.network.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    fn(prefix + ".weights", std::vector<int>{layers[l].outputs, layers[l].inputs}, layers[l].weights);
    fn(prefix + ".bias", std::vector<int>{layers[l].outputs}, layers[l].bias);
  }
  if (model.optimizer) {
    for (const char* which : {"m", "v"}) {
      auto& moments = which[0] == 'm' ? model.optimizer->first_moment : model.optimizer->second_moment;
      for (std::size_t l = 0; l < moments.size(); ++l) {
        const std::string prefix = std::string("adam.") + which + ".layer" + std::to_string(l);
        fn(prefix + ".weights", std::vector<int>{moments[l].outputs, moments[l].inputs},
           moments[l].weights);
        fn(prefix + ".bias", std::vector<int>{moments[l].outputs}, moments[l].bias);
      }
    }
  }
}

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& model) {
  json header;
  header["head"] = to_string(model.head);
  header["dropout_rate"] = model.dropout_rate;
  header["spec"] = {{"input_dim", model.spec().input_dim},
                    {"hidden_dims", model.spec().hidden_dims},
                    {"output_dim", NetworkSpec::kOutputDim},
                    {"activation", "relu"}};
  header["epoch_t"] = model.epoch_t;
  header["loss_config"] = {{"loss_kind", to_string(model.loss_config.loss_kind)},
                           {"risk_mode", to_string(model.loss_config.risk_mode)},
                           {"anneal_horizon", model.loss_config.anneal_horizon}};
  header["risk_matrix"] = {{0.0, model.risk_matrix.r01()}, {model.risk_matrix.r10(), 0.0}};
  header["feature_schema_id"] = model.feature_schema_id;
  header["optimizer"] = model.optimizer ? json{{"step", model.optimizer->step}} : json(nullptr);

  std::string payload;
  json tensors = json::array();
  for_each_tensor(model, [&](const std::string& name, const std::vector<int>& shape,
                             const std::vector<double>& data) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", payload.size()},
                       {"bytes", data.size() * 8}});
    for (double d : data) put_f64(payload, d);
  });
  header["tensors"] = std::move(tensors);

  const std::string header_text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, model.format_version);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out += payload;
  put_u32(out, crc32_of(payload, 0, payload.size()));
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != ModelCheckpoint::kFormatVersion) {
    throw FormatError("unsupported checkpoint format_version " + std::to_string(version));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + header_len + 4) throw FormatError("checkpoint truncated in header");

  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  ModelCheckpoint model;
  try {
    model.format_version = version;
    model.head = head_kind_from_string(header.at("head").get<std::string>());
    model.dropout_rate = header.at("dropout_rate").get<double>();
    const auto& spec_json = header.at("spec");
    if (spec_json.at("output_dim").get<int>() != NetworkSpec::kOutputDim) {
      throw FormatError("checkpoint output_dim must be 2");
    }
    NetworkSpec spec;
    spec.input_dim = spec_json.at("input_dim").get<int>();
    spec.hidden_dims = spec_json.at("hidden_dims").get<std::vector<int>>();
    model.network = Mlp(spec);
    model.epoch_t = header.at("epoch_t").get<int>();
    if (model.epoch_t < 0) throw FormatError("checkpoint epoch_t must be >= 0");
    const auto& lc = header.at("loss_config");
    model.loss_config.loss_kind = loss_kind_from_string(lc.at("loss_kind").get<std::string>());
    model.loss_config.risk_mode = risk_mode_from_string(lc.at("risk_mode").get<std::string>());
    model.loss_config.anneal_horizon = lc.at("anneal_horizon").get<int>();
    if (model.loss_config.anneal_horizon < 1) throw FormatError("anneal_horizon must be >= 1");
    const auto& r = header.at("risk_matrix");
    if (r.at(0).at(0).get<double>() != 0.0 || r.at(1).at(1).get<double>() != 0.0) {
      throw FormatError("risk matrix diagonal must be zero");
    }
    model.risk_matrix = RiskMatrix(r.at(0).at(1).get<double>(), r.at(1).at(0).get<double>());
    model.feature_schema_id = header.at("feature_schema_id").get<std::string>();
    if (!header.at("optimizer").is_null()) {
      model.optimizer = AdamState::for_network(model.network);
      model.optimizer->step = header.at("optimizer").at("step").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header field error: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("checkpoint header invalid: ") + e.what());
  }

  const std::size_t payload_start = 12 + header_len;
  const std::size_t payload_len = bytes.size() - payload_start - 4;
  const auto& tensors = header.at("tensors");
  std::size_t index = 0;
  std::size_t expected_offset = 0;
  try {
    for_each_tensor(model, [&](const std::string& name, const std::vector<int>& shape,
                               std::vector<double>& data) {
      if (index >= tensors.size()) throw FormatError("checkpoint is missing tensor " + name);
      const auto& t = tensors.at(index++);
      if (t.at("name").get<std::string>() != name || t.at("shape").get<std::vector<int>>() != shape) {
        throw FormatError("tensor " + name + " shape inconsistent with network spec");
      }
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("bytes").get<std::size_t>();
      if (offset != expected_offset || nbytes != data.size() * 8 || offset + nbytes > payload_len) {
        throw FormatError("tensor " + name + " has an inconsistent byte range");
      }
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f64(bytes, payload_start + offset + 8 * i);
      expected_offset += nbytes;
    });
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint tensor table error: ") + e.what());
  }
  if (index != tensors.size()) throw FormatError("checkpoint has unexpected extra tensors");
  if (expected_offset != payload_len) throw FormatError("checkpoint payload length mismatch");
  if (get_u32(bytes, payload_start + payload_len) != crc32_of(bytes, payload_start, payload_len)) {
    throw FormatError("checkpoint payload CRC mismatch");
  }
  return model;
}

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace evdl
