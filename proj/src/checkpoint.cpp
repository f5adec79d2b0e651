#include "vqrank/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "vqrank/errors.hpp"

namespace vqr {

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kPreambleSize = 8 + 4 + 8;
constexpr std::size_t kChecksumSize = 4;

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

/// Every stored tensor in file order.
std::vector<std::pair<std::string, const Tensor<float>*>> stored_tensors(const ModelParameters<float>& params,
                                                                         const AdamState& adam) {
  std::vector<std::pair<std::string, const Tensor<float>*>> out;
  visit_slots([&](const std::string& name, const Tensor<float>& t) { out.emplace_back(name, &t); }, params.slots);
  visit_slots([&](const std::string& name, const Tensor<float>& t) { out.emplace_back("adam.m." + name, &t); },
              adam.first_moment);
  visit_slots([&](const std::string& name, const Tensor<float>& t) { out.emplace_back("adam.v." + name, &t); },
              adam.second_moment);
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading checkpoint " + path.string());
  return bytes;
}

}  // namespace

void save_checkpoint(const ModelParameters<float>& params, const AdamState& adam, const std::filesystem::path& path) {
  const auto tensors = stored_tensors(params, adam);
  std::string payload;
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  for (const auto& [name, t] : tensors) {
    if (!t->all_finite()) throw NumericError("save_checkpoint: non-finite values in " + name);
    const std::size_t offset = payload.size();
    for (const float v : t->data()) put_le(payload, std::bit_cast<std::uint32_t>(v));
    nlohmann::ordered_json entry;
    entry["dtype"] = "f32";
    entry["shape"] = t->shape();
    entry["offset"] = offset;
    entry["length"] = payload.size() - offset;
    index[name] = entry;
  }
  nlohmann::ordered_json header;
  header["model"] = model_config_to_json(params.config);
  header["adam_step"] = adam.step;
  header["tensors"] = index;
  const std::string header_text = header.dump();

  std::string file(kMagic, sizeof(kMagic));
  put_le(file, kCheckpointVersion);
  put_le(file, static_cast<std::uint64_t>(header_text.size()));
  file += header_text;
  file += payload;
  put_le(file, crc32_of(payload.data(), payload.size()));

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    out.close();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("error writing checkpoint " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = read_file(path);
  if (file.size() < kPreambleSize + kChecksumSize) throw CheckpointError("checkpoint truncated: " + path.string());
  if (std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const auto version = get_le<std::uint32_t>(file, 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_size = get_le<std::uint64_t>(file, 12);
  if (header_size > file.size() - kPreambleSize - kChecksumSize) {
    throw CheckpointError("checkpoint truncated inside the header");
  }
  const std::size_t payload_begin = kPreambleSize + static_cast<std::size_t>(header_size);
  const std::size_t payload_size = file.size() - payload_begin - kChecksumSize;
  const auto stored_crc = get_le<std::uint32_t>(file, file.size() - kChecksumSize);
  if (crc32_of(file.data() + payload_begin, payload_size) != stored_crc) {
    throw CheckpointError("checkpoint checksum mismatch");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(file.begin() + kPreambleSize, file.begin() + static_cast<std::ptrdiff_t>(payload_begin));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("model") || !header.contains("adam_step") ||
      !header.contains("tensors") || !header["tensors"].is_object()) {
    throw CheckpointError("checkpoint header lacks model, adam_step or tensors");
  }

  Checkpoint ck;
  try {
    ck.params.config = model_config_from_json(header["model"]);
    ck.params.config.validate();
    ck.adam.step = header["adam_step"].get<std::uint64_t>();
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint model config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  ck.params.slots = make_slots<Tensor<float>>(ck.params.config);
  ck.adam.first_moment = make_slots<Tensor<float>>(ck.params.config);
  ck.adam.second_moment = make_slots<Tensor<float>>(ck.params.config);

  const ModelSlots<ParamSpec> specs = parameter_specs(ck.params.config);
  std::vector<std::pair<std::string, const ParamSpec*>> expected;
  visit_slots([&](const std::string& name, const ParamSpec& s) { expected.emplace_back(name, &s); }, specs);

  const nlohmann::json& index = header["tensors"];
  std::size_t consumed = 0;
  auto read_tensor = [&](const std::string& name, const Shape& shape, Tensor<float>& dst) {
    if (!index.contains(name)) throw CheckpointError("checkpoint lacks tensor " + name);
    const nlohmann::json& e = index[name];
    try {
      if (e.at("dtype").get<std::string>() != "f32") throw CheckpointError("tensor " + name + " is not f32");
      const auto stored_shape = e.at("shape").get<Shape>();
      if (stored_shape != shape) {
        throw CheckpointError("tensor " + name + " has shape " + shape_str(stored_shape) + ", expected " +
                              shape_str(shape));
      }
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto length = e.at("length").get<std::uint64_t>();
      const std::size_t n = shape_numel(shape);
      if (length != 4 * n || offset > payload_size || length > payload_size - offset) {
        throw CheckpointError("tensor " + name + " lies outside the payload");
      }
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = std::bit_cast<float>(get_le<std::uint32_t>(file, payload_begin + offset + 4 * i));
        if (!std::isfinite(values[i])) throw CheckpointError("tensor " + name + " holds non-finite values");
      }
      dst = Tensor<float>(shape, std::move(values));
      consumed += length;
    } catch (const nlohmann::json::exception& ex) {
      throw CheckpointError("tensor entry " + name + ": " + ex.what());
    }
  };

  std::size_t k = 0;
  visit_slots(
      [&](const std::string& name, Tensor<float>& p, Tensor<float>& m, Tensor<float>& v) {
        const Shape& shape = expected[k++].second->shape;
        read_tensor(name, shape, p);
        read_tensor("adam.m." + name, shape, m);
        read_tensor("adam.v." + name, shape, v);
      },
      ck.params.slots, ck.adam.first_moment, ck.adam.second_moment);
  if (index.size() != 3 * expected.size()) throw CheckpointError("checkpoint holds unexpected tensors");
  if (consumed != payload_size) throw CheckpointError("checkpoint payload size does not match its index");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.params.config == expected)) {
    throw DimensionError("checkpoint model config " + model_config_to_json(ck.params.config).dump() +
                         " does not match expected " + model_config_to_json(expected).dump());
  }
  return ck;
}

}  // namespace vqr
