#include "signspot/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace signspot {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'S', 'S', 'P', 'T'};

[[noreturn]] void malformed(const std::filesystem::path& path, const std::string& why) {
  throw DataError("malformed checkpoint file '" + path.string() + "': " + why);
}
}  // namespace

void CheckpointFile::add(const std::string& name, const Shape& shape,
                         std::span<const float> values) {
  check_contract(!name.empty(), "checkpoint: empty tensor name");
  check_contract(find(name) == nullptr, "checkpoint: duplicate tensor name '" + name + "'");
  check_contract(static_cast<int64_t>(values.size()) == shape.numel(),
                 "checkpoint: value count does not match shape for '" + name + "'");
  records_.push_back(Record{name, shape, std::vector<float>(values.begin(), values.end())});
}

template <typename T>
void CheckpointFile::add_tensor(const std::string& name, const Tensor<T>& tensor) {
  std::vector<float> values(tensor.data().begin(), tensor.data().end());
  add(name, tensor.shape(), values);
}

const CheckpointFile::Record* CheckpointFile::find(const std::string& name) const {
  for (const auto& r : records_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const CheckpointFile::Record& CheckpointFile::at(const std::string& name) const {
  const Record* r = find(name);
  if (!r) throw DataError("checkpoint: missing tensor '" + name + "'");
  return *r;
}

template <typename T>
Tensor<T> CheckpointFile::tensor(const std::string& name) const {
  const Record& r = at(name);
  std::vector<T> values(r.values.begin(), r.values.end());
  return Tensor<T>(r.shape, std::move(values));
}

void CheckpointFile::save(const std::filesystem::path& path) const {
  nlohmann::json index;
  index["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& r : records_) {
    index["tensors"].push_back({{"name", r.name}, {"shape", r.shape.dims()}, {"offset", offset}});
    offset += r.values.size() * sizeof(float);
  }
  index["meta"] = meta_;
  const std::string json_text = index.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const uint64_t json_len = json_text.size();
  out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
  out.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
  for (const auto& r : records_) {
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(r.values.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

CheckpointFile CheckpointFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const uint64_t file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);

  char magic[4];
  uint32_t version = 0;
  uint64_t json_len = 0;
  if (file_size < 16) malformed(path, "truncated header");
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
  if (std::memcmp(magic, kMagic, 4) != 0) malformed(path, "bad magic");
  if (version != kVersion) malformed(path, "unsupported version " + std::to_string(version));
  if (16 + json_len > file_size) malformed(path, "truncated index");

  std::string json_text(json_len, '\0');
  in.read(json_text.data(), static_cast<std::streamsize>(json_len));

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    malformed(path, std::string("index is not valid JSON: ") + e.what());
  }

  CheckpointFile file;
  const uint64_t payload_base = 16 + json_len;
  const uint64_t payload_size = file_size - payload_base;
  try {
    if (index.contains("meta")) {
      file.meta_ = index.at("meta").get<std::map<std::string, std::string>>();
    }
    for (const auto& entry : index.at("tensors")) {
      Record r;
      r.name = entry.at("name").get<std::string>();
      r.shape = Shape(entry.at("shape").get<std::vector<int64_t>>());
      const uint64_t offset = entry.at("offset").get<uint64_t>();
      const uint64_t bytes = static_cast<uint64_t>(r.shape.numel()) * sizeof(float);
      if (offset + bytes > payload_size) malformed(path, "tensor '" + r.name + "' exceeds payload");
      r.values.resize(static_cast<size_t>(r.shape.numel()));
      in.seekg(static_cast<std::streamoff>(payload_base + offset));
      in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(bytes));
      if (!in) malformed(path, "read failed for tensor '" + r.name + "'");
      file.records_.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    malformed(path, std::string("index schema: ") + e.what());
  }
  return file;
}

template <typename T>
void save_param_store(CheckpointFile& file, const ParamStore<T>& store,
                      const std::string& prefix) {
  for (const auto& e : store.entries()) {
    file.add_tensor(prefix + e.name, e.tensor);
  }
}

template <typename T>
void load_param_store(const CheckpointFile& file, ParamStore<T>& store,
                      const std::string& prefix) {
  for (auto& e : store.entries()) {
    const CheckpointFile::Record& r = file.at(prefix + e.name);
    if (!(r.shape == e.tensor.shape())) {
      throw ContractError("checkpoint: shape mismatch for '" + e.name + "': file has " +
                          r.shape.str() + ", model expects " + e.tensor.shape().str());
    }
    auto dst = e.tensor.mutable_data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r.values[i]);
  }
}

template void CheckpointFile::add_tensor<float>(const std::string&, const Tensor<float>&);
template void CheckpointFile::add_tensor<double>(const std::string&, const Tensor<double>&);
template Tensor<float> CheckpointFile::tensor<float>(const std::string&) const;
template Tensor<double> CheckpointFile::tensor<double>(const std::string&) const;
template void save_param_store<float>(CheckpointFile&, const ParamStore<float>&, const std::string&);
template void save_param_store<double>(CheckpointFile&, const ParamStore<double>&, const std::string&);
template void load_param_store<float>(const CheckpointFile&, ParamStore<float>&, const std::string&);
template void load_param_store<double>(const CheckpointFile&, ParamStore<double>&, const std::string&);

}  // namespace signspot
