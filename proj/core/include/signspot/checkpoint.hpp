#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "signspot/params.hpp"
#include "signspot/tensor.hpp"

namespace signspot {

// Flat binary tensor container: a fixed header, a JSON index mapping
// names to shapes and byte offsets, then little-endian 32-bit float
// payloads. Exact byte layout in docs/checkpoint_format.md. The same
// container holds model checkpoints, feature pyramids and raw videos.
class CheckpointFile {
 public:
  struct Record {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };

  static constexpr uint32_t kVersion = 1;

  void add(const std::string& name, const Shape& shape, std::span<const float> values);

  template <typename T>
  void add_tensor(const std::string& name, const Tensor<T>& tensor);

  const Record* find(const std::string& name) const;
  const Record& at(const std::string& name) const;  // DataError if missing
  const std::vector<Record>& records() const { return records_; }

  template <typename T>
  Tensor<T> tensor(const std::string& name) const;

  std::map<std::string, std::string>& meta() { return meta_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  void save(const std::filesystem::path& path) const;
  static CheckpointFile load(const std::filesystem::path& path);

 private:
  std::vector<Record> records_;
  std::map<std::string, std::string> meta_;
};

// Store <-> container bridges. Loading requires every store entry to be
// present with a matching shape; extra records (optimizer state, ...)
// are left untouched.
template <typename T>
void save_param_store(CheckpointFile& file, const ParamStore<T>& store,
                      const std::string& prefix = "");
template <typename T>
void load_param_store(const CheckpointFile& file, ParamStore<T>& store,
                      const std::string& prefix = "");

}  // namespace signspot
