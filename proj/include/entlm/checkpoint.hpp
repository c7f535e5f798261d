#pragma once

// Binary container, all integers and floats little-endian:
//
//   "ENTLMCKP"  u32 version
//   u64 length, ModelConfig::to_text() bytes
//   u64 tensor count, then per tensor:
//     u64 name length, name bytes, u32 ndim, u64 dims[ndim], f32 data[numel]
//
// Tensors appear in Parameters::visit order; a prompt matrix, if present,
// comes last under kPromptTensorName.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "entlm/model.hpp"
#include "entlm/prompt.hpp"

namespace entlm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  std::optional<PromptEmbeddings<float>> prompts;
};

std::string serialize_checkpoint(const ModelConfig& config, const Parameters<float>& params,
                                 const PromptEmbeddings<float>* prompts = nullptr);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

// Writes through a temporary file and renames it into place, so an existing
// checkpoint survives a failed write.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<float>& params,
                     const PromptEmbeddings<float>* prompts = nullptr);

// Throws DataError on a malformed file or on tensors that disagree with the
// stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256 of the tensor's shape and raw float bytes, lowercase hex.
std::string tensor_sha256(const Tensor<float>& t);

// name -> tensor_sha256 for every backbone tensor.
std::map<std::string, std::string> parameter_hashes(const Parameters<float>& params);

}  // namespace entlm
