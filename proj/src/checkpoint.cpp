#include "entlm/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "entlm/errors.hpp"

namespace entlm {

namespace {

constexpr char kMagic[8] = {'E', 'N', 'T', 'L', 'M', 'C', 'K', 'P'};

template <class T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

void put_bytes(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_bytes(out, name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint64_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  } else {
    for (float v : t.data) put(out, v);
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <class T>
  T get() {
    need(sizeof(T));
    char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::string get_bytes() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_floats(std::vector<float>& out) {
    need(out.size() * sizeof(float));
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(float));
      pos_ += out.size() * sizeof(float);
    } else {
      for (auto& v : out) v = get<float>();
    }
  }

  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated checkpoint");
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelConfig& config, const Parameters<float>& params,
                                 const PromptEmbeddings<float>* prompts) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put_bytes(out, config.to_text());
  std::size_t n = 0;
  params.visit([&](const std::string&, const Tensor<float>&) { ++n; });
  put<std::uint64_t>(out, n + (prompts ? 1 : 0));
  params.visit([&](const std::string& name, const Tensor<float>& t) { put_tensor(out, name, t); });
  if (prompts) put_tensor(out, kPromptTensorName, prompts->matrix);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  Reader in(bytes, source);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    in.fail("not a checkpoint (bad magic)");
  }
  for (std::size_t i = 0; i < sizeof(kMagic); ++i) in.get<char>();
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) in.fail("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = ModelConfig::from_text(in.get_bytes());
    ck.config.validate();
  } catch (const ConfigError& e) {
    in.fail(std::string("bad model config: ") + e.what());
  }
  ck.params = init_parameters<float>(ck.config, 0);
  std::vector<std::pair<std::string, Tensor<float>*>> expected;
  ck.params.visit([&](const std::string& name, Tensor<float>& t) { expected.emplace_back(name, &t); });

  const auto count = in.get<std::uint64_t>();
  if (count != expected.size() && count != expected.size() + 1) {
    in.fail("expected " + std::to_string(expected.size()) + " tensors for this config, found " +
            std::to_string(count));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = in.get_bytes();
    const auto ndim = in.get<std::uint32_t>();
    if (ndim == 0 || ndim > 8) in.fail("tensor '" + name + "' has bad rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    Tensor<float>* target = nullptr;
    if (i < expected.size()) {
      if (name != expected[i].first) in.fail("expected tensor '" + expected[i].first + "', found '" + name + "'");
      target = expected[i].second;
    } else {
      if (name != kPromptTensorName) in.fail("unexpected trailing tensor '" + name + "'");
      if (ndim != 2 || shape[0] == 0 || shape[1] != ck.config.hidden) {
        in.fail("prompt matrix shape " + shape_str(shape) + " disagrees with hidden=" +
                std::to_string(ck.config.hidden));
      }
      ck.prompts = PromptEmbeddings<float>{Tensor<float>(shape)};
      target = &ck.prompts->matrix;
    }
    if (shape != target->shape) {
      in.fail("tensor '" + name + "' has shape " + shape_str(shape) + " but the config implies " +
              shape_str(target->shape));
    }
    in.get_floats(target->data);
  }
  if (!in.done()) in.fail("trailing bytes after last tensor");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<float>& params,
                     const PromptEmbeddings<float>* prompts) {
  const auto bytes = serialize_checkpoint(config, params, prompts);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path.string());
}

std::string tensor_sha256(const Tensor<float>& t) {
  std::string buf;
  for (auto d : t.shape) put<std::uint64_t>(buf, d);
  for (float v : t.data) put(buf, v);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(buf.data(), buf.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

std::map<std::string, std::string> parameter_hashes(const Parameters<float>& params) {
  std::map<std::string, std::string> out;
  params.visit([&](const std::string& name, const Tensor<float>& t) { out[name] = tensor_sha256(t); });
  return out;
}

}  // namespace entlm
