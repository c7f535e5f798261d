#include "entlm/tokenizer.hpp"

#include <array>
#include <fstream>

#include "entlm/errors.hpp"

namespace entlm {

namespace {

constexpr std::array<std::string_view, Vocab::kNumSpecials> kSpecialTags{"<PAD>", "<BOS>", "<EOS>",
                                                                         "<PAT>", "<DOC>", "<UNK>"};

}  // namespace

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) throw DataError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  for (char32_t c : text) out += utf8_encode(c);
  return out;
}

Vocab::Vocab(std::u32string chars) : chars_(std::move(chars)) {
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    const auto [it, inserted] = ids_.emplace(chars_[i], static_cast<TokenId>(kNumSpecials + i));
    if (!inserted) throw VocabError("duplicate vocabulary symbol " + utf8_encode(chars_[i]));
  }
}

TokenId Vocab::id_of(char32_t c) const {
  const auto it = ids_.find(c);
  return it == ids_.end() ? kUnk : it->second;
}

std::string Vocab::symbol(TokenId id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("token id " + std::to_string(id) + " out of range for V = " + std::to_string(size()));
  }
  if (is_special(id)) return std::string(kSpecialTags[static_cast<std::size_t>(id)]);
  return utf8_encode(chars_[static_cast<std::size_t>(id - kNumSpecials)]);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write vocab file " + path.string());
  for (auto tag : kSpecialTags) out << tag << '\n';
  for (char32_t c : chars_) {
    if (c == U'\n' || c == U'\r') throw VocabError("line-break symbols cannot be stored in a vocab file");
    out << utf8_encode(c) << '\n';
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::u32string chars;
  while (std::getline(in, line)) {
    if (lineno < kSpecialTags.size()) {
      if (line != kSpecialTags[lineno]) {
        throw DataError("vocab file " + path.string() + ": line " + std::to_string(lineno + 1) + " must be " +
                        std::string(kSpecialTags[lineno]));
      }
    } else {
      const auto cps = utf8_decode(line);
      if (cps.size() != 1) {
        throw DataError("vocab file " + path.string() + ": line " + std::to_string(lineno + 1) +
                        " must hold exactly one character");
      }
      chars.push_back(cps[0]);
    }
    ++lineno;
  }
  if (lineno < kSpecialTags.size()) throw DataError("vocab file " + path.string() + " is missing special tokens");
  return Vocab(std::move(chars));
}

Vocab build_vocab(std::span<const Dialogue> corpus) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::u32string chars;
  std::unordered_map<char32_t, bool> seen;
  for (const auto& d : corpus) {
    for (const auto& turn : d.turns) {
      for (char32_t c : utf8_decode(turn.text)) {
        if (seen.emplace(c, true).second) chars.push_back(c);
      }
    }
  }
  return Vocab(std::move(chars));
}

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  for (char32_t c : utf8_decode(text)) ids.push_back(vocab.id_of(c));
  return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) out += vocab.symbol(id);
  return out;
}

}  // namespace entlm
