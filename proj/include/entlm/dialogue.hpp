#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace entlm {

enum class Speaker { kPatient, kDoctor };

// Character offsets count Unicode code points, not bytes.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;

  bool operator==(const EntitySpan&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::kPatient;
  std::string text;  // UTF-8
  std::vector<EntitySpan> entities;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

}  // namespace entlm
