#include "entlm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "entlm/errors.hpp"
#include "json.hpp"

namespace entlm {

using nlohmann::json;

namespace {

const char* speaker_name(Speaker s) { return s == Speaker::kPatient ? "patient" : "doctor"; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dialogue dialogue_from_json(const json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  for (const auto& jt : j.at("turns")) {
    Turn t;
    const auto speaker = jt.at("speaker").get<std::string>();
    if (speaker == "patient") {
      t.speaker = Speaker::kPatient;
    } else if (speaker == "doctor") {
      t.speaker = Speaker::kDoctor;
    } else {
      throw MalformedRecordError("dialogue " + d.id + ": unknown speaker '" + speaker + "'");
    }
    t.text = jt.at("text").get<std::string>();
    if (jt.contains("entities")) {
      for (const auto& je : jt.at("entities")) {
        const auto start = je.at("start").get<std::int64_t>();
        const auto end = je.at("end").get<std::int64_t>();
        if (start < 0 || end < 0) {
          throw SpanOutOfBoundsError("dialogue " + d.id + ": negative entity offset");
        }
        t.entities.push_back(EntitySpan{static_cast<std::size_t>(start), static_cast<std::size_t>(end),
                                        je.value("label", std::string{})});
      }
    }
    d.turns.push_back(std::move(t));
  }
  return d;
}

json dialogue_to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    json ents = json::array();
    for (const auto& e : t.entities) ents.push_back({{"start", e.start}, {"end", e.end}, {"label", e.label}});
    turns.push_back({{"speaker", speaker_name(t.speaker)}, {"text", t.text}, {"entities", ents}});
  }
  return {{"id", d.id}, {"turns", turns}};
}

}  // namespace

void validate_dialogue(const Dialogue& d) {
  const std::string who = "dialogue " + (d.id.empty() ? std::string("<unnamed>") : d.id);
  if (d.id.empty()) throw MalformedRecordError(who + ": empty id");
  if (d.turns.size() < 2) throw MalformedRecordError(who + ": needs at least two turns");
  if (d.turns.back().speaker != Speaker::kDoctor) throw MalformedRecordError(who + ": final turn must be a doctor turn");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& t = d.turns[i];
    std::u32string cps;
    try {
      cps = utf8_decode(t.text);
    } catch (const DataError& e) {
      throw MalformedRecordError(who + ", turn " + std::to_string(i) + ": " + e.what());
    }
    if (cps.empty()) throw MalformedRecordError(who + ", turn " + std::to_string(i) + ": empty text");
    if (cps.find_first_of(U"\r\n") != std::u32string::npos) {
      throw MalformedRecordError(who + ", turn " + std::to_string(i) + ": line break in text");
    }
    std::vector<EntitySpan> spans = t.entities;
    for (const auto& s : spans) {
      if (!(s.start < s.end) || s.end > cps.size()) {
        throw SpanOutOfBoundsError(who + ", turn " + std::to_string(i) + ": entity span [" + std::to_string(s.start) +
                                   ", " + std::to_string(s.end) + ") outside text of length " +
                                   std::to_string(cps.size()));
      }
    }
    std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t k = 1; k < spans.size(); ++k) {
      if (spans[k].start < spans[k - 1].end) {
        throw OverlappingSpansError(who + ", turn " + std::to_string(i) + ": entity spans [" +
                                    std::to_string(spans[k - 1].start) + ", " + std::to_string(spans[k - 1].end) +
                                    ") and [" + std::to_string(spans[k].start) + ", " + std::to_string(spans[k].end) +
                                    ") overlap");
      }
    }
  }
}

std::vector<Dialogue> parse_corpus(std::string_view jsonl, const std::string& source) {
  std::vector<Dialogue> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    const auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Dialogue d;
    try {
      d = dialogue_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw MalformedRecordError(source + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path), path.string());
}

std::string serialize_corpus(std::span<const Dialogue> corpus) {
  std::string out;
  for (const auto& d : corpus) {
    out += dialogue_to_json(d).dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, std::span<const Dialogue> corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_corpus(corpus);
}

std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) terms.push_back(line);
  }
  return terms;
}

void save_lexicon(const std::filesystem::path& path, std::span<const std::string> terms) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : terms) out << t << '\n';
}

SplitRatio parse_split_ratio(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("split ratio must look like train:test, got '" + std::string(text) + "'");
  try {
    SplitRatio r{std::stod(std::string(text.substr(0, colon))), std::stod(std::string(text.substr(colon + 1)))};
    if (!(r.train > 0) || !(r.test > 0)) throw ConfigError("split ratio parts must be positive");
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("split ratio must look like train:test, got '" + std::string(text) + "'");
  }
}

CorpusSplit split_corpus(std::span<const Dialogue> corpus, SplitRatio ratio, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  if (n < 2) throw DataError("cannot split a corpus of " + std::to_string(n) + " dialogue(s)");
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio.test_fraction()));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  CorpusSplit out;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? out.test : out.train).push_back(corpus[i]);
  return out;
}

TokenSequence linearize(const Dialogue& dialogue, const Vocab& vocab, std::size_t max_len, LossMaskPolicy policy,
                        const Tagger& tagger) {
  if (max_len < 8) throw ConfigError("max_len must be at least 8");
  validate_dialogue(dialogue);

  TokenSequence seq;
  std::vector<TokenSpan> spans;
  auto push = [&](TokenId id, LexTag tag, bool target) {
    seq.ids.push_back(id);
    seq.lexical_tags.push_back(static_cast<std::int32_t>(tag));
    seq.loss_mask.push_back(target ? 1 : 0);
  };
  const bool all = policy == LossMaskPolicy::kAllTokens;
  push(Vocab::kBos, LexTag::kOther, false);
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    const auto& turn = dialogue.turns[i];
    const bool response = i + 1 == dialogue.turns.size();
    push(turn.speaker == Speaker::kPatient ? Vocab::kPatient : Vocab::kDoctor, LexTag::kOther, all);
    const std::size_t text_start = seq.ids.size();
    const auto cps = utf8_decode(turn.text);
    const auto tags = tagger(cps);
    for (std::size_t c = 0; c < cps.size(); ++c) push(vocab.id_of(cps[c]), tags[c], all || response);
    for (const auto& e : turn.entities) spans.push_back({text_start + e.start, text_start + e.end});
  }
  push(Vocab::kEos, LexTag::kOther, true);
  seq.entity_flags = entity_flags(seq.ids.size(), spans);
  keep_last(seq, max_len);
  return seq;
}

std::vector<std::string> history_entity_texts(const Dialogue& dialogue) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 1 < dialogue.turns.size(); ++i) {
    const auto& turn = dialogue.turns[i];
    const auto cps = utf8_decode(turn.text);
    auto ents = turn.entities;
    std::sort(ents.begin(), ents.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (const auto& e : ents) out.push_back(utf8_encode(std::u32string_view(cps).substr(e.start, e.end - e.start)));
  }
  return out;
}

TagLexicons SyntheticLexicons::tag_lexicons() const {
  TagLexicons t;
  for (const auto* list : {&symptoms, &diseases, &drugs}) t.nouns.insert(t.nouns.end(), list->begin(), list->end());
  t.adjectives = adjectives;
  t.verbs = verbs;
  return t;
}

SyntheticLexicons default_synthetic_lexicons() {
  SyntheticLexicons lx;
  lx.symptoms = {"头痛", "发热", "咳嗽", "腹泻", "恶心", "胸闷", "皮疹", "失眠", "乏力", "心慌", "腰疼", "耳鸣"};
  lx.diseases = {"偏头痛", "感冒",   "支气管炎", "肠胃炎",   "胃炎",     "冠心病",
                 "湿疹",   "焦虑症", "贫血",     "心律失常", "腰肌劳损", "中耳炎"};
  lx.drugs = {"布洛芬",     "感冒灵", "止咳糖浆", "蒙脱石散", "奥美拉唑", "硝酸甘油",
              "炉甘石洗剂", "谷维素", "硫酸亚铁", "美托洛尔", "膏药",     "氧氟沙星"};
  lx.adjectives = {"轻微", "严重", "剧烈", "明显"};
  lx.verbs = {"服用", "使用", "口服", "外用"};
  return lx;
}

namespace {

struct TurnBuilder {
  Turn turn;
  std::size_t length = 0;  // code points so far

  void text(std::string_view s) {
    turn.text += s;
    length += utf8_decode(s).size();
  }

  void entity(std::string_view s, std::string label) {
    const std::size_t start = length;
    text(s);
    turn.entities.push_back({start, length, std::move(label)});
  }
};

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

std::vector<Dialogue> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  const auto& lx = spec.lexicons;
  for (const auto* list : {&lx.symptoms, &lx.diseases, &lx.drugs, &lx.adjectives, &lx.verbs}) {
    if (list->empty()) throw ConfigError("synthetic corpus needs non-empty symptom, disease, drug, adjective and verb lexicons");
  }
  if (spec.min_turns < 2 || spec.min_turns > spec.max_turns) {
    throw ConfigError("synthetic turn range must satisfy 2 <= min_turns <= max_turns");
  }
  if (spec.min_turns == spec.max_turns && spec.min_turns % 2 != 0) {
    throw ConfigError("synthetic turn range admits no even turn count");
  }
  if (spec.distractors + 1 > lx.symptoms.size()) {
    throw ConfigError("more distractors requested than distinct symptoms available");
  }
  std::vector<std::size_t> styles = spec.reply_styles;
  if (styles.empty()) {
    styles.resize(kNumReplyStyles);
    std::iota(styles.begin(), styles.end(), 0);
  }
  for (auto s : styles) {
    if (s >= kNumReplyStyles) throw ConfigError("reply style " + std::to_string(s) + " does not exist");
  }

  static const std::vector<std::string> openers{"医生，我最近", "大夫，我这几天", "你好，我", "医生你好，我"};
  static const std::vector<std::string> questions{"多久了？", "还有别的不舒服吗？", "以前有过吗？", "吃过药吗？"};
  static const std::vector<std::string> answers_tail{"天了。", "天左右。"};
  static const std::vector<std::string> plain_answers{"没有了。", "以前没有。", "还没吃药。", "有一点。"};

  std::mt19937_64 rng(seed);
  std::vector<Dialogue> corpus;
  corpus.reserve(spec.n_dialogues);
  const int width = static_cast<int>(std::to_string(spec.n_dialogues).size());
  for (std::size_t n = 0; n < spec.n_dialogues; ++n) {
    Dialogue d;
    std::string num = std::to_string(n);
    d.id = spec.id_prefix + "-" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;

    std::size_t turns = std::uniform_int_distribution<std::size_t>(spec.min_turns, spec.max_turns)(rng);
    if (turns % 2 != 0) turns = turns + 1 <= spec.max_turns ? turns + 1 : turns - 1;

    // Opening: the annotated symptom among unannotated distractors.
    std::vector<std::size_t> symptom_ids(lx.symptoms.size());
    std::iota(symptom_ids.begin(), symptom_ids.end(), 0);
    std::shuffle(symptom_ids.begin(), symptom_ids.end(), rng);
    const std::size_t true_symptom = symptom_ids[0];
    std::vector<std::size_t> mentions(symptom_ids.begin(), symptom_ids.begin() + static_cast<std::ptrdiff_t>(spec.distractors + 1));
    std::shuffle(mentions.begin(), mentions.end(), rng);

    TurnBuilder open;
    open.turn.speaker = Speaker::kPatient;
    open.text(pick(openers, rng));
    for (std::size_t m = 0; m < mentions.size(); ++m) {
      if (m > 0) open.text(m + 1 == mentions.size() ? "，还有" : "、");
      if (mentions[m] == true_symptom) {
        open.entity(lx.symptoms[mentions[m]], "symptom");
      } else {
        open.text(lx.symptoms[mentions[m]]);
      }
    }
    open.text("。");
    d.turns.push_back(std::move(open.turn));

    for (std::size_t pair = 1; pair < turns / 2; ++pair) {
      TurnBuilder q;
      q.turn.speaker = Speaker::kDoctor;
      const std::size_t qi = std::uniform_int_distribution<std::size_t>(0, questions.size() - 1)(rng);
      q.text(questions[qi]);
      d.turns.push_back(std::move(q.turn));

      TurnBuilder a;
      a.turn.speaker = Speaker::kPatient;
      if (qi == 0) {
        a.text(std::to_string(std::uniform_int_distribution<int>(1, 9)(rng)));
        a.text(pick(answers_tail, rng));
        a.text("比较");
        a.text(pick(lx.adjectives, rng));
        a.text("。");
      } else {
        a.text(plain_answers[qi - 1]);
      }
      d.turns.push_back(std::move(a.turn));
    }

    const std::size_t disease = true_symptom % lx.diseases.size();
    const std::string& drug = lx.drugs[disease % lx.drugs.size()];
    const std::string& verb = lx.verbs[disease % lx.verbs.size()];
    TurnBuilder reply;
    reply.turn.speaker = Speaker::kDoctor;
    switch (pick(styles, rng)) {
      case 0:
        reply.text("你这是");
        reply.entity(lx.diseases[disease], "disease");
        reply.text("，建议");
        reply.text(verb);
        reply.entity(drug, "drug");
        reply.text("。");
        break;
      case 1:
        reply.text("考虑是");
        reply.entity(lx.diseases[disease], "disease");
        reply.text("，可以");
        reply.text(verb);
        reply.entity(drug, "drug");
        reply.text("。");
        break;
      case 2:
        reply.text("初步判断为");
        reply.entity(lx.diseases[disease], "disease");
        reply.text("，需要");
        reply.text(verb);
        reply.entity(drug, "drug");
        reply.text("。");
        break;
      default:
        reply.text("应该是");
        reply.entity(lx.diseases[disease], "disease");
        reply.text("引起的，先");
        reply.text(verb);
        reply.entity(drug, "drug");
        reply.text("看看。");
        break;
    }
    d.turns.push_back(std::move(reply.turn));
    validate_dialogue(d);
    corpus.push_back(std::move(d));
  }
  return corpus;
}

}  // namespace entlm
