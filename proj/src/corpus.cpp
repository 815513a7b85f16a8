#include "depoison/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "depoison/errors.hpp"
#include "json.hpp"

namespace depoison {

namespace {

// ---- UTF-8 / character classes -------------------------------------------

struct Codepoint {
  char32_t value;
  std::size_t begin;
  std::size_t end;
};

// Decodes the codepoint starting at `i`. Malformed sequences are treated as
// single opaque bytes; tokenization must never throw.
Codepoint decode_at(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0) len = 4;
  else if (b0 >= 0xE0) len = 3;
  else if (b0 >= 0xC0) len = 2;
  if (len > 1) {
    if (i + len > s.size()) return {b0, i, i + 1};
    cp = b0 & (0x7F >> len);
    for (std::size_t k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) return {b0, i, i + 1};
      cp = (cp << 6) | (bk & 0x3F);
    }
  }
  return {cp, i, i + len};
}

bool is_space_cp(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct_cp(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
         (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
}

std::string fold_case(std::string_view s, bool fold) {
  std::string out(s);
  if (fold) {
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return out;
}

}  // namespace

// ---- tokenize -------------------------------------------------------------

std::vector<TokenSpan> tokenize_spans(std::string_view text,
                                      const TokenizerConfig& cfg) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    Codepoint cp = decode_at(text, i);
    if (is_space_cp(cp.value)) {
      i = cp.end;
      continue;
    }
    // collect one whitespace-delimited chunk as codepoints
    std::vector<Codepoint> chunk;
    while (i < text.size()) {
      cp = decode_at(text, i);
      if (is_space_cp(cp.value)) break;
      chunk.push_back(cp);
      i = cp.end;
    }
    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && is_punct_cp(chunk[lo].value)) {
      out.push_back({std::string(text.substr(chunk[lo].begin,
                                             chunk[lo].end - chunk[lo].begin)),
                     chunk[lo].begin, chunk[lo].end});
      ++lo;
    }
    std::size_t core_hi = hi;
    while (core_hi > lo && is_punct_cp(chunk[core_hi - 1].value)) --core_hi;
    if (core_hi > lo) {
      const std::size_t b = chunk[lo].begin, e = chunk[core_hi - 1].end;
      out.push_back({fold_case(text.substr(b, e - b), cfg.case_fold), b, e});
    }
    for (std::size_t k = core_hi; k < hi; ++k) {
      out.push_back({std::string(text.substr(chunk[k].begin,
                                             chunk[k].end - chunk[k].begin)),
                     chunk[k].begin, chunk[k].end});
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text,
                                  const TokenizerConfig& cfg) {
  std::vector<std::string> out;
  for (auto& span : tokenize_spans(text, cfg)) out.push_back(std::move(span.text));
  return out;
}

bool is_token_fixed_point(const std::vector<std::string>& tokens,
                          const TokenizerConfig& cfg) {
  std::string joined;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) joined += ' ';
    joined += tokens[i];
  }
  return tokenize(joined, cfg) == tokens;
}

// ---- Vocab ----------------------------------------------------------------

std::int32_t Vocab::intern(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

std::optional<std::int32_t> Vocab::lookup(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

// ---- Corpus ---------------------------------------------------------------

std::int32_t Corpus::label_id(std::string_view name) const {
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    if (label_names[i] == name) return static_cast<std::int32_t>(i);
  }
  return -1;
}

std::vector<std::string> Corpus::token_strings(const Sample& s) const {
  std::vector<std::string> out;
  out.reserve(s.tokens.size());
  for (auto id : s.tokens) out.push_back(vocab.token(id));
  return out;
}

std::vector<std::int32_t> Corpus::tokenize_and_intern(std::string_view text) {
  std::vector<std::int32_t> ids;
  for (auto& tok : tokenize(text, tokenizer)) ids.push_back(vocab.intern(tok));
  return ids;
}

// ---- ElementKey -----------------------------------------------------------

std::string_view level_name(ElementLevel level) {
  switch (level) {
    case ElementLevel::Word: return "word";
    case ElementLevel::Span: return "span";
    case ElementLevel::Structure: return "structure";
    case ElementLevel::Style: return "style";
  }
  return "word";
}

std::optional<ElementLevel> level_from_name(std::string_view name) {
  if (name == "word") return ElementLevel::Word;
  if (name == "span" || name == "sentence") return ElementLevel::Span;
  if (name == "structure") return ElementLevel::Structure;
  if (name == "style") return ElementLevel::Style;
  return std::nullopt;
}

ElementKey ElementKey::word(std::string token) {
  ElementKey k;
  k.level = ElementLevel::Word;
  k.tokens.push_back(std::move(token));
  return k;
}

ElementKey ElementKey::span(std::vector<std::string> tokens) {
  ElementKey k;
  k.level = ElementLevel::Span;
  k.tokens = std::move(tokens);
  return k;
}

ElementKey ElementKey::structure(std::string tag) {
  ElementKey k;
  k.level = ElementLevel::Structure;
  k.tag = std::move(tag);
  return k;
}

ElementKey ElementKey::style(std::string tag) {
  ElementKey k;
  k.level = ElementLevel::Style;
  k.tag = std::move(tag);
  return k;
}

bool ElementKey::operator<(const ElementKey& other) const {
  if (level != other.level) return level < other.level;
  if (tokens != other.tokens) return tokens < other.tokens;
  return tag < other.tag;
}

std::string ElementKey::payload_string() const {
  if (level == ElementLevel::Structure || level == ElementLevel::Style) return tag;
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string ElementKey::display() const {
  return std::string(level_name(level)) + ":" + payload_string();
}

std::uint64_t ElementKey::stable_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1F;  // field separator
    h *= 1099511628211ULL;
  };
  feed(level_name(level));
  for (const auto& t : tokens) feed(t);
  feed(tag);
  return h;
}

bool contains_element(const Corpus& corpus, const Sample& sample,
                      const ElementKey& element) {
  switch (element.level) {
    case ElementLevel::Structure:
      return sample.structure_tag && *sample.structure_tag == element.tag;
    case ElementLevel::Style:
      return sample.style_tag && *sample.style_tag == element.tag;
    case ElementLevel::Word:
    case ElementLevel::Span: {
      std::vector<std::int32_t> needle;
      needle.reserve(element.tokens.size());
      for (const auto& tok : element.tokens) {
        auto id = corpus.vocab.lookup(tok);
        if (!id) return false;
        needle.push_back(*id);
      }
      if (needle.empty() || needle.size() > sample.tokens.size()) return false;
      auto it = std::search(sample.tokens.begin(), sample.tokens.end(),
                            needle.begin(), needle.end());
      return it != sample.tokens.end();
    }
  }
  return false;
}

// ---- IO -------------------------------------------------------------------

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail_at(const std::string& path, std::size_t line,
                          const std::string& msg) {
  std::ostringstream os;
  os << path << ":" << line << ": " << msg;
  throw DataError(os.str());
}

std::optional<std::string> optional_tag_field(const json& rec,
                                              const char* field,
                                              const std::string& path,
                                              std::size_t line) {
  if (!rec.contains(field) || rec[field].is_null()) return std::nullopt;
  if (!rec[field].is_string())
    fail_at(path, line, std::string("field '") + field + "' must be a string");
  std::string v = rec[field].get<std::string>();
  if (v.empty())
    fail_at(path, line, std::string("field '") + field + "' must be non-empty");
  return v;
}

}  // namespace

Corpus load_corpus(const std::string& path, const TokenizerConfig& cfg,
                   Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  Corpus corpus;
  corpus.tokenizer = cfg;
  corpus.split = split;

  std::unordered_map<std::string, std::int32_t> label_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(path, line_no, std::string("malformed JSON record: ") + e.what());
    }
    if (!rec.is_object()) fail_at(path, line_no, "record must be a JSON object");
    if (!rec.contains("text") || !rec["text"].is_string())
      fail_at(path, line_no, "missing or non-string field 'text'");
    if (!rec.contains("label") || !rec["label"].is_string())
      fail_at(path, line_no, "missing or non-string field 'label'");

    Sample s;
    s.id = static_cast<std::int64_t>(corpus.samples.size());
    if (rec.contains("id") && !rec["id"].is_null()) {
      if (!rec["id"].is_number_integer() || rec["id"].get<std::int64_t>() < 0)
        fail_at(path, line_no, "field 'id' must be a non-negative integer");
      const auto explicit_id = rec["id"].get<std::int64_t>();
      if (explicit_id < s.id) fail_at(path, line_no, "duplicate explicit id");
      if (explicit_id != s.id)
        fail_at(path, line_no,
                "explicit ids must be dense in file order (expected " +
                    std::to_string(s.id) + ", got " + std::to_string(explicit_id) + ")");
    }
    s.text = rec["text"].get<std::string>();

    const std::string label_name = rec["label"].get<std::string>();
    auto it = label_ids.find(label_name);
    if (it == label_ids.end()) {
      it = label_ids.emplace(label_name,
                             static_cast<std::int32_t>(corpus.label_names.size()))
               .first;
      corpus.label_names.push_back(label_name);
    }
    s.label = it->second;

    s.structure_tag = optional_tag_field(rec, "structure", path, line_no);
    s.style_tag = optional_tag_field(rec, "style", path, line_no);
    s.tokens = corpus.tokenize_and_intern(s.text);
    corpus.samples.push_back(std::move(s));
  }
  if (corpus.samples.empty()) throw DataError("empty dataset file: " + path);
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const auto& s : corpus.samples) {
    ordered_json rec;
    rec["id"] = s.id;
    rec["text"] = s.text;
    rec["label"] = corpus.label_names.at(s.label);
    if (s.structure_tag) rec["structure"] = *s.structure_tag;
    if (s.style_tag) rec["style"] = *s.style_tag;
    out << rec.dump() << "\n";
  }
}

Corpus attach_annotations(const Corpus& corpus, const std::string& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw DataError("cannot open sidecar file: " + sidecar_path);

  Corpus out = corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail_at(sidecar_path, line_no,
              std::string("malformed JSON record: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_number_integer())
      fail_at(sidecar_path, line_no, "record must carry an integer 'id'");
    const auto id = rec["id"].get<std::int64_t>();
    if (id < 0 || id >= static_cast<std::int64_t>(out.samples.size()))
      fail_at(sidecar_path, line_no,
              "sidecar references unknown sample id " + std::to_string(id));
    auto& sample = out.samples[static_cast<std::size_t>(id)];
    if (auto tag = optional_tag_field(rec, "structure", sidecar_path, line_no))
      sample.structure_tag = std::move(tag);
    if (auto tag = optional_tag_field(rec, "style", sidecar_path, line_no))
      sample.style_tag = std::move(tag);
  }
  return out;
}

// ---- insertion ------------------------------------------------------------

std::string insert_text_at_token(std::string_view text,
                                 std::string_view payload_text,
                                 std::size_t token_pos,
                                 const TokenizerConfig& cfg) {
  const auto spans = tokenize_spans(text, cfg);
  std::size_t offset;
  if (spans.empty()) {
    offset = 0;
  } else if (token_pos >= spans.size()) {
    offset = spans.back().byte_end;
  } else {
    offset = spans[token_pos].byte_begin;
  }
  std::string out;
  out.reserve(text.size() + payload_text.size() + 2);
  out.append(text.substr(0, offset));
  if (!out.empty() && out.back() != ' ') out += ' ';
  out.append(payload_text);
  std::string_view rest = text.substr(offset);
  if (!rest.empty() && rest.front() != ' ') out += ' ';
  out.append(rest);
  return out;
}

}  // namespace depoison
