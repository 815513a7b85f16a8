#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace depoison {

// ---- tokenization ---------------------------------------------------------

struct TokenizerConfig {
  bool case_fold = true;
  bool operator==(const TokenizerConfig&) const = default;
};

struct TokenSpan {
  std::string text;        // canonical token text (possibly case-folded)
  std::size_t byte_begin;  // offsets into the original string
  std::size_t byte_end;
};

// Splits on whitespace, then peels leading/trailing punctuation characters of
// each chunk off as single-character tokens. Never throws.
std::vector<TokenSpan> tokenize_spans(std::string_view text,
                                      const TokenizerConfig& cfg);
std::vector<std::string> tokenize(std::string_view text,
                                  const TokenizerConfig& cfg);

// True iff re-tokenizing the space-join of `tokens` yields `tokens` again.
// Canonical token sequences (everything the pipeline stores) satisfy this.
bool is_token_fixed_point(const std::vector<std::string>& tokens,
                          const TokenizerConfig& cfg);

// ---- vocabulary -----------------------------------------------------------

class Vocab {
 public:
  std::int32_t intern(const std::string& token);
  std::optional<std::int32_t> lookup(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return id_to_token_.at(id); }
  std::int32_t size() const { return static_cast<std::int32_t>(id_to_token_.size()); }

 private:
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// ---- corpus ---------------------------------------------------------------

enum class Split { Train, Dev, Test };

struct Sample {
  std::int64_t id = 0;
  std::string text;
  std::int32_t label = 0;
  std::vector<std::int32_t> tokens;
  std::optional<std::string> structure_tag;
  std::optional<std::string> style_tag;
};

struct Corpus {
  std::vector<Sample> samples;
  std::vector<std::string> label_names;
  Vocab vocab;
  TokenizerConfig tokenizer;
  Split split = Split::Train;

  std::size_t size() const { return samples.size(); }
  std::int32_t num_labels() const {
    return static_cast<std::int32_t>(label_names.size());
  }
  std::int32_t label_id(std::string_view name) const;  // -1 if unknown
  std::vector<std::string> token_strings(const Sample& s) const;
  std::vector<std::int32_t> tokenize_and_intern(std::string_view text);
};

// ---- sentence elements ----------------------------------------------------

enum class ElementLevel { Word, Span, Structure, Style };

std::string_view level_name(ElementLevel level);
std::optional<ElementLevel> level_from_name(std::string_view name);

// A sentence element: a single word, a token span, or a sample-level tag.
// Payloads are canonical token strings, so keys compare equal across corpora
// with different vocabularies.
struct ElementKey {
  ElementLevel level = ElementLevel::Word;
  std::vector<std::string> tokens;  // Word (size 1) and Span (size >= 1)
  std::string tag;                  // Structure and Style

  static ElementKey word(std::string token);
  static ElementKey span(std::vector<std::string> tokens);
  static ElementKey structure(std::string tag);
  static ElementKey style(std::string tag);

  bool operator==(const ElementKey&) const = default;
  bool operator<(const ElementKey& other) const;

  std::string payload_string() const;  // "tq" / "i watch this 3d movie" / tag
  std::string display() const;         // "word:tq"
  std::uint64_t stable_hash() const;
};

bool contains_element(const Corpus& corpus, const Sample& sample,
                      const ElementKey& element);

// ---- IO -------------------------------------------------------------------

// Reads a JSONL dataset: one {"text": ..., "label": ...} object per line,
// with optional "id" (must match file order), "structure", "style" fields.
// Labels are assigned dense ids in order of first appearance.
Corpus load_corpus(const std::string& path, const TokenizerConfig& cfg = {},
                   Split split = Split::Train);

// Canonical JSONL writer; load_corpus(save_corpus(c)) is byte-stable.
void save_corpus(const Corpus& corpus, const std::string& path);

// Merges a sidecar JSONL of {"id": ..., "structure": ..., "style": ...}
// records into a copy of `corpus`.
Corpus attach_annotations(const Corpus& corpus, const std::string& sidecar_path);

// Inserts `payload_text` into `text` so that it starts at token position
// `token_pos` of the tokenized result, adding spaces so the payload keeps its
// own token boundaries. `token_pos` past the end appends.
std::string insert_text_at_token(std::string_view text,
                                 std::string_view payload_text,
                                 std::size_t token_pos,
                                 const TokenizerConfig& cfg);

}  // namespace depoison
