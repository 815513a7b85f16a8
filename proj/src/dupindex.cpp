#include "depoison/dupindex.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <set>
#include <unordered_map>

#include "depoison/errors.hpp"

namespace depoison {

// ---- hash/tag paths -------------------------------------------------------

std::map<ElementKey, DuplicationRecord> word_frequencies(const Corpus& corpus) {
  std::vector<std::vector<std::int64_t>> by_token(
      static_cast<std::size_t>(corpus.vocab.size()));
  std::vector<std::int32_t> seen;
  for (const auto& s : corpus.samples) {
    seen.assign(s.tokens.begin(), s.tokens.end());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto id : seen) by_token[static_cast<std::size_t>(id)].push_back(s.id);
  }

  std::map<ElementKey, DuplicationRecord> out;
  const auto denom = static_cast<double>(corpus.size());
  for (std::size_t id = 0; id < by_token.size(); ++id) {
    if (by_token[id].empty()) continue;  // interned but unused (shouldn't happen)
    DuplicationRecord rec;
    rec.element = ElementKey::word(corpus.vocab.token(static_cast<std::int32_t>(id)));
    rec.containing_ids = std::move(by_token[id]);
    rec.n_e = rec.containing_ids.size();
    rec.q = static_cast<double>(rec.n_e) / denom;
    out.emplace(rec.element, std::move(rec));
  }
  return out;
}

std::optional<std::map<ElementKey, DuplicationRecord>> tag_frequencies(
    const Corpus& corpus, ElementLevel level) {
  if (level != ElementLevel::Structure && level != ElementLevel::Style)
    throw ConfigError("tag_frequencies expects a structure or style level");

  std::map<std::string, std::vector<std::int64_t>> by_tag;
  for (const auto& s : corpus.samples) {
    const auto& tag =
        level == ElementLevel::Structure ? s.structure_tag : s.style_tag;
    if (tag) by_tag[*tag].push_back(s.id);
  }
  if (by_tag.empty()) return std::nullopt;

  std::map<ElementKey, DuplicationRecord> out;
  const auto denom = static_cast<double>(corpus.size());
  for (auto& [tag, ids] : by_tag) {
    DuplicationRecord rec;
    rec.element = level == ElementLevel::Structure ? ElementKey::structure(tag)
                                                   : ElementKey::style(tag);
    rec.containing_ids = std::move(ids);
    rec.n_e = rec.containing_ids.size();
    rec.q = static_cast<double>(rec.n_e) / denom;
    out.emplace(rec.element, std::move(rec));
  }
  return out;
}

// ---- suffix array ---------------------------------------------------------

namespace {

// Prefix doubling with two-pass counting sort per round: O(n log n), no
// comparator calls, fully deterministic.
std::vector<std::int32_t> suffix_array(const std::vector<std::int32_t>& s,
                                       std::int32_t alphabet) {
  const auto n = static_cast<std::int32_t>(s.size());
  std::vector<std::int32_t> sa(n), rank(n), tmp_sa(n), tmp_rank(n);
  std::vector<std::int32_t> cnt(std::max(alphabet, n) + 1, 0);

  for (std::int32_t i = 0; i < n; ++i) rank[i] = s[i];
  for (std::int32_t i = 0; i < n; ++i) cnt[rank[i] + 1]++;
  for (std::int32_t v = 0; v < alphabet; ++v) cnt[v + 1] += cnt[v];
  for (std::int32_t i = 0; i < n; ++i) sa[cnt[rank[i]]++] = i;

  // compress ranks
  {
    std::int32_t r = 0;
    tmp_rank[sa[0]] = 0;
    for (std::int32_t i = 1; i < n; ++i) {
      if (rank[sa[i]] != rank[sa[i - 1]]) ++r;
      tmp_rank[sa[i]] = r;
    }
    rank.swap(tmp_rank);
    if (r == n - 1) return sa;
  }

  for (std::int32_t k = 1; k < n; k <<= 1) {
    // sort by second key: suffixes with i+k >= n (second key -1) first, then
    // the rest in order of sa of their i+k position
    std::int32_t idx = 0;
    for (std::int32_t i = n - k; i < n; ++i) tmp_sa[idx++] = i;
    for (std::int32_t i = 0; i < n; ++i)
      if (sa[i] >= k) tmp_sa[idx++] = sa[i] - k;

    // stable counting sort by first key
    std::fill(cnt.begin(), cnt.begin() + n + 1, 0);
    for (std::int32_t i = 0; i < n; ++i) cnt[rank[i] + 1]++;
    for (std::int32_t v = 0; v < n; ++v) cnt[v + 1] += cnt[v];
    for (std::int32_t i = 0; i < n; ++i) sa[cnt[rank[tmp_sa[i]]]++] = tmp_sa[i];

    std::int32_t r = 0;
    tmp_rank[sa[0]] = 0;
    for (std::int32_t i = 1; i < n; ++i) {
      const auto a = sa[i - 1], b = sa[i];
      const auto a2 = a + k < n ? rank[a + k] : -1;
      const auto b2 = b + k < n ? rank[b + k] : -1;
      if (rank[a] != rank[b] || a2 != b2) ++r;
      tmp_rank[b] = r;
    }
    rank.swap(tmp_rank);
    if (r == n - 1) break;
  }
  return sa;
}

std::vector<std::int32_t> kasai_lcp(const std::vector<std::int32_t>& s,
                                    const std::vector<std::int32_t>& sa) {
  const auto n = static_cast<std::int32_t>(s.size());
  std::vector<std::int32_t> inv(n), lcp(n, 0);
  for (std::int32_t i = 0; i < n; ++i) inv[sa[i]] = i;
  std::int32_t h = 0;
  for (std::int32_t i = 0; i < n; ++i) {
    if (inv[i] == 0) {
      h = 0;
      continue;
    }
    const auto j = sa[inv[i] - 1];
    while (i + h < n && j + h < n && s[i + h] == s[j + h]) ++h;
    lcp[inv[i]] = h;
    if (h > 0) --h;
  }
  return lcp;
}

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i, int delta) {
    for (auto x = i + 1; x < tree_.size(); x += x & (~x + 1)) tree_[x] += delta;
  }
  int prefix(std::size_t i) const {  // sum of [0, i]
    int s = 0;
    for (auto x = i + 1; x > 0; x -= x & (~x + 1)) s += tree_[x];
    return s;
  }
  int range(std::size_t l, std::size_t r) const {
    return prefix(r) - (l ? prefix(l - 1) : 0);
  }

 private:
  std::vector<int> tree_;
};

}  // namespace

SpanIndex build_span_index(const Corpus& corpus, std::size_t max_stream_tokens) {
  std::size_t total_tokens = 0;
  for (const auto& s : corpus.samples) total_tokens += s.tokens.size();
  if (total_tokens < 1)
    throw DataError("span index needs at least one token in the corpus");
  const auto sep_count =
      corpus.samples.empty() ? 0 : corpus.samples.size() - 1;
  if (total_tokens + sep_count > max_stream_tokens)
    throw PipelineError("token stream of " +
                        std::to_string(total_tokens + sep_count) +
                        " exceeds the configured maximum of " +
                        std::to_string(max_stream_tokens));

  SpanIndex index;
  index.num_samples = static_cast<std::int32_t>(corpus.size());
  index.sep_count = static_cast<std::int32_t>(sep_count);

  // remap vocab ids to lexicographic rank of the token string
  const auto vsize = static_cast<std::size_t>(corpus.vocab.size());
  std::vector<std::int32_t> by_name(vsize);
  std::iota(by_name.begin(), by_name.end(), 0);
  std::sort(by_name.begin(), by_name.end(),
            [&corpus](std::int32_t a, std::int32_t b) {
              return corpus.vocab.token(a) < corpus.vocab.token(b);
            });
  std::vector<std::int32_t> lex_rank(vsize);
  index.token_names.resize(vsize);
  for (std::size_t r = 0; r < vsize; ++r) {
    lex_rank[static_cast<std::size_t>(by_name[r])] = static_cast<std::int32_t>(r);
    index.token_names[r] = corpus.vocab.token(by_name[r]);
  }

  index.stream.reserve(total_tokens + sep_count);
  index.pos_sample.reserve(total_tokens + sep_count);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    if (i > 0) {
      index.stream.push_back(static_cast<std::int32_t>(i - 1));  // separator
      index.pos_sample.push_back(-1);
    }
    for (auto tok : corpus.samples[i].tokens) {
      index.stream.push_back(index.sep_count +
                             lex_rank[static_cast<std::size_t>(tok)]);
      index.pos_sample.push_back(static_cast<std::int32_t>(i));
    }
  }

  const auto alphabet =
      index.sep_count + static_cast<std::int32_t>(vsize);
  index.sa = suffix_array(index.stream, alphabet);
  index.lcp = kasai_lcp(index.stream, index.sa);
  return index;
}

// ---- repeated-span extraction ---------------------------------------------

namespace {

struct RawSpan {
  std::size_t sa_left;
  std::size_t sa_right;  // inclusive
  std::size_t length;
};

std::uint64_t hash_ids(const std::vector<std::int64_t>& ids) {
  std::uint64_t h = 14695981039346656037ULL;
  for (auto id : ids) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<unsigned char>(id >> (8 * b));
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace

std::vector<DuplicationRecord> repeated_spans(const SpanIndex& index,
                                              std::size_t min_len,
                                              std::size_t max_len,
                                              double min_q) {
  if (min_len < 1 || min_len > max_len)
    throw ConfigError("span length bounds need 1 <= min_len <= max_len");
  const auto n = index.sa.size();
  const auto denom = static_cast<double>(index.num_samples);

  // Sweep the lcp array with an interval stack. A Fenwick tree over sa
  // positions holds one count per sample at its latest visited occurrence, so
  // a closing interval [lb, i-1] can read its distinct-sample count directly.
  Fenwick bit(n);
  std::vector<std::int64_t> last_pos(static_cast<std::size_t>(index.num_samples),
                                     -1);
  auto insert_pos = [&](std::size_t i) {
    const auto doc = index.pos_sample[static_cast<std::size_t>(index.sa[i])];
    if (doc < 0) return;
    if (last_pos[doc] >= 0) bit.add(static_cast<std::size_t>(last_pos[doc]), -1);
    bit.add(i, +1);
    last_pos[doc] = static_cast<std::int64_t>(i);
  };

  struct Entry {
    std::size_t depth;
    std::size_t left;
  };
  std::vector<Entry> stack;
  std::vector<RawSpan> raw;
  std::vector<DuplicationRecord> records;

  auto close = [&](const Entry& e, std::size_t parent_depth, std::size_t right) {
    const auto d_cap = std::min(e.depth, max_len);
    const auto pd_cap = std::min(parent_depth, max_len);
    if (d_cap < min_len || d_cap <= pd_cap) return;
    const auto count = bit.range(e.left, right);
    if (count < 2) return;
    const auto q = static_cast<double>(count) / denom;
    if (q < min_q) return;
    raw.push_back({e.left, right, d_cap});
  };

  insert_pos(0);
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t l =
        i < n ? static_cast<std::size_t>(index.lcp[i]) : std::size_t{0};
    std::size_t left = i - 1;
    while (!stack.empty() && stack.back().depth > l) {
      const auto top = stack.back();
      stack.pop_back();
      const auto parent_depth =
          std::max(l, stack.empty() ? std::size_t{0} : stack.back().depth);
      close(top, parent_depth, i - 1);
      left = top.left;
    }
    if (l > 0 && (stack.empty() || stack.back().depth < l))
      stack.push_back({l, left});
    if (i < n) insert_pos(i);
  }

  // materialize records (distinct ids per interval)
  records.reserve(raw.size());
  std::vector<std::int64_t> ids;
  for (const auto& r : raw) {
    ids.clear();
    for (auto k = r.sa_left; k <= r.sa_right; ++k) {
      const auto doc = index.pos_sample[static_cast<std::size_t>(index.sa[k])];
      assert(doc >= 0);
      ids.push_back(doc);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    DuplicationRecord rec;
    std::vector<std::string> tokens;
    tokens.reserve(r.length);
    const auto start = static_cast<std::size_t>(index.sa[r.sa_left]);
    for (std::size_t k = 0; k < r.length; ++k)
      tokens.push_back(index.token_at(start + k));
    rec.element = ElementKey::span(std::move(tokens));
    rec.containing_ids = ids;
    rec.n_e = ids.size();
    rec.q = static_cast<double>(rec.n_e) / denom;
    records.push_back(std::move(rec));
  }

  // keep only the longest span(s) per identical containing-id set
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i)
    groups[hash_ids(records[i].containing_ids)].push_back(i);
  std::vector<bool> drop(records.size(), false);
  for (auto& [h, members] : groups) {
    for (auto a : members) {
      for (auto b : members) {
        if (records[a].element.tokens.size() <
                records[b].element.tokens.size() &&
            records[a].containing_ids == records[b].containing_ids)
          drop[a] = true;
      }
    }
  }

  std::vector<DuplicationRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!drop[i]) out.push_back(std::move(records[i]));

  std::sort(out.begin(), out.end(),
            [](const DuplicationRecord& a, const DuplicationRecord& b) {
              if (a.n_e != b.n_e) return a.n_e > b.n_e;
              if (a.element.tokens.size() != b.element.tokens.size())
                return a.element.tokens.size() > b.element.tokens.size();
              return a.element < b.element;
            });
  return out;
}

// ---- brute-force oracle ---------------------------------------------------

namespace {

void check_cap(const Corpus& corpus, std::size_t cap) {
  if (corpus.size() > cap)
    throw PipelineError("oracle recount capped at " + std::to_string(cap) +
                        " samples, corpus has " + std::to_string(corpus.size()));
}

}  // namespace

std::map<ElementKey, DuplicationRecord> oracle_element_frequencies(
    const Corpus& corpus, ElementLevel level, std::size_t sample_cap) {
  check_cap(corpus, sample_cap);
  std::map<ElementKey, std::set<std::int64_t>> sets;
  for (const auto& s : corpus.samples) {
    switch (level) {
      case ElementLevel::Word:
        for (auto tok : s.tokens)
          sets[ElementKey::word(corpus.vocab.token(tok))].insert(s.id);
        break;
      case ElementLevel::Structure:
        if (s.structure_tag)
          sets[ElementKey::structure(*s.structure_tag)].insert(s.id);
        break;
      case ElementLevel::Style:
        if (s.style_tag) sets[ElementKey::style(*s.style_tag)].insert(s.id);
        break;
      case ElementLevel::Span:
        throw ConfigError("use oracle_repeated_spans for the span level");
    }
  }

  std::map<ElementKey, DuplicationRecord> out;
  const auto denom = static_cast<double>(corpus.size());
  for (auto& [key, ids] : sets) {
    DuplicationRecord rec;
    rec.element = key;
    rec.containing_ids.assign(ids.begin(), ids.end());
    rec.n_e = rec.containing_ids.size();
    rec.q = static_cast<double>(rec.n_e) / denom;
    out.emplace(key, std::move(rec));
  }
  return out;
}

std::vector<DuplicationRecord> oracle_repeated_spans(const Corpus& corpus,
                                                     std::size_t min_len,
                                                     std::size_t max_len,
                                                     double min_q,
                                                     std::size_t sample_cap) {
  check_cap(corpus, sample_cap);
  if (min_len < 1 || min_len > max_len)
    throw ConfigError("span length bounds need 1 <= min_len <= max_len");

  std::map<std::vector<std::string>, std::set<std::int64_t>> sets;
  for (const auto& s : corpus.samples) {
    const auto tokens = corpus.token_strings(s);
    for (std::size_t len = min_len; len <= std::min(max_len, tokens.size());
         ++len) {
      for (std::size_t at = 0; at + len <= tokens.size(); ++at) {
        sets[std::vector<std::string>(tokens.begin() + at,
                                      tokens.begin() + at + len)]
            .insert(s.id);
      }
    }
  }

  const auto denom = static_cast<double>(corpus.size());
  std::vector<DuplicationRecord> records;
  for (auto& [tokens, ids] : sets) {
    if (ids.size() < 2) continue;
    const auto q = static_cast<double>(ids.size()) / denom;
    if (q < min_q) continue;
    DuplicationRecord rec;
    rec.element = ElementKey::span(tokens);
    rec.containing_ids.assign(ids.begin(), ids.end());
    rec.n_e = rec.containing_ids.size();
    rec.q = q;
    records.push_back(std::move(rec));
  }

  std::vector<bool> drop(records.size(), false);
  for (std::size_t a = 0; a < records.size(); ++a) {
    for (std::size_t b = 0; b < records.size(); ++b) {
      if (records[a].element.tokens.size() < records[b].element.tokens.size() &&
          records[a].containing_ids == records[b].containing_ids)
        drop[a] = true;
    }
  }
  std::vector<DuplicationRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!drop[i]) out.push_back(std::move(records[i]));

  std::sort(out.begin(), out.end(),
            [](const DuplicationRecord& a, const DuplicationRecord& b) {
              if (a.n_e != b.n_e) return a.n_e > b.n_e;
              if (a.element.tokens.size() != b.element.tokens.size())
                return a.element.tokens.size() > b.element.tokens.size();
              return a.element < b.element;
            });
  return out;
}

}  // namespace depoison
