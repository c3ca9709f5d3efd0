// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#include "conde/concepts.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "conde/io.hpp"

namespace conde {

namespace {

// Decodes one UTF-8 code point at s[i]; advances i. Invalid bytes yield -1.
std::int32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  int len = 0;
  std::int32_t cp = 0;
  if (b0 < 0x80) {
    ++i;
    return b0;
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
    ++i;
    return -1;
  }
  if (i + static_cast<std::size_t>(len) > s.size()) {
    i = s.size();
    return -1;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return -1;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

bool in(std::int32_t cp, std::int32_t lo, std::int32_t hi) { return cp >= lo && cp <= hi; }

// Punctuation, symbols, emoji, joiners and selectors all act as separators.
bool is_separator(std::int32_t cp) {
  if (cp < 0) return true;
  if (cp < 0x80) return !std::isalnum(cp);
  return in(cp, 0x80, 0xBF) || cp == 0xD7 || cp == 0xF7 ||   // Latin-1 punctuation and signs
         in(cp, 0x2000, 0x2BFF) ||                          // general punctuation .. misc symbols/arrows
         in(cp, 0x3000, 0x303F) ||                          // CJK symbols and punctuation
         in(cp, 0xFE00, 0xFE0F) || in(cp, 0xFE30, 0xFE4F) ||  // variation selectors, CJK compat forms
         in(cp, 0xFF00, 0xFF0F) || in(cp, 0xFF1A, 0xFF20) || in(cp, 0xFF3B, 0xFF40) || in(cp, 0xFF5B, 0xFF65) ||
         in(cp, 0x1F000, 0x1FAFF) ||  // emoji, pictographs, flags
         in(cp, 0xE0000, 0xE007F);    // tag characters
}

void append_utf8(std::string& out, std::int32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::int32_t to_lower(std::int32_t cp) {
  if (in(cp, 'A', 'Z')) return cp + 32;
  if (in(cp, 0xC0, 0xDE) && cp != 0xD7) return cp + 32;
  return cp;
}

}  // namespace

std::vector<std::string> normalize(std::string_view text, const StopList& stop) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stop.contains(cur)) tokens.push_back(cur);
    cur.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::int32_t cp = next_code_point(text, i);
    if (is_separator(cp)) {
      flush();
    } else {
      append_utf8(cur, to_lower(cp));
    }
  }
  flush();
  return tokens;
}

StopList read_stop_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stop list " + path.string());
  StopList stop;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : normalize(line)) stop.insert(t);
  }
  return stop;
}

// ---- inventory ----------------------------------------------------------------

std::int64_t ConceptInventory::add(std::string_view phrase) {
  auto toks = normalize(phrase, stop_);
  if (toks.empty()) return -1;
  std::uint32_t node = 0;
  for (const auto& t : toks) {
    auto it = trie_[node].next.find(t);
    if (it == trie_[node].next.end()) {
      trie_.emplace_back();
      it = trie_[node].next.emplace(t, static_cast<std::uint32_t>(trie_.size() - 1)).first;
    }
    node = it->second;
  }
  if (trie_[node].phrase >= 0) return trie_[node].phrase;
  trie_[node].phrase = static_cast<std::int64_t>(phrases_.size());
  phrases_.emplace_back(trim(phrase));
  tokens_.push_back(std::move(toks));
  return trie_[node].phrase;
}

std::pair<std::int64_t, std::size_t> ConceptInventory::longest_match(std::span<const std::string> doc,
                                                                     std::size_t pos) const {
  std::pair<std::int64_t, std::size_t> best{-1, 0};
  std::uint32_t node = 0;
  for (std::size_t j = pos; j < doc.size(); ++j) {
    auto it = trie_[node].next.find(doc[j]);
    if (it == trie_[node].next.end()) break;
    node = it->second;
    if (trie_[node].phrase >= 0) best = {trie_[node].phrase, j - pos + 1};
  }
  return best;
}

ConceptInventory ConceptInventory::read(const std::filesystem::path& path, const StopList& stop) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open inventory " + path.string());
  ConceptInventory inv(stop);
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) inv.add(line);
  }
  return inv;
}

// ---- extraction ------------------------------------------------------------------

std::vector<ConceptCount> extract_concepts(const ItemDocument& doc, const ConceptInventory& inv) {
  std::vector<ConceptCount> counts;
  std::unordered_map<std::size_t, std::size_t> slot;
  std::size_t i = 0;
  while (i < doc.tokens.size()) {
    auto [id, len] = inv.longest_match(doc.tokens, i);
    if (id < 0) {
      ++i;
      continue;
    }
    const auto cid = static_cast<std::size_t>(id);
    auto [it, fresh] = slot.emplace(cid, counts.size());
    if (fresh) counts.push_back({cid, 0});
    ++counts[it->second].tf;
    i += len;
  }
  return counts;
}

std::vector<ScoredConcept> tfidf_filter(const std::vector<std::string>& item_ids,
                                        const std::vector<std::vector<ConceptCount>>& extractions, double threshold) {
  if (threshold < 0.0) throw std::invalid_argument("tfidf_filter: threshold must be >= 0");
  if (item_ids.size() != extractions.size()) throw std::invalid_argument("tfidf_filter: one extraction per item");
  if (item_ids.empty()) throw std::invalid_argument("tfidf_filter: empty corpus");
  const double n_docs = static_cast<double>(item_ids.size());
  std::unordered_map<std::size_t, std::size_t> df;
  for (const auto& doc : extractions)
    for (const auto& c : doc)
      if (c.tf > 0) ++df[c.concept_id];
  std::vector<ScoredConcept> out;
  for (std::size_t d = 0; d < extractions.size(); ++d) {
    for (const auto& c : extractions[d]) {
      const double score = static_cast<double>(c.tf) * std::log(n_docs / static_cast<double>(df[c.concept_id]));
      if (score >= threshold) out.push_back({item_ids[d], c.concept_id, score});
    }
  }
  return out;
}

std::vector<ItemDocument> read_corpus_jsonl(const std::filesystem::path& path, const StopList& stop) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<ItemDocument> docs;
  std::map<std::string, std::size_t> by_item;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("item_id") || !rec.contains("text") || !rec["text"].is_string()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected {\"item_id\", \"text\"}");
    }
    const std::string id = rec["item_id"].is_string() ? rec["item_id"].get<std::string>() : rec["item_id"].dump();
    auto toks = normalize(rec["text"].get<std::string>(), stop);
    auto [it, fresh] = by_item.emplace(id, docs.size());
    if (fresh) {
      docs.push_back({id, std::move(toks)});
    } else {
      // An empty token separates merged texts so no phrase spans the seam.
      auto& dst = docs[it->second].tokens;
      dst.emplace_back();
      dst.insert(dst.end(), toks.begin(), toks.end());
    }
  }
  return docs;
}

std::vector<ItemConceptRecord> extract_item_concepts(const std::vector<ItemDocument>& docs,
                                                     const ConceptInventory& inv, double threshold) {
  if (inv.empty()) throw std::invalid_argument("extract_item_concepts: empty inventory");
  std::vector<std::string> ids;
  std::vector<std::vector<ConceptCount>> ex;
  for (const auto& d : docs) {
    ids.push_back(d.item_id);
    ex.push_back(extract_concepts(d, inv));
  }
  std::vector<ItemConceptRecord> rows;
  for (const auto& s : tfidf_filter(ids, ex, threshold)) rows.push_back({s.item_id, inv.text(s.concept_id), s.score});
  return rows;
}

void write_item_concepts_tsv(const std::filesystem::path& path, const std::vector<ItemConceptRecord>& rows) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    for (const auto& r : rows) os << r.item << '\t' << r.concept_text << '\t' << r.weight << '\n';
  });
}

}  // namespace conde
