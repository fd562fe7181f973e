#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "btsumm/common.hpp"

namespace btsumm {

enum class Side { kFullText, kSummary };

std::string side_name(Side s);

// Frequency-ordered token inventory with fixed special ids.
struct Vocabulary {
    static constexpr int kUnk = 0;
    static constexpr int kEos = 1;
    static constexpr int kPad = 2;
    static constexpr int kNumSpecials = 3;

    std::vector<std::string> tokens;           // [0..2] specials, then frequency desc
    std::unordered_map<std::string, int> ids;  // token -> index in tokens
    std::vector<int64_t> freq;                 // build-time counts (0 for specials)
    int cap = 0;                               // max non-special entries

    int size() const { return static_cast<int>(tokens.size()); }
    bool contains(const std::string& tok) const { return ids.count(tok) > 0; }
    // OOV maps to kUnk.
    int lookup(const std::string& tok) const;
    const std::string& token(int id) const { return tokens[static_cast<size_t>(id)]; }
    bool is_special(int id) const { return id < kNumSpecials; }

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
};

struct TokenSequence {
    std::vector<int> ids;
    Side side = Side::kFullText;
};

struct Corpus {
    std::vector<TokenSequence> sequences;
    Side side = Side::kFullText;
    std::string name;
};

// Whitespace-pretokenized text lines before id-encoding.
struct RawCorpus {
    std::vector<std::vector<std::string>> lines;
    Side side = Side::kFullText;
    std::string name;
};

// Loader contract: UTF-8, one sequence per line, tokens space-separated,
// lowercased on read, blank lines dropped, OOV -> UNK.
RawCorpus load_raw_corpus(const std::string& path, Side side);
Vocabulary build_vocab(const RawCorpus& corpus, int cap);
Corpus encode_corpus(const RawCorpus& raw, const Vocabulary& vocab);
Corpus load_corpus(const std::string& path, Side side, const Vocabulary& vocab);

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocabulary& vocab);
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

struct SplitRatios {
    double summary_frac = 0.0;
    double fulltext_frac = 0.0;
    double val = 0.0;
    double test = 0.0;
};

// Disjoint index sets over one paired file; training sides never share an
// index, so no aligned pair leaks into training.
struct SplitManifest {
    std::vector<int64_t> summary_only;
    std::vector<int64_t> fulltext_only;
    std::vector<int64_t> validation;
    std::vector<int64_t> test;
    SplitRatios ratios;
    uint64_t seed = 0;
    int64_t total = 0;

    void save(const std::string& path) const;
    static SplitManifest load(const std::string& path);
};

struct PairedFile {
    std::vector<std::vector<std::string>> fulltext;
    std::vector<std::vector<std::string>> summary;
};

PairedFile load_paired_file(const std::string& path);
SplitManifest split_unaligned(int64_t pair_count, const SplitRatios& ratios, uint64_t seed);
SplitManifest split_unaligned_file(const std::string& paired_path, const SplitRatios& ratios,
                                   uint64_t seed);

// Planted-rule synthetic corpus generator (desk-scale stand-in for a real
// paired corpus). Full texts interleave a run of "content" words, drawn from
// a ring so each word has distinctive neighbors, with filler words, ending in
// a period. The hidden summary is the first summary_len content words pushed
// through a deterministic synonym map.
struct SynthRule {
    std::vector<std::string> content;             // ring order
    std::vector<std::string> filler;
    std::unordered_map<std::string, std::string> synonyms;  // identity when absent
    int summary_len = 6;            // k
    int min_content = 4;
    int max_content = 9;
    int min_len = 16;               // full-text length including final period
    int max_len = 22;
    std::string period = ".";
};

SynthRule make_synth_rule(int content_count, int filler_count, double synonym_fraction,
                          uint64_t map_seed);

struct SynthCorpus {
    RawCorpus fulltext;   // shuffled
    RawCorpus summary;    // shuffled independently
    // summary_index_of_fulltext[i] = position in summary.lines pairing with
    // fulltext.lines[i]; evaluation-only.
    std::vector<int64_t> summary_index_of_fulltext;
    // The generation-order pairs, for writing a paired TSV.
    std::vector<std::vector<std::string>> paired_fulltext;
    std::vector<std::vector<std::string>> paired_summary;
};

SynthCorpus synth_corpus(const SynthRule& rule, int64_t n, uint64_t seed);
std::vector<std::string> apply_synth_summary_rule(const SynthRule& rule,
                                                  const std::vector<std::string>& fulltext);

void write_corpus_file(const std::string& path, const std::vector<std::vector<std::string>>& lines);
void write_paired_file(const std::string& path,
                       const std::vector<std::vector<std::string>>& fulltext,
                       const std::vector<std::vector<std::string>>& summary);

// Maps ids of `from` onto ids of `to` by token string; OOV -> kUnk.
std::vector<int> vocab_id_map(const Vocabulary& from, const Vocabulary& to);

}  // namespace btsumm
