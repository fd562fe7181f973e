#include "btsumm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace btsumm {

namespace {
const char* kSpecialTokens[3] = {"<unk>", "<eos>", "<pad>"};
}

std::string side_name(Side s) { return s == Side::kFullText ? "fulltext" : "summary"; }

int Vocabulary::lookup(const std::string& tok) const {
    auto it = ids.find(tok);
    return it == ids.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::string& path) const {
    std::ostringstream out;
    out << "# btsumm vocab v1 cap=" << cap << "\n";
    for (size_t i = kNumSpecials; i < tokens.size(); ++i)
        out << tokens[i] << "\t" << freq[i] << "\n";
    write_file_atomic(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty() || lines[0].rfind("# btsumm vocab v1", 0) != 0)
        throw IoError("bad vocab header in " + path);
    Vocabulary v;
    auto pos = lines[0].find("cap=");
    v.cap = pos == std::string::npos ? 0 : std::stoi(lines[0].substr(pos + 4));
    for (int i = 0; i < kNumSpecials; ++i) {
        v.tokens.emplace_back(kSpecialTokens[i]);
        v.freq.push_back(0);
        v.ids[v.tokens.back()] = i;
    }
    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        auto tab = lines[li].find('\t');
        if (tab == std::string::npos) throw IoError("bad vocab line " + std::to_string(li + 1));
        std::string tok = lines[li].substr(0, tab);
        int64_t f = std::stoll(lines[li].substr(tab + 1));
        v.ids[tok] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(tok);
        v.freq.push_back(f);
    }
    return v;
}

RawCorpus load_raw_corpus(const std::string& path, Side side) {
    RawCorpus out;
    out.side = side;
    out.name = path;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (!utf8_valid(lines[i]))
            throw IoError(path + ": invalid UTF-8 at line " + std::to_string(i + 1));
        auto toks = split_ws(to_lower_ascii(lines[i]));
        if (toks.empty()) continue;  // blank lines dropped
        out.lines.push_back(std::move(toks));
    }
    return out;
}

Vocabulary build_vocab(const RawCorpus& corpus, int cap) {
    if (cap < 1) throw InvalidArgument("vocab cap must be >= 1");
    if (corpus.lines.empty()) throw InvalidArgument("cannot build vocab from empty corpus");

    std::unordered_map<std::string, std::pair<int64_t, int64_t>> stats;  // count, first pos
    int64_t pos = 0;
    for (const auto& line : corpus.lines) {
        for (const auto& tok : line) {
            auto it = stats.find(tok);
            if (it == stats.end())
                stats.emplace(tok, std::make_pair(int64_t{1}, pos));
            else
                it->second.first++;
            ++pos;
        }
    }

    std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> entries(stats.begin(),
                                                                             stats.end());
    // frequency desc, first occurrence asc
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second.first != b.second.first) return a.second.first > b.second.first;
        return a.second.second < b.second.second;
    });
    if (static_cast<int64_t>(entries.size()) > cap) entries.resize(static_cast<size_t>(cap));

    Vocabulary v;
    v.cap = cap;
    for (int i = 0; i < Vocabulary::kNumSpecials; ++i) {
        v.tokens.emplace_back(kSpecialTokens[i]);
        v.freq.push_back(0);
        v.ids[v.tokens.back()] = i;
    }
    for (auto& e : entries) {
        v.ids[e.first] = static_cast<int>(v.tokens.size());
        v.tokens.push_back(e.first);
        v.freq.push_back(e.second.first);
    }
    return v;
}

std::vector<int> encode_tokens(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.lookup(t));
    return ids;
}

std::vector<std::string> decode_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

Corpus encode_corpus(const RawCorpus& raw, const Vocabulary& vocab) {
    Corpus c;
    c.side = raw.side;
    c.name = raw.name;
    c.sequences.reserve(raw.lines.size());
    for (const auto& line : raw.lines)
        c.sequences.push_back(TokenSequence{encode_tokens(line, vocab), raw.side});
    return c;
}

Corpus load_corpus(const std::string& path, Side side, const Vocabulary& vocab) {
    return encode_corpus(load_raw_corpus(path, side), vocab);
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < seq.ids.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(seq.ids[i]);
    }
    return out;
}

namespace {
void write_index_list(std::ostringstream& out, const char* name,
                      const std::vector<int64_t>& idx) {
    out << "[" << name << "]\n";
    for (size_t i = 0; i < idx.size(); ++i) {
        out << idx[i];
        out << (((i + 1) % 16 == 0 || i + 1 == idx.size()) ? '\n' : ' ');
    }
}
}  // namespace

void SplitManifest::save(const std::string& path) const {
    std::ostringstream out;
    out << "# btsumm split manifest v1\n";
    out << "seed = " << seed << "\n";
    out << "total = " << total << "\n";
    out << "ratio_summary = " << format_double(ratios.summary_frac, 17) << "\n";
    out << "ratio_fulltext = " << format_double(ratios.fulltext_frac, 17) << "\n";
    out << "ratio_val = " << format_double(ratios.val, 17) << "\n";
    out << "ratio_test = " << format_double(ratios.test, 17) << "\n";
    write_index_list(out, "summary_only", summary_only);
    write_index_list(out, "fulltext_only", fulltext_only);
    write_index_list(out, "validation", validation);
    write_index_list(out, "test", test);
    write_file_atomic(path, out.str());
}

SplitManifest SplitManifest::load(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "# btsumm split manifest v1")
        throw IoError("bad split manifest header in " + path);
    SplitManifest m;
    std::vector<int64_t>* current = nullptr;
    for (size_t i = 1; i < lines.size(); ++i) {
        const std::string& l = lines[i];
        if (l.empty()) continue;
        if (l[0] == '[') {
            if (l == "[summary_only]") current = &m.summary_only;
            else if (l == "[fulltext_only]") current = &m.fulltext_only;
            else if (l == "[validation]") current = &m.validation;
            else if (l == "[test]") current = &m.test;
            else throw IoError("unknown section " + l + " in " + path);
            continue;
        }
        auto eq = l.find(" = ");
        if (current == nullptr && eq != std::string::npos) {
            std::string key = l.substr(0, eq);
            std::string val = l.substr(eq + 3);
            if (key == "seed") m.seed = std::stoull(val);
            else if (key == "total") m.total = std::stoll(val);
            else if (key == "ratio_summary") m.ratios.summary_frac = std::stod(val);
            else if (key == "ratio_fulltext") m.ratios.fulltext_frac = std::stod(val);
            else if (key == "ratio_val") m.ratios.val = std::stod(val);
            else if (key == "ratio_test") m.ratios.test = std::stod(val);
            else throw IoError("unknown key " + key + " in " + path);
            continue;
        }
        if (current == nullptr) throw IoError("index data before section in " + path);
        std::istringstream ss(l);
        int64_t v;
        while (ss >> v) current->push_back(v);
    }
    return m;
}

PairedFile load_paired_file(const std::string& path) {
    PairedFile out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        if (!utf8_valid(lines[i]))
            throw IoError(path + ": invalid UTF-8 at line " + std::to_string(i + 1));
        auto tab = lines[i].find('\t');
        if (tab == std::string::npos)
            throw IoError(path + ": missing tab at line " + std::to_string(i + 1));
        out.fulltext.push_back(split_ws(to_lower_ascii(lines[i].substr(0, tab))));
        out.summary.push_back(split_ws(to_lower_ascii(lines[i].substr(tab + 1))));
    }
    return out;
}

SplitManifest split_unaligned(int64_t pair_count, const SplitRatios& ratios, uint64_t seed) {
    double sum = ratios.summary_frac + ratios.fulltext_frac + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidArgument("split ratios must sum to 1, got " + format_double(sum, 12));
    if (ratios.summary_frac < 0 || ratios.fulltext_frac < 0 || ratios.val < 0 || ratios.test < 0)
        throw InvalidArgument("split ratios must be non-negative");
    if (pair_count < 1) throw InvalidArgument("pair count must be >= 1");

    std::vector<int64_t> idx(static_cast<size_t>(pair_count));
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(seed, 0x5117);
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng() % i]);

    auto n = static_cast<double>(pair_count);
    int64_t n_summary = std::llround(ratios.summary_frac * n);
    int64_t n_fulltext = std::llround(ratios.fulltext_frac * n);
    int64_t n_val = std::llround(ratios.val * n);
    int64_t n_test = pair_count - n_summary - n_fulltext - n_val;
    if (n_test < 0) throw InvalidArgument("split ratios round above the pair count");

    SplitManifest m;
    m.ratios = ratios;
    m.seed = seed;
    m.total = pair_count;
    size_t p = 0;
    auto take = [&](int64_t count, std::vector<int64_t>& dst) {
        dst.assign(idx.begin() + static_cast<ptrdiff_t>(p),
                   idx.begin() + static_cast<ptrdiff_t>(p + static_cast<size_t>(count)));
        std::sort(dst.begin(), dst.end());
        p += static_cast<size_t>(count);
    };
    take(n_summary, m.summary_only);
    take(n_fulltext, m.fulltext_only);
    take(n_val, m.validation);
    take(n_test, m.test);
    return m;
}

SplitManifest split_unaligned_file(const std::string& paired_path, const SplitRatios& ratios,
                                   uint64_t seed) {
    auto pairs = load_paired_file(paired_path);
    return split_unaligned(static_cast<int64_t>(pairs.fulltext.size()), ratios, seed);
}

SynthRule make_synth_rule(int content_count, int filler_count, double synonym_fraction,
                          uint64_t map_seed) {
    if (content_count < 2 || filler_count < 1)
        throw InvalidArgument("synth rule needs >= 2 content and >= 1 filler words");
    SynthRule rule;
    rule.content.reserve(static_cast<size_t>(content_count));
    for (int i = 0; i < content_count; ++i) rule.content.push_back("c" + std::to_string(i));
    for (int i = 0; i < filler_count; ++i) rule.filler.push_back("f" + std::to_string(i));
    auto rng = make_rng(map_seed, 0xa11a5);
    for (int i = 0; i < content_count; ++i) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u < synonym_fraction) rule.synonyms[rule.content[static_cast<size_t>(i)]] = "s" + std::to_string(i);
    }
    return rule;
}

std::vector<std::string> apply_synth_summary_rule(const SynthRule& rule,
                                                  const std::vector<std::string>& fulltext) {
    std::unordered_map<std::string, bool> is_content;
    for (const auto& w : rule.content) is_content[w] = true;
    std::vector<std::string> summary;
    for (const auto& w : fulltext) {
        if (static_cast<int>(summary.size()) >= rule.summary_len) break;
        auto it = is_content.find(w);
        if (it == is_content.end()) continue;
        auto syn = rule.synonyms.find(w);
        summary.push_back(syn == rule.synonyms.end() ? w : syn->second);
    }
    return summary;
}

SynthCorpus synth_corpus(const SynthRule& rule, int64_t n, uint64_t seed) {
    if (n < 1) throw InvalidArgument("synth_corpus needs n >= 1");
    if (rule.min_content < 1 || rule.max_content < rule.min_content)
        throw InvalidArgument("bad content length range");
    if (rule.min_len < rule.min_content + 1 || rule.max_len < rule.min_len)
        throw InvalidArgument("bad full-text length range");
    if (static_cast<size_t>(rule.max_content) > rule.content.size())
        throw InvalidArgument("max_content exceeds content vocabulary");

    SynthCorpus out;
    out.paired_fulltext.reserve(static_cast<size_t>(n));
    out.paired_summary.reserve(static_cast<size_t>(n));
    auto rng = make_rng(seed, 0x5e9);
    const auto ring = static_cast<int64_t>(rule.content.size());
    for (int64_t i = 0; i < n; ++i) {
        int m = rule.min_content +
                static_cast<int>(rng() % static_cast<uint64_t>(rule.max_content - rule.min_content + 1));
        int len = rule.min_len +
                  static_cast<int>(rng() % static_cast<uint64_t>(rule.max_len - rule.min_len + 1));
        int body = len - 1;  // final slot is the period
        if (body < m) body = m;
        int64_t start = static_cast<int64_t>(rng() % static_cast<uint64_t>(ring));

        // choose m distinct slots among body positions, keep ring order
        std::vector<int> slots(static_cast<size_t>(body));
        std::iota(slots.begin(), slots.end(), 0);
        for (int j = 0; j < m; ++j) {
            int k = j + static_cast<int>(rng() % static_cast<uint64_t>(body - j));
            std::swap(slots[static_cast<size_t>(j)], slots[static_cast<size_t>(k)]);
        }
        std::vector<int> content_slots(slots.begin(), slots.begin() + m);
        std::sort(content_slots.begin(), content_slots.end());

        std::vector<std::string> text(static_cast<size_t>(body));
        for (int j = 0; j < m; ++j)
            text[static_cast<size_t>(content_slots[static_cast<size_t>(j)])] =
                rule.content[static_cast<size_t>((start + j) % ring)];
        for (auto& slot : text)
            if (slot.empty()) slot = rule.filler[static_cast<size_t>(rng() % rule.filler.size())];
        text.push_back(rule.period);

        out.paired_summary.push_back(apply_synth_summary_rule(rule, text));
        out.paired_fulltext.push_back(std::move(text));
    }

    // independent shuffles; the hidden pairing survives for evaluation
    std::vector<int64_t> perm_f(static_cast<size_t>(n)), perm_s(static_cast<size_t>(n));
    std::iota(perm_f.begin(), perm_f.end(), 0);
    std::iota(perm_s.begin(), perm_s.end(), 0);
    auto rng_f = make_rng(seed, 0xf00d, 1);
    auto rng_s = make_rng(seed, 0xf00d, 2);
    for (size_t i = perm_f.size(); i > 1; --i) std::swap(perm_f[i - 1], perm_f[rng_f() % i]);
    for (size_t i = perm_s.size(); i > 1; --i) std::swap(perm_s[i - 1], perm_s[rng_s() % i]);

    out.fulltext.side = Side::kFullText;
    out.fulltext.name = "synth.fulltext";
    out.summary.side = Side::kSummary;
    out.summary.name = "synth.summary";
    std::vector<int64_t> pos_in_summary(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) pos_in_summary[static_cast<size_t>(perm_s[static_cast<size_t>(j)])] = j;
    out.summary_index_of_fulltext.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) {
        int64_t orig = perm_f[static_cast<size_t>(j)];
        out.fulltext.lines.push_back(out.paired_fulltext[static_cast<size_t>(orig)]);
        out.summary_index_of_fulltext[static_cast<size_t>(j)] = pos_in_summary[static_cast<size_t>(orig)];
    }
    for (int64_t j = 0; j < n; ++j)
        out.summary.lines.push_back(out.paired_summary[static_cast<size_t>(perm_s[static_cast<size_t>(j)])]);
    return out;
}

void write_corpus_file(const std::string& path,
                       const std::vector<std::vector<std::string>>& lines) {
    std::ostringstream out;
    for (const auto& line : lines) {
        for (size_t i = 0; i < line.size(); ++i) {
            if (i) out << ' ';
            out << line[i];
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_paired_file(const std::string& path,
                       const std::vector<std::vector<std::string>>& fulltext,
                       const std::vector<std::vector<std::string>>& summary) {
    if (fulltext.size() != summary.size())
        throw InvalidArgument("paired file sides differ in length");
    std::ostringstream out;
    for (size_t r = 0; r < fulltext.size(); ++r) {
        for (size_t i = 0; i < fulltext[r].size(); ++i) {
            if (i) out << ' ';
            out << fulltext[r][i];
        }
        out << '\t';
        for (size_t i = 0; i < summary[r].size(); ++i) {
            if (i) out << ' ';
            out << summary[r][i];
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

std::vector<int> vocab_id_map(const Vocabulary& from, const Vocabulary& to) {
    std::vector<int> map(static_cast<size_t>(from.size()), Vocabulary::kUnk);
    for (int i = 0; i < Vocabulary::kNumSpecials; ++i) map[static_cast<size_t>(i)] = i;
    for (int i = Vocabulary::kNumSpecials; i < from.size(); ++i)
        map[static_cast<size_t>(i)] = to.lookup(from.token(i));
    return map;
}

}  // namespace btsumm
