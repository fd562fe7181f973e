#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "btsumm/corpus.hpp"
#include "testutil.hpp"

using namespace btsumm;

TEST_CASE("load_corpus: lookup, OOV, blank-line drop") {
    btest::TmpDir tmp("corpus");
    write_file_atomic(tmp.file("c.txt"), "the cat sat\n\nzyzzx cat\n");
    RawCorpus raw{{{"the", "cat", "sat"}, {"the", "cat"}}, Side::kFullText, "seed"};
    Vocabulary v = build_vocab(raw, 10);

    Corpus c = load_corpus(tmp.file("c.txt"), Side::kFullText, v);
    REQUIRE(c.sequences.size() == 2);  // blank line dropped
    CHECK(c.sequences[0].ids ==
          std::vector<int>{v.lookup("the"), v.lookup("cat"), v.lookup("sat")});
    CHECK(c.sequences[1].ids[0] == Vocabulary::kUnk);  // zyzzx unknown
    CHECK(c.sequences[1].ids[1] == v.lookup("cat"));
}

TEST_CASE("load_corpus rejects invalid UTF-8 naming the line") {
    btest::TmpDir tmp("corpus");
    std::string bad = "ok line\n\xff\xfe broken\n";
    write_file_atomic(tmp.file("bad.txt"), bad);
    try {
        load_raw_corpus(tmp.file("bad.txt"), Side::kFullText);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("build_vocab ordering, tie-break, truncation, specials") {
    RawCorpus raw{{{"a", "a", "b"}, {"a", "c"}}, Side::kFullText, "t"};
    Vocabulary v = build_vocab(raw, 10);
    // frequencies: a=3, b=1, c=1; b before c by first occurrence
    CHECK(v.tokens == std::vector<std::string>{"<unk>", "<eos>", "<pad>", "a", "b", "c"});
    for (int i = 0; i < v.size(); ++i) CHECK(v.lookup(v.token(i)) == i);

    Vocabulary v1 = build_vocab(raw, 1);
    CHECK(v1.size() == Vocabulary::kNumSpecials + 1);
    CHECK(v1.token(3) == "a");
    CHECK(v1.lookup("b") == Vocabulary::kUnk);

    CHECK_THROWS_AS(build_vocab(raw, 0), InvalidArgument);
}

TEST_CASE("vocab save/load round-trip") {
    btest::TmpDir tmp("vocab");
    RawCorpus raw{{{"x", "y", "x"}}, Side::kSummary, "t"};
    Vocabulary v = build_vocab(raw, 5);
    v.save(tmp.file("v.txt"));
    Vocabulary w = Vocabulary::load(tmp.file("v.txt"));
    CHECK(w.tokens == v.tokens);
    CHECK(w.freq == v.freq);
    CHECK(w.cap == v.cap);
}

TEST_CASE("detokenize round-trips up to UNK substitution") {
    RawCorpus raw{{{"a", "b"}, {"c", "a"}}, Side::kFullText, "t"};
    Vocabulary v = build_vocab(raw, 10);
    std::string s = "a b c unseen";
    TokenSequence seq{encode_tokens(split_ws(s), v), Side::kFullText};
    CHECK(detokenize(seq, v) == "a b c <unk>");
}

TEST_CASE("split_unaligned: determinism, disjointness, sizes") {
    SplitRatios r{0.5, 0.5, 0.0, 0.0};
    SplitManifest a = split_unaligned(10, r, 7);
    SplitManifest b = split_unaligned(10, r, 7);
    CHECK(a.summary_only == b.summary_only);
    CHECK(a.fulltext_only == b.fulltext_only);
    CHECK(a.summary_only.size() == 5);
    CHECK(a.fulltext_only.size() == 5);

    // brute-force disjointness on 1000 pairs, several seeds
    for (uint64_t seed : {1ull, 2ull, 99ull}) {
        SplitRatios r2{0.4, 0.4, 0.1, 0.1};
        SplitManifest m = split_unaligned(1000, r2, seed);
        std::set<int64_t> seen;
        size_t total = 0;
        for (const auto* part : {&m.summary_only, &m.fulltext_only, &m.validation, &m.test}) {
            for (int64_t i : *part) seen.insert(i);
            total += part->size();
        }
        CHECK(seen.size() == total);   // pairwise disjoint
        CHECK(total == 1000);
        for (int64_t i : m.summary_only)
            CHECK(!std::binary_search(m.fulltext_only.begin(), m.fulltext_only.end(), i));
    }
}

TEST_CASE("split_unaligned rejects bad ratios") {
    CHECK_THROWS_AS(split_unaligned(10, SplitRatios{0.5, 0.6, 0, 0}, 1), InvalidArgument);
}

TEST_CASE("split manifest save/load round-trip") {
    btest::TmpDir tmp("split");
    SplitManifest m = split_unaligned(50, SplitRatios{0.4, 0.4, 0.1, 0.1}, 3);
    m.save(tmp.file("m.txt"));
    SplitManifest l = SplitManifest::load(tmp.file("m.txt"));
    CHECK(l.summary_only == m.summary_only);
    CHECK(l.fulltext_only == m.fulltext_only);
    CHECK(l.validation == m.validation);
    CHECK(l.test == m.test);
    CHECK(l.seed == m.seed);
    CHECK(l.total == m.total);
}

TEST_CASE("synth rule application matches the stated example") {
    SynthRule rule;
    rule.content = {"dog", "ran", "fast"};
    rule.filler = {"today", "filler"};
    rule.synonyms = {{"ran", "runs"}};
    rule.summary_len = 3;
    std::vector<std::string> fulltext{"dog", "ran", "fast", "today", "filler"};
    CHECK(apply_synth_summary_rule(rule, fulltext) ==
          std::vector<std::string>{"dog", "runs", "fast"});
}

TEST_CASE("synth_corpus sizes, hidden pairing, and shuffle unalignment") {
    SynthRule rule = make_synth_rule(40, 20, 0.3, 5);
    const int64_t n = 1000;
    SynthCorpus sc = synth_corpus(rule, n, 11);
    CHECK(static_cast<int64_t>(sc.fulltext.lines.size()) == n);
    CHECK(static_cast<int64_t>(sc.summary.lines.size()) == n);

    // hidden pairing is consistent with the rule
    for (int64_t i = 0; i < n; i += 97) {
        auto expect = apply_synth_summary_rule(rule, sc.fulltext.lines[static_cast<size_t>(i)]);
        CHECK(sc.summary.lines[static_cast<size_t>(sc.summary_index_of_fulltext[static_cast<size_t>(i)])] ==
              expect);
    }

    // aligned positions are rare after independent shuffles
    int64_t fixed = 0;
    for (int64_t i = 0; i < n; ++i)
        if (sc.summary_index_of_fulltext[static_cast<size_t>(i)] == i) ++fixed;
    CHECK(fixed <= n / 100);  // >= 99% unaligned

    // full texts end with the period token and respect length bounds
    for (const auto& line : sc.fulltext.lines) {
        CHECK(line.back() == ".");
        CHECK(static_cast<int>(line.size()) >= rule.min_len);
    }
    CHECK_THROWS_AS(synth_corpus(rule, 0, 1), InvalidArgument);
}

TEST_CASE("build_vocab is stable under permutation of identical-frequency input") {
    // same frequency multiset and same first occurrences -> same vocab
    RawCorpus a{{{"x", "y"}, {"z", "x"}}, Side::kFullText, "a"};
    RawCorpus b{{{"x", "y", "z", "x"}}, Side::kFullText, "b"};
    Vocabulary va = build_vocab(a, 10);
    Vocabulary vb = build_vocab(b, 10);
    CHECK(va.tokens == vb.tokens);
}

TEST_CASE("paired file loader lowercases and splits") {
    btest::TmpDir tmp("paired");
    write_file_atomic(tmp.file("p.tsv"), "The Dog ran\tDog runs\na b\tc\n");
    PairedFile pf = load_paired_file(tmp.file("p.tsv"));
    REQUIRE(pf.fulltext.size() == 2);
    CHECK(pf.fulltext[0] == std::vector<std::string>{"the", "dog", "ran"});
    CHECK(pf.summary[0] == std::vector<std::string>{"dog", "runs"});
}
