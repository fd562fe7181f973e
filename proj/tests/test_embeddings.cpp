#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "btsumm/embeddings.hpp"
#include "btsumm/simd.hpp"
#include "testutil.hpp"

using namespace btsumm;

namespace {

double cosine(const float* a, const float* b, int d) {
    double num = 0, na = 0, nb = 0;
    for (int i = 0; i < d; ++i) {
        num += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    return num / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
}

// Corpus in which "cat" and "dog" appear in identical context multisets.
RawCorpus cat_dog_corpus() {
    RawCorpus raw;
    raw.side = Side::kFullText;
    std::vector<std::string> contexts{"fur", "tail", "paw", "meows", "barks", "plays"};
    for (int rep = 0; rep < 60; ++rep) {
        for (const auto& c : contexts) {
            raw.lines.push_back({"the", "cat", c});
            raw.lines.push_back({"the", "dog", c});
        }
        raw.lines.push_back({"stone", "wall", "granite"});
        raw.lines.push_back({"stone", "bridge", "granite"});
    }
    return raw;
}

}  // namespace

TEST_CASE("skipgram triple gradient matches finite differences (64-bit)") {
    const int dim = 16;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    std::vector<double> v(dim), up(dim), un(dim);
    for (auto* vec : {&v, &up, &un})
        for (auto& x : *vec) x = dist(rng);

    std::vector<double> gv(dim), gp(dim), gn(dim);
    skipgram_triple_grads(v.data(), up.data(), un.data(), dim, gv.data(), gp.data(), gn.data());

    std::vector<std::pair<double*, double>> coords;
    for (int i = 0; i < dim; ++i) {
        coords.emplace_back(&v[static_cast<size_t>(i)], gv[static_cast<size_t>(i)]);
        coords.emplace_back(&up[static_cast<size_t>(i)], gp[static_cast<size_t>(i)]);
        coords.emplace_back(&un[static_cast<size_t>(i)], gn[static_cast<size_t>(i)]);
    }
    auto loss = [&]() { return skipgram_triple_loss(v.data(), up.data(), un.data(), dim); };
    btest::FdResult r = btest::fd_check(loss, coords);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("skipgram: shared contexts produce close vectors, loss decreases") {
    RawCorpus raw = cat_dog_corpus();
    Vocabulary vocab = build_vocab(raw, 100);
    Corpus corpus = encode_corpus(raw, vocab);

    SkipgramConfig cfg;
    cfg.dim = 32;
    cfg.window = 3;
    cfg.epochs = 6;
    cfg.seed = 17;
    SkipgramStats stats;
    EmbeddingMatrix emb = train_skipgram(corpus, vocab, cfg, &stats);

    CHECK(stats.epoch_loss.back() < stats.epoch_loss.front());

    int cat = vocab.lookup("cat"), dog = vocab.lookup("dog"), wall = vocab.lookup("wall");
    double close = cosine(emb.row(cat), emb.row(dog), cfg.dim);
    double far = cosine(emb.row(cat), emb.row(wall), cfg.dim);
    CHECK(close > far);
}

TEST_CASE("skipgram seeded training is bit-reproducible") {
    RawCorpus raw = cat_dog_corpus();
    Vocabulary vocab = build_vocab(raw, 100);
    Corpus corpus = encode_corpus(raw, vocab);
    SkipgramConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 2;
    cfg.seed = 23;
    EmbeddingMatrix a = train_skipgram(corpus, vocab, cfg);
    EmbeddingMatrix b = train_skipgram(corpus, vocab, cfg);
    CHECK(a.data == b.data);  // bit-identical
}

TEST_CASE("skipgram rejects bad arguments") {
    RawCorpus raw{{{"a", "b"}}, Side::kFullText, "t"};
    Vocabulary vocab = build_vocab(raw, 10);
    Corpus corpus = encode_corpus(raw, vocab);
    SkipgramConfig cfg;
    cfg.dim = 0;
    CHECK_THROWS_AS(train_skipgram(corpus, vocab, cfg), InvalidArgument);
    cfg.dim = 4;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_skipgram(corpus, vocab, cfg), InvalidArgument);
    Corpus empty;
    cfg.epochs = 1;
    CHECK_THROWS_AS(train_skipgram(empty, vocab, cfg), InvalidArgument);
}

TEST_CASE("embedding save/load round-trip under 1e-6") {
    btest::TmpDir tmp("emb");
    RawCorpus raw{{{"aa", "bb", "cc"}}, Side::kFullText, "t"};
    Vocabulary vocab = build_vocab(raw, 10);
    EmbeddingMatrix emb(vocab.size(), 2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(-2.f, 2.f);
    for (auto& x : emb.data) x = dist(rng);

    save_embeddings(emb, vocab, tmp.file("e.vec"));
    EmbeddingLoadResult res = load_embeddings(tmp.file("e.vec"), vocab);
    REQUIRE(res.matrix.dim == 2);
    double max_diff = 0;
    for (size_t i = 0; i < emb.data.size(); ++i)
        max_diff = std::max(max_diff,
                            std::abs(static_cast<double>(emb.data[i]) - res.matrix.data[i]));
    CHECK(max_diff < 1e-6);
    CHECK(res.skipped_unknown == 0);
}

TEST_CASE("embedding loader: header/line-count mismatch is an error") {
    btest::TmpDir tmp("emb");
    write_file_atomic(tmp.file("bad.vec"), "3 2\nx 1 2\ny 3 4\nz 5 6\nw 7 8\n");
    RawCorpus raw{{{"x", "y", "z", "w"}}, Side::kFullText, "t"};
    Vocabulary vocab = build_vocab(raw, 10);
    CHECK_THROWS_AS(load_embeddings(tmp.file("bad.vec"), vocab), IoError);
}

TEST_CASE("embedding loader: unknown word skipped with warning count") {
    btest::TmpDir tmp("emb");
    write_file_atomic(tmp.file("e.vec"), "2 2\nknown 1 2\nstranger 3 4\n");
    RawCorpus raw{{{"known", "other"}}, Side::kFullText, "t"};
    Vocabulary vocab = build_vocab(raw, 10);
    EmbeddingLoadResult res = load_embeddings(tmp.file("e.vec"), vocab);
    CHECK(res.skipped_unknown == 1);
    CHECK(res.matrix.row(vocab.lookup("known"))[0] == doctest::Approx(1.0f));
    // "other" row stays zero and is counted missing
    CHECK(res.missing_vocab > 0);
}

TEST_CASE("embedding loader: short row is an error") {
    btest::TmpDir tmp("emb");
    write_file_atomic(tmp.file("e.vec"), "1 3\nx 1 2\n");
    RawCorpus raw{{{"x"}}, Side::kFullText, "t"};
    Vocabulary vocab = build_vocab(raw, 10);
    CHECK_THROWS_AS(load_embeddings(tmp.file("e.vec"), vocab), IoError);
}
