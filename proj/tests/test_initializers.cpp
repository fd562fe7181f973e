#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "btsumm/dbae.hpp"
#include "btsumm/moments.hpp"
#include "btsumm/mu1.hpp"
#include "btsumm/prthr.hpp"
#include "testutil.hpp"

using namespace btsumm;

namespace {

Vocabulary vocab_from_words(const std::vector<std::string>& words) {
    RawCorpus raw;
    raw.side = Side::kFullText;
    raw.lines.push_back(words);
    return build_vocab(raw, static_cast<int>(words.size()));
}

Corpus corpus_from(const std::vector<std::vector<std::string>>& lines, const Vocabulary& v,
                   Side side) {
    RawCorpus raw{lines, side, "t"};
    return encode_corpus(raw, v);
}

EmbeddingMatrix random_emb(int vocab, int dim, uint64_t seed) {
    EmbeddingMatrix emb(vocab, dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
    for (auto& x : emb.data) x = dist(rng);
    return emb;
}

}  // namespace

TEST_CASE("compute_moments: presence semantics by hand count") {
    Vocabulary v = vocab_from_words({"a", "b", "c"});
    Corpus summ = corpus_from({{"a", "b"}, {"a"}}, v, Side::kSummary);
    Corpus full = corpus_from({{"a", "a", "c"}, {"c"}, {"b"}}, v, Side::kFullText);
    MomentStats st = compute_moments(full, summ, v);
    CHECK(st.mu_s[static_cast<size_t>(v.lookup("a"))] == doctest::Approx(1.0));
    CHECK(st.mu_s[static_cast<size_t>(v.lookup("b"))] == doctest::Approx(0.5));
    CHECK(st.mu_s[static_cast<size_t>(v.lookup("c"))] == doctest::Approx(0.0));
    // "a a c": a counted once despite appearing twice
    CHECK(st.mu_f[static_cast<size_t>(v.lookup("a"))] == doctest::Approx(1.0 / 3.0));
    CHECK(st.mu_f[static_cast<size_t>(v.lookup("c"))] == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(compute_moments(Corpus{}, summ, v), InvalidArgument);
}

TEST_CASE("compute_moments equals brute-force presence counts on a random corpus") {
    Vocabulary v = vocab_from_words({"w0", "w1", "w2", "w3", "w4", "w5"});
    std::mt19937_64 rng(5);
    std::vector<std::vector<std::string>> flines, slines;
    for (int i = 0; i < 500; ++i) {
        std::vector<std::string> line;
        int len = 1 + static_cast<int>(rng() % 6);
        for (int j = 0; j < len; ++j) line.push_back("w" + std::to_string(rng() % 6));
        (i % 2 == 0 ? flines : slines).push_back(line);
    }
    Corpus full = corpus_from(flines, v, Side::kFullText);
    Corpus summ = corpus_from(slines, v, Side::kSummary);
    MomentStats st = compute_moments(full, summ, v);
    for (int id = Vocabulary::kNumSpecials; id < v.size(); ++id) {
        const std::string& w = v.token(id);
        int64_t cf = 0;
        for (const auto& line : flines)
            cf += std::find(line.begin(), line.end(), w) != line.end() ? 1 : 0;
        bool exact = st.mu_f[static_cast<size_t>(id)] ==
                     static_cast<double>(cf) / static_cast<double>(flines.size());
        CHECK(exact);
    }
}

TEST_CASE("summary_weights formula, clamp, drop, and cap") {
    Vocabulary shared = vocab_from_words({"up", "down", "fonly", "sonly"});
    Vocabulary summ = vocab_from_words({"up", "down", "sonly"});
    MomentStats st;
    st.mu_f.assign(static_cast<size_t>(shared.size()), 0.0);
    st.mu_s.assign(static_cast<size_t>(shared.size()), 0.0);
    st.mu_f[static_cast<size_t>(shared.lookup("up"))] = 0.01;
    st.mu_s[static_cast<size_t>(shared.lookup("up"))] = 0.02;
    st.mu_f[static_cast<size_t>(shared.lookup("down"))] = 0.01;
    st.mu_s[static_cast<size_t>(shared.lookup("down"))] = 0.005;
    st.mu_f[static_cast<size_t>(shared.lookup("fonly"))] = 0.5;
    st.mu_s[static_cast<size_t>(shared.lookup("sonly"))] = 0.3;  // mu_f = 0

    auto w = summary_weights(st, shared, summ, 10.0);
    CHECK(w[static_cast<size_t>(shared.lookup("up"))] == doctest::Approx(2.0));
    CHECK(w[static_cast<size_t>(shared.lookup("down"))] == doctest::Approx(1.0));  // clamped
    CHECK(w[static_cast<size_t>(shared.lookup("fonly"))] == 0.0f);                 // dropped
    CHECK(w[static_cast<size_t>(shared.lookup("sonly"))] == doctest::Approx(10.0));  // cap

    // monotonicity: raising mu_s never lowers the weight
    for (double ms : {0.001, 0.01, 0.05, 0.2, 0.9}) {
        MomentStats st2 = st;
        st2.mu_s[static_cast<size_t>(shared.lookup("up"))] = ms;
        auto w2 = summary_weights(st2, shared, summ, 10.0);
        MomentStats st3 = st;
        st3.mu_s[static_cast<size_t>(shared.lookup("up"))] = ms + 0.05;
        auto w3 = summary_weights(st3, shared, summ, 10.0);
        CHECK(w3[static_cast<size_t>(shared.lookup("up"))] >=
              w2[static_cast<size_t>(shared.lookup("up"))]);
    }
}

TEST_CASE("moments save/load round-trip") {
    btest::TmpDir tmp("mom");
    Vocabulary v = vocab_from_words({"a", "b"});
    Corpus full = corpus_from({{"a"}, {"b"}}, v, Side::kFullText);
    Corpus summ = corpus_from({{"a", "b"}}, v, Side::kSummary);
    MomentStats st = compute_moments(full, summ, v);
    st.save(tmp.file("m.tsv"), v);
    MomentStats l = MomentStats::load(tmp.file("m.tsv"), v);
    CHECK(l.mu_f == st.mu_f);
    CHECK(l.mu_s == st.mu_s);
}

TEST_CASE("prthr_summarize: threshold, EOS skip, order, length cap") {
    // hand-built neighbor map over a 6-word source vocab
    PrThrModel model;
    model.cfg.eta = 0.9f;
    model.cfg.max_len = 3;
    model.tgt_vocab_size = 10;
    model.neighbors.assign(9, NeighborHit{});
    model.neighbors[3] = {5, 0.2f};                    // kept
    model.neighbors[4] = {Vocabulary::kEos, 0.01f};    // skipped: EOS
    model.neighbors[5] = {6, 0.95f};                   // skipped: beyond threshold
    model.neighbors[6] = {7, 0.89f};                   // kept (strictly below eta)
    model.neighbors[7] = {8, 0.1f};                    // kept
    model.neighbors[8] = {9, 0.0f};                    // would be kept but cap hits

    TokenSequence seq{{3, 4, 5, 6, 7, 8}, Side::kFullText};
    TokenSequence out = prthr_summarize(seq, model);
    CHECK(out.ids == std::vector<int>{5, 7, 8});  // order preserved, capped at 3
    CHECK(out.side == Side::kSummary);

    // all beyond threshold -> empty summary
    PrThrModel strict = model;
    strict.cfg.eta = 0.05f;
    TokenSequence empty_out = prthr_summarize(seq, strict);
    CHECK(empty_out.ids.size() <= 1);  // only the EOS-skip neighbor beats 0.05
}

TEST_CASE("prthr on a planted synonym space maps to the synonym prefix") {
    // source words sit exactly on rotated copies of target synonym vectors
    const int dim = 8, words = 12;
    const int vocab = words + Vocabulary::kNumSpecials;
    EmbeddingMatrix tgt = random_emb(vocab, dim, 3);
    auto rot = btest::random_rotation(dim, 4);
    EmbeddingMatrix src(vocab, dim);
    // src_i = tgt_i rotated by R^T so that mapping by R recovers tgt_i
    for (int i = Vocabulary::kNumSpecials; i < vocab; ++i)
        for (int j = 0; j < dim; ++j) {
            double v = 0;
            for (int k = 0; k < dim; ++k)
                v += static_cast<double>(tgt.row(i)[k]) * rot[static_cast<size_t>(j) * dim + k];
            src.row(i)[j] = static_cast<float>(v);
        }
    std::vector<float> q(rot.size());
    for (size_t i = 0; i < rot.size(); ++i) q[i] = static_cast<float>(rot[i]);
    AlignedSpace space = make_aligned_space(src, tgt, q, false);
    PrThrConfig cfg;
    cfg.max_len = 4;
    PrThrModel model = PrThrModel::build(space, cfg);
    TokenSequence seq{{3, 4, 5, 6, 7, 8}, Side::kFullText};
    TokenSequence out = prthr_summarize(seq, model);
    CHECK(out.ids == std::vector<int>{3, 4, 5, 6});  // identity synonyms, N = 4
}

TEST_CASE("dbae_noise: zero noise is identity, determinism, expected length") {
    std::vector<int> seq{3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<int> pool{3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    CHECK(dbae_noise(seq, 0.0, 1, pool) == seq);
    CHECK(dbae_noise(seq, 0.7, 42, pool) == dbae_noise(seq, 0.7, 42, pool));
    CHECK(dbae_noise(seq, 0.7, 42, pool) != dbae_noise(seq, 0.7, 43, pool));
    CHECK_THROWS_AS(dbae_noise(seq, 1.5, 1, pool), InvalidArgument);

    // p = 1: expected length 1.5 L, Monte-Carlo within 2%
    double total = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
        total += static_cast<double>(dbae_noise(seq, 1.0, static_cast<uint64_t>(t), pool).size());
    double mean = total / trials;
    double expect = 1.5 * static_cast<double>(seq.size());
    CHECK(std::abs(mean - expect) / expect < 0.02);
}

TEST_CASE("dbae: training reduces loss; 0 epochs is a no-op; lambda bias is additive") {
    // small reconstruction problem over an 8-word summary vocab
    std::vector<std::string> words{"a", "b", "c", "d", "e", "f", "g", "h"};
    Vocabulary vs = vocab_from_words(words);
    Vocabulary vsh = vs;  // shared == summary for this test
    EmbeddingMatrix emb = random_emb(vsh.size(), 16, 7);
    std::vector<int> vs_to_sh = vocab_id_map(vs, vsh);
    std::vector<int> sh_to_vs = vocab_id_map(vsh, vs);

    DbaeHParams hp;
    hp.enc_dim = 12;
    hp.hidden = 12;
    hp.noise_p = 0.2;
    Dbae<double> model = Dbae<double>::build(emb, vs_to_sh, hp, 11);

    std::mt19937_64 rng(13);
    std::vector<std::vector<int>> inputs, targets;
    for (int i = 0; i < 60; ++i) {
        std::vector<int> line;
        int len = 2 + static_cast<int>(rng() % 4);
        for (int j = 0; j < len; ++j)
            line.push_back(Vocabulary::kNumSpecials + static_cast<int>(rng() % 8));
        inputs.push_back(line);
        targets.push_back(line);  // identical id spaces
    }
    std::vector<int> pool;
    for (int i = Vocabulary::kNumSpecials; i < vs.size(); ++i) pool.push_back(i);

    // 0 epochs: parameters untouched
    std::vector<double> before = model.enc_w.value.v;
    DbaeTrainConfig cfg0;
    cfg0.epochs = 0;
    dbae_train(model, inputs, targets, pool, cfg0);
    CHECK(model.enc_w.value.v == before);

    DbaeTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch = 16;
    cfg.seed = 17;
    cfg.heldout_frac = 0.1;
    DbaeTrainStats stats = dbae_train(model, inputs, targets, pool, cfg);
    REQUIRE(stats.train_loss.size() == 4);
    CHECK(stats.train_loss.back() < stats.train_loss.front());

    // lambda bias: pre-softmax score of input words rises by exactly lambda.
    // Compare step logits with bias applied manually.
    std::vector<int> input{3, 5};
    nn::Tape<double> tape(false, false);
    std::vector<double> w(input.size(), 1.0);
    auto* rows = tape.rows_const(model.enc_table, input);
    auto* pooled = tape.mean_pool(rows);
    auto* enc = model.encode_pooled(tape, tape.stack_rows({pooled}), false);
    auto [h1, h2] = model.decoder_init(tape, tape.row(enc, 0));
    auto step = model.decode_step(tape, Vocabulary::kEos, h1, h2);
    // biased = logits + lambda on ids {3,5} exactly
    nn::Tensor<double> bias(std::vector<int>{model.summary_vocab});
    for (int sid : input) bias.v[static_cast<size_t>(sh_to_vs[static_cast<size_t>(sid)])] = hp.lambda_bias;
    auto* biased = tape.add_const(step.logits, bias);
    for (int vsid = 0; vsid < model.summary_vocab; ++vsid) {
        double expectation = step.logits->val.v[static_cast<size_t>(vsid)] +
                             ((vsid == sh_to_vs[3] || vsid == sh_to_vs[5]) ? hp.lambda_bias : 0.0);
        CHECK(biased->val.v[static_cast<size_t>(vsid)] == doctest::Approx(expectation));
    }
}

TEST_CASE("dbae_summarize: all-dropped input falls back to the unweighted mean") {
    std::vector<std::string> words{"a", "b", "c", "d"};
    Vocabulary vs = vocab_from_words(words);
    EmbeddingMatrix emb = random_emb(vs.size(), 8, 19);
    std::vector<int> vs_to_sh = vocab_id_map(vs, vs);
    DbaeHParams hp;
    hp.enc_dim = 6;
    hp.hidden = 6;
    hp.max_len = 4;
    Dbae<double> model = Dbae<double>::build(emb, vs_to_sh, hp, 23);

    std::vector<float> weights(static_cast<size_t>(vs.size()), 0.0f);  // everything dropped
    std::vector<int> sh_to_vs = vocab_id_map(vs, vs);
    DbaeDecodeResult res = dbae_summarize(model, {3, 4}, weights, sh_to_vs);
    CHECK(res.used_fallback);

    weights[3] = 1.0f;
    DbaeDecodeResult res2 = dbae_summarize(model, {3, 4}, weights, sh_to_vs);
    CHECK(!res2.used_fallback);
    CHECK(static_cast<int>(res2.ids.size()) <= hp.max_len);
}

TEST_CASE("moments model: masking, clamp, scaling identity, batched-loss gradient") {
    std::vector<std::string> words{"a", "b", "c", "d", "e"};
    Vocabulary vs = vocab_from_words(words);
    EmbeddingMatrix emb = random_emb(vs.size(), 10, 29);
    std::vector<int> identity = vocab_id_map(vs, vs);

    Mu1HParams hp;
    hp.enc_dim = 8;
    Mu1Model<double> model = Mu1Model<double>::build(emb, vs.size(), hp, 31);

    // masked absent words score below 1e-6 post-sigmoid
    std::vector<int> seq{vs.lookup("a"), vs.lookup("c")};
    nn::Tape<double> tape(false, false);
    std::vector<const std::vector<int>*> batch{&seq};
    auto* probs = model.forward_probs(tape, batch, identity, false);
    CHECK(probs->val.at(0, vs.lookup("b")) < 1e-6);
    CHECK(probs->val.at(0, vs.lookup("a")) > 1e-6);

    // target construction: scaling identity and clamp
    MomentStats st;
    st.mu_f.assign(static_cast<size_t>(vs.size()), 0.0);
    st.mu_s.assign(static_cast<size_t>(vs.size()), 0.0);
    for (const auto& w : words) {
        st.mu_f[static_cast<size_t>(vs.lookup(w))] = 0.5;
        st.mu_s[static_cast<size_t>(vs.lookup(w))] = 0.4;
    }
    // batch where every word present => batch_mu_f = 1 = 2 * mu_f; ratio 2
    std::vector<int> all{vs.lookup("a"), vs.lookup("b"), vs.lookup("c"), vs.lookup("d"),
                         vs.lookup("e")};
    std::vector<const std::vector<int>*> b2{&all, &all};
    {
        nn::Tape<double> t2;
        auto* loss = moments_batch_loss(model, t2, b2, identity, identity, st, true);
        CHECK(std::isfinite(loss->val.v[0]));
        // ratio 2 * mu_s = 0.8 (unclamped); push mu_s up to force the clamp
        MomentStats st_hi = st;
        for (auto& v : st_hi.mu_s) v = 0.9;  // 2 * 0.9 = 1.8 -> clamped to 1
        nn::Tape<double> t3;
        auto* loss_hi = moments_batch_loss(model, t3, b2, identity, identity, st_hi, true);
        CHECK(std::isfinite(loss_hi->val.v[0]));
    }

    // gradient of the batched loss against finite differences
    std::vector<std::vector<int>> five = {{3, 4}, {4, 5}, {3, 6}, {5, 6, 7}, {7}};
    std::vector<const std::vector<int>*> bptr;
    for (auto& s : five) bptr.push_back(&s);
    auto build = [&](nn::Tape<double>& t) {
        // fresh BN state per evaluation keeps the loss a pure function
        nn::BnState<double> saved = model.bn;
        auto* l = moments_batch_loss(model, t, bptr, identity, identity, st, true);
        model.bn = saved;
        return l;
    };
    nn::Tape<double> gt;
    auto* loss = build(gt);
    for (auto* p : model.params()) p->zero_grad();
    gt.backward(loss);
    std::vector<std::pair<double*, double>> coords;
    for (auto* p : model.params())
        for (size_t i : btest::sample_coords(p->value.numel(), 16))
            coords.emplace_back(&p->value.v[i], p->grad.v[i]);
    auto loss_fn = [&]() {
        nn::Tape<double> t;
        return build(t)->val.v[0];
    };
    btest::FdResult fd = btest::fd_check(loss_fn, coords);
    CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("moments_extract: threshold, dedup, order, cap, subset property") {
    std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
    Vocabulary vs = vocab_from_words(words);
    EmbeddingMatrix emb = random_emb(vs.size(), 10, 37);
    std::vector<int> identity = vocab_id_map(vs, vs);
    Mu1HParams hp;
    hp.enc_dim = 8;
    hp.max_len = 2;
    hp.eta = 2.0;  // impossible threshold: sigmoid < 1 always
    Mu1Model<double> model = Mu1Model<double>::build(emb, vs.size(), hp, 41);

    std::vector<int> seq{3, 4, 4, 5, 6};
    CHECK(moments_extract(model, seq, identity).empty());  // all below threshold

    model.hp.eta = -1.0;  // everything passes
    auto out = moments_extract(model, seq, identity);
    CHECK(out == std::vector<int>{3, 4});  // order, dedup of the repeated 4, cap 2

    model.hp.max_len = 12;
    auto all = moments_extract(model, seq, identity);
    for (int id : all)
        CHECK(std::find(seq.begin(), seq.end(), id) != seq.end());  // extraction subset
}
