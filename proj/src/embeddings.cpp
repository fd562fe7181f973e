#include "btsumm/embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "btsumm/simd.hpp"

namespace btsumm {

bool EmbeddingMatrix::all_finite() const {
    for (float x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

namespace {

struct UnigramTable {
    // cumulative unigram^0.75 mass; sampling is a binary search over it
    std::vector<double> cum;
    std::vector<int> ids;

    int sample(uint64_t r) const {
        double u = static_cast<double>(r >> 11) * 0x1.0p-53 * cum.back();
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        size_t k = std::min(static_cast<size_t>(it - cum.begin()), cum.size() - 1);
        return ids[k];
    }
};

UnigramTable build_unigram_table(const std::vector<int64_t>& counts) {
    UnigramTable t;
    double acc = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] <= 0) continue;
        acc += std::pow(static_cast<double>(counts[i]), 0.75);
        t.cum.push_back(acc);
        t.ids.push_back(static_cast<int>(i));
    }
    if (t.cum.empty()) throw InvalidArgument("skipgram: no tokens to sample negatives from");
    return t;
}

struct TrainShared {
    std::vector<float>* syn0;
    std::vector<float>* syn1;
    const std::vector<std::vector<int>>* seqs;
    const std::vector<int64_t>* counts;
    const UnigramTable* table;
    const SkipgramConfig* cfg;
    int64_t total_tokens = 0;       // per epoch
    std::atomic<int64_t> processed{0};
    std::atomic<double> loss_sum{0};
    std::atomic<int64_t> loss_pairs{0};
};

void add_loss(TrainShared& sh, double v) {
    double cur = sh.loss_sum.load(std::memory_order_relaxed);
    while (!sh.loss_sum.compare_exchange_weak(cur, cur + v, std::memory_order_relaxed)) {
    }
}

void train_range(TrainShared& sh, int epoch, size_t begin, size_t end, uint64_t stream) {
    const SkipgramConfig& cfg = *sh.cfg;
    const int dim = cfg.dim;
    auto rng = make_rng(cfg.seed, 0x536b69, mix_seed(static_cast<uint64_t>(epoch), stream));
    std::vector<float> neu1e(static_cast<size_t>(dim));
    float* syn0 = sh.syn0->data();
    float* syn1 = sh.syn1->data();
    const int64_t total_work = sh.total_tokens * cfg.epochs;
    double local_loss = 0;
    int64_t local_pairs = 0;

    for (size_t si = begin; si < end; ++si) {
        const auto& seq = (*sh.seqs)[si];
        std::vector<int> kept;
        kept.reserve(seq.size());
        if (cfg.sample > 0) {
            for (int w : seq) {
                double f = static_cast<double>((*sh.counts)[static_cast<size_t>(w)]) /
                           static_cast<double>(sh.total_tokens);
                double keep = (std::sqrt(f / cfg.sample) + 1.0) * cfg.sample / f;
                double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                if (keep >= u) kept.push_back(w);
            }
        } else {
            kept.assign(seq.begin(), seq.end());
        }
        const int n = static_cast<int>(kept.size());
        for (int pos = 0; pos < n; ++pos) {
            int64_t done = sh.processed.fetch_add(1, std::memory_order_relaxed);
            float lr = cfg.lr * std::max(1e-4f, 1.0f - static_cast<float>(done) /
                                                           static_cast<float>(total_work));
            int center = kept[static_cast<size_t>(pos)];
            int b = static_cast<int>(rng() % static_cast<uint64_t>(cfg.window));
            for (int off = b - cfg.window; off <= cfg.window - b; ++off) {
                if (off == 0) continue;
                int cpos = pos + off;
                if (cpos < 0 || cpos >= n) continue;
                int context = kept[static_cast<size_t>(cpos)];
                float* v = syn0 + static_cast<size_t>(center) * static_cast<size_t>(dim);
                std::fill(neu1e.begin(), neu1e.end(), 0.0f);
                for (int k = 0; k <= cfg.negatives; ++k) {
                    int target;
                    float label;
                    if (k == 0) {
                        target = context;
                        label = 1.0f;
                    } else {
                        target = sh.table->sample(rng());
                        if (target == context) continue;
                        label = 0.0f;
                    }
                    float* u = syn1 + static_cast<size_t>(target) * static_cast<size_t>(dim);
                    float d = simd::dot(v, u, static_cast<size_t>(dim));
                    float s = 1.0f / (1.0f + std::exp(-d));
                    float g = (label - s) * lr;
                    simd::axpy(g, u, neu1e.data(), static_cast<size_t>(dim));
                    simd::axpy(g, v, u, static_cast<size_t>(dim));
                    local_loss += label > 0.5f ? -std::log(std::max(s, 1e-12f))
                                               : -std::log(std::max(1.0f - s, 1e-12f));
                    ++local_pairs;
                }
                simd::axpy(1.0f, neu1e.data(), v, static_cast<size_t>(dim));
            }
        }
    }
    add_loss(sh, local_loss);
    sh.loss_pairs.fetch_add(local_pairs, std::memory_order_relaxed);
}

}  // namespace

EmbeddingMatrix train_skipgram(const Corpus& corpus, const Vocabulary& vocab,
                               const SkipgramConfig& cfg, SkipgramStats* stats) {
    if (corpus.sequences.empty()) throw InvalidArgument("train_skipgram: empty corpus");
    if (cfg.dim < 1) throw InvalidArgument("train_skipgram: dim must be >= 1");
    if (cfg.epochs < 1) throw InvalidArgument("train_skipgram: epochs must be >= 1");

    const int vsz = vocab.size();
    std::vector<std::vector<int>> seqs;
    seqs.reserve(corpus.sequences.size());
    std::vector<int64_t> counts(static_cast<size_t>(vsz), 0);
    int64_t total_tokens = 0;
    for (const auto& s : corpus.sequences) {
        std::vector<int> ids = s.ids;
        ids.push_back(Vocabulary::kEos);
        for (int w : ids) counts[static_cast<size_t>(w)]++;
        total_tokens += static_cast<int64_t>(ids.size());
        seqs.push_back(std::move(ids));
    }

    std::vector<float> syn0(static_cast<size_t>(vsz) * static_cast<size_t>(cfg.dim));
    std::vector<float> syn1(syn0.size(), 0.0f);
    auto rng = make_rng(cfg.seed, 0x1217);
    for (auto& x : syn0)
        x = (static_cast<float>(rng() >> 40) / 16777216.0f - 0.5f) / static_cast<float>(cfg.dim);

    UnigramTable table = build_unigram_table(counts);
    TrainShared sh;
    sh.syn0 = &syn0;
    sh.syn1 = &syn1;
    sh.seqs = &seqs;
    sh.counts = &counts;
    sh.table = &table;
    sh.cfg = &cfg;
    sh.total_tokens = total_tokens;

    if (stats != nullptr) {
        stats->epoch_loss.clear();
        stats->pairs_trained = 0;
    }

    const int threads = (!cfg.deterministic && cfg.threads > 1) ? cfg.threads : 1;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        sh.loss_sum.store(0);
        sh.loss_pairs.store(0);
        if (threads == 1) {
            train_range(sh, epoch, 0, seqs.size(), 0);
        } else {
            std::vector<std::thread> pool;
            size_t chunk = (seqs.size() + static_cast<size_t>(threads) - 1) /
                           static_cast<size_t>(threads);
            for (int t = 0; t < threads; ++t) {
                size_t b = static_cast<size_t>(t) * chunk;
                size_t e = std::min(seqs.size(), b + chunk);
                if (b >= e) break;
                pool.emplace_back(
                    [&sh, epoch, b, e, t]() { train_range(sh, epoch, b, e, static_cast<uint64_t>(t)); });
            }
            for (auto& th : pool) th.join();
        }
        double mean_loss = sh.loss_pairs.load() > 0
                               ? sh.loss_sum.load() / static_cast<double>(sh.loss_pairs.load())
                               : 0.0;
        if (stats != nullptr) {
            stats->epoch_loss.push_back(mean_loss);
            stats->pairs_trained += sh.loss_pairs.load();
        }
        if (cfg.verbose)
            log_line("skipgram", "epoch " + std::to_string(epoch + 1) + "/" +
                                     std::to_string(cfg.epochs) +
                                     " loss=" + format_double(mean_loss));
    }

    EmbeddingMatrix emb(vsz, cfg.dim);
    emb.data = std::move(syn0);
    if (!emb.all_finite()) throw DivergenceError("skipgram produced non-finite embeddings");
    return emb;
}

void save_embeddings(const EmbeddingMatrix& emb, const Vocabulary& vocab,
                     const std::string& path) {
    if (emb.vocab_size != vocab.size())
        throw InvalidArgument("save_embeddings: vocab size mismatch");
    std::ostringstream out;
    out << emb.vocab_size << ' ' << emb.dim << '\n';
    char buf[64];
    for (int i = 0; i < emb.vocab_size; ++i) {
        out << vocab.token(i);
        const float* r = emb.row(i);
        for (int j = 0; j < emb.dim; ++j) {
            std::snprintf(buf, sizeof(buf), " %.8g", static_cast<double>(r[j]));
            out << buf;
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

EmbeddingLoadResult load_embeddings(const std::string& path, const Vocabulary& vocab) {
    auto lines = read_lines(path);
    if (lines.empty()) throw IoError("empty embedding file " + path);
    std::istringstream header(lines[0]);
    int64_t count = -1;
    int dim = -1;
    if (!(header >> count >> dim) || count < 0 || dim < 1)
        throw IoError("bad embedding header in " + path);

    int64_t data_lines = 0;
    for (size_t i = 1; i < lines.size(); ++i)
        if (!lines[i].empty()) ++data_lines;
    if (data_lines != count)
        throw IoError("embedding file " + path + " header declares " + std::to_string(count) +
                      " rows but has " + std::to_string(data_lines));

    EmbeddingLoadResult res;
    res.matrix = EmbeddingMatrix(vocab.size(), dim);
    std::vector<bool> seen(static_cast<size_t>(vocab.size()), false);
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::istringstream ss(lines[i]);
        std::string word;
        ss >> word;
        if (!vocab.contains(word)) {
            res.skipped_unknown++;
            continue;
        }
        int id = vocab.lookup(word);
        float* r = res.matrix.row(id);
        for (int j = 0; j < dim; ++j) {
            if (!(ss >> r[j]))
                throw IoError("embedding row for '" + word + "' shorter than dim in " + path);
        }
        float extra;
        if (ss >> extra)
            throw IoError("embedding row for '" + word + "' longer than dim in " + path);
        seen[static_cast<size_t>(id)] = true;
    }
    for (bool b : seen)
        if (!b) res.missing_vocab++;
    return res;
}

}  // namespace btsumm
