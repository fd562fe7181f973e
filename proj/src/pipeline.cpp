#include "btsumm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "btsumm/alignment.hpp"
#include "btsumm/dbae.hpp"
#include "btsumm/moments.hpp"
#include "btsumm/mu1.hpp"
#include "btsumm/prthr.hpp"
#include "btsumm/seq2seq.hpp"

namespace btsumm {

namespace {

using nlohmann::json;

class Manifest {
  public:
    Manifest(const Config& cfg, std::string command, uint64_t seed) : timer_() {
        j_["command"] = std::move(command);
        j_["version"] = 1;
        j_["seed"] = seed;
        json conf = json::object();
        for (const auto& [k, v] : cfg.entries()) conf[k] = v;
        j_["config"] = conf;
        j_["inputs"] = json::array();
        j_["outputs"] = json::array();
    }

    void add_input(const std::string& p) {
        j_["inputs"].push_back({{"path", p}, {"hash", hash_file(p)}});
    }
    void add_output(const std::string& p) {
        j_["outputs"].push_back({{"path", p}, {"hash", hash_file(p)}});
    }
    void set_stats(json s) { j_["stats"] = std::move(s); }

    void write(const std::string& dir) {
        j_["wall_time_s"] = timer_.seconds();
        write_file_atomic(path_join(dir, "manifest.json"), j_.dump(2) + "\n");
    }

  private:
    json j_;
    Timer timer_;
};

json read_manifest_checked(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError&) {
        throw;
    }
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw IoError("corrupted manifest (unparseable JSON): " + path);
    return j;
}

bool entries_verify(const json& list) {
    for (const auto& e : list) {
        std::string p = e.at("path").get<std::string>();
        if (!file_exists(p)) return false;
        if (hash_file(p) != e.at("hash").get<std::string>()) return false;
    }
    return true;
}

GenerationConfig summary_gen_cfg(const Config& cfg) {
    GenerationConfig g;
    g.mode = GenerationConfig::Mode::kSample;
    g.k = static_cast<int>(cfg.get_int("generate.sample_k"));
    g.min_len = 0;
    g.max_len = static_cast<int>(cfg.get_int("generate.max_len_summary"));
    g.len_norm = cfg.get_real("seq2seq.len_norm");
    return g;
}

GenerationConfig fulltext_gen_cfg(const Config& cfg) {
    GenerationConfig g;
    g.mode = GenerationConfig::Mode::kSample;
    g.k = static_cast<int>(cfg.get_int("generate.sample_k"));
    g.min_len = static_cast<int>(cfg.get_int("generate.min_len_full"));
    g.max_len = static_cast<int>(cfg.get_int("generate.max_len_full"));
    g.len_norm = cfg.get_real("seq2seq.len_norm");
    return g;
}

GenerationConfig eval_gen_cfg(const Config& cfg) {
    GenerationConfig g;
    g.mode = GenerationConfig::Mode::kBeam;
    g.beam = static_cast<int>(cfg.get_int("eval.beam"));
    g.min_len = 0;
    g.max_len = static_cast<int>(cfg.get_int("eval.max_len"));
    g.len_norm = cfg.get_real("seq2seq.len_norm");
    return g;
}

nn::AdamConfig adam_cfg(const Config& cfg) {
    nn::AdamConfig a;
    a.lr = cfg.get_real("train.lr");
    a.beta1 = cfg.get_real("train.beta1");
    a.beta2 = cfg.get_real("train.beta2");
    a.eps = cfg.get_real("train.eps");
    a.clip_norm = cfg.get_real("train.clip_norm");
    return a;
}

void require_file(const std::string& path, const std::string& what) {
    if (!file_exists(path))
        throw MissingArtifactError("missing " + what + ": " + path + " (run the producing stage first)");
}

std::vector<StringSeq> load_token_lines(const std::string& path) {
    std::vector<StringSeq> out;
    for (auto& line : read_lines(path)) {
        auto toks = split_ws(line);
        if (!toks.empty()) out.push_back(std::move(toks));
    }
    return out;
}

std::vector<std::pair<StringSeq, StringSeq>> load_pair_lines(const std::string& path) {
    std::vector<std::pair<StringSeq, StringSeq>> out;
    for (auto& line : read_lines(path)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw IoError(path + ": malformed pair line");
        out.emplace_back(split_ws(line.substr(0, tab)), split_ws(line.substr(tab + 1)));
    }
    return out;
}

template <class F>
auto with_precision(const Config& cfg, F&& f) {
    if (cfg.get_str("train.precision") == "float64") return f(std::type_identity<double>{});
    return f(std::type_identity<float>{});
}

// Everything the loop, generation, and evaluation stages need, loaded once.
template <class T>
struct LoopContext {
    Config cfg;
    RunPaths paths;
    Vocabulary vf, vs, vsh;
    std::vector<StringSeq> full_lines, summ_lines;
    EmbeddingMatrix emb_shared;
    std::vector<int> vf_to_sh, vs_to_sh, sh_to_vs;
    MomentStats stats;
    std::vector<float> weights;
    std::vector<int> insert_pool;  // shared ids of summary-vocab words
    int period_vf = -1, period_vs = -1;

    std::optional<PrThrModel> prthr;
    std::optional<Dbae<T>> dbae;
    std::optional<Mu1Model<T>> mu1;

    explicit LoopContext(const Config& c, const std::string& run_dir)
        : cfg(c), paths(run_dir) {}
};

std::vector<int> encode_line(const StringSeq& toks, const Vocabulary& v) {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(v.lookup(t));
    return ids;
}

StringSeq decode_line(const std::vector<int>& ids, const Vocabulary& v) {
    StringSeq out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(v.token(id));
    return out;
}

template <class T>
LoopContext<T> build_loop_context(const Config& cfg, const std::string& run_dir,
                                  bool with_initializers) {
    LoopContext<T> ctx(cfg, run_dir);
    const RunPaths& p = ctx.paths;
    for (const std::string& f :
         {p.vocab_full(), p.vocab_summary(), p.vocab_shared(), p.fulltext_corpus(),
          p.summary_corpus()})
        require_file(f, "prepared data file");
    ctx.vf = Vocabulary::load(p.vocab_full());
    ctx.vs = Vocabulary::load(p.vocab_summary());
    ctx.vsh = Vocabulary::load(p.vocab_shared());
    ctx.full_lines = load_token_lines(p.fulltext_corpus());
    ctx.summ_lines = load_token_lines(p.summary_corpus());
    ctx.vf_to_sh = vocab_id_map(ctx.vf, ctx.vsh);
    ctx.vs_to_sh = vocab_id_map(ctx.vs, ctx.vsh);
    ctx.sh_to_vs = vocab_id_map(ctx.vsh, ctx.vs);
    ctx.period_vf = ctx.vf.contains(".") ? ctx.vf.lookup(".") : -1;
    ctx.period_vs = ctx.vs.contains(".") ? ctx.vs.lookup(".") : -1;

    require_file(p.emb_shared(), "shared embeddings");
    ctx.emb_shared = load_embeddings(p.emb_shared(), ctx.vsh).matrix;

    if (!with_initializers) return ctx;

    require_file(p.moments_file(), "moment statistics");
    ctx.stats = MomentStats::load(p.moments_file(), ctx.vsh);
    ctx.weights = summary_weights(ctx.stats, ctx.vsh, ctx.vs, cfg.get_real("dbae.weight_cap"));
    for (int vs_id = Vocabulary::kNumSpecials; vs_id < ctx.vs.size(); ++vs_id) {
        int sid = ctx.vs_to_sh[static_cast<size_t>(vs_id)];
        if (sid >= Vocabulary::kNumSpecials) ctx.insert_pool.push_back(sid);
    }

    // Pr-Thr: side embeddings + Q
    require_file(p.emb_full(), "full-text embeddings");
    require_file(p.emb_summary(), "summary embeddings");
    require_file(p.q_matrix(), "alignment Q matrix");
    EmbeddingMatrix ef = load_embeddings(p.emb_full(), ctx.vf).matrix;
    EmbeddingMatrix es = load_embeddings(p.emb_summary(), ctx.vs).matrix;
    json ameta = read_manifest_checked(p.align_meta());
    auto q = load_q_matrix(p.q_matrix(), ef.dim);
    AlignedSpace space = make_aligned_space(ef, es, q, ameta.value("degenerate", false));
    PrThrConfig pcfg;
    pcfg.eta = static_cast<float>(cfg.get_real("prthr.eta"));
    pcfg.max_len = static_cast<int>(cfg.get_int("prthr.max_len"));
    ctx.prthr = PrThrModel::build(space, pcfg, static_cast<int>(cfg.get_int("loop.jobs")));

    // DBAE
    require_file(p.dbae_ckpt(), "DBAE checkpoint");
    DbaeHParams dh;
    dh.enc_dim = static_cast<int>(cfg.get_int("dbae.enc_dim"));
    dh.hidden = static_cast<int>(cfg.get_int("dbae.hidden"));
    dh.noise_p = cfg.get_real("dbae.noise_p");
    dh.lambda_bias = cfg.get_real("dbae.lambda");
    dh.beam = static_cast<int>(cfg.get_int("dbae.beam"));
    dh.max_len = static_cast<int>(cfg.get_int("dbae.max_len"));
    dh.len_norm = cfg.get_real("seq2seq.len_norm");
    ctx.dbae = Dbae<T>::build(ctx.emb_shared, ctx.vs_to_sh, dh, cfg.get_u64("dbae.seed"));
    {
        auto ts = ctx.dbae->state_tensors();
        std::vector<std::pair<std::string, nn::Tensor<T>*>> req(ts.begin(), ts.end());
        nn::load_checkpoint<T>(p.dbae_ckpt(), req);
    }

    // mu:1
    require_file(p.mu1_ckpt(), "moments-model checkpoint");
    Mu1HParams mh;
    mh.enc_dim = static_cast<int>(cfg.get_int("moments.enc_dim"));
    mh.eta = cfg.get_real("moments.eta");
    mh.max_len = static_cast<int>(cfg.get_int("moments.max_len"));
    ctx.mu1 = Mu1Model<T>::build(ctx.emb_shared, ctx.vs.size(), mh, cfg.get_u64("moments.seed"));
    {
        auto ts = ctx.mu1->state_tensors();
        std::vector<std::pair<std::string, nn::Tensor<T>*>> req(ts.begin(), ts.end());
        nn::load_checkpoint<T>(p.mu1_ckpt(), req);
    }
    return ctx;
}

// ---- generator adapters ----------------------------------------------------

template <class T>
GeneratorFn make_prthr_generator(LoopContext<T>& ctx) {
    return [&ctx](const StringSeq& input, uint64_t) {
        TokenSequence seq{encode_line(input, ctx.vf), Side::kFullText};
        TokenSequence out = prthr_summarize(seq, *ctx.prthr);
        GenOutput g;
        g.raw_len = static_cast<int>(out.ids.size());
        g.tokens = decode_line(postprocess(out.ids, ctx.period_vs), ctx.vs);
        return g;
    };
}

template <class T>
GeneratorFn make_dbae_generator(LoopContext<T>& ctx) {
    return [&ctx](const StringSeq& input, uint64_t) {
        std::vector<int> ids = encode_line(input, ctx.vsh);
        DbaeDecodeResult r = dbae_summarize(*ctx.dbae, ids, ctx.weights, ctx.sh_to_vs);
        GenOutput g;
        g.raw_len = static_cast<int>(r.ids.size());
        g.tokens = decode_line(postprocess(r.ids, ctx.period_vs), ctx.vs);
        return g;
    };
}

template <class T>
GeneratorFn make_mu1_generator(LoopContext<T>& ctx) {
    return [&ctx](const StringSeq& input, uint64_t) {
        std::vector<int> ids = encode_line(input, ctx.vsh);
        std::vector<int> out = moments_extract(*ctx.mu1, ids, ctx.sh_to_vs);
        GenOutput g;
        g.raw_len = static_cast<int>(out.size());
        g.tokens = decode_line(postprocess(out, ctx.period_vs), ctx.vs);
        return g;
    };
}

template <class T>
GeneratorFn make_seq2seq_generator(LoopContext<T>& ctx, std::shared_ptr<Seq2Seq<T>> model,
                                   GenerationConfig base) {
    const Vocabulary& in_vocab =
        model->direction == Direction::kFullToSummary ? ctx.vf : ctx.vs;
    const Vocabulary& out_vocab =
        model->direction == Direction::kFullToSummary ? ctx.vs : ctx.vf;
    int period = model->direction == Direction::kFullToSummary ? ctx.period_vs : ctx.period_vf;
    return [&ctx, model, base, &in_vocab, &out_vocab, period](const StringSeq& input,
                                                              uint64_t seed) {
        GenerationConfig g = base;
        g.seed = seed;
        std::vector<int> ids = encode_line(input, in_vocab);
        std::vector<int> raw = generate(*model, ids, g);
        GenOutput out;
        out.raw_len = static_cast<int>(raw.size());
        out.tokens = decode_line(postprocess(raw, period), out_vocab);
        return out;
    };
}

// ---- seq2seq persistence ----------------------------------------------------

template <class T>
void save_seq2seq(LoopContext<T>& ctx, Seq2Seq<T>& model, Lineage lin, int iteration) {
    const RunPaths& p = ctx.paths;
    ensure_dir(p.iter_dir(lin, iteration));
    std::vector<std::pair<std::string, const nn::Tensor<T>*>> ts;
    for (auto& [name, t] : model.state_tensors()) ts.emplace_back(name, t);
    nn::save_checkpoint<T>(p.model_ckpt(lin, iteration), ts);
    json meta;
    meta["kind"] = "seq2seq";
    meta["direction"] = direction_name(model.direction);
    meta["in_vocab"] = model.in_vocab;
    meta["out_vocab"] = model.out_vocab;
    meta["emb_dim"] = model.hp.emb_dim;
    meta["hidden"] = model.hp.hidden;
    meta["len_norm"] = model.hp.len_norm;
    meta["freeze_embeddings"] = model.hp.freeze_embeddings;
    meta["precision"] = std::is_same_v<T, double> ? "f64" : "f32";
    write_file_atomic(p.model_meta(lin, iteration), meta.dump(2) + "\n");
}

template <class T>
std::shared_ptr<Seq2Seq<T>> load_seq2seq(LoopContext<T>& ctx, Lineage lin, int iteration) {
    const RunPaths& p = ctx.paths;
    require_file(p.model_ckpt(lin, iteration), "seq2seq checkpoint");
    require_file(p.model_meta(lin, iteration), "seq2seq sidecar");
    json meta = read_manifest_checked(p.model_meta(lin, iteration));
    Direction dir = direction_from_name(meta.at("direction").get<std::string>());
    Seq2SeqHParams hp;
    hp.emb_dim = meta.at("emb_dim").get<int>();
    hp.hidden = meta.at("hidden").get<int>();
    hp.len_norm = meta.at("len_norm").get<double>();
    hp.freeze_embeddings = meta.at("freeze_embeddings").get<bool>();
    auto model = std::make_shared<Seq2Seq<T>>(Seq2Seq<T>::build(
        dir, meta.at("in_vocab").get<int>(), meta.at("out_vocab").get<int>(), hp, 0));
    auto ts = model->state_tensors();
    std::vector<std::pair<std::string, nn::Tensor<T>*>> req(ts.begin(), ts.end());
    nn::load_checkpoint<T>(p.model_ckpt(lin, iteration), req);
    return model;
}

// ---- loop steps -------------------------------------------------------------

uint64_t lineage_seed(const Config& cfg, Lineage lin, int iteration, uint64_t salt) {
    return mix_seed(cfg.get_u64("loop.seed"),
                    static_cast<uint64_t>(lin) * 131 + static_cast<uint64_t>(iteration), salt);
}

// Generates dataset D^it for the lineage: f^it applied to the real corpus of
// the side the model consumes, paired with those real sequences.
template <class T>
void ensure_dataset(LoopContext<T>& ctx, Lineage lin, int iteration, bool force) {
    const RunPaths& p = ctx.paths;
    std::string dir = p.iter_dir(lin, iteration);
    if (!force && stage_done(dir)) return;
    Manifest man(ctx.cfg, "generate", lineage_seed(ctx.cfg, lin, iteration, 1));

    DataDirection ddir = dataset_direction_for_iteration(iteration);
    GeneratorFn gen;
    if (iteration == 0) {
        switch (lin) {
            case Lineage::kPrThr: gen = make_prthr_generator(ctx); break;
            case Lineage::kDbae: gen = make_dbae_generator(ctx); break;
            case Lineage::kMu1: gen = make_mu1_generator(ctx); break;
            case Lineage::kAll:
                throw InvalidArgument("the (All) lineage has no iteration-0 initializer");
        }
        man.add_input(p.fulltext_corpus());
    } else {
        auto model = load_seq2seq<T>(ctx, lin, iteration);
        bool to_summary = model->direction == Direction::kFullToSummary;
        if (to_summary != (ddir == DataDirection::kSummaryPrimeToFull))
            throw InvalidArgument("model direction does not match the dataset parity");
        gen = make_seq2seq_generator(ctx, model,
                                     to_summary ? summary_gen_cfg(ctx.cfg)
                                                : fulltext_gen_cfg(ctx.cfg));
        man.add_input(p.model_ckpt(lin, iteration));
        man.add_input(ddir == DataDirection::kSummaryPrimeToFull ? p.fulltext_corpus()
                                                                 : p.summary_corpus());
    }

    const std::vector<StringSeq>& real =
        ddir == DataDirection::kSummaryPrimeToFull ? ctx.full_lines : ctx.summ_lines;
    int jobs = static_cast<int>(ctx.cfg.get_int("loop.jobs"));
    ArtificialDataset ds = make_dataset(gen, real, lin, iteration, ddir,
                                        lineage_seed(ctx.cfg, lin, iteration, 1), jobs);
    ensure_dir(dir);
    save_dataset(ds, p.dataset(lin, iteration));
    json stats;
    stats["pairs"] = ds.stats.pairs;
    stats["dropped_empty"] = ds.stats.dropped_empty;
    stats["raw_min_len"] = ds.stats.raw_min_len;
    stats["raw_max_len"] = ds.stats.raw_max_len;
    stats["post_min_len"] = ds.stats.post_min_len;
    stats["post_max_len"] = ds.stats.post_max_len;
    stats["direction"] = data_direction_name(ddir);
    man.set_stats(stats);
    man.add_output(p.dataset(lin, iteration));
    man.write(dir);
    log_line(lineage_name(lin),
             "dataset " + std::to_string(iteration) + ": " + std::to_string(ds.stats.pairs) +
                 " pairs, dropped " + std::to_string(ds.stats.dropped_empty) + ", raw len [" +
                 std::to_string(ds.stats.raw_min_len) + "," +
                 std::to_string(ds.stats.raw_max_len) + "]");
}

// Trains f^it from D^{it-1} (or a mixed dataset for the (All) lineage).
template <class T>
void ensure_model(LoopContext<T>& ctx, Lineage lin, int iteration, bool force,
                  const std::string& dataset_path) {
    const RunPaths& p = ctx.paths;
    std::string dir = p.iter_dir(lin, iteration);
    std::string done_marker = p.model_ckpt(lin, iteration);
    if (!force && file_exists(done_marker) && file_exists(path_join(dir, "model.manifest.json"))) {
        json j = read_manifest_checked(path_join(dir, "model.manifest.json"));
        if (entries_verify(j.at("outputs")) && entries_verify(j.at("inputs"))) return;
    }
    require_file(dataset_path, "predecessor dataset");

    Direction dir_model = iteration % 2 == 1 ? Direction::kSummaryToFull
                                             : Direction::kFullToSummary;
    const Vocabulary& in_vocab = dir_model == Direction::kFullToSummary ? ctx.vf : ctx.vs;
    const Vocabulary& out_vocab = dir_model == Direction::kFullToSummary ? ctx.vs : ctx.vf;

    ArtificialDataset ds = load_dataset(dataset_path, lin, iteration - 1,
                                        dataset_direction_for_iteration(iteration - 1));
    if (ds.pairs.empty()) throw MissingArtifactError("empty training dataset " + dataset_path);
    IdPairs pairs;
    pairs.reserve(ds.pairs.size());
    for (const auto& [in, out] : ds.pairs)
        pairs.emplace_back(encode_line(in, in_vocab), encode_line(out, out_vocab));

    Seq2SeqHParams hp;
    hp.emb_dim = ctx.emb_shared.dim;
    hp.hidden = static_cast<int>(ctx.cfg.get_int("seq2seq.hidden"));
    hp.len_norm = ctx.cfg.get_real("seq2seq.len_norm");
    hp.freeze_embeddings = ctx.cfg.get_bool("seq2seq.freeze_embeddings");
    Seq2Seq<T> model = Seq2Seq<T>::build(dir_model, in_vocab.size(), out_vocab.size(), hp,
                                         lineage_seed(ctx.cfg, lin, iteration, 2));
    model.load_pretrained_embeddings(
        ctx.emb_shared, dir_model == Direction::kFullToSummary ? ctx.vf_to_sh : ctx.vs_to_sh,
        dir_model == Direction::kFullToSummary ? ctx.vs_to_sh : ctx.vf_to_sh);

    Seq2SeqTrainConfig tcfg;
    tcfg.epochs = static_cast<int>(ctx.cfg.get_int("seq2seq.epochs"));
    tcfg.seed = lineage_seed(ctx.cfg, lin, iteration, 3);
    tcfg.adam = adam_cfg(ctx.cfg);
    tcfg.val_frac = ctx.cfg.get_bool("validation.use_for_early_stopping")
                        ? ctx.cfg.get_real("seq2seq.val_frac")
                        : 0.0;
    tcfg.patience = static_cast<int>(ctx.cfg.get_int("seq2seq.patience"));
    tcfg.verbose = true;
    tcfg.log_tag = lineage_name(lin) + "/f" + std::to_string(iteration);
    Seq2SeqTrainStats stats = train_supervised(model, pairs, tcfg);

    Manifest man(ctx.cfg, "train-seq2seq", tcfg.seed);
    man.add_input(dataset_path);
    save_seq2seq(ctx, model, lin, iteration);
    json st;
    st["train_loss"] = stats.train_loss;
    st["val_loss"] = stats.val_loss;
    st["best_epoch"] = stats.best_epoch;
    st["early_stopped"] = stats.early_stopped;
    man.set_stats(st);
    man.add_output(p.model_ckpt(lin, iteration));
    man.add_output(p.model_meta(lin, iteration));
    // model manifest sits beside the dataset manifest of the same directory
    {
        json j = json::object();
        j["command"] = "train-seq2seq";
        j["seed"] = tcfg.seed;
        json conf = json::object();
        for (const auto& [k, v] : ctx.cfg.entries()) conf[k] = v;
        j["config"] = conf;
        j["inputs"] = json::array({{{"path", dataset_path}, {"hash", hash_file(dataset_path)}}});
        j["outputs"] = json::array(
            {{{"path", p.model_ckpt(lin, iteration)}, {"hash", hash_file(p.model_ckpt(lin, iteration))}},
             {{"path", p.model_meta(lin, iteration)}, {"hash", hash_file(p.model_meta(lin, iteration))}}});
        j["stats"] = st;
        write_file_atomic(path_join(dir, "model.manifest.json"), j.dump(2) + "\n");
    }
}

template <class T>
void ensure_mixed_dataset(LoopContext<T>& ctx, int odd_iteration, bool force) {
    const RunPaths& p = ctx.paths;
    std::string dir = p.iter_dir(Lineage::kAll, odd_iteration);
    if (!force && stage_done(dir)) return;
    DataDirection ddir = dataset_direction_for_iteration(odd_iteration);
    std::vector<ArtificialDataset> parts;
    Manifest man(ctx.cfg, "mix-all", 0);
    for (Lineage lin : {Lineage::kPrThr, Lineage::kDbae, Lineage::kMu1}) {
        std::string dpath = p.dataset(lin, odd_iteration);
        require_file(dpath, "lineage dataset for mixing");
        man.add_input(dpath);
        parts.push_back(load_dataset(dpath, lin, odd_iteration, ddir));
    }
    std::vector<const ArtificialDataset*> ptrs{&parts[0], &parts[1], &parts[2]};
    ArtificialDataset mixed = mix_all(ptrs);
    ensure_dir(dir);
    save_dataset(mixed, p.dataset(Lineage::kAll, odd_iteration));
    json st;
    st["pairs"] = mixed.stats.pairs;
    st["direction"] = data_direction_name(ddir);
    man.set_stats(st);
    man.add_output(p.dataset(Lineage::kAll, odd_iteration));
    man.write(dir);
    log_line("all", "mixed dataset at iteration " + std::to_string(odd_iteration) + ": " +
                        std::to_string(mixed.stats.pairs) + " pairs");
}

template <class T>
void run_lineage_chain(LoopContext<T>& ctx, Lineage lin, int max_iteration, bool force) {
    ensure_dataset(ctx, lin, 0, force);
    for (int it = 1; it <= max_iteration; ++it) {
        ensure_model(ctx, lin, it, force, ctx.paths.dataset(lin, it - 1));
        ensure_dataset(ctx, lin, it, force);
    }
}

}  // namespace

// ---- stages -----------------------------------------------------------------

bool stage_done(const std::string& dir) {
    std::string mpath = path_join(dir, "manifest.json");
    if (!file_exists(mpath)) return false;
    json j = read_manifest_checked(mpath);
    if (!j.contains("outputs") || !j.contains("inputs")) return false;
    return entries_verify(j.at("outputs")) && entries_verify(j.at("inputs"));
}

StageResult stage_prepare(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    if (!force && stage_done(p.data())) return {true, timer.seconds()};
    Manifest man(cfg, "prepare", cfg.get_u64("split.seed"));
    ensure_dir(p.data());

    std::vector<StringSeq> pf, ps;
    if (cfg.get_bool("synth.enabled")) {
        SynthRule rule = make_synth_rule(static_cast<int>(cfg.get_int("synth.content")),
                                         static_cast<int>(cfg.get_int("synth.filler")),
                                         cfg.get_real("synth.synonym_frac"),
                                         cfg.get_u64("synth.seed"));
        rule.summary_len = static_cast<int>(cfg.get_int("synth.k"));
        rule.min_content = static_cast<int>(cfg.get_int("synth.min_content"));
        rule.max_content = static_cast<int>(cfg.get_int("synth.max_content"));
        rule.min_len = static_cast<int>(cfg.get_int("synth.min_len"));
        rule.max_len = static_cast<int>(cfg.get_int("synth.max_len"));
        SynthCorpus sc = synth_corpus(rule, cfg.get_int("synth.n"), cfg.get_u64("synth.seed"));
        write_paired_file(p.paired(), sc.paired_fulltext, sc.paired_summary);
        pf = std::move(sc.paired_fulltext);
        ps = std::move(sc.paired_summary);
    } else {
        std::string paired = cfg.get_str("paths.paired");
        if (paired.empty())
            throw ConfigError("paths.paired is required when synth.enabled = false");
        require_file(paired, "paired corpus");
        man.add_input(paired);
        PairedFile pfile = load_paired_file(paired);
        pf = std::move(pfile.fulltext);
        ps = std::move(pfile.summary);
        write_paired_file(p.paired(), pf, ps);
    }

    SplitRatios ratios{cfg.get_real("split.ratio_summary"), cfg.get_real("split.ratio_fulltext"),
                       cfg.get_real("split.ratio_val"), cfg.get_real("split.ratio_test")};
    SplitManifest split =
        split_unaligned(static_cast<int64_t>(pf.size()), ratios, cfg.get_u64("split.seed"));
    split.save(p.split_manifest());

    std::vector<StringSeq> full_lines, summ_lines;
    for (int64_t i : split.fulltext_only) full_lines.push_back(pf[static_cast<size_t>(i)]);
    for (int64_t i : split.summary_only) summ_lines.push_back(ps[static_cast<size_t>(i)]);
    write_corpus_file(p.fulltext_corpus(), full_lines);
    write_corpus_file(p.summary_corpus(), summ_lines);

    auto write_pairs = [&](const std::vector<int64_t>& idx, const std::string& path) {
        std::vector<StringSeq> f, s;
        for (int64_t i : idx) {
            f.push_back(pf[static_cast<size_t>(i)]);
            s.push_back(ps[static_cast<size_t>(i)]);
        }
        write_paired_file(path, f, s);
    };
    write_pairs(split.validation, p.val_pairs());
    write_pairs(split.test, p.test_pairs());

    RawCorpus rf{full_lines, Side::kFullText, "fulltext"};
    RawCorpus rs{summ_lines, Side::kSummary, "summary"};
    Vocabulary vf = build_vocab(rf, static_cast<int>(cfg.get_int("corpus.vocab_cap_full")));
    Vocabulary vs = build_vocab(rs, static_cast<int>(cfg.get_int("corpus.vocab_cap_summary")));
    RawCorpus shared = rf;
    shared.lines.insert(shared.lines.end(), rs.lines.begin(), rs.lines.end());
    Vocabulary vsh = build_vocab(shared, static_cast<int>(cfg.get_int("corpus.vocab_cap_shared")));
    vf.save(p.vocab_full());
    vs.save(p.vocab_summary());
    vsh.save(p.vocab_shared());

    json st;
    st["pairs_total"] = pf.size();
    st["fulltext_training"] = full_lines.size();
    st["summary_training"] = summ_lines.size();
    st["validation"] = split.validation.size();
    st["test"] = split.test.size();
    st["vocab_full"] = vf.size();
    st["vocab_summary"] = vs.size();
    st["vocab_shared"] = vsh.size();
    man.set_stats(st);
    for (const std::string& f :
         {p.paired(), p.split_manifest(), p.fulltext_corpus(), p.summary_corpus(), p.val_pairs(),
          p.test_pairs(), p.vocab_full(), p.vocab_summary(), p.vocab_shared()})
        man.add_output(f);
    man.write(p.data());
    log_line("prepare", "fulltext " + std::to_string(full_lines.size()) + " / summary " +
                            std::to_string(summ_lines.size()) + " / val " +
                            std::to_string(split.validation.size()) + " / test " +
                            std::to_string(split.test.size()));
    return {false, timer.seconds()};
}

StageResult stage_train_embeddings(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    if (!force && stage_done(p.emb())) return {true, timer.seconds()};
    for (const std::string& f : {p.fulltext_corpus(), p.summary_corpus(), p.vocab_full(),
                                 p.vocab_summary(), p.vocab_shared()})
        require_file(f, "prepared data file");
    Manifest man(cfg, "train-embeddings", cfg.get_u64("embeddings.seed"));
    for (const std::string& f : {p.fulltext_corpus(), p.summary_corpus(), p.vocab_full(),
                                 p.vocab_summary(), p.vocab_shared()})
        man.add_input(f);
    ensure_dir(p.emb());

    Vocabulary vf = Vocabulary::load(p.vocab_full());
    Vocabulary vs = Vocabulary::load(p.vocab_summary());
    Vocabulary vsh = Vocabulary::load(p.vocab_shared());
    Corpus cf = load_corpus(p.fulltext_corpus(), Side::kFullText, vf);
    Corpus cs = load_corpus(p.summary_corpus(), Side::kSummary, vs);

    SkipgramConfig scfg;
    scfg.window = static_cast<int>(cfg.get_int("embeddings.window"));
    scfg.negatives = static_cast<int>(cfg.get_int("embeddings.negatives"));
    scfg.epochs = static_cast<int>(cfg.get_int("embeddings.epochs"));
    scfg.lr = static_cast<float>(cfg.get_real("embeddings.lr"));
    scfg.sample = cfg.get_real("embeddings.sample");
    scfg.deterministic = !cfg.get_bool("embeddings.parallel");
    scfg.threads = static_cast<int>(cfg.get_int("embeddings.threads"));
    scfg.verbose = true;

    scfg.dim = static_cast<int>(cfg.get_int("embeddings.dim_side"));
    scfg.seed = mix_seed(cfg.get_u64("embeddings.seed"), 1);
    save_embeddings(train_skipgram(cf, vf, scfg), vf, p.emb_full());
    scfg.seed = mix_seed(cfg.get_u64("embeddings.seed"), 2);
    save_embeddings(train_skipgram(cs, vs, scfg), vs, p.emb_summary());

    Corpus shared_corpus = load_corpus(p.fulltext_corpus(), Side::kFullText, vsh);
    Corpus cs_shared = load_corpus(p.summary_corpus(), Side::kSummary, vsh);
    shared_corpus.sequences.insert(shared_corpus.sequences.end(), cs_shared.sequences.begin(),
                                   cs_shared.sequences.end());
    scfg.dim = static_cast<int>(cfg.get_int("embeddings.dim_shared"));
    scfg.seed = mix_seed(cfg.get_u64("embeddings.seed"), 3);
    save_embeddings(train_skipgram(shared_corpus, vsh, scfg), vsh, p.emb_shared());

    for (const std::string& f : {p.emb_full(), p.emb_summary(), p.emb_shared()})
        man.add_output(f);
    man.write(p.emb());
    return {false, timer.seconds()};
}

StageResult stage_align(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    if (!force && stage_done(p.align())) return {true, timer.seconds()};
    for (const std::string& f : {p.emb_full(), p.emb_summary(), p.vocab_full(), p.vocab_summary()})
        require_file(f, "embedding artifact");
    Manifest man(cfg, "align", cfg.get_u64("alignment.seed"));
    for (const std::string& f : {p.emb_full(), p.emb_summary()}) man.add_input(f);
    ensure_dir(p.align());

    Vocabulary vf = Vocabulary::load(p.vocab_full());
    Vocabulary vs = Vocabulary::load(p.vocab_summary());
    EmbeddingMatrix ef = load_embeddings(p.emb_full(), vf).matrix;
    EmbeddingMatrix es = load_embeddings(p.emb_summary(), vs).matrix;

    AlignConfig acfg;
    acfg.topk = static_cast<int>(cfg.get_int("alignment.topk"));
    acfg.refine_iters = static_cast<int>(cfg.get_int("alignment.refine_iters"));
    acfg.sinkhorn_iters = static_cast<int>(cfg.get_int("alignment.sinkhorn_iters"));
    acfg.sinkhorn_reg = cfg.get_real("alignment.sinkhorn_reg");
    acfg.anchor_policy = cfg.get_str("alignment.anchor_policy") == "identical"
                             ? AnchorPolicy::kIdenticalStrings
                             : AnchorPolicy::kNone;
    acfg.seed = cfg.get_u64("alignment.seed");
    acfg.verbose = true;
    AlignedSpace space = align_spaces(ef, vf, es, vs, acfg);
    save_aligned_space(space, p.q_matrix());
    json meta;
    meta["src"] = p.emb_full();
    meta["tgt"] = p.emb_summary();
    meta["dim"] = space.dim;
    meta["degenerate"] = space.degenerate;
    meta["refine_objective"] = space.refine_objective;
    write_file_atomic(p.align_meta(), meta.dump(2) + "\n");

    man.add_output(p.q_matrix());
    man.add_output(p.align_meta());
    man.write(p.align());
    return {false, timer.seconds()};
}

StageResult stage_init_prthr(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    std::string dir = path_join(p.init(), "prthr");
    if (!force && stage_done(dir)) return {true, timer.seconds()};
    require_file(p.q_matrix(), "alignment Q matrix");
    Manifest man(cfg, "init-prthr", 0);
    man.add_input(p.q_matrix());
    ensure_dir(dir);
    json meta;
    meta["kind"] = "prthr";
    meta["eta"] = cfg.get_real("prthr.eta");
    meta["max_len"] = cfg.get_int("prthr.max_len");
    meta["q_matrix"] = p.q_matrix();
    meta["src_embeddings"] = p.emb_full();
    meta["tgt_embeddings"] = p.emb_summary();
    write_file_atomic(p.prthr_meta(), meta.dump(2) + "\n");
    man.add_output(p.prthr_meta());
    man.write(dir);
    return {false, timer.seconds()};
}

StageResult stage_init_dbae(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    std::string dir = path_join(p.init(), "dbae");
    if (!force && stage_done(dir)) return {true, timer.seconds()};
    for (const std::string& f :
         {p.summary_corpus(), p.vocab_summary(), p.vocab_shared(), p.emb_shared()})
        require_file(f, "DBAE input");
    Manifest man(cfg, "init-dbae", cfg.get_u64("dbae.seed"));
    for (const std::string& f : {p.summary_corpus(), p.emb_shared()}) man.add_input(f);
    ensure_dir(dir);

    return with_precision(cfg, [&](auto tag) -> StageResult {
        using T = typename decltype(tag)::type;
        Vocabulary vs = Vocabulary::load(p.vocab_summary());
        Vocabulary vsh = Vocabulary::load(p.vocab_shared());
        EmbeddingMatrix emb = load_embeddings(p.emb_shared(), vsh).matrix;
        std::vector<int> vs_to_sh = vocab_id_map(vs, vsh);

        auto lines = load_token_lines(p.summary_corpus());
        std::vector<std::vector<int>> in_shared, tgt_summary;
        in_shared.reserve(lines.size());
        tgt_summary.reserve(lines.size());
        for (const auto& line : lines) {
            in_shared.push_back(encode_line(line, vsh));
            tgt_summary.push_back(encode_line(line, vs));
        }
        std::vector<int> pool;
        for (int vs_id = Vocabulary::kNumSpecials; vs_id < vs.size(); ++vs_id) {
            int sid = vs_to_sh[static_cast<size_t>(vs_id)];
            if (sid >= Vocabulary::kNumSpecials) pool.push_back(sid);
        }

        DbaeHParams dh;
        dh.enc_dim = static_cast<int>(cfg.get_int("dbae.enc_dim"));
        dh.hidden = static_cast<int>(cfg.get_int("dbae.hidden"));
        dh.noise_p = cfg.get_real("dbae.noise_p");
        dh.lambda_bias = cfg.get_real("dbae.lambda");
        dh.beam = static_cast<int>(cfg.get_int("dbae.beam"));
        dh.max_len = static_cast<int>(cfg.get_int("dbae.max_len"));
        dh.len_norm = cfg.get_real("seq2seq.len_norm");
        Dbae<T> model = Dbae<T>::build(emb, vs_to_sh, dh, cfg.get_u64("dbae.seed"));

        DbaeTrainConfig tcfg;
        tcfg.epochs = static_cast<int>(cfg.get_int("dbae.epochs"));
        tcfg.batch = static_cast<int>(cfg.get_int("dbae.batch"));
        tcfg.seed = cfg.get_u64("dbae.seed");
        tcfg.adam = adam_cfg(cfg);
        tcfg.verbose = true;
        DbaeTrainStats stats = dbae_train(model, in_shared, tgt_summary, pool, tcfg);

        std::vector<std::pair<std::string, const nn::Tensor<T>*>> ts;
        for (auto& [name, t] : model.state_tensors()) ts.emplace_back(name, t);
        nn::save_checkpoint<T>(p.dbae_ckpt(), ts);
        json meta;
        meta["kind"] = "dbae";
        meta["enc_dim"] = dh.enc_dim;
        meta["hidden"] = dh.hidden;
        meta["noise_p"] = dh.noise_p;
        meta["lambda"] = dh.lambda_bias;
        meta["beam"] = dh.beam;
        meta["max_len"] = dh.max_len;
        meta["precision"] = cfg.get_str("train.precision");
        meta["train_loss"] = stats.train_loss;
        meta["heldout_loss"] = stats.heldout_loss;
        write_file_atomic(p.dbae_meta(), meta.dump(2) + "\n");
        man.add_output(p.dbae_ckpt());
        man.add_output(p.dbae_meta());
        man.write(dir);
        return StageResult{false, timer.seconds()};
    });
}

StageResult stage_init_moments(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    std::string dir = path_join(p.init(), "moments");
    if (!force && stage_done(dir)) return {true, timer.seconds()};
    for (const std::string& f :
         {p.fulltext_corpus(), p.summary_corpus(), p.vocab_summary(), p.vocab_shared(),
          p.emb_shared()})
        require_file(f, "moments input");
    Manifest man(cfg, "init-moments", cfg.get_u64("moments.seed"));
    for (const std::string& f : {p.fulltext_corpus(), p.summary_corpus(), p.emb_shared()})
        man.add_input(f);
    ensure_dir(dir);

    return with_precision(cfg, [&](auto tag) -> StageResult {
        using T = typename decltype(tag)::type;
        Vocabulary vs = Vocabulary::load(p.vocab_summary());
        Vocabulary vsh = Vocabulary::load(p.vocab_shared());
        EmbeddingMatrix emb = load_embeddings(p.emb_shared(), vsh).matrix;
        Corpus cf = load_corpus(p.fulltext_corpus(), Side::kFullText, vsh);
        Corpus cs = load_corpus(p.summary_corpus(), Side::kSummary, vsh);
        MomentStats stats = compute_moments(cf, cs, vsh);
        stats.save(p.moments_file(), vsh);

        std::vector<int> vs_to_sh = vocab_id_map(vs, vsh);
        std::vector<int> sh_to_vs = vocab_id_map(vsh, vs);
        std::vector<std::vector<int>> fulltexts;
        fulltexts.reserve(cf.sequences.size());
        for (auto& s : cf.sequences) fulltexts.push_back(s.ids);

        Mu1HParams mh;
        mh.enc_dim = static_cast<int>(cfg.get_int("moments.enc_dim"));
        mh.eta = cfg.get_real("moments.eta");
        mh.max_len = static_cast<int>(cfg.get_int("moments.max_len"));
        Mu1Model<T> model = Mu1Model<T>::build(emb, vs.size(), mh, cfg.get_u64("moments.seed"));
        Mu1TrainConfig tcfg;
        tcfg.epochs = static_cast<int>(cfg.get_int("moments.epochs"));
        tcfg.batch = static_cast<int>(cfg.get_int("moments.batch"));
        tcfg.seed = cfg.get_u64("moments.seed");
        tcfg.adam = adam_cfg(cfg);
        tcfg.verbose = true;
        Mu1TrainStats tstats = moments_train(model, fulltexts, sh_to_vs, vs_to_sh, stats, tcfg);

        std::vector<std::pair<std::string, const nn::Tensor<T>*>> ts;
        for (auto& [name, t] : model.state_tensors()) ts.emplace_back(name, t);
        nn::save_checkpoint<T>(p.mu1_ckpt(), ts);
        json meta;
        meta["kind"] = "mu1";
        meta["enc_dim"] = mh.enc_dim;
        meta["eta"] = mh.eta;
        meta["max_len"] = mh.max_len;
        meta["precision"] = cfg.get_str("train.precision");
        meta["train_loss"] = tstats.epoch_loss;
        write_file_atomic(p.mu1_meta(), meta.dump(2) + "\n");
        man.add_output(p.moments_file());
        man.add_output(p.mu1_ckpt());
        man.add_output(p.mu1_meta());
        man.write(dir);
        return StageResult{false, timer.seconds()};
    });
}

StageResult stage_loop(const Config& cfg, const std::string& run_dir, bool force) {
    Timer timer;
    // compose upstream stages that have not run yet
    stage_prepare(cfg, run_dir, false);
    stage_train_embeddings(cfg, run_dir, false);
    stage_align(cfg, run_dir, false);
    stage_init_prthr(cfg, run_dir, false);
    stage_init_dbae(cfg, run_dir, false);
    stage_init_moments(cfg, run_dir, false);

    return with_precision(cfg, [&](auto tag) -> StageResult {
        using T = typename decltype(tag)::type;
        LoopContext<T> ctx = build_loop_context<T>(cfg, run_dir, true);
        const int max_it = static_cast<int>(cfg.get_int("loop.max_iteration"));
        const int jobs = static_cast<int>(cfg.get_int("loop.jobs"));

        std::vector<Lineage> lineages{Lineage::kPrThr, Lineage::kDbae, Lineage::kMu1};
        std::atomic<size_t> next{0};
        std::vector<std::exception_ptr> errors(lineages.size());
        auto worker = [&]() {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= lineages.size()) return;
                try {
                    run_lineage_chain(ctx, lineages[i], max_it, force);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        int nthreads = std::min<int>(jobs, static_cast<int>(lineages.size()));
        if (nthreads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        const std::string mix_mode = cfg.get_str("loop.mix");
        if (mix_mode == "per_lineage") {
            for (int k = 2; k <= max_it; k += 2) {
                ensure_mixed_dataset(ctx, k - 1, force);
                ensure_model(ctx, Lineage::kAll, k, force, ctx.paths.dataset(Lineage::kAll, k - 1));
            }
        } else {
            // the (All) chain becomes self-contained after the first mix
            ensure_mixed_dataset(ctx, 1, force);
            for (int it = 2; it <= max_it; ++it) {
                ensure_model(ctx, Lineage::kAll, it, force,
                             ctx.paths.dataset(Lineage::kAll, it - 1));
                if (it < max_it) ensure_dataset(ctx, Lineage::kAll, it, force);
            }
        }
        log_line("loop", "completed through iteration " + std::to_string(max_it));
        return StageResult{false, timer.seconds()};
    });
}

void cmd_generate(const Config& cfg, const std::string& run_dir, Lineage lineage, int iteration,
                  bool force) {
    with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        LoopContext<T> ctx = build_loop_context<T>(cfg, run_dir, true);
        ensure_dataset(ctx, lineage, iteration, force);
        return 0;
    });
}

void cmd_train_seq2seq(const Config& cfg, const std::string& run_dir, Lineage lineage,
                       int iteration, bool force) {
    if (iteration < 1) throw InvalidArgument("train-seq2seq needs iteration >= 1");
    with_precision(cfg, [&](auto tag) {
        using T = typename decltype(tag)::type;
        LoopContext<T> ctx = build_loop_context<T>(cfg, run_dir, false);
        ensure_model(ctx, lineage, iteration, force, ctx.paths.dataset(lineage, iteration - 1));
        return 0;
    });
}

// ---- evaluation -------------------------------------------------------------

std::vector<std::string> standard_systems(const Config& cfg) {
    std::vector<std::string> out{"lead8", "prthr-0", "dbae-0", "mu1-0"};
    int max_it = static_cast<int>(cfg.get_int("loop.max_iteration"));
    for (int k = 2; k <= max_it; k += 2) {
        for (const char* lin : {"prthr", "dbae", "mu1"})
            out.push_back(std::string(lin) + "-" + std::to_string(k));
        out.push_back("all-" + std::to_string(k));
    }
    return out;
}

std::string report_label(const std::string& system) {
    if (system == "lead8") return "Lead-8";
    auto dash = system.rfind('-');
    std::string lin = system.substr(0, dash);
    std::string it = system.substr(dash + 1);
    if (lin == "prthr") return "(Pr-Thr)-" + it;
    if (lin == "dbae") return "(DBAE)-" + it;
    if (lin == "mu1") return "(Mu-1)-" + it;
    if (lin == "all") return "(All)-" + it;
    return system;
}

namespace {

// strings -> strings summarizer for evaluation
using SystemFn = std::function<StringSeq(const StringSeq&, uint64_t)>;

template <class T>
SystemFn make_system(LoopContext<T>& ctx, const std::string& system) {
    if (system == "lead8") {
        return [](const StringSeq& in, uint64_t) {
            StringSeq out(in.begin(), in.begin() + std::min<size_t>(in.size(), 8));
            return out;
        };
    }
    auto dash = system.rfind('-');
    if (dash == std::string::npos)
        throw InvalidArgument("unknown system id: " + system +
                              " (expected lead8 or <lineage>-<iteration>)");
    Lineage lin = lineage_from_name(system.substr(0, dash));
    int it = std::stoi(system.substr(dash + 1));
    if (it == 0) {
        GeneratorFn gen;
        switch (lin) {
            case Lineage::kPrThr: gen = make_prthr_generator(ctx); break;
            case Lineage::kDbae: gen = make_dbae_generator(ctx); break;
            case Lineage::kMu1: gen = make_mu1_generator(ctx); break;
            default: throw InvalidArgument("(All) has no iteration-0 system");
        }
        return [gen](const StringSeq& in, uint64_t seed) { return gen(in, seed).tokens; };
    }
    if (it % 2 != 0)
        throw InvalidArgument("evaluation targets summarizers; iteration must be even");
    auto model = load_seq2seq<T>(ctx, lin, it);
    GeneratorFn gen = make_seq2seq_generator(ctx, model, eval_gen_cfg(ctx.cfg));
    return [gen](const StringSeq& in, uint64_t seed) { return gen(in, seed).tokens; };
}

template <class T>
RougeScore evaluate_system_impl(LoopContext<T>& ctx, const std::string& system, bool force) {
    const RunPaths& p = ctx.paths;
    require_file(p.test_pairs(), "test pairs");
    std::string out_path = path_join(p.eval(), system + ".tsv");
    std::string test_hash = hash_file(p.test_pairs());
    auto pairs = load_pair_lines(p.test_pairs());
    if (pairs.empty()) throw MissingArtifactError("empty test set: " + p.test_pairs());

    if (!force && file_exists(out_path)) {
        // reuse only when the row matches the current test set
        auto lines = read_lines(out_path);
        if (lines.size() >= 2) {
            auto cols = split_ws(lines[1]);
            if (cols.size() >= 12 && cols[11] == test_hash) {
                RougeScore s;
                s.r1 = {std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
                s.r2 = {std::stod(cols[5]), std::stod(cols[6]), std::stod(cols[7])};
                s.rl = {std::stod(cols[8]), std::stod(cols[9]), std::stod(cols[10])};
                return s;
            }
        }
    }

    SystemFn fn = make_system(ctx, system);
    std::vector<RougeScore> scores(pairs.size());
    int jobs = static_cast<int>(ctx.cfg.get_int("loop.jobs"));
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            StringSeq cand = fn(pairs[i].first, mix_seed(0xe7a1, static_cast<uint64_t>(i)));
            scores[i] = rouge_all_tokens(cand, pairs[i].second);
        }
    };
    if (jobs <= 1 || pairs.size() < 32) {
        work(0, pairs.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (pairs.size() + static_cast<size_t>(jobs) - 1) / static_cast<size_t>(jobs);
        for (int t = 0; t < jobs; ++t) {
            size_t b = static_cast<size_t>(t) * chunk;
            size_t e = std::min(pairs.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    RougeScore avg = average_scores(scores);

    ensure_dir(p.eval());
    std::ostringstream out;
    out << "system\tn\tr1_p\tr1_r\tr1_f\tr2_p\tr2_r\tr2_f\trl_p\trl_r\trl_f\ttest_hash\n";
    out << system << '\t' << pairs.size();
    for (double v : {avg.r1.p, avg.r1.r, avg.r1.f, avg.r2.p, avg.r2.r, avg.r2.f, avg.rl.p,
                     avg.rl.r, avg.rl.f})
        out << '\t' << format_double(v, 17);
    out << '\t' << test_hash << '\n';
    write_file_atomic(out_path, out.str());
    log_line("eval", system + ": R1 " + format_double(avg.r1.f * 100, 4) + " R2 " +
                         format_double(avg.r2.f * 100, 4) + " RL " +
                         format_double(avg.rl.f * 100, 4));
    return avg;
}

}  // namespace

RougeScore cmd_evaluate_system(const Config& cfg, const std::string& run_dir,
                               const std::string& system, bool force) {
    return with_precision(cfg, [&](auto tag) -> RougeScore {
        using T = typename decltype(tag)::type;
        bool needs_inits = system != "lead8";
        LoopContext<T> ctx = build_loop_context<T>(cfg, run_dir, needs_inits);
        return evaluate_system_impl(ctx, system, force);
    });
}

StageResult stage_evaluate(const Config& cfg, const std::string& run_dir, bool force) {
    RunPaths p(run_dir);
    Timer timer;
    return with_precision(cfg, [&](auto tag) -> StageResult {
        using T = typename decltype(tag)::type;
        LoopContext<T> ctx = build_loop_context<T>(cfg, run_dir, true);
        Manifest man(cfg, "evaluate", 0);
        man.add_input(p.test_pairs());
        for (const std::string& sys : standard_systems(cfg)) {
            evaluate_system_impl(ctx, sys, force);
            man.add_output(path_join(p.eval(), sys + ".tsv"));
        }
        man.write(p.eval());
        return StageResult{false, timer.seconds()};
    });
}

StageResult stage_report(const Config& cfg, const std::string& run_dir) {
    RunPaths p(run_dir);
    Timer timer;
    std::string dir = path_join(run_dir, "report");
    ensure_dir(dir);
    Manifest man(cfg, "report", 0);

    struct Row {
        std::string system;
        int64_t n = 0;
        RougeScore score;
    };
    std::vector<Row> rows;
    for (const std::string& sys : standard_systems(cfg)) {
        std::string path = path_join(p.eval(), sys + ".tsv");
        if (!file_exists(path)) continue;
        auto lines = read_lines(path);
        if (lines.size() < 2) continue;
        auto cols = split_ws(lines[1]);
        if (cols.size() < 12) throw IoError("malformed eval row in " + path);
        Row r;
        r.system = cols[0];
        r.n = std::stoll(cols[1]);
        r.score.r1 = {std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])};
        r.score.r2 = {std::stod(cols[5]), std::stod(cols[6]), std::stod(cols[7])};
        r.score.rl = {std::stod(cols[8]), std::stod(cols[9]), std::stod(cols[10])};
        rows.push_back(r);
        man.add_input(path);
    }
    if (rows.empty()) throw MissingArtifactError("no evaluation rows found under " + p.eval());

    std::ostringstream txt;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %8s %8s %8s\n", "system", "R-1", "R-2", "R-L");
    txt << buf;
    txt << std::string(41, '-') << "\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-14s %8.2f %8.2f %8.2f\n",
                      report_label(r.system).c_str(), r.score.r1.f * 100, r.score.r2.f * 100,
                      r.score.rl.f * 100);
        txt << buf;
    }
    write_file_atomic(path_join(dir, "report.txt"), txt.str());

    std::ostringstream tsv;
    tsv << "# f-scores are fractions in [0,1]; harmonic mean (beta=1); no stemming; "
           "token-identity matching\n";
    tsv << "system\tn\tr1_p\tr1_r\tr1_f\tr2_p\tr2_r\tr2_f\trl_p\trl_r\trl_f\n";
    for (const auto& r : rows) {
        tsv << r.system << '\t' << r.n;
        for (double v : {r.score.r1.p, r.score.r1.r, r.score.r1.f, r.score.r2.p, r.score.r2.r,
                         r.score.r2.f, r.score.rl.p, r.score.rl.r, r.score.rl.f})
            tsv << '\t' << format_double(v, 17);
        tsv << '\n';
    }
    write_file_atomic(path_join(dir, "report.tsv"), tsv.str());
    man.add_output(path_join(dir, "report.txt"));
    man.add_output(path_join(dir, "report.tsv"));
    man.write(dir);
    std::ostringstream show(txt.str());
    log_line("report", "\n" + txt.str());
    return {false, timer.seconds()};
}

}  // namespace btsumm
