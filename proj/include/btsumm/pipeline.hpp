#pragma once

#include <optional>
#include <string>
#include <vector>

#include "btsumm/backtranslation.hpp"
#include "btsumm/config.hpp"
#include "btsumm/rouge.hpp"

namespace btsumm {

// Run-directory layout. Lineage dirs sit at the top of the run per the
// registry contract; fixed stage dirs use reserved names.
struct RunPaths {
    std::string run_dir;

    explicit RunPaths(std::string dir) : run_dir(std::move(dir)) {}
    std::string data() const { return path_join(run_dir, "data"); }
    std::string emb() const { return path_join(run_dir, "emb"); }
    std::string align() const { return path_join(run_dir, "align"); }
    std::string init() const { return path_join(run_dir, "init"); }
    std::string eval() const { return path_join(run_dir, "eval"); }
    std::string iter_dir(Lineage l, int iteration) const {
        return path_join(path_join(run_dir, lineage_name(l)), std::to_string(iteration));
    }

    std::string paired() const { return path_join(data(), "paired.tsv"); }
    std::string split_manifest() const { return path_join(data(), "split.manifest"); }
    std::string fulltext_corpus() const { return path_join(data(), "fulltext.txt"); }
    std::string summary_corpus() const { return path_join(data(), "summary.txt"); }
    std::string val_pairs() const { return path_join(data(), "val.tsv"); }
    std::string test_pairs() const { return path_join(data(), "test.tsv"); }
    std::string vocab_full() const { return path_join(data(), "vocab_full.txt"); }
    std::string vocab_summary() const { return path_join(data(), "vocab_summary.txt"); }
    std::string vocab_shared() const { return path_join(data(), "vocab_shared.txt"); }
    std::string emb_full() const { return path_join(emb(), "fulltext.vec"); }
    std::string emb_summary() const { return path_join(emb(), "summary.vec"); }
    std::string emb_shared() const { return path_join(emb(), "shared.vec"); }
    std::string q_matrix() const { return path_join(align(), "q.vec"); }
    std::string align_meta() const { return path_join(align(), "align.json"); }
    std::string moments_file() const { return path_join(init(), "moments.tsv"); }
    std::string prthr_meta() const { return path_join(init(), "prthr.json"); }
    std::string dbae_ckpt() const { return path_join(init(), "dbae.ckpt"); }
    std::string dbae_meta() const { return path_join(init(), "dbae.json"); }
    std::string mu1_ckpt() const { return path_join(init(), "mu1.ckpt"); }
    std::string mu1_meta() const { return path_join(init(), "mu1.json"); }
    std::string dataset(Lineage l, int it) const { return path_join(iter_dir(l, it), "dataset.tsv"); }
    std::string model_ckpt(Lineage l, int it) const { return path_join(iter_dir(l, it), "model.ckpt"); }
    std::string model_meta(Lineage l, int it) const { return path_join(iter_dir(l, it), "model.json"); }
};

struct StageResult {
    bool skipped = false;
    double seconds = 0.0;
};

// Stage entry points (the CLI subcommands call straight into these; `loop`
// composes them). Each writes a manifest with config echo, seed, and
// input/output hashes, and skips itself when its manifest already verifies.
StageResult stage_prepare(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_train_embeddings(const Config& cfg, const std::string& run_dir,
                                   bool force = false);
StageResult stage_align(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_init_prthr(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_init_dbae(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_init_moments(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_loop(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_evaluate(const Config& cfg, const std::string& run_dir, bool force = false);
StageResult stage_report(const Config& cfg, const std::string& run_dir);

// Standalone per-artifact commands.
void cmd_generate(const Config& cfg, const std::string& run_dir, Lineage lineage, int iteration,
                  bool force = false);
void cmd_train_seq2seq(const Config& cfg, const std::string& run_dir, Lineage lineage,
                       int iteration, bool force = false);
RougeScore cmd_evaluate_system(const Config& cfg, const std::string& run_dir,
                               const std::string& system, bool force = false);

// Canonical system ids evaluated by stage_evaluate, e.g. "lead8", "prthr-0",
// "all-2"; ordered for the report.
std::vector<std::string> standard_systems(const Config& cfg);
std::string report_label(const std::string& system);

// True when the stage directory holds a verifying manifest (outputs and
// inputs exist with matching hashes). Throws IoError on a corrupt manifest.
bool stage_done(const std::string& dir);

}  // namespace btsumm
