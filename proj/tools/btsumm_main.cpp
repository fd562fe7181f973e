#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btsumm/config.hpp"
#include "btsumm/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string run_dir;
    std::vector<std::string> sets;
    bool force = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "flat key = value config file");
    cmd->add_option("-r,--run", opts.run_dir, "run directory (default: paths.workdir)");
    cmd->add_option("-s,--set", opts.sets, "override a config key, e.g. --set loop.jobs=2");
    cmd->add_flag("-f,--force", opts.force, "recompute even if outputs verify");
    cmd->add_flag("-q,--quiet", opts.quiet, "suppress progress logging");
}

btsumm::Config resolve_config(const CommonOpts& opts) {
    btsumm::Config cfg = btsumm::Config::defaults();
    if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
    cfg.apply_env();
    for (const auto& kv : opts.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw btsumm::ConfigError("--set expects key=value, got " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::string resolve_run_dir(const btsumm::Config& cfg, const CommonOpts& opts) {
    return opts.run_dir.empty() ? cfg.get_str("paths.workdir") : opts.run_dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"btsumm: unsupervised sentence summarization via mixed-model back-translation"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string lineage_arg = "prthr";
    int iteration_arg = 0;
    std::string system_arg;

    auto* c_prepare = app.add_subcommand("prepare", "split a paired corpus (or synthesize one) and build vocabularies");
    auto* c_emb = app.add_subcommand("train-embeddings", "train side and shared skipgram embeddings");
    auto* c_align = app.add_subcommand("align", "align the two embedding spaces with an orthogonal map");
    auto* c_prthr = app.add_subcommand("init-prthr", "assemble the thresholded-alignment initializer");
    auto* c_dbae = app.add_subcommand("init-dbae", "train the denoising bag-of-words auto-encoder");
    auto* c_mom = app.add_subcommand("init-moments", "compute corpus moments and train the moments model");
    auto* c_gen = app.add_subcommand("generate", "generate the artificial dataset for one lineage iteration");
    auto* c_train = app.add_subcommand("train-seq2seq", "train the seq2seq model for one lineage iteration");
    auto* c_loop = app.add_subcommand("loop", "run the full back-translation loop (composes all stages)");
    auto* c_eval = app.add_subcommand("evaluate", "score a system (or all standard systems) on the test pairs");
    auto* c_report = app.add_subcommand("report", "write the comparison table from recorded evaluations");

    for (CLI::App* cmd : {c_prepare, c_emb, c_align, c_prthr, c_dbae, c_mom, c_gen, c_train,
                          c_loop, c_eval, c_report})
        add_common(cmd, opts);
    for (CLI::App* cmd : {c_gen, c_train}) {
        cmd->add_option("--lineage", lineage_arg, "prthr | dbae | mu1 | all")->required();
        cmd->add_option("--iteration", iteration_arg, "iteration index")->required();
    }
    c_eval->add_option("--system", system_arg,
                       "system id (lead8 or <lineage>-<iteration>); omit for all standard systems");

    CLI11_PARSE(app, argc, argv);

    try {
        btsumm::Config cfg = resolve_config(opts);
        if (opts.quiet) btsumm::set_log_quiet(true);
        std::string run_dir = resolve_run_dir(cfg, opts);
        btsumm::ensure_dir(run_dir);
        btsumm::write_file_atomic(btsumm::path_join(run_dir, "config.echo.ini"), cfg.echo());

        auto report_stage = [](const char* name, const btsumm::StageResult& r) {
            btsumm::log_line(name, r.skipped ? "up to date (skipped)"
                                             : "done in " + btsumm::format_double(r.seconds, 4) + "s");
        };

        if (c_prepare->parsed()) report_stage("prepare", btsumm::stage_prepare(cfg, run_dir, opts.force));
        if (c_emb->parsed())
            report_stage("train-embeddings", btsumm::stage_train_embeddings(cfg, run_dir, opts.force));
        if (c_align->parsed()) report_stage("align", btsumm::stage_align(cfg, run_dir, opts.force));
        if (c_prthr->parsed())
            report_stage("init-prthr", btsumm::stage_init_prthr(cfg, run_dir, opts.force));
        if (c_dbae->parsed())
            report_stage("init-dbae", btsumm::stage_init_dbae(cfg, run_dir, opts.force));
        if (c_mom->parsed())
            report_stage("init-moments", btsumm::stage_init_moments(cfg, run_dir, opts.force));
        if (c_gen->parsed())
            btsumm::cmd_generate(cfg, run_dir, btsumm::lineage_from_name(lineage_arg),
                                 iteration_arg, opts.force);
        if (c_train->parsed())
            btsumm::cmd_train_seq2seq(cfg, run_dir, btsumm::lineage_from_name(lineage_arg),
                                      iteration_arg, opts.force);
        if (c_loop->parsed()) report_stage("loop", btsumm::stage_loop(cfg, run_dir, opts.force));
        if (c_eval->parsed()) {
            if (system_arg.empty())
                report_stage("evaluate", btsumm::stage_evaluate(cfg, run_dir, opts.force));
            else
                btsumm::cmd_evaluate_system(cfg, run_dir, system_arg, opts.force);
        }
        if (c_report->parsed()) btsumm::stage_report(cfg, run_dir);
        return btsumm::kExitOk;
    } catch (const btsumm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return btsumm::kExitConfig;
    } catch (const btsumm::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return btsumm::kExitMissingArtifact;
    } catch (const btsumm::DivergenceError& e) {
        std::cerr << "training divergence: " << e.what() << "\n";
        return btsumm::kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return btsumm::kExitFailure;
    }
}
