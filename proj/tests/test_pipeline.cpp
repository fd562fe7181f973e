#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "btsumm/config.hpp"
#include "btsumm/pipeline.hpp"
#include "testutil.hpp"

using namespace btsumm;

namespace {

// tiny but complete pipeline configuration
Config tiny_config() {
    Config cfg = Config::defaults();
    cfg.set("synth.enabled", "true");
    cfg.set("synth.n", "420");
    cfg.set("synth.content", "30");
    cfg.set("synth.filler", "15");
    cfg.set("synth.synonym_frac", "0.2");
    cfg.set("split.ratio_summary", "0.45");
    cfg.set("split.ratio_fulltext", "0.45");
    cfg.set("split.ratio_val", "0.05");
    cfg.set("split.ratio_test", "0.05");
    cfg.set("embeddings.dim_side", "16");
    cfg.set("embeddings.dim_shared", "24");
    cfg.set("embeddings.epochs", "2");
    cfg.set("alignment.topk", "64");
    cfg.set("alignment.refine_iters", "2");
    cfg.set("dbae.enc_dim", "20");
    cfg.set("dbae.hidden", "20");
    cfg.set("dbae.epochs", "1");
    cfg.set("moments.enc_dim", "20");
    cfg.set("moments.epochs", "2");
    cfg.set("seq2seq.hidden", "16");
    cfg.set("seq2seq.epochs", "1");
    cfg.set("generate.max_len_full", "26");
    cfg.set("loop.max_iteration", "2");
    cfg.set("loop.jobs", "2");
    return cfg;
}

std::string run_quiet(const std::string& args) {
    std::string cmd = std::string(BTSUMM_BIN) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return std::to_string(WEXITSTATUS(rc));
}

}  // namespace

TEST_CASE("config: defaults validate; unknown keys and bad values rejected") {
    set_log_quiet(true);
    Config cfg = Config::defaults();
    CHECK_NOTHROW(cfg.validate());
    CHECK_THROWS_AS(cfg.set("nonsense.key", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.set("seq2seq.hiden", "1"), ConfigError);
    cfg.set("prthr.eta", "7.5");
    CHECK_THROWS_AS(cfg.get_real("prthr.eta"), ConfigError);  // out of range
    cfg.set("prthr.eta", "abc");
    CHECK_THROWS_AS(cfg.get_real("prthr.eta"), ConfigError);
    cfg.set("prthr.eta", "0.9");
    cfg.set("split.ratio_val", "0.9");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // ratios no longer sum to 1
}

TEST_CASE("config: file loading and env override precedence") {
    set_log_quiet(true);
    btest::TmpDir tmp("config");
    write_file_atomic(tmp.file("c.ini"),
                      "[prthr]\neta = 0.5\nmax_len = 7\n\n[loop]\njobs = 3\n");
    Config cfg = Config::defaults();
    cfg.load_file(tmp.file("c.ini"));
    CHECK(cfg.get_real("prthr.eta") == doctest::Approx(0.5));
    CHECK(cfg.get_int("loop.jobs") == 3);

    setenv("BTSUMM_PRTHR_ETA", "0.8", 1);
    cfg.apply_env();
    unsetenv("BTSUMM_PRTHR_ETA");
    CHECK(cfg.get_real("prthr.eta") == doctest::Approx(0.8));

    write_file_atomic(tmp.file("bad.ini"), "[prthr]\nunknown_key = 3\n");
    Config cfg2 = Config::defaults();
    CHECK_THROWS_AS(cfg2.load_file(tmp.file("bad.ini")), ConfigError);
}

TEST_CASE("config echo is stable and re-loadable") {
    set_log_quiet(true);
    btest::TmpDir tmp("echo");
    Config cfg = tiny_config();
    write_file_atomic(tmp.file("echo.ini"), cfg.echo());
    Config reload = Config::defaults();
    reload.load_file(tmp.file("echo.ini"));
    CHECK(reload.echo() == cfg.echo());
}

TEST_CASE("prepare: outputs, manifest skip, and no paired leakage") {
    set_log_quiet(true);
    btest::TmpDir tmp("prep");
    Config cfg = tiny_config();
    StageResult first = stage_prepare(cfg, tmp.path);
    CHECK(!first.skipped);
    RunPaths p(tmp.path);
    for (const std::string& f : {p.fulltext_corpus(), p.summary_corpus(), p.vocab_full(),
                                 p.vocab_summary(), p.vocab_shared(), p.test_pairs()})
        CHECK(file_exists(f));

    // second invocation is a no-op
    StageResult second = stage_prepare(cfg, tmp.path);
    CHECK(second.skipped);

    // training sides never share a pair index
    SplitManifest m = SplitManifest::load(p.split_manifest());
    std::set<int64_t> s(m.summary_only.begin(), m.summary_only.end());
    for (int64_t i : m.fulltext_only) CHECK(s.count(i) == 0);
}

TEST_CASE("manifest carries config echo, seed, hashes; corrupt manifest refuses") {
    set_log_quiet(true);
    btest::TmpDir tmp("manifest");
    Config cfg = tiny_config();
    stage_prepare(cfg, tmp.path);
    RunPaths p(tmp.path);
    auto j = nlohmann::json::parse(read_file(path_join(p.data(), "manifest.json")));
    CHECK(j.contains("seed"));
    CHECK(j.contains("wall_time_s"));
    CHECK(j.at("config").size() > 40);  // full echo embedded
    CHECK(!j.at("outputs").empty());
    for (const auto& e : j.at("outputs"))
        CHECK(hash_file(e.at("path").get<std::string>()) == e.at("hash").get<std::string>());

    write_file_atomic(path_join(p.data(), "manifest.json"), "{not json");
    CHECK_THROWS_AS(stage_done(p.data()), IoError);
}

TEST_CASE("full tiny pipeline: determinism, resume, and evaluation artifacts") {
    set_log_quiet(true);
    btest::TmpDir run_a("runA"), run_b("runB");
    Config cfg = tiny_config();

    stage_loop(cfg, run_a.path);
    stage_loop(cfg, run_b.path);

    RunPaths pa(run_a.path), pb(run_b.path);
    // bit-identical dataset files across runs with the same seeds
    for (Lineage lin : {Lineage::kPrThr, Lineage::kDbae, Lineage::kMu1}) {
        for (int it = 0; it <= 2; ++it) {
            REQUIRE(file_exists(pa.dataset(lin, it)));
            CHECK(hash_file(pa.dataset(lin, it)) == hash_file(pb.dataset(lin, it)));
        }
        CHECK(hash_file(pa.model_ckpt(lin, 2)) == hash_file(pb.model_ckpt(lin, 2)));
    }
    CHECK(hash_file(pa.dataset(Lineage::kAll, 1)) == hash_file(pb.dataset(Lineage::kAll, 1)));
    CHECK(hash_file(pa.model_ckpt(Lineage::kAll, 2)) == hash_file(pb.model_ckpt(Lineage::kAll, 2)));

    // dataset invariants: even iterations pair artificial summaries with real
    // full texts drawn verbatim from the training corpus
    auto real = read_lines(pa.fulltext_corpus());
    std::set<std::string> real_set(real.begin(), real.end());
    auto d0 = read_lines(pa.dataset(Lineage::kMu1, 0));
    for (size_t i = 0; i < d0.size(); i += 17) {
        auto tab = d0[i].find('\t');
        REQUIRE(tab != std::string::npos);
        CHECK(real_set.count(d0[i].substr(tab + 1)) == 1);
    }

    // resume: delete one late artifact, rerun, hashes match the sibling run
    std::filesystem::remove(pa.dataset(Lineage::kMu1, 2));
    std::filesystem::remove(path_join(pa.iter_dir(Lineage::kMu1, 2), "manifest.json"));
    stage_loop(cfg, run_a.path);
    CHECK(hash_file(pa.dataset(Lineage::kMu1, 2)) == hash_file(pb.dataset(Lineage::kMu1, 2)));

    // evaluation + report
    stage_evaluate(cfg, run_a.path);
    stage_evaluate(cfg, run_b.path);
    stage_report(cfg, run_a.path);
    CHECK(file_exists(path_join(path_join(run_a.path, "report"), "report.txt")));
    CHECK(file_exists(path_join(path_join(run_a.path, "report"), "report.tsv")));
    // equal evaluation reports across the two runs
    CHECK(hash_file(path_join(pa.eval(), "all-2.tsv")) ==
          hash_file(path_join(pb.eval(), "all-2.tsv")));
    CHECK(hash_file(path_join(pa.eval(), "lead8.tsv")) ==
          hash_file(path_join(pb.eval(), "lead8.tsv")));
}

TEST_CASE("evaluate requires artifacts; missing run is a MissingArtifactError") {
    set_log_quiet(true);
    btest::TmpDir tmp("noartifacts");
    Config cfg = tiny_config();
    CHECK_THROWS_AS(cmd_evaluate_system(cfg, tmp.path, "lead8"), MissingArtifactError);
}

TEST_CASE("cli exit codes: ok, config error, missing artifact") {
    set_log_quiet(true);
    btest::TmpDir tmp("cli");
    CHECK(run_quiet("prepare -r " + tmp.path +
                    " -s synth.enabled=true -s synth.n=50"
                    " -s split.ratio_summary=0.45 -s split.ratio_fulltext=0.45"
                    " -s split.ratio_val=0.05 -s split.ratio_test=0.05") == "0");
    CHECK(run_quiet("prepare -r " + tmp.path + " -s no.such=1") == "2");
    btest::TmpDir fresh("clifresh");
    CHECK(run_quiet("prepare -r " + fresh.path + " -s synth.enabled=false") == "2");  // no paired path
    btest::TmpDir empty("cliempty");
    CHECK(run_quiet("train-embeddings -r " + empty.path) == "3");
    CHECK(run_quiet("evaluate -r " + empty.path + " --system lead8") == "3");
}

TEST_CASE("standard systems and report labels") {
    Config cfg = tiny_config();
    auto systems = standard_systems(cfg);
    CHECK(systems.front() == "lead8");
    CHECK(std::find(systems.begin(), systems.end(), "all-2") != systems.end());
    CHECK(report_label("prthr-0") == "(Pr-Thr)-0");
    CHECK(report_label("mu1-2") == "(Mu-1)-2");
    CHECK(report_label("lead8") == "Lead-8");
}
