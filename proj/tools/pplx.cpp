#include "pplx/checkpoint.hpp"
#include "pplx/experiments.hpp"
#include "pplx/ingest.hpp"
#include "pplx/isoppl.hpp"
#include "pplx/manifest.hpp"
#include "pplx/svg_plot.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace pplx;

namespace {

std::string join_argv(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

ModelConfig load_config(const std::string& path) {
    if (path.empty()) return ModelConfig{};
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    ModelConfig cfg = nlohmann::json::parse(f).get<ModelConfig>();
    cfg.validate();
    return cfg;
}

// one run directory = result files + manifest.json describing them
struct RunScope {
    std::string dir;
    RunManifest m;

    RunScope(std::string out_dir, std::string command, std::vector<uint64_t> seeds, nlohmann::json config)
        : dir(std::move(out_dir)) {
        fs::create_directories(dir);
        m.command = std::move(command);
        m.seeds = std::move(seeds);
        m.config = std::move(config);
        m.started_at = now_utc_iso8601();
    }
    std::string path(const std::string& rel) const { return dir + "/" + rel; }
    void output(const std::string& rel) { m.add_output(dir, rel); }
    void finish() {
        m.finished_at = now_utc_iso8601();
        write_manifest(path("manifest.json"), m);
    }
};

CsvTable loss_table(const std::vector<Scalar>& trace) {
    CsvTable t;
    t.header = {"step", "loss"};
    for (size_t i = 0; i < trace.size(); ++i) {
        t.add_row({csv_num(static_cast<int64_t>(i + 1)), csv_num(trace[i])});
    }
    return t;
}

std::vector<ParityCheckpoint> load_checkpoint_dir(const std::string& ckpt_dir, ModelConfig& cfg_out) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(ckpt_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("ckpt-") && name.ends_with(".pplx")) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no ckpt-*.pplx files in " + ckpt_dir);

    std::vector<ParityCheckpoint> cks;
    for (size_t i = 0; i < files.size(); ++i) {
        Checkpoint ck = load_checkpoint(files[i]);
        if (i == 0) {
            cfg_out = ck.config;
        } else if (!(ck.config == cfg_out)) {
            throw std::runtime_error("checkpoint configs disagree: " + files[i]);
        }
        cks.push_back({static_cast<long>(ck.step), std::move(ck.params)});
    }
    std::sort(cks.begin(), cks.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
    return cks;
}

CsvTable eval_table(const std::vector<CheckpointEval>& evals, std::optional<Split> only = std::nullopt) {
    CsvTable t;
    t.header = {"step", "split", "L", "f1", "entropy"};
    for (const CheckpointEval& ev : evals) {
        if (only && ev.split != *only) continue;
        t.add_row({csv_num(static_cast<int64_t>(ev.step)), split_name(ev.split), csv_num(ev.L),
                   csv_num(ev.f1), csv_num(ev.entropy)});
    }
    return t;
}

nlohmann::json summary_json(const SplitSummary& s) {
    return {{"r", s.r},
            {"r_degenerate", s.r_degenerate},
            {"best_f1_step", s.best_f1_step},
            {"best_l_step", s.best_l_step}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perplexity-vs-competence study: tiny transformer training, copy/parity\n"
                 "evaluations, and iso-perplexity analytics."};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(0, 1);

    // train-copy
    auto* tc = app.add_subcommand("train-copy", "Train the copy model to the confidence target");
    std::string tc_config, tc_out;
    uint64_t tc_seed = 1;
    CopyTrainOptions tc_opts;
    tc->add_option("--config", tc_config, "model config JSON file");
    tc->add_option("--seed", tc_seed, "training seed");
    tc->add_option("--out", tc_out, "run directory")->required();
    tc->add_option("--max-steps", tc_opts.max_steps, "step cap");
    tc->add_option("--confidence", tc_opts.confidence_target, "held-out confidence target");
    tc->add_option("--batch", tc_opts.batch, "sequences per step");

    // copy-sweep
    auto* cs = app.add_subcommand("copy-sweep", "Decode alpha/beta over a range of N");
    std::string cs_ckpt, cs_out, cs_pattern = "0";
    std::vector<size_t> cs_nlist = {16, 32, 64, 128, 256, 512};
    long cs_flip = -1;
    cs->add_option("--ckpt", cs_ckpt, "trained copy checkpoint")->required();
    cs->add_option("--out", cs_out, "run directory")->required();
    cs->add_option("--n-list", cs_nlist, "lengths to sweep")->delimiter(',');
    cs->add_option("--pattern", cs_pattern, "alpha tiling pattern");
    cs->add_option("--flip-pos", cs_flip, "beta flip position (default: last)");

    // grad-sweep
    auto* gs = app.add_subcommand("grad-sweep", "Gradient norms of the beta copy loss over N");
    std::string gs_ckpt, gs_out, gs_pattern = "0";
    std::vector<size_t> gs_nlist = {16, 32, 64, 128, 256, 512};
    long gs_flip = -1;
    gs->add_option("--ckpt", gs_ckpt, "trained copy checkpoint")->required();
    gs->add_option("--out", gs_out, "run directory")->required();
    gs->add_option("--n-list", gs_nlist, "lengths to sweep")->delimiter(',');
    gs->add_option("--pattern", gs_pattern, "alpha tiling pattern");
    gs->add_option("--flip-pos", gs_flip, "beta flip position (default: last)");

    // train-parity
    auto* tp = app.add_subcommand("train-parity", "Train running parity, snapshotting checkpoints");
    std::string tp_config, tp_out;
    uint64_t tp_seed = 1;
    ParityTrainOptions tp_opts;
    tp->add_option("--config", tp_config, "model config JSON file");
    tp->add_option("--seed", tp_seed, "training seed");
    tp->add_option("--out", tp_out, "run directory")->required();
    tp->add_option("--steps", tp_opts.steps, "gradient steps");
    tp->add_option("--snapshot-every", tp_opts.snapshot_every, "steps between checkpoints");
    tp->add_option("--batch", tp_opts.batch, "sequences per step");

    // eval-checkpoints
    auto* ec = app.add_subcommand("eval-checkpoints", "Score parity checkpoints on IID and OOD splits");
    std::string ec_ckpt_dir, ec_out, ec_scoring = "all_positions";
    uint64_t ec_seed = 9001;
    size_t ec_iid_count = 64, ec_ood_count = 32, ec_ood_len = 128;
    ec->add_option("--ckpt-dir", ec_ckpt_dir, "directory of ckpt-*.pplx files")->required();
    ec->add_option("--out", ec_out, "run directory")->required();
    ec->add_option("--seed", ec_seed, "evaluation dataset seed");
    ec->add_option("--iid-count", ec_iid_count, "held-out strings, lengths 1..16");
    ec->add_option("--ood-count", ec_ood_count, "out-of-distribution strings");
    ec->add_option("--ood-len", ec_ood_len, "out-of-distribution length");
    ec->add_option("--scoring", ec_scoring, "all_positions|final_only")
        ->check(CLI::IsMember({"all_positions", "final_only"}));

    // isoppl-curve
    auto* ic = app.add_subcommand("isoppl-curve", "Iso-perplexity curve CSV for one (a, gamma)");
    std::string ic_out;
    Scalar ic_a = 0.5, ic_gamma = 0.4;
    size_t ic_points = 512;
    ic->add_option("--a", ic_a, "base accuracy")->required();
    ic->add_option("--gamma", ic_gamma, "base confidence gap")->required();
    ic->add_option("--points", ic_points, "grid size");
    ic->add_option("--out", ic_out, "run directory")->required();

    // isoppl-fit
    auto* ifit = app.add_subcommand("isoppl-fit", "Solve pplx_model(a, gamma) = L for gamma");
    Scalar if_l = 0, if_a = 0;
    ifit->add_option("--L", if_l, "observed log-perplexity")->required();
    ifit->add_option("--a", if_a, "observed accuracy")->required();

    // ingest-logprobs
    auto* il = app.add_subcommand("ingest-logprobs", "Summarize exported per-step log-probs");
    std::string il_in, il_out;
    il->add_option("--in", il_in, "line-delimited logprob file")->required();
    il->add_option("--out", il_out, "run directory")->required();

    // plot
    auto* pl = app.add_subcommand("plot", "Render a CSV as an SVG chart");
    std::string pl_table, pl_out, pl_name = "plot.svg";
    PlotOptions pl_opts;
    long pl_star = -1;
    pl->add_option("--table", pl_table, "input CSV")->required();
    pl->add_option("--kind", pl_opts.kind, "line|scatter")->check(CLI::IsMember({"line", "scatter"}));
    pl->add_option("--x", pl_opts.x_col, "x column")->required();
    pl->add_option("--y", pl_opts.y_col, "y column")->required();
    pl->add_option("--color", pl_opts.color_col, "color-by column");
    pl->add_option("--star-row", pl_star, "data row to mark with a star");
    pl->add_option("--title", pl_opts.title, "chart title");
    pl->add_option("--out", pl_out, "run directory")->required();
    pl->add_option("--name", pl_name, "output SVG filename");

    if (argc <= 1) {
        std::cout << app.help();
        return 1;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }
    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 1;
    }

    const std::string command = join_argv(argc, argv);
    try {
        if (*tc) {
            const ModelConfig cfg = load_config(tc_config);
            RunScope run(tc_out, command, {tc_seed}, nlohmann::json(cfg));
            CopyTrainResult res = run_copy_training(cfg, tc_seed, tc_opts);
            save_checkpoint(res.params, res.config, static_cast<uint64_t>(res.steps), run.path("copy-model.pplx"));
            write_csv(run.path("loss.csv"), loss_table(res.loss_trace));
            run.m.metadata = {{"converged", res.converged},
                              {"steps", res.steps},
                              {"heldout_confidence", res.heldout_confidence},
                              {"heldout_exact", res.heldout_exact},
                              {"confidence_target", tc_opts.confidence_target},
                              {"batch", tc_opts.batch},
                              {"learning_rate", tc_opts.optimizer.learning_rate}};
            run.output("copy-model.pplx");
            run.output("loss.csv");
            run.finish();
            std::printf("%s after %ld steps, held-out confidence %.6f\n",
                        res.converged ? "converged" : "step cap reached", res.steps, res.heldout_confidence);
        } else if (*cs) {
            const Checkpoint ck = load_checkpoint(cs_ckpt);
            RunScope run(cs_out, command, {}, nlohmann::json(ck.config));
            const std::optional<size_t> flip =
                cs_flip < 0 ? std::nullopt : std::optional<size_t>(static_cast<size_t>(cs_flip));
            const auto rows = run_copy_sweep(ck.params, ck.config, cs_nlist, cs_pattern, flip);
            CsvTable t;
            t.header = {"N",          "linf_gap",   "min_prob_alpha", "flip_prob_beta",
                        "pplx_alpha", "pplx_beta",  "alpha_correct",  "beta_correct"};
            for (const auto& r : rows) {
                t.add_row({csv_num(static_cast<int64_t>(r.n)), csv_num(r.linf_gap), csv_num(r.min_prob_alpha),
                           csv_num(r.flip_prob_beta), csv_num(r.pplx_alpha), csv_num(r.pplx_beta),
                           csv_bool(r.alpha_correct), csv_bool(r.beta_correct)});
            }
            write_csv(run.path("sweep.csv"), t);
            run.output("sweep.csv");
            run.finish();
        } else if (*gs) {
            const Checkpoint ck = load_checkpoint(gs_ckpt);
            RunScope run(gs_out, command, {}, nlohmann::json(ck.config));
            const std::optional<size_t> flip =
                gs_flip < 0 ? std::nullopt : std::optional<size_t>(static_cast<size_t>(gs_flip));
            const auto rows = run_grad_norm_sweep(ck.params, ck.config, gs_nlist, gs_pattern, flip);
            CsvTable t;
            t.header = {"N", "grad_norm_beta", "loss_beta"};
            for (const auto& r : rows) {
                t.add_row({csv_num(static_cast<int64_t>(r.n)), csv_num(r.grad_norm_beta), csv_num(r.loss_beta)});
            }
            write_csv(run.path("grad_norms.csv"), t);
            run.output("grad_norms.csv");
            run.finish();
        } else if (*tp) {
            const ModelConfig cfg = load_config(tp_config);
            RunScope run(tp_out, command, {tp_seed}, nlohmann::json(cfg));
            ParityTrainResult res = run_parity_training(cfg, tp_seed, tp_opts);
            for (const ParityCheckpoint& ck : res.checkpoints) {
                char name[32];
                std::snprintf(name, sizeof(name), "ckpt-%06ld.pplx", ck.step);
                save_checkpoint(ck.params, cfg, static_cast<uint64_t>(ck.step), run.path(name));
                run.output(name);
            }
            write_csv(run.path("loss.csv"), loss_table(res.loss_trace));
            run.output("loss.csv");
            run.m.metadata = {{"steps", tp_opts.steps},
                              {"snapshot_every", tp_opts.snapshot_every},
                              {"batch", tp_opts.batch},
                              {"checkpoints", res.checkpoints.size()},
                              {"learning_rate", tp_opts.optimizer.learning_rate}};
            run.finish();
            std::printf("wrote %zu checkpoints\n", res.checkpoints.size());
        } else if (*ec) {
            ModelConfig cfg;
            const std::vector<ParityCheckpoint> cks = load_checkpoint_dir(ec_ckpt_dir, cfg);
            RunScope run(ec_out, command, {ec_seed}, nlohmann::json(cfg));
            Rng iid_rng = Rng::fork(ec_seed, 0);
            Rng ood_rng = Rng::fork(ec_seed, 1);
            const auto iid_set = sample_parity_dataset(1, 16, ec_iid_count, iid_rng);
            const auto ood_set = sample_parity_dataset(ec_ood_len, ec_ood_len, ec_ood_count, ood_rng);
            const ParityScoring scoring =
                ec_scoring == "final_only" ? ParityScoring::final_only : ParityScoring::all_positions;
            const CheckpointEvalResult res = eval_checkpoints(cfg, cks, iid_set, ood_set, scoring);
            write_csv(run.path("evals.csv"), eval_table(res.evals));
            write_csv(run.path("iid.csv"), eval_table(res.evals, Split::iid));
            write_csv(run.path("ood.csv"), eval_table(res.evals, Split::ood));
            run.output("evals.csv");
            run.output("iid.csv");
            run.output("ood.csv");
            run.m.metadata = {{"iid", summary_json(res.iid)},
                              {"ood", summary_json(res.ood)},
                              {"scoring", ec_scoring},
                              {"iid_count", ec_iid_count},
                              {"ood_count", ec_ood_count},
                              {"ood_len", ec_ood_len}};
            run.finish();
            std::printf("r_iid=%.4f r_ood=%.4f best_ood_f1_step=%ld best_ood_l_step=%ld\n", res.iid.r,
                        res.ood.r, res.ood.best_f1_step, res.ood.best_l_step);
        } else if (*ic) {
            RunScope run(ic_out, command, {},
                         nlohmann::json{{"a", ic_a}, {"gamma", ic_gamma}, {"points", ic_points}});
            const auto grid = uniform_delta_grid(ic_gamma, ic_points);
            const auto curve = iso_curve(ic_a, ic_gamma, grid);
            CsvTable t;
            t.header = {"delta_over_gamma", "a_prime", "a", "gamma", "pplx"};
            for (const IsoPoint& pt : curve) {
                t.add_row({csv_num(pt.delta_over_gamma), csv_num(pt.a_prime), csv_num(pt.a),
                           csv_num(pt.gamma), csv_num(pt.pplx)});
            }
            write_csv(run.path("curve.csv"), t);
            run.output("curve.csv");
            run.finish();
        } else if (*ifit) {
            const GammaFit fit = fit_gamma(if_l, if_a);
            if (!fit.feasible) {
                std::printf("INFEASIBLE min_pplx=%s\n", csv_num(fit.min_pplx).c_str());
            } else {
                std::printf("gamma=%s", csv_num(*fit.preferred).c_str());
                if (fit.gamma_low) std::printf(" gamma_low=%s", csv_num(*fit.gamma_low).c_str());
                if (fit.gamma_high) std::printf(" gamma_high=%s", csv_num(*fit.gamma_high).c_str());
                std::printf(" min_pplx=%s\n", csv_num(fit.min_pplx).c_str());
            }
        } else if (*il) {
            const auto seqs = ingest_logprobs(il_in);
            RunScope run(il_out, command, {}, nlohmann::json{{"input", il_in}});
            CsvTable t;
            t.header = {"sequence_id", "n_steps", "mean_neg_logprob", "correct"};
            for (const IngestedSequence& s : seqs) {
                t.add_row({s.id, csv_num(static_cast<int64_t>(s.steps.size())), csv_num(s.mean_neg_logprob()),
                           csv_bool(s.correct())});
            }
            write_csv(run.path("reports.csv"), t);
            run.output("reports.csv");
            run.finish();
            std::printf("%zu sequences\n", seqs.size());
        } else if (*pl) {
            if (pl_star >= 0) pl_opts.star_row = static_cast<size_t>(pl_star);
            RunScope run(pl_out, command, {},
                         nlohmann::json{{"table", pl_table}, {"kind", pl_opts.kind}});
            emit_plot(pl_table, pl_opts, run.path(pl_name));
            run.output(pl_name);
            run.finish();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
