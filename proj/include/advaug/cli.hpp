#pragma once

#include "advaug/checkpoint.hpp"
#include "advaug/evaluation.hpp"
#include "advaug/plot.hpp"
#include "advaug/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace advaug {

namespace fs = std::filesystem;

// Experiment roots default to $ADVAUG_EXPERIMENT_ROOT, falling back to
// ./experiments.
inline std::string experiment_root() {
    const char* env = std::getenv("ADVAUG_EXPERIMENT_ROOT");
    return env && *env ? env : "experiments";
}

inline std::string dir_basename(const std::string& dir) {
    fs::path p(dir);
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

// Highest-numbered checkpoint under <run>/checkpoints.
inline int latest_checkpoint_step(const std::string& run_dir) {
    const fs::path root = fs::path(run_dir) / "checkpoints";
    if (!fs::is_directory(root)) throw std::runtime_error(run_dir + ": no checkpoints directory");
    int best = -1;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string name = entry.path().filename().string();
        if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
        best = std::max(best, std::stoi(name));
    }
    if (best < 0) throw std::runtime_error(run_dir + ": no checkpoints found");
    return best;
}

inline std::string checkpoint_dir(const std::string& run_dir, int step) {
    const int s = step < 0 ? latest_checkpoint_step(run_dir) : step;
    return run_dir + "/checkpoints/" + std::to_string(s);
}

inline std::string checkpoint_precision(const std::string& ckpt_dir) {
    return read_checkpoint_meta(ckpt_dir).at("config").at("precision").get<std::string>();
}

// Final validation BLEU per (loss config, alpha) cell; NaN marks a run that
// failed to converge and renders as "-".
struct AlphaSweepReport {
    std::vector<double> alphas;
    std::vector<std::string> loss_configs;
    std::vector<std::vector<double>> scores;  // [loss][alpha]

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < loss_configs.size(); ++i) {
            nlohmann::json cells = nlohmann::json::array();
            for (double s : scores[i]) {
                if (std::isfinite(s))
                    cells.push_back(s);
                else
                    cells.push_back(nullptr);
            }
            rows.push_back({{"loss", loss_configs[i]}, {"bleu", cells}});
        }
        return {{"alphas", alphas}, {"rows", rows}};
    }

    std::string to_table() const {
        std::size_t name_w = 4;
        for (const std::string& n : loss_configs) name_w = std::max(name_w, n.size());
        char buf[64];
        std::string t(name_w, ' ');
        t.replace(0, 4, "loss");
        for (double a : alphas) {
            std::snprintf(buf, sizeof buf, "  %7g", a);
            t += buf;
        }
        t += "\n";
        for (std::size_t i = 0; i < loss_configs.size(); ++i) {
            std::string row = loss_configs[i];
            row.resize(name_w, ' ');
            for (double s : scores[i]) {
                if (std::isfinite(s))
                    std::snprintf(buf, sizeof buf, "  %7.2f", s);
                else
                    std::snprintf(buf, sizeof buf, "  %7s", "-");
                row += buf;
            }
            t += row + "\n";
        }
        return t;
    }
};

// Train every (loss config, alpha) combination from a shared base config and
// collect final validation BLEU. The swept alpha is the Beta parameter of
// whichever vicinity the loss draws from.
inline AlphaSweepReport run_alpha_sweep(const TrainConfig& base, const std::vector<double>& alphas,
                                        const std::vector<std::string>& loss_configs, const std::string& out_root) {
    if (alphas.empty()) throw std::invalid_argument("alpha sweep: need at least one alpha");
    if (loss_configs.empty()) throw std::invalid_argument("alpha sweep: need at least one loss config");
    AlphaSweepReport rep;
    rep.alphas = alphas;
    for (const std::string& name : loss_configs) {
        const LossConfig lc = parse_loss_config(name);
        rep.loss_configs.push_back(name);
        std::vector<double> row;
        for (double a : alphas) {
            TrainConfig cfg = base;
            cfg.loss_config = lc;
            if (lc == LossConfig::kMixup)
                cfg.mixup_alpha = a;
            else
                cfg.alpha = a;
            std::string cell_dir = out_root + "/" + name + "-a" + detail::fmt_num(a);
            std::replace(cell_dir.begin(), cell_dir.end(), '+', '_');
            try {
                row.push_back(run_training(cfg, cell_dir).bleu_score);
            } catch (const std::exception&) {
                row.push_back(std::nan(""));
            }
        }
        rep.scores.push_back(std::move(row));
    }
    return rep;
}

namespace detail_cli {

template <class Real>
int evaluate_run(const std::string& run, int step, int beam, const std::string& out_path) {
    const std::string ckpt = checkpoint_dir(run, step);
    const Checkpoint<Real> ck = load_checkpoint<Real>(ckpt);
    const std::vector<SentencePair> valid = read_corpus(run + "/corpus/valid.tsv", ck.vocab);
    const int bw = beam > 0 ? beam : ck.config.beam_width;
    const ValSummary v = validate_model(ck.model, valid, ck.config.label_smoothing, ck.config.reduction(), bw);
    nlohmann::json rep{{"step", ck.step}, {"beam", bw},          {"examples", valid.size()},
                       {"loss", v.loss},  {"bleu", v.bleu_score}, {"seq_acc", v.seq_acc}};
    const std::string out = out_path.empty() ? run + "/reports/eval-" + std::to_string(ck.step) + ".json" : out_path;
    fs::create_directories(fs::path(out).parent_path());
    std::ofstream f(out);
    if (!f) throw std::runtime_error(out + ": cannot open for writing");
    f << rep.dump(2) << "\n";
    std::printf("step %d  examples %zu  val_loss %.4f  bleu %.2f  seq_acc %.3f\n", ck.step, valid.size(), v.loss,
                v.bleu_score, v.seq_acc);
    std::printf("report: %s\n", out.c_str());
    return 0;
}

template <class Real>
int attack_run(const std::string& run, int step, std::uint64_t seed, bool seed_set, int limit,
               const std::string& out_path) {
    const std::string ckpt = checkpoint_dir(run, step);
    const Checkpoint<Real> ck = load_checkpoint<Real>(ckpt);
    const std::vector<SentencePair> valid = read_corpus(run + "/corpus/valid.tsv", ck.vocab);
    Rng rng = Rng::stream(seed_set ? seed : ck.config.seed, "adversarial");
    const AdvParams xi_src = ck.config.adv_params(AdvSide::kSrc);
    const AdvParams xi_tgt = ck.config.adv_params(AdvSide::kTgt);
    const Real ls = static_cast<Real>(ck.config.label_smoothing);

    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error(out_path + ": cannot open for writing");
    }
    std::ostream& out = out_path.empty() ? std::cout : file;
    std::size_t n = valid.size();
    if (limit > 0) n = std::min(n, static_cast<std::size_t>(limit));
    for (std::size_t i = 0; i < n; ++i) {
        const SentencePair& ex = valid[i];
        const OriginPass<Real> origin = origin_pass(ck.model, ex, ls);
        const AdvDraw<Real> draw = gen_adv_pair(ck.model, ex, origin.src_grad, xi_src, xi_tgt, rng, ls);
        const IdSeq hyp = decode(ck.model, draw.src, ck.config.beam_width);
        out << join_ws(ck.vocab.decode(ex.src)) << '\t' << join_ws(ck.vocab.decode(draw.src)) << '\t'
            << join_ws(ck.vocab.decode(ex.tgt)) << '\t' << join_ws(ck.vocab.decode(hyp)) << '\n';
    }
    return 0;
}

template <class Real>
int noise_sweep(const std::vector<std::string>& runs, const std::vector<double>& fractions, std::uint64_t seed,
                int beam, bool smooth, const std::string& out_path) {
    std::vector<Checkpoint<Real>> ckpts;
    for (const std::string& run : runs) ckpts.push_back(load_checkpoint<Real>(checkpoint_dir(run, -1)));
    for (std::size_t i = 1; i < ckpts.size(); ++i)
        if (ckpts[i].vocab.tokens() != ckpts[0].vocab.tokens())
            throw std::runtime_error("sweep: models were trained with different vocabularies");

    const std::vector<SentencePair> valid = read_corpus(runs[0] + "/corpus/valid.tsv", ckpts[0].vocab);
    std::vector<std::pair<std::string, const Transformer<Real>*>> models;
    for (std::size_t i = 0; i < runs.size(); ++i) models.emplace_back(dir_basename(runs[i]), &ckpts[i].model);

    const RobustnessReport rep = robustness_sweep(models, valid, fractions, seed, beam, smooth);
    const std::string out = out_path.empty() ? runs[0] + "/reports/robustness.json" : out_path;
    fs::create_directories(fs::path(out).parent_path());
    std::ofstream f(out);
    if (!f) throw std::runtime_error(out + ": cannot open for writing");
    f << rep.to_json().dump(2) << "\n";
    std::fputs(rep.to_table().c_str(), stdout);
    std::printf("report: %s\n", out.c_str());
    return 0;
}

}  // namespace detail_cli

// Entry point shared by the binary and the tests; argv without the program
// name.
inline int cli_main(std::vector<std::string> args) {
    CLI::App app{"adversarial-augmentation trainer for sequence-to-sequence models"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model from a config file");
    std::string train_config, train_out, train_loss;
    std::uint64_t train_seed = 0;
    train->add_option("--config", train_config, "config file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", train_out, "experiment directory (default: under the experiment root)");
    auto* seed_opt = train->add_option("--seed", train_seed, "root seed override");
    auto* loss_opt = train->add_option("--loss-config", train_loss, "loss configuration override");
    train->callback([&] {
        TrainConfig cfg = load_train_config(train_config);
        if (*seed_opt) {
            cfg.seed = train_seed;
            cfg.data.task.seed = train_seed;
        }
        if (*loss_opt) cfg.loss_config = parse_loss_config(train_loss);
        std::string out = train_out;
        if (out.empty())
            out = experiment_root() + "/" + fs::path(train_config).stem().string() + "-" +
                  to_string(cfg.loss_config) + "-s" + std::to_string(cfg.seed);
        const ValSummary v = run_training(cfg, out);
        std::printf("trained %d steps -> %s\n", cfg.max_steps, out.c_str());
        std::printf("val_loss %.4f  bleu %.2f  seq_acc %.3f\n", v.loss, v.bleu_score, v.seq_acc);
    });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the run's validation set");
    std::string eval_run, eval_out;
    int eval_step = -1, eval_beam = 0;
    evaluate->add_option("--run", eval_run, "experiment directory")->required()->check(CLI::ExistingDirectory);
    evaluate->add_option("--step", eval_step, "checkpoint step (default: latest)");
    evaluate->add_option("--beam", eval_beam, "beam width override");
    evaluate->add_option("--out", eval_out, "report path (default: <run>/reports/eval-<step>.json)");
    evaluate->callback([&] {
        const std::string ckpt = checkpoint_dir(eval_run, eval_step);
        if (checkpoint_precision(ckpt) == "float64")
            detail_cli::evaluate_run<double>(eval_run, eval_step, eval_beam, eval_out);
        else
            detail_cli::evaluate_run<float>(eval_run, eval_step, eval_beam, eval_out);
    });

    // attack
    auto* attack = app.add_subcommand("attack", "dump adversarial pairs and their decodes");
    std::string atk_run, atk_out;
    int atk_step = -1, atk_limit = 0;
    std::uint64_t atk_seed = 0;
    attack->add_option("--run", atk_run, "experiment directory")->required()->check(CLI::ExistingDirectory);
    attack->add_option("--step", atk_step, "checkpoint step (default: latest)");
    attack->add_option("--limit", atk_limit, "attack only the first N validation examples");
    attack->add_option("--out", atk_out, "output file (default: stdout)");
    auto* atk_seed_opt = attack->add_option("--seed", atk_seed, "attack seed (default: the run's seed)");
    attack->callback([&] {
        const std::string ckpt = checkpoint_dir(atk_run, atk_step);
        if (checkpoint_precision(ckpt) == "float64")
            detail_cli::attack_run<double>(atk_run, atk_step, atk_seed, !!*atk_seed_opt, atk_limit, atk_out);
        else
            detail_cli::attack_run<float>(atk_run, atk_step, atk_seed, !!*atk_seed_opt, atk_limit, atk_out);
    });

    // sweep
    auto* sweep = app.add_subcommand("sweep", "noise-robustness sweep over runs, or alpha sweep over configs");
    std::vector<std::string> sweep_models, sweep_losses{"mixup", "aut", "clean+adv"};
    std::vector<double> sweep_fractions{0.0, 0.05, 0.10, 0.15}, sweep_alphas;
    std::string sweep_config, sweep_out;
    std::uint64_t sweep_seed = 1;
    int sweep_beam = 1;
    bool sweep_smooth = false;
    sweep->add_option("--models", sweep_models, "experiment directories to compare on noisy inputs")
        ->delimiter(',');
    sweep->add_option("--fractions", sweep_fractions, "noise fractions")->delimiter(',');
    sweep->add_option("--alphas", sweep_alphas, "Beta parameters to train over")->delimiter(',');
    sweep->add_option("--loss-configs", sweep_losses, "loss configurations for the alpha sweep")->delimiter(',');
    sweep->add_option("--config", sweep_config, "base config for the alpha sweep")->check(CLI::ExistingFile);
    sweep->add_option("--seed", sweep_seed, "noise seed");
    sweep->add_option("--beam", sweep_beam, "beam width");
    sweep->add_flag("--smooth", sweep_smooth, "add-one BLEU smoothing");
    sweep->add_option("--out", sweep_out, "report path (noise) or output root (alpha)");
    sweep->callback([&] {
        if (sweep_models.empty() == sweep_alphas.empty())
            throw CLI::ValidationError("sweep", "pass either --models or --alphas");
        if (!sweep_models.empty()) {
            const std::string ckpt = checkpoint_dir(sweep_models[0], -1);
            if (checkpoint_precision(ckpt) == "float64")
                detail_cli::noise_sweep<double>(sweep_models, sweep_fractions, sweep_seed, sweep_beam, sweep_smooth,
                                                sweep_out);
            else
                detail_cli::noise_sweep<float>(sweep_models, sweep_fractions, sweep_seed, sweep_beam, sweep_smooth,
                                               sweep_out);
            return;
        }
        if (sweep_config.empty()) throw CLI::ValidationError("sweep", "--alphas requires --config");
        const std::string root = sweep_out.empty() ? experiment_root() + "/alpha-sweep" : sweep_out;
        const AlphaSweepReport rep = run_alpha_sweep(load_train_config(sweep_config), sweep_alphas, sweep_losses,
                                                     root);
        fs::create_directories(root);
        std::ofstream f(root + "/alpha_sweep.json");
        if (!f) throw std::runtime_error(root + "/alpha_sweep.json: cannot open for writing");
        f << rep.to_json().dump(2) << "\n";
        std::fputs(rep.to_table().c_str(), stdout);
        std::printf("report: %s/alpha_sweep.json\n", root.c_str());
    });

    // plot
    auto* plot = app.add_subcommand("plot", "render metric curves from metrics logs to an SVG");
    std::vector<std::string> plot_metrics, plot_labels;
    std::string plot_field = "bleu", plot_out, plot_title;
    plot->add_option("--metrics", plot_metrics, "metrics.jsonl files")->required()->delimiter(',');
    plot->add_option("--labels", plot_labels, "one label per metrics file")->delimiter(',');
    plot->add_option("--field", plot_field, "bleu, loss, or total")
        ->check(CLI::IsMember({"bleu", "loss", "total"}));
    plot->add_option("--title", plot_title, "chart title (default: the field)");
    plot->add_option("--out", plot_out, "output SVG path")->required();
    plot->callback([&] {
        const std::vector<Series> series = curves_from_metrics(plot_metrics, plot_labels, plot_field);
        write_plot(plot_out, series, plot_title.empty() ? plot_field : plot_title, "step", plot_field);
        std::printf("plot: %s\n", plot_out.c_str());
    });

    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace advaug
