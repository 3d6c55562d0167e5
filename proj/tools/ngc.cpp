// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train / eval / sweep / inspect-masks / selftest.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ngc/checkpoint.hpp"
#include "ngc/common.hpp"
#include "ngc/harness.hpp"
#include "ngc/replay.hpp"
#include "ngc/sampler.hpp"

using namespace ngc;

namespace {

std::vector<double> parse_eps_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

TrainSetup setup_from_config(const ExperimentConfig& cfg) {
    TrainSetup setup;
    setup.model = cfg.model;
    setup.eviction = cfg.eviction;
    setup.curriculum = cfg.curriculum;
    setup.train = cfg.train;
    setup.task = cfg.task;
    setup.vocab = cfg.vocab;
    setup.mode = cfg.mode;
    setup.steps = cfg.train_steps;
    setup.seed = cfg.seed;
    return setup;
}

void write_train_charts(const std::string& dir, const TrainHistory& history) {
    std::vector<double> xs, reward, gnorm, retention, peak;
    for (const auto& s : history.steps) {
        xs.push_back(static_cast<double>(s.step));
        reward.push_back(s.mean_reward);
        gnorm.push_back(s.grad_norm);
        retention.push_back(s.retention_rate);
        peak.push_back(s.mean_peak_cache);
    }
    write_text_file(dir + "/reward.svg", svg_line_chart("mean reward", xs, {{"reward", reward}}));
    write_text_file(dir + "/grad_norm.svg",
                    svg_line_chart("gradient norm", xs, {{"grad_norm", gnorm}}));
    write_text_file(dir + "/retention.svg",
                    svg_line_chart("retention rate", xs, {{"retention", retention}}));
    write_text_file(dir + "/peak_cache.svg",
                    svg_line_chart("mean peak cache", xs, {{"peak", peak}}));
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              long steps_override, const std::string& mode_override, int intero_override) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (steps_override > 0) cfg.train_steps = steps_override;
    if (!mode_override.empty()) cfg.mode = train_mode_from_string(mode_override);
    if (intero_override >= 0) cfg.train.interoception = intero_override != 0;
    cfg.validate();

    std::string dir = cfg.output_dir + "/" + cfg.run_id;
    ModelParams params = init_params(cfg.model);
    lm_warmup(params, cfg.model, cfg.task, cfg.vocab, cfg.warmup);
    TrainSetup setup = setup_from_config(cfg);
    TrainHistory history = train_loop(params, setup);

    write_text_file(dir + "/metrics.csv", metrics_csv(history));
    write_train_charts(dir, history);
    save_checkpoint(dir + "/model.ngc", cfg.model, params);

    // One sample retention log from a fresh greedy rollout, as consumed by
    // inspect-masks.
    Instance inst = generate_instance(cfg.task, cfg.vocab, 0xd3ULL, 0);
    RolloutOptions ro;
    ro.policy.greedy = true;
    ro.eviction_rate = 1.0 - cfg.curriculum.levels.back();
    ro.max_new_tokens = cfg.train.max_new_tokens;
    ro.seed = cfg.seed;
    Trajectory traj = run_rollout(params, cfg.model, cfg.eviction, inst.prompt, ro);
    write_text_file(dir + "/retention_sample.jsonl", traj.log.to_jsonl());

    if (history.halted)
        std::cout << "training halted: " << history.halt_reason << "\n";
    std::cout << "steps: " << history.steps.size() << "\n";
    if (!history.steps.empty())
        std::cout << "final mean reward: " << history.steps.back().mean_reward << "\n";
    std::cout << "wrote " << dir << "/metrics.csv, model.ngc, charts\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& out_override, const std::string& scorer_override,
             const std::string& eps_override, bool sweep_all) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.config.vocab != cfg.vocab.size())
        throw std::runtime_error("checkpoint vocab does not match the configured task");

    EvalOptions opt = cfg.eval;
    if (!scorer_override.empty()) opt.scorers = {scorer_from_string(scorer_override)};
    if (!eps_override.empty()) opt.eps_grid = parse_eps_list(eps_override);
    if (sweep_all)
        opt.scorers = {ScorerKind::NgcAttention, ScorerKind::StreamingWindow,
                       ScorerKind::SnapAttention, ScorerKind::KeyNorm, ScorerKind::KeyDiversity};

    EvalReport report = evaluate(ckpt.params, ckpt.config, cfg.eviction, cfg.task, cfg.vocab, opt);
    std::string dir = cfg.output_dir + "/" + cfg.run_id;
    write_text_file(dir + "/eval.csv", eval_csv(report));

    std::vector<std::string> labels;
    std::vector<double> accs;
    for (const auto& row : report.rows) {
        labels.push_back(row.scorer + "@" + shortest_decimal(row.eviction_rate));
        accs.push_back(row.accuracy);
    }
    write_text_file(dir + "/accuracy.svg", svg_bar_chart("pass@1 accuracy", labels, accs));
    std::cout << eval_csv(report);
    std::cout << "wrote " << dir << "/eval.csv\n";
    return 0;
}

int cmd_inspect_masks(const std::string& log_path, int seq_len) {
    RetentionLog log;
    int layers = 1;
    if (log_path.empty()) {
        // Built-in two-round demo on ten tokens: round 1 drops t1 and t3,
        // round 2 drops t2 and t5.
        log.n_layers = 1;
        log.rounds.resize(2);
        RetentionRecord r0;
        r0.round = 0;
        r0.alive_indices = {0, 1, 2, 3, 4};
        r0.block_sizes = {1, 1, 1, 1, 1};
        r0.kept_blocks = {0, 2, 4};
        log.rounds[0] = {r0};
        RetentionRecord r1;
        r1.round = 1;
        r1.alive_indices = {0, 2, 4, 5, 6, 7};
        r1.block_sizes = {1, 1, 1, 1, 1, 1};
        r1.kept_blocks = {0, 2, 4, 5};
        log.rounds[1] = {r1};
        if (seq_len <= 0) seq_len = 10;
    } else {
        std::ifstream is(log_path);
        if (!is.good()) throw std::runtime_error("cannot open log: " + log_path);
        std::stringstream ss;
        ss << is.rdbuf();
        log = RetentionLog::from_jsonl(ss.str());
        layers = log.n_layers;
        if (seq_len <= 0) throw std::invalid_argument("--seq-len is required with --log");
    }
    ReplayMaskSet masks = build_replay_masks(log, seq_len, layers);
    for (int l = 0; l < layers; ++l) {
        std::cout << "layer " << l << "\n" << masks.to_ascii(l) << "\n";
    }
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](bool ok, const std::string& name) {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };

    // Steady-state convergence on the full grid.
    bool conv = true;
    for (double eps : {0.25, 0.5, 0.75, 1.0})
        for (int cadence : {64, 256}) {
            CacheTrajectory t = simulate_cache(0, 55L * cadence, eps, cadence, 32);
            conv &= std::fabs(static_cast<double>(t.pre_round_sizes[49]) - cadence / eps) <= 32.0;
        }
    check(conv, "cache size converges to cadence/rate within one block");

    // Ordered subset probabilities integrate to one.
    CounterRng rng(2);
    std::vector<double> s(4);
    for (auto& v : s) v = rng.next_uniform() * 4 - 2;
    double total = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            total += std::exp(sequence_logprob_value(s, {a, b}));
        }
    check(std::fabs(total - 1.0) < 1e-9, "ordered keep-set probabilities sum to one");

    // Replay equivalence on fresh rollouts.
    ModelConfig mc;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.d_model = 16;
    mc.vocab = 13;
    mc.max_seq = 128;
    mc.seed = 5;
    ModelParams params = init_params(mc);
    EvictionConfig ev;
    ev.cadence = 16;
    ev.block_size = 4;
    ev.score_window = 3;
    ev.n_layers = 2;
    bool replay_ok = true;
    for (long id = 0; id < 3; ++id) {
        RolloutOptions ro;
        ro.eviction_rate = 0.5;
        ro.max_new_tokens = 40;
        ro.seed = 31 + id;
        ro.traj_id = id;
        ro.record_logits = true;
        Trajectory traj = run_rollout(params, mc, ev, {1, 2, 3, 4, 5}, ro);
        ReplayMaskSet masks = build_replay_masks(traj.log, traj.total_len(), 2, ev.cadence);
        auto fwd = forward_masked(params, mc, traj.tokens, masks);
        for (int p = 0; p < traj.total_len(); ++p)
            for (int j = 0; j < mc.vocab; ++j)
                replay_ok &= std::fabs(fwd.logits.at(p, j) - traj.logits[p][j]) < 1e-9;
    }
    check(replay_ok, "replay masks reproduce incremental decode logits");

    // Curriculum blend hand values.
    CurriculumConfig cur;
    cur.levels = {1.0, 0.875, 0.75};
    cur.steps_per_stage = 100;
    cur.blend_fraction = 0.6;
    bool curr_ok = curriculum_rate(10, cur) == 1.0 &&
                   std::fabs(curriculum_rate(70, cur) - 0.9375) < 1e-12 &&
                   curriculum_rate(500, cur) == 0.75;
    check(curr_ok, "staircase retention schedule matches hand evaluation");

    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learned KV-cache eviction trained end-to-end with token generation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, mode, scorer, eps_list, ckpt_path, log_path;
    long steps = 0;
    int seq_len = 0;
    int intero = -1;

    auto* train = app.add_subcommand("train", "train a model per the config");
    train->add_option("--config", config_path, "experiment config JSON")->required();
    train->add_option("--out", out_dir, "output directory override");
    train->add_option("--steps", steps, "training steps override");
    train->add_option("--mode", mode, "full | token-only | targeted-dropout");
    train->add_flag_callback("--interoception", [&]() { intero = 1; },
                             "append the budget tag to prompts");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint with one scorer");
    ev->add_option("--config", config_path, "experiment config JSON")->required();
    ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    ev->add_option("--scorer", scorer, "scorer name");
    ev->add_option("--eps", eps_list, "comma-separated eviction rates");
    ev->add_option("--out", out_dir, "output directory override");

    auto* sweep = app.add_subcommand("sweep", "evaluate all scorers across a rate grid");
    sweep->add_option("--config", config_path, "experiment config JSON")->required();
    sweep->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    sweep->add_option("--eps", eps_list, "comma-separated eviction rates");
    sweep->add_option("--out", out_dir, "output directory override");

    auto* inspect = app.add_subcommand("inspect-masks", "print replay masks as ascii grids");
    inspect->add_option("--log", log_path, "retention log (jsonl); omit for the built-in demo");
    inspect->add_option("--seq-len", seq_len, "sequence length for the mask");

    app.add_subcommand("selftest", "run fast invariant checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("train"))
            return cmd_train(config_path, out_dir, steps, mode, intero);
        if (app.got_subcommand("eval"))
            return cmd_eval(config_path, ckpt_path, out_dir, scorer, eps_list, false);
        if (app.got_subcommand("sweep"))
            return cmd_eval(config_path, ckpt_path, out_dir, "", eps_list, true);
        if (app.got_subcommand("inspect-masks")) return cmd_inspect_masks(log_path, seq_len);
        if (app.got_subcommand("selftest")) return cmd_selftest();
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
