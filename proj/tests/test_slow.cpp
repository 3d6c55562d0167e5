// SPDX-License-Identifier: Apache-2.0
//
// Long-running invariants: a real training run per test. Kept out of the fast
// suites; ctest runs them with a generous timeout.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ngc/harness.hpp"
#include "testutil.hpp"

using namespace ngc;

namespace {

const char* kRecallConfig = R"json({
  "run_id": "slow",
  "seed": 7,
  "threads": 2,
  "model": {"n_layers": 1, "n_heads": 2, "d_model": 32, "max_seq": 160},
  "eviction": {"cadence": 16, "block_size": 4, "score_window": 3},
  "curriculum": {"levels": [1.0, 0.75, 0.625, 0.5], "steps_per_stage": 60, "blend_fraction": 0.6},
  "train": {"lr": 0.003, "beta1": 0.9, "beta2": 0.999, "adam_eps": 1e-8,
            "steps": 300, "group_size": 8, "prompts_per_step": 16,
            "temperature": 1.1, "max_new_tokens": 64, "min_length_rounds": 3, "min_length_margin": 2,
            "mode": "full", "warmup_steps": 800, "warmup_lr": 0.005},
  "task": {"kind": "keyed-recall", "pairs": 1, "filler_len": 5},
  "eval": {"instances": 300, "samples": 1, "pass_at": [1], "eps_grid": [0.0],
           "scorers": ["NgcAttention"]}
})json";


struct ArmLike {
    ExperimentConfig cfg;
    ModelParams params;
    TrainHistory history;
};

ArmLike train_arm(ExperimentConfig cfg) {
    ArmLike arm;
    arm.cfg = std::move(cfg);
    arm.params = init_params(arm.cfg.model);
    lm_warmup(arm.params, arm.cfg.model, arm.cfg.task, arm.cfg.vocab, arm.cfg.warmup);
    TrainSetup setup;
    setup.model = arm.cfg.model;
    setup.eviction = arm.cfg.eviction;
    setup.curriculum = arm.cfg.curriculum;
    setup.train = arm.cfg.train;
    setup.task = arm.cfg.task;
    setup.vocab = arm.cfg.vocab;
    setup.mode = arm.cfg.mode;
    setup.steps = arm.cfg.train_steps;
    setup.seed = arm.cfg.seed;
    arm.history = train_loop(arm.params, setup);
    return arm;
}

}  // namespace

TEST_CASE("reward after eviction training sits above the step-0 mean (bootstrap CI)") {
    ExperimentConfig cfg = experiment_config_from_json_text(kRecallConfig);
    ArmLike arm = train_arm(cfg);
    REQUIRE(arm.history.steps.size() == 300);
    CHECK_FALSE(arm.history.halted);

    double step0 = arm.history.steps.front().mean_reward;
    std::vector<double> tail;
    for (size_t i = arm.history.steps.size() - 20; i < arm.history.steps.size(); ++i)
        tail.push_back(arm.history.steps[i].mean_reward);

    // Bootstrap the tail mean; the 2.5th percentile must clear the step-0 mean.
    const int reps = 2000;
    std::vector<double> means(reps);
    CounterRng rng(99);
    for (int r = 0; r < reps; ++r) {
        double sum = 0.0;
        for (size_t j = 0; j < tail.size(); ++j) sum += tail[rng.next_below(tail.size())];
        means[r] = sum / tail.size();
    }
    std::sort(means.begin(), means.end());
    double lo = means[static_cast<size_t>(0.025 * reps)];
    CAPTURE(step0);
    CAPTURE(lo);
    CHECK(lo > step0);
}

TEST_CASE("keyed recall exceeds 90% accuracy with no eviction (the ceiling)") {
    ExperimentConfig cfg = experiment_config_from_json_text(kRecallConfig);
    cfg.curriculum.levels = {1.0};  // never evict
    ArmLike arm = train_arm(cfg);

    EvalOptions opt = cfg.eval;
    opt.eps_grid = {0.0};
    EvalReport rep =
        evaluate(arm.params, cfg.model, cfg.eviction, cfg.task, cfg.vocab, opt);
    CAPTURE(rep.rows[0].accuracy);
    CHECK(rep.rows[0].accuracy > 0.9);
}
