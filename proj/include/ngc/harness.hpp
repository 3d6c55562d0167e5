// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "ngc/training.hpp"

namespace ngc {

// One (scorer, eviction rate) evaluation row.
struct EvalRow {
    std::string scorer;
    double eviction_rate = 0.0;
    double accuracy = 0.0;  // pass@1
    double stderr_ = 0.0;
    double avg_peak_reduction = 0.0;
    std::vector<std::pair<int, double>> pass_at;  // (k, estimate)
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

// Unbiased pass@k over n samples with c correct: 1 - C(n-c, k)/C(n, k).
double pass_at_k(int n, int c, int k);

// Mean over paired prompts of peak(p, c_base, 0)/peak(p, c_method, rate).
double avg_peak_reduction(const std::vector<long>& prompt_lens,
                          const std::vector<long>& baseline_completions,
                          const std::vector<long>& method_completions, double eviction_rate,
                          int cadence, int block_size, int n_layers);

struct EvalOptions {
    std::vector<double> eps_grid = {0.0, 0.5};
    std::vector<ScorerKind> scorers = {ScorerKind::NgcAttention};
    long n_instances = 128;
    int n_samples = 1;                // completions per instance
    std::vector<int> pass_at_ks = {1};
    double temperature = 1.0;
    bool interoception_tags = false;  // append the rate tag at eval time
    int n_threads = 1;
    uint64_t seed = 0;
    uint64_t instance_stream = 0xe7a1ULL;  // held-out by default
};

// Greedy top-k eviction for the learned scorer, deterministic keep sets for
// the heuristics; eviction rate 0 rows give the paired no-eviction lengths.
EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const EvictionConfig& evict, const TaskSpec& task, const Vocab& vocab,
                    const EvalOptions& opt);

// --- experiment configuration ---------------------------------------------------

struct ExperimentConfig {
    std::string run_id = "run";
    std::string output_dir = "out";
    uint64_t seed = 0;
    int threads = 1;

    ModelConfig model;
    EvictionConfig eviction;
    CurriculumConfig curriculum;
    TrainConfig train;
    TaskSpec task;
    Vocab vocab;

    long train_steps = 300;
    TrainMode mode = TrainMode::Full;
    int min_length_rounds = 1;  // rounds the answer must come after
    int min_length_margin = 4;  // threshold = rounds * cadence + margin
    WarmupConfig warmup;

    EvalOptions eval;

    void validate() const;
};

// Strict JSON load: unknown keys are rejected; NGC_SEED overrides the seed.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_json_text(const std::string& text);

// --- reports ---------------------------------------------------------------------

std::string metrics_csv(const TrainHistory& history);
std::string eval_csv(const EvalReport& report);
void write_text_file(const std::string& path, const std::string& content);

// Minimal static charts; CSV remains the source of truth.
std::string svg_line_chart(const std::string& title, const std::vector<double>& xs,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series);
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

}  // namespace ngc
