// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ngc/model.hpp"
#include "ngc/replay.hpp"
#include "ngc/rollout.hpp"
#include "ngc/tasks.hpp"
#include "ngc/tensor.hpp"

namespace ngc {

// Staircase retention schedule: hold each level, then blend linearly into the
// next over the final `blend_fraction` of the stage.
struct CurriculumConfig {
    std::vector<double> levels = {1.0, 0.75, 0.5};  // retention, nonincreasing
    int steps_per_stage = 80;
    double blend_fraction = 0.6;

    void validate() const;
};

double curriculum_rate(long step, const CurriculumConfig& cfg);  // retention p0(t)
int curriculum_stage(long step, const CurriculumConfig& cfg);

struct TrainConfig {
    double lr = 5e-6;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-15;
    double weight_decay = 0.0;
    double grad_clip = 1.0;
    long min_length_threshold = 0;  // 0 disables the short-rollout penalty
    bool interoception = false;
    bool meta_tokens = false;
    double temperature = 1.0;
    int group_size = 8;       // G
    int prompts_per_step = 8;
    int max_new_tokens = 48;
    int n_threads = 1;

    void validate() const;
};

// Next-token warm-up on synthetic text, standing in for the pretrained base
// model the reinforcement phase assumes. Two mixed streams: generic
// induction-patterned sequences (token repeats echo their first successor) and
// episode-format transcripts with fresh per-sequence bindings. The reward-driven
// phase that follows receives no signal other than the task reward.
struct WarmupConfig {
    long steps = 0;  // 0 disables warm-up
    int batch = 12;
    double lr = 0.005;
    double grad_clip = 1.0;
    int junk_min = 2;  // filler run before the delimiter in format transcripts
    int junk_max = 6;
    uint64_t seed = 0;
};

void lm_warmup(ModelParams& params, const ModelConfig& cfg, const TaskSpec& task,
               const Vocab& vocab, const WarmupConfig& warmup);

// A_i = r_i - mean(r); mean-centered only, no variance normalization.
std::vector<double> group_advantages(const std::vector<double>& rewards);

// -(1/G) sum_i A_i sum_t logprob_{i,t}. Undefined tensors stand for skipped
// trajectories (zero advantage) and contribute nothing; G is advantages.size().
Tensor token_loss(const std::vector<Tensor>& traj_token_logprobs,
                  const std::vector<double>& advantages);

// Eviction-decision loss: per layer, mean over a trajectory's rounds, advantage
// weighted, mean over the group, negated, summed across layers.
// evlps[i][round][layer]; trajectories with no rounds contribute nothing.
Tensor mem_loss(const std::vector<std::vector<std::vector<Tensor>>>& evlps,
                const std::vector<double>& advantages);

Tensor total_loss(const Tensor& token, const Tensor& mem);

// "<eviction_rate>{rho}%</eviction_rate>" with rho as its shortest decimal.
std::string interoception_tag(double rho_percent);

// Zeroes positive rewards of rollouts too short to have reached an eviction
// round; threshold is the total length at which the first round fires.
double apply_min_length_penalty(double reward, long total_len, long threshold);

// Inference-side constrained decoding: everything -inf except the meta token at
// 0. Training scores the meta token from the unmasked distribution, which the
// replay pass does naturally.
void force_meta_logits(std::vector<double>& logits, int meta_token);

struct AdamState {
    long t = 0;
    std::vector<std::vector<double>> m, v;
};

// Global-norm clip followed by a decoupled-weight-decay adaptive-moment update.
// Returns the pre-clip gradient norm; throws on non-finite gradients.
double optimizer_step(ModelParams& params, AdamState& state, const TrainConfig& cfg);

enum class TrainMode { Full, TokenOnly, TargetedDropout };
TrainMode train_mode_from_string(const std::string& name);
std::string train_mode_to_string(TrainMode mode);

struct StepMetrics {
    long step = 0;
    double mean_reward = 0.0;
    double grad_norm = 0.0;
    double retention_rate = 1.0;
    double mean_peak_cache = 0.0;
    double loss_token = 0.0;
    double loss_mem = 0.0;
};

struct TrainHistory {
    std::vector<StepMetrics> steps;
    bool halted = false;
    std::string halt_reason;
};

struct TrainSetup {
    ModelConfig model;
    EvictionConfig eviction;
    CurriculumConfig curriculum;
    TrainConfig train;
    TaskSpec task;
    Vocab vocab;
    TrainMode mode = TrainMode::Full;
    long steps = 300;
    uint64_t seed = 0;
};

// On-policy loop: sample prompt groups, roll out under the scheduled eviction
// rate, score, replay, and take one update per batch. Halts on non-finite loss.
TrainHistory train_loop(ModelParams& params, const TrainSetup& setup);

}  // namespace ngc
