// SPDX-License-Identifier: Apache-2.0
#include "ngc/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ngc/common.hpp"

namespace ngc {

void CurriculumConfig::validate() const {
    NGC_CHECK_ARG(!levels.empty(), "curriculum needs at least one level");
    for (size_t i = 0; i < levels.size(); ++i) {
        NGC_CHECK_ARG(levels[i] > 0.0 && levels[i] <= 1.0, "retention levels must be in (0,1]");
        if (i > 0) NGC_CHECK_ARG(levels[i] <= levels[i - 1], "levels must be nonincreasing");
    }
    NGC_CHECK_ARG(steps_per_stage >= 1, "steps per stage must be >= 1");
    NGC_CHECK_ARG(blend_fraction > 0.0 && blend_fraction < 1.0, "blend fraction must be in (0,1)");
}

int curriculum_stage(long step, const CurriculumConfig& cfg) {
    cfg.validate();
    NGC_CHECK_ARG(step >= 0, "negative training step");
    long last = static_cast<long>(cfg.levels.size()) - 1;
    return static_cast<int>(std::min(step / cfg.steps_per_stage, last));
}

double curriculum_rate(long step, const CurriculumConfig& cfg) {
    int stage = curriculum_stage(step, cfg);
    int last = static_cast<int>(cfg.levels.size()) - 1;
    if (stage == last) return cfg.levels[last];
    double s = static_cast<double>(step % cfg.steps_per_stage) /
               static_cast<double>(cfg.steps_per_stage);
    double hold = 1.0 - cfg.blend_fraction;
    if (s < hold) return cfg.levels[stage];
    return cfg.levels[stage] +
           (s - hold) / cfg.blend_fraction * (cfg.levels[stage + 1] - cfg.levels[stage]);
}

void TrainConfig::validate() const {
    NGC_CHECK_ARG(lr > 0.0, "learning rate must be positive");
    NGC_CHECK_ARG(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                  "moment decay rates must be in [0,1)");
    NGC_CHECK_ARG(adam_eps > 0.0, "optimizer epsilon must be positive");
    NGC_CHECK_ARG(grad_clip > 0.0, "grad clip must be positive");
    NGC_CHECK_ARG(group_size >= 2, "group size must be >= 2");
    NGC_CHECK_ARG(prompts_per_step >= 1, "prompts per step must be >= 1");
    NGC_CHECK_ARG(max_new_tokens >= 1, "max new tokens must be >= 1");
    NGC_CHECK_ARG(temperature > 0.0, "temperature must be positive");
    NGC_CHECK_ARG(n_threads >= 1, "thread count must be >= 1");
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
    NGC_CHECK_ARG(rewards.size() >= 2, "a rollout group needs at least two trajectories");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    std::vector<double> adv(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
    return adv;
}

Tensor token_loss(const std::vector<Tensor>& traj_token_logprobs,
                  const std::vector<double>& advantages) {
    NGC_CHECK_ARG(traj_token_logprobs.size() == advantages.size(),
                  "one logprob tensor per advantage required");
    const double G = static_cast<double>(advantages.size());
    Tensor acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < advantages.size(); ++i) {
        if (!traj_token_logprobs[i].defined() || advantages[i] == 0.0) continue;
        if (traj_token_logprobs[i].numel() == 0) continue;
        acc = add(acc, scale(sum_all(traj_token_logprobs[i]), advantages[i]));
    }
    return scale(acc, -1.0 / G);
}

Tensor mem_loss(const std::vector<std::vector<std::vector<Tensor>>>& evlps,
                const std::vector<double>& advantages) {
    NGC_CHECK_ARG(evlps.size() == advantages.size(),
                  "one eviction record per advantage required");
    const double G = static_cast<double>(advantages.size());
    Tensor acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < advantages.size(); ++i) {
        const auto& rounds = evlps[i];
        if (rounds.empty() || advantages[i] == 0.0) continue;
        const double inv_rounds = 1.0 / static_cast<double>(rounds.size());
        Tensor traj = Tensor::scalar(0.0);
        for (const auto& layer_lps : rounds)
            for (const Tensor& lp : layer_lps) traj = add(traj, lp);
        acc = add(acc, scale(traj, advantages[i] * inv_rounds));
    }
    return scale(acc, -1.0 / G);
}

Tensor total_loss(const Tensor& token, const Tensor& mem) { return add(token, mem); }

std::string interoception_tag(double rho_percent) {
    NGC_CHECK_ARG(rho_percent >= 0.0 && rho_percent <= 100.0, "rate percent out of range");
    return "<eviction_rate>" + shortest_decimal(rho_percent) + "%</eviction_rate>";
}

double apply_min_length_penalty(double reward, long total_len, long threshold) {
    if (reward > 0.0 && total_len < threshold) return 0.0;
    return reward;
}

void force_meta_logits(std::vector<double>& logits, int meta_token) {
    NGC_CHECK_ARG(meta_token >= 0 && meta_token < static_cast<int>(logits.size()),
                  "meta token id out of range");
    for (double& v : logits) v = -std::numeric_limits<double>::infinity();
    logits[meta_token] = 0.0;
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "full") return TrainMode::Full;
    if (name == "token-only") return TrainMode::TokenOnly;
    if (name == "targeted-dropout") return TrainMode::TargetedDropout;
    throw std::invalid_argument("unknown train mode: " + name);
}

std::string train_mode_to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::Full: return "full";
        case TrainMode::TokenOnly: return "token-only";
        case TrainMode::TargetedDropout: return "targeted-dropout";
    }
    throw std::invalid_argument("unknown train mode");
}

double optimizer_step(ModelParams& params, AdamState& state, const TrainConfig& cfg) {
    cfg.validate();
    auto named = params.named_tensors();
    if (state.m.empty()) {
        state.m.resize(named.size());
        state.v.resize(named.size());
        for (size_t i = 0; i < named.size(); ++i) {
            state.m[i].assign(named[i].second->numel(), 0.0);
            state.v[i].assign(named[i].second->numel(), 0.0);
        }
    }
    NGC_CHECK_STATE(state.m.size() == named.size(), "optimizer state shape mismatch");

    double norm_sq = 0.0;
    for (auto& [name, t] : named) {
        for (double g : t->grad()) {
            NGC_CHECK_STATE(std::isfinite(g), "non-finite gradient in " + name);
            norm_sq += g * g;
        }
    }
    double norm = std::sqrt(norm_sq);
    double clip_scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

    state.t += 1;
    double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < named.size(); ++i) {
        auto& vals = named[i].second->values_mut();
        const auto& grads = named[i].second->grad();
        for (size_t j = 0; j < vals.size(); ++j) {
            double g = grads[j] * clip_scale;
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            double mhat = state.m[i][j] / bias1;
            double vhat = state.v[i][j] / bias2;
            vals[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                 cfg.weight_decay * vals[j]);
        }
    }
    return norm;
}

// --- warm-up ---------------------------------------------------------------------

namespace {

std::vector<int> content_alphabet(const Vocab& vocab) {
    std::vector<int> a;
    for (int i = 0; i < vocab.n_filler; ++i) a.push_back(vocab.filler(i));
    for (int i = 0; i < vocab.n_keys; ++i) a.push_back(vocab.key(i));
    for (int i = 0; i < vocab.n_values; ++i) a.push_back(vocab.value(i));
    for (int i = 0; i < vocab.n_symbols; ++i) a.push_back(vocab.symbol(i));
    return a;
}

std::vector<int> induction_sequence(const Vocab& vocab, const std::vector<int>& alphabet,
                                    CounterRng& rng) {
    // Whenever a token repeats, it is followed by the same successor as its
    // first occurrence; roughly half the positions are induction-predictable.
    int len = 18 + static_cast<int>(rng.next_below(8));
    std::vector<int> toks = {vocab.bos()};
    std::vector<int> successor(vocab.size(), -1);
    int prev = -1;
    for (int i = 0; i < len; ++i) {
        int t = (prev >= 0 && successor[prev] >= 0)
                    ? successor[prev]
                    : alphabet[rng.next_below(alphabet.size())];
        if (prev >= 0 && successor[prev] < 0) successor[prev] = t;
        toks.push_back(t);
        prev = t;
    }
    return toks;
}

std::vector<int> format_sequence(const TaskSpec& task, const Vocab& vocab,
                                 const WarmupConfig& warmup, CounterRng& rng, long index) {
    // Episode shape with this sequence's own binding: prompt, a junk run in the
    // configured range, the delimiter, then the bound answer. Half the
    // transcripts carry a budget tag with an arbitrary rate so tag tokens are
    // familiar; the rate correlates with nothing here.
    Instance inst = generate_instance(task, vocab, 0x77a3ULL, index);
    std::vector<int> toks = inst.prompt;
    if (rng.next_below(2) == 0) {
        static const double kRates[] = {0.0, 12.5, 25.0, 37.5, 50.0, 62.5, 75.0, 87.5};
        auto tag = tag_tokens(vocab, kRates[rng.next_below(8)]);
        toks.insert(toks.end(), tag.begin(), tag.end());
    }
    int junk = warmup.junk_min +
               static_cast<int>(rng.next_below(warmup.junk_max - warmup.junk_min + 1));
    for (int i = 0; i < junk; ++i)
        toks.push_back(vocab.filler(static_cast<int>(rng.next_below(vocab.n_filler))));
    toks.push_back(vocab.delim());
    for (int t : inst.answer) toks.push_back(t);
    return toks;
}

}  // namespace

void lm_warmup(ModelParams& params, const ModelConfig& cfg, const TaskSpec& task,
               const Vocab& vocab, const WarmupConfig& warmup) {
    if (warmup.steps <= 0) return;
    NGC_CHECK_ARG(warmup.batch >= 1 && warmup.lr > 0.0, "bad warmup configuration");
    NGC_CHECK_ARG(warmup.junk_min >= 0 && warmup.junk_max >= warmup.junk_min,
                  "bad warmup junk range");
    auto alphabet = content_alphabet(vocab);
    TrainConfig opt_cfg;
    opt_cfg.lr = warmup.lr;
    opt_cfg.beta2 = 0.999;
    opt_cfg.adam_eps = 1e-8;
    opt_cfg.grad_clip = warmup.grad_clip;
    AdamState state;
    for (long step = 0; step < warmup.steps; ++step) {
        params.zero_grad();
        Tensor loss = Tensor::scalar(0.0);
        for (int b = 0; b < warmup.batch; ++b) {
            CounterRng rng(warmup.seed, 0x3a11ULL, static_cast<uint64_t>(step),
                           static_cast<uint64_t>(b));
            std::vector<int> toks = (b % 2 == 0)
                                        ? induction_sequence(vocab, alphabet, rng)
                                        : format_sequence(task, vocab, warmup, rng,
                                                          step * warmup.batch + b);
            auto masks = ReplayMaskSet::causal(cfg.n_layers, static_cast<int>(toks.size()));
            auto fwd = forward_masked(params, cfg, toks, masks);
            std::vector<int> rows, targets;
            for (size_t t = 1; t < toks.size(); ++t) {
                rows.push_back(static_cast<int>(t - 1));
                targets.push_back(toks[t]);
            }
            Tensor picked = gather_rows(fwd.logits, rows);
            Tensor lp = sub(gather_elements(picked, targets), logsumexp_lastdim(picked));
            loss = add(loss, neg(mean_all(lp)));
        }
        loss = scale(loss, 1.0 / warmup.batch);
        loss.backward();
        optimizer_step(params, state, opt_cfg);
    }
}

// --- training loop -------------------------------------------------------------

namespace {

struct GroupRollout {
    Instance instance;
    std::vector<int> prompt;  // instance prompt, tag appended in interoception mode
    double eviction_rate = 0.0;
    std::vector<Trajectory> trajs;
    std::vector<double> rewards;
};

}  // namespace

TrainHistory train_loop(ModelParams& params, const TrainSetup& setup) {
    setup.model.validate();
    setup.train.validate();
    setup.curriculum.validate();
    setup.task.validate(setup.vocab);
    NGC_CHECK_ARG(setup.model.vocab == setup.vocab.size(), "model vocab does not match task vocab");

    const int G = setup.train.group_size;
    const int n_prompts = setup.train.prompts_per_step;
    const Vocab& vocab = setup.vocab;

    TrainHistory history;
    AdamState opt_state;

    for (long step = 0; step < setup.steps; ++step) {
        double retention = curriculum_rate(step, setup.curriculum);
        double base_rate = 1.0 - retention;

        std::vector<GroupRollout> groups(n_prompts);
        for (int g = 0; g < n_prompts; ++g) {
            groups[g].instance =
                generate_instance(setup.task, vocab, 0x74ULL, step * n_prompts + g);
            groups[g].prompt = groups[g].instance.prompt;
            double rate = base_rate;
            if (setup.train.interoception) {
                int stage = curriculum_stage(step, setup.curriculum);
                CounterRng rho_rng(setup.seed, 0x49ULL, static_cast<uint64_t>(step),
                                   static_cast<uint64_t>(g));
                int pick = stage + static_cast<int>(rho_rng.next_below(3)) - 1;
                pick = std::clamp(pick, 0, static_cast<int>(setup.curriculum.levels.size()) - 1);
                rate = 1.0 - setup.curriculum.levels[pick];
                auto tag = tag_tokens(vocab, rate * 100.0);
                groups[g].prompt.insert(groups[g].prompt.end(), tag.begin(), tag.end());
            }
            groups[g].eviction_rate = rate;
            groups[g].trajs.resize(G);
            groups[g].rewards.resize(G);
        }

        // Rollouts: pure over shared read-only params, one slot per trajectory.
        parallel_for(static_cast<long>(n_prompts) * G, setup.train.n_threads, [&](long idx) {
            int g = static_cast<int>(idx / G);
            int i = static_cast<int>(idx % G);
            RolloutOptions opt;
            opt.policy.kind = ScorerKind::NgcAttention;
            opt.policy.greedy = false;
            opt.eviction_rate = groups[g].eviction_rate;
            opt.temperature = setup.train.temperature;
            opt.max_new_tokens = setup.train.max_new_tokens;
            opt.stop_delimiter = vocab.delim();
            opt.stop_answer_len = static_cast<int>(groups[g].instance.answer.size());
            opt.meta_token = setup.train.meta_tokens ? vocab.meta() : -1;
            opt.seed = setup.seed;
            opt.traj_id = step * static_cast<long>(n_prompts) * G + idx;
            Trajectory traj =
                run_rollout(params, setup.model, setup.eviction, groups[g].prompt, opt);
            std::vector<int> completion(traj.tokens.begin() + traj.prompt_len, traj.tokens.end());
            double reward = verify(groups[g].instance, completion, vocab);
            if (setup.train.min_length_threshold > 0)
                reward = apply_min_length_penalty(reward, traj.total_len(),
                                                  setup.train.min_length_threshold);
            traj.reward = reward;
            groups[g].rewards[i] = reward;
            groups[g].trajs[i] = std::move(traj);
        });

        // Replays: only trajectories with nonzero advantage carry gradient.
        std::vector<std::vector<double>> advantages(n_prompts);
        for (int g = 0; g < n_prompts; ++g) advantages[g] = group_advantages(groups[g].rewards);

        std::vector<std::vector<Tensor>> tok_lps(n_prompts, std::vector<Tensor>(G));
        std::vector<std::vector<std::vector<std::vector<Tensor>>>> ev_lps(
            n_prompts, std::vector<std::vector<std::vector<Tensor>>>(G));
        parallel_for(static_cast<long>(n_prompts) * G, setup.train.n_threads, [&](long idx) {
            int g = static_cast<int>(idx / G);
            int i = static_cast<int>(idx % G);
            if (advantages[g][i] == 0.0) return;
            const Trajectory& traj = groups[g].trajs[i];
            ReplayMaskSet masks =
                setup.mode == TrainMode::TargetedDropout
                    ? ReplayMaskSet::causal(setup.model.n_layers, traj.total_len())
                    : build_replay_masks(traj.log, traj.total_len(), setup.model.n_layers,
                                         setup.eviction.cadence);
            const RetentionLog empty_log;
            ReplayResult rep = replay_forward(params, setup.model, setup.eviction, traj.tokens,
                                              traj.prompt_len,
                                              setup.mode == TrainMode::Full ? traj.log : empty_log,
                                              masks);
            tok_lps[g][i] = rep.token_logprobs;
            ev_lps[g][i] = rep.eviction_logprobs;
        });

        Tensor step_token = Tensor::scalar(0.0);
        Tensor step_mem = Tensor::scalar(0.0);
        for (int g = 0; g < n_prompts; ++g) {
            step_token = add(step_token, token_loss(tok_lps[g], advantages[g]));
            if (setup.mode == TrainMode::Full)
                step_mem = add(step_mem, mem_loss(ev_lps[g], advantages[g]));
        }
        step_token = scale(step_token, 1.0 / n_prompts);
        step_mem = scale(step_mem, 1.0 / n_prompts);
        Tensor loss = total_loss(step_token, step_mem);

        StepMetrics metrics;
        metrics.step = step;
        metrics.retention_rate = retention;
        metrics.loss_token = step_token.item();
        metrics.loss_mem = step_mem.item();
        double reward_sum = 0.0, peak_sum = 0.0;
        for (const auto& grp : groups)
            for (const auto& traj : grp.trajs) {
                reward_sum += traj.reward;
                peak_sum += static_cast<double>(traj.peak_entries_per_layer) * setup.model.n_layers;
            }
        metrics.mean_reward = reward_sum / (static_cast<double>(n_prompts) * G);
        metrics.mean_peak_cache = peak_sum / (static_cast<double>(n_prompts) * G);

        if (!std::isfinite(loss.item())) {
            history.halted = true;
            history.halt_reason = "non-finite loss at step " + std::to_string(step);
            history.steps.push_back(metrics);
            break;
        }

        params.zero_grad();
        loss.backward();
        try {
            metrics.grad_norm = optimizer_step(params, opt_state, setup.train);
        } catch (const std::runtime_error& e) {
            history.halted = true;
            history.halt_reason = e.what();
            history.steps.push_back(metrics);
            break;
        }
        history.steps.push_back(metrics);
    }
    return history;
}

}  // namespace ngc
