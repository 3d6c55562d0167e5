// SPDX-License-Identifier: Apache-2.0
#include "ngc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ngc/common.hpp"

namespace ngc {

double pass_at_k(int n, int c, int k) {
    NGC_CHECK_ARG(n >= 1 && k >= 1 && k <= n, "pass@k requires 1 <= k <= n");
    NGC_CHECK_ARG(c >= 0 && c <= n, "correct count out of range");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    // 1 - prod_{i=0}^{k-1} (n-c-i)/(n-i)
    double prod = 1.0;
    for (int i = 0; i < k; ++i)
        prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - prod;
}

double avg_peak_reduction(const std::vector<long>& prompt_lens,
                          const std::vector<long>& baseline_completions,
                          const std::vector<long>& method_completions, double eviction_rate,
                          int cadence, int block_size, int n_layers) {
    NGC_CHECK_ARG(!prompt_lens.empty(), "no prompts to average over");
    NGC_CHECK_ARG(prompt_lens.size() == baseline_completions.size() &&
                      prompt_lens.size() == method_completions.size(),
                  "per-prompt lengths must be paired");
    double sum = 0.0;
    for (size_t i = 0; i < prompt_lens.size(); ++i) {
        long base = peak_occupancy(prompt_lens[i], baseline_completions[i], 0.0, cadence,
                                   block_size, n_layers);
        long method = peak_occupancy(prompt_lens[i], method_completions[i], eviction_rate,
                                     cadence, block_size, n_layers);
        sum += static_cast<double>(base) / static_cast<double>(method);
    }
    return sum / static_cast<double>(prompt_lens.size());
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const EvictionConfig& evict, const TaskSpec& task, const Vocab& vocab,
                    const EvalOptions& opt) {
    NGC_CHECK_ARG(opt.n_instances >= 1 && opt.n_samples >= 1, "empty evaluation request");
    for (int k : opt.pass_at_ks)
        NGC_CHECK_ARG(k >= 1 && k <= opt.n_samples, "pass@k needs k <= samples");

    std::vector<Instance> instances =
        generate_instances(task, vocab, opt.instance_stream, opt.n_instances);

    // Paired no-eviction lengths for the reduction numerator. The token draw
    // stream matches each method row's sample 0, so an eviction-rate-0 row
    // reproduces these completions exactly and its reduction is exactly 1.
    std::vector<long> prompt_lens(opt.n_instances), base_lens(opt.n_instances);
    parallel_for(opt.n_instances, opt.n_threads, [&](long i) {
        RolloutOptions ro;
        ro.eviction_rate = 0.0;
        ro.temperature = opt.temperature;
        ro.max_new_tokens = cfg.max_seq - static_cast<int>(instances[i].prompt.size()) - 1;
        ro.max_new_tokens = std::min(ro.max_new_tokens, 4 * evict.cadence);
        ro.stop_delimiter = vocab.delim();
        ro.stop_answer_len = static_cast<int>(instances[i].answer.size());
        ro.seed = opt.seed;
        ro.traj_id = ((i + 1) << 20);
        Trajectory t = run_rollout(params, cfg, evict, instances[i].prompt, ro);
        prompt_lens[i] = instances[i].prompt.size();
        base_lens[i] = t.completion_len();
    });

    EvalReport report;
    for (ScorerKind scorer : opt.scorers) {
        for (double eps : opt.eps_grid) {
            std::vector<int> correct(opt.n_instances, 0);
            std::vector<long> method_lens(opt.n_instances, 0);
            parallel_for(opt.n_instances, opt.n_threads, [&](long i) {
                std::vector<int> prompt = instances[i].prompt;
                if (opt.interoception_tags) {
                    auto tag = tag_tokens(vocab, eps * 100.0);
                    prompt.insert(prompt.end(), tag.begin(), tag.end());
                }
                for (int s = 0; s < opt.n_samples; ++s) {
                    RolloutOptions ro;
                    ro.policy.kind = scorer;
                    ro.policy.greedy = true;  // greedy top-k at evaluation
                    ro.eviction_rate = eps;
                    ro.temperature = opt.temperature;
                    ro.max_new_tokens =
                        std::min(cfg.max_seq - static_cast<int>(prompt.size()) - 1,
                                 4 * evict.cadence);
                    ro.stop_delimiter = vocab.delim();
                    ro.stop_answer_len = static_cast<int>(instances[i].answer.size());
                    ro.seed = opt.seed;
                    ro.traj_id = ((i + 1) << 20) + s;
                    Trajectory t = run_rollout(params, cfg, evict, prompt, ro);
                    std::vector<int> completion(t.tokens.begin() + t.prompt_len, t.tokens.end());
                    double r = verify(instances[i], completion, vocab);
                    if (r > 0.5) correct[i] += 1;
                    if (s == 0) method_lens[i] = t.completion_len();
                }
            });
            EvalRow row;
            row.scorer = scorer_to_string(scorer);
            row.eviction_rate = eps;
            double acc_sum = 0.0, acc_sq = 0.0;
            for (long i = 0; i < opt.n_instances; ++i) {
                double a = static_cast<double>(correct[i]) / opt.n_samples;
                acc_sum += a;
                acc_sq += a * a;
            }
            row.accuracy = acc_sum / opt.n_instances;
            double var = acc_sq / opt.n_instances - row.accuracy * row.accuracy;
            row.stderr_ = std::sqrt(std::max(0.0, var) / opt.n_instances);
            for (int k : opt.pass_at_ks) {
                double sum = 0.0;
                for (long i = 0; i < opt.n_instances; ++i)
                    sum += pass_at_k(opt.n_samples, correct[i], k);
                row.pass_at.emplace_back(k, sum / opt.n_instances);
            }
            row.avg_peak_reduction = avg_peak_reduction(
                prompt_lens, base_lens, method_lens, eps, evict.cadence, evict.block_size,
                cfg.n_layers);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

// --- experiment configuration ---------------------------------------------------

void ExperimentConfig::validate() const {
    model.validate();
    eviction.validate();
    curriculum.validate();
    train.validate();
    task.validate(vocab);
    NGC_CHECK_ARG(model.vocab == vocab.size(), "model vocab must match the task vocab");
    NGC_CHECK_ARG(threads >= 1, "threads must be >= 1");
    NGC_CHECK_ARG(train_steps >= 1, "train steps must be >= 1");
    NGC_CHECK_ARG(min_length_rounds >= 1, "min length rounds must be >= 1");
    NGC_CHECK_ARG(min_length_margin >= 0, "min length margin must be >= 0");
    int prompt_cap = task.max_prompt_len(vocab);
    if (train.interoception) {
        size_t tag_max = 0;
        for (double level : curriculum.levels)
            tag_max = std::max(tag_max, tag_tokens(vocab, (1.0 - level) * 100.0).size());
        prompt_cap += static_cast<int>(tag_max);
    }
    NGC_CHECK_ARG(prompt_cap < eviction.cadence,
                  "prompts must stay shorter than the eviction cadence");
    NGC_CHECK_ARG(model.max_seq >= eviction.cadence, "max_seq must cover the cadence");
    for (double e : eval.eps_grid)
        NGC_CHECK_ARG(e >= 0.0 && e <= 1.0, "eval eviction rates must be in [0,1]");
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("unknown config key: " + section + "." + it.key());
    }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig cfg;
    reject_unknown(j, {"run_id", "output_dir", "seed", "threads", "model", "eviction",
                       "curriculum", "train", "task", "eval"},
                   "<root>");
    maybe(j, "run_id", cfg.run_id);
    maybe(j, "output_dir", cfg.output_dir);
    maybe(j, "seed", cfg.seed);
    maybe(j, "threads", cfg.threads);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"n_layers", "n_heads", "d_model", "max_seq", "rope_base"}, "model");
        maybe(m, "n_layers", cfg.model.n_layers);
        maybe(m, "n_heads", cfg.model.n_heads);
        maybe(m, "d_model", cfg.model.d_model);
        maybe(m, "max_seq", cfg.model.max_seq);
        maybe(m, "rope_base", cfg.model.rope_base);
    }
    if (j.contains("eviction")) {
        const auto& e = j.at("eviction");
        reject_unknown(e, {"cadence", "block_size", "score_window"}, "eviction");
        maybe(e, "cadence", cfg.eviction.cadence);
        maybe(e, "block_size", cfg.eviction.block_size);
        maybe(e, "score_window", cfg.eviction.score_window);
    }
    if (j.contains("curriculum")) {
        const auto& c = j.at("curriculum");
        reject_unknown(c, {"levels", "steps_per_stage", "blend_fraction"}, "curriculum");
        maybe(c, "levels", cfg.curriculum.levels);
        maybe(c, "steps_per_stage", cfg.curriculum.steps_per_stage);
        maybe(c, "blend_fraction", cfg.curriculum.blend_fraction);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t,
                       {"lr", "beta1", "beta2", "adam_eps", "weight_decay", "grad_clip", "steps",
                        "group_size", "prompts_per_step", "temperature", "max_new_tokens",
                        "min_length_rounds", "min_length_margin", "mode", "interoception",
                        "meta_tokens", "warmup_steps", "warmup_lr", "warmup_batch"},
                       "train");
        maybe(t, "lr", cfg.train.lr);
        maybe(t, "beta1", cfg.train.beta1);
        maybe(t, "beta2", cfg.train.beta2);
        maybe(t, "adam_eps", cfg.train.adam_eps);
        maybe(t, "weight_decay", cfg.train.weight_decay);
        maybe(t, "grad_clip", cfg.train.grad_clip);
        maybe(t, "steps", cfg.train_steps);
        maybe(t, "group_size", cfg.train.group_size);
        maybe(t, "prompts_per_step", cfg.train.prompts_per_step);
        maybe(t, "temperature", cfg.train.temperature);
        maybe(t, "max_new_tokens", cfg.train.max_new_tokens);
        maybe(t, "min_length_rounds", cfg.min_length_rounds);
        maybe(t, "min_length_margin", cfg.min_length_margin);
        maybe(t, "interoception", cfg.train.interoception);
        maybe(t, "meta_tokens", cfg.train.meta_tokens);
        maybe(t, "warmup_steps", cfg.warmup.steps);
        maybe(t, "warmup_lr", cfg.warmup.lr);
        maybe(t, "warmup_batch", cfg.warmup.batch);
        if (t.contains("mode")) cfg.mode = train_mode_from_string(t.at("mode").get<std::string>());
    }
    if (j.contains("task")) {
        const auto& t = j.at("task");
        reject_unknown(t, {"kind", "pairs", "filler_len", "tail_len", "body_len", "digit_range",
                           "seed"},
                       "task");
        if (t.contains("kind")) cfg.task.kind = task_from_string(t.at("kind").get<std::string>());
        maybe(t, "pairs", cfg.task.pairs);
        maybe(t, "filler_len", cfg.task.filler_len);
        maybe(t, "tail_len", cfg.task.tail_len);
        maybe(t, "body_len", cfg.task.body_len);
        maybe(t, "digit_range", cfg.task.digit_range);
        maybe(t, "seed", cfg.task.seed);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"instances", "samples", "pass_at", "eps_grid", "temperature",
                           "scorers", "interoception_tags"},
                       "eval");
        maybe(e, "instances", cfg.eval.n_instances);
        maybe(e, "samples", cfg.eval.n_samples);
        maybe(e, "pass_at", cfg.eval.pass_at_ks);
        maybe(e, "eps_grid", cfg.eval.eps_grid);
        maybe(e, "temperature", cfg.eval.temperature);
        maybe(e, "interoception_tags", cfg.eval.interoception_tags);
        if (e.contains("scorers")) {
            cfg.eval.scorers.clear();
            for (const auto& s : e.at("scorers"))
                cfg.eval.scorers.push_back(scorer_from_string(s.get<std::string>()));
        }
    }

    if (const char* env_seed = std::getenv("NGC_SEED")) {
        cfg.seed = std::strtoull(env_seed, nullptr, 10);
    }
    cfg.model.seed = cfg.seed;
    cfg.task.seed = cfg.seed;
    cfg.model.vocab = cfg.vocab.size();
    cfg.eviction.n_layers = cfg.model.n_layers;
    cfg.train.n_threads = cfg.threads;
    cfg.train.min_length_threshold =
        static_cast<long>(cfg.min_length_rounds) * cfg.eviction.cadence + cfg.min_length_margin;
    cfg.warmup.seed = cfg.seed;
    // Warm-up format transcripts carry a junk run matching the timing the
    // reward will demand (tag tokens, when enabled, consume part of the run).
    int prompt_footprint = cfg.task.max_prompt_len(cfg.vocab);
    if (cfg.train.interoception) prompt_footprint += 5;  // typical tag length
    int run_target =
        static_cast<int>(cfg.train.min_length_threshold) - prompt_footprint - 1;
    cfg.warmup.junk_min = std::max(1, run_target - 3);
    cfg.warmup.junk_max = std::max(cfg.warmup.junk_min, run_target + 4);
    cfg.eval.n_threads = cfg.threads;
    cfg.eval.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    NGC_CHECK_STATE(is.good(), "cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return experiment_config_from_json_text(ss.str());
}

// --- reports ---------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "step,mean_reward,grad_norm,retention_rate,mean_peak_cache,loss_token,loss_mem\n";
    for (const auto& s : history.steps) {
        os << s.step << "," << fmt(s.mean_reward) << "," << fmt(s.grad_norm) << ","
           << fmt(s.retention_rate) << "," << fmt(s.mean_peak_cache) << "," << fmt(s.loss_token)
           << "," << fmt(s.loss_mem) << "\n";
    }
    return os.str();
}

std::string eval_csv(const EvalReport& report) {
    std::ostringstream os;
    std::vector<int> ks;
    for (const auto& row : report.rows)
        for (const auto& [k, v] : row.pass_at)
            if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    std::sort(ks.begin(), ks.end());
    os << "scorer,eviction_rate,accuracy,stderr,avg_peak_reduction";
    for (int k : ks) os << ",pass_at_" << k;
    os << "\n";
    for (const auto& row : report.rows) {
        os << row.scorer << "," << fmt(row.eviction_rate) << "," << fmt(row.accuracy) << ","
           << fmt(row.stderr_) << "," << fmt(row.avg_peak_reduction);
        for (int k : ks) {
            double v = 0.0;
            bool found = false;
            for (const auto& [kk, vv] : row.pass_at)
                if (kk == k) {
                    v = vv;
                    found = true;
                }
            os << ",";
            if (found) os << fmt(v);
        }
        os << "\n";
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(path, std::ios::binary);
    NGC_CHECK_STATE(os.good(), "cannot open for writing: " + path);
    os << content;
    NGC_CHECK_STATE(os.good(), "write failed: " + path);
}

// --- svg -------------------------------------------------------------------------

namespace {

constexpr int kW = 640, kH = 360, kPad = 50;
const char* kPalette[] = {"#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2"};

struct Range {
    double lo, hi;
    double map(double v, double a, double b) const {
        double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        return a + t * (b - a);
    }
};

Range span(const std::vector<double>& vs) {
    Range r{0.0, 1.0};
    if (!vs.empty()) {
        r.lo = *std::min_element(vs.begin(), vs.end());
        r.hi = *std::max_element(vs.begin(), vs.end());
        if (r.hi == r.lo) {
            r.lo -= 1.0;
            r.hi += 1.0;
        }
    }
    return r;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<double>& xs,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    std::vector<double> all_y;
    for (const auto& [name, ys] : series) all_y.insert(all_y.end(), ys.begin(), ys.end());
    Range rx = span(xs), ry = span(all_y);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
       << kH - kPad << "' stroke='black'/>\n";
    os << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='" << kH - kPad
       << "' stroke='black'/>\n";
    os << "<text x='" << kPad << "' y='" << kH - kPad + 16 << "' font-size='10'>"
       << shortest_decimal(rx.lo) << "</text>\n";
    os << "<text x='" << kW - kPad << "' y='" << kH - kPad + 16
       << "' text-anchor='end' font-size='10'>" << shortest_decimal(rx.hi) << "</text>\n";
    os << "<text x='" << kPad - 4 << "' y='" << kH - kPad << "' text-anchor='end' font-size='10'>"
       << shortest_decimal(ry.lo) << "</text>\n";
    os << "<text x='" << kPad - 4 << "' y='" << kPad + 4 << "' text-anchor='end' font-size='10'>"
       << shortest_decimal(ry.hi) << "</text>\n";
    for (size_t s = 0; s < series.size(); ++s) {
        const auto& ys = series[s].second;
        os << "<polyline fill='none' stroke='" << kPalette[s % 6] << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
            double px = rx.map(xs[i], kPad, kW - kPad);
            double py = ry.map(ys[i], kH - kPad, kPad);
            os << px << "," << py << " ";
        }
        os << "'/>\n";
        os << "<text x='" << kW - kPad + 4 << "' y='" << kPad + 14 * s << "' font-size='10' fill='"
           << kPalette[s % 6] << "'>" << series[s].first << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
    Range ry = span(values);
    ry.lo = std::min(0.0, ry.lo);
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    const int n = static_cast<int>(values.size());
    double slot = static_cast<double>(kW - 2 * kPad) / std::max(1, n);
    for (int i = 0; i < n; ++i) {
        double x = kPad + i * slot + slot * 0.15;
        double y = ry.map(values[i], kH - kPad, kPad);
        os << "<rect x='" << x << "' y='" << y << "' width='" << slot * 0.7 << "' height='"
           << (kH - kPad - y) << "' fill='" << kPalette[i % 6] << "'/>\n";
        os << "<text x='" << x + slot * 0.35 << "' y='" << kH - kPad + 14
           << "' text-anchor='middle' font-size='9'>" << labels[i] << "</text>\n";
        os << "<text x='" << x + slot * 0.35 << "' y='" << y - 4
           << "' text-anchor='middle' font-size='9'>" << shortest_decimal(values[i]) << "</text>\n";
    }
    os << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
       << kH - kPad << "' stroke='black'/>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace ngc
