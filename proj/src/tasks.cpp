// SPDX-License-Identifier: Apache-2.0
#include "ngc/tasks.hpp"

#include <algorithm>

#include "ngc/common.hpp"

namespace ngc {

TaskKind task_from_string(const std::string& name) {
    if (name == "keyed-recall") return TaskKind::KeyedRecall;
    if (name == "copy-tail") return TaskKind::CopyTail;
    if (name == "micro-arith") return TaskKind::MicroArith;
    throw std::invalid_argument("unknown task: " + name);
}

std::string task_to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::KeyedRecall: return "keyed-recall";
        case TaskKind::CopyTail: return "copy-tail";
        case TaskKind::MicroArith: return "micro-arith";
    }
    throw std::invalid_argument("unknown task kind");
}

std::string Vocab::token_name(int id) const {
    if (id == bos()) return "<bos>";
    if (id == query()) return "<query>";
    if (id == delim()) return "<answer>";
    if (id == meta()) return "<meta>";
    if (id >= digit(0) && id <= digit(9)) return std::to_string(id - digit(0));
    if (id == dot()) return ".";
    if (id == percent()) return "%";
    if (id == plus()) return "+";
    if (id == minus()) return "-";
    if (id == times()) return "*";
    if (id == tag_open()) return "<eviction_rate>";
    if (id == tag_close()) return "</eviction_rate>";
    if (id >= filler(0) && id < key(0)) return "f" + std::to_string(id - filler(0));
    if (id >= key(0) && id < value(0)) return "k" + std::to_string(id - key(0));
    if (id >= value(0) && id < symbol(0)) return "v" + std::to_string(id - value(0));
    if (id >= symbol(0) && id < size()) return "s" + std::to_string(id - symbol(0));
    return "<unk" + std::to_string(id) + ">";
}

void TaskSpec::validate(const Vocab& vocab) const {
    switch (kind) {
        case TaskKind::KeyedRecall:
            NGC_CHECK_ARG(pairs >= 1 && pairs <= vocab.n_keys, "pairs must fit the key alphabet");
            NGC_CHECK_ARG(filler_len >= 0, "filler length must be nonnegative");
            break;
        case TaskKind::CopyTail:
            NGC_CHECK_ARG(body_len >= 1 && tail_len >= 1 && tail_len <= body_len,
                          "tail must fit inside the body");
            break;
        case TaskKind::MicroArith:
            NGC_CHECK_ARG(digit_range >= 1 && digit_range <= 9, "digit range must be in [1,9]");
            break;
    }
}

int TaskSpec::max_prompt_len(const Vocab& vocab) const {
    (void)vocab;
    switch (kind) {
        case TaskKind::KeyedRecall: return 1 + 4 + 2 * pairs + filler_len + 2;
        case TaskKind::CopyTail: return 1 + body_len + 1;
        case TaskKind::MicroArith: return 1 + 2 + 1 + 2 + 1;
    }
    return 0;
}

namespace {

std::vector<int> digits_of(int n, const Vocab& vocab) {
    NGC_CHECK_ARG(n >= 0, "negative operand");
    if (n == 0) return {vocab.digit(0)};
    std::vector<int> out;
    while (n > 0) {
        out.push_back(vocab.digit(n % 10));
        n /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

// Layout: bos, 4 lead filler, the pairs, `filler_len` trailing filler, query,
// queried key. The pairs sit past the first block but well before the recent
// window, so keeping them is a real retention decision rather than a side
// effect of sink or recency heuristics. Trailing filler mixes in value-class
// distractors (never the answer value), so token class alone does not reveal
// what is worth keeping.
Instance gen_keyed_recall(const TaskSpec& spec, const Vocab& vocab, CounterRng& rng) {
    Instance inst;
    inst.prompt.push_back(vocab.bos());
    for (int i = 0; i < 4; ++i)
        inst.prompt.push_back(vocab.filler(static_cast<int>(rng.next_below(vocab.n_filler))));
    // Distinct keys; values drawn with replacement.
    std::vector<int> key_ids(vocab.n_keys);
    for (int i = 0; i < vocab.n_keys; ++i) key_ids[i] = i;
    for (int i = 0; i < spec.pairs; ++i) {
        int j = i + static_cast<int>(rng.next_below(vocab.n_keys - i));
        std::swap(key_ids[i], key_ids[j]);
    }
    std::vector<int> value_ids(spec.pairs);
    std::vector<uint8_t> used(vocab.n_values, 0);
    for (int i = 0; i < spec.pairs; ++i) {
        value_ids[i] = static_cast<int>(rng.next_below(vocab.n_values));
        used[value_ids[i]] = 1;
        inst.prompt.push_back(vocab.key(key_ids[i]));
        inst.prompt.push_back(vocab.value(value_ids[i]));
    }
    std::vector<int> distractors;
    for (int v = 0; v < vocab.n_values; ++v)
        if (!used[v]) distractors.push_back(v);
    for (int i = 0; i < spec.filler_len; ++i) {
        if (!distractors.empty() && rng.next_below(2) == 0) {
            inst.prompt.push_back(
                vocab.value(distractors[rng.next_below(distractors.size())]));
        } else {
            inst.prompt.push_back(vocab.filler(static_cast<int>(rng.next_below(vocab.n_filler))));
        }
    }
    int q = static_cast<int>(rng.next_below(spec.pairs));
    inst.prompt.push_back(vocab.query());
    inst.prompt.push_back(vocab.key(key_ids[q]));
    inst.answer = {vocab.value(value_ids[q])};
    return inst;
}

Instance gen_copy_tail(const TaskSpec& spec, const Vocab& vocab, CounterRng& rng) {
    Instance inst;
    inst.prompt.push_back(vocab.bos());
    std::vector<int> body(spec.body_len);
    for (int i = 0; i < spec.body_len; ++i)
        body[i] = vocab.symbol(static_cast<int>(rng.next_below(vocab.n_symbols)));
    for (int t : body) inst.prompt.push_back(t);
    inst.prompt.push_back(vocab.query());
    inst.answer.assign(body.end() - spec.tail_len, body.end());
    return inst;
}

Instance gen_micro_arith(const TaskSpec& spec, const Vocab& vocab, CounterRng& rng) {
    Instance inst;
    int a = static_cast<int>(rng.next_below(spec.digit_range + 1));
    int b = static_cast<int>(rng.next_below(spec.digit_range + 1));
    int op = static_cast<int>(rng.next_below(3));
    if (op == 1 && a < b) std::swap(a, b);  // keep differences nonnegative
    int result = op == 0 ? a + b : (op == 1 ? a - b : a * b);
    inst.prompt.push_back(vocab.bos());
    for (int t : digits_of(a, vocab)) inst.prompt.push_back(t);
    inst.prompt.push_back(op == 0 ? vocab.plus() : (op == 1 ? vocab.minus() : vocab.times()));
    for (int t : digits_of(b, vocab)) inst.prompt.push_back(t);
    inst.prompt.push_back(vocab.query());
    inst.answer = digits_of(result, vocab);
    return inst;
}

}  // namespace

Instance generate_instance(const TaskSpec& spec, const Vocab& vocab, uint64_t stream,
                           long index) {
    spec.validate(vocab);
    CounterRng rng(spec.seed, 0x7a5cULL ^ stream, static_cast<uint64_t>(index));
    switch (spec.kind) {
        case TaskKind::KeyedRecall: return gen_keyed_recall(spec, vocab, rng);
        case TaskKind::CopyTail: return gen_copy_tail(spec, vocab, rng);
        case TaskKind::MicroArith: return gen_micro_arith(spec, vocab, rng);
    }
    throw std::invalid_argument("unknown task kind");
}

std::vector<Instance> generate_instances(const TaskSpec& spec, const Vocab& vocab,
                                         uint64_t stream, long count) {
    std::vector<Instance> out;
    out.reserve(count);
    for (long i = 0; i < count; ++i) out.push_back(generate_instance(spec, vocab, stream, i));
    return out;
}

double verify(const Instance& instance, const std::vector<int>& completion, const Vocab& vocab) {
    const int delim = vocab.delim();
    for (size_t i = 0; i < completion.size(); ++i) {
        if (completion[i] != delim) continue;
        if (i + 1 + instance.answer.size() > completion.size()) return 0.0;  // truncated
        for (size_t j = 0; j < instance.answer.size(); ++j)
            if (completion[i + 1 + j] != instance.answer[j]) return 0.0;
        return 1.0;
    }
    return 0.0;
}

std::vector<int> tag_tokens(const Vocab& vocab, double rho_percent) {
    NGC_CHECK_ARG(rho_percent >= 0.0 && rho_percent <= 100.0, "rate percent out of range");
    std::vector<int> out;
    out.push_back(vocab.tag_open());
    for (char c : shortest_decimal(rho_percent)) {
        if (c == '.') {
            out.push_back(vocab.dot());
        } else {
            NGC_CHECK_STATE(c >= '0' && c <= '9', "unexpected character in rate rendering");
            out.push_back(vocab.digit(c - '0'));
        }
    }
    out.push_back(vocab.percent());
    out.push_back(vocab.tag_close());
    return out;
}

}  // namespace ngc
