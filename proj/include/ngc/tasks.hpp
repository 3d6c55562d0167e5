// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ngc/rng.hpp"

namespace ngc {

enum class TaskKind { KeyedRecall, CopyTail, MicroArith };

TaskKind task_from_string(const std::string& name);
std::string task_to_string(TaskKind kind);

// Shared toy vocabulary. Fixed layout so token ids are stable across runs:
// control tokens, digits and punctuation (shared with rate tags), filler,
// keys, values, symbols.
struct Vocab {
    int n_filler = 2;
    int n_keys = 6;
    int n_values = 6;
    int n_symbols = 4;

    int bos() const { return 0; }
    int query() const { return 1; }
    int delim() const { return 2; }
    int meta() const { return 3; }
    int digit(int d) const { return 4 + d; }  // 0..9
    int dot() const { return 14; }
    int percent() const { return 15; }
    int plus() const { return 16; }
    int minus() const { return 17; }
    int times() const { return 18; }
    int tag_open() const { return 19; }   // "<eviction_rate>"
    int tag_close() const { return 20; }  // "</eviction_rate>"
    int filler(int i) const { return 21 + i; }
    int key(int i) const { return 21 + n_filler + i; }
    int value(int i) const { return 21 + n_filler + n_keys + i; }
    int symbol(int i) const { return 21 + n_filler + n_keys + n_values + i; }
    int size() const { return 21 + n_filler + n_keys + n_values + n_symbols; }

    std::string token_name(int id) const;
};

struct TaskSpec {
    TaskKind kind = TaskKind::KeyedRecall;
    int pairs = 3;        // keyed-recall: (key, value) pairs per instance
    int filler_len = 3;   // keyed-recall: leading filler run
    int tail_len = 2;     // copy-tail: tokens to echo
    int body_len = 8;     // copy-tail: symbol run length
    int digit_range = 9;  // micro-arith: operands in [0, digit_range]
    uint64_t seed = 0;

    void validate(const Vocab& vocab) const;
    // Largest prompt this spec can emit (tag tokens excluded).
    int max_prompt_len(const Vocab& vocab) const;
};

// One problem: prompt token ids plus the unique answer span that must follow
// the first delimiter.
struct Instance {
    std::vector<int> prompt;
    std::vector<int> answer;
};

Instance generate_instance(const TaskSpec& spec, const Vocab& vocab, uint64_t stream,
                           long index);
std::vector<Instance> generate_instances(const TaskSpec& spec, const Vocab& vocab,
                                         uint64_t stream, long count);

// Exact match on the answer span right after the first delimiter; anything
// else (missing delimiter, truncation, wrong span) scores 0.
double verify(const Instance& instance, const std::vector<int>& completion, const Vocab& vocab);

// Token form of the budget tag appended to prompts in interoception mode:
// open tag, the rate's digits (shared with the arithmetic digits), '%', close.
std::vector<int> tag_tokens(const Vocab& vocab, double rho_percent);

}  // namespace ngc
