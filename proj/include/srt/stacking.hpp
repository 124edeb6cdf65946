#pragma once

#include <utility>

#include "srt/model.hpp"

namespace srt {

// Composing two constant-leaf trees into one deeper tree whose hard-routed
// prediction is exactly the product (or sum) of the two trees' predictions.
// The stacked tree keeps T1's gates on the top D1 levels and hangs an
// identical copy of T2's gates under every T1 leaf; its leaf constants
// combine the corresponding T1/T2 leaf constants.

// Maps a stacked-tree leaf ordinal (1-based, left to right, in [1, 2^(D1+D2)])
// to the pair of source-leaf ordinals it represents.
std::pair<int, int> leaf_label_pair(int leaf_ordinal, int depth1, int depth2);

// Product stack: predict(stack, x) == predict(t1, x) * predict(t2, x).
// Both inputs must have constant leaves (beta_j = 0 for j >= 1) and matching
// mu and feature count.
SrtModel stack_product(const SrtModel& t1, const SrtModel& t2);

// Sum stack: predict(stack, x) == predict(t1, x) + predict(t2, x).
SrtModel stack_sum(const SrtModel& t1, const SrtModel& t2);

} // namespace srt
