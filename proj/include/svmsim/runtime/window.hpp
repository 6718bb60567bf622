#pragma once

// Prefetch window of one helper for one worker: iteration p is prefetched
// only while w + d <= p <= w + D, where w is the worker's progress word.

#include <optional>

#include "svmsim/runtime/interpreter.hpp"

namespace svmsim::rt {

struct Window {
  Word d = 2;
  Word D = 8;
};

/// Decides the next iteration to prefetch. `p` is the helper's position,
/// `w` the last published progress (unset before the worker's first
/// iteration, treated as chunk_begin - d). A lagging p jumps to w + d.
/// Returns the iteration to run now, if any; the caller advances p past it.
inline std::optional<Word> window_step(Word& p, std::optional<Word> w, Word chunk_begin, Word end, Window win) {
  const Word wk = w ? *w : chunk_begin - win.d;
  if (p < wk + win.d) p = wk + win.d;
  if (p > wk + win.D || p >= end) return std::nullopt;
  return p;
}

}  // namespace svmsim::rt
