#pragma once

#include <cstddef>
#include <functional>

namespace blockcov {

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results into slot i so the outcome
/// does not depend on scheduling. If any call throws, the exception of the
/// smallest failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace blockcov
