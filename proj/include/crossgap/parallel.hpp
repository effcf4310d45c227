#ifndef CROSSGAP_PARALLEL_HPP
#define CROSSGAP_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace crossgap {

// Runs fn over [0, n) split into contiguous chunks, one per worker thread.
// fn(begin, end) must be safe to run concurrently on disjoint ranges.
// Thread count: CROSSGAP_THREADS env var, else hardware concurrency.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace crossgap

#endif
