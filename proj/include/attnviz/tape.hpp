#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "attnviz/errors.hpp"
#include "attnviz/tensor.hpp"

namespace attnviz {

namespace detail {
inline std::uint64_t next_tape_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Reverse-mode recording tape. Ops append nodes in execution order; backward
// replays them exactly once, in reverse, then clears the tape. One tape is
// active per thread at a time (Scope), and a tape only ever holds tensors of
// its own scalar type, so a single precision mode governs a whole recording.
//
// A tensor's (node, epoch) pair marks its position on the current generation;
// generations are globally unique, so stale ids from cleared tapes can never
// be mistaken for live ones.
template <class S>
class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<std::int64_t> inputs;
    std::int64_t output;
    std::function<void()> backward;  // empty for leaves
  };

  Tape() : generation_(detail::next_tape_generation()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_) { active_ = &t; }
    ~Scope() { active_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active() { return active_; }

  bool holds(const Tensor<S>& t) const {
    return t.defined() && t.meta().epoch == generation_ && t.meta().node >= 0;
  }

  // Registers a gradient-tracking tensor that was created off-tape (a
  // parameter, typically) as a leaf of the current generation.
  std::int64_t ensure_leaf(const Tensor<S>& t) {
    if (holds(t)) return t.meta().node;
    std::int64_t id = static_cast<std::int64_t>(nodes_.size());
    t.meta().node = id;
    t.meta().epoch = generation_;
    nodes_.push_back(Node{"leaf", {}, id, {}});
    return id;
  }

  // Appends one op node. Inputs that do not track gradients are skipped;
  // tracked inputs recorded earlier keep their ids, so input ids always
  // precede the new output id.
  void record(const char* op, const std::vector<const Tensor<S>*>& inputs,
              const Tensor<S>& output, std::function<void()> backward) {
    std::vector<std::int64_t> in_ids;
    for (const Tensor<S>* in : inputs)
      if (in->requires_grad()) in_ids.push_back(ensure_leaf(*in));
    std::int64_t out_id = static_cast<std::int64_t>(nodes_.size());
    output.meta().node = out_id;
    output.meta().epoch = generation_;
    nodes_.push_back(Node{op, std::move(in_ids), out_id, std::move(backward)});
  }

  void record(const char* op, std::initializer_list<const Tensor<S>*> inputs,
              const Tensor<S>& output, std::function<void()> backward) {
    record(op, std::vector<const Tensor<S>*>(inputs), output, std::move(backward));
  }

  // Seeds d(loss)/d(loss) = 1, sweeps all recorded nodes once in reverse
  // order, accumulating into every tracked tensor's grad, then clears.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw UsageError("backward: loss must be a scalar, got shape " +
                       shape_str(loss.shape()));
    if (!holds(loss))
      throw UsageError("backward: loss is not recorded on the active tape");
    loss.grad()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (it->backward) it->backward();
    clear();
  }

  void clear() {
    nodes_.clear();
    generation_ = detail::next_tape_generation();
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::uint64_t generation() const { return generation_; }

 private:
  std::vector<Node> nodes_;
  std::uint64_t generation_;
  static thread_local Tape* active_;
};

template <class S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

// Spec-level entry point: backpropagate from `loss` through the active tape.
template <class S>
void backward(const Tensor<S>& loss) {
  Tape<S>* tape = Tape<S>::active();
  if (!tape) throw UsageError("backward: no active tape");
  tape->backward(loss);
}

}  // namespace attnviz
