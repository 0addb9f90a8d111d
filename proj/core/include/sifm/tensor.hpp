#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sifm/errors.hpp"

namespace sifm {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename S>
class Tape;

// Dense row-major tensor with shared storage. Copying a Tensor copies the
// handle, not the buffer. Gradients live beside the values and are only
// materialized for tensors marked requires_grad (after a published backward
// pass, or grad_mut()/zero_grad()).
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<S> values);

  static Tensor scalar(S value) { return Tensor({1}, {value}); }
  static Tensor full(Shape shape, S value);

  bool defined() const { return static_cast<bool>(rec_); }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t extent(int axis) const;
  std::int64_t size() const;

  std::span<const S> values() const;
  std::span<S> values_mut();
  S item() const;

  Tensor& set_requires_grad(bool on = true);
  bool requires_grad() const;

  // Accumulated gradient. Empty until a backward pass published into this
  // tensor; backward *adds*, callers zero between optimizer steps.
  std::span<const S> grad() const;
  std::span<S> grad_mut();
  void zero_grad();
  bool has_grad() const;

  // Identity of the underlying buffer (aliasing checks in tests).
  const void* data_id() const { return rec_.get(); }

 private:
  friend class Tape<S>;
  struct Rec {
    Shape shape;
    std::vector<S> values;
    std::vector<S> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Rec> rec_;

  void require_defined(const char* what) const;
};

// Records one forward pass for reverse-mode differentiation. Create a Tape,
// run tensor ops while it is in scope (it becomes the active tape for this
// thread), then call backward(loss) exactly once; the tape is consumed.
//
// Gradient buffers of interior nodes are freed progressively as the reverse
// sweep passes them, along with the captured activations, so peak memory
// tracks the live frontier rather than the whole graph.
//
// All bookkeeping is tape-local: several threads may run forward/backward
// concurrently over *shared* parameter tensors as long as each uses its own
// tape and publishes gradients in a deterministic order (publish=false +
// Tape::gradient(), as the trainer does), or from a single thread.
template <typename S>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();  // innermost tape of this thread, or nullptr

  // --- recording interface (used by ops) --------------------------------
  // True if any input is differentiable from this tape's point of view:
  // requires_grad, or produced by an op already recorded here.
  bool should_record(std::initializer_list<const Tensor<S>*> inputs) const;
  bool wants_grad(const Tensor<S>& t) const;
  std::int32_t track(const Tensor<S>& t);         // register, return slot id
  std::int32_t track_output(const Tensor<S>& t);  // same, marked as op output
  // The backward fn reads grad_of(output slot) and accumulates into
  // grad_buffer(input slot) for each differentiable input.
  void record(std::int32_t output_slot, std::function<void(Tape&)> backward);

  std::span<const S> grad_of(std::int32_t slot) const;
  std::vector<S>& grad_buffer(std::int32_t slot);

  // --- differentiation ---------------------------------------------------
  // Reverse sweep from a scalar loss produced on this tape. publish=true
  // adds leaf gradients into Tensor::grad(); publish=false leaves them in
  // the tape, readable via gradient().
  void backward(const Tensor<S>& loss, bool publish = true);
  std::span<const S> gradient(const Tensor<S>& t) const;
  // True if t ever entered this tape; a leaf that never participated in a
  // recorded op has an (implicitly zero) gradient but no slot.
  bool tracked(const Tensor<S>& t) const { return find_slot(t) >= 0; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t tracked_count() const { return tracked_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::int32_t output = -1;
    std::function<void(Tape&)> backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<typename Tensor<S>::Rec>> tracked_;
  std::unordered_map<const void*, std::int32_t> slot_of_;
  std::vector<char> produced_;         // per slot
  std::vector<std::vector<S>> grads_;  // per slot, upstream accumulation
  bool consumed_ = false;
  Tape* outer_ = nullptr;

  std::int32_t find_slot(const Tensor<S>& t) const;  // -1 if untracked
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace sifm
