#include "sifm/tensor.hpp"

namespace sifm {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) {
    if (e <= 0) throw DimensionError("shape " + shape_str(shape) + " has a non-positive extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

namespace {
template <typename S>
thread_local Tape<S>* g_active_tape = nullptr;
}  // namespace

// ---------------------------------------------------------------- Tensor

template <typename S>
Tensor<S>::Tensor(Shape shape) {
  std::int64_t n = shape_size(shape);
  rec_ = std::make_shared<Rec>();
  rec_->shape = std::move(shape);
  rec_->values.assign(static_cast<std::size_t>(n), S(0));
}

template <typename S>
Tensor<S>::Tensor(Shape shape, std::vector<S> values) {
  std::int64_t n = shape_size(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("tensor init: shape " + shape_str(shape) + " wants " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  }
  rec_ = std::make_shared<Rec>();
  rec_->shape = std::move(shape);
  rec_->values = std::move(values);
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value) {
  Tensor t(std::move(shape));
  for (S& v : t.rec_->values) v = value;
  return t;
}

template <typename S>
void Tensor<S>::require_defined(const char* what) const {
  if (!rec_) throw ContractError(std::string(what) + " on a default-constructed tensor");
}

template <typename S>
const Shape& Tensor<S>::shape() const {
  require_defined("shape()");
  return rec_->shape;
}

template <typename S>
std::int64_t Tensor<S>::extent(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw RangeError("extent(" + std::to_string(axis) + ") on rank-" + std::to_string(s.size()) +
                     " tensor " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

template <typename S>
std::int64_t Tensor<S>::size() const {
  require_defined("size()");
  return static_cast<std::int64_t>(rec_->values.size());
}

template <typename S>
std::span<const S> Tensor<S>::values() const {
  require_defined("values()");
  return rec_->values;
}

template <typename S>
std::span<S> Tensor<S>::values_mut() {
  require_defined("values_mut()");
  return rec_->values;
}

template <typename S>
S Tensor<S>::item() const {
  require_defined("item()");
  if (rec_->values.size() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape_str(rec_->shape));
  }
  return rec_->values[0];
}

template <typename S>
Tensor<S>& Tensor<S>::set_requires_grad(bool on) {
  require_defined("set_requires_grad()");
  rec_->requires_grad = on;
  return *this;
}

template <typename S>
bool Tensor<S>::requires_grad() const {
  return rec_ && rec_->requires_grad;
}

template <typename S>
std::span<const S> Tensor<S>::grad() const {
  require_defined("grad()");
  return rec_->grad;
}

template <typename S>
std::span<S> Tensor<S>::grad_mut() {
  require_defined("grad_mut()");
  if (rec_->grad.empty()) rec_->grad.assign(rec_->values.size(), S(0));
  return rec_->grad;
}

template <typename S>
void Tensor<S>::zero_grad() {
  require_defined("zero_grad()");
  rec_->grad.assign(rec_->values.size(), S(0));
}

template <typename S>
bool Tensor<S>::has_grad() const {
  return rec_ && !rec_->grad.empty();
}

// ------------------------------------------------------------------ Tape

template <typename S>
Tape<S>::Tape() {
  outer_ = g_active_tape<S>;
  g_active_tape<S> = this;
}

template <typename S>
Tape<S>::~Tape() {
  if (g_active_tape<S> == this) {
    g_active_tape<S> = outer_;
  } else {
    // Tapes should unwind LIFO; repair the stack rather than crash if not.
    Tape** p = &g_active_tape<S>;
    while (*p && *p != this) p = &(*p)->outer_;
    if (*p) *p = outer_;
  }
}

template <typename S>
Tape<S>* Tape<S>::active() {
  return g_active_tape<S>;
}

template <typename S>
std::int32_t Tape<S>::find_slot(const Tensor<S>& t) const {
  if (!t.rec_) return -1;
  auto it = slot_of_.find(t.rec_.get());
  return it == slot_of_.end() ? -1 : it->second;
}

template <typename S>
bool Tape<S>::wants_grad(const Tensor<S>& t) const {
  if (!t.rec_) return false;
  if (t.rec_->requires_grad) return true;
  std::int32_t slot = find_slot(t);
  return slot >= 0 && produced_[static_cast<std::size_t>(slot)];
}

template <typename S>
bool Tape<S>::should_record(std::initializer_list<const Tensor<S>*> inputs) const {
  if (consumed_) return false;
  for (const Tensor<S>* t : inputs) {
    if (t && wants_grad(*t)) return true;
  }
  return false;
}

template <typename S>
std::int32_t Tape<S>::track(const Tensor<S>& t) {
  if (!t.rec_) throw ContractError("tracking a default-constructed tensor");
  if (consumed_) throw ContractError("tracking on a consumed tape");
  std::int32_t slot = find_slot(t);
  if (slot >= 0) return slot;
  slot = static_cast<std::int32_t>(tracked_.size());
  tracked_.push_back(t.rec_);
  produced_.push_back(0);
  slot_of_.emplace(t.rec_.get(), slot);
  return slot;
}

template <typename S>
std::int32_t Tape<S>::track_output(const Tensor<S>& t) {
  std::int32_t slot = track(t);
  produced_[static_cast<std::size_t>(slot)] = 1;
  return slot;
}

template <typename S>
void Tape<S>::record(std::int32_t output_slot, std::function<void(Tape&)> backward) {
  if (consumed_) throw ContractError("recording on a consumed tape");
  nodes_.push_back(Node{output_slot, std::move(backward)});
}

template <typename S>
std::span<const S> Tape<S>::grad_of(std::int32_t slot) const {
  return grads_[static_cast<std::size_t>(slot)];
}

template <typename S>
std::vector<S>& Tape<S>::grad_buffer(std::int32_t slot) {
  auto& buf = grads_[static_cast<std::size_t>(slot)];
  if (buf.empty()) {
    buf.assign(tracked_[static_cast<std::size_t>(slot)]->values.size(), S(0));
  }
  return buf;
}

template <typename S>
void Tape<S>::backward(const Tensor<S>& loss, bool publish) {
  if (consumed_) throw ContractError("backward() on a consumed tape");
  if (!loss.rec_) throw ContractError("backward() from a default-constructed tensor");
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  std::int32_t loss_slot = find_slot(loss);
  if (loss_slot < 0 || !produced_[static_cast<std::size_t>(loss_slot)]) {
    throw ContractError("backward() from a tensor not produced on this tape");
  }
  consumed_ = true;

  grads_.resize(tracked_.size());
  grad_buffer(loss_slot)[0] = S(1);

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    std::size_t out = static_cast<std::size_t>(node.output);
    if (!grads_[out].empty()) {
      node.backward(*this);
    }
    // Sole producer of this output has run; free its upstream gradient, the
    // captured activations, and the tape's keep-alive reference.
    std::vector<S>().swap(grads_[out]);
    node.backward = nullptr;
    if (!tracked_[out]->requires_grad) tracked_[out].reset();
  }

  if (publish) {
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      if (!tracked_[i]) continue;
      auto& rec = *tracked_[i];
      if (!rec.requires_grad || grads_[i].empty()) continue;
      if (rec.grad.empty()) rec.grad.assign(rec.values.size(), S(0));
      const auto& g = grads_[i];
      for (std::size_t k = 0; k < g.size(); ++k) rec.grad[k] += g[k];
      std::vector<S>().swap(grads_[i]);
    }
  }
}

template <typename S>
std::span<const S> Tape<S>::gradient(const Tensor<S>& t) const {
  if (!consumed_) throw ContractError("gradient() before backward()");
  std::int32_t slot = find_slot(t);
  if (slot < 0) throw ContractError("gradient() for a tensor not tracked on this tape");
  return grads_[static_cast<std::size_t>(slot)];
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace sifm
