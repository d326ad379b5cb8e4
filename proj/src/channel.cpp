#include "gateflow/channel.hpp"

#include <algorithm>

#include "gateflow/error.hpp"

namespace gateflow {

namespace {

void require_sealed(const detail::Channel& ch) {
  if (!ch.flags->sealed.load()) {
    throw Error(ErrorCode::RegistryNotSealed, "channel '" + ch.name + "' used before the registry was sealed");
  }
}

[[noreturn]] void throw_poisoned(const detail::Channel& ch) {
  throw Error(ErrorCode::ChannelPoisoned, "channel '" + ch.name + "' was shut down");
}

// wait_for with an effectively unbounded timeout would overflow the clock.
template <typename Pred>
bool wait_gated(std::condition_variable& cv, std::unique_lock<std::mutex>& lk, Duration timeout, Pred ready) {
  if (timeout >= std::chrono::hours(24 * 365)) {
    cv.wait(lk, ready);
    return true;
  }
  return cv.wait_for(lk, timeout, ready);
}

bool all_consumed(const detail::Channel& ch) {
  return std::all_of(ch.observers.begin(), ch.observers.end(),
                     [&](const Observer* o) { return o->last_consumed() >= ch.generation; });
}

}  // namespace

std::uint64_t Subject::generation() const {
  std::lock_guard lk(channel_->mu);
  return channel_->generation;
}

std::optional<Value> Subject::current() const {
  std::lock_guard lk(channel_->mu);
  return channel_->slot;
}

void Subject::publish(Value value, Duration timeout) {
  auto& ch = *channel_;
  require_sealed(ch);
  std::unique_lock lk(ch.mu);
  auto ready = [&] { return ch.flags->poisoned.load() || ch.generation == 0 || all_consumed(ch); };
  if (!wait_gated(ch.cv, lk, timeout, ready)) {
    throw Error(ErrorCode::ChannelTimeout, "publish on '" + ch.name + "' timed out waiting for observers",
                {ch.name});
  }
  if (ch.flags->poisoned.load()) throw_poisoned(ch);
  ch.slot = std::move(value);
  ++ch.generation;
  lk.unlock();
  ch.cv.notify_all();
}

bool Subject::waiting_at(std::uint64_t generation) const {
  std::lock_guard lk(channel_->mu);
  return channel_->generation == generation && generation != 0 && !all_consumed(*channel_);
}

void Subject::initialise_state(Value value) {
  auto& ch = *channel_;
  require_sealed(ch);
  {
    std::lock_guard lk(ch.mu);
    if (ch.generation != 0) {
      throw Error(ErrorCode::AlreadyInitialised, "'" + ch.name + "' already holds a value");
    }
    ch.slot = std::move(value);
    ch.generation = 1;
  }
  ch.cv.notify_all();
}

Value Observer::observe(Duration timeout) {
  auto& ch = *channel_;
  require_sealed(ch);
  std::unique_lock lk(ch.mu);
  auto ready = [&] { return ch.flags->poisoned.load() || ch.generation > last_consumed_; };
  if (!wait_gated(ch.cv, lk, timeout, ready)) {
    throw Error(ErrorCode::ChannelTimeout, "observe on '" + ch.name + "' by '" + owner_ + "' timed out",
                {ch.name});
  }
  if (ch.flags->poisoned.load()) throw_poisoned(ch);
  Value out = *ch.slot;
  last_consumed_ = ch.generation;
  lk.unlock();
  ch.cv.notify_all();
  return out;
}

bool Observer::waiting_at(std::uint64_t consumed) const {
  std::lock_guard lk(channel_->mu);
  return last_consumed_ == consumed && channel_->generation <= consumed;
}

ChannelRegistry::ChannelRegistry() : flags_(std::make_shared<detail::RegistryFlags>()) {}

void ChannelRegistry::require_open(const char* what) const {
  if (sealed()) throw Error(ErrorCode::RegistrySealed, std::string("cannot ") + what + " after seal");
}

std::shared_ptr<detail::Channel> ChannelRegistry::channel_for(const std::string& name) {
  auto it = channels_.find(name);
  if (it != channels_.end()) return it->second;
  auto ch = std::make_shared<detail::Channel>(name, flags_);
  channels_.emplace(name, ch);
  return ch;
}

std::shared_ptr<Subject> ChannelRegistry::create_subject(const std::string& name, const std::string& producer) {
  require_open("create a subject");
  if (subjects_.contains(name)) {
    throw Error(ErrorCode::DuplicateSubject, "namespace '" + name + "' already has a subject", {name});
  }
  auto ch = channel_for(name);
  ch->has_subject = true;
  ch->producer = producer;
  std::shared_ptr<Subject> subject(new Subject(ch));
  subjects_.emplace(name, subject);
  return subject;
}

std::shared_ptr<Observer> ChannelRegistry::acquire_observer(const std::string& name, const std::string& owner) {
  require_open("acquire an observer");
  auto key = std::make_pair(name, owner);
  if (auto it = observers_.find(key); it != observers_.end()) return it->second;
  auto ch = channel_for(name);
  std::shared_ptr<Observer> observer(new Observer(ch, owner, next_observer_id_++));
  ch->observers.push_back(observer.get());
  observers_.emplace(std::move(key), observer);
  return observer;
}

BindReport ChannelRegistry::seal_and_bind() {
  flags_->sealed.store(true);
  BindReport report;
  std::vector<std::string> unmatched;
  for (const auto& [name, ch] : channels_) {
    BindEntry entry{name, ch->producer, {}};
    for (const Observer* o : ch->observers) entry.consumers.push_back(o->owner());
    std::sort(entry.consumers.begin(), entry.consumers.end());
    if (!ch->has_subject) unmatched.push_back(name);
    report.entries.push_back(std::move(entry));
  }
  if (!unmatched.empty()) {
    std::string joined;
    for (const auto& n : unmatched) joined += (joined.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::IncompleteGraph, "no subject for observed namespaces: " + joined, unmatched);
  }
  return report;
}

void ChannelRegistry::poison() {
  flags_->poisoned.store(true);
  for (const auto& [name, ch] : channels_) {
    { std::lock_guard lk(ch->mu); }
    ch->cv.notify_all();
  }
}

std::shared_ptr<Subject> ChannelRegistry::find_subject(const std::string& name) const {
  auto it = subjects_.find(name);
  return it == subjects_.end() ? nullptr : it->second;
}

}  // namespace gateflow
