#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gateflow/value.hpp"

namespace gateflow {

using Duration = std::chrono::steady_clock::duration;

inline constexpr Duration kDefaultTimeout = std::chrono::seconds(5);
// Long enough that waits never time out; channel waits fall back to untimed.
inline constexpr Duration kNoTimeout = std::chrono::hours(24 * 366);

class ChannelRegistry;
class Observer;

namespace detail {

struct RegistryFlags {
  std::atomic<bool> sealed{false};
  std::atomic<bool> poisoned{false};
};

// Shared state of one namespace: the subject slot plus every observer cursor.
struct Channel {
  explicit Channel(std::string ns, std::shared_ptr<RegistryFlags> f)
      : name(std::move(ns)), flags(std::move(f)) {}

  const std::string name;
  const std::shared_ptr<RegistryFlags> flags;

  std::mutex mu;
  std::condition_variable cv;
  std::uint64_t generation = 0;
  std::optional<Value> slot;
  std::vector<Observer*> observers;  // owned by the registry, stable addresses
  bool has_subject = false;
  std::string producer;
};

}  // namespace detail

// Producer end of a namespace. Publishing generation g+1 waits until every
// observer of the namespace has consumed generation g.
class Subject {
 public:
  Subject(const Subject&) = delete;
  Subject& operator=(const Subject&) = delete;

  const std::string& name() const noexcept { return channel_->name; }
  const std::string& producer() const noexcept { return channel_->producer; }
  std::uint64_t generation() const;
  std::optional<Value> current() const;

  void publish(Value value, Duration timeout = kDefaultTimeout);

  // Generation-0 publish; never blocks.
  void initialise_state(Value value);

  // True if a publish started when the generation was `generation` could
  // still not proceed.
  bool waiting_at(std::uint64_t generation) const;

 private:
  friend class ChannelRegistry;
  explicit Subject(std::shared_ptr<detail::Channel> channel) : channel_(std::move(channel)) {}

  std::shared_ptr<detail::Channel> channel_;
};

// Consumer end of a namespace, unique per (namespace, owner).
class Observer {
 public:
  Observer(const Observer&) = delete;
  Observer& operator=(const Observer&) = delete;

  const std::string& name() const noexcept { return channel_->name; }
  const std::string& owner() const noexcept { return owner_; }
  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t last_consumed() const noexcept { return last_consumed_.load(); }

  // Blocks until a generation newer than the last consumed one exists.
  Value observe(Duration timeout = kDefaultTimeout);

  // True if an observe started after consuming `consumed` could still not
  // proceed.
  bool waiting_at(std::uint64_t consumed) const;

 private:
  friend class ChannelRegistry;
  friend class Subject;
  Observer(std::shared_ptr<detail::Channel> channel, std::string owner, std::uint64_t id)
      : channel_(std::move(channel)), owner_(std::move(owner)), id_(id) {}

  std::shared_ptr<detail::Channel> channel_;
  std::string owner_;
  std::uint64_t id_;
  std::atomic<std::uint64_t> last_consumed_{0};  // written under channel_->mu
};

struct BindEntry {
  std::string name;
  std::string producer;
  std::vector<std::string> consumers;
};

struct BindReport {
  std::vector<BindEntry> entries;  // sorted by namespace
};

class ChannelRegistry {
 public:
  ChannelRegistry();
  ChannelRegistry(const ChannelRegistry&) = delete;
  ChannelRegistry& operator=(const ChannelRegistry&) = delete;

  std::shared_ptr<Subject> create_subject(const std::string& name, const std::string& producer = {});
  std::shared_ptr<Observer> acquire_observer(const std::string& name, const std::string& owner);

  // Seals the registry and checks that every observed namespace has a subject.
  BindReport seal_and_bind();

  // Every current and future blocking call fails with ChannelPoisoned.
  void poison();

  bool sealed() const noexcept { return flags_->sealed.load(); }
  bool poisoned() const noexcept { return flags_->poisoned.load(); }

  std::shared_ptr<Subject> find_subject(const std::string& name) const;

 private:
  std::shared_ptr<detail::Channel> channel_for(const std::string& name);
  void require_open(const char* what) const;

  std::shared_ptr<detail::RegistryFlags> flags_;
  std::map<std::string, std::shared_ptr<detail::Channel>> channels_;
  std::map<std::string, std::shared_ptr<Subject>> subjects_;
  std::map<std::pair<std::string, std::string>, std::shared_ptr<Observer>> observers_;
  std::uint64_t next_observer_id_ = 1;
};

}  // namespace gateflow
