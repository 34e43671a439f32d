#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace hymik {

// Wall-clock phase accounting with innermost-wins attribution: entering a
// nested phase pauses the enclosing one, so the reported per-phase seconds
// are disjoint and sum to at most the total. Not thread-safe; nest phases on
// the orchestrating thread only.
class PhaseTimer {
  using Clock = std::chrono::steady_clock;

 public:
  class Scope {
   public:
    Scope(PhaseTimer& t, std::string name) : t_(&t) { t_->push(std::move(name)); }
    ~Scope() {
      if (t_) t_->pop();
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    PhaseTimer* t_;
  };

  void start() {
    t0_ = Clock::now();
    running_ = true;
  }

  void stop() {
    if (running_) total_ += seconds_since(t0_);
    running_ = false;
  }

  Scope phase(std::string name) { return Scope(*this, std::move(name)); }

  double total_seconds() const {
    return running_ ? total_ + seconds_since(t0_) : total_;
  }

  // Leaf-attributed seconds per phase name (alphabetical by key).
  const std::map<std::string, double>& phase_seconds() const { return acc_; }

  void add(const std::string& name, double seconds) { acc_[name] += seconds; }

 private:
  struct Entry {
    std::string name;
    Clock::time_point since;
  };

  static double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
  }

  void push(std::string name) {
    const auto now = Clock::now();
    if (!stack_.empty()) acc_[stack_.back().name] += std::chrono::duration<double>(now - stack_.back().since).count();
    stack_.push_back({std::move(name), now});
  }

  void pop() {
    const auto now = Clock::now();
    acc_[stack_.back().name] += std::chrono::duration<double>(now - stack_.back().since).count();
    stack_.pop_back();
    if (!stack_.empty()) stack_.back().since = now;
  }

  std::vector<Entry> stack_;
  std::map<std::string, double> acc_;
  Clock::time_point t0_{};
  double total_ = 0.0;
  bool running_ = false;
};

}  // namespace hymik
