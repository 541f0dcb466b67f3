#pragma once

// Message exchange between simulated ranks. Every collective must be entered by
// all ranks in the same order (SPMD). The in-process implementation hands
// values between std::threads; a real transport can implement the same
// interface.

#include <any>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "xflat/error.hpp"
#include "xflat/moments.hpp"

namespace xflat {

/// Raised on ranks that were waiting when a peer aborted the run.
class PeerAbortError : public Error {
 public:
  explicit PeerAbortError(const std::string& what) : Error(ErrorCategory::runtime, what) {}
};

using Bytes = std::vector<std::uint8_t>;

class Exchange {
 public:
  virtual ~Exchange() = default;

  virtual std::size_t size() const noexcept = 0;

  /// Global moment sum, bitwise identical on every rank and independent of the
  /// rank decomposition (see reduce_moments).
  virtual MomentSet allreduce_moments(std::size_t rank, RankMoments local) = 0;

  /// Collective logical OR.
  virtual bool any(std::size_t rank, bool flag) = 0;

  /// Collective maximum (NaN wins).
  virtual double max(std::size_t rank, double value) = 0;

  virtual void send(std::size_t from, std::size_t to, int tag, Bytes payload) = 0;
  virtual Bytes receive(std::size_t to, std::size_t from, int tag) = 0;

  /// Wakes every waiting rank with PeerAbortError.
  virtual void abort(const std::string& reason) = 0;
};

class InProcessExchange final : public Exchange {
 public:
  InProcessExchange(std::size_t n_ranks, std::size_t chunk_size, std::size_t n_theta,
                    std::chrono::milliseconds timeout = std::chrono::seconds(120))
      : n_(n_ranks), chunk_size_(chunk_size), n_theta_(n_theta), timeout_(timeout), slots_(n_ranks) {
    if (n_ranks == 0) throw ConfigError("devices", "exchange needs at least one rank");
  }

  std::size_t size() const noexcept override { return n_; }

  MomentSet allreduce_moments(std::size_t rank, RankMoments local) override {
    local.rank = rank;
    const std::any out = collective(rank, std::move(local), [this](std::vector<std::any>& slots) {
      std::vector<RankMoments> parts;
      parts.reserve(slots.size());
      for (auto& s : slots) parts.push_back(std::any_cast<RankMoments&&>(std::move(s)));
      return std::any(reduce_moments(parts, chunk_size_, n_theta_));
    });
    return std::any_cast<const MomentSet&>(out);
  }

  bool any(std::size_t rank, bool flag) override {
    const std::any out = collective(rank, flag, [](std::vector<std::any>& slots) {
      bool r = false;
      for (const auto& s : slots) r = r || std::any_cast<bool>(s);
      return std::any(r);
    });
    return std::any_cast<bool>(out);
  }

  double max(std::size_t rank, double value) override {
    const std::any out = collective(rank, value, [](std::vector<std::any>& slots) {
      double r = -std::numeric_limits<double>::infinity();
      for (const auto& s : slots) {
        const double v = std::any_cast<double>(s);
        if (std::isnan(v) || v > r) r = v;
        if (std::isnan(r)) break;
      }
      return std::any(r);
    });
    return std::any_cast<double>(out);
  }

  void send(std::size_t from, std::size_t to, int tag, Bytes payload) override {
    check_rank(from);
    if (to >= n_) throw StagingError("send to rank " + std::to_string(to) + ": no such rank");
    std::lock_guard lock(mutex_);
    if (aborted_) throw PeerAbortError(abort_reason_);
    mailbox_[{to, from, tag}].push_back(std::move(payload));
    cv_.notify_all();
  }

  Bytes receive(std::size_t to, std::size_t from, int tag) override {
    check_rank(to);
    if (from >= n_) throw StagingError("receive from rank " + std::to_string(from) + ": no such rank");
    std::unique_lock lock(mutex_);
    const auto key = std::make_tuple(to, from, tag);
    const bool ready = cv_.wait_for(lock, timeout_, [&] {
      if (aborted_) return true;
      auto it = mailbox_.find(key);
      return it != mailbox_.end() && !it->second.empty();
    });
    if (aborted_) throw PeerAbortError(abort_reason_);
    if (!ready) {
      throw StagingError("rank " + std::to_string(to) + " timed out waiting for rank " + std::to_string(from) +
                         " (tag " + std::to_string(tag) + ")");
    }
    auto& queue = mailbox_[key];
    Bytes out = std::move(queue.front());
    queue.pop_front();
    return out;
  }

  void abort(const std::string& reason) override {
    std::lock_guard lock(mutex_);
    if (!aborted_) {
      aborted_ = true;
      abort_reason_ = "aborted: " + reason;
    }
    cv_.notify_all();
  }

 private:
  void check_rank(std::size_t rank) const {
    if (rank >= n_) throw IntegrityError("rank " + std::to_string(rank) + " outside exchange of size " + std::to_string(n_));
  }

  // The last rank to arrive reduces; the result stays readable until every
  // rank has copied it, because the next round cannot complete before that.
  std::any collective(std::size_t rank, std::any value, const std::function<std::any(std::vector<std::any>&)>& reduce) {
    check_rank(rank);
    std::unique_lock lock(mutex_);
    if (aborted_) throw PeerAbortError(abort_reason_);
    if (slots_[rank].has_value()) throw IntegrityError("rank " + std::to_string(rank) + " contributed twice");
    slots_[rank] = std::move(value);
    const std::uint64_t generation = generation_;
    if (++arrived_ == n_) {
      arrived_ = 0;
      try {
        result_ = reduce(slots_);
      } catch (...) {
        for (auto& s : slots_) s.reset();
        aborted_ = true;
        abort_reason_ = "aborted: collective reduction failed";
        cv_.notify_all();
        throw;
      }
      for (auto& s : slots_) s.reset();
      ++generation_;
      cv_.notify_all();
      return result_;
    }
    const bool done = cv_.wait_for(lock, timeout_, [&] { return aborted_ || generation_ != generation; });
    if (generation_ != generation) return result_;
    if (aborted_) throw PeerAbortError(abort_reason_);
    (void)done;
    aborted_ = true;
    abort_reason_ = "aborted: collective timed out";
    cv_.notify_all();
    throw IntegrityError("rank " + std::to_string(rank) + " timed out in collective: missing rank contribution");
  }

  std::size_t n_;
  std::size_t chunk_size_;
  std::size_t n_theta_;
  std::chrono::milliseconds timeout_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::any> slots_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  std::any result_;
  bool aborted_ = false;
  std::string abort_reason_;
  std::map<std::tuple<std::size_t, std::size_t, int>, std::deque<Bytes>> mailbox_;
};

}  // namespace xflat
