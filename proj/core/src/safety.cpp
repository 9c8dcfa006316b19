#include "stochsynth/safety.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/parallel.hpp"

#include <algorithm>
#include <bit>
#include <unordered_map>

namespace stochsynth {

Bitset::Bitset(std::uint64_t size, bool value) : size_(size), words_((size + 63) / 64, value ? ~std::uint64_t{0} : 0) {
  if (value && (size & 63)) words_.back() &= (std::uint64_t{1} << (size & 63)) - 1;
}

std::uint64_t Bitset::count() const {
  std::uint64_t c = 0;
  for (std::uint64_t w : words_) c += static_cast<std::uint64_t>(std::popcount(w));
  return c;
}

std::uint64_t Bitset::first() const {
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i]) return i * 64 + static_cast<std::uint64_t>(std::countr_zero(words_[i]));
  return size_;
}

bool Bitset::subset_of(const Bitset& o) const {
  require(size_ == o.size_, "bitset sizes differ");
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (words_[i] & ~o.words_[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------

bool admissible(const WordCodec& codec, std::uint64_t s, std::size_t u, std::size_t k) {
  if (!fairness_enforced(codec.length(), k)) return true;
  return !codec.ends_with_run(s, u, k);
}

Bitset solve_safety_game(const WordCodec& codec, const Bitset& safe, std::size_t fairness_k, std::size_t threads) {
  require(safe.size() == codec.state_count(), "label set size must equal the state count");
  require(fairness_k >= 1, "fairness_k must be at least 1");
  const std::uint64_t S = codec.state_count();
  const std::size_t R = codec.alphabet();
  Bitset win = safe;

  // count[s]: admissible inputs of s leading into the current winning set.
  std::vector<std::uint32_t> count(S, 0);
  parallel_for(static_cast<std::size_t>(S), threads, [&](std::size_t begin, std::size_t end) {
    for (std::uint64_t s = begin; s < end; ++s) {
      if (!win.test(s)) continue;
      std::uint32_t c = 0;
      for (std::size_t u = 0; u < R; ++u)
        if (admissible(codec, s, u, fairness_k) && win.test(codec.successor(s, u))) ++c;
      count[s] = c;
    }
  });

  std::vector<std::uint64_t> work;
  for (std::uint64_t s = 0; s < S; ++s)
    if (win.test(s) && count[s] == 0) {
      win.reset(s);
      work.push_back(s);
    }
  while (!work.empty()) {
    const std::uint64_t s = work.back();
    work.pop_back();
    const std::size_t u = codec.last(s);
    for (std::size_t j = 0; j < R; ++j) {
      const std::uint64_t p = codec.predecessor(s, j);
      if (!win.test(p) || !admissible(codec, p, u, fairness_k)) continue;
      if (--count[p] == 0) {
        win.reset(p);
        work.push_back(p);
      }
    }
  }
  return win;
}

Bitset noise_free_safe_states(const SymbolicModel& symbolic, const SafetySpec& spec, std::size_t threads) {
  const Box safe = spec.safe_box();
  require(safe.dim() == symbolic.model().n(), "safe box dimension must equal n");
  const std::uint64_t S = symbolic.codec().state_count();
  std::vector<std::uint8_t> flag(S, 0);
  for_each_noise_free_output(
      symbolic.model(), symbolic.params(), symbolic.inputs(), symbolic.ode_steps(),
      [&](std::uint64_t s, const Vec& y) { flag[s] = safe.contains(y) ? 1 : 0; }, threads);
  Bitset out(S);
  for (std::uint64_t s = 0; s < S; ++s)
    if (flag[s]) out.set(s);
  return out;
}

Bitset monte_carlo_safe_states(const SymbolicModel& symbolic, const SafetySpec& spec, const MonteCarloLabeler& labeler,
                               std::size_t threads) {
  const Box safe = spec.safe_box();
  const std::uint64_t S = symbolic.codec().state_count();
  labeler.samples_for(safe);  // surface budget errors before spawning work
  std::vector<std::uint8_t> flag(S, 0);
  parallel_for(static_cast<std::size_t>(S), threads, [&](std::size_t begin, std::size_t end) {
    for (std::uint64_t s = begin; s < end; ++s) flag[s] = labeler.label(s, safe).label == Label::Safe ? 1 : 0;
  });
  Bitset out(S);
  for (std::uint64_t s = 0; s < S; ++s)
    if (flag[s]) out.set(s);
  return out;
}

Bitset compute_winning_set(const SymbolicModel& symbolic, const SafetySpec& spec, const MonteCarloLabeler* labeler,
                           std::size_t threads) {
  Bitset safe;
  if (symbolic.output_kind() == OutputKind::NoiseFree) {
    safe = noise_free_safe_states(symbolic, spec, threads);
  } else {
    require(labeler != nullptr, "probabilistic outputs need a Monte-Carlo labeler");
    safe = monte_carlo_safe_states(symbolic, spec, *labeler, threads);
  }
  if (!safe.any()) throw Error(ErrorKind::EmptyWinningSet, "no abstract state is labeled safe");
  Bitset win = solve_safety_game(symbolic.codec(), safe, spec.fairness_k, threads);
  if (!win.any()) throw Error(ErrorKind::EmptyWinningSet, "the safety game has an empty winning set");
  return win;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> preference_order(const SafetySpec& spec, std::size_t R) {
  std::vector<std::size_t> order;
  std::vector<bool> seen(R, false);
  for (std::size_t u : spec.preference) {
    require(u < R, "preference names an unknown input index");
    if (!seen[u]) {
      order.push_back(u);
      seen[u] = true;
    }
  }
  for (std::size_t u = 0; u < R; ++u)
    if (!seen[u]) order.push_back(u);
  return order;
}

double fraction_of(const std::vector<std::size_t>& period, std::size_t u) {
  if (period.empty()) return 0.0;
  return static_cast<double>(std::count(period.begin(), period.end(), u)) / static_cast<double>(period.size());
}

}  // namespace

Schedule extract_schedule(const WordCodec& codec, const Bitset& winning, const SafetySpec& spec,
                          std::optional<std::uint64_t> start) {
  require(winning.size() == codec.state_count(), "winning set size must equal the state count");
  const std::uint64_t s0 = start.value_or(winning.first());
  if (s0 >= codec.state_count() || !winning.test(s0))
    throw Error(ErrorKind::NoLasso, "start state is not in the winning set");
  const auto order = preference_order(spec, codec.alphabet());

  std::unordered_map<std::uint64_t, std::size_t> seen;
  std::vector<std::size_t> inputs;
  std::uint64_t s = s0;
  while (true) {
    if (auto it = seen.find(s); it != seen.end()) {
      Schedule out;
      out.source = s0;
      out.prefix.assign(inputs.begin(), inputs.begin() + static_cast<std::ptrdiff_t>(it->second));
      out.period.assign(inputs.begin() + static_cast<std::ptrdiff_t>(it->second), inputs.end());
      out.preferred_fraction = fraction_of(out.period, order.front());
      return out;
    }
    seen.emplace(s, inputs.size());
    bool moved = false;
    for (std::size_t u : order) {
      if (!admissible(codec, s, u, spec.fairness_k)) continue;
      const std::uint64_t next = codec.successor(s, u);
      if (!winning.test(next)) continue;
      inputs.push_back(u);
      s = next;
      moved = true;
      break;
    }
    if (!moved) throw Error(ErrorKind::NoLasso, "winning state without a winning successor");
  }
}

Schedule periodic_schedule(const WordCodec& codec, const std::vector<std::size_t>& word) {
  require(!word.empty(), "schedule word must be non-empty");
  const std::size_t N = codec.length();
  std::vector<std::size_t> tail(N);
  // Last N letters of word^omega ending at a period boundary.
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t back = N - i;  // 1..N letters before the boundary
    tail[i] = word[(word.size() - back % word.size()) % word.size()];
  }
  Schedule s;
  s.source = codec.encode(tail);
  s.period = word;
  s.preferred_fraction = fraction_of(word, 0);
  return s;
}

ScheduleAudit audit_schedule(const WordCodec& codec, const Bitset& winning, const SafetySpec& spec,
                             const Schedule& schedule) {
  ScheduleAudit a;
  a.winning_ok = true;
  if (schedule.period.empty()) {
    a.problems.push_back("period is empty");
    a.winning_ok = false;
    return a;
  }
  auto visit = [&](std::uint64_t s) {
    ++a.visited;
    if (!winning.test(s)) {
      if (a.winning_ok) a.problems.push_back("state " + std::to_string(s) + " is not winning");
      a.winning_ok = false;
    }
  };
  std::uint64_t s = schedule.source;
  if (s >= codec.state_count()) {
    a.problems.push_back("source state out of range");
    a.winning_ok = false;
    return a;
  }
  visit(s);
  for (std::size_t u : schedule.prefix) {
    s = codec.successor(s, u);
    visit(s);
  }
  const std::uint64_t loop = s;
  for (std::size_t u : schedule.period) {
    s = codec.successor(s, u);
    visit(s);
  }
  a.cycle_ok = s == loop;
  if (!a.cycle_ok) a.problems.push_back("period does not close a cycle");

  // Runs over prefix + period + period catch repetitions across the wraparound.
  a.fairness_checked = fairness_enforced(codec.length(), spec.fairness_k);
  a.fairness_ok = true;
  if (a.fairness_checked) {
    std::vector<std::size_t> seq = schedule.prefix;
    seq.insert(seq.end(), schedule.period.begin(), schedule.period.end());
    seq.insert(seq.end(), schedule.period.begin(), schedule.period.end());
    std::size_t run = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      run = (i > 0 && seq[i] == seq[i - 1]) ? run + 1 : 1;
      if (run > spec.fairness_k) {
        a.fairness_ok = false;
        a.problems.push_back("input " + std::to_string(seq[i]) + " repeats more than " +
                             std::to_string(spec.fairness_k) + " times");
        break;
      }
    }
  }
  return a;
}

InputCurve refine_controller(const Schedule& schedule, const QuantizedInputs& inputs, double tau) {
  require(!schedule.period.empty(), "schedule period must be non-empty");
  return InputCurve::from_indices(schedule.prefix, schedule.period, inputs, tau);
}

}  // namespace stochsynth
