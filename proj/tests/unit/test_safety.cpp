#include <doctest.h>

#include "stochsynth/errors.hpp"
#include "stochsynth/safety.hpp"
#include "oracles.hpp"
#include "toy.hpp"

#include <random>

using namespace stochsynth;

namespace {

SafetySpec spec_with(std::size_t k, std::vector<std::size_t> pref = {}) {
  SafetySpec s;
  s.W = cube(1, 0.0, 1.0);
  s.fairness_k = k;
  s.preference = std::move(pref);
  return s;
}

}  // namespace

TEST_CASE("bitset basics") {
  Bitset b(130);
  CHECK(b.count() == 0);
  CHECK(b.first() == 130);
  b.set(129);
  b.set(64);
  CHECK(b.count() == 2);
  CHECK(b.first() == 64);
  b.reset(64);
  CHECK(b.first() == 129);
  const Bitset full(130, true);
  CHECK(full.count() == 130);
  CHECK(b.subset_of(full));
  CHECK_FALSE(full.subset_of(b));
}

TEST_CASE("winning set matches a brute-force fixpoint on random instances") {
  std::mt19937_64 rng(12345);
  std::size_t nonempty = 0, instances = 0;
  for (std::size_t R = 2; R <= 3; ++R) {
    for (std::size_t N = 1; N <= 6; ++N) {
      for (std::size_t k = 1; k <= 3; ++k) {
        for (double density : {0.5, 0.75, 0.9}) {
          for (int rep = 0; rep < 2; ++rep) {
            const WordCodec c(R, N);
            std::bernoulli_distribution coin(density);
            std::vector<bool> safe(c.state_count());
            Bitset bits(c.state_count());
            for (std::uint64_t s = 0; s < c.state_count(); ++s)
              if ((safe[s] = coin(rng))) bits.set(s);
            const Bitset win = solve_safety_game(c, bits, k, 2);
            const auto ref = oracle::brute_force_winning(c, safe, k);
            bool same = true;
            for (std::uint64_t s = 0; s < c.state_count(); ++s) same = same && win.test(s) == ref[s];
            CHECK(same);
            ++instances;
            if (!win.any()) continue;
            ++nonempty;
            // Every extracted schedule passes the safety and wraparound fairness audit.
            const SafetySpec spec = spec_with(k, {rep == 0 ? 0u : R - 1});
            const Schedule sched = extract_schedule(c, win, spec);
            const ScheduleAudit audit = audit_schedule(c, win, spec, sched);
            CHECK(audit.pass());
            CHECK(audit.fairness_checked == (N > k));
            for (std::uint64_t s = 0; s < c.state_count(); s += 7)
              if (win.test(s)) CHECK(audit_schedule(c, win, spec, extract_schedule(c, win, spec, s)).pass());
          }
        }
      }
    }
  }
  CHECK(instances >= 100);
  CHECK(nonempty >= 50);
}

TEST_CASE("fairness is enforced only for words longer than k") {
  const WordCodec c(2, 3);
  CHECK(fairness_enforced(3, 2));
  CHECK_FALSE(fairness_enforced(3, 3));
  // With everything safe and N <= k, the full set is winning and (u)^omega is allowed.
  const Bitset all(c.state_count(), true);
  CHECK(solve_safety_game(c, all, 3) == all);
  const Schedule self = periodic_schedule(c, {0});
  CHECK(audit_schedule(c, all, spec_with(3), self).pass());
  // With k = 1 every word still has the other input available, but runs are forbidden.
  const Bitset alt = solve_safety_game(c, all, 1);
  CHECK(alt == all);
  CHECK_FALSE(admissible(c, c.encode({1, 0, 0}), 0, 1));
  CHECK(admissible(c, c.encode({1, 0, 0}), 1, 1));
  const ScheduleAudit bad = audit_schedule(c, alt, spec_with(1), periodic_schedule(c, {0, 0, 1}));
  CHECK_FALSE(bad.pass());
}

TEST_CASE("schedule extraction follows the preference order") {
  const WordCodec c(3, 4);
  const Bitset all(c.state_count(), true);
  const Schedule s = extract_schedule(c, all, spec_with(2, {2, 0}), c.encode({1, 1, 1, 1}));
  // 1111 -2-> 1112 -2-> 1122 -0-> 1220 -2-> 2202 -2-> 2022 -0-> 0220 -2-> 2202.
  CHECK(s.prefix == std::vector<std::size_t>{2, 2, 0, 2});
  CHECK(s.period == std::vector<std::size_t>{2, 0, 2});
  CHECK(s.preferred_fraction == doctest::Approx(2.0 / 3.0));
  CHECK(audit_schedule(c, all, spec_with(2), s).pass());
}

TEST_CASE("periodic schedules start from the word they repeat") {
  const WordCodec c(3, 5);
  const std::vector<std::size_t> word{0, 0, 2, 1};
  const Schedule s = periodic_schedule(c, word);
  // Last five letters of (0 0 2 1)^omega ending at a period boundary.
  CHECK(c.decode(s.source) == std::vector<std::size_t>{1, 0, 0, 2, 1});
  CHECK(s.prefix.empty());
  const Bitset all(c.state_count(), true);
  CHECK(audit_schedule(c, all, spec_with(3), s).cycle_ok);
}

TEST_CASE("empty winning sets and lasso failures") {
  const WordCodec c(2, 3);
  Bitset none(c.state_count());
  CHECK_FALSE(solve_safety_game(c, none, 2).any());
  CHECK_THROWS_AS(extract_schedule(c, none, spec_with(2)), Error);
  Bitset lone(c.state_count());
  lone.set(c.encode({0, 1, 0}));
  CHECK_FALSE(solve_safety_game(c, lone, 1).any());
}

TEST_CASE("noise-free winning set on a scalar model") {
  const ScsModel m = toy::scalar(-0.5, 1.0, 0.2);
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  AbstractionParams p;
  p.tau = 0.2;
  p.N = 4;
  p.x_s = toy::v1(0.0);
  p.epsilon = 1.0;
  const SymbolicModel sym(m, p, qi, OutputKind::NoiseFree, 0.0);
  SafetySpec spec;
  spec.W = Box(toy::v1(-0.1), toy::v1(1.0));
  spec.fairness_k = 2;
  const Bitset safe = noise_free_safe_states(sym, spec);
  for (std::uint64_t s = 0; s < sym.codec().state_count(); ++s)
    CHECK(safe.test(s) == spec.W.contains(sym.noise_free_output(s)));
  const Bitset win = compute_winning_set(sym, spec);
  CHECK(win.subset_of(safe));
  const Schedule sched = extract_schedule(sym.codec(), win, spec);
  CHECK(audit_schedule(sym.codec(), win, spec, sched).pass());
  const InputCurve curve = refine_controller(sched, qi, 0.2);
  CHECK(curve.at_step(sched.prefix.size())[0] == qi.points[sched.period.front()][0]);

  spec.W = Box(toy::v1(5.0), toy::v1(6.0));
  try {
    (void)compute_winning_set(sym, spec);
    FAIL("expected EmptyWinningSet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyWinningSet);
  }
}
