#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "overthink/stats.hpp"

using namespace overthink;

namespace {

RedundancyRecord rec_of(const std::string& pid, int sample, int k_star, int n_steps) {
  RedundancyRecord r;
  r.problem_id = pid;
  r.sample_index = sample;
  r.k_star = k_star;
  r.rho_step = rho_step(k_star, n_steps);
  r.rho_word = r.rho_step;  // word counts proportional to steps is fine here
  r.n_steps = n_steps;
  r.probed_ks = {1, n_steps};
  return r;
}

}  // namespace

TEST_CASE("normal quantile sanity") {
  CHECK(detail::normal_quantile(0.975) == Catch::Approx(1.959963985).epsilon(1e-6));
  CHECK(detail::normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-9));
  CHECK(detail::normal_cdf(1.959963985) == Catch::Approx(0.975).epsilon(1e-6));
}

TEST_CASE("bootstrap_ci basics") {
  SECTION("needs at least two groups") {
    GroupedSample s;
    s.add("p1", 0.5);
    CHECK_THROWS_AS(bootstrap_ci(s, 100), InsufficientGroups);
  }

  SECTION("constant data collapses to a point interval") {
    GroupedSample s;
    for (int g = 0; g < 5; ++g) {
      s.add("p" + std::to_string(g), 0.8);
      s.add("p" + std::to_string(g), 0.8);
    }
    const auto ci = bootstrap_ci(s, 500);
    CHECK(ci.low == 0.8);
    CHECK(ci.high == 0.8);
  }

  SECTION("fixed seed reproduces the interval bit for bit") {
    GroupedSample s;
    Rng rng(3);
    for (int g = 0; g < 25; ++g) {
      for (int i = 0; i < 2; ++i) s.add("p" + std::to_string(g), rng.next_unit());
    }
    const auto a = bootstrap_ci(s, 2000, 0.95, 42);
    const auto b = bootstrap_ci(s, 2000, 0.95, 42);
    const auto c = bootstrap_ci(s, 2000, 0.95, 43);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
    CHECK((a.low != c.low || a.high != c.high));
  }

  SECTION("interval brackets the pooled mean") {
    GroupedSample s;
    Rng rng(5);
    for (int g = 0; g < 30; ++g) {
      for (int i = 0; i < 2; ++i) s.add("p" + std::to_string(g), rng.next_unit());
    }
    const auto ci = bootstrap_ci(s, 2000);
    CHECK(ci.low <= s.pooled_mean());
    CHECK(s.pooled_mean() <= ci.high);
  }

  SECTION("BCa engages exactly below the 40-trace threshold") {
    GroupedSample small;
    Rng rng(6);
    for (int g = 0; g < 13; ++g) {
      for (int i = 0; i < 3; ++i) small.add("p" + std::to_string(g), rng.next_unit());
    }
    REQUIRE(small.total_values() == 39);
    CHECK(bootstrap_ci(small, 500).method == "BCa");
    small.add("p13", rng.next_unit());
    REQUIRE(small.total_values() == 40);
    CHECK(bootstrap_ci(small, 500).method == "percentile");
  }

  SECTION("width shrinks as the group count grows") {
    const auto width_at = [](int groups) {
      GroupedSample s;
      Rng rng(9);
      for (int g = 0; g < groups; ++g) {
        for (int i = 0; i < 3; ++i) s.add("p" + std::to_string(g), rng.next_unit());
      }
      const auto ci = bootstrap_ci(s, 2000);
      return ci.high - ci.low;
    };
    CHECK(width_at(200) < width_at(20));
  }

  SECTION("coverage of the percentile interval on synthetic groups") {
    // oracle: datasets drawn around a known mean; the 95% CI should cover it
    // roughly 95% of the time
    const double true_mean = 0.5;
    int covered = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
      GroupedSample s;
      Rng rng(1000 + static_cast<uint64_t>(rep));
      for (int g = 0; g < 20; ++g) {
        const double problem_effect = (rng.next_unit() - 0.5) * 0.3;
        for (int i = 0; i < 3; ++i) {
          s.add("p" + std::to_string(g), true_mean + problem_effect + (rng.next_unit() - 0.5) * 0.2);
        }
      }
      const auto ci = bootstrap_ci(s, 1000, 0.95, 77 + static_cast<uint64_t>(rep));
      if (ci.low <= true_mean && true_mean <= ci.high) ++covered;
    }
    const double coverage = static_cast<double>(covered) / reps;
    CHECK(coverage >= 0.90);
    CHECK(coverage <= 0.99);
  }
}

TEST_CASE("ecdf") {
  CHECK_THROWS_AS(Ecdf({}), EmptyInput);

  const Ecdf e({1, 2, 3, 4});
  CHECK(e(2.5) == 0.5);
  CHECK(e(0.5) == 0.0);
  CHECK(e(4.0) == 1.0);
  CHECK(Ecdf({0.1, 0.2, 0.3}).p50() == 0.2);

  SECTION("matches brute-force counting on random fixtures") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> values;
      const int n = 1 + static_cast<int>(rng.below(100));
      for (int i = 0; i < n; ++i) values.push_back(std::round(rng.next_unit() * 20) / 20.0);
      const Ecdf ecdf(values);
      for (double x : {0.0, 0.05, 0.31, 0.5, 0.99, 1.0}) {
        int count = 0;
        for (double v : values) {
          if (v <= x) ++count;
        }
        CHECK(ecdf(x) == Catch::Approx(static_cast<double>(count) / n).epsilon(1e-12));
      }
      // quantiles: smallest value with ECDF >= q
      for (double q : {0.5, 0.9}) {
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        double expected = sorted.back();
        for (double v : sorted) {
          if (ecdf(v) >= q) {
            expected = v;
            break;
          }
        }
        CHECK(ecdf.quantile(q) == expected);
      }
      CHECK(ecdf.p50() <= ecdf.p90());
    }
  }

  SECTION("is monotone from 0 to 1") {
    Rng rng(22);
    std::vector<double> values;
    for (int i = 0; i < 50; ++i) values.push_back(rng.next_unit());
    const Ecdf ecdf(values);
    double prev = 0.0;
    for (double x = -0.1; x <= 1.1; x += 0.01) {
      const double f = ecdf(x);
      CHECK(f >= prev);
      prev = f;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("spearman rank correlation") {
  SECTION("strictly monotone pairings give exactly +-1") {
    CHECK(spearman({1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}) == 1.0);
    CHECK(spearman({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}) == -1.0);
    CHECK(spearman({1, 2, 3}, {1, 8, 27}) == 1.0);
  }

  SECTION("hand-ranked example") {
    // oracle: d = (-1, 1, -1, 1, 0), sum d^2 = 4, rho = 1 - 6*4/(5*24) = 0.8
    CHECK(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) == Catch::Approx(0.8).epsilon(1e-12));
  }

  SECTION("ties get average ranks") {
    // oracle via Pearson of ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3)
    CHECK(spearman({1, 1, 2}, {1, 2, 3}) == Catch::Approx(std::sqrt(3.0) / 2).epsilon(1e-12));
  }

  SECTION("invariant under strictly monotone transforms") {
    Rng rng(31);
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(rng.next_unit() * 10);
      y.push_back(rng.next_unit() * 10);
    }
    const double base = spearman(x, y);
    std::vector<double> ex = x, ly = y;
    for (auto& v : ex) v = std::exp(v / 5);
    for (auto& v : ly) v = std::log(v + 1);
    CHECK(spearman(ex, ly) == Catch::Approx(base).epsilon(1e-12));
  }

  SECTION("errors") {
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), LengthMismatch);
    CHECK_THROWS_AS(spearman({1}, {1}), DegenerateInput);
    CHECK_THROWS_AS(spearman({2, 2, 2}, {1, 2, 3}), DegenerateInput);
  }
}

TEST_CASE("decile table") {
  SECTION("20 samples make 10 bins of 2") {
    std::vector<double> lengths;
    std::vector<bool> correct;
    for (int i = 0; i < 20; ++i) {
      lengths.push_back(i);
      correct.push_back(i % 2 == 0);
    }
    const auto rows = decile_table(lengths, correct);
    REQUIRE(rows.size() == 10);
    for (const auto& r : rows) {
      CHECK(r.n == 2);
      CHECK(r.accuracy == 0.5);
    }
    CHECK(rows[0].mean_length == 0.5);
    CHECK(rows[9].mean_length == 18.5);
  }

  SECTION("45 samples front-load the remainder: five bins of 5, five of 4") {
    std::vector<double> lengths(45);
    std::vector<bool> correct(45, true);
    for (int i = 0; i < 45; ++i) lengths[static_cast<size_t>(i)] = i;
    const auto rows = decile_table(lengths, correct);
    int total = 0;
    for (int b = 0; b < 10; ++b) {
      CHECK(rows[static_cast<size_t>(b)].n == (b < 5 ? 5 : 4));
      total += rows[static_cast<size_t>(b)].n;
    }
    CHECK(total == 45);
  }

  SECTION("equal lengths use stable input order") {
    std::vector<double> lengths(10, 7.0);
    std::vector<bool> correct = {true, true, true, true, true, false, false, false, false, false};
    const auto rows = decile_table(lengths, correct);
    CHECK(rows[0].accuracy == 1.0);
    CHECK(rows[9].accuracy == 0.0);
  }

  SECTION("matches brute-force counting on random fixtures") {
    Rng rng(41);
    for (int rep = 0; rep < 10; ++rep) {
      const int n = 10 + static_cast<int>(rng.below(91));
      std::vector<double> lengths;
      std::vector<bool> correct;
      for (int i = 0; i < n; ++i) {
        lengths.push_back(static_cast<double>(rng.below(1000)));
        correct.push_back(rng.below(2) == 0);
      }
      const auto rows = decile_table(lengths, correct);
      std::vector<size_t> order(static_cast<size_t>(n));
      std::iota(order.begin(), order.end(), size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](size_t a, size_t b) { return lengths[a] < lengths[b]; });
      size_t pos = 0;
      int sum_n = 0;
      double prev_mean = -1.0;
      for (size_t b = 0; b < 10; ++b) {
        const size_t size = static_cast<size_t>(n) / 10 + (b < static_cast<size_t>(n) % 10 ? 1 : 0);
        double len = 0.0;
        int ok = 0;
        for (size_t i = 0; i < size; ++i, ++pos) {
          len += lengths[order[pos]];
          ok += correct[order[pos]] ? 1 : 0;
        }
        CHECK(rows[b].n == static_cast<int>(size));
        CHECK(rows[b].mean_length == Catch::Approx(len / size).epsilon(1e-12));
        CHECK(rows[b].accuracy == Catch::Approx(static_cast<double>(ok) / size).epsilon(1e-12));
        CHECK(rows[b].mean_length >= prev_mean);
        prev_mean = rows[b].mean_length;
        sum_n += rows[b].n;
      }
      CHECK(sum_n == n);
    }
  }

  SECTION("too few samples") {
    CHECK_THROWS_AS(decile_table({1, 2, 3}, {true, true, false}), TooFewSamples);
  }
}

TEST_CASE("within-problem variance") {
  SECTION("identical pair has zero spread") {
    GroupedSample s;
    s.add("p1", 0.8);
    s.add("p1", 0.8);
    const auto v = within_problem_variance(s);
    CHECK(v.mean_sigma == 0.0);
    CHECK(v.mean_range == 0.0);
  }

  SECTION("two-point closed form") {
    // oracle: sd of {0.2, 0.4} with n-1 denominator = sqrt(0.02) = 0.1414...
    GroupedSample s;
    s.add("p1", 0.2);
    s.add("p1", 0.4);
    const auto v = within_problem_variance(s);
    CHECK(v.mean_sigma == Catch::Approx(0.14142135623730951).epsilon(1e-9));
    CHECK(v.mean_range == Catch::Approx(0.2).epsilon(1e-12));
  }

  SECTION("singleton groups are excluded from the problem count") {
    GroupedSample s;
    s.add("p1", 0.2);
    s.add("p1", 0.4);
    s.add("p2", 0.9);
    const auto v = within_problem_variance(s);
    CHECK(v.n_problems == 1);
  }

  SECTION("no eligible groups") {
    GroupedSample s;
    s.add("p1", 0.2);
    s.add("p2", 0.4);
    CHECK_THROWS_AS(within_problem_variance(s), NoEligibleGroups);
  }
}

TEST_CASE("condition summary") {
  std::vector<RedundancyRecord> records;
  records.push_back(rec_of("p1", 0, 1, 10));  // rho 0.9
  records.push_back(rec_of("p1", 1, 2, 10));  // rho 0.8
  records.push_back(rec_of("p2", 0, 5, 20));  // rho 0.75
  records.push_back(rec_of("p3", 0, 4, 16));  // rho 0.75
  RedundancyRecord not_found;
  not_found.problem_id = "p4";
  not_found.n_steps = 8;
  records.push_back(not_found);

  const auto s = summarize_condition(records, "mock-model", "custom", 500, 42);
  CHECK(s.n_correct == 4);
  CHECK(s.n_not_found == 1);
  CHECK(s.rho_mean == Catch::Approx((0.9 + 0.8 + 0.75 + 0.75) / 4).epsilon(1e-12));
  CHECK(s.mean_k_star == Catch::Approx(3.0).epsilon(1e-12));
  CHECK(s.median_k_star == Catch::Approx(3.0).epsilon(1e-12));  // midpoint of {1,2,4,5}
  CHECK(s.mean_n_steps == Catch::Approx(14.0).epsilon(1e-12));
  CHECK(s.ci_low <= s.rho_mean);
  CHECK(s.rho_mean <= s.ci_high);
}

TEST_CASE("stratification") {
  // planted: level 1 -> k* = 1 of 10 steps, level 2 -> k* = 5 of 10 steps
  std::map<std::string, std::string> level = {{"p1", "1"}, {"p2", "1"}, {"p3", "2"}, {"p4", "2"}};
  std::vector<RedundancyRecord> records;
  records.push_back(rec_of("p1", 0, 1, 10));
  records.push_back(rec_of("p2", 0, 1, 10));
  records.push_back(rec_of("p3", 0, 5, 10));
  records.push_back(rec_of("p4", 0, 5, 10));

  const auto label_of = [&](const std::string& pid) -> std::optional<std::string> {
    const auto it = level.find(pid);
    return it == level.end() ? std::nullopt : std::make_optional(it->second);
  };
  const auto length_of = [](const std::string&, int) { return 100.0; };

  SECTION("recovers the planted per-level rho exactly") {
    const auto strata = stratify(records, label_of, length_of, 300, 42);
    REQUIRE(strata.size() == 2);
    CHECK(strata[0].label == "1");
    CHECK(strata[0].rho_mean == Catch::Approx(0.9).epsilon(1e-12));
    CHECK(strata[0].mean_k_star == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(strata[1].label == "2");
    CHECK(strata[1].rho_mean == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(strata[1].n == 2);
  }

  SECTION("a single stratum equals the unstratified summary") {
    const auto one_label = [](const std::string&) { return std::make_optional<std::string>("all"); };
    const auto strata = stratify(records, one_label, length_of, 300, 42);
    const auto summary = summarize_condition(records, "m", "b", 300, 42);
    REQUIRE(strata.size() == 1);
    CHECK(strata[0].rho_mean == Catch::Approx(summary.rho_mean).epsilon(1e-12));
    CHECK(strata[0].n == summary.n_correct);
  }

  SECTION("missing labels are an error") {
    const auto none = [](const std::string&) { return std::optional<std::string>{}; };
    CHECK_THROWS_AS(stratify(records, none, length_of), MissingLabels);
  }
}

TEST_CASE("positional redundancy") {
  SECTION("k* = 1 everywhere: every step beyond the first is redundant") {
    std::vector<RedundancyRecord> records = {rec_of("p1", 0, 1, 10), rec_of("p2", 0, 1, 10)};
    const auto bins = positional_redundancy(records, 10);
    REQUIRE(bins.size() == 10);
    // oracle: direct counting with the same left-closed bin convention
    for (size_t bi = 0; bi < bins.size(); ++bi) {
      long redundant = 0, total = 0;
      for (const auto& r : records) {
        for (int i = 1; i <= r.n_steps; ++i) {
          const double p = static_cast<double>(i) / r.n_steps;
          size_t bin = static_cast<size_t>(p * 10);
          if (bin >= 10) bin = 9;
          if (bin != bi) continue;
          ++total;
          redundant += (i > 1) ? 1 : 0;
        }
      }
      CHECK(bins[bi].n_steps == total);
      if (total > 0) {
        CHECK(bins[bi].rate == Catch::Approx(static_cast<double>(redundant) / total).epsilon(1e-12));
      }
    }
  }

  SECTION("k* = N everywhere: no redundancy anywhere") {
    std::vector<RedundancyRecord> records = {rec_of("p1", 0, 10, 10), rec_of("p2", 0, 8, 8)};
    for (const auto& b : positional_redundancy(records)) CHECK(b.rate == 0.0);
  }

  SECTION("the first occupied bin is less redundant than the final bin") {
    std::vector<RedundancyRecord> records = {rec_of("p1", 0, 3, 10), rec_of("p2", 0, 7, 14)};
    const auto bins = positional_redundancy(records);
    const auto first_occupied =
        std::find_if(bins.begin(), bins.end(), [](const PositionalBin& b) { return b.n_steps > 0; });
    REQUIRE(first_occupied != bins.end());
    CHECK(first_occupied->rate < bins.back().rate);
    CHECK(bins.back().rate == 1.0);
  }
}

TEST_CASE("judge agreement") {
  SECTION("identical record sets agree exactly") {
    std::vector<RedundancyRecord> self = {rec_of("p1", 0, 3, 10), rec_of("p2", 0, 1, 10)};
    const auto a = judge_agreement(self, self);
    CHECK(a.n == 2);
    CHECK(a.exact_pct == 100.0);
    CHECK(a.within1_pct == 100.0);
    CHECK(a.pi_earlier_pct == 0.0);
    CHECK(a.mean_delta == 0.0);
  }

  SECTION("constant offset: self earlier by 2") {
    std::vector<RedundancyRecord> self, ext;
    for (int i = 0; i < 5; ++i) {
      self.push_back(rec_of("p" + std::to_string(i), 0, 1, 10));
      ext.push_back(rec_of("p" + std::to_string(i), 0, 3, 10));
    }
    const auto a = judge_agreement(self, ext);
    CHECK(a.n == 5);
    CHECK(a.exact_pct == 0.0);
    CHECK(a.pi_earlier_pct == 100.0);
    CHECK(a.mean_delta == Catch::Approx(-2.0).epsilon(1e-12));
  }

  SECTION("records without both k* found are skipped; empty join is an error") {
    std::vector<RedundancyRecord> self = {rec_of("p1", 0, 3, 10)};
    std::vector<RedundancyRecord> ext;
    RedundancyRecord nf;
    nf.problem_id = "p1";
    nf.sample_index = 0;
    ext.push_back(nf);
    CHECK_THROWS_AS(judge_agreement(self, ext), EmptyJoin);
  }
}
