#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "symcons/errors.hpp"
#include "symcons/evalkit.hpp"
#include "symcons/report.hpp"
#include "test_util.hpp"

using namespace symcons;

namespace {

DualPassOutput pass(double c_l2r, double c_r2l, std::string id = "") {
  DualPassOutput o{ProbabilityVector({1.0 - c_l2r, c_l2r}), ProbabilityVector({1.0 - c_r2l, c_r2l})};
  o.label_l2r = o.p_l2r.argmax();
  o.label_r2l = o.p_r2l.argmax();
  o.example_id = std::move(id);
  return o;
}

// Sum-of-products form, evaluated in long double.
long double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  return 100.0L * (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Two-sided exact binomial by direct enumeration of both tails.
long double binomial_oracle(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  std::vector<long double> pmf(n + 1);
  long double choose = 1.0L;
  for (std::size_t k = 0; k <= n; ++k) {
    pmf[k] = choose * std::pow(0.5L, (long double)n);
    choose = choose * (n - k) / (k + 1);
  }
  long double lo = 0.0L, hi = 0.0L;
  for (std::size_t k = 0; k <= std::min(b, c); ++k) lo += pmf[k];
  for (std::size_t k = std::max(b, c); k <= n; ++k) hi += pmf[k];
  return std::min(1.0L, b == c ? 1.0L : lo + hi);
}

double chi_square_oracle(double stat) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), stat));
}

}  // namespace

TEST_CASE("prediction consistency examples") {
  std::vector<DualPassOutput> all{pass(0.9, 0.8), pass(0.1, 0.2), pass(0.7, 0.6), pass(0.3, 0.4)};
  CHECK(prediction_consistency(all) == 100.0);
  all[2] = pass(0.7, 0.3);
  CHECK(prediction_consistency(all) == 75.0);
  std::vector<DualPassOutput> swapped;
  for (const auto& o : all) swapped.push_back(pass(o.p_r2l[1], o.p_l2r[1]));
  CHECK(prediction_consistency(swapped) == 75.0);
  std::rotate(all.begin(), all.begin() + 1, all.end());
  CHECK(prediction_consistency(all) == 75.0);
  CHECK_THROWS_AS(prediction_consistency(std::vector<DualPassOutput>{}), ContractError);
  CHECK(prediction_consistency(std::vector{pass(0.5, 0.5)}) == 100.0);
}

TEST_CASE("confidence consistency examples") {
  const std::vector<double> x{0.2, 0.4, 0.9}, y{0.1, 0.5, 0.8};
  const auto r = confidence_consistency(x, y);
  REQUIRE(r.pearson_x100.has_value());
  CHECK(std::abs(*r.pearson_x100 - (double)pearson_oracle(x, y)) <= 1e-9);
  CHECK(std::abs(r.mse_x1000 - 1000.0 * 0.03 / 3.0) <= 1e-9);

  const auto same = confidence_consistency(x, x);
  CHECK(*same.pearson_x100 == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(same.mse_x1000 == 0.0);

  const auto flat = confidence_consistency(std::vector<double>{0.2, 0.2}, std::vector<double>{0.3, 0.3});
  CHECK_FALSE(flat.pearson_x100.has_value());
  CHECK(flat.mse_x1000 == doctest::Approx(10.0).epsilon(1e-12));

  std::vector<DualPassOutput> outs{pass(0.2, 0.1), pass(0.4, 0.5), pass(0.9, 0.8)};
  CHECK(confidence_consistency(outs).mse_x1000 == r.mse_x1000);
  CHECK_THROWS_AS(confidence_consistency(std::vector<double>{0.1}, std::vector<double>{0.1}), ContractError);
  CHECK_THROWS_AS(confidence_consistency(x, std::vector<double>{0.1, 0.2}), ContractError);
}

TEST_CASE("confidence consistency matches the oracle on random data") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + gen() % 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = u(gen);
      y[i] = std::clamp(x[i] + 0.3 * (u(gen) - 0.5), 0.0, 1.0);
    }
    const auto r = confidence_consistency(x, y);
    long double mse = 0.0L;
    for (std::size_t i = 0; i < n; ++i) mse += (long double)(x[i] - y[i]) * (x[i] - y[i]);
    CHECK(std::abs(r.mse_x1000 - (double)(1000.0L * mse / n)) <= 1e-9);
    REQUIRE(r.pearson_x100.has_value());
    CHECK(std::abs(*r.pearson_x100 - (double)pearson_oracle(x, y)) <= 1e-9);
    CHECK(*r.pearson_x100 >= -100.0);
    CHECK(*r.pearson_x100 <= 100.0);

    // Positive affine maps keep Pearson and change MSE.
    std::vector<double> moved(n);
    for (std::size_t i = 0; i < n; ++i) moved[i] = 0.5 * x[i] + 0.25;
    const auto m = confidence_consistency(moved, y);
    CHECK(std::abs(*m.pearson_x100 - *r.pearson_x100) <= 1e-9);
    CHECK(m.mse_x1000 != r.mse_x1000);
  }
}

TEST_CASE("classification metrics") {
  auto metrics = [](std::vector<int> p, std::vector<int> g) { return classification_metrics(p, g); };
  auto perfect = metrics({1, 0, 1}, {1, 0, 1});
  CHECK(perfect.accuracy == 100.0);
  CHECK(perfect.f1 == 100.0);
  auto zeros = metrics({0, 0, 0, 0}, {0, 1, 0, 1});
  CHECK(zeros.accuracy == 50.0);
  CHECK(zeros.f1 == 0.0);
  auto mixed = metrics({1, 1, 0, 1}, {1, 0, 0, 1});
  CHECK(mixed.accuracy == 75.0);
  CHECK(mixed.f1 == doctest::Approx(80.0).epsilon(1e-12));
  CHECK_THROWS_AS(metrics({1}, {1, 0}), ContractError);
  CHECK_THROWS_AS(metrics({}, {}), ContractError);

  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 50;
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(gen() % 2);
      g[i] = static_cast<int>(gen() % 2);
    }
    long double tp = 0, fp = 0, fn = 0, ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ok += p[i] == g[i];
      tp += p[i] == 1 && g[i] == 1;
      fp += p[i] == 1 && g[i] == 0;
      fn += p[i] == 0 && g[i] == 1;
    }
    // F1 = 2TP / (2TP + FP + FN), zero when there are no true positives.
    const long double f1 = tp > 0 ? 100.0L * 2 * tp / (2 * tp + fp + fn) : 0.0L;
    const auto m = classification_metrics(p, g);
    CHECK(std::abs(m.accuracy - (double)(100.0L * ok / n)) <= 1e-9);
    CHECK(std::abs(m.f1 - (double)f1) <= 1e-9);
  }
}

TEST_CASE("McNemar worked values") {
  const auto ten = mcnemar_from_counts(10, 0);
  CHECK(ten.exact);
  CHECK(std::abs(ten.p_value - 0.001953125) <= 1e-9);

  const auto even = mcnemar_from_counts(5, 5);
  CHECK(even.p_value == 1.0);
  CHECK(even.statistic == 0.0);

  const double alphas[] = {0.01, 0.05};
  const auto big = mcnemar_from_counts(30, 10, alphas);
  CHECK_FALSE(big.exact);
  CHECK(std::abs(big.statistic - 9.025) <= 1e-9);
  CHECK(big.p_value < 0.01);
  REQUIRE(big.significant_at.size() == 2);
  CHECK(big.significant_at[0] == std::pair<double, bool>{0.01, true});

  const auto none = mcnemar_from_counts(0, 0);
  CHECK(none.p_value == 1.0);
  CHECK(none.statistic == 0.0);
}

TEST_CASE("McNemar from correctness vectors counts discordant pairs") {
  const std::vector<bool> a{true, true, false, false, true}, b{false, true, true, false, false};
  const auto r = mcnemar_test(a, b);
  CHECK(r.b == 2);
  CHECK(r.c == 1);
  const auto swapped = mcnemar_test(b, a);
  CHECK(swapped.b == 1);
  CHECK(swapped.c == 2);
  CHECK(swapped.p_value == r.p_value);
  CHECK(swapped.statistic == r.statistic);
  CHECK_THROWS_AS(mcnemar_test(a, std::vector<bool>{true}), ContractError);
}

TEST_CASE("McNemar matches brute-force oracles on random inputs") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 1500; ++trial) {
    const std::size_t n = 1 + gen() % 200;
    const double skew = 0.2 + 0.6 * std::uniform_real_distribution<double>(0, 1)(gen);
    std::vector<bool> c1(n), c2(n);
    for (std::size_t i = 0; i < n; ++i) {
      c1[i] = gen() % 2;
      c2[i] = std::uniform_real_distribution<double>(0, 1)(gen) < skew;
    }
    std::size_t b = 0, c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      b += c1[i] && !c2[i];
      c += !c1[i] && c2[i];
    }
    const auto r = mcnemar_test(c1, c2);
    REQUIRE(r.b == b);
    REQUIRE(r.c == c);
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
    if (b + c == 0) {
      CHECK(r.p_value == 1.0);
    } else if (b + c < 25) {
      CHECK(std::abs(r.p_value - (double)binomial_oracle(b, c)) <= 1e-9);
    } else {
      // No correction when b == c, as in R's mcnemar.test.
      const double d = b == c ? 0.0 : std::abs((double)b - (double)c) - 1.0;
      const double stat = d * d / (double)(b + c);
      CHECK(std::abs(r.statistic - stat) <= 1e-9);
      CHECK(std::abs(r.p_value - chi_square_oracle(stat)) <= 1e-6);
    }
  }
}

TEST_CASE("McNemar branches agree near the threshold") {
  for (std::size_t n = 25; n <= 27; ++n) {
    for (std::size_t b = 0; b <= n; ++b) {
      const std::size_t c = n - b;
      const double d = b == c ? 0.0 : std::abs((double)b - (double)c) - 1.0;
      const double chi = chi_square_oracle(d * d / (double)n);
      CAPTURE(b);
      CHECK(std::abs((double)binomial_oracle(b, c) - chi) <= 0.02);
      CHECK(std::abs(mcnemar_from_counts(b, c).p_value - chi) <= 1e-6);
    }
  }
  CHECK(chi_square1_survival(0.0) == 1.0);
  CHECK(std::abs(chi_square1_survival(3.841458820694124) - 0.05) <= 1e-9);
}

TEST_CASE("disagreement extraction") {
  std::vector<std::vector<DualPassOutput>> agree{{pass(0.9, 0.8, "a"), pass(0.1, 0.2, "b")}};
  CHECK(extract_disagreements(agree, 30).empty());

  std::vector<std::vector<DualPassOutput>> one{{pass(0.9, 0.8, "a"), pass(0.9, 0.2, "b")}};
  std::vector<SentencePair> examples{{"x y", "y x", 1, TaskKind::symmetric, "a"}, {"p q", "q p", 0, TaskKind::symmetric, "b"}};
  auto found = extract_disagreements(one, 30, 0, examples);
  REQUIRE(found.size() == 1);
  CHECK(found[0].example_id == "b");
  CHECK(found[0].text_a == "p q");
  CHECK(found[0].gold == 0);
  CHECK(found[0].labels_l2r == std::vector<int>{1});
  CHECK(found[0].labels_r2l == std::vector<int>{0});
  CHECK(found[0].confidence_r2l[0] == doctest::Approx(0.2));

  // Two of four seeds flipping is not a strict majority; three is.
  std::vector<std::vector<DualPassOutput>> four(4);
  for (int s = 0; s < 4; ++s) {
    four[s].push_back(pass(0.9, s < 2 ? 0.1 : 0.8, "half"));
    four[s].push_back(pass(0.9, s < 3 ? 0.1 : 0.8, "most"));
  }
  found = extract_disagreements(four, 30);
  REQUIRE(found.size() == 1);
  CHECK(found[0].example_id == "most");

  std::vector<std::vector<DualPassOutput>> many(1);
  for (int i = 0; i < 50; ++i) many[0].push_back(pass(0.9, 0.1, std::to_string(i)));
  const auto sample = extract_disagreements(many, 30, 3);
  CHECK(sample.size() == 30);
  CHECK(std::is_sorted(sample.begin(), sample.end(),
                       [](const auto& l, const auto& r) { return std::stoi(l.example_id) < std::stoi(r.example_id); }));
  const auto again = extract_disagreements(many, 30, 3);
  for (std::size_t i = 0; i < sample.size(); ++i) CHECK(again[i].example_id == sample[i].example_id);

  std::vector<std::vector<DualPassOutput>> misaligned{{pass(0.9, 0.8, "a")}, {pass(0.9, 0.8, "z")}};
  CHECK_THROWS_AS(extract_disagreements(misaligned, 30), ContractError);
  CHECK_THROWS_AS(extract_disagreements(std::vector<std::vector<DualPassOutput>>{}, 30), ContractError);
}

namespace {

ModelRuns cell(const std::string& model, std::vector<std::vector<double>> flips, std::uint64_t seed0 = 1) {
  ModelRuns runs{model, "toy", {}};
  for (std::size_t s = 0; s < flips.size(); ++s) {
    SeedRun run;
    run.seed = seed0 + s;
    for (std::size_t i = 0; i < flips[s].size(); ++i) {
      run.outputs.push_back(pass(i % 2 ? 0.8 : 0.3, flips[s][i], "e" + std::to_string(i)));
      run.gold.push_back(static_cast<int>(i % 2));
    }
    runs.seeds.push_back(std::move(run));
  }
  return runs;
}

}  // namespace

TEST_CASE("report formatting and summaries") {
  CHECK(format_mean_std(96.6, 0.15) == "96.6 ± 0.15");
  CHECK(format_mean_std(99.25, 0.0) == "99.2 ± 0.00");
  const std::vector<double> xs{1.0, 3.0};
  CHECK(mean_and_std(xs) == std::pair<double, double>{2.0, 1.0});

  const auto single = summarize(cell("baseline", {{0.2, 0.9, 0.4, 0.7}}));
  CHECK(single.prediction_consistency_std == 0.0);
  CHECK(single.prediction_consistency == 100.0);
  CHECK(single.n_examples == 4);

  const auto two = summarize(cell("baseline", {{0.2, 0.9, 0.4, 0.7}, {0.6, 0.9, 0.4, 0.7}}));
  CHECK(two.prediction_consistency == 87.5);
  CHECK(two.prediction_consistency_std == 12.5);
  CHECK(two.per_seed.size() == 2);
  CHECK(two.accuracy == 100.0);
}

TEST_CASE("report assembly, files and round trip") {
  std::vector<ModelRuns> runs{cell("baseline", {{0.6, 0.2, 0.4, 0.7}, {0.6, 0.9, 0.6, 0.7}}),
                              cell("consistency_kl", {{0.2, 0.9, 0.4, 0.7}, {0.3, 0.8, 0.1, 0.9}})};
  const ReportSet report = build_report(runs);
  REQUIRE(report.cells.size() == 2);
  CHECK_FALSE(report.cells[0].mcnemar_accuracy.has_value());
  REQUIRE(report.cells[1].mcnemar_consistency.has_value());
  CHECK(report.cells[1].mcnemar_consistency->b == 0);
  CHECK(report.cells[1].mcnemar_consistency->c == 4);
  REQUIRE(report.cells[1].mcnemar_accuracy.has_value());
  CHECK(report.cells[1].mcnemar_accuracy->b + report.cells[1].mcnemar_accuracy->c == 0);

  const std::string csv = report_csv(report);
  CHECK(csv.rfind("model,dataset,pred_consistency_mean,pred_consistency_std,pearson_x100,mse_x1000,accuracy,f1,"
                  "mcnemar_p\n",
                  0) == 0);
  CHECK(csv.find("\nbaseline,toy,") != std::string::npos);
  CHECK(csv.find(",NA\n") != std::string::npos);
  CHECK(report_table(report).find("population") != std::string::npos);

  const auto j = report_to_json(report);
  const auto back = report_from_json(j);
  CHECK(report_to_json(back) == j);
  CHECK(back.cells[1].mcnemar_consistency->c == 4);

  const auto dir = test_util::scratch_dir("report");
  write_report_files(report, dir / "r.json", dir / "r.csv");
  CHECK(test_util::read_file(dir / "r.csv") == csv);
  CHECK(report_from_json(nlohmann::json::parse(test_util::read_file(dir / "r.json"))).cells.size() == 2);

  // Seeds that do not line up leave the comparison empty.
  std::vector<ModelRuns> shifted{runs[0], cell("consistency_js", {{0.2, 0.9, 0.4, 0.7}, {0.3, 0.8, 0.1, 0.9}}, 5)};
  CHECK_FALSE(build_report(shifted).cells[1].mcnemar_accuracy.has_value());
}
