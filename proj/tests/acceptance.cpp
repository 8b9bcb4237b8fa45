// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any of them fails.

#include <Eigen/QR>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "oracles.hpp"
#include "vap/harness.hpp"
#include "vap/hungarian.hpp"
#include "vap/matcher.hpp"
#include "vap/prompter.hpp"

using namespace vap;
using namespace vap::harness;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void check(const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = budget_seconds <= 0 || secs < budget_seconds;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s  %-28s %s; %.2fs", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  if (budget_seconds > 0) std::printf(" (limit %.0fs)", budget_seconds);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

EmbeddingMatrix from_eigen(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return EmbeddingMatrix(m.rows(), m.cols(), v);
}

ExperimentSpec spec(Mode mode, int seeds) {
  ExperimentSpec s;
  s.name = "acceptance";
  s.mode = mode;
  s.seeds = seeds;
  return s;
}

std::string body(const std::string& s) { return s.substr(s.find('\n') + 1); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const int workers = resolve_workers(std::nullopt);

  check("voting-oracle", 5, [] {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> n_dist(2, 6), k_dist(1, 7), lat(-1, 1);
    int agree = 0, vote_ties = 0, mean_ties = 0;
    const int total = 2000;
    for (int trial = 0; trial < total; ++trial) {
      // The second half uses lattice vectors so that equal mean cosines occur.
      const bool lattice = trial >= total / 2;
      auto draw = [&] {
        if (!lattice) return oracle::random_embedding(rng, 8);
        for (;;) {
          std::vector<double> v = {double(lat(rng)), double(lat(rng)), double(lat(rng))};
          if (v[0] || v[1] || v[2]) return Embedding::normalize(v);
        }
      };
      std::vector<Embedding> props, refs;
      for (int i = n_dist(rng); i > 0; --i) props.push_back(draw());
      for (int i = k_dist(rng); i > 0; --i) refs.push_back(draw());
      const auto got = vote_select(props, refs);
      const auto want = oracle::vote(props, refs);
      agree += got.winner_index == want.winner && got.votes == want.votes && got.tie_broken == want.tie;
      if (want.tie) {
        ++vote_ties;
        const double m = got.mean_cosines[want.winner];
        for (std::size_t i = 0; i < props.size(); ++i)
          if (i != want.winner && want.votes[i] == want.votes[want.winner] && got.mean_cosines[i] == m) {
            ++mean_ties;
            break;
          }
      }
    }
    return Outcome{agree == total, fmt("%.0f/%.0f instances agree, %.0f vote-count ties, %.0f also tied on mean",
                                       agree, total, vote_ties, mean_ties)};
  });

  check("hungarian-optimality", 30, [] {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> size(1, 6), cost(0, 99);
    int exact = 0;
    const int total = 2000;
    for (int trial = 0; trial < total; ++trial) {
      const int n = size(rng);
      CostMatrix c(n, std::vector<double>(n));
      for (auto& row : c)
        for (auto& x : row) x = cost(rng);
      exact += assignment_cost(c, hungarian(c)) == oracle::min_assignment_cost(c);
    }
    return Outcome{exact == total, fmt("%.0f/%.0f integer matrices (n<=6) equal the n! minimum", exact, total)};
  });

  check("crossview-map", 60, [] {
    std::mt19937_64 rng(303);
    int equal = 0, dominated = 0;
    const int total = 500;
    for (int trial = 0; trial < total; ++trial) {
      const auto inst = oracle::random_instance(rng, 3, 4);
      const double best = score_assignment(inst, solve_exact(inst));
      equal += std::abs(best - oracle::best_assignment(inst).best_score) <= 1e-9;
      dominated += score_assignment(inst, solve_cluster(inst, 0.6)) <= best + 1e-9 &&
                   score_assignment(inst, solve_pairwise(inst)) <= best + 1e-9;
    }
    sim::AssociationSetup setup;
    int cluster = 0, pairwise = 0;
    for (int seed = 0; seed < total; ++seed) {
      const auto li = sim::random_association(static_cast<std::uint64_t>(seed), setup);
      const auto best = solve_exact(li.instance);
      cluster += solve_cluster(li.instance, 0.6) == best;
      pairwise += solve_pairwise(li.instance) == best;
    }
    return Outcome{equal == total && dominated == total,
                   fmt("exact = enumeration %.0f/500, approximations dominated %.0f/500; "
                       "agreement on separated instances cluster %.1f%% pairwise %.1f%%",
                       equal, dominated, 100.0 * cluster / total, 100.0 * pairwise / total)};
  });

  check("compositing-bit-exact", 60, [] {
    long mismatches = 0, touched_unmasked = 0, checked = 0;
    bool identity = true;
    const int quarters[] = {0, 1, 2, 4};
    for (int q : quarters) {
      const double alpha = q / 4.0;
      for (int t = 0; t < 256; ++t) {
        PromptStyle style = make_style("red", alpha);
        style.tint_rgb = {std::uint8_t(t), std::uint8_t(255 - t), std::uint8_t(t)};
        RasterImage img(256, 2);
        Mask mask(256, 2);
        for (int s = 0; s < 256; ++s) {
          img.set(s, 0, {std::uint8_t(s), std::uint8_t(s), std::uint8_t(255 - s)});
          img.set(s, 1, {std::uint8_t(s), std::uint8_t(s), std::uint8_t(255 - s)});
          mask.set(s, 0);
        }
        const auto out = blend_overlay(img, mask, style);
        if (q == 0) identity = identity && out == img;
        for (int s = 0; s < 256; ++s) {
          const auto src = img.at(s, 0);
          for (int c = 0; c < 3; ++c) {
            mismatches += out.at(s, 0)[c] != oracle::blend_quarter(src[c], style.tint_rgb[c], q);
            ++checked;
          }
          touched_unmasked += out.at(s, 1) != img.at(s, 1);
        }
      }
    }
    return Outcome{mismatches == 0 && touched_unmasked == 0 && identity,
                   fmt("%.0f channel values checked, %.0f mismatches, %.0f unmasked pixels changed, alpha=0 identity ",
                       double(checked), double(mismatches), double(touched_unmasked)) +
                       (identity ? "yes" : "no")};
  });

  check("rewrite-contract", 0, [] {
    struct Case {
      const char* in;
      const char* color;
      const char* out;
    };
    const Case cases[] = {{"pick up my cup", "red", "pick up the red cup"},
                          {"select my leather bag", "red", "select the red leather bag"},
                          {"put my scrubber into the bowl", "green", "put the green scrubber into the bowl"},
                          {"bring my cup", "red", "bring the red cup"},
                          {"Hey robot, bring my cup", "blue", "Hey robot, bring the blue cup"}};
    int ok = 0, total = 0;
    for (const auto& c : cases) {
      ++total;
      const auto r = rewrite_or_passthrough(c.in, make_style(c.color));
      ok += r.rewritten && r.text == c.out;
    }
    ++total;
    const auto none = rewrite_or_passthrough("pick up the cup", make_style("red"));
    ok += !none.rewritten && none.text == "pick up the cup";
    return Outcome{ok == total, fmt("%.0f/%.0f instruction forms (including one passthrough)", ok, total)};
  });

  check("embedalign", 0, [] {
    std::mt19937_64 rng(404);
    std::normal_distribution<double> n(0, 1);
    const auto a = oracle::random_matrix(rng, 40, 8);
    double worst_q = std::abs(linear_cka(a, a) - 1.0);
    for (int k = 0; k < 100; ++k) {
      Eigen::MatrixXd g(8, 8);
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) g(r, c) = n(rng);
      const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
      worst_q = std::max(worst_q, std::abs(linear_cka(a, from_eigen(a.as_eigen() * q)) - 1.0));
    }
    Eigen::MatrixXd shifted(40, 8);
    for (int r = 0; r < 40; ++r) shifted.row(r) = a.as_eigen().row((r + 1) % 40);
    const double knn_id = knn_top1(a, a);
    const double knn_shift = knn_top1(a, from_eigen(shifted));
    double worst_oracle = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto x = oracle::random_matrix(rng, 32, 8);
      const auto y = oracle::random_matrix(rng, 32, 8);
      const auto [m1, s1] = rowwise_cosine(x, y);
      const auto [m2, s2] = oracle::rowwise(x, y);
      worst_oracle = std::max({worst_oracle, std::abs(m1 - m2), std::abs(s1 - s2),
                               std::abs(linear_cka(x, y) - oracle::cka(x, y)), std::abs(knn_top1(x, y) - oracle::knn(x, y))});
    }
    return Outcome{worst_q < 1e-6 && knn_id == 1.0 && knn_shift == 0.0 && worst_oracle < 1e-9,
                   fmt("max |CKA-1| over A and 100 rotations %.2e, kNN identity %.1f, derangement %.1f, "
                       "max oracle gap %.2e",
                       worst_q, knn_id, knn_shift, worst_oracle)};
  });

  check("noiseless-end-to-end", 120, [workers] {
    double worst = 100.0;
    std::string detail;
    for (int views : {1, 3}) {
      auto s = spec(Mode::simulate, 1000);
      s.scene.views = views;
      s.scene.sigma = s.scene.sigma_ref = s.scene.p_miss = s.scene.p_drift = s.scene.p_ctrl = 0.0;
      const auto row = run_experiment(s, workers).rows[0];
      worst = std::min(worst, *row.sr);
      detail += fmt("V=%.0f SR %.1f%% ", views, *row.sr);
    }
    return Outcome{worst == 100.0, detail + "over 1000 seeds each"};
  });

  check("failure-taxonomy", 0, [workers] {
    bool ok = true;
    std::string detail;
    for (int views : {1, 3}) {
      auto s = spec(Mode::simulate, 2000);
      s.scene.views = views;
      s.scene.rho = 0.8;
      s.scene.sigma = 0.2;
      s.scene.p_miss = 0.1;
      s.scene.p_drift = 0.05;
      s.scene.p_ctrl = 0.1;
      s.scene.occlusion = 0.2;
      const auto r = run_experiment(s, workers).rows[0];
      const double sum = *r.case1 + *r.case2 + *r.case3;
      ok = ok && *r.fail > 0 && std::abs(sum - 100.0) < 1e-9 && (views > 1 || *r.case2 == 0.0) && *r.sr <= *r.cmr;
      detail += fmt("V=%.0f fail %.1f%% = case1 %.1f + ", views, *r.fail, *r.case1) +
                fmt("case2 %.1f + case3 %.1f; ", *r.case2, *r.case3);
    }
    return Outcome{ok, detail + "2000 seeds each"};
  });

  check("ablation vote>=average", 180, [workers] {
    auto s = spec(Mode::ground, 5000);
    s.scene.rho = 0.8;
    s.scene.sigma = 0.2;
    s.scene.sigma_ref = 0.05;
    s.scene.K = 5;
    s.scene.ref_outliers = 1;
    s.sweep.selector = {Selector::vote, Selector::average};
    const auto rows = run_experiment(s, workers).rows;
    const double vote = *rows[0].retrieval, avg = *rows[1].retrieval;
    return Outcome{vote >= avg, fmt("retrieval vote %.2f%% vs average %.2f%% (gap %+.2f), one corrupted reference of 5",
                                    vote, avg, vote - avg)};
  });

  check("ablation K-monotone", 180, [workers] {
    auto s = spec(Mode::ground, 5000);
    s.scene.rho = 0.8;
    s.scene.sigma = 0.15;
    s.scene.sigma_ref = 0.3;
    s.sweep.K = {1, 3, 5, 7};
    const auto rows = run_experiment(s, workers).rows;
    bool ok = true;
    std::string detail = "retrieval";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0) ok = ok && *rows[i].retrieval >= *rows[i - 1].retrieval;
      detail += fmt(" K=%.0f %.2f%%", s.sweep.K[i], *rows[i].retrieval);
    }
    return Outcome{ok, detail};
  });

  check("ablation mask>=box", 180, [workers] {
    auto s = spec(Mode::prompt, 5000);
    s.scene.overlap_pair = true;
    s.sweep.prompt = {sim::PromptMode::mask, sim::PromptMode::box};
    const auto rows = run_experiment(s, workers).rows;
    const double mask = *rows[0].identification, box = *rows[1].identification;
    return Outcome{mask >= box, fmt("target identification mask %.2f%% vs box %.2f%% with an overlapping distractor",
                                    mask, box)};
  });

  check("determinism", 0, [workers] {
    auto s = spec(Mode::ablate, 300);
    s.name = "determinism";
    s.trace = true;
    s.scene.views = 3;
    s.scene.rho = 0.8;
    s.scene.sigma = 0.2;
    s.scene.p_drift = 0.1;
    s.scene.p_ctrl = 0.2;
    s.sweep.selector = {Selector::vote, Selector::average};
    s.sweep.fusion = {Fusion::independent, Fusion::exact};
    const auto dir = std::filesystem::temp_directory_path() / ("vap_acceptance_" + std::to_string(::getpid()));
    const auto a = write_reports(s, run_experiment(s, 1), dir / "a");
    const auto b = write_reports(s, run_experiment(s, std::max(2, workers)), dir / "b");
    const bool same = body(slurp(a.csv)) == body(slurp(b.csv)) && body(slurp(a.jsonl)) == body(slurp(b.jsonl)) &&
                      slurp(a.episodes) == slurp(b.episodes);
    std::filesystem::remove_all(dir);
    return Outcome{same, "two runs (1 and " + std::to_string(std::max(2, workers)) +
                             " workers): CSV, JSONL and episode records identical below the timestamp line"};
  });

  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
