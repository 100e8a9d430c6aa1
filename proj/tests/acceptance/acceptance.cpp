// Acceptance gate. Prints one PASS/FAIL line per criterion; exits non-zero
// when any selected criterion fails.
//
//   sgdn_acceptance            all criteria
//   sgdn_acceptance 3 7        only criteria 3 and 7

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../oracles.hpp"
#include "../sgdet_cases.hpp"
#include "sgdn/config.hpp"
#include "sgdn/errors.hpp"
#include "sgdn/grad_check.hpp"
#include "sgdn/metrics.hpp"
#include "sgdn/sg_decoder.hpp"
#include "sgdn/trainer.hpp"

using namespace sgdn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Real median(std::vector<Real> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 -------------------------------------------------------------------

Outcome ssga_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::uniform_int_distribution<int> pick(0, 3), pick_d(0, 2);
  const int ns[] = {2, 3, 5, 8};
  const Index ds[] = {4, 8, 16};
  std::uniform_real_distribution<Real> c(0.1, 0.9), s(0.05, 0.5);
  Real worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Cover every (N, D) pair, then draw the rest at random.
    const int n = trial < 12 ? ns[trial % 4] : ns[pick(rng)];
    const Index d = trial < 12 ? ds[trial / 4] : ds[pick_d(rng)];
    ParameterStore store;
    const SsgaLayer layer = SsgaLayer::create(store, "ssga", d, d >= 8 ? 2 : 1, rng);
    ad::Tape tape(store);
    Matrix boxes(n, 4);
    for (int i = 0; i < n; ++i) boxes.row(i) << c(rng), c(rng), s(rng), s(rng);
    const TokenSet tokens{tape.leaf(normal_matrix(n, d, 1.0, rng)), tape.leaf(normal_matrix(1, d, 1.0, rng))};
    const ad::Var g = build_scene_graph_matrix(tape, tokens, boxes);
    const Matrix sparse = layer(tape, tokens, g, SsgaMode::kSparse).objects.value();
    const Matrix dense = layer(tape, tokens, g, SsgaMode::kDenseMasked).objects.value();
    worst = std::max(worst, (sparse - dense).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 30, fmt("max abs diff %.2e over 100 configs, %.2f s", worst, secs)};
}

// ---- 2 -------------------------------------------------------------------

Outcome matching_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  std::uniform_int_distribution<int> size(1, 7), small_int(0, 4);
  std::uniform_real_distribution<Real> u(0.0, 10.0);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng), k = size(rng);
    Matrix cost(n, k);
    // Every fourth matrix uses small integers so ties are common.
    for (Index i = 0; i < cost.size(); ++i) cost.data()[i] = trial % 4 == 0 ? small_int(rng) : u(rng);
    const Assignment a = hungarian_match(cost);
    const oracle::BruteAssignment b = oracle::brute_force_match(cost, 1e-9);
    Real total = 0.0;
    for (const auto& [i, j] : a.pairs) total += cost(i, j);
    if (a.pairs != b.pairs || std::abs(total - b.total) > 1e-9) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30, fmt("%d/200 assignments differ from brute force, %.2f s", mismatches, secs)};
}

// ---- 3 -------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  int failed = 0, checked = 0;
  Real worst_op = 0.0, worst_model = 0.0;
  std::string failures;
  for (const auto& entry : grad_check_registry()) {
    const Real tol = entry.end_to_end ? 1e-3 : 1e-4;
    ++checked;
    try {
      const GradCheckReport r = gradient_check(entry.id, 3, tol);
      (entry.end_to_end ? worst_model : worst_op) = std::max(entry.end_to_end ? worst_model : worst_op, r.max_rel_error);
    } catch (const CheckFailed& e) {
      ++failed;
      failures += " " + entry.id;
    }
  }
  // The checker itself must reject a wrong backward pass.
  bool caught = false;
  try {
    gradient_check("corrupted", corrupted_case, 1, 1e-4);
  } catch (const CheckFailed&) {
    caught = true;
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && caught && secs < 120,
          fmt("%d/%d checks pass; worst op %.2e, full model %.2e; corrupted op %s; %.1f s%s", checked - failed, checked,
              worst_op, worst_model, caught ? "rejected" : "NOT rejected", secs, failures.c_str())};
}

// ---- 4 -------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitConfig base = default_split();
  SplitConfig all;
  all.base_categories = base.all_categories();
  all.base_relations = base.all_relations();
  const auto data = generate_samples(16, 7, SynthConfig{}, all.base_categories, all.base_relations);
  SgdnModel model = SgdnModel::create(ModelConfig{}, 1);
  TrainConfig t;
  t.candidates = CandidateSource::kAll;
  t.optimizer = OptimizerKind::kSgd;
  t.learning_rate = 0.05;
  t.steps = 250;
  Trainer trainer(model, t, all);
  Real ap = 0.0;
  int reached = -1;
  for (int done = 0; done < 2000 && reached < 0;) {
    trainer.run(data);
    done += t.steps;
    ap = evaluate_detection(predict_samples(model, data, all.base_categories, all.base_relations, {}),
                            ground_truth_of(data), all, 0.5)
             .ap50_all;
    if (ap == 1.0) reached = done;
  }
  const double secs = seconds_since(t0);
  if (reached < 0) return {false, fmt("AP50(all) %.4f after 2000 steps, %.0f s", ap, secs)};
  return {secs < 600, fmt("AP50(all) 1.0 on the 16 training samples after %d steps, %.0f s", reached, secs)};
}

// ---- 5 and 6 ---------------------------------------------------------------

struct OvData {
  RunConfig cfg;
  std::vector<GroundingSample> train;
  std::vector<GroundingSample> val;
};

const OvData& ov_data() {
  static const OvData d = [] {
    OvData o;
    const SplitConfig& split = o.cfg.data.split;
    o.train = generate_samples(static_cast<std::size_t>(o.cfg.data.train_samples), o.cfg.data.seed, o.cfg.data.synth,
                               split.base_categories, split.base_relations);
    o.val = generate_samples(static_cast<std::size_t>(o.cfg.data.val_samples), o.cfg.data.seed + 1, o.cfg.data.synth,
                             split.all_categories(), split.all_relations());
    return o;
  }();
  return d;
}

// Both stages with the default run configuration.
SgdnModel train_default(bool use_ssga, std::uint64_t seed) {
  const OvData& d = ov_data();
  ModelConfig mc = d.cfg.model;
  mc.decoder.use_ssga = use_ssga;
  SgdnModel model = SgdnModel::create(mc, seed);
  for (TrainConfig t : {d.cfg.train, d.cfg.fixed_set}) {
    t.seed = seed;
    if (t.steps > 0) Trainer(model, t, d.cfg.data.split).run(d.train);
  }
  return model;
}

MetricsReport evaluate_val(const SgdnModel& model) {
  const OvData& d = ov_data();
  const SplitConfig& split = d.cfg.data.split;
  return evaluate(predict_samples(model, d.val, split.all_categories(), split.all_relations(), {}),
                  ground_truth_of(d.val), split, d.cfg.eval.iou_threshold);
}

Outcome ov_generalization() {
  const auto t0 = std::chrono::steady_clock::now();
  const OvData& d = ov_data();
  const int violations = split_violations(d.train, d.cfg.data.split);
  std::vector<Real> sgdn, ablation;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (bool ssga : {true, false}) {
      const MetricsReport r = evaluate_val(train_default(ssga, seed));
      (ssga ? sgdn : ablation).push_back(r.ap50_novel);
      std::printf("  seed %llu %-8s novel AP50 %.4f  base %.4f  R@50 %.4f  (%.0f s)\n",
                  static_cast<unsigned long long>(seed), ssga ? "SGDN" : "ablation", r.ap50_novel, r.ap50_base,
                  r.recall_at_50, seconds_since(t0));
      std::fflush(stdout);
    }
  }
  const Real ms = median(sgdn), ma = median(ablation);
  const double secs = seconds_since(t0);
  return {violations == 0 && ms >= ma && ms > 0.2 && secs < 7200,
          fmt("median novel AP50 SGDN %.4f vs ablation %.4f (need >= and > 0.2); %zu train samples, %d split "
              "violations; %.0f s",
              ms, ma, d.train.size(), violations, secs)};
}

Outcome sgdet_capability() {
  const auto t0 = std::chrono::steady_clock::now();
  int crafted_ok = 0;
  const auto cases = sgdet_cases::load(SGDN_TEST_DATA_DIR "/sgdet");
  for (const auto& c : cases) {
    const SgdetRecall r = evaluate_sgdet(c.predictions, c.ground_truth, 0.5);
    if (r.at_50 == c.expected_r50 && r.at_100 == c.expected_r100) ++crafted_ok;
  }
  const MetricsReport r = evaluate_val(train_default(true, 0));
  const double secs = seconds_since(t0);
  return {r.recall_at_50 > 0 && crafted_ok == 5 && cases.size() == 5,
          fmt("val R@50 %.4f R@100 %.4f; crafted files %d/%zu exact; %.0f s", r.recall_at_50, r.recall_at_100,
              crafted_ok, cases.size(), secs)};
}

// ---- 7 -------------------------------------------------------------------

Outcome loss_and_freezing() {
  const LossBreakdown b = total_loss(1, 1, 1, 1, LossLambdas{});
  const auto split = default_split();
  const auto data = generate_samples(8, 21, SynthConfig{}, split.base_categories, split.base_relations);
  ModelConfig mc;
  mc.encoder.dim = mc.decoder.dim = mc.text.dim = 16;
  mc.encoder.ffn_dim = mc.decoder.ffn_dim = 32;
  mc.decoder.sgor_hidden = 16;
  SgdnModel model = SgdnModel::create(mc, 3);
  TrainConfig t;
  t.steps = 5;
  Trainer(model, t, split).run(data);
  std::vector<Matrix> before;
  for (Index i = 0; i < model.params().size(); ++i) before.push_back(model.params().value(static_cast<int>(i)));
  t.stage = Stage::kFixedSet;
  t.candidates = CandidateSource::kBase;
  t.steps = 10;
  Trainer fixed(model, t, split);
  fixed.run(data);
  const std::vector<int> rel = model.relation_parameter_ids();
  int changed_frozen = 0, moved_other = 0;
  for (Index i = 0; i < model.params().size(); ++i) {
    const bool frozen = std::find(rel.begin(), rel.end(), static_cast<int>(i)) != rel.end();
    const bool same = model.params().value(static_cast<int>(i)) == before[i];
    if (frozen && !same) ++changed_frozen;
    if (!frozen && !same) ++moved_other;
  }
  return {b.total == 5.0 && !rel.empty() && changed_frozen == 0 && moved_other > 0,
          fmt("total %.17g; %zu relation tensors, %d changed; %d other tensors updated", b.total, rel.size(),
              changed_frozen, moved_other)};
}

// ---- 8 -------------------------------------------------------------------

Outcome determinism() {
  const auto split = default_split();
  const auto train = generate_samples(32, 41, SynthConfig{}, split.base_categories, split.base_relations);
  const auto val = generate_samples(24, 42, SynthConfig{}, split.all_categories(), split.all_relations());
  auto run = [&] {
    SgdnModel model = SgdnModel::create(ModelConfig{}, 17);
    TrainConfig t;
    t.steps = 150;
    t.seed = 17;
    Real last = 0.0;
    Trainer(model, t, split).run(train, [&](const StepRecord& r) { last = r.loss.total; });
    t.stage = Stage::kFixedSet;
    t.candidates = CandidateSource::kBase;
    t.steps = 50;
    Trainer(model, t, split).run(train, [&](const StepRecord& r) { last = r.loss.total; });
    const MetricsReport m =
        evaluate(predict_samples(model, val, split.all_categories(), split.all_relations(), {}), ground_truth_of(val),
                 split);
    return std::pair{last, m.to_json()};
  };
  const auto [loss_a, metrics_a] = run();
  const auto [loss_b, metrics_b] = run();
  const Real diff = std::abs(loss_a - loss_b);
  return {diff < 1e-6 && metrics_a == metrics_b,
          fmt("final loss %.9f vs %.9f (diff %.1e); metrics %s", loss_a, loss_b, diff,
              metrics_a == metrics_b ? "identical" : "differ")};
}

// ---- 9 -------------------------------------------------------------------

Outcome parser_and_hygiene() {
  const auto split = default_split();
  const auto samples = generate_samples(500, 77, SynthConfig{}, split.all_categories(), split.all_relations());
  int exact = 0;
  for (const auto& s : samples) {
    try {
      const ParsedExpression p = parse_expression(s.expression);
      if (p.nouns == s.gt_categories && p.triplets == s.gt_triplets) ++exact;
    } catch (const Error&) {
    }
  }
  const RunConfig cfg;
  const auto train = generate_samples(static_cast<std::size_t>(cfg.data.train_samples), cfg.data.seed,
                                      cfg.data.synth, split.base_categories, split.base_relations);
  const int violations = split_violations(train, split);
  return {exact == 500 && violations == 0,
          fmt("%d/500 expressions round-trip; %d novel labels in %zu training samples", exact, violations, train.size())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "ssga-oracle", ssga_oracle},           {2, "matching-oracle", matching_oracle},
      {3, "gradient-suite", gradient_suite},     {4, "overfit", overfit},
      {5, "ov-generalization", ov_generalization}, {6, "sgdet", sgdet_capability},
      {7, "loss-and-freezing", loss_and_freezing}, {8, "determinism", determinism},
      {9, "parser-and-hygiene", parser_and_hygiene},
  };
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  app.add_option("criteria", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %d %-20s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
