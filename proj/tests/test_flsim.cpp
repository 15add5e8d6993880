#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sacomp/errors.hpp"
#include "sacomp/flsim/sim.hpp"

using namespace sacomp;
using namespace sacomp::flsim;

namespace {

TaskConfig small_task() {
  TaskConfig cfg;
  cfg.n_clients = 8;
  cfg.samples_per_client = 30;
  cfg.n_features = 12;
  cfg.n_classes = 4;
  cfg.label_alpha = 0.5;
  return cfg;
}

SimConfig small_sim() {
  SimConfig cfg;
  cfg.task = small_task();
  cfg.rounds = 3;
  cfg.clients_per_round = 4;
  cfg.n_seeds = 1;
  cfg.seed = 11;
  cfg.local.epochs = 1;
  cfg.local.lr = 0.2;
  cfg.local.batch_size = 10;
  return cfg;
}

}  // namespace

TEST_CASE("shards partition the training set") {
  const Task task = make_toy_task(small_task(), 3);
  std::size_t total = 0;
  std::vector<bool> seen(task.train.size(), false);
  for (const auto& shard : task.shards) {
    CHECK(shard.sample_count() >= 1);
    total += shard.sample_idx.size();
    for (auto i : shard.sample_idx) {
      CHECK_FALSE(seen[i]);
      seen[i] = true;
    }
  }
  CHECK(total == task.train.size());
}

TEST_CASE("a single client owns the whole dataset") {
  TaskConfig cfg = small_task();
  cfg.n_clients = 1;
  const Task task = make_toy_task(cfg, 5);
  CHECK(task.shards.size() == 1);
  CHECK(task.shards[0].sample_count() == task.train.size());
}

TEST_CASE("huge alpha gives near-IID label histograms") {
  TaskConfig cfg;
  cfg.n_clients = 5;
  cfg.samples_per_client = 1000;
  cfg.n_features = 4;
  cfg.n_classes = 4;
  cfg.label_alpha = 1e6;
  const Task task = make_toy_task(cfg, 7);

  std::vector<double> global(cfg.n_classes, 0.0);
  for (auto y : task.train.y) global[y] += 1.0;
  for (auto& g : global) g /= static_cast<double>(task.train.size());

  for (const auto& shard : task.shards) {
    std::vector<double> local(cfg.n_classes, 0.0);
    for (auto i : shard.sample_idx) local[task.train.y[i]] += 1.0;
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      CHECK(std::fabs(local[c] / static_cast<double>(shard.sample_count()) -
                      global[c]) < 0.05);
    }
  }
}

TEST_CASE("invalid task configs are rejected") {
  TaskConfig cfg = small_task();
  cfg.samples_per_client = 0;
  CHECK_THROWS_AS(make_toy_task(cfg, 1), ConfigError);
  cfg = small_task();
  cfg.n_classes = 1;
  CHECK_THROWS_AS(make_toy_task(cfg, 1), ConfigError);
}

TEST_CASE("zero learning rate trains to a zero delta") {
  const Task task = make_toy_task(small_task(), 9);
  const Model model = Model::init(ModelConfig{}, 12, 4, 1);
  TrainParams tp;
  tp.lr = 0.0;
  const auto delta = local_train(model, task.train, task.shards[0], tp, 4);
  for (const auto& t : delta) {
    for (double v : t.data) CHECK(v == 0.0);
  }
}

TEST_CASE("one SGD step equals the analytic gradient step") {
  const Task task = make_toy_task(small_task(), 13);
  Model model = Model::init(ModelConfig{}, 12, 4, 1);
  // Give the model nonzero state so the gradient is not symmetric.
  for (auto& t : model.params) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      t.data[i] = 0.01 * static_cast<double>((i % 7)) - 0.02;
    }
  }
  ClientShard shard;
  shard.client_id = 0;
  shard.sample_idx = {3};
  TrainParams tp;
  tp.lr = 0.15;
  tp.epochs = 1;
  tp.batch_size = 1;
  const auto delta = local_train(model, task.train, shard, tp, 99);

  // Closed-form softmax-CE gradient for the single sample.
  const double* x = task.train.sample(3);
  const std::uint32_t label = task.train.y[3];
  std::vector<double> logits(4, 0.0);
  const auto& w = model.params[0];
  for (std::size_t j = 0; j < 4; ++j) {
    logits[j] = model.params[1].data[j];
    for (std::size_t i = 0; i < 12; ++i) logits[j] += x[i] * w.data[j * 12 + i];
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  std::vector<double> probs(4);
  for (std::size_t j = 0; j < 4; ++j) {
    probs[j] = std::exp(logits[j] - mx);
    total += probs[j];
  }
  for (auto& v : probs) v /= total;
  probs[label] -= 1.0;

  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(delta[0].data[j * 12 + i] ==
            doctest::Approx(-tp.lr * probs[j] * x[i]).epsilon(1e-12));
    }
    CHECK(delta[1].data[j] == doctest::Approx(-tp.lr * probs[j]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients agree with finite differences") {
  const Task task = make_toy_task(small_task(), 17);
  std::vector<std::uint32_t> batch{0, 1, 2, 3, 4};
  for (ModelType type : {ModelType::Logistic, ModelType::Mlp}) {
    ModelConfig mc;
    mc.type = type;
    mc.hidden = 6;
    Model model = Model::init(mc, 12, 4, 21);
    for (auto& t : model.params) {
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        t.data[i] += 0.05 * std::sin(static_cast<double>(i + t.rows));
      }
    }
    const auto grad = compute_gradient(model, task.train, batch);
    const double h = 1e-6;
    for (std::size_t t = 0; t < model.params.size(); ++t) {
      for (std::size_t i = 0; i < model.params[t].data.size(); i += 7) {
        Model plus = model;
        plus.params[t].data[i] += h;
        Model minus = model;
        minus.params[t].data[i] -= h;
        const double numeric = (mean_loss(plus, task.train, batch) -
                                mean_loss(minus, task.train, batch)) /
                               (2 * h);
        CHECK(grad[t].data[i] ==
              doctest::Approx(numeric).epsilon(1e-4).scale(1e-6));
      }
    }
  }
}

TEST_CASE("an uncompressed single-client round applies the client delta") {
  SimConfig cfg = small_sim();
  cfg.task.n_clients = 1;
  cfg.clients_per_round = 1;
  cfg.server_lr = 1.0;
  cfg.rounds = 1;
  SchemeConfig scheme;  // uncompressed

  Simulation sim(cfg, scheme, 31);
  const Model before = sim.model();
  sim.step();
  const Model& after = sim.model();

  const auto delta = local_train(before, sim.task().train, sim.task().shards[0],
                                 cfg.local, sim.last_train_seeds()[0]);
  for (std::size_t t = 0; t < delta.size(); ++t) {
    double max_abs = 0.0;
    for (double v : delta[t].data) max_abs = std::max(max_abs, std::fabs(v));
    for (std::size_t i = 0; i < delta[t].data.size(); ++i) {
      const double applied = after.params[t].data[i] - before.params[t].data[i];
      // 32-bit fixed point leaves ~1e-7 relative resolution.
      CHECK(applied == doctest::Approx(delta[t].data[i])
                           .epsilon(1e-6)
                           .scale(std::max(max_abs, 1e-9)));
    }
  }
}

TEST_CASE("secure rounds equal the plaintext pipeline bit for bit") {
  SimConfig cfg = small_sim();
  cfg.rounds = 3;
  cfg.weighted = true;

  std::vector<SchemeConfig> schemes;
  {
    SchemeConfig s;
    s.kind = SchemeKind::Uncompressed;
    schemes.push_back(s);
    s = SchemeConfig{};
    s.kind = SchemeKind::SQ;
    s.b = 8;
    s.p = min_safe_bitwidth(8, cfg.clients_per_round);
    schemes.push_back(s);
    s = SchemeConfig{};
    s.kind = SchemeKind::Prune;
    s.sparsity = 0.5;
    s.p = 32;
    schemes.push_back(s);
    s = SchemeConfig{};
    s.kind = SchemeKind::PQ;
    s.pq = pq::PQConfig{8, 4};
    schemes.push_back(s);
  }

  for (const auto& scheme : schemes) {
    Simulation secure(cfg, scheme, 41, true);
    Simulation plain(cfg, scheme, 41, false);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      const auto ms = secure.step();
      const auto mp = plain.step();
      // The analytic byte accounting matches the serialized frames.
      CHECK(ms.uplink_bytes == mp.uplink_bytes);
      CHECK(ms.payload_bits == mp.payload_bits);
    }
    for (std::size_t t = 0; t < secure.model().params.size(); ++t) {
      CHECK(secure.model().params[t].data == plain.model().params[t].data);
    }
  }

  // Same equivalence on the two-layer model, whose layers adapt to
  // different PQ block sizes (12 -> 4, 6 -> 3).
  cfg.model.type = ModelType::Mlp;
  cfg.model.hidden = 6;
  SchemeConfig pq_odd;  // non-power-of-two k exercises mod-k masking
  pq_odd.kind = SchemeKind::PQ;
  pq_odd.pq = pq::PQConfig{5, 4};
  for (const auto& scheme : {schemes[1], schemes[2], schemes[3], pq_odd}) {
    Simulation secure(cfg, scheme, 53, true);
    Simulation plain(cfg, scheme, 53, false);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      secure.step();
      plain.step();
    }
    REQUIRE(secure.model().params.size() == 4);
    for (std::size_t t = 0; t < secure.model().params.size(); ++t) {
      CHECK(secure.model().params[t].data == plain.model().params[t].data);
    }
  }
}

TEST_CASE("invalid round shapes and weight budgets are rejected") {
  SimConfig cfg = small_sim();
  cfg.clients_per_round = cfg.task.n_clients + 1;
  SchemeConfig scheme;
  CHECK_THROWS_AS(Simulation(cfg, scheme, 1), ConfigError);

  // Errors surface from threaded sweeps too.
  SimConfig bad = small_sim();
  bad.clients_per_round = bad.task.n_clients + 1;
  bad.threads = 3;
  bad.schemes = {scheme};
  CHECK_THROWS_AS(run_experiment(bad), ConfigError);

  // A prune group too narrow for the worst-case weighted sum cannot ship.
  SimConfig tight = small_sim();
  tight.weighted = true;  // max weight 8 * 30 = 240 -> needs 8 margin bits
  SchemeConfig prune;
  prune.kind = SchemeKind::Prune;
  prune.sparsity = 0.5;
  prune.p = 9;
  CHECK_THROWS_AS(Simulation(tight, prune, 1), CapacityError);
}

TEST_CASE("the aggregate-update refresh source trains") {
  SimConfig cfg = small_sim();
  cfg.rounds = 5;
  cfg.refresh.source = RefreshPolicy::Source::AggregateUpdate;
  cfg.refresh.period = 2;
  SchemeConfig scheme;
  scheme.kind = SchemeKind::SQ;
  scheme.b = 8;
  scheme.p = 12;
  Simulation sim(cfg, scheme, 61);
  double acc = 0.0;
  for (std::size_t r = 0; r < cfg.rounds; ++r) acc = sim.step().accuracy;
  CHECK(acc > 1.0 / 4.0);  // beats chance on the 4-class task
  for (const auto& t : sim.model().params) {
    for (double v : t.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("SQ at the safe margin reports zero overflows") {
  SimConfig cfg = small_sim();
  cfg.rounds = 4;
  SchemeConfig scheme;
  scheme.kind = SchemeKind::SQ;
  scheme.b = 8;
  scheme.p = min_safe_bitwidth(8, cfg.clients_per_round);
  Simulation sim(cfg, scheme, 43);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    CHECK(sim.step().overflow_frac == 0.0);
  }
}

TEST_CASE("stale refresh keeps codec parameters constant") {
  SimConfig cfg = small_sim();
  cfg.rounds = 4;
  cfg.refresh.period = 1000;  // calibrate once at round 0
  SchemeConfig scheme;
  scheme.kind = SchemeKind::SQ;
  scheme.b = 8;
  scheme.p = 12;
  Simulation sim(cfg, scheme, 47);
  sim.step();
  const auto first = sim.last_plan().codecs;
  for (int r = 0; r < 3; ++r) sim.step();
  const auto later = sim.last_plan().codecs;
  REQUIRE(first.size() == later.size());
  for (std::size_t c = 0; c < first.size(); ++c) {
    CHECK(first[c].qparams == later[c].qparams);
  }

  // Per-round refresh recalibrates as update magnitudes shrink.
  cfg.refresh.period = 1;
  Simulation fresh(cfg, scheme, 47);
  fresh.step();
  const auto early_qp = fresh.last_plan().codecs[0].qparams;
  for (int r = 0; r < 3; ++r) fresh.step();
  CHECK(fresh.last_plan().codecs[0].qparams != early_qp);
}

TEST_CASE("experiment accounting: factors and determinism") {
  SimConfig cfg = small_sim();
  cfg.rounds = 2;
  cfg.n_seeds = 2;
  cfg.model.bias = false;  // fully compressible model
  cfg.task.n_features = 16;
  cfg.task.n_classes = 4;

  SchemeConfig base;
  base.label = "baseline";
  SchemeConfig sq;
  sq.kind = SchemeKind::SQ;
  sq.label = "sq16";
  sq.b = 8;
  sq.p = 16;
  SchemeConfig pqs;
  pqs.kind = SchemeKind::PQ;
  pqs.label = "pq";
  pqs.pq = pq::PQConfig{32, 8};
  cfg.schemes = {base, sq, pqs};

  const auto result = run_experiment(cfg);
  CHECK(result.schemes[0].compression_factor == doctest::Approx(1.0));
  CHECK(result.schemes[1].compression_factor == doctest::Approx(2.0));
  // 32-bit weights vs 5 bits per 8 weights.
  CHECK(result.schemes[2].compression_factor == doctest::Approx(32.0 / 0.625));

  // Codebook broadcast overhead as a percentage of the model size:
  // k*d*4 bytes over 16*4 weights * 4 bytes.
  CHECK(result.schemes[2].codebook_downlink_pct ==
        doctest::Approx(100.0 * (32 * 8 * 4) / (16.0 * 4.0 * 4.0)));
  CHECK(result.schemes[0].codebook_downlink_pct == 0.0);
  CHECK(result.trace_json().find("codebook_downlink_pct") != std::string::npos);

  const auto csv = result.to_csv();
  CHECK(csv.find("scheme,params,uplink_kb,compression_factor,overflow_pct,"
                 "accuracy_mean,accuracy_std") == 0);
  CHECK(csv.find("baseline") != std::string::npos);

  const auto again = run_experiment(cfg);
  CHECK(again.to_csv() == csv);
  CHECK(again.trace_json() == result.trace_json());

  // Threaded sweeps give the identical table.
  SimConfig threaded = cfg;
  threaded.threads = 4;
  CHECK(run_experiment(threaded).to_csv() == csv);
}

TEST_CASE("config parsing round trip and errors") {
  const char* text = R"({
    "task": {"n_clients": 8, "samples_per_client": 20, "n_features": 6,
              "n_classes": 3, "label_alpha": 0.7},
    "model": {"type": "logistic", "bias": true},
    "rounds": 2, "clients_per_round": 4, "n_seeds": 1, "seed": 5,
    "local": {"epochs": 1, "lr": 0.1, "batch_size": 8},
    "server_lr": 0.9, "weighted": false,
    "refresh": {"period": 5, "source": "aggregate_update"},
    "schemes": [
      {"kind": "uncompressed", "label": "base"},
      {"kind": "sq", "b": 4, "p": 9},
      {"kind": "prune", "sparsity": 0.25},
      {"kind": "pq", "k": 8, "d": 2}
    ]
  })";
  const SimConfig cfg = parse_sim_config(text);
  CHECK(cfg.task.n_clients == 8);
  CHECK(cfg.refresh.period == 5);
  CHECK(cfg.refresh.source == RefreshPolicy::Source::AggregateUpdate);
  CHECK_FALSE(cfg.weighted);
  REQUIRE(cfg.schemes.size() == 4);
  CHECK(cfg.schemes[1].kind == SchemeKind::SQ);
  CHECK(cfg.schemes[1].b == 4);
  CHECK(cfg.schemes[2].sparsity == 0.25);
  CHECK(cfg.schemes[3].pq.k == 8);

  CHECK_THROWS_AS(parse_sim_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config(R"({"schemes": []})"), ConfigError);
  CHECK_THROWS_AS(parse_sim_config(R"({"schemes": [{"kind": "nope"}]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_sim_config(R"({"schemes": [{"kind": "sq", "b": 9, "p": 4}]})"),
                  ConfigError);
}
