#include "sacomp/flsim/sim.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "sacomp/errors.hpp"

namespace sacomp::flsim {

namespace {

GroupVector slice(const GroupVector& v, std::size_t start, std::size_t len) {
  std::vector<std::uint32_t> vals(v.values().begin() + start,
                                  v.values().begin() + start + len);
  return GroupVector(std::move(vals), v.bit_width());
}

pq::Matrix tensor_as_matrix(const Tensor& t) {
  pq::Matrix m(t.rows, t.cols);
  m.data = t.data;
  return m;
}

double l2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string SchemeConfig::params_string() const {
  switch (kind) {
    case SchemeKind::Uncompressed:
      return "p=32";
    case SchemeKind::SQ:
      return "b=" + std::to_string(b) + ",p=" + std::to_string(p);
    case SchemeKind::Prune:
      return "sparsity=" + fmt("%g", sparsity) + ",p=" + std::to_string(p);
    case SchemeKind::PQ:
      return "k=" + std::to_string(pq.k) + ",d=" + std::to_string(pq.d);
  }
  return "";
}

Simulation::Simulation(const SimConfig& cfg, const SchemeConfig& scheme,
                       std::uint64_t seed, bool secure)
    : cfg_(cfg),
      scheme_(scheme),
      task_(make_toy_task(cfg.task, seed)),
      model_(Model::init(cfg.model, cfg.task.n_features, cfg.task.n_classes,
                         seed ^ 0x6d6f64656c5ull)),
      rng_(seed),
      rng_codec_(seed ^ 0x9e3779b97f4a7c15ull),
      secure_(secure) {
  if (cfg.clients_per_round == 0 || cfg.clients_per_round > cfg.task.n_clients) {
    throw ConfigError("clients_per_round must be in [1, n_clients]");
  }
  if (cfg.refresh.period == 0) {
    throw ConfigError("refresh period must be >= 1");
  }
  // Weight budget: margins are sized for the worst-case selected weight sum.
  const std::uint64_t max_weight =
      cfg.weighted ? cfg.task.n_clients * cfg.task.samples_per_client
                   : cfg.task.n_clients;
  passthrough_bits_ = 32 - ceil_log2(max_weight);
  if (passthrough_bits_ < 2) {
    throw CapacityError("weight budget leaves no passthrough precision");
  }
  if (scheme.kind == SchemeKind::Prune) {
    prune_value_bits_ = scheme.p - ceil_log2(max_weight);
    if (prune_value_bits_ < 2) {
      throw CapacityError("prune bit-width too small for the weight budget");
    }
  }
}

std::uint64_t Simulation::baseline_payload_bits() const {
  std::uint64_t bits = 0;
  for (const Tensor& t : model_.params) bits += t.size() * 32ull;
  return bits;
}

std::vector<Tensor> Simulation::source_update(std::uint64_t salt) {
  if (cfg_.refresh.source == RefreshPolicy::Source::AggregateUpdate &&
      !last_aggregate_.empty()) {
    return last_aggregate_;
  }
  ClientShard proxy_shard;
  proxy_shard.client_id = 0;
  proxy_shard.sample_idx.resize(task_.proxy.size());
  std::iota(proxy_shard.sample_idx.begin(), proxy_shard.sample_idx.end(), 0u);
  return local_train(model_, task_.proxy, proxy_shard, cfg_.local,
                     rng_codec_.next64() ^ salt);
}

void Simulation::maybe_refresh() {
  if (codecs_ready_ && round_ % cfg_.refresh.period != 0) return;

  const auto source = source_update(round_);
  double source_norm = 0.0;
  for (const Tensor& t : source) source_norm += l2(t.data);
  if (source_norm == 0.0 && codecs_ready_) return;  // keep previous parameters

  std::vector<std::size_t> compressed;
  std::vector<std::size_t> passthrough;
  for (std::size_t t = 0; t < model_.params.size(); ++t) {
    if (scheme_.kind != SchemeKind::Uncompressed && model_.params[t].is_matrix) {
      compressed.push_back(t);
    } else {
      passthrough.push_back(t);
    }
  }

  passthrough_qparams_.clear();
  for (std::size_t t : passthrough) {
    passthrough_qparams_.push_back(
        calibrate_minmax(source[t].data, passthrough_bits_, QScheme::Symmetric));
  }

  codecs_.assign(compressed.size(), TensorCodec{});
  const MaskSeed prune_round_seed =
      MaskSeed::from_words(rng_codec_.next64(), rng_codec_.next64());
  for (std::size_t c = 0; c < compressed.size(); ++c) {
    const std::size_t t = compressed[c];
    TensorCodec& codec = codecs_[c];
    switch (scheme_.kind) {
      case SchemeKind::SQ:
        codec.qparams =
            calibrate_minmax(source[t].data, scheme_.b, QScheme::Symmetric);
        break;
      case SchemeKind::Prune: {
        codec.prune.mask_seed = derive_subseed(prune_round_seed, t);
        codec.prune.sparsity = scheme_.sparsity;
        codec.prune.size = source[t].size();
        const auto kept = compact(source[t].data, codec.prune);
        codec.qparams =
            calibrate_minmax(kept, prune_value_bits_, QScheme::Symmetric);
        break;
      }
      case SchemeKind::PQ: {
        codec.d = pq::adapt_block_size(model_.params[t].rows, scheme_.pq.d);
        const auto blocks = pq::split_blocks(tensor_as_matrix(source[t]), codec.d);
        const MaskSeed kmeans_seed =
            MaskSeed::from_words(rng_codec_.next64(), rng_codec_.next64());
        codec.codebook =
            pq::train_codebook(blocks, scheme_.pq.k, 50, kmeans_seed).codebook;
        break;
      }
      case SchemeKind::Uncompressed:
        break;
    }
  }
  codecs_ready_ = true;
}

RoundPlan Simulation::make_plan() {
  maybe_refresh();

  RoundPlan plan;
  plan.round_id = static_cast<std::uint32_t>(round_);
  plan.p = scheme_.p;
  for (std::size_t t = 0; t < model_.params.size(); ++t) {
    if (scheme_.kind != SchemeKind::Uncompressed && model_.params[t].is_matrix) {
      plan.compressed.push_back(t);
    } else {
      plan.passthrough.push_back(t);
    }
  }
  plan.codecs = codecs_;
  plan.passthrough_qparams = passthrough_qparams_;

  std::vector<std::uint32_t> ids(cfg_.task.n_clients);
  std::iota(ids.begin(), ids.end(), 0u);
  rng_.shuffle(ids);
  ids.resize(cfg_.clients_per_round);
  plan.client_ids = ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    plan.client_seeds.push_back(
        MaskSeed::from_words(rng_.next64(), rng_.next64()));
    plan.client_weights.push_back(
        cfg_.weighted ? task_.shards[ids[i]].sample_count() : 1ull);
  }
  return plan;
}

RoundMetrics Simulation::step() {
  const RoundPlan plan = make_plan();
  const std::size_t n_clients = plan.client_ids.size();
  const std::uint64_t total_weight = std::accumulate(
      plan.client_weights.begin(), plan.client_weights.end(), 0ull);

  last_train_seeds_.clear();
  for (std::size_t i = 0; i < n_clients; ++i) {
    last_train_seeds_.push_back(rng_.next64());
  }

  // Local training, parallel across clients.
  std::vector<std::vector<Tensor>> deltas(n_clients);
  {
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(cfg_.threads, n_clients));
    if (workers <= 1) {
      for (std::size_t i = 0; i < n_clients; ++i) {
        deltas[i] = local_train(model_, task_.train, task_.shards[plan.client_ids[i]],
                                cfg_.local, last_train_seeds_[i]);
      }
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < n_clients;
               i = next.fetch_add(1)) {
            deltas[i] = local_train(model_, task_.train,
                                    task_.shards[plan.client_ids[i]], cfg_.local,
                                    last_train_seeds_[i]);
          }
        });
      }
      for (auto& th : pool) th.join();
    }
  }

  // --- client compression ---------------------------------------------------
  const bool is_pq = scheme_.kind == SchemeKind::PQ;
  const std::size_t n_comp = plan.compressed.size();

  // Scheme segment layout.
  std::vector<std::size_t> seg_offsets(n_comp, 0);  // elements (or blocks)
  std::size_t seg_len = 0;
  std::vector<std::size_t> pq_block_rows(n_comp, 0);
  for (std::size_t c = 0; c < n_comp; ++c) {
    const Tensor& t = model_.params[plan.compressed[c]];
    seg_offsets[c] = seg_len;
    switch (scheme_.kind) {
      case SchemeKind::SQ:
        seg_len += t.size();
        break;
      case SchemeKind::Prune:
        seg_len += plan.codecs[c].prune.kept_count();
        break;
      case SchemeKind::PQ:
        pq_block_rows[c] = t.rows / plan.codecs[c].d;
        seg_len += pq_block_rows[c] * t.cols;
        break;
      case SchemeKind::Uncompressed:
        break;
    }
  }
  std::size_t pass_len = 0;
  std::vector<std::size_t> pass_offsets(plan.passthrough.size(), 0);
  for (std::size_t j = 0; j < plan.passthrough.size(); ++j) {
    pass_offsets[j] = pass_len;
    pass_len += model_.params[plan.passthrough[j]].size();
  }

  // Mask stream layout: scheme words first, then the passthrough segment.
  const std::uint64_t scheme_words =
      is_pq ? seg_len * (std::has_single_bit(scheme_.pq.k) ? 1ull : 2ull)
            : seg_len;

  sq_oracle_ = SqRoundOracle{};
  if (scheme_.kind == SchemeKind::SQ) {
    sq_oracle_.per_tensor_client_q.resize(n_comp);
    for (std::size_t c = 0; c < n_comp; ++c) {
      sq_oracle_.zero_points.push_back(plan.codecs[c].qparams.zero_point);
    }
  }

  std::vector<GroupVector> scheme_vecs;     // SQ / prune, width p
  std::vector<pq::Assignments> assign_vecs; // PQ
  std::vector<GroupVector> pass_vecs;       // width 32
  scheme_vecs.reserve(n_clients);
  pass_vecs.reserve(n_clients);

  for (std::size_t i = 0; i < n_clients; ++i) {
    const auto& delta = deltas[i];
    if (seg_len > 0) {
      if (is_pq) {
        pq::Assignments flat;
        flat.block_rows = seg_len;
        flat.cols = 1;
        flat.indices.reserve(seg_len);
        for (std::size_t c = 0; c < n_comp; ++c) {
          const std::size_t t = plan.compressed[c];
          const auto blocks =
              pq::split_blocks(tensor_as_matrix(delta[t]), plan.codecs[c].d);
          const auto a = pq::assign(blocks, plan.codecs[c].codebook);
          flat.indices.insert(flat.indices.end(), a.indices.begin(),
                              a.indices.end());
        }
        assign_vecs.push_back(std::move(flat));
      } else {
        std::vector<std::uint32_t> vals;
        vals.reserve(seg_len);
        for (std::size_t c = 0; c < n_comp; ++c) {
          const std::size_t t = plan.compressed[c];
          const TensorCodec& codec = plan.codecs[c];
          if (scheme_.kind == SchemeKind::SQ) {
            GroupVector q = quantize(delta[t].data, codec.qparams);
            if (!sq_oracle_.per_tensor_client_q.empty()) {
              sq_oracle_.per_tensor_client_q[c].push_back(q);
            }
            vals.insert(vals.end(), q.values().begin(), q.values().end());
          } else {
            const auto kept = compact(delta[t].data, codec.prune);
            const GroupVector q = quantize(kept, codec.qparams);
            vals.insert(vals.end(), q.values().begin(), q.values().end());
          }
        }
        scheme_vecs.emplace_back(std::move(vals), plan.p);
      }
    }
    if (pass_len > 0) {
      std::vector<std::uint32_t> vals;
      vals.reserve(pass_len);
      for (std::size_t j = 0; j < plan.passthrough.size(); ++j) {
        const std::size_t t = plan.passthrough[j];
        const GroupVector q =
            quantize(delta[t].data, plan.passthrough_qparams[j]);
        vals.insert(vals.end(), q.values().begin(), q.values().end());
      }
      pass_vecs.emplace_back(std::move(vals), 32);
    }
  }

  // --- encrypt, aggregate ----------------------------------------------------
  std::uint64_t uplink_bytes = 0;
  GroupVector scheme_agg;
  AssignmentHistograms hist;
  GroupVector pass_agg;

  const bool weight_scheme_segment =
      cfg_.weighted && scheme_.kind == SchemeKind::Prune;
  const std::uint64_t scheme_denom =
      weight_scheme_segment ? total_weight : n_clients;
  const std::uint64_t pass_denom = cfg_.weighted ? total_weight : n_clients;

  if (secure_) {
    std::vector<MaskedPayload> scheme_frames;
    std::vector<MaskedPayload> pass_frames;
    for (std::size_t i = 0; i < n_clients; ++i) {
      const std::uint32_t cid = plan.client_ids[i];
      const MaskSeed& seed = plan.client_seeds[i];
      if (seg_len > 0) {
        if (is_pq) {
          scheme_frames.push_back(client_encrypt_assignments(
              assign_vecs[i], scheme_.pq.k, seed, plan.round_id, cid));
        } else if (weight_scheme_segment) {
          scheme_frames.push_back(weighted_client_encrypt(
              scheme_vecs[i], plan.client_weights[i], seed, plan.round_id, cid,
              SchemeTag::Prune));
        } else {
          scheme_frames.push_back(client_encrypt(
              scheme_vecs[i], seed, plan.round_id, cid,
              scheme_.kind == SchemeKind::Prune ? SchemeTag::Prune : SchemeTag::SQ));
        }
      }
      if (pass_len > 0) {
        if (cfg_.weighted) {
          pass_frames.push_back(weighted_client_encrypt(
              pass_vecs[i], plan.client_weights[i], seed, plan.round_id, cid,
              SchemeTag::SQ, scheme_words));
        } else {
          pass_frames.push_back(client_encrypt(pass_vecs[i], seed, plan.round_id,
                                               cid, SchemeTag::SQ, scheme_words));
        }
      }
    }
    for (const auto& f : scheme_frames) uplink_bytes += serialize_frame(f).size();
    for (const auto& f : pass_frames) uplink_bytes += serialize_frame(f).size();

    if (seg_len > 0) {
      if (is_pq) {
        hist = tee_histograms(scheme_frames, plan.client_seeds, scheme_.pq.k,
                              seg_len);
      } else {
        const GroupVector mask_sum =
            tee_mask_sum(plan.client_seeds, seg_len, plan.p);
        scheme_agg =
            server_aggregate_secagg(scheme_frames, mask_sum, n_clients);
      }
    }
    if (pass_len > 0) {
      const GroupVector mask_sum =
          tee_mask_sum(plan.client_seeds, pass_len, 32, scheme_words);
      pass_agg = server_aggregate_secagg(pass_frames, mask_sum, n_clients);
    }
  } else {
    // Plaintext oracle path: identical modular arithmetic, no masks.
    if (seg_len > 0) {
      if (is_pq) {
        hist.k = scheme_.pq.k;
        hist.n_blocks = seg_len;
        hist.counts.assign(seg_len * scheme_.pq.k, 0);
        for (const auto& a : assign_vecs) {
          for (std::size_t b = 0; b < seg_len; ++b) {
            hist.counts[b * hist.k + a.indices[b]]++;
          }
        }
      } else {
        scheme_agg = GroupVector::zeros(seg_len, plan.p);
        for (std::size_t i = 0; i < n_clients; ++i) {
          const GroupVector& q = scheme_vecs[i];
          scheme_agg = add_mod(scheme_agg, weight_scheme_segment
                                               ? mul_scalar_mod(q, plan.client_weights[i])
                                               : q);
        }
      }
    }
    if (pass_len > 0) {
      pass_agg = GroupVector::zeros(pass_len, 32);
      for (std::size_t i = 0; i < n_clients; ++i) {
        pass_agg = add_mod(pass_agg, cfg_.weighted
                                         ? mul_scalar_mod(pass_vecs[i],
                                                          plan.client_weights[i])
                                         : pass_vecs[i]);
      }
    }
    // Plaintext mode still accounts for what the wire would carry.
    if (seg_len > 0) {
      uplink_bytes +=
          n_clients *
          (kFrameHeaderBytes +
           packed_byte_count(seg_len, is_pq ? pq::assignment_bits(scheme_.pq.k)
                                            : plan.p));
    }
    if (pass_len > 0) {
      uplink_bytes += n_clients * (kFrameHeaderBytes + packed_byte_count(pass_len, 32));
    }
  }

  // --- decode -----------------------------------------------------------------
  auto avg = zeros_like(model_.params);
  std::vector<Tensor> decoded_sum = zeros_like(model_.params);

  for (std::size_t c = 0; c < n_comp; ++c) {
    const std::size_t t = plan.compressed[c];
    const TensorCodec& codec = plan.codecs[c];
    std::vector<double> sum_t;
    if (scheme_.kind == SchemeKind::SQ) {
      const GroupVector part = slice(scheme_agg, seg_offsets[c],
                                     model_.params[t].size());
      sum_t = dequantize_aggregate_centered(part, codec.qparams, scheme_denom);
    } else if (scheme_.kind == SchemeKind::Prune) {
      const GroupVector part =
          slice(scheme_agg, seg_offsets[c], codec.prune.kept_count());
      const auto kept_sum =
          dequantize_aggregate_centered(part, codec.qparams, scheme_denom);
      sum_t = expand(kept_sum, codec.prune);
    } else {  // PQ
      const std::size_t blocks_t = pq_block_rows[c] * model_.params[t].cols;
      AssignmentHistograms sub;
      sub.k = hist.k;
      sub.n_blocks = blocks_t;
      sub.counts.assign(hist.counts.begin() + seg_offsets[c] * hist.k,
                        hist.counts.begin() + (seg_offsets[c] + blocks_t) * hist.k);
      const pq::Matrix m = server_reconstruct_secind(
          sub, codec.codebook, pq_block_rows[c], model_.params[t].cols);
      sum_t = m.data;
    }
    decoded_sum[t].data = sum_t;
    for (std::size_t i = 0; i < sum_t.size(); ++i) {
      avg[t].data[i] = sum_t[i] / static_cast<double>(scheme_denom);
    }
  }
  for (std::size_t j = 0; j < plan.passthrough.size(); ++j) {
    const std::size_t t = plan.passthrough[j];
    const GroupVector part = slice(pass_agg, pass_offsets[j],
                                   model_.params[t].size());
    const auto sum_t =
        dequantize_aggregate_centered(part, plan.passthrough_qparams[j], pass_denom);
    decoded_sum[t].data = sum_t;
    for (std::size_t i = 0; i < sum_t.size(); ++i) {
      avg[t].data[i] = sum_t[i] / static_cast<double>(pass_denom);
    }
  }

  // --- metrics ----------------------------------------------------------------
  RoundMetrics metrics;
  metrics.round = round_;
  metrics.uplink_bytes = uplink_bytes;

  std::uint64_t bits = pass_len * 32ull;
  if (scheme_.kind == SchemeKind::SQ) bits += seg_len * static_cast<std::uint64_t>(plan.p);
  if (scheme_.kind == SchemeKind::Prune) bits += seg_len * static_cast<std::uint64_t>(plan.p);
  if (is_pq) bits += seg_len * static_cast<std::uint64_t>(pq::assignment_bits(scheme_.pq.k));
  metrics.payload_bits = bits;

  if (scheme_.kind == SchemeKind::SQ && seg_len > 0) {
    double weighted_frac = 0.0;
    for (std::size_t c = 0; c < n_comp; ++c) {
      const auto& qs = sq_oracle_.per_tensor_client_q[c];
      const double frac = detect_overflows_centered(
          qs, plan.p,
          static_cast<std::uint64_t>(n_clients) * sq_oracle_.zero_points[c]);
      weighted_frac += frac * static_cast<double>(qs.front().size());
    }
    metrics.overflow_frac = weighted_frac / static_cast<double>(seg_len);
  }

  // Compression error against the plaintext reference sum (weighted the same
  // way each segment is).
  {
    double err2 = 0.0;
    double ref2 = 0.0;
    for (std::size_t t = 0; t < model_.params.size(); ++t) {
      const bool in_scheme =
          std::find(plan.compressed.begin(), plan.compressed.end(), t) !=
          plan.compressed.end();
      const bool weighted_seg = in_scheme ? weight_scheme_segment : cfg_.weighted;
      std::vector<double> ref(model_.params[t].size(), 0.0);
      for (std::size_t i = 0; i < n_clients; ++i) {
        const double w =
            weighted_seg ? static_cast<double>(plan.client_weights[i]) : 1.0;
        for (std::size_t x = 0; x < ref.size(); ++x) {
          ref[x] += w * deltas[i][t].data[x];
        }
      }
      for (std::size_t x = 0; x < ref.size(); ++x) {
        const double diff = decoded_sum[t].data[x] - ref[x];
        err2 += diff * diff;
        ref2 += ref[x] * ref[x];
      }
    }
    metrics.comp_error = ref2 > 0.0 ? std::sqrt(err2 / ref2) : 0.0;
  }

  axpy(model_.params, cfg_.server_lr, avg);
  last_aggregate_ = std::move(avg);
  metrics.accuracy = accuracy(model_, task_.eval);

  last_plan_ = plan;
  round_++;
  return metrics;
}

double Simulation::eval_accuracy() const { return accuracy(model_, task_.eval); }

// --- experiment runner --------------------------------------------------------

namespace {

SeedRun run_cell(const SimConfig& cfg, const SchemeConfig& scheme,
                 std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  Simulation sim(cfg, scheme, seed);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    run.rounds.push_back(sim.step());
  }
  run.final_accuracy = 100.0 * run.rounds.back().accuracy;
  return run;
}

}  // namespace

ExperimentResult run_experiment(const SimConfig& cfg) {
  if (cfg.schemes.empty()) {
    throw ConfigError("no schemes configured");
  }
  ExperimentResult result;
  result.schemes.resize(cfg.schemes.size());

  struct Cell {
    std::size_t scheme_idx;
    std::size_t seed_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
    result.schemes[s].scheme = cfg.schemes[s];
    result.schemes[s].runs.resize(cfg.n_seeds);
    for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
      cells.push_back({s, i});
    }
  }

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(cfg.threads, cells.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::size_t c = next.fetch_add(1); c < cells.size();
           c = next.fetch_add(1)) {
        const Cell cell = cells[c];
        const std::uint64_t seed = cfg.seed + cell.seed_idx;
        result.schemes[cell.scheme_idx].runs[cell.seed_idx] =
            run_cell(cfg, cfg.schemes[cell.scheme_idx], seed);
      }
    } catch (...) {
      const std::scoped_lock lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(cells.size());  // drain remaining work
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Reference bits per client at p = 32 from the model shapes, plus the
  // matrix layer list used for the codebook broadcast accounting.
  std::vector<pq::LayerShape> matrix_layers;
  {
    const Model probe = Model::init(cfg.model, cfg.task.n_features,
                                    cfg.task.n_classes, 0);
    result.baseline_bits = 0;
    for (const auto& t : probe.params) {
      result.baseline_bits += t.size() * 32ull;
      if (t.is_matrix) matrix_layers.push_back({t.rows, t.cols});
    }
  }

  for (auto& row : result.schemes) {
    double acc_sum = 0.0;
    double bytes_sum = 0.0;
    double overflow_sum = 0.0;
    std::size_t round_count = 0;
    std::uint64_t payload_bits = 0;
    for (const auto& run : row.runs) {
      acc_sum += run.final_accuracy;
      for (const auto& m : run.rounds) {
        bytes_sum += static_cast<double>(m.uplink_bytes);
        overflow_sum += m.overflow_frac;
        payload_bits = m.payload_bits;
        round_count++;
      }
    }
    const double n_seeds = static_cast<double>(row.runs.size());
    row.accuracy_mean = acc_sum / n_seeds;
    double var = 0.0;
    for (const auto& run : row.runs) {
      const double d = run.final_accuracy - row.accuracy_mean;
      var += d * d;
    }
    row.accuracy_std = std::sqrt(var / n_seeds);
    row.uplink_kb = bytes_sum / static_cast<double>(round_count) /
                    static_cast<double>(cfg.clients_per_round) / 1024.0;
    row.overflow_pct = 100.0 * overflow_sum / static_cast<double>(round_count);
    row.compression_factor = static_cast<double>(result.baseline_bits) /
                             static_cast<double>(payload_bits);
    if (row.scheme.kind == SchemeKind::PQ && !matrix_layers.empty()) {
      const auto cb_bytes =
          pq::codebook_downlink_bytes(matrix_layers, row.scheme.pq);
      row.codebook_downlink_pct = 100.0 * static_cast<double>(cb_bytes) /
                                  (static_cast<double>(result.baseline_bits) / 8.0);
    }
  }
  return result;
}

std::string ExperimentResult::to_csv() const {
  std::string out =
      "scheme,params,uplink_kb,compression_factor,overflow_pct,accuracy_mean,"
      "accuracy_std\n";
  for (const auto& row : schemes) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,\"%s\",%.4f,%.4f,%.4f,%.2f,%.2f\n",
                  row.scheme.label.c_str(), row.scheme.params_string().c_str(),
                  row.uplink_kb, row.compression_factor, row.overflow_pct,
                  row.accuracy_mean, row.accuracy_std);
    out += buf;
  }
  return out;
}

std::string ExperimentResult::trace_json() const {
  nlohmann::json doc;
  doc["baseline_bits"] = baseline_bits;
  auto& arr = doc["schemes"];
  arr = nlohmann::json::array();
  for (const auto& row : schemes) {
    nlohmann::json s;
    s["label"] = row.scheme.label;
    s["params"] = row.scheme.params_string();
    s["accuracy_mean"] = row.accuracy_mean;
    s["accuracy_std"] = row.accuracy_std;
    s["uplink_kb"] = row.uplink_kb;
    s["compression_factor"] = row.compression_factor;
    s["overflow_pct"] = row.overflow_pct;
    if (row.scheme.kind == SchemeKind::PQ) {
      s["codebook_downlink_pct"] = row.codebook_downlink_pct;
    }
    auto& runs = s["runs"];
    runs = nlohmann::json::array();
    for (const auto& run : row.runs) {
      nlohmann::json r;
      r["seed"] = run.seed;
      r["final_accuracy"] = run.final_accuracy;
      auto& rounds = r["rounds"];
      rounds = nlohmann::json::array();
      for (const auto& m : run.rounds) {
        rounds.push_back({{"round", m.round},
                          {"accuracy", m.accuracy},
                          {"uplink_bytes", m.uplink_bytes},
                          {"overflow_frac", m.overflow_frac},
                          {"comp_error", m.comp_error}});
      }
      runs.push_back(std::move(r));
    }
    arr.push_back(std::move(s));
  }
  return doc.dump(2);
}

// --- config parsing -------------------------------------------------------------

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

SimConfig parse_sim_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    SimConfig cfg;
    if (doc.contains("task")) {
      const auto& t = doc["task"];
      cfg.task.n_clients = get_or<std::size_t>(t, "n_clients", cfg.task.n_clients);
      cfg.task.samples_per_client =
          get_or<std::size_t>(t, "samples_per_client", cfg.task.samples_per_client);
      cfg.task.n_features = get_or<std::size_t>(t, "n_features", cfg.task.n_features);
      cfg.task.n_classes = get_or<std::size_t>(t, "n_classes", cfg.task.n_classes);
      cfg.task.label_alpha = get_or<double>(t, "label_alpha", cfg.task.label_alpha);
      cfg.task.class_separation =
          get_or<double>(t, "class_separation", cfg.task.class_separation);
      cfg.task.feature_noise =
          get_or<double>(t, "feature_noise", cfg.task.feature_noise);
      cfg.task.holdout_fraction =
          get_or<double>(t, "holdout_fraction", cfg.task.holdout_fraction);
      cfg.task.proxy_fraction =
          get_or<double>(t, "proxy_fraction", cfg.task.proxy_fraction);
    }
    if (doc.contains("model")) {
      const auto& m = doc["model"];
      const std::string type = get_or<std::string>(m, "type", "logistic");
      if (type == "logistic") {
        cfg.model.type = ModelType::Logistic;
      } else if (type == "mlp") {
        cfg.model.type = ModelType::Mlp;
      } else {
        throw ConfigError("unknown model type: " + type);
      }
      cfg.model.hidden = get_or<std::size_t>(m, "hidden", cfg.model.hidden);
      cfg.model.bias = get_or<bool>(m, "bias", cfg.model.bias);
    }
    cfg.rounds = get_or<std::size_t>(doc, "rounds", cfg.rounds);
    cfg.clients_per_round =
        get_or<std::size_t>(doc, "clients_per_round", cfg.clients_per_round);
    cfg.n_seeds = get_or<std::size_t>(doc, "n_seeds", cfg.n_seeds);
    cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
    if (doc.contains("local")) {
      const auto& l = doc["local"];
      cfg.local.epochs = get_or<std::size_t>(l, "epochs", cfg.local.epochs);
      cfg.local.lr = get_or<double>(l, "lr", cfg.local.lr);
      cfg.local.batch_size = get_or<std::size_t>(l, "batch_size", cfg.local.batch_size);
    }
    cfg.server_lr = get_or<double>(doc, "server_lr", cfg.server_lr);
    cfg.weighted = get_or<bool>(doc, "weighted", cfg.weighted);
    if (doc.contains("refresh")) {
      const auto& r = doc["refresh"];
      cfg.refresh.period = get_or<std::size_t>(r, "period", cfg.refresh.period);
      const std::string src = get_or<std::string>(r, "source", "public_proxy");
      if (src == "public_proxy") {
        cfg.refresh.source = RefreshPolicy::Source::PublicProxy;
      } else if (src == "aggregate_update") {
        cfg.refresh.source = RefreshPolicy::Source::AggregateUpdate;
      } else {
        throw ConfigError("unknown refresh source: " + src);
      }
    }
    cfg.threads = get_or<std::size_t>(doc, "threads", cfg.threads);

    if (!doc.contains("schemes") || !doc["schemes"].is_array() ||
        doc["schemes"].empty()) {
      throw ConfigError("config requires a non-empty schemes array");
    }
    for (const auto& s : doc["schemes"]) {
      SchemeConfig sc;
      const std::string kind = s.at("kind").get<std::string>();
      if (kind == "uncompressed") {
        sc.kind = SchemeKind::Uncompressed;
        sc.p = 32;
      } else if (kind == "sq") {
        sc.kind = SchemeKind::SQ;
        sc.b = get_or<int>(s, "b", 8);
        sc.p = get_or<int>(s, "p", 16);
      } else if (kind == "prune") {
        sc.kind = SchemeKind::Prune;
        sc.sparsity = get_or<double>(s, "sparsity", 0.5);
        sc.p = get_or<int>(s, "p", 32);
      } else if (kind == "pq") {
        sc.kind = SchemeKind::PQ;
        sc.pq.k = get_or<std::size_t>(s, "k", 16);
        sc.pq.d = get_or<std::size_t>(s, "d", 4);
      } else {
        throw ConfigError("unknown scheme kind: " + kind);
      }
      if (sc.p < 1 || sc.p > 32 || sc.b < 1 || sc.b > 32 || sc.b > sc.p) {
        throw ConfigError("scheme bit-widths must satisfy 1 <= b <= p <= 32");
      }
      if (sc.kind == SchemeKind::Prune &&
          !(sc.sparsity >= 0.0 && sc.sparsity < 1.0)) {
        throw ConfigError("sparsity must be in [0, 1)");
      }
      if (sc.kind == SchemeKind::PQ && (sc.pq.k < 2 || sc.pq.d < 1)) {
        throw ConfigError("pq requires k >= 2 and d >= 1");
      }
      sc.label = get_or<std::string>(s, "label", kind);
      cfg.schemes.push_back(sc);
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
}

}  // namespace sacomp::flsim
