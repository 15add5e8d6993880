#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sacomp/flsim/model.hpp"
#include "sacomp/flsim/rng.hpp"
#include "sacomp/flsim/task.hpp"
#include "sacomp/group.hpp"
#include "sacomp/pq.hpp"
#include "sacomp/protocol.hpp"
#include "sacomp/prune.hpp"
#include "sacomp/quant.hpp"

namespace sacomp::flsim {

enum class SchemeKind { Uncompressed, SQ, Prune, PQ };

struct SchemeConfig {
  SchemeKind kind = SchemeKind::Uncompressed;
  std::string label = "baseline";
  int b = 8;               // SQ quantization bit-width
  int p = 32;              // SecAgg bit-width of the scheme segment
  double sparsity = 0.5;   // prune
  pq::PQConfig pq{16, 4};  // PQ

  std::string params_string() const;
};

struct RefreshPolicy {
  // Codec parameters are re-derived at rounds where round % period == 0;
  // a period past the horizon means one calibration at round 0.
  std::size_t period = 1;
  enum class Source { AggregateUpdate, PublicProxy };
  Source source = Source::PublicProxy;
};

struct SimConfig {
  TaskConfig task;
  ModelConfig model;
  std::size_t rounds = 100;
  std::size_t clients_per_round = 10;
  std::size_t n_seeds = 3;
  std::uint64_t seed = 1;
  TrainParams local;
  double server_lr = 1.0;
  bool weighted = true;
  RefreshPolicy refresh;
  std::size_t threads = 1;
  std::vector<SchemeConfig> schemes;
};

// Per-tensor codec parameters broadcast with the round plan.
struct TensorCodec {
  QParams qparams;          // SQ value quantizer (also prune kept values)
  PruneSpec prune;
  pq::Codebook codebook;
  std::size_t d = 1;        // adapted PQ block size
};

// Everything the server broadcasts for one round plus the per-client mask
// seeds the TEE receives.
struct RoundPlan {
  std::uint32_t round_id = 0;
  int p = 32;
  std::vector<std::size_t> compressed;   // param indices under the codec
  std::vector<std::size_t> passthrough;  // param indices at 32-bit fixed point
  std::vector<TensorCodec> codecs;       // aligned with `compressed`
  std::vector<QParams> passthrough_qparams;  // aligned with `passthrough`
  std::vector<std::uint32_t> client_ids;
  std::vector<MaskSeed> client_seeds;
  std::vector<std::uint64_t> client_weights;  // all 1 when unweighted
};

struct RoundMetrics {
  std::size_t round = 0;
  double accuracy = 0.0;
  std::uint64_t uplink_bytes = 0;   // serialized frames, all clients
  std::uint64_t payload_bits = 0;   // accounting bits per client (no padding)
  double overflow_frac = 0.0;       // SQ scheme segment, centered oracle
  double comp_error = 0.0;          // |d(agg) - sum g_i| / |sum g_i|
};

// Simulator-only view of one round's quantized SQ updates, for overflow
// sweeps at alternative bit-widths.
struct SqRoundOracle {
  std::vector<std::vector<GroupVector>> per_tensor_client_q;  // width b values
  std::vector<std::uint32_t> zero_points;
};

// One scheme, one seed. `secure=false` runs the identical pipeline without
// masking (the plaintext oracle path).
class Simulation {
 public:
  Simulation(const SimConfig& cfg, const SchemeConfig& scheme,
             std::uint64_t seed, bool secure = true);

  RoundMetrics step();
  const Model& model() const { return model_; }
  const Task& task() const { return task_; }
  double eval_accuracy() const;
  std::size_t round() const { return round_; }
  const SqRoundOracle& last_sq_oracle() const { return sq_oracle_; }
  const RoundPlan& last_plan() const { return last_plan_; }
  const std::vector<std::uint64_t>& last_train_seeds() const {
    return last_train_seeds_;
  }

  // Uncompressed reference: every parameter at 32 bits.
  std::uint64_t baseline_payload_bits() const;

 private:
  RoundPlan make_plan();
  void maybe_refresh();
  std::vector<Tensor> source_update(std::uint64_t salt);

  SimConfig cfg_;
  SchemeConfig scheme_;
  Task task_;
  Model model_;
  Rng rng_;        // client selection, mask seeds, train seeds
  Rng rng_codec_;  // refresh-time draws, kept separate so the main stream
                   // is identical across schemes
  std::size_t round_ = 0;
  bool secure_ = true;

  int prune_value_bits_ = 24;
  int passthrough_bits_ = 24;
  std::vector<TensorCodec> codecs_;
  std::vector<QParams> passthrough_qparams_;
  bool codecs_ready_ = false;
  std::vector<Tensor> last_aggregate_;  // decoded average update
  SqRoundOracle sq_oracle_;
  RoundPlan last_plan_;
  std::vector<std::uint64_t> last_train_seeds_;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> rounds;
  double final_accuracy = 0.0;  // percent
};

struct SchemeResult {
  SchemeConfig scheme;
  std::vector<SeedRun> runs;
  double accuracy_mean = 0.0;  // percent, over seeds
  double accuracy_std = 0.0;
  double uplink_kb = 0.0;      // per client per round
  double compression_factor = 1.0;
  double overflow_pct = 0.0;
  // PQ only: broadcast codebook bytes as a percentage of the model size.
  double codebook_downlink_pct = 0.0;
};

struct ExperimentResult {
  std::vector<SchemeResult> schemes;
  std::uint64_t baseline_bits = 0;  // per client per round, p = 32

  std::string to_csv() const;
  std::string trace_json() const;
};

ExperimentResult run_experiment(const SimConfig& cfg);

// JSON config document -> SimConfig. Throws ConfigError with a diagnostic.
SimConfig parse_sim_config(const std::string& json_text);

}  // namespace sacomp::flsim
