#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sacomp/errors.hpp"
#include "sacomp/flsim/sim.hpp"
#include "sacomp/group.hpp"
#include "sacomp/pq.hpp"
#include "sacomp/protocol.hpp"
#include "sacomp/prune.hpp"
#include "sacomp/quant.hpp"

namespace {

using namespace sacomp;

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::uint64_t seed_override, bool has_seed, std::size_t threads) {
  std::ifstream in(config_path);
  if (!in) {
    throw ConfigError("cannot read config file: " + config_path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  flsim::SimConfig cfg = flsim::parse_sim_config(buf.str());
  if (has_seed) cfg.seed = seed_override;
  if (threads > 0) cfg.threads = threads;

  const auto result = flsim::run_experiment(cfg);

  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / "metrics.csv";
  const auto trace_path = std::filesystem::path(out_dir) / "trace.json";
  std::ofstream(csv_path) << result.to_csv();
  std::ofstream(trace_path) << result.trace_json();

  std::cout << result.to_csv();
  std::cout << "wrote " << csv_path.string() << " and " << trace_path.string()
            << "\n";
  return 0;
}

struct BenchRow {
  std::string codec;
  std::string params;
  double bits_per_weight;
  double encode_mb_s;
  double decode_mb_s;
};

template <typename Encode, typename Decode>
BenchRow bench_codec(std::string codec, std::string params, double bits_per_weight,
                     std::size_t n, Encode encode, Decode decode) {
  using clock = std::chrono::steady_clock;
  constexpr int reps = 50;
  const double mb = static_cast<double>(n) * 8.0 * reps / 1e6;

  auto t0 = clock::now();
  for (int r = 0; r < reps; ++r) encode();
  auto t1 = clock::now();
  for (int r = 0; r < reps; ++r) decode();
  auto t2 = clock::now();

  const double enc_s = std::chrono::duration<double>(t1 - t0).count();
  const double dec_s = std::chrono::duration<double>(t2 - t1).count();
  return {std::move(codec), std::move(params), bits_per_weight,
          mb / std::max(enc_s, 1e-9), mb / std::max(dec_s, 1e-9)};
}

int cmd_bench(std::uint64_t seed) {
  // 40x25 synthetic tensor: 1000 weights, divisible sizes for exact
  // bits-per-weight accounting.
  const std::size_t rows = 40, cols = 25, n = rows * cols;
  flsim::Rng rng(seed);
  std::vector<double> tensor(n);
  for (auto& v : tensor) v = rng.normal();

  std::vector<BenchRow> table;

  {
    const int b = 8, p = 8;
    const QParams qp = calibrate_minmax(tensor, b, QScheme::Symmetric);
    GroupVector q = quantize(tensor, qp);
    table.push_back(bench_codec(
        "sq", "b=8,p=8", static_cast<double>(p), n,
        [&] { q = quantize(tensor, qp); }, [&] { (void)dequantize(q, qp); }));
  }
  {
    const int p = 32;
    PruneSpec spec{MaskSeed::from_words(seed, 1), 0.9, n};
    const double bpw =
        static_cast<double>(pruned_uplink_bits(spec, p)) / static_cast<double>(n);
    std::vector<double> kept = compact(tensor, spec);
    table.push_back(bench_codec(
        "prune", "sparsity=0.9,p=32", bpw, n,
        [&] { kept = compact(tensor, spec); }, [&] { (void)expand(kept, spec); }));
  }
  {
    pq::PQConfig cfg{32, 8};
    pq::Matrix w(rows, cols);
    w.data = tensor;
    const auto blocks = pq::split_blocks(w, cfg.d);
    const auto cb =
        pq::train_codebook(blocks, cfg.k, 25, MaskSeed::from_words(seed, 2)).codebook;
    pq::Assignments a = pq::assign(blocks, cb);
    const pq::LayerShape shape{rows, cols};
    const double bpw = static_cast<double>(pq_uplink_bits({&shape, 1}, cfg)) /
                       static_cast<double>(n);
    table.push_back(bench_codec(
        "pq", "k=32,d=8", bpw, n, [&] { a = pq::assign(blocks, cb); },
        [&] { (void)pq::decompress(cb, a); }));
  }

  std::printf("codec,params,bits_per_weight,encode_mb_s,decode_mb_s\n");
  for (const auto& row : table) {
    std::printf("%s,\"%s\",%.4f,%.1f,%.1f\n", row.codec.c_str(),
                row.params.c_str(), row.bits_per_weight, row.encode_mb_s,
                row.decode_mb_s);
  }
  return 0;
}

bool report(const char* name, bool ok, std::uint64_t seed) {
  std::printf("%-24s %s (seed %llu)\n", name, ok ? "PASS" : "FAIL",
              static_cast<unsigned long long>(seed));
  return ok;
}

int cmd_check(bool inject_fault, std::uint64_t seed) {
  bool all_ok = true;
  flsim::Rng rng(seed);

  auto random_vec = [&](std::size_t n, int p) {
    std::vector<std::uint32_t> v(n);
    const std::uint32_t m = group_mask(p);
    for (auto& x : v) x = static_cast<std::uint32_t>(rng.next64()) & m;
    return GroupVector(std::move(v), p);
  };

  {  // Abelian group laws.
    bool ok = true;
    for (int p : {1, 7, 16, 32}) {
      const auto a = random_vec(64, p), b = random_vec(64, p), c = random_vec(64, p);
      ok = ok && add_mod(add_mod(a, b), c) == add_mod(a, add_mod(b, c));
      ok = ok && add_mod(a, b) == add_mod(b, a);
      ok = ok && add_mod(a, GroupVector::zeros(64, p)) == a;
      ok = ok && sub_mod(add_mod(a, b), b) == a;
    }
    all_ok &= report("group-laws", ok, seed);
  }
  {  // Mask cancellation.
    bool ok = true;
    for (int p : {1, 8, 16, 32}) {
      const auto x = random_vec(257, p);
      const auto mask = expand_mask(MaskSeed::from_words(rng.next64(), rng.next64()),
                                    257, p);
      ok = ok && sub_mod(add_mod(x, mask), mask) == x;
    }
    all_ok &= report("mask-cancellation", ok, seed);
  }
  {  // Pack/unpack bijection for every p.
    bool ok = true;
    for (int p = 1; p <= 32; ++p) {
      const auto v = random_vec(41, p);
      ok = ok && unpack(pack(v), v.size(), p) == v;
    }
    all_ok &= report("pack-roundtrip", ok, seed);
  }
  {  // SecAgg exactness through full frames, with the fault hook.
    bool ok = true;
    const int p = 16;
    const std::size_t n = 128, clients = 7;
    std::vector<GroupVector> updates;
    std::vector<MaskSeed> seeds;
    std::vector<MaskedPayload> frames;
    for (std::size_t i = 0; i < clients; ++i) {
      updates.push_back(random_vec(n, p));
      seeds.push_back(MaskSeed::from_words(rng.next64(), rng.next64()));
      frames.push_back(client_encrypt(updates.back(), seeds.back(), 1,
                                      static_cast<std::uint32_t>(i), SchemeTag::SQ));
    }
    if (inject_fault) frames[0].body[0] ^= 1u;
    const auto agg = server_aggregate_secagg(
        frames, tee_mask_sum(seeds, n, p), clients);
    GroupVector direct = GroupVector::zeros(n, p);
    for (const auto& u : updates) direct = add_mod(direct, u);
    ok = agg == direct;
    all_ok &= report("secagg-exactness", ok, seed);
  }
  {  // SQ aggregate linearity at the safe margin.
    bool ok = true;
    const int b = 8;
    const std::size_t clients = 10, n = 1000;
    const int p = min_safe_bitwidth(b, clients);
    std::vector<double> pool(n);
    for (auto& v : pool) v = rng.normal();
    const QParams qp = calibrate_minmax(pool, b, QScheme::Symmetric);
    GroupVector agg = GroupVector::zeros(n, p);
    std::vector<double> direct(n, 0.0);
    for (std::size_t i = 0; i < clients; ++i) {
      std::vector<double> t(n);
      for (auto& v : t) v = rng.normal();
      const GroupVector q = quantize(t, qp);
      agg = add_mod(agg, q.with_bit_width(p));
      const auto dq = dequantize(q, qp);
      for (std::size_t x = 0; x < n; ++x) direct[x] += dq[x];
    }
    const auto decoded = dequantize_aggregate(agg, qp, clients);
    for (std::size_t x = 0; x < n; ++x) {
      ok = ok && std::fabs(decoded[x] - direct[x]) <=
                     1e-6 * std::max(1.0, std::fabs(direct[x]));
    }
    all_ok &= report("sq-linearity", ok, seed);
  }
  {  // Shared-mask pruning linearity.
    bool ok = true;
    const std::size_t n = 512, clients = 5;
    PruneSpec spec{MaskSeed::from_words(rng.next64(), rng.next64()), 0.7, n};
    std::vector<double> sum_compact(spec.kept_count(), 0.0);
    std::vector<double> sum_full(n, 0.0);
    for (std::size_t i = 0; i < clients; ++i) {
      std::vector<double> t(n);
      for (auto& v : t) v = rng.normal();
      const auto kept = compact(t, spec);
      for (std::size_t x = 0; x < kept.size(); ++x) sum_compact[x] += kept[x];
      const auto e = expand(kept, spec);
      for (std::size_t x = 0; x < n; ++x) sum_full[x] += e[x];
    }
    const auto expanded = expand(sum_compact, spec);
    ok = expanded == sum_full;
    all_ok &= report("prune-linearity", ok, seed);
  }
  {  // SecInd equivalence.
    bool ok = true;
    const std::size_t k = 16, d = 4, block_rows = 8, cols = 12;
    const std::size_t blocks = block_rows * cols;
    pq::Codebook cb;
    cb.k = k;
    cb.d = d;
    cb.data.resize(k * d);
    for (auto& v : cb.data) v = rng.normal();
    const std::size_t clients = 9;
    std::vector<MaskSeed> seeds;
    std::vector<MaskedPayload> frames;
    pq::Matrix direct(block_rows * d, cols);
    for (std::size_t i = 0; i < clients; ++i) {
      pq::Assignments a;
      a.block_rows = block_rows;
      a.cols = cols;
      for (std::size_t x = 0; x < blocks; ++x) {
        a.indices.push_back(static_cast<std::uint32_t>(rng.below(k)));
      }
      seeds.push_back(MaskSeed::from_words(rng.next64(), rng.next64()));
      frames.push_back(client_encrypt_assignments(a, k, seeds.back(), 1,
                                                  static_cast<std::uint32_t>(i)));
      const auto dec = pq::decompress(cb, a);
      for (std::size_t x = 0; x < direct.data.size(); ++x) {
        direct.data[x] += dec.data[x];
      }
    }
    const auto hist = tee_histograms(frames, seeds, k, blocks);
    const auto rec = server_reconstruct_secind(hist, cb, block_rows, cols);
    for (std::size_t x = 0; x < rec.data.size(); ++x) {
      ok = ok && std::fabs(rec.data[x] - direct.data[x]) <=
                     1e-5 * std::max(1.0, std::fabs(direct.data[x]));
    }
    all_ok &= report("secind-equivalence", ok, seed);
  }
  {  // Golden wire vectors (the frozen protocol contract).
    bool ok = true;
    ok = ok && pack(GroupVector({1, 2, 3}, 8)) ==
                   std::vector<std::uint8_t>{0x01, 0x02, 0x03};
    ok = ok && pack(GroupVector({1, 2, 3, 4, 5, 6, 7, 8}, 5)) ==
                   std::vector<std::uint8_t>{0x41, 0x0c, 0x52, 0xcc, 0x41};
    std::array<std::uint8_t, 16> sb{};
    for (int i = 0; i < 16; ++i) sb[i] = static_cast<std::uint8_t>(i);
    const MaskSeed golden_seed(sb);
    ok = ok && expand_mask(golden_seed, 8, 16).values() ==
                   std::vector<std::uint32_t>{0x2382, 0x0aca, 0xfd3e, 0x5da8,
                                              0x2744, 0x664b, 0x0b64, 0xb2db};
    ok = ok && derive_subseed(golden_seed, 42).hex() ==
                   "5bac3d8eaa0a9a66969cf106af8e4730";
    all_ok &= report("golden-vectors", ok, seed);
  }

  if (!all_ok) {
    std::printf("check failed\n");
    return 1;
  }
  std::printf("all checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure-aggregation-compatible uplink compression toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::size_t threads = 0;
  bool inject_fault = false;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", config_path, "JSON experiment config")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "root seed override")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--threads", threads, "worker threads");

  auto* bench = app.add_subcommand("bench", "codec micro-benchmarks");
  bench->add_option("--seed", seed, "tensor seed");

  auto* check = app.add_subcommand("check", "protocol invariant self-checks");
  check->add_option("--seed", seed, "check seed");
  check->add_flag("--inject-fault", inject_fault,
                  "flip one masked bit to exercise the failure path");

  try {
    app.parse(argc, argv);
    if (run->parsed()) {
      return cmd_run(config_path, out_dir, seed, seed_set, threads);
    }
    if (bench->parsed()) {
      return cmd_bench(seed);
    }
    return cmd_check(inject_fault, seed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const sacomp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
