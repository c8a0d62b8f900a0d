#pragma once

// Sequence-quality metrics over the toy embedding space.
//
// Image embedding e_img(x) = x / |x|. The "DINO" analog is a second image
// embedding: a fixed seeded projection onto k < d orthonormal directions,
// then normalized (a full rotation would leave every cosine unchanged). Text
// embedding e_text = normalized condition embedding.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "beamlat/beam.hpp"

namespace beamlat {

class Embedder {
 public:
  explicit Embedder(std::size_t dim, Seed seed = 0x44494e4fULL);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t projected_dim() const noexcept { return rows_; }

  std::vector<double> clip_image(std::span<const double> x) const;
  std::vector<double> dino_image(std::span<const double> x) const;
  std::vector<double> text(std::span<const double> embedding) const;

 private:
  std::size_t dim_;
  std::size_t rows_;
  std::vector<double> projection_;  // rows_ x dim_, orthonormal rows
  std::vector<double> zeros_;
};

struct ClipThresholds {
  double clip_i = 0.9;
  double dino_i = 0.85;
  double clip_t = 0.1;
};

struct ClippedValue {
  double raw = 0.0;
  double clipped = 0.0;
};

// Values above `ceiling` (near-duplicate sequences) and below 0 become 0.
double clip_similarity(double raw, double ceiling) noexcept;

// Mean cosine over consecutive image pairs.
ClippedValue clip_i_analog(std::span<const std::vector<double>> samples, const Embedder& embed,
                           double ceiling = 0.9);
ClippedValue dino_i_analog(std::span<const std::vector<double>> samples, const Embedder& embed,
                           double ceiling = 0.85);

struct ClipT {
  std::vector<double> per_step;  // before the floor
  double raw = 0.0;              // mean of per_step
  double clipped = 0.0;          // mean after zeroing values below the floor
};

// Step j compares image j with the mean text embedding of steps 1..j.
ClipT clip_t_analog(std::span<const std::vector<double>> samples, const SequenceSpec& spec,
                    const Embedder& embed, double floor = 0.1);

struct Faithfulness {
  double goal = 0.0;
  double step = 0.0;
  double cross = 0.0;
};

Faithfulness faithfulness(std::span<const std::vector<double>> samples, const SequenceSpec& spec,
                          const Embedder& embed);

struct MetricsReport {
  std::string method;
  std::string sequence_id;
  ClippedValue clip_i;
  ClippedValue dino_i;
  ClippedValue clip_t;
  double clip_star = 0.0;
  double dino_star = 0.0;
  Faithfulness faith;
};

MetricsReport evaluate_sequence(const std::string& method, std::span<const std::vector<double>> samples,
                                const SequenceSpec& spec, const Embedder& embed,
                                const ClipThresholds& thresholds = {});

// Rows (method, sequence_id, metric, raw, clipped).
std::string metrics_csv(std::span<const MetricsReport> reports);

struct MethodReports {
  std::string method;
  std::vector<MetricsReport> reports;  // one per sequence, same order for every method
};

struct WinRow {
  std::string metric;
  std::string method;
  long wins = 0;
  long sequences = 0;
  double win_pct = 0.0;
  double mean_normalized = 0.0;
};

struct WinTable {
  std::vector<WinRow> rows;

  const WinRow* find(const std::string& metric, const std::string& method) const;
  std::string to_csv() const;
};

// Metrics: clip_i, dino_i, clip_t, clip_star, dino_star (clipped values).
// Each value is divided by the per-sequence maximum across methods; every
// method attaining the maximum scores a win.
WinTable combined_and_wins(std::span<const MethodReports> methods);

struct RatingsMatrix {
  std::vector<std::vector<long>> counts;  // items x categories

  static RatingsMatrix from_json(const nlohmann::json& j);
};

double fleiss_kappa(const RatingsMatrix& ratings);

struct AuditRow {
  int step = 0;
  long expected = 0;
  long logged = 0;
  bool pass = false;
};

struct AuditReport {
  std::string method;
  std::string sequence_id;
  std::vector<AuditRow> rows;

  bool passed() const;
  std::string to_csv(bool header = true) const;
};

// Expected denoiser runs per step recomputed from the logged config:
// step 1 runs r; step j runs |B_{j-1}| (min(m, j-1) |L| + n_random), where
// |B_1| = r and |B_j| is capped at w from prune_start on. The single-path
// baselines keep one beam with m = 1.
std::vector<long> expected_denoiser_calls(const RunLog& log);
AuditReport complexity_audit(const RunLog& log);

}  // namespace beamlat
