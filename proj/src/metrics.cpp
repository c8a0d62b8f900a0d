#include "beamlat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "beamlat/csv.hpp"
#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"

namespace beamlat {

using nlohmann::json;

namespace {

std::vector<double> unit(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  const double n = kernels::norm(out);
  if (n > 0.0)
    for (double& v : out) v /= n;
  return out;
}

const std::vector<std::string>& win_metrics() {
  static const std::vector<std::string> names{"clip_i", "dino_i", "clip_t", "clip_star", "dino_star"};
  return names;
}

double metric_value(const MetricsReport& r, const std::string& metric) {
  if (metric == "clip_i") return r.clip_i.clipped;
  if (metric == "dino_i") return r.dino_i.clipped;
  if (metric == "clip_t") return r.clip_t.clipped;
  if (metric == "clip_star") return r.clip_star;
  return r.dino_star;
}

ClippedValue consecutive_similarity(std::span<const std::vector<double>> samples, double ceiling,
                                    const std::function<std::vector<double>(std::span<const double>)>& embed) {
  if (samples.size() < 2) throw Error(ErrorKind::single_image, "image similarity needs at least 2 images");
  double total = 0.0;
  std::vector<double> prev = embed(samples[0]);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    std::vector<double> cur = embed(samples[i]);
    total += kernels::cosine(prev, cur);
    prev = std::move(cur);
  }
  ClippedValue out;
  out.raw = total / static_cast<double>(samples.size() - 1);
  out.clipped = clip_similarity(out.raw, ceiling);
  return out;
}

}  // namespace

Embedder::Embedder(std::size_t dim, Seed seed)
    : dim_(dim), rows_(std::max<std::size_t>(1, 3 * dim / 4)), zeros_(dim, 0.0) {
  if (dim == 0) throw Error(ErrorKind::invalid_range, "embedding dimension must be >= 1");
  // Gram-Schmidt over seeded Gaussian rows.
  Rng rng(derive_seed(seed, {dim}));
  while (projection_.size() < rows_ * dim_) {
    std::vector<double> row = gaussian_vector(rng, dim_);
    for (std::size_t r = 0; r < projection_.size() / dim_; ++r) {
      std::span<const double> prev(projection_.data() + r * dim_, dim_);
      kernels::axpy(-kernels::dot(row, prev), prev, row);
    }
    const double n = kernels::norm(row);
    if (n < 1e-8) continue;
    for (double& v : row) projection_.push_back(v / n);
  }
}

std::vector<double> Embedder::clip_image(std::span<const double> x) const {
  if (x.size() != dim_) throw Error(ErrorKind::dimension_mismatch, "image has the wrong length");
  return unit(x);
}

std::vector<double> Embedder::dino_image(std::span<const double> x) const {
  if (x.size() != dim_) throw Error(ErrorKind::dimension_mismatch, "image has the wrong length");
  std::vector<double> y(rows_);
  kernels::gemv(projection_, x, std::span<const double>(zeros_.data(), rows_), y);
  return unit(y);
}

std::vector<double> Embedder::text(std::span<const double> embedding) const {
  if (embedding.size() != dim_) throw Error(ErrorKind::dimension_mismatch, "text embedding has the wrong length");
  return unit(embedding);
}

double clip_similarity(double raw, double ceiling) noexcept {
  if (raw > ceiling || raw < 0.0) return 0.0;
  return raw;
}

ClippedValue clip_i_analog(std::span<const std::vector<double>> samples, const Embedder& embed,
                           double ceiling) {
  return consecutive_similarity(samples, ceiling,
                                [&](std::span<const double> x) { return embed.clip_image(x); });
}

ClippedValue dino_i_analog(std::span<const std::vector<double>> samples, const Embedder& embed,
                           double ceiling) {
  return consecutive_similarity(samples, ceiling,
                                [&](std::span<const double> x) { return embed.dino_image(x); });
}

ClipT clip_t_analog(std::span<const std::vector<double>> samples, const SequenceSpec& spec,
                    const Embedder& embed, double floor) {
  if (samples.size() != spec.steps.size())
    throw Error(ErrorKind::dimension_mismatch, "one image per sequence step expected");
  ClipT out;
  if (samples.empty()) return out;
  std::vector<double> text_sum(embed.dim(), 0.0);
  double raw = 0.0;
  double clipped = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    kernels::axpy(1.0, embed.text(spec.steps[j].condition.embedding), text_sum);
    // Cosine is scale invariant, so the running sum stands in for the mean.
    const double c = kernels::cosine(embed.clip_image(samples[j]), text_sum);
    out.per_step.push_back(c);
    raw += c;
    clipped += c < floor ? 0.0 : c;
  }
  out.raw = raw / static_cast<double>(samples.size());
  out.clipped = clipped / static_cast<double>(samples.size());
  return out;
}

Faithfulness faithfulness(std::span<const std::vector<double>> samples, const SequenceSpec& spec,
                          const Embedder& embed) {
  if (samples.size() != spec.steps.size())
    throw Error(ErrorKind::dimension_mismatch, "one image per sequence step expected");
  Faithfulness out;
  if (samples.empty()) return out;
  std::vector<std::vector<double>> images;
  for (const auto& s : samples) images.push_back(embed.clip_image(s));
  out.goal = kernels::cosine(images.back(), spec.goal_embedding);
  for (std::size_t j = 0; j < images.size(); ++j)
    out.step += kernels::cosine(images[j], embed.text(spec.steps[j].condition.embedding));
  out.step /= static_cast<double>(images.size());
  long pairs = 0;
  for (std::size_t a = 0; a < images.size(); ++a)
    for (std::size_t b = a + 1; b < images.size(); ++b, ++pairs) out.cross += kernels::cosine(images[a], images[b]);
  if (pairs > 0) out.cross /= static_cast<double>(pairs);
  return out;
}

MetricsReport evaluate_sequence(const std::string& method, std::span<const std::vector<double>> samples,
                                const SequenceSpec& spec, const Embedder& embed,
                                const ClipThresholds& thresholds) {
  MetricsReport r;
  r.method = method;
  r.sequence_id = spec.id;
  if (samples.size() >= 2) {
    r.clip_i = clip_i_analog(samples, embed, thresholds.clip_i);
    r.dino_i = dino_i_analog(samples, embed, thresholds.dino_i);
  }
  const ClipT t = clip_t_analog(samples, spec, embed, thresholds.clip_t);
  r.clip_t = ClippedValue{t.raw, t.clipped};
  r.clip_star = r.clip_i.clipped * r.clip_t.clipped;
  r.dino_star = r.dino_i.clipped * r.clip_t.clipped;
  r.faith = faithfulness(samples, spec, embed);
  return r;
}

std::string metrics_csv(std::span<const MetricsReport> reports) {
  std::string out = "method,sequence_id,metric,raw,clipped\n";
  auto row = [&](const MetricsReport& r, const char* metric, double raw, double clipped) {
    out += r.method + "," + r.sequence_id + "," + metric + "," + csv_number(raw) + "," +
           csv_number(clipped) + "\n";
  };
  for (const auto& r : reports) {
    row(r, "clip_i", r.clip_i.raw, r.clip_i.clipped);
    row(r, "dino_i", r.dino_i.raw, r.dino_i.clipped);
    row(r, "clip_t", r.clip_t.raw, r.clip_t.clipped);
    row(r, "clip_star", r.clip_i.raw * r.clip_t.raw, r.clip_star);
    row(r, "dino_star", r.dino_i.raw * r.clip_t.raw, r.dino_star);
    row(r, "goal_faithfulness", r.faith.goal, r.faith.goal);
    row(r, "step_faithfulness", r.faith.step, r.faith.step);
    row(r, "cross_image_consistency", r.faith.cross, r.faith.cross);
  }
  return out;
}

const WinRow* WinTable::find(const std::string& metric, const std::string& method) const {
  for (const auto& r : rows)
    if (r.metric == metric && r.method == method) return &r;
  return nullptr;
}

std::string WinTable::to_csv() const {
  std::string out = "metric,method,wins,sequences,win_pct,mean_normalized\n";
  for (const auto& r : rows) {
    out += r.metric + "," + r.method + "," + std::to_string(r.wins) + "," + std::to_string(r.sequences) +
           "," + csv_number(r.win_pct) + "," + csv_number(r.mean_normalized) + "\n";
  }
  return out;
}

WinTable combined_and_wins(std::span<const MethodReports> methods) {
  if (methods.empty()) throw Error(ErrorKind::empty_set, "no methods to compare");
  const std::size_t n = methods.front().reports.size();
  if (n == 0) throw Error(ErrorKind::empty_set, "no sequences to compare");
  for (const auto& m : methods) {
    if (m.reports.size() != n)
      throw Error(ErrorKind::dimension_mismatch, "method " + m.method + " covers a different sequence set");
    for (std::size_t s = 0; s < n; ++s)
      if (m.reports[s].sequence_id != methods.front().reports[s].sequence_id)
        throw Error(ErrorKind::dimension_mismatch, "method " + m.method + " covers a different sequence set");
  }

  WinTable table;
  for (const auto& metric : win_metrics()) {
    std::vector<WinRow> rows(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
      rows[k].metric = metric;
      rows[k].method = methods[k].method;
      rows[k].sequences = static_cast<long>(n);
    }
    for (std::size_t s = 0; s < n; ++s) {
      double best = metric_value(methods.front().reports[s], metric);
      for (const auto& m : methods) best = std::max(best, metric_value(m.reports[s], metric));
      for (std::size_t k = 0; k < methods.size(); ++k) {
        const double v = metric_value(methods[k].reports[s], metric);
        if (v == best) ++rows[k].wins;
        rows[k].mean_normalized += best > 0.0 ? v / best : 1.0;
      }
    }
    for (auto& r : rows) {
      r.win_pct = 100.0 * static_cast<double>(r.wins) / static_cast<double>(n);
      r.mean_normalized /= static_cast<double>(n);
      table.rows.push_back(std::move(r));
    }
  }
  return table;
}

RatingsMatrix RatingsMatrix::from_json(const json& j) {
  try {
    RatingsMatrix m;
    for (const auto& item : j.at("items"))
      m.counts.push_back((item.is_object() ? item.at("counts") : item).get<std::vector<long>>());
    if (j.contains("n")) {
      const long n = j.at("n").get<long>();
      for (const auto& row : m.counts) {
        long total = 0;
        for (long c : row) total += c;
        if (total != n) throw Error(ErrorKind::invalid_range, "ratings row does not sum to n");
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed ratings: ") + e.what());
  }
}

double fleiss_kappa(const RatingsMatrix& ratings) {
  const auto& rows = ratings.counts;
  if (rows.empty()) throw Error(ErrorKind::empty_set, "no rated items");
  const std::size_t categories = rows.front().size();
  long n = -1;
  for (const auto& row : rows) {
    if (row.size() != categories) throw Error(ErrorKind::dimension_mismatch, "ragged ratings matrix");
    long total = 0;
    for (long c : row) {
      if (c < 0) throw Error(ErrorKind::invalid_range, "negative rating count");
      total += c;
    }
    if (n < 0) n = total;
    if (total != n) throw Error(ErrorKind::invalid_range, "every item needs the same number of raters");
  }
  if (n < 2) throw Error(ErrorKind::invalid_range, "Fleiss' kappa needs at least 2 raters");

  const double items = static_cast<double>(rows.size());
  const double nn = static_cast<double>(n);
  double p_bar = 0.0;
  std::vector<double> column(categories, 0.0);
  for (const auto& row : rows) {
    double agree = 0.0;
    for (std::size_t c = 0; c < categories; ++c) {
      const double v = static_cast<double>(row[c]);
      agree += v * (v - 1.0);
      column[c] += v;
    }
    p_bar += agree / (nn * (nn - 1.0));
  }
  p_bar /= items;
  double p_e = 0.0;
  for (double total : column) {
    const double p = total / (items * nn);
    p_e += p * p;
  }
  if (std::abs(1.0 - p_e) < 1e-12) {
    if (std::abs(1.0 - p_bar) < 1e-12) return 1.0;
    throw Error(ErrorKind::degenerate, "chance agreement is 1 but observed agreement is not");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

bool AuditReport::passed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const AuditRow& r) { return r.pass; });
}

std::string AuditReport::to_csv(bool header) const {
  std::string out = header ? "method,sequence_id,step,expected,logged,status\n" : "";
  for (const auto& r : rows) {
    out += method + "," + sequence_id + "," + std::to_string(r.step) + "," + std::to_string(r.expected) +
           "," + std::to_string(r.logged) + "," + (r.pass ? "pass" : "fail") + "\n";
  }
  return out;
}

std::vector<long> expected_denoiser_calls(const RunLog& log) {
  BeamConfig config;
  try {
    config = BeamConfig::from_json(log.config);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_log, std::string("run log config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::malformed_log, std::string("run log config: ") + e.what());
  }
  const bool single_path = log.method == "greedy" || log.method == "nucleus";
  if (!single_path && log.method != "beam") throw Error(ErrorKind::malformed_log, "unknown method " + log.method);
  const int m = single_path ? 1 : config.m;
  const long indices = static_cast<long>(config.latent_indices.size());

  std::vector<long> expected;
  long beams = config.r;
  expected.push_back(beams);
  if (single_path) beams = 1;
  for (int j = 2; j <= static_cast<int>(log.steps.size()); ++j) {
    const long pool = std::min(m, j - 1) * indices + config.n_random_mid;
    expected.push_back(beams * pool);
    if (single_path) continue;
    beams *= pool;
    if (j >= config.prune_start) beams = std::min<long>(beams, config.w);
  }
  return expected;
}

AuditReport complexity_audit(const RunLog& log) {
  if (log.steps.empty()) throw Error(ErrorKind::malformed_log, "run log has no steps");
  for (std::size_t i = 0; i < log.steps.size(); ++i)
    if (log.steps[i].step != static_cast<int>(i) + 1)
      throw Error(ErrorKind::malformed_log, "run log steps are not 1..L in order");
  const auto expected = expected_denoiser_calls(log);
  AuditReport report;
  report.method = log.method;
  report.sequence_id = log.sequence_id;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const long logged = log.steps[i].denoiser_calls;
    report.rows.push_back(AuditRow{static_cast<int>(i) + 1, expected[i], logged, logged == expected[i]});
  }
  return report;
}

}  // namespace beamlat
