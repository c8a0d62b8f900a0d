#pragma once

// Champion-stays-on elimination ladder over configurations.
//
// Contenders play in file order: the first is the initial champion, each later
// one challenges the current champion once. A pairing closes after
// `raters_per_pairing` verdicts from distinct raters; its outcome is the most
// frequent verdict (earliest submission breaks ties). BOTH_GOOD and BOTH_BAD
// advance the cheaper configuration, then the smaller id.
//
// Journal: JSON lines. The first line describes the contenders; each later
// line is one accepted verdict. Replaying the journal rebuilds the state.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace beamlat {

enum class Verdict { first, second, both_good, both_bad };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& name);

struct Contender {
  std::string id;
  long cost = 0;
};

struct Pairing {
  std::string id;
  std::size_t round = 0;
  std::string left;   // champion so far
  std::string right;  // challenger
};

struct VerdictRecord {
  std::string pairing_id;
  Verdict verdict = Verdict::first;
  std::string rater;
};

struct PairingResult {
  Pairing pairing;
  std::vector<VerdictRecord> verdicts;
  std::string winner;
};

class Tournament {
 public:
  explicit Tournament(std::vector<Contender> contenders, int raters_per_pairing = 1);

  const std::vector<Contender>& contenders() const noexcept { return contenders_; }
  int raters_per_pairing() const noexcept { return raters_; }
  const Contender& contender(const std::string& id) const;

  // The open pairing, or nullopt once a champion is decided.
  std::optional<Pairing> next_pairing() const;
  std::optional<std::string> champion() const;
  std::size_t remaining_pairings() const noexcept;

  // Throws stale_pairing unless `pairing_id` is the open pairing and `rater`
  // has not yet judged it.
  void record_verdict(const std::string& pairing_id, Verdict verdict, const std::string& rater);

  const std::vector<PairingResult>& results() const noexcept { return results_; }
  const std::vector<VerdictRecord>& open_verdicts() const noexcept { return open_; }
  std::vector<VerdictRecord> verdict_history() const;

  // Advancing side when both options are rated alike.
  std::string cheaper(const std::string& a, const std::string& b) const;

  // Items = closed pairings with >= 2 raters, categories = the 4 verdicts.
  // nullopt when no such pairing exists.
  std::optional<double> agreement() const;

  nlohmann::json to_json() const;

  nlohmann::json journal_header() const;
  static nlohmann::json journal_entry(const VerdictRecord& record);

 private:
  std::vector<Contender> contenders_;
  int raters_;
  std::size_t next_challenger_ = 1;
  std::string champion_so_far_;
  std::vector<PairingResult> results_;
  std::vector<VerdictRecord> open_;
};

// Appends verdicts to a journal file and rebuilds tournaments from one.
class TournamentJournal {
 public:
  explicit TournamentJournal(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const noexcept { return path_; }

  // Replays an existing journal (checking it was written for the same
  // contenders) or starts a new one. Throws journal_corruption with the byte
  // offset of the first bad line.
  Tournament open(const std::vector<Contender>& contenders, int raters_per_pairing) const;
  static Tournament replay(const std::filesystem::path& path);

  void append(const VerdictRecord& record) const;

 private:
  void write_header(const Tournament& t) const;
  std::filesystem::path path_;
};

}  // namespace beamlat
