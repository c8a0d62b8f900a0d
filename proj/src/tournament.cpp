#include "beamlat/tournament.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "beamlat/error.hpp"
#include "beamlat/metrics.hpp"

namespace beamlat {

using nlohmann::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::first: return "FIRST";
    case Verdict::second: return "SECOND";
    case Verdict::both_good: return "BOTH_GOOD";
    case Verdict::both_bad: return "BOTH_BAD";
  }
  return "?";
}

Verdict parse_verdict(const std::string& name) {
  if (name == "FIRST") return Verdict::first;
  if (name == "SECOND") return Verdict::second;
  if (name == "BOTH_GOOD") return Verdict::both_good;
  if (name == "BOTH_BAD") return Verdict::both_bad;
  throw Error(ErrorKind::invalid_range, "unknown verdict '" + name + "'");
}

Tournament::Tournament(std::vector<Contender> contenders, int raters_per_pairing)
    : contenders_(std::move(contenders)), raters_(raters_per_pairing) {
  if (contenders_.empty()) throw Error(ErrorKind::empty_set, "tournament needs at least one contender");
  if (raters_ < 1) throw Error(ErrorKind::invalid_range, "raters per pairing must be >= 1");
  for (std::size_t i = 0; i < contenders_.size(); ++i)
    for (std::size_t k = i + 1; k < contenders_.size(); ++k)
      if (contenders_[i].id == contenders_[k].id)
        throw Error(ErrorKind::invalid_range, "duplicate contender id '" + contenders_[i].id + "'");
  champion_so_far_ = contenders_.front().id;
}

const Contender& Tournament::contender(const std::string& id) const {
  for (const auto& c : contenders_)
    if (c.id == id) return c;
  throw Error(ErrorKind::invalid_range, "unknown contender '" + id + "'");
}

std::optional<Pairing> Tournament::next_pairing() const {
  if (next_challenger_ >= contenders_.size()) return std::nullopt;
  const std::size_t round = next_challenger_;
  return Pairing{"p" + std::to_string(round), round, champion_so_far_, contenders_[round].id};
}

std::optional<std::string> Tournament::champion() const {
  if (next_challenger_ < contenders_.size()) return std::nullopt;
  return champion_so_far_;
}

std::size_t Tournament::remaining_pairings() const noexcept {
  return contenders_.size() - next_challenger_;
}

std::string Tournament::cheaper(const std::string& a, const std::string& b) const {
  const long ca = contender(a).cost;
  const long cb = contender(b).cost;
  if (ca != cb) return ca < cb ? a : b;
  return std::min(a, b);
}

void Tournament::record_verdict(const std::string& pairing_id, Verdict verdict, const std::string& rater) {
  const auto open = next_pairing();
  if (!open) throw Error(ErrorKind::stale_pairing, "tournament is finished");
  if (pairing_id != open->id)
    throw Error(ErrorKind::stale_pairing, "pairing '" + pairing_id + "' is not open (open: " + open->id + ")");
  for (const auto& v : open_)
    if (v.rater == rater)
      throw Error(ErrorKind::stale_pairing, "rater '" + rater + "' already judged " + pairing_id);
  open_.push_back(VerdictRecord{pairing_id, verdict, rater});
  if (static_cast<int>(open_.size()) < raters_) return;

  // Most frequent verdict; the earliest submission wins ties.
  std::map<Verdict, int> tally;
  for (const auto& v : open_) ++tally[v.verdict];
  Verdict outcome = open_.front().verdict;
  for (const auto& v : open_)
    if (tally[v.verdict] > tally[outcome]) outcome = v.verdict;

  std::string winner;
  switch (outcome) {
    case Verdict::first: winner = open->left; break;
    case Verdict::second: winner = open->right; break;
    case Verdict::both_good:
    case Verdict::both_bad: winner = cheaper(open->left, open->right); break;
  }
  results_.push_back(PairingResult{*open, std::move(open_), winner});
  open_.clear();
  champion_so_far_ = winner;
  ++next_challenger_;
}

std::vector<VerdictRecord> Tournament::verdict_history() const {
  std::vector<VerdictRecord> out;
  for (const auto& r : results_) out.insert(out.end(), r.verdicts.begin(), r.verdicts.end());
  out.insert(out.end(), open_.begin(), open_.end());
  return out;
}

std::optional<double> Tournament::agreement() const {
  if (raters_ < 2) return std::nullopt;
  RatingsMatrix m;
  for (const auto& r : results_) {
    std::vector<long> row(4, 0);
    for (const auto& v : r.verdicts) ++row[static_cast<std::size_t>(v.verdict)];
    m.counts.push_back(std::move(row));
  }
  if (m.counts.empty()) return std::nullopt;
  return fleiss_kappa(m);
}

namespace {

json verdict_json(const VerdictRecord& v) {
  return {{"pairing_id", v.pairing_id}, {"verdict", to_string(v.verdict)}, {"rater", v.rater}};
}

json pairing_json(const Pairing& p) {
  return {{"pairing_id", p.id}, {"round", p.round}, {"left", p.left}, {"right", p.right}};
}

}  // namespace

json Tournament::to_json() const {
  json contenders = json::array();
  for (const auto& c : contenders_) contenders.push_back({{"id", c.id}, {"cost", c.cost}});
  json pairings = json::array();
  for (const auto& r : results_) {
    json p = pairing_json(r.pairing);
    p["winner"] = r.winner;
    p["verdicts"] = json::array();
    for (const auto& v : r.verdicts) p["verdicts"].push_back(verdict_json(v));
    pairings.push_back(std::move(p));
  }
  json history = json::array();
  for (const auto& v : verdict_history()) history.push_back(verdict_json(v));
  json out = {{"contenders", std::move(contenders)},
              {"raters_per_pairing", raters_},
              {"pairings", std::move(pairings)},
              {"verdicts", std::move(history)},
              {"remaining", remaining_pairings()}};
  if (const auto open = next_pairing()) {
    out["current"] = pairing_json(*open);
    out["current"]["verdicts"] = open_.size();
  } else {
    out["current"] = nullptr;
  }
  const auto champ = champion();
  out["champion"] = champ ? json(*champ) : json(nullptr);
  return out;
}

json Tournament::journal_header() const {
  json contenders = json::array();
  for (const auto& c : contenders_) contenders.push_back({{"id", c.id}, {"cost", c.cost}});
  return {{"type", "tournament"}, {"contenders", std::move(contenders)}, {"raters_per_pairing", raters_}};
}

json Tournament::journal_entry(const VerdictRecord& record) {
  json out = verdict_json(record);
  out["type"] = "verdict";
  return out;
}

Tournament TournamentJournal::replay(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open journal " + path.string());
  std::optional<Tournament> state;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::journal_corruption,
                   path.string() + ": bad entry at byte offset " + std::to_string(here) + ": " + why);
    };
    try {
      const json entry = json::parse(line);
      const std::string type = entry.at("type").get<std::string>();
      if (!state) {
        if (type != "tournament") throw fail("journal does not start with a tournament header");
        std::vector<Contender> contenders;
        for (const auto& c : entry.at("contenders"))
          contenders.push_back(Contender{c.at("id").get<std::string>(), c.at("cost").get<long>()});
        state.emplace(std::move(contenders), entry.at("raters_per_pairing").get<int>());
      } else {
        if (type != "verdict") throw fail("unexpected entry type '" + type + "'");
        state->record_verdict(entry.at("pairing_id").get<std::string>(),
                              parse_verdict(entry.at("verdict").get<std::string>()),
                              entry.at("rater").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::journal_corruption) throw;
      throw fail(e.what());
    }
  }
  if (!state) throw Error(ErrorKind::journal_corruption, path.string() + ": empty journal at byte offset 0");
  return std::move(*state);
}

Tournament TournamentJournal::open(const std::vector<Contender>& contenders, int raters_per_pairing) const {
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    Tournament t = replay(path_);
    const auto& have = t.contenders();
    const bool same = have.size() == contenders.size() &&
                      std::equal(have.begin(), have.end(), contenders.begin(), [](const auto& a, const auto& b) {
                        return a.id == b.id && a.cost == b.cost;
                      });
    if (!same || t.raters_per_pairing() != raters_per_pairing)
      throw Error(ErrorKind::journal_corruption,
                  path_.string() + ": header at byte offset 0 describes a different tournament");
    return t;
  }
  Tournament t(contenders, raters_per_pairing);
  write_header(t);
  return t;
}

void TournamentJournal::write_header(const Tournament& t) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write journal " + path_.string());
  out << t.journal_header().dump() << '\n';
  out.flush();
}

void TournamentJournal::append(const VerdictRecord& record) const {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorKind::io, "cannot append to journal " + path_.string());
  out << Tournament::journal_entry(record).dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::io, "journal write failed for " + path_.string());
}

}  // namespace beamlat
