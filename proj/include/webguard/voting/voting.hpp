#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/html/dom.hpp"
#include "webguard/partition/partition.hpp"

namespace webguard::voting {

// Classifies one round's sampled subgraphs (the URL side is bound inside the
// implementation). Returns logits for {benign, malicious}.
class RoundClassifier {
 public:
  virtual ~RoundClassifier() = default;
  virtual std::array<double, 2> classify(const std::vector<partition::SubGraph>& selected) = 0;
};

struct VoteParams {
  std::size_t t_f = 5;
  std::size_t iter_num = 4;
  std::size_t iter_per = 5;
  std::uint64_t seed = 0;
  std::size_t threshold = 2;  // malicious rounds needed for a malicious verdict

  void validate() const;
};

struct RoundRecord {
  std::size_t round_index = 0;
  std::vector<std::size_t> sampled_group_ids;
  int predicted_class = 0;
  double malicious_prob = 0.0;
};

struct VoteOutcome {
  int y_pred = 0;
  double y_score = 0.0;
  std::vector<RoundRecord> rounds;
  std::vector<std::size_t> flagged_groups;  // multiset, in round order
};

// Softmax component for class 1 and the argmax (ties go to class 0).
std::pair<int, double> round_decision(const std::array<double, 2>& logits);

VoteOutcome vote(const std::vector<partition::SubGraph>& subgraphs, RoundClassifier& model, const VoteParams& params);
VoteOutcome vote(const html::DomGraph& doc, RoundClassifier& model, const VoteParams& params,
                 const std::string& doc_id = "");

struct LocalizedNode {
  std::string path;
  std::string tag;
  std::string snippet;  // at most 120 bytes, cut on a UTF-8 boundary
};

struct LocalizedGroup {
  std::size_t group_id = 0;
  std::size_t count = 0;         // appearances in malicious rounds
  std::size_t benign_count = 0;  // appearances in benign rounds
  double probe_score = -1.0;     // 1 - malicious prob with this group left out; -1 if not probed
  std::vector<LocalizedNode> nodes;
};

struct LocalizationReport {
  std::string doc_id;
  int verdict = 1;
  double score = 0.0;
  std::vector<LocalizedGroup> groups;  // ranked, most suspicious first
};

// Ranks the groups that appeared in malicious rounds. Without a probe: count
// descending, then fewer benign-round appearances, then group_id. With a
// probe, occlusion comes first: the probe classifies all other groups
// together, and the group whose removal lowers the malicious probability
// most ranks first; the count keys break remaining ties.
LocalizationReport localize(const VoteOutcome& outcome, const std::vector<partition::SubGraph>& subgraphs,
                            const html::DomGraph& doc, const std::string& doc_id = "",
                            RoundClassifier* probe = nullptr);

nlohmann::json to_json(const LocalizationReport& report);
nlohmann::json to_json(const VoteOutcome& outcome);

}  // namespace webguard::voting
