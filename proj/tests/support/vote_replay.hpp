#pragma once

#include <array>
#include <vector>

namespace webguard::testing {

struct ReplayResult {
  int y_pred = 0;
  double y_score = 0.0;
};

// Line-by-line transcription of the biased voting loop over a transcript of
// per-round logits, tracking the malicious softmax component as the score.
ReplayResult replay_vote(const std::vector<std::array<double, 2>>& round_logits);

}  // namespace webguard::testing
