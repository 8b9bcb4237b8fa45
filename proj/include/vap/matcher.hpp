#pragma once

// Reference-based instance selection: every reference embedding votes for the
// proposal it is most similar to, and the proposal with the most votes wins.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vap/error.hpp"
#include "vap/scene.hpp"

namespace vap {

/// Cosine similarity of two unit embeddings, clamped to [-1, 1].
inline double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("cosine: embedding dims differ");
  double dot = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) dot += av[i] * bv[i];
  return std::clamp(dot, -1.0, 1.0);
}

struct SelectionResult {
  std::size_t winner_index = 0;
  std::vector<int> votes;             // one entry per proposal, sums to K
  std::vector<double> mean_cosines;   // mean similarity to the K references
  bool tie_broken = false;            // true iff several proposals shared the top vote count
};

enum class Selector { vote, average };

inline std::string_view to_string(Selector s) { return s == Selector::vote ? "vote" : "average"; }

namespace detail {

// Row i holds cos(e_i, z_k) for every reference k.
inline std::vector<std::vector<double>> similarity_table(std::span<const Embedding> proposals,
                                                         std::span<const Embedding> refs) {
  if (proposals.empty()) throw NoCandidates();
  if (refs.empty()) throw InvalidEmbedding("reference set is empty");
  std::vector<std::vector<double>> table(proposals.size(), std::vector<double>(refs.size()));
  for (std::size_t i = 0; i < proposals.size(); ++i)
    for (std::size_t k = 0; k < refs.size(); ++k) table[i][k] = cosine(proposals[i], refs[k]);
  return table;
}

inline SelectionResult tally(const std::vector<std::vector<double>>& table) {
  const std::size_t n = table.size();
  const std::size_t k_count = table.front().size();
  SelectionResult r;
  r.votes.assign(n, 0);
  r.mean_cosines.assign(n, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (table[i][k] > table[best][k]) best = i;
    ++r.votes[best];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double c : table[i]) sum += c;
    r.mean_cosines[i] = sum / static_cast<double>(k_count);
  }
  return r;
}

}  // namespace detail

/// Voting rule over raw embeddings. Ties in vote count go to the highest mean
/// cosine, then to the lowest index.
inline SelectionResult vote_select(std::span<const Embedding> proposals, std::span<const Embedding> refs) {
  auto r = detail::tally(detail::similarity_table(proposals, refs));
  const int top = *std::max_element(r.votes.begin(), r.votes.end());
  std::size_t winner = proposals.size();
  int tied = 0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (r.votes[i] != top) continue;
    ++tied;
    if (winner == proposals.size() || r.mean_cosines[i] > r.mean_cosines[winner]) winner = i;
  }
  r.winner_index = winner;
  r.tie_broken = tied > 1;
  return r;
}

/// Mean-cosine rule; votes are still reported but do not affect the winner.
inline SelectionResult average_select(std::span<const Embedding> proposals, std::span<const Embedding> refs) {
  auto r = detail::tally(detail::similarity_table(proposals, refs));
  std::size_t winner = 0;
  for (std::size_t i = 1; i < proposals.size(); ++i)
    if (r.mean_cosines[i] > r.mean_cosines[winner]) winner = i;
  r.winner_index = winner;
  r.tie_broken = false;
  return r;
}

inline std::vector<Embedding> embeddings_of(std::span<const Proposal> proposals) {
  std::vector<Embedding> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) out.push_back(p.embedding());
  return out;
}

inline SelectionResult vote_select(std::span<const Proposal> proposals, const ReferenceSet& refs) {
  if (proposals.empty()) throw NoCandidates();
  return vote_select(embeddings_of(proposals), refs.references());
}

inline SelectionResult average_select(std::span<const Proposal> proposals, const ReferenceSet& refs) {
  if (proposals.empty()) throw NoCandidates();
  return average_select(embeddings_of(proposals), refs.references());
}

inline SelectionResult select(Selector how, std::span<const Proposal> proposals, const ReferenceSet& refs) {
  return how == Selector::vote ? vote_select(proposals, refs) : average_select(proposals, refs);
}

}  // namespace vap
