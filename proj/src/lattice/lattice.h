// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace twopass {
namespace lattice {

struct Arc {
  int from = 0;
  int to = 0;
  int token = 0;
  double rnnt_logp = 0.0;
  bool has_las = false;
  double las_logp = 0.0;
};

struct Node {
  int id = 0;
  int parent = -1;
  int depth = 0;
  bool terminal = false;
  std::vector<int> out;  // arc indices, sorted by token id
};

// Hypothesis prefix tree shared between the two passes. Node 0 is the root;
// each arc carries the first-pass score of its token and, after rescoring,
// the second-pass score.
struct PrefixTreeLattice {
  std::string utt_id;
  uint64_t vocab_hash = 0;
  std::vector<Node> nodes;
  std::vector<Arc> arcs;

  PrefixTreeLattice() { nodes.push_back(Node{0, -1, 0, false, {}}); }

  static constexpr int kRoot = 0;

  // Arc index from `node` labeled `token`, or -1.
  int find_arc(int node, int token) const;
  // Child node reached from `node` via `token`, or -1.
  int find_child(int node, int token) const;
  // Adds a child arc+node; the token must not already have an arc.
  int add_child(int node, int token, double rnnt_logp);

  std::vector<int> terminal_nodes() const;
  // Tokens along the root path to `node`.
  std::vector<int> path_tokens(int node) const;
  // Arc indices along the root path to `node`.
  std::vector<int> path_arcs(int node) const;

  int num_arcs() const { return static_cast<int>(arcs.size()); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }

  // Checks tree structure, arc ordering, and id consistency.
  void validate() const;
};

// One first-pass hypothesis: emitted tokens plus the per-token score
// increments; their sum is the hypothesis score.
struct BeamHypothesis {
  std::vector<int> tokens;
  std::vector<double> token_logps;
};

struct ScoreWeights {
  double lambda_las = 0.5;  // weight on second-pass scores
  void validate() const;
};

struct ScoredPath {
  std::vector<int> tokens;
  double score = 0.0;
  int terminal_node = 0;
};

// Builds the prefix tree. Hypotheses are installed in order; when two share
// a prefix the earlier hypothesis fixes the shared arc scores. Exact
// duplicates are dropped.
PrefixTreeLattice from_beam_hypotheses(const std::vector<BeamHypothesis>& hyps);

// Argmax over terminal paths of sum of (1-lambda)*rnnt_logp + lambda*las_logp.
// With lambda > 0, paths missing any las_logp are skipped; if every terminal
// path is incomplete that is a contract error. Ties break toward the
// lexicographically smaller token sequence.
ScoredPath best_path(const PrefixTreeLattice& lat, const ScoreWeights& weights);

// Top-n terminal paths by combined score, ranked; may return fewer than n.
std::vector<ScoredPath> nbest(const PrefixTreeLattice& lat, int n, const ScoreWeights& weights);

// Human-readable dump; parse_lattice(dump_lattice(L)) round-trips bit-exactly.
std::string dump_lattice(const PrefixTreeLattice& lat);
PrefixTreeLattice parse_lattice(const std::string& text);

}  // namespace lattice
}  // namespace twopass
