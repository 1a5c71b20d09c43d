// SPDX-License-Identifier: Apache-2.0

#include "lattice/lattice.h"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "util/common.h"
#include "util/io.h"

namespace twopass {
namespace lattice {

int PrefixTreeLattice::find_arc(int node, int token) const {
  check(node >= 0 && node < num_nodes(), "lattice node id out of range");
  for (int a : nodes[node].out)
    if (arcs[a].token == token) return a;
  return -1;
}

int PrefixTreeLattice::find_child(int node, int token) const {
  int a = find_arc(node, token);
  return a < 0 ? -1 : arcs[a].to;
}

int PrefixTreeLattice::add_child(int node, int token, double rnnt_logp) {
  check(find_arc(node, token) < 0, "duplicate outgoing token arc");
  int child = num_nodes();
  nodes.push_back(Node{child, node, nodes[node].depth + 1, false, {}});
  int arc = num_arcs();
  arcs.push_back(Arc{node, child, token, rnnt_logp, false, 0.0});
  auto& out = nodes[node].out;
  auto pos = std::upper_bound(out.begin(), out.end(), arc, [this](int lhs, int rhs) {
    return arcs[lhs].token < arcs[rhs].token;
  });
  out.insert(pos, arc);
  return child;
}

std::vector<int> PrefixTreeLattice::terminal_nodes() const {
  std::vector<int> out;
  for (const Node& n : nodes)
    if (n.terminal) out.push_back(n.id);
  return out;
}

std::vector<int> PrefixTreeLattice::path_tokens(int node) const {
  std::vector<int> arcs_on_path = path_arcs(node);
  std::vector<int> out;
  out.reserve(arcs_on_path.size());
  for (int a : arcs_on_path) out.push_back(arcs[a].token);
  return out;
}

std::vector<int> PrefixTreeLattice::path_arcs(int node) const {
  check(node >= 0 && node < num_nodes(), "lattice node id out of range");
  std::vector<int> out;
  int cur = node;
  while (cur != kRoot) {
    int parent = nodes[cur].parent;
    int a = -1;
    for (int cand : nodes[parent].out)
      if (arcs[cand].to == cur) {
        a = cand;
        break;
      }
    check(a >= 0, "node unreachable from its parent");
    out.push_back(a);
    cur = parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void PrefixTreeLattice::validate() const {
  check(!nodes.empty() && nodes[0].parent == -1 && nodes[0].depth == 0,
        "lattice root malformed");
  for (int i = 0; i < num_nodes(); ++i) {
    const Node& n = nodes[i];
    check(n.id == i, "lattice node ids must be contiguous");
    if (i != kRoot) {
      check(n.parent >= 0 && n.parent < num_nodes(), "lattice parent out of range");
      check(n.depth == nodes[n.parent].depth + 1, "lattice depth inconsistent");
    }
    int prev_token = -1;
    for (int a : n.out) {
      check(a >= 0 && a < num_arcs(), "lattice arc index out of range");
      check(arcs[a].from == i, "arc listed under wrong node");
      check(arcs[a].token > prev_token, "outgoing arcs must be token-sorted and unique");
      prev_token = arcs[a].token;
      check(nodes[arcs[a].to].parent == i, "arc target parent mismatch");
    }
  }
  for (const Arc& a : arcs) {
    check(a.from >= 0 && a.from < num_nodes() && a.to > 0 && a.to < num_nodes(),
          "arc endpoint out of range");
  }
}

void ScoreWeights::validate() const {
  check_config(lambda_las >= 0.0 && lambda_las <= 1.0, "lambda_las must be in [0,1]");
}

PrefixTreeLattice from_beam_hypotheses(const std::vector<BeamHypothesis>& hyps) {
  PrefixTreeLattice lat;
  std::vector<const BeamHypothesis*> kept;
  for (const BeamHypothesis& h : hyps) {
    check(h.tokens.size() == h.token_logps.size(),
          "hypothesis tokens and scores must align");
    bool dup = false;
    for (const BeamHypothesis* k : kept)
      if (k->tokens == h.tokens) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(&h);
  }
  for (const BeamHypothesis* h : kept) {
    // An empty hypothesis has no arc to carry its score; it is not
    // representable as a lattice path and is dropped.
    if (h->tokens.empty()) continue;
    int node = PrefixTreeLattice::kRoot;
    for (size_t i = 0; i < h->tokens.size(); ++i) {
      int next = lat.find_child(node, h->tokens[i]);
      if (next < 0) next = lat.add_child(node, h->tokens[i], h->token_logps[i]);
      node = next;
    }
    lat.nodes[node].terminal = true;
  }
  return lat;
}

namespace {

struct PathScore {
  bool complete = true;  // every arc has las_logp when lambda > 0
  double score = 0.0;
};

PathScore score_path(const PrefixTreeLattice& lat, const std::vector<int>& path_arcs,
                     const ScoreWeights& w) {
  PathScore out;
  for (int a : path_arcs) {
    const Arc& arc = lat.arcs[a];
    if (w.lambda_las > 0.0 && !arc.has_las) {
      out.complete = false;
      return out;
    }
    out.score += (1.0 - w.lambda_las) * arc.rnnt_logp + w.lambda_las * arc.las_logp;
  }
  return out;
}

bool ranked_before(const ScoredPath& a, const ScoredPath& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

std::vector<ScoredPath> ranked_paths(const PrefixTreeLattice& lat, const ScoreWeights& w) {
  w.validate();
  std::vector<int> terminals = lat.terminal_nodes();
  check(!terminals.empty(), "lattice has no terminal hypotheses");
  std::vector<ScoredPath> out;
  int incomplete = 0;
  for (int node : terminals) {
    PathScore ps = score_path(lat, lat.path_arcs(node), w);
    if (!ps.complete) {
      ++incomplete;
      continue;
    }
    out.push_back(ScoredPath{lat.path_tokens(node), ps.score, node});
  }
  check(!out.empty() || incomplete == 0,
        "rescore incomplete: no terminal path has second-pass scores on every arc");
  check(!out.empty(), "lattice has no scoreable terminal paths");
  std::sort(out.begin(), out.end(), ranked_before);
  return out;
}

}  // namespace

ScoredPath best_path(const PrefixTreeLattice& lat, const ScoreWeights& weights) {
  return ranked_paths(lat, weights).front();
}

std::vector<ScoredPath> nbest(const PrefixTreeLattice& lat, int n, const ScoreWeights& weights) {
  check(n >= 1, "nbest needs n >= 1");
  std::vector<ScoredPath> ranked = ranked_paths(lat, weights);
  if (static_cast<int>(ranked.size()) > n) ranked.resize(n);
  return ranked;
}

std::string dump_lattice(const PrefixTreeLattice& lat) {
  lat.validate();
  std::ostringstream os;
  os << "lattice 1\n";
  os << "utt " << lat.utt_id << "\n";
  os << "vocab_hash " << lat.vocab_hash << "\n";
  os << "nodes " << lat.num_nodes() << "\n";
  for (const Node& n : lat.nodes) os << n.id << " " << n.parent << " " << n.depth << "\n";
  os << "arcs " << lat.num_arcs() << "\n";
  for (const Arc& a : lat.arcs) {
    os << a.from << " " << a.to << " " << a.token << " " << format_double(a.rnnt_logp) << " ";
    if (a.has_las)
      os << format_double(a.las_logp) << "\n";
    else
      os << "null\n";
  }
  std::vector<int> terminals = lat.terminal_nodes();
  os << "terminals " << terminals.size() << "\n";
  for (int t : terminals) os << t << "\n";
  os << "end\n";
  return os.str();
}

namespace {

std::string next_line(std::istringstream& is, const char* what) {
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), std::string("lattice dump truncated at ") + what);
  return line;
}

int expect_count(const std::string& line, const std::string& keyword) {
  std::istringstream ls(line);
  std::string word;
  long long n = -1;
  ls >> word >> n;
  check(word == keyword && n >= 0, "lattice dump: expected '" + keyword + " <count>'");
  return static_cast<int>(n);
}

}  // namespace

PrefixTreeLattice parse_lattice(const std::string& text) {
  std::istringstream is(text);
  check(next_line(is, "header") == "lattice 1", "lattice dump: bad header");

  std::string utt_line = next_line(is, "utt");
  check(utt_line.rfind("utt", 0) == 0, "lattice dump: missing utt line");
  PrefixTreeLattice lat;
  lat.utt_id = utt_line.size() > 4 ? utt_line.substr(4) : "";

  std::istringstream vh(next_line(is, "vocab_hash"));
  std::string word;
  vh >> word >> lat.vocab_hash;
  check(word == "vocab_hash" && !vh.fail(), "lattice dump: bad vocab_hash line");

  int n_nodes = expect_count(next_line(is, "nodes"), "nodes");
  check(n_nodes >= 1, "lattice dump: needs at least the root node");
  lat.nodes.assign(static_cast<size_t>(n_nodes), Node{});
  for (int i = 0; i < n_nodes; ++i) {
    std::istringstream ls(next_line(is, "node row"));
    Node n;
    ls >> n.id >> n.parent >> n.depth;
    check(!ls.fail() && n.id == i, "lattice dump: bad node row");
    lat.nodes[static_cast<size_t>(i)] = n;
  }

  int n_arcs = expect_count(next_line(is, "arcs"), "arcs");
  for (int i = 0; i < n_arcs; ++i) {
    std::istringstream ls(next_line(is, "arc row"));
    Arc a;
    std::string rnnt_s, las_s;
    ls >> a.from >> a.to >> a.token >> rnnt_s >> las_s;
    check(!ls.fail(), "lattice dump: bad arc row");
    a.rnnt_logp = std::strtod(rnnt_s.c_str(), nullptr);
    if (las_s != "null") {
      a.has_las = true;
      a.las_logp = std::strtod(las_s.c_str(), nullptr);
    }
    check(a.from >= 0 && a.from < n_nodes && a.to > 0 && a.to < n_nodes,
          "lattice dump: arc endpoint out of range");
    lat.arcs.push_back(a);
    lat.nodes[static_cast<size_t>(a.from)].out.push_back(i);
  }
  for (Node& n : lat.nodes)
    std::sort(n.out.begin(), n.out.end(),
              [&lat](int x, int y) { return lat.arcs[x].token < lat.arcs[y].token; });

  int n_term = expect_count(next_line(is, "terminals"), "terminals");
  for (int i = 0; i < n_term; ++i) {
    std::istringstream ls(next_line(is, "terminal row"));
    int id = -1;
    ls >> id;
    check(!ls.fail() && id >= 0 && id < n_nodes, "lattice dump: bad terminal id");
    lat.nodes[static_cast<size_t>(id)].terminal = true;
  }
  check(next_line(is, "end") == "end", "lattice dump: missing end marker");
  lat.validate();
  return lat;
}

}  // namespace lattice
}  // namespace twopass
