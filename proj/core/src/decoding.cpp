#include "catnet/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace catnet {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void suppress_forbidden(std::vector<double>& logp, const DecodeConfig& cfg) {
  for (int id : cfg.forbidden) {
    if (id >= 0 && static_cast<std::size_t>(id) < logp.size()) {
      logp[static_cast<std::size_t>(id)] = kNegInf;
    }
  }
}

struct Hypothesis {
  std::vector<int> tokens;  // generated content, END excluded
  double logp = 0.0;
  bool finished = false;
};

double ranked_score(const Hypothesis& h, double alpha) {
  const double len = static_cast<double>(std::max<std::size_t>(h.tokens.size(), 1));
  return h.logp / std::pow(len, alpha);
}

// score desc, then shorter, then lexicographic tokens
bool better(const Hypothesis& a, const Hypothesis& b, double alpha) {
  const double sa = ranked_score(a, alpha);
  const double sb = ranked_score(b, alpha);
  if (sa != sb) return sa > sb;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

std::vector<int> with_start(const DecodeConfig& cfg, const std::vector<int>& tokens) {
  std::vector<int> prefix;
  prefix.reserve(tokens.size() + 1);
  prefix.push_back(cfg.start_id);
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  return prefix;
}

Hypothesis greedy_rollout(const StepFn& step, const DecodeConfig& cfg) {
  Hypothesis h;
  std::vector<int> prefix = {cfg.start_id};
  for (std::size_t t = 0; t < cfg.max_len; ++t) {
    std::vector<double> logp = step(prefix);
    suppress_forbidden(logp, cfg);
    std::size_t best = 0;
    for (std::size_t v = 1; v < logp.size(); ++v) {
      if (logp[v] > logp[best]) best = v;
    }
    h.logp += logp[best];
    if (static_cast<int>(best) == cfg.end_id) {
      h.finished = true;
      break;
    }
    h.tokens.push_back(static_cast<int>(best));
    prefix.push_back(static_cast<int>(best));
  }
  return h;
}

}  // namespace

std::vector<int> greedy_decode(const StepFn& step, const DecodeConfig& cfg) {
  if (cfg.max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  return greedy_rollout(step, cfg).tokens;
}

std::vector<int> beam_search(const StepFn& step, const DecodeConfig& cfg) {
  if (cfg.beam_width < 1) throw std::invalid_argument("beam_search: beam width must be >= 1");
  if (cfg.beam_width > 64) {
    throw std::invalid_argument("beam_search: beam width capped at 64, got " +
                                std::to_string(cfg.beam_width));
  }
  if (cfg.max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");

  std::vector<Hypothesis> pool;
  pool.push_back(greedy_rollout(step, cfg));  // guarantees beam >= greedy

  std::vector<Hypothesis> live;
  live.push_back(Hypothesis{});

  for (std::size_t t = 0; t < cfg.max_len && !live.empty(); ++t) {
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : live) {
      std::vector<double> logp = step(with_start(cfg, h.tokens));
      suppress_forbidden(logp, cfg);
      for (std::size_t v = 0; v < logp.size(); ++v) {
        if (logp[v] == kNegInf) continue;
        Hypothesis next = h;
        next.logp += logp[v];
        if (static_cast<int>(v) == cfg.end_id) {
          next.finished = true;
        } else {
          next.tokens.push_back(static_cast<int>(v));
        }
        candidates.push_back(std::move(next));
      }
    }
    // top beam_width by cumulative log-prob, deterministic ties
    std::sort(candidates.begin(), candidates.end(),
              [](const Hypothesis& a, const Hypothesis& b) { return better(a, b, 0.0); });
    if (candidates.size() > cfg.beam_width) candidates.resize(cfg.beam_width);
    live.clear();
    for (Hypothesis& c : candidates) {
      if (c.finished) {
        pool.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }
  // hypotheses that hit max_len unfinished still compete
  for (Hypothesis& h : live) pool.push_back(std::move(h));

  const Hypothesis* best = &pool.front();
  for (const Hypothesis& h : pool) {
    if (better(h, *best, cfg.length_norm)) best = &h;
  }
  return best->tokens;
}

}  // namespace catnet
