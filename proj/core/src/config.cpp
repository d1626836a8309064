#include "catnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "catnet/errors.hpp"

namespace catnet {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::size_t to_size(const std::string& v, const std::string& where) {
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (...) {
    throw DataError(where + ": expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& where) {
  try {
    return std::stod(v);
  } catch (...) {
    throw DataError(where + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError(where + ": expected true/false, got '" + v + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw DataError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "model" && section != "training" && section != "data" &&
          section != "decode") {
        throw DataError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw DataError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw DataError(where + ": key outside any section");

    if (section == "model") {
      if (key == "kind") {
        if (value != "captioner" && value != "humorizer") {
          throw DataError(where + ": kind must be captioner or humorizer");
        }
        cfg.model.kind = value;
      } else if (key == "attention") {
        if (value == "global") {
          cfg.model.variant = AttentionVariant::kGlobal;
        } else if (value == "local") {
          cfg.model.variant = AttentionVariant::kLocal;
        } else {
          throw DataError(where + ": attention must be global or local");
        }
      } else if (key == "hidden_dim") {
        cfg.model.hidden_dim = to_size(value, where);
      } else if (key == "embed_dim") {
        cfg.model.embed_dim = to_size(value, where);
      } else if (key == "channels") {
        cfg.model.channels = to_size(value, where);
      } else if (key == "window") {
        cfg.model.window = to_size(value, where);
      } else if (key == "layers") {
        cfg.model.layers = to_size(value, where);
      } else if (key == "heads") {
        cfg.model.heads = to_size(value, where);
      } else if (key == "d_model") {
        cfg.model.d_model = to_size(value, where);
      } else if (key == "d_ff") {
        cfg.model.d_ff = to_size(value, where);
      } else if (key == "dropout") {
        cfg.model.dropout = to_double(value, where);
      } else if (key == "max_caption_len") {
        cfg.model.max_caption_len = to_size(value, where);
      } else if (key == "max_pair_len") {
        cfg.model.max_pair_len = to_size(value, where);
      } else {
        throw DataError(where + ": unknown [model] key '" + key + "'");
      }
    } else if (section == "training") {
      if (key == "seed") {
        cfg.training.seed = static_cast<std::uint64_t>(to_size(value, where));
      } else if (key == "lr") {
        cfg.training.lr = to_double(value, where);
      } else if (key == "batch_size") {
        cfg.training.batch_size = to_size(value, where);
      } else if (key == "epochs") {
        cfg.training.epochs = to_size(value, where);
      } else if (key == "checkpoint_every") {
        cfg.training.checkpoint_every = to_size(value, where);
      } else if (key == "freeze_embeddings") {
        cfg.training.freeze_embeddings = to_bool(value, where);
      } else if (key == "min_count") {
        cfg.training.min_count = to_size(value, where);
      } else {
        throw DataError(where + ": unknown [training] key '" + key + "'");
      }
    } else if (section == "data") {
      if (key == "features") {
        cfg.data.features = value;
      } else if (key == "captions") {
        cfg.data.captions = value;
      } else if (key == "pairs") {
        cfg.data.pairs = value;
      } else if (key == "embeddings") {
        cfg.data.embeddings = value;
      } else if (key == "lexicon") {
        cfg.data.lexicon = value;
      } else if (key == "vocab") {
        cfg.data.vocab = value;
      } else {
        throw DataError(where + ": unknown [data] key '" + key + "'");
      }
    } else {  // decode
      if (key == "beam_width") {
        cfg.decode.beam_width = to_size(value, where);
      } else if (key == "length_norm") {
        cfg.decode.length_norm = to_double(value, where);
      } else if (key == "max_len") {
        cfg.decode.max_len = to_size(value, where);
      } else {
        throw DataError(where + ": unknown [decode] key '" + key + "'");
      }
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void RunConfig::validate() const {
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) {
    throw DataError("config: dropout must be in [0, 1)");
  }
  if (decode.beam_width < 1) throw DataError("config: beam_width must be >= 1");
  if (training.batch_size < 1) throw DataError("config: batch_size must be >= 1");
  if (training.lr <= 0.0) throw DataError("config: lr must be positive");
  if (model.kind == "humorizer") {
    if (model.heads < 1 || model.d_model % model.heads != 0) {
      throw DataError("config: d_model must be divisible by heads");
    }
    if (model.d_model % 2 != 0) throw DataError("config: d_model must be even");
  }
  if (model.kind == "captioner" && model.window < 1) {
    throw DataError("config: window must be >= 1");
  }
  if (training.min_count < 1) throw DataError("config: min_count must be >= 1");
}

}  // namespace catnet
