// SPDX-License-Identifier: Apache-2.0

#include "vta/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vta/tensor.hpp"

namespace vta {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("config: bad boolean for '" + key + "': " + v);
}

}  // namespace

void Config::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
  if (frames < 1) fail("frames must be >= 1");
  if (image_size < 1 || patch < 1) fail("image_size and patch must be >= 1");
  if (image_size % patch != 0) fail("image_size must be divisible by patch");
  if (d_model < 1 || d_txt < 1 || d_shared < 1 || d_attn < 1) fail("dims must be >= 1");
  if (vocab_size < 16) fail("vocab_size must be >= 16 (caption token ids)");
  if (text_len < 5) fail("text_len must be >= 5 (BOS + 3 attributes + EOS)");
  if (codebook_size < 2) fail("codebook_size must be >= 2");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) fail("ema_decay must be in (0,1)");
  if (ema_eps <= 0.0) fail("ema_eps must be > 0");
  if (commitment_weight < 0.0) fail("commitment_weight must be >= 0");
  if (regions < 1) fail("regions must be >= 1");
  if (interaction_depth < 1) fail("interaction_depth must be >= 1");
  if (tau <= 0.0) fail("tau must be > 0");
  if (lr < 0.0) fail("lr must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (strict_negatives && batch_size > 64)
    fail("strict_negatives requires batch_size <= 64 (one sample per concept)");
}

Config Config::parse(const std::string& text) {
  Config c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> set;
  auto u64 = [](std::size_t* p) {
    return [p](const std::string& k, const std::string& v) {
      try {
        *p = std::stoull(v);
      } catch (...) {
        throw ValidationError("config: bad integer for '" + k + "': " + v);
      }
    };
  };
  auto f64 = [](double* p) {
    return [p](const std::string& k, const std::string& v) {
      try {
        *p = std::stod(v);
      } catch (...) {
        throw ValidationError("config: bad number for '" + k + "': " + v);
      }
    };
  };
  auto b = [](bool* p) {
    return [p](const std::string& k, const std::string& v) { *p = parse_bool(v, k); };
  };
  set["seed"] = [&c](const std::string& k, const std::string& v) {
    try {
      c.seed = std::stoull(v);
    } catch (...) {
      throw ValidationError("config: bad integer for '" + k + "': " + v);
    }
  };
  set["frames"] = u64(&c.frames);
  set["image_size"] = u64(&c.image_size);
  set["patch"] = u64(&c.patch);
  set["d_model"] = u64(&c.d_model);
  set["d_txt"] = u64(&c.d_txt);
  set["d_shared"] = u64(&c.d_shared);
  set["d_attn"] = u64(&c.d_attn);
  set["vocab_size"] = u64(&c.vocab_size);
  set["text_len"] = u64(&c.text_len);
  set["n_video_blocks"] = u64(&c.n_video_blocks);
  set["n_text_blocks"] = u64(&c.n_text_blocks);
  set["codebook_size"] = u64(&c.codebook_size);
  set["ema_decay"] = f64(&c.ema_decay);
  set["ema_eps"] = f64(&c.ema_eps);
  set["reseed_patience"] = u64(&c.reseed_patience);
  set["commitment_weight"] = f64(&c.commitment_weight);
  set["regions"] = u64(&c.regions);
  set["interaction_depth"] = u64(&c.interaction_depth);
  set["tau"] = f64(&c.tau);
  set["learnable_tau"] = b(&c.learnable_tau);
  set["lr"] = f64(&c.lr);
  set["batch_size"] = u64(&c.batch_size);
  set["steps"] = u64(&c.steps);
  set["strict_negatives"] = b(&c.strict_negatives);
  set["log_every"] = u64(&c.log_every);
  set["disable_quantization"] = b(&c.disable_quantization);
  set["disable_aggregation"] = b(&c.disable_aggregation);
  set["disable_interaction"] = b(&c.disable_interaction);

  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config: line " + std::to_string(lineno) +
                            " is not 'key = value': " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = set.find(key);
    if (it == set.end()) {
      throw ValidationError("config: unknown key '" + key + "' on line " +
                            std::to_string(lineno));
    }
    it->second(key, value);
  }
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Config::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << "\n";
  os << "frames = " << frames << "\n";
  os << "image_size = " << image_size << "\n";
  os << "patch = " << patch << "\n";
  os << "d_model = " << d_model << "\n";
  os << "d_txt = " << d_txt << "\n";
  os << "d_shared = " << d_shared << "\n";
  os << "d_attn = " << d_attn << "\n";
  os << "vocab_size = " << vocab_size << "\n";
  os << "text_len = " << text_len << "\n";
  os << "n_video_blocks = " << n_video_blocks << "\n";
  os << "n_text_blocks = " << n_text_blocks << "\n";
  os << "codebook_size = " << codebook_size << "\n";
  os << "ema_decay = " << ema_decay << "\n";
  os << "ema_eps = " << ema_eps << "\n";
  os << "reseed_patience = " << reseed_patience << "\n";
  os << "commitment_weight = " << commitment_weight << "\n";
  os << "regions = " << regions << "\n";
  os << "interaction_depth = " << interaction_depth << "\n";
  os << "tau = " << tau << "\n";
  os << "learnable_tau = " << (learnable_tau ? "true" : "false") << "\n";
  os << "lr = " << lr << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "steps = " << steps << "\n";
  os << "strict_negatives = " << (strict_negatives ? "true" : "false") << "\n";
  os << "log_every = " << log_every << "\n";
  os << "disable_quantization = " << (disable_quantization ? "true" : "false") << "\n";
  os << "disable_aggregation = " << (disable_aggregation ? "true" : "false") << "\n";
  os << "disable_interaction = " << (disable_interaction ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace vta
