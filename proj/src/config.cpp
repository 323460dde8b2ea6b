#include "fusestab/config.hpp"

#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "fusestab/errors.hpp"
#include "fusestab/io.hpp"

namespace fusestab {

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

// One key of a schema. `set` gets the raw value text plus its location for diagnostics.
template <typename T>
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const T&)> get;
  std::function<void(T&, const std::string&, const std::string&, int)> set;
};

template <typename T>
class Schema {
 public:
  template <typename Ref>
  void real(const std::string& s, const std::string& k, Ref ref) {
    fields_.push_back({s, k, [ref](const T& c) { return io::fmt(ref(const_cast<T&>(c))); },
                       [ref](T& c, const std::string& v, const std::string& src, int line) {
                         ref(c) = io::parse_double(src, line, v);
                       }});
  }

  template <typename Ref>
  void integer(const std::string& s, const std::string& k, Ref ref) {
    fields_.push_back({s, k, [ref](const T& c) { return std::to_string(ref(const_cast<T&>(c))); },
                       [ref](T& c, const std::string& v, const std::string& src, int line) {
                         using I = std::remove_reference_t<decltype(ref(c))>;
                         const std::int64_t x = io::parse_int(src, line, v);
                         if constexpr (std::is_unsigned_v<I>) {
                           if (x < 0) throw FormatError(src, line, "expected a non-negative integer, got '" + v + "'");
                         }
                         ref(c) = static_cast<I>(x);
                       }});
  }

  template <typename Ref>
  void text(const std::string& s, const std::string& k, Ref ref) {
    fields_.push_back({s, k, [ref](const T& c) { return ref(const_cast<T&>(c)); },
                       [ref](T& c, const std::string& v, const std::string&, int) { ref(c) = v; }});
  }

  template <typename Ref>
  void flag(const std::string& s, const std::string& k, Ref ref) {
    fields_.push_back({s, k, [ref](const T& c) { return std::string(ref(const_cast<T&>(c)) ? "true" : "false"); },
                       [ref](T& c, const std::string& v, const std::string& src, int line) {
                         if (v == "true") {
                           ref(c) = true;
                         } else if (v == "false") {
                           ref(c) = false;
                         } else {
                           throw FormatError(src, line, "expected true or false, got '" + v + "'");
                         }
                       }});
  }

  void custom(const std::string& s, const std::string& k, std::function<std::string(const T&)> get,
              std::function<void(T&, const std::string&, const std::string&, int)> set) {
    fields_.push_back({s, k, std::move(get), std::move(set)});
  }

  T parse(const std::string& source, std::string_view text, T c) const {
    std::set<std::string> sections, seen;
    for (const auto& f : fields_) sections.insert(f.section);
    std::string section;
    int line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
      ++line_no;
      const std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw FormatError(source, line_no, "unterminated section header");
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        if (!sections.count(section)) throw FormatError(source, line_no, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError(source, line_no, "expected 'key = value'");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      const std::string value = trim(std::string_view(line).substr(eq + 1));
      if (section.empty()) throw FormatError(source, line_no, "key '" + key + "' outside any section");
      const Field<T>* field = nullptr;
      for (const auto& f : fields_) {
        if (f.section == section && f.key == key) field = &f;
      }
      if (!field) throw FormatError(source, line_no, "unknown key '" + key + "' in [" + section + "]");
      if (!seen.insert(section + "." + key).second) {
        throw FormatError(source, line_no, "duplicate key '" + key + "' in [" + section + "]");
      }
      try {
        field->set(c, value, source, line_no);
      } catch (const FormatError&) {
        throw;
      } catch (const Error& e) {
        throw FormatError(source, line_no, e.what());
      }
    }
    return c;
  }

  std::string format(const T& c) const {
    std::string out;
    std::string section;
    for (const auto& f : fields_) {
      if (f.section != section) {
        out += (out.empty() ? "[" : "\n[") + f.section + "]\n";
        section = f.section;
      }
      out += f.key + " = " + f.get(c) + "\n";
    }
    return out;
  }

 private:
  std::vector<Field<T>> fields_;
};

std::vector<double> numbers(const std::string& v, const std::string& src, int line) {
  std::vector<double> out;
  std::istringstream in(v);
  for (std::string tok; in >> tok;) out.push_back(io::parse_double(src, line, tok));
  return out;
}

const Schema<RunConfig>& run_schema() {
  static const Schema<RunConfig> s = [] {
    Schema<RunConfig> s;
    s.text("input", "gyro", [](RunConfig& c) -> std::string& { return c.gyro; });
    s.text("input", "ois", [](RunConfig& c) -> std::string& { return c.ois; });
    s.text("input", "frames", [](RunConfig& c) -> std::string& { return c.frames; });
    s.text("input", "flow", [](RunConfig& c) -> std::string& { return c.flow; });
    s.text("input", "images", [](RunConfig& c) -> std::string& { return c.images; });
    s.text("input", "weights", [](RunConfig& c) -> std::string& { return c.weights; });
    s.text("output", "dir", [](RunConfig& c) -> std::string& { return c.output; });
    s.flag("output", "render", [](RunConfig& c) -> bool& { return c.render; });
    s.real("camera", "focal", [](RunConfig& c) -> double& { return c.focal; });
    s.custom(
        "solver", "backend", [](const RunConfig& c) { return backend_name(c.backend); },
        [](RunConfig& c, const std::string& v, const std::string&, int) { c.backend = parse_backend(v); });
    s.integer("solver", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    s.integer("solver", "max_iterations", [](RunConfig& c) -> int& { return c.optimize.max_iterations; });
    s.real("solver", "momentum", [](RunConfig& c) -> double& { return c.optimize.momentum; });
    s.real("solver", "first_step", [](RunConfig& c) -> double& { return c.optimize.first_step; });
    s.real("solver", "stall_tolerance", [](RunConfig& c) -> double& { return c.optimize.stall_tolerance; });
    s.integer("solver", "patience", [](RunConfig& c) -> int& { return c.optimize.patience; });
    s.real("loss", "w_c0", [](RunConfig& c) -> double& { return c.loss.weights.c0; });
    s.real("loss", "w_c1", [](RunConfig& c) -> double& { return c.loss.weights.c1; });
    s.real("loss", "w_p", [](RunConfig& c) -> double& { return c.loss.weights.p; });
    s.real("loss", "w_d", [](RunConfig& c) -> double& { return c.loss.weights.d; });
    s.real("loss", "w_f", [](RunConfig& c) -> double& { return c.loss.weights.f; });
    s.real("loss", "sigma", [](RunConfig& c) -> double& { return c.loss.protrusion.sigma; });
    s.integer("loss", "lookahead", [](RunConfig& c) -> int& { return c.loss.protrusion.N; });
    s.real("loss", "alpha", [](RunConfig& c) -> double& { return c.loss.protrusion.alpha; });
    s.real("loss", "beta", [](RunConfig& c) -> double& { return c.loss.protrusion.beta; });
    s.real("loss", "gamma", [](RunConfig& c) -> double& { return c.loss.protrusion.gamma; });
    s.real("loss", "beta0_rad", [](RunConfig& c) -> double& { return c.loss.distortion.beta0; });
    s.real("loss", "beta1", [](RunConfig& c) -> double& { return c.loss.distortion.beta1; });
    s.integer("loss", "flow_grid", [](RunConfig& c) -> int& { return c.loss.flow.grid; });
    s.integer("loss", "history_N", [](RunConfig& c) -> int& { return c.loss.history.N; });
    s.real("loss", "history_step_ns", [](RunConfig& c) -> double& { return c.loss.history.step_ns; });
    s.integer("mesh", "cols", [](RunConfig& c) -> int& { return c.mesh_cols; });
    s.integer("mesh", "rows", [](RunConfig& c) -> int& { return c.mesh_rows; });
    s.integer("net", "flow_grid", [](RunConfig& c) -> int& { return c.net.flow_grid; });
    s.custom(
        "net", "widths",
        [](const RunConfig& c) {
          const auto& w = c.net.widths;
          return std::to_string(w[0]) + " " + std::to_string(w[1]) + " " + std::to_string(w[2]) + " " +
                 std::to_string(w[3]);
        },
        [](RunConfig& c, const std::string& v, const std::string& src, int line) {
          std::istringstream in(v);
          std::vector<std::string> tok;
          for (std::string t; in >> t;) tok.push_back(t);
          if (tok.size() != 4) throw FormatError(src, line, "widths needs 4 integers");
          for (std::size_t i = 0; i < 4; ++i) c.net.widths[i] = static_cast<int>(io::parse_int(src, line, tok[i]));
        });
    s.integer("net", "hidden", [](RunConfig& c) -> int& { return c.net.hidden; });
    s.integer("net", "fc", [](RunConfig& c) -> int& { return c.net.fc; });
    s.integer("train", "stage1", [](RunConfig& c) -> int& { return c.train.stage_iterations[0]; });
    s.integer("train", "stage2", [](RunConfig& c) -> int& { return c.train.stage_iterations[1]; });
    s.integer("train", "stage3", [](RunConfig& c) -> int& { return c.train.stage_iterations[2]; });
    s.integer("train", "window", [](RunConfig& c) -> int& { return c.train.window; });
    s.real("train", "augment_deg", [](RunConfig& c) -> double& { return c.train.augment_deg; });
    s.real("train", "learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
    s.real("train", "momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
    s.real("train", "clip_norm", [](RunConfig& c) -> double& { return c.train.clip_norm; });
    s.integer("train", "eval_windows", [](RunConfig& c) -> int& { return c.train.eval_windows; });
    s.integer("train", "captures", [](RunConfig& c) -> int& { return c.train_captures; });
    s.integer("train", "frames", [](RunConfig& c) -> int& { return c.train_frames; });
    return s;
  }();
  return s;
}

const Schema<SimConfig>& sim_schema() {
  static const Schema<SimConfig> s = [] {
    Schema<SimConfig> s;
    s.integer("camera", "width", [](SimConfig& c) -> int& { return c.spec.width; });
    s.integer("camera", "height", [](SimConfig& c) -> int& { return c.spec.height; });
    s.real("camera", "focal", [](SimConfig& c) -> double& { return c.focal; });
    s.real("camera", "fps", [](SimConfig& c) -> double& { return c.spec.fps; });
    s.integer("camera", "frames", [](SimConfig& c) -> int& { return c.spec.frames; });
    s.real("camera", "readout_ms", [](SimConfig& c) -> double& { return c.spec.readout_ms; });
    s.real("camera", "padding_s", [](SimConfig& c) -> double& { return c.spec.padding_s; });
    s.custom(
        "motion", "base",
        [](const SimConfig& c) {
          switch (c.spec.base) {
            case BasePath::Panning: return std::string("panning");
            case BasePath::Keyframes: return std::string("keyframes");
            default: return std::string("constant");
          }
        },
        [](SimConfig& c, const std::string& v, const std::string& src, int line) {
          if (v == "constant") {
            c.spec.base = BasePath::Constant;
          } else if (v == "panning") {
            c.spec.base = BasePath::Panning;
          } else if (v == "keyframes") {
            c.spec.base = BasePath::Keyframes;
          } else {
            throw FormatError(src, line, "base must be constant, panning or keyframes, got '" + v + "'");
          }
        });
    s.real("motion", "pan_rate_deg", [](SimConfig& c) -> double& { return c.spec.pan_rate_deg; });
    s.custom(
        "motion", "pan_axis",
        [](const SimConfig& c) {
          const auto& a = c.spec.pan_axis;
          return io::fmt(a.x()) + " " + io::fmt(a.y()) + " " + io::fmt(a.z());
        },
        [](SimConfig& c, const std::string& v, const std::string& src, int line) {
          const auto x = numbers(v, src, line);
          if (x.size() != 3) throw FormatError(src, line, "pan_axis needs 3 numbers");
          c.spec.pan_axis = Eigen::Vector3d(x[0], x[1], x[2]);
        });
    // `t rx ry rz` entries separated by commas; t in seconds, rotation vector in radians.
    s.custom(
        "motion", "keyframes",
        [](const SimConfig& c) {
          std::string out;
          for (const auto& k : c.spec.keyframes) {
            if (!out.empty()) out += ", ";
            out += io::fmt(k.t) + " " + io::fmt(k.rotation.x()) + " " + io::fmt(k.rotation.y()) + " " +
                   io::fmt(k.rotation.z());
          }
          return out;
        },
        [](SimConfig& c, const std::string& v, const std::string& src, int line) {
          c.spec.keyframes.clear();
          std::istringstream in(v);
          for (std::string entry; std::getline(in, entry, ',');) {
            const auto x = numbers(entry, src, line);
            if (x.empty()) continue;
            if (x.size() != 4) throw FormatError(src, line, "each keyframe needs 't rx ry rz'");
            c.spec.keyframes.push_back({x[0], Eigen::Vector3d(x[1], x[2], x[3])});
          }
        });
    s.integer("motion", "seed", [](SimConfig& c) -> std::uint64_t& { return c.spec.seed; });
    s.real("shake", "amplitude_deg", [](SimConfig& c) -> double& { return c.spec.shake.amplitude; });
    s.real("shake", "low_hz", [](SimConfig& c) -> double& { return c.spec.shake.low_hz; });
    s.real("shake", "high_hz", [](SimConfig& c) -> double& { return c.spec.shake.high_hz; });
    s.integer("shake", "components", [](SimConfig& c) -> int& { return c.spec.shake.components; });
    s.real("ois", "amplitude_px", [](SimConfig& c) -> double& { return c.spec.ois.amplitude; });
    s.real("ois", "low_hz", [](SimConfig& c) -> double& { return c.spec.ois.low_hz; });
    s.real("ois", "high_hz", [](SimConfig& c) -> double& { return c.spec.ois.high_hz; });
    s.integer("ois", "components", [](SimConfig& c) -> int& { return c.spec.ois.components; });
    s.real("output", "flow_spacing", [](SimConfig& c) -> double& { return c.flow_spacing; });
    s.flag("output", "render", [](SimConfig& c) -> bool& { return c.render; });
    s.integer("output", "channels", [](SimConfig& c) -> int& { return c.channels; });
    return s;
  }();
  return s;
}

template <typename T>
T validated(T c, const std::string& source) {
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(source, 0, e.what());
  }
  return c;
}

}  // namespace

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::Infer: return "infer";
    case Backend::Locked: return "locked";
    default: return "optimize";
  }
}

Backend parse_backend(const std::string& s) {
  if (s == "optimize") return Backend::Optimize;
  if (s == "infer") return Backend::Infer;
  if (s == "locked") return Backend::Locked;
  throw InvalidArgument("backend must be optimize, infer or locked, got '" + s + "'");
}

std::filesystem::path RunConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void RunConfig::validate() const {
  const LossWeights& w = loss.weights;
  for (double x : {w.c0, w.c1, w.p, w.d, w.f}) {
    if (!(x >= 0.0)) throw InvalidArgument("loss weights must be >= 0");
  }
  loss.protrusion.validate();
  loss.distortion.validate();
  if (loss.flow.grid < 1) throw InvalidArgument("loss flow_grid must be >= 1");
  if (loss.history.N < 0 || !(loss.history.step_ns > 0.0)) throw InvalidArgument("history needs N >= 0 and step > 0");
  if (!(focal > 0.0)) throw InvalidArgument("focal length must be > 0");
  if (mesh_cols < 1 || mesh_rows < 1) throw InvalidArgument("mesh needs >= 1 cell per axis");
  if (optimize.max_iterations < 0 || optimize.patience < 1) {
    throw InvalidArgument("solver needs max_iterations >= 0 and patience >= 1");
  }
  net.validate();
  train.validate();
  if (train_captures < 1 || train_frames < train.window) {
    throw InvalidArgument("train needs >= 1 capture of at least `window` frames");
  }
  if (output.empty()) throw InvalidArgument("output dir must not be empty");
}

RunConfig parse_run_config(const std::string& source, std::string_view text) {
  RunConfig c = run_schema().parse(source, text, RunConfig{});
  c.net.history_N = c.loss.history.N;
  c.train.seed = c.seed;
  return validated(c, source);
}

RunConfig read_run_config(const std::string& path) {
  RunConfig c = parse_run_config(path, io::read_file(path));
  c.base_dir = std::filesystem::path(path).parent_path();
  return c;
}

std::string format_run_config(const RunConfig& c) { return run_schema().format(c); }

void SimConfig::validate() const {
  spec.validate();
  if (!(focal > 0.0)) throw InvalidArgument("focal length must be > 0");
  if (channels != 1 && channels != 3) throw InvalidArgument("channels must be 1 or 3");
}

SimConfig parse_sim_config(const std::string& source, std::string_view text) {
  return validated(sim_schema().parse(source, text, SimConfig{}), source);
}

SimConfig read_sim_config(const std::string& path) { return parse_sim_config(path, io::read_file(path)); }

std::string format_sim_config(const SimConfig& c) { return sim_schema().format(c); }

}  // namespace fusestab
