// Command-line front end: inference, quantization, complexity reports and the two coding pipelines.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qnn/qnn.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit { ok = 0, usage = 2, format = 3, numeric = 4 };

int exit_code(qnn::ErrorKind k) {
  using qnn::ErrorKind;
  switch (k) {
    case ErrorKind::BadMagic:
    case ErrorKind::BadVersion:
    case ErrorKind::Truncated:
    case ErrorKind::InvalidNode:
    case ErrorKind::InvalidGraph:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::UnsupportedStride: return format;
    case ErrorKind::NumericOverflow:
    case ErrorKind::QuantizerOrder:
    case ErrorKind::SlopeOutOfRange:
    case ErrorKind::Unquantizable: return numeric;
    default: return usage;
  }
}

struct Output {
  bool as_json = false;
  json record = json::object();
  std::ostringstream text;

  void finish() const {
    if (as_json)
      std::cout << record.dump() << "\n";
    else
      std::cout << text.str();
  }
};

std::string dims_text(const qnn::Dims& d) { return qnn::to_string(d); }

qnn::Dims parse_dims(const std::string& s) {
  qnn::Dims d;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, 'x')) {
    try {
      d.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      qnn::fail(qnn::ErrorKind::InvalidArgument, "bad dims '" + s + "' (expected e.g. 1x144x144x1)");
    }
  }
  return d;
}

std::pair<int, int> parse_pair(const std::string& s, char sep, const std::string& what) {
  const auto p = s.find(sep);
  try {
    if (p != std::string::npos) {
      std::size_t a = 0, b = 0;
      const int x = std::stoi(s.substr(0, p), &a), y = std::stoi(s.substr(p + 1), &b);
      if (a == p && b == s.size() - p - 1) return {x, y};
    }
  } catch (const std::exception&) {
  }
  qnn::fail(qnn::ErrorKind::InvalidArgument, "bad " + what + " '" + s + "'");
}

qnn::ElementWidth width_from_bits(int bits) {
  switch (bits) {
    case 8: return qnn::ElementWidth::i8;
    case 16: return qnn::ElementWidth::i16;
    case 32: return qnn::ElementWidth::i32;
  }
  qnn::fail(qnn::ErrorKind::InvalidArgument, "--width must be 8, 16 or 32");
}

/// Converts a tensor read from disk to the element type a graph input expects.
qnn::AnyTensor adapt_input(const qnn::AnyTensor& t, qnn::ElementWidth want, int q) {
  using namespace qnn;
  const ElementWidth have = width_of_any(t);
  if (have == want) return t;
  auto as_float = [&]() -> Tensor<float> {
    return std::visit(
        [](const auto& x) -> Tensor<float> {
          using T = typename std::decay_t<decltype(x)>::value_type;
          if constexpr (std::is_same_v<T, float>)
            return x;
          else
            return dequantize(x);
        },
        t);
  };
  if (want == ElementWidth::f32) return as_float();
  check(have == ElementWidth::f32, ErrorKind::ShapeMismatch,
        std::string("input is ") + to_string(have) + " but the graph expects " + to_string(want));
  switch (want) {
    case ElementWidth::i8: return quantize<std::int8_t>(as_float(), q);
    case ElementWidth::i16: return quantize<std::int16_t>(as_float(), q);
    case ElementWidth::i32: return quantize<std::int32_t>(as_float(), q);
    default: break;
  }
  fail(ErrorKind::InvalidArgument, "unsupported input width");
}

std::vector<std::string> sorted_stn1(const std::string& dir) {
  qnn::check(fs::is_directory(dir), qnn::ErrorKind::Io, "not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".stn1") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::vector<std::string> inputs;
  std::string out = "out";
  bool as_float = false;
};

void cmd_infer(const InferArgs& a, Output& o) {
  using namespace qnn;
  Graph g = load_model(a.model);
  if (a.as_float && g.width() != ElementWidth::f32) g = to_float_graph(g);
  check(a.inputs.size() == g.inputs().size(), ErrorKind::InvalidArgument,
        "graph takes " + std::to_string(g.inputs().size()) + " inputs, got " + std::to_string(a.inputs.size()));
  std::vector<AnyTensor> in;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) in.push_back(adapt_input(load_stn1(a.inputs[i]), g.width(), g.inputs()[i].q));
  const auto outs = infer_any(g, in);
  o.record["outputs"] = json::array();
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const std::string path = outs.size() == 1 ? a.out + ".stn1" : a.out + "_" + std::to_string(k) + ".stn1";
    std::visit([&](const auto& t) { save_stn1(path, t); }, outs[k]);
    o.record["outputs"].push_back({{"path", path},
                                   {"dims", dims_of_any(outs[k])},
                                   {"q", quantizer_of_any(outs[k])},
                                   {"width", to_string(width_of_any(outs[k]))}});
    o.text << "output " << k << ": " << path << " " << dims_text(dims_of_any(outs[k])) << " q=" << quantizer_of_any(outs[k]) << "\n";
  }
}

struct QuantizeArgs {
  std::string model;
  std::string calib;
  std::string out;
  int width = 16;
  bool auto_q = false;
  std::optional<int> input_q;
};

void cmd_quantize(const QuantizeArgs& a, Output& o) {
  using namespace qnn;
  const Graph g = load_model(a.model);
  const auto files = sorted_stn1(a.calib);
  const std::size_t n = g.inputs().size();
  check(!files.empty(), ErrorKind::CalibrationEmpty, "no .stn1 files in " + a.calib);
  check(files.size() % n == 0, ErrorKind::InvalidArgument,
        std::to_string(files.size()) + " calibration files do not split into groups of " + std::to_string(n) + " inputs");
  CalibrationSet calib;
  for (std::size_t i = 0; i < files.size(); i += n) {
    std::vector<Tensor<float>> sample;
    for (std::size_t k = 0; k < n; ++k) sample.push_back(std::get<Tensor<float>>(adapt_input(load_stn1(files[i + k]), ElementWidth::f32, 0)));
    calib.push_back(std::move(sample));
  }
  QuantizeOptions opt;
  opt.auto_input_q = a.auto_q;
  opt.input_q = a.input_q;
  const Graph q = static_quantize(g, calib, width_from_bits(a.width), opt);
  const std::string out = a.out.empty() ? fs::path(a.model).replace_extension("").string() + "_int" + std::to_string(a.width) + ".smf1" : a.out;
  save_model(out, q);
  o.record["model"] = out;
  o.record["samples"] = calib.size();
  o.record["input_q"] = json::array();
  for (const auto& in : q.inputs()) o.record["input_q"].push_back(in.q);
  o.text << "wrote " << out << " (" << calib.size() << " calibration samples, input q";
  for (const auto& in : q.inputs()) o.text << " " << in.q;
  o.text << ")\n";
}

struct InfoArgs {
  std::string model;
  std::optional<std::uint64_t> pixels;
  std::vector<std::string> input_dims;
};

void cmd_info(const InfoArgs& a, Output& o) {
  using namespace qnn;
  const Graph g = load_model(a.model);
  std::vector<Dims> dims;
  for (const auto& s : a.input_dims) dims.push_back(parse_dims(s));
  check(dims.empty() || dims.size() == g.inputs().size(), ErrorKind::InvalidArgument, "give --input-dims once per graph input");
  const auto r = count_macs(g, dims.empty() ? nullptr : &dims);
  o.record["width"] = to_string(g.width());
  o.record["nodes"] = json::array();
  o.text << std::left << std::setw(6) << "id" << std::setw(18) << "op" << std::setw(22) << "output" << std::setw(14) << "macs"
         << "other\n";
  for (const auto& n : r.nodes) {
    o.record["nodes"].push_back({{"id", n.id}, {"op", to_string(n.kind)}, {"dims", n.out_dims}, {"macs", n.ops.macs}, {"other_ops", n.ops.other_ops}});
    o.text << std::setw(6) << n.id << std::setw(18) << to_string(n.kind) << std::setw(22) << dims_text(n.out_dims) << std::setw(14)
           << n.ops.macs << n.ops.other_ops << "\n";
  }
  o.record["total_macs"] = r.total.macs;
  o.record["total_other_ops"] = r.total.other_ops;
  o.text << "total macs " << r.total.macs << ", other ops " << r.total.other_ops << "\n";
  std::optional<std::uint64_t> pixels = a.pixels;
  if (!pixels) {
    if (auto s = g.meta("intra.shape")) {
      const auto [h, w] = parse_pair(*s, 'x', "intra.shape metadata");
      pixels = static_cast<std::uint64_t>(h * w);
    }
  }
  if (pixels) {
    const double k = kmac_per_pixel(r.total.macs, *pixels);
    o.record["pixels"] = *pixels;
    o.record["kmac_per_pixel"] = k;
    std::ostringstream one;
    one << std::fixed << std::setprecision(1) << k;
    o.text << "kMAC/pixel " << one.str() << " (" << std::setprecision(4) << std::fixed << k << " over " << *pixels << " pixels)\n";
  }
}

struct IntraArgs {
  std::string frame;
  std::string pos;
  std::string size;
  std::string models;
  std::string out = "block.stn1";
  std::optional<int> bit_depth;
};

void cmd_intra(const IntraArgs& a, Output& o) {
  using namespace qnn;
  int stored = 0;
  Plane frame = load_frame(a.frame, &stored);
  const int b = a.bit_depth.value_or(stored > 0 ? std::max(stored, 8) : 10);
  if (stored > 0 && stored != b) frame = rescale_bit_depth(frame, stored, b);
  const auto [x, y] = parse_pair(a.pos, ',', "--pos");
  const auto [h, w] = parse_pair(a.size, 'x', "--size");
  const auto models = intra::IntraModelSet::load_dir(a.models);
  intra::PredictOptions opt;
  opt.bit_depth = b;
  const auto result = intra::predict_block(frame, x, y, h, w, models, opt);
  if (const auto* fb = std::get_if<intra::PlanarFallback>(&result)) {
    o.record = {{"fallback", 1}, {"reason", fb->reason}};
    o.text << "fallback=1 reason=\"" << fb->reason << "\"\n";
    return;
  }
  const auto& p = std::get<intra::PredictionOutputs>(result);
  save_stn1(a.out, Tensor<std::int32_t>({p.prediction.h, p.prediction.w}, p.prediction.samples, 0));
  o.record = {{"fallback", 0}, {"repIdx", p.rep_idx}, {"grpIdx1", p.grp_idx1}, {"grpIdx2", p.grp_idx2},
              {"network", std::to_string(p.rule.network.h) + "x" + std::to_string(p.rule.network.w)},
              {"transpose", p.rule.transpose}, {"block", a.out}};
  o.text << "repIdx=" << p.rep_idx << " grpIdx1=" << p.grp_idx1 << " grpIdx2=" << p.grp_idx2 << " fallback=0 network="
         << p.rule.network.h << "x" << p.rule.network.w << " transpose=" << p.rule.transpose << " block=" << a.out << "\n";
}

struct FilterArgs {
  std::string orig, rec, db, pred, bs, ipb, col0, col1, model;
  std::string out = "filtered.stn1";
  int qp = 32;
  int tid = 0;
  int bit_depth = 10;
  int patch = 128;
  std::optional<double> lambda;
  std::string bitrate;
  std::optional<int> block_size;
  bool all_intra = false;
};

void cmd_filter(const FilterArgs& a, Output& o) {
  using namespace qnn;
  const Graph g = load_model(a.model);
  filter::FilterInputs in{load_plane_stn1(a.rec), load_plane_stn1(a.pred), load_plane_stn1(a.bs), {}, {}, {}, a.bit_depth};
  if (!a.ipb.empty()) in.ipb = load_plane_stn1(a.ipb);
  if (!a.col0.empty()) in.col0 = load_plane_stn1(a.col0);
  if (!a.col1.empty()) in.col1 = load_plane_stn1(a.col1);
  filter::HarnessOptions opt;
  opt.qp = a.qp;
  opt.tid = a.tid;
  opt.lambda = a.lambda;
  if (a.bitrate == "low") opt.bitrate = filter::BitrateClass::Low;
  if (a.bitrate == "high") opt.bitrate = filter::BitrateClass::High;
  opt.block_size = a.block_size;
  opt.all_intra = a.all_intra;
  opt.config.patch = a.patch;
  opt.config.threads = filter::threads_from_env();
  const auto r = filter::run_filter(load_plane_stn1(a.orig), load_plane_stn1(a.db), in, g, opt);
  save_plane_stn1(a.out, r.output);
  const auto& d = r.decision;
  o.record["mode"] = filter::to_string(d.mode);
  o.record["param"] = d.param;
  o.record["candidates"] = d.candidates;
  o.record["block_size"] = d.block_size;
  o.record["block_params"] = d.block_params;
  o.record["omega_k"] = json::array();
  for (const auto& s : d.scales) o.record["omega_k"].push_back(s.k);
  o.record["costs"] = json::array();
  for (int i = 0; i < filter::cost_count; ++i)
    o.record["costs"].push_back({{"cost", std::isfinite(d.costs[i]) ? json(d.costs[i]) : json(nullptr)}, {"sse", d.sse[i]}, {"bits", d.bits[i]}});
  o.record["temporal"] = r.temporal == filter::TemporalMode::Temporal;
  o.record["output"] = a.out;
  o.text << "mode=" << filter::to_string(d.mode) << " param=" << d.param << " candidates=" << d.candidates[0] << ","
         << d.candidates[1] << "," << d.candidates[2] << " block_size=" << d.block_size << " omega_k=" << d.scales[0].k << ","
         << d.scales[1].k << "," << d.scales[2].k << " temporal=" << (r.temporal == filter::TemporalMode::Temporal) << "\n";
  for (int i = 0; i < filter::cost_count; ++i)
    o.text << "cost" << i << " " << d.costs[i] << " sse=" << d.sse[i] << " bits=" << d.bits[i] << "\n";
  if (d.mode == filter::DecisionMode::PerBlock) {
    o.text << "blocks";
    for (int p : d.block_params) o.text << " " << p;
    o.text << "\n";
  }
  o.text << "wrote " << a.out << "\n";
}

int cmd_convert_check(const std::string& model, Output& o) {
  using namespace qnn;
  const Graph g = load_model(model);
  const auto an = analyze(g);
  o.record["model"] = model;
  o.record["width"] = to_string(g.width());
  o.record["nodes"] = g.nodes().size();
  o.record["violations"] = json::array();
  for (const auto& v : an.violations) {
    o.record["violations"].push_back({{"node", v.node}, {"message", v.message}});
    o.text << "node " << v.node << ": " << v.message << "\n";
  }
  o.record["ok"] = an.ok();
  if (an.ok()) {
    const auto bytes = save_model_bytes(g);
    const bool canonical = save_model_bytes(load_model_bytes(bytes)) == bytes;
    o.record["canonical"] = canonical;
    o.text << "ok: " << g.nodes().size() << " nodes, width " << to_string(g.width()) << ", re-encoding "
           << (canonical ? "byte-identical" : "differs") << "\n";
    return canonical ? ok : format;
  }
  return format;
}

struct ReferenceArgs {
  std::string out_dir = "reference";
  bool as_float = false;
};

void cmd_make_reference(const ReferenceArgs& a, Output& o) {
  using namespace qnn;
  fs::create_directories(a.out_dir);
  o.record["files"] = json::array();
  auto save = [&](const std::string& name, const Graph& g) {
    const std::string path = (fs::path(a.out_dir) / name).string();
    save_model(path, g);
    o.record["files"].push_back(path);
    o.text << "wrote " << path << "\n";
  };
  for (const auto s : intra::network_shapes)
    save(intra::IntraModelSet::model_file_name(s), a.as_float ? reference::intra_float_model(s) : reference::intra_int16_model(s));
  save("filter_luma.smf1", a.as_float ? reference::filter_float_model(5) : reference::filter_int16_model(5));
  save("filter_chroma.smf1", a.as_float ? reference::filter_float_model(4) : reference::filter_int16_model(4));
  save("filter_temporal.smf1", a.as_float ? reference::filter_float_model(7) : reference::filter_int16_model(7));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-point neural network engine with NN intra prediction and NN loop filtering"};
  app.require_subcommand(1);
  Output o;
  app.add_flag("--json", o.as_json, "Structured output and diagnostics");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Run a model on STN1 inputs");
  infer->add_option("--model", ia.model, "SMF1 model")->required();
  infer->add_option("--input", ia.inputs, "STN1 input, once per graph input in order")->required();
  infer->add_option("--out", ia.out, "Output path prefix");
  infer->add_flag("--float", ia.as_float, "Run the float version of the model");

  QuantizeArgs qa;
  auto* quant = app.add_subcommand("quantize", "Integerize a float model from calibration data");
  quant->add_option("--model", qa.model, "Float SMF1 model")->required();
  quant->add_option("--calib", qa.calib, "Directory of .stn1 samples, grouped by graph input in name order")->required();
  quant->add_option("--width", qa.width, "Target width: 8, 16 or 32");
  quant->add_option("--out", qa.out, "Output SMF1 path");
  quant->add_flag("--auto-q", qa.auto_q, "Pick input quantizers from calibration ranges");
  quant->add_option("--input-q", qa.input_q, "Fixed input quantizer");

  InfoArgs fa;
  auto* info = app.add_subcommand("info", "MAC table and kMAC/pixel");
  info->add_option("--model", fa.model, "SMF1 model")->required();
  info->add_option("--pixels", fa.pixels, "Pixels produced per inference");
  info->add_option("--input-dims", fa.input_dims, "Input dims like 1x144x144x1, once per input");

  IntraArgs ta;
  auto* intra_cmd = app.add_subcommand("intra-predict", "NN intra prediction of one block");
  intra_cmd->add_option("--frame", ta.frame, "Frame (.pgm, .y4m or .stn1)")->required();
  intra_cmd->add_option("--pos", ta.pos, "Block position x,y")->required();
  intra_cmd->add_option("--size", ta.size, "Block size hxw")->required();
  intra_cmd->add_option("--models", ta.models, "Directory with intra_<h>x<w>.smf1 models")->required();
  intra_cmd->add_option("--out", ta.out, "Predicted block (STN1)");
  intra_cmd->add_option("--bit-depth", ta.bit_depth, "Internal bit depth (default: frame precision, 10 for STN1)");

  FilterArgs la;
  auto* filt = app.add_subcommand("filter-run", "NN loop filter with parameter selection and residual scaling");
  filt->add_option("--orig", la.orig, "Original plane (STN1)")->required();
  filt->add_option("--rec", la.rec, "Reconstruction before the loop filters (STN1)")->required();
  filt->add_option("--db", la.db, "Deblocked plane (STN1)")->required();
  filt->add_option("--pred", la.pred, "Prediction plane (STN1)")->required();
  filt->add_option("--bs", la.bs, "Boundary strength plane (STN1)")->required();
  filt->add_option("--ipb", la.ipb, "Prediction type plane (STN1), luma models only");
  filt->add_option("--col0", la.col0, "Collocated plane from list 0 (STN1)");
  filt->add_option("--col1", la.col1, "Collocated plane from list 1 (STN1)");
  filt->add_option("--model", la.model, "Filter SMF1 model")->required();
  filt->add_option("--qp", la.qp, "Sequence QP");
  filt->add_option("--tid", la.tid, "Temporal layer id");
  filt->add_option("--out", la.out, "Filtered plane (STN1)");
  filt->add_option("--bit-depth", la.bit_depth, "Sample bit depth");
  filt->add_option("--patch", la.patch, "Core patch size")->check(CLI::IsMember({64, 128, 256}));
  filt->add_option("--lambda", la.lambda, "Rate-distortion multiplier");
  filt->add_option("--bitrate", la.bitrate, "Bitrate class for the granularity table")->check(CLI::IsMember({"low", "high"}));
  filt->add_option("--block-size", la.block_size, "Override the on/off and parameter block size");
  filt->add_flag("--all-intra", la.all_intra, "Disable parameter selection, keep on/off control");

  std::string check_model;
  auto* conv = app.add_subcommand("convert-check", "Validate a model and its canonical encoding");
  conv->add_option("--model", check_model, "SMF1 model")->required();

  ReferenceArgs ra;
  auto* ref = app.add_subcommand("make-reference", "Write the reference intra and filter models");
  ref->add_option("--out-dir", ra.out_dir, "Destination directory");
  ref->add_flag("--float", ra.as_float, "Write float models instead of int16");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (o.as_json)
      std::cout << json{{"error", {{"kind", "Usage"}, {"message", e.what()}}}}.dump() << "\n";
    else
      std::cerr << "error: Usage: " << e.what() << "\n";
    return usage;
  }

  int code = ok;
  try {
    if (*infer) cmd_infer(ia, o);
    if (*quant) cmd_quantize(qa, o);
    if (*info) cmd_info(fa, o);
    if (*intra_cmd) cmd_intra(ta, o);
    if (*filt) cmd_filter(la, o);
    if (*conv) code = cmd_convert_check(check_model, o);
    if (*ref) cmd_make_reference(ra, o);
  } catch (const qnn::Error& e) {
    if (o.as_json)
      std::cout << json{{"error", {{"kind", std::string(qnn::to_string(e.kind()))}, {"message", e.detail()}}}}.dump() << "\n";
    else
      std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    if (o.as_json)
      std::cout << json{{"error", {{"kind", "Io"}, {"message", e.what()}}}}.dump() << "\n";
    else
      std::cerr << "error: Io: " << e.what() << "\n";
    return usage;
  }
  o.finish();
  return code;
}
