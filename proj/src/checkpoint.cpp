#include "attnstitch/checkpoint.hpp"

#include <json.hpp>
#include <sstream>

#include "attnstitch/byteio.hpp"
#include "attnstitch/error.hpp"

namespace astitch::ckpt {

using json = nlohmann::json;
using stitch::StitchModel;
using tc::Tensor;

namespace {

json config_json(const stitch::StitchConfig& c) {
  return {{"n_mels", c.n_mels},
          {"c_m", c.c_m},
          {"c_n", c.c_n},
          {"postnet_channels", c.postnet_channels},
          {"postnet_kernel", c.postnet_kernel}};
}

stitch::StitchConfig config_from(const json& j) {
  stitch::StitchConfig c;
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.c_m = j.at("c_m").get<std::size_t>();
  c.c_n = j.at("c_n").get<std::size_t>();
  c.postnet_channels = j.at("postnet_channels").get<std::size_t>();
  c.postnet_kernel = j.at("postnet_kernel").get<std::size_t>();
  return c;
}

}  // namespace

std::string encode_checkpoint(const StitchModel& model) {
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  json tensors = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", params[i]->shape()}});
  }
  json header;
  header["config"] = config_json(model.config);
  header["mel_fingerprint"] = model.mel_fingerprint;
  header["steps"] = model.meta.steps;
  header["seed"] = model.meta.seed;
  header["loss_history"] = model.meta.loss_history;
  if (model.optimizer) {
    const auto& o = *model.optimizer;
    if (o.m.size() != params.size() || o.v.size() != params.size()) {
      throw DataError("optimizer state does not match the model parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      tensors.push_back({{"name", "adam.m." + names[i]}, {"shape", o.m[i].shape()}});
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      tensors.push_back({{"name", "adam.v." + names[i]}, {"shape", o.v[i].shape()}});
    }
    header["adam"] = {{"lr", o.config.lr},
                      {"beta1", o.config.beta1},
                      {"beta2", o.config.beta2},
                      {"eps", o.config.eps},
                      {"step", o.step}};
  } else {
    header["adam"] = nullptr;
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::ostringstream os;
  os.write("ASCK", 4);
  io::put_u32(os, kVersion);
  io::put_u32(os, static_cast<std::uint32_t>(text.size()));
  io::put_bytes(os, text);
  for (const Tensor* t : params) tc::write_tensor(os, *t);
  if (model.optimizer) {
    for (const Tensor& t : model.optimizer->m) tc::write_tensor(os, t);
    for (const Tensor& t : model.optimizer->v) tc::write_tensor(os, t);
  }
  return os.str();
}

namespace {

StitchModel decode_body(const json& header, std::istream& is) {
  const auto cfg = config_from(header.at("config"));
  cfg.validate();
  StitchModel model = StitchModel::zeros(cfg, header.at("mel_fingerprint").get<std::string>());
  model.meta.steps = header.at("steps").get<std::uint64_t>();
  model.meta.seed = header.at("seed").get<std::uint64_t>();
  model.meta.loss_history = header.at("loss_history").get<std::vector<double>>();

  const json& listed = header.at("tensors");
  auto params = model.parameters();
  const bool has_adam = !header.at("adam").is_null();
  const std::size_t expected = params.size() * (has_adam ? 3 : 1);
  if (!listed.is_array() || listed.size() != expected) {
    throw FormatError("checkpoint lists " + std::to_string(listed.size()) + " tensors, expected " +
                      std::to_string(expected));
  }
  auto read_checked = [&](std::size_t idx, const Tensor& like) {
    Tensor t = tc::read_tensor(is);
    if (t.shape() != like.shape() ||
        listed[idx].at("shape").get<tc::Shape>() != like.shape()) {
      throw FormatError("checkpoint tensor '" + listed[idx].at("name").get<std::string>() +
                        "' has shape " + tc::shape_str(t.shape()) + ", expected " +
                        tc::shape_str(like.shape()));
    }
    return t;
  };
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = read_checked(i, *params[i]);
  if (has_adam) {
    const json& a = header.at("adam");
    tc::AdamState st;
    st.config.lr = a.at("lr").get<double>();
    st.config.beta1 = a.at("beta1").get<double>();
    st.config.beta2 = a.at("beta2").get<double>();
    st.config.eps = a.at("eps").get<double>();
    st.step = a.at("step").get<std::uint64_t>();
    for (std::size_t i = 0; i < params.size(); ++i) st.m.push_back(read_checked(params.size() + i, *params[i]));
    for (std::size_t i = 0; i < params.size(); ++i) {
      st.v.push_back(read_checked(2 * params.size() + i, *params[i]));
    }
    model.optimizer = std::move(st);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return model;
}

}  // namespace

StitchModel decode_checkpoint(const std::string& bytes) {
  std::istringstream is(bytes);
  if (io::get_bytes(is, 4) != "ASCK") throw FormatError("not an .asck checkpoint (bad magic)");
  const std::uint32_t version = io::get_u32(is);
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t len = io::get_u32(is);
  if (len > bytes.size()) throw FormatError("checkpoint header length exceeds file size");
  json header;
  try {
    header = json::parse(io::get_bytes(is, len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  try {
    return decode_body(header, is);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const StitchModel& model, const std::string& path) {
  io::write_file(path, encode_checkpoint(model));
}

StitchModel load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace astitch::ckpt
