#include "midnet/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "midnet/rng.hpp"

namespace midnet {

namespace {

Tensor he_init(const Shape& shape, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.normal(0.0, stddev);
    return Tensor::from_data(shape, std::move(data), true);
}

struct InitStream {
    std::uint64_t seed;
    std::uint64_t counter = 0;
    std::uint64_t next() { return derive_seed(seed, "init", counter++); }
};

Conv2dLayer make_conv(int kh, int kw, int cin, int cout, int stride, InitStream& init) {
    Conv2dLayer layer;
    const std::size_t fan_in = static_cast<std::size_t>(kh) * kw * cin;
    layer.w = he_init({(std::size_t)kh, (std::size_t)kw, (std::size_t)cin, (std::size_t)cout},
                      fan_in, init.next());
    layer.b = Tensor::zeros({(std::size_t)cout}, true);
    layer.stride = stride;
    return layer;
}

DenseLayer make_dense(int in, int out, InitStream& init) {
    DenseLayer layer;
    layer.w = he_init({(std::size_t)in, (std::size_t)out}, (std::size_t)in, init.next());
    layer.b = Tensor::zeros({(std::size_t)out}, true);
    return layer;
}

Tensor conv_forward(const Conv2dLayer& layer, const Tensor& x) {
    return add_bias(conv2d(x, layer.w, layer.stride, Padding::Same), layer.b);
}

Tensor residual_forward(const ResidualUnit& unit, const Tensor& x) {
    Tensor h = conv_forward(unit.conv2, relu(conv_forward(unit.conv1, x)));
    Tensor skip = unit.proj ? conv_forward(*unit.proj, x) : x;
    return add(h, skip);
}

Encoder build_encoder(const EncoderConfig& cfg, InitStream& init) {
    Encoder enc;
    int cin = static_cast<int>(cfg.in_c);
    for (std::size_t i = 0; i < cfg.stages(); ++i) {
        const int cout = cfg.filters[i];
        const int stride = cfg.strides[i];
        ResidualUnit unit;
        unit.conv1 = make_conv(cfg.kernel_size, cfg.kernel_size, cin, cout, stride, init);
        unit.conv2 = make_conv(cfg.kernel_size, cfg.kernel_size, cout, cout, 1, init);
        if (stride != 1 || cin != cout)
            unit.proj = make_conv(1, 1, cin, cout, stride, init);
        enc.stages.push_back(std::move(unit));
        cin = cout;
    }
    return enc;
}

// Runs an encoder; optionally records every stage output except the last
// (the last stage output is the feature itself).
Tensor encoder_forward(const Encoder& enc, const Tensor& x, std::vector<Tensor>* skips) {
    Tensor h = x;
    for (std::size_t i = 0; i < enc.stages.size(); ++i) {
        h = residual_forward(enc.stages[i], h);
        if (skips && i + 1 < enc.stages.size()) skips->push_back(h);
    }
    return h;
}

void collect_encoder(const std::string& prefix, const Encoder& enc,
                     std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < enc.stages.size(); ++i) {
        const ResidualUnit& u = enc.stages[i];
        const std::string base = prefix + ".stage" + std::to_string(i);
        out.emplace_back(base + ".conv1.w", u.conv1.w);
        out.emplace_back(base + ".conv1.b", u.conv1.b);
        out.emplace_back(base + ".conv2.w", u.conv2.w);
        out.emplace_back(base + ".conv2.b", u.conv2.b);
        if (u.proj) {
            out.emplace_back(base + ".proj.w", u.proj->w);
            out.emplace_back(base + ".proj.b", u.proj->b);
        }
    }
}

void collect_mlp(const std::string& prefix, const Mlp& mlp,
                 std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        out.emplace_back(prefix + ".layer" + std::to_string(i) + ".w", mlp.layers[i].w);
        out.emplace_back(prefix + ".layer" + std::to_string(i) + ".b", mlp.layers[i].b);
    }
}

void collect_decoder(const Decoder& dec, std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < dec.convs.size(); ++i) {
        out.emplace_back("dec.conv" + std::to_string(i) + ".w", dec.convs[i].w);
        out.emplace_back("dec.conv" + std::to_string(i) + ".b", dec.convs[i].b);
    }
}

std::string ints_to_csv(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<int> csv_to_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
    return out;
}

}  // namespace

void EncoderConfig::validate() const {
    if (filters.empty()) throw ConfigError("encoder config: empty filter list");
    if (filters.size() != strides.size())
        throw ConfigError("encoder config: filters/strides length mismatch (" +
                          std::to_string(filters.size()) + " vs " + std::to_string(strides.size()) + ")");
    for (int f : filters)
        if (f <= 0) throw ConfigError("encoder config: non-positive filter count");
    for (int s : strides)
        if (s <= 0) throw ConfigError("encoder config: non-positive stride");
    if (kernel_size <= 0) throw ConfigError("encoder config: non-positive kernel size");
    if (in_h == 0 || in_w == 0 || in_c == 0)
        throw ConfigError("encoder config: input shape not set");
}

std::vector<std::pair<std::size_t, std::size_t>> EncoderConfig::resolutions() const {
    std::vector<std::pair<std::size_t, std::size_t>> r;
    r.emplace_back(in_h, in_w);
    for (std::size_t i = 0; i < strides.size(); ++i) {
        const auto s = static_cast<std::size_t>(strides[i]);
        r.emplace_back((r.back().first + s - 1) / s, (r.back().second + s - 1) / s);
    }
    return r;
}

std::vector<std::pair<std::string, Tensor>> MIDNetParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_encoder("e1", e1, out);
    collect_encoder("e2", e2, out);
    collect_mlp("cls", classifier, out);
    collect_decoder(decoder, out);
    collect_mlp("mine", mine, out);
    return out;
}

std::vector<Tensor> MIDNetParams::main_parameters() const {
    std::vector<Tensor> out;
    std::vector<std::pair<std::string, Tensor>> named;
    collect_encoder("e1", e1, named);
    collect_encoder("e2", e2, named);
    collect_mlp("cls", classifier, named);
    collect_decoder(decoder, named);
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

std::vector<Tensor> MIDNetParams::theta_parameters() const {
    std::vector<Tensor> out;
    for (const DenseLayer& l : mine.layers) {
        out.push_back(l.w);
        out.push_back(l.b);
    }
    return out;
}

std::vector<Tensor> MIDNetParams::main_weights() const {
    std::vector<Tensor> out;
    std::vector<std::pair<std::string, Tensor>> named;
    collect_encoder("e1", e1, named);
    collect_encoder("e2", e2, named);
    collect_mlp("cls", classifier, named);
    collect_decoder(decoder, named);
    for (auto& [name, t] : named)
        if (name.ends_with(".w")) out.push_back(t);
    return out;
}

std::vector<Tensor> MIDNetParams::theta_weights() const {
    std::vector<Tensor> out;
    for (const DenseLayer& l : mine.layers) out.push_back(l.w);
    return out;
}

std::size_t MIDNetParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.numel();
    return n;
}

MIDNetParams build_midnet(const EncoderConfig& enc_cfg, int num_classes,
                          const std::vector<int>& classifier_units,
                          const std::vector<int>& mine_units, std::uint64_t seed) {
    enc_cfg.validate();
    if (num_classes < 2) throw ConfigError("build_midnet: num_classes must be >= 2");
    if (classifier_units.empty()) throw ConfigError("build_midnet: empty classifier unit list");
    if (mine_units.empty()) throw ConfigError("build_midnet: empty MINE unit list");

    MIDNetParams p;
    p.enc_cfg = enc_cfg;
    p.num_classes = num_classes;
    p.classifier_units = classifier_units;
    p.mine_units = mine_units;
    p.seed = seed;

    InitStream init{seed};
    p.e1 = build_encoder(enc_cfg, init);
    p.e2 = build_encoder(enc_cfg, init);

    const auto res = enc_cfg.resolutions();
    const auto [fh, fw] = res.back();
    const int f_last = enc_cfg.filters.back();
    const int feat_dim = static_cast<int>(fh * fw) * f_last;

    {
        std::vector<int> dims{feat_dim};
        dims.insert(dims.end(), classifier_units.begin(), classifier_units.end());
        dims.push_back(num_classes);
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            p.classifier.layers.push_back(make_dense(dims[i], dims[i + 1], init));
    }

    // Decoder mirrors the encoder, deep to shallow. Stage i consumes the
    // previous decoder output (2*f_last channels at the deepest point),
    // concatenated with the E2 skip at the target resolution.
    {
        const std::size_t L = enc_cfg.stages();
        for (std::size_t j = 0; j < L; ++j) {
            const std::size_t i = L - j;  // encoder stage index, 1-based
            const int in_prev = (j == 0) ? 2 * f_last : enc_cfg.filters[i - 1];
            const int in_skip = (i >= 2) ? enc_cfg.filters[i - 2] : 0;
            const int cout = (i >= 2) ? enc_cfg.filters[i - 2]
                                      : static_cast<int>(enc_cfg.in_c);
            p.decoder.convs.push_back(
                make_conv(enc_cfg.kernel_size, enc_cfg.kernel_size, in_prev + in_skip, cout, 1, init));
        }
    }

    {
        std::vector<int> dims{2 * feat_dim};
        dims.insert(dims.end(), mine_units.begin(), mine_units.end());
        dims.push_back(1);
        for (std::size_t i = 0; i + 1 < dims.size(); ++i)
            p.mine.layers.push_back(make_dense(dims[i], dims[i + 1], init));
    }
    return p;
}

FeaturePair encode(const MIDNetParams& params, const Tensor& x) {
    const Shape& s = x.shape();
    const EncoderConfig& cfg = params.enc_cfg;
    if (s.size() != 4 || s[1] != cfg.in_h || s[2] != cfg.in_w || s[3] != cfg.in_c)
        throw ShapeError("encode: input " + shape_str(s) + " does not match configured shape [N," +
                         std::to_string(cfg.in_h) + "," + std::to_string(cfg.in_w) + "," +
                         std::to_string(cfg.in_c) + "]");
    FeaturePair pair;
    pair.fc = encoder_forward(params.e1, x, nullptr);
    pair.fd = encoder_forward(params.e2, x, &pair.skip_activations);
    return pair;
}

Tensor encode_categorical(const MIDNetParams& params, const Tensor& x) {
    const Shape& s = x.shape();
    const EncoderConfig& cfg = params.enc_cfg;
    if (s.size() != 4 || s[1] != cfg.in_h || s[2] != cfg.in_w || s[3] != cfg.in_c)
        throw ShapeError("encode_categorical: input " + shape_str(s) + " does not match configured shape");
    return encoder_forward(params.e1, x, nullptr);
}

Tensor decode(const MIDNetParams& params, const FeaturePair& pair) {
    const EncoderConfig& cfg = params.enc_cfg;
    if (pair.fc.shape() != pair.fd.shape())
        throw ShapeError("decode: fc " + shape_str(pair.fc.shape()) + " vs fd " +
                         shape_str(pair.fd.shape()));
    const std::size_t L = cfg.stages();
    if (pair.skip_activations.size() != L - 1)
        throw ContractError("decode: expected " + std::to_string(L - 1) + " skip activations, got " +
                            std::to_string(pair.skip_activations.size()));
    const auto res = cfg.resolutions();

    Tensor z = concat({pair.fc, pair.fd}, 3);
    for (std::size_t j = 0; j < L; ++j) {
        const std::size_t i = L - j;  // encoder stage this step mirrors
        const int stride = cfg.strides[i - 1];
        if (stride > 1) {
            z = upsample_nearest(z, stride);
            const auto [th, tw] = res[i - 1];
            if (z.dim(1) != th || z.dim(2) != tw) z = crop_spatial(z, th, tw);
        }
        if (i >= 2) {
            const Tensor& skip = pair.skip_activations[i - 2];
            if (skip.dim(1) != z.dim(1) || skip.dim(2) != z.dim(2))
                throw ContractError("decode: skip resolution " + shape_str(skip.shape()) +
                                    " does not match " + shape_str(z.shape()));
            z = concat({z, skip}, 3);
        }
        z = conv_forward(params.decoder.convs[j], z);
        if (i >= 2) z = relu(z);
    }
    return z;
}

Tensor classify(const MIDNetParams& params, const Tensor& fc) {
    return softmax(mlp_forward(params.classifier, flatten(fc)), 1);
}

Tensor statistics_net(const MIDNetParams& params, const Tensor& fc, const Tensor& fd) {
    if (fc.shape().at(0) != fd.shape().at(0))
        throw ShapeError("statistics_net: batch mismatch " + shape_str(fc.shape()) + " vs " +
                         shape_str(fd.shape()));
    Tensor x = concat({flatten(fc), flatten(fd)}, 1);
    return mlp_forward(params.mine, x);
}

Mlp build_mlp(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("build_mlp: need at least input and output dims");
    InitStream init{seed};
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        mlp.layers.push_back(make_dense(dims[i], dims[i + 1], init));
    return mlp;
}

Tensor mlp_forward(const Mlp& mlp, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        h = add_bias(matmul(h, mlp.layers[i].w), mlp.layers[i].b);
        if (i + 1 < mlp.layers.size()) h = relu(h);
    }
    return h;
}

std::vector<Tensor> mlp_parameters(const Mlp& mlp) {
    std::vector<Tensor> out;
    for (const DenseLayer& l : mlp.layers) {
        out.push_back(l.w);
        out.push_back(l.b);
    }
    return out;
}

// --- checkpoint --------------------------------------------------------

const std::string* Checkpoint::find(const std::string& key) const {
    for (const auto& [k, v] : manifest)
        if (k == key) return &v;
    return nullptr;
}

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
    for (const auto& [k, t] : tensors)
        if (k == name) return &t;
    return nullptr;
}

void Checkpoint::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : manifest)
        if (k == key) {
            v = value;
            return;
        }
    manifest.emplace_back(key, value);
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os << "midnet-checkpoint v1\n";
    for (const auto& [k, v] : ckpt.manifest) os << k << "=" << v << "\n";
    os << "\n";
    for (const auto& [name, t] : ckpt.tensors) {
        os << "tensor " << name << "\n";
        write_tensor(os, t);
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "midnet-checkpoint v1")
        throw IoError("not a checkpoint file: " + path);
    Checkpoint ckpt;
    while (std::getline(is, line)) {
        if (line.empty()) break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad manifest line in " + path + ": " + line);
        ckpt.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    while (std::getline(is, line)) {
        const std::string prefix = "tensor ";
        if (line.rfind(prefix, 0) != 0) throw IoError("bad tensor record in " + path + ": " + line);
        ckpt.tensors.emplace_back(line.substr(prefix.size()), read_tensor(is));
    }
    return ckpt;
}

Checkpoint to_checkpoint(const MIDNetParams& params, std::uint64_t step) {
    Checkpoint ckpt;
    ckpt.set("filters", ints_to_csv(params.enc_cfg.filters));
    ckpt.set("strides", ints_to_csv(params.enc_cfg.strides));
    ckpt.set("kernel_size", std::to_string(params.enc_cfg.kernel_size));
    ckpt.set("in_h", std::to_string(params.enc_cfg.in_h));
    ckpt.set("in_w", std::to_string(params.enc_cfg.in_w));
    ckpt.set("in_c", std::to_string(params.enc_cfg.in_c));
    ckpt.set("num_classes", std::to_string(params.num_classes));
    ckpt.set("classifier_units", ints_to_csv(params.classifier_units));
    ckpt.set("mine_units", ints_to_csv(params.mine_units));
    ckpt.set("seed", std::to_string(params.seed));
    ckpt.set("step", std::to_string(step));
    for (const auto& [name, t] : params.named_parameters())
        ckpt.tensors.emplace_back(name, t.detach());
    return ckpt;
}

MIDNetParams params_from_checkpoint(const Checkpoint& ckpt) {
    auto need = [&ckpt](const std::string& key) -> const std::string& {
        const std::string* v = ckpt.find(key);
        if (!v) throw IoError("checkpoint manifest missing key: " + key);
        return *v;
    };
    EncoderConfig cfg;
    cfg.filters = csv_to_ints(need("filters"));
    cfg.strides = csv_to_ints(need("strides"));
    cfg.kernel_size = std::stoi(need("kernel_size"));
    cfg.in_h = std::stoull(need("in_h"));
    cfg.in_w = std::stoull(need("in_w"));
    cfg.in_c = std::stoull(need("in_c"));
    MIDNetParams p = build_midnet(cfg, std::stoi(need("num_classes")),
                                  csv_to_ints(need("classifier_units")),
                                  csv_to_ints(need("mine_units")),
                                  std::stoull(need("seed")));
    for (auto& [name, t] : p.named_parameters()) {
        const Tensor* stored = ckpt.find_tensor(name);
        if (!stored) throw IoError("checkpoint missing parameter tensor: " + name);
        if (stored->shape() != t.shape())
            throw ShapeError("checkpoint parameter " + name + " has shape " +
                             shape_str(stored->shape()) + ", expected " + shape_str(t.shape()));
        t.data() = stored->data();
    }
    return p;
}

}  // namespace midnet
