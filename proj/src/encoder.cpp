#include "xclr/encoder.hpp"

#include <cmath>
#include <fstream>

#include "xclr/binio.hpp"
#include "xclr/error.hpp"
#include "xclr/parallel.hpp"
#include "xclr/rng.hpp"

namespace xclr {

EncoderConfig EncoderConfig::defaults(std::uint32_t channels, std::uint32_t length,
                                      std::uint32_t embedding_dim, std::uint64_t seed) {
  EncoderConfig c;
  c.input_channels = channels;
  c.input_length = length;
  c.embedding_dim = embedding_dim;
  c.seed = seed;
  c.blocks = 4;
  c.hidden_channels = 16;
  c.kernel_size = 3;
  // Longer inputs are downsampled in the later blocks.
  c.strides.assign(c.blocks, 1);
  if (length > 256) {
    for (std::uint32_t b = 1; b < c.blocks; ++b) c.strides[b] = 2;
  }
  c.head_hidden = 32;
  return c;
}

void EncoderConfig::validate() const {
  require(input_channels > 0, "encoder: input_channels must be positive");
  require(input_length > 0, "encoder: input_length must be positive");
  require(blocks > 0, "encoder: blocks must be positive");
  require(hidden_channels > 0, "encoder: hidden_channels must be positive");
  require(kernel_size > 0 && kernel_size % 2 == 1,
          "encoder: kernel_size must be odd, got " + std::to_string(kernel_size));
  require(strides.size() == blocks, "encoder: need one stride per block (" +
                                        std::to_string(strides.size()) + " given for " +
                                        std::to_string(blocks) + " blocks)");
  for (auto s : strides) require(s > 0, "encoder: strides must be positive");
  require(head_hidden > 0, "encoder: head_hidden must be positive");
  require(embedding_dim > 0, "encoder: embedding_dim must be positive");
}

std::vector<std::uint32_t> EncoderConfig::block_lengths() const {
  std::vector<std::uint32_t> out;
  std::uint32_t len = input_length;
  for (std::uint32_t b = 0; b < blocks; ++b) {
    // Symmetric padding (k-1)/2 gives floor((L - 1) / s) + 1 outputs.
    len = (len - 1) / strides[b] + 1;
    out.push_back(len);
  }
  return out;
}

bool EncoderConfig::block_has_projection(std::uint32_t block) const {
  const std::uint32_t in_ch = block == 0 ? input_channels : hidden_channels;
  return in_ch != hidden_channels || strides[block] != 1;
}

namespace {

std::string pname(std::uint32_t block, const char* layer, const char* kind) {
  return "block" + std::to_string(block) + "." + layer + "." + kind;
}

struct BlockLayout {
  std::size_t cin, lin, lout, stride;
  bool proj;
  std::size_t w1, b1, w2, b2, wp, bp;  // indices into the ParameterSet
};

struct Layout {
  std::vector<BlockLayout> blocks;
  std::size_t hidden, kernel, head_hidden, embed;
  std::size_t fc1w, fc1b, fc2w, fc2b;
  bool head_relu;
};

std::size_t index_of(const ParameterSet& ps, const std::string& name) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].name == name) return i;
  throw ContractError("encoder parameters lack '" + name + "'");
}

Layout make_layout(const EncoderParams& p) {
  const auto& c = p.config;
  c.validate();
  Layout l;
  l.hidden = c.hidden_channels;
  l.kernel = c.kernel_size;
  l.head_hidden = c.head_hidden;
  l.embed = c.embedding_dim;
  l.head_relu = c.head_activation == HeadActivation::relu;
  const auto lengths = c.block_lengths();
  std::size_t lin = c.input_length;
  for (std::uint32_t b = 0; b < c.blocks; ++b) {
    BlockLayout bl{};
    bl.cin = b == 0 ? c.input_channels : c.hidden_channels;
    bl.lin = lin;
    bl.lout = lengths[b];
    bl.stride = c.strides[b];
    bl.proj = c.block_has_projection(b);
    bl.w1 = index_of(p.params, pname(b, "conv1", "weight"));
    bl.b1 = index_of(p.params, pname(b, "conv1", "bias"));
    bl.w2 = index_of(p.params, pname(b, "conv2", "weight"));
    bl.b2 = index_of(p.params, pname(b, "conv2", "bias"));
    if (bl.proj) {
      bl.wp = index_of(p.params, pname(b, "proj", "weight"));
      bl.bp = index_of(p.params, pname(b, "proj", "bias"));
    }
    l.blocks.push_back(bl);
    lin = bl.lout;
  }
  l.fc1w = index_of(p.params, "head.fc1.weight");
  l.fc1b = index_of(p.params, "head.fc1.bias");
  l.fc2w = index_of(p.params, "head.fc2.weight");
  l.fc2b = index_of(p.params, "head.fc2.bias");
  return l;
}

// y[o, t] = b[o] + sum_{i, j} w[o, i, j] * x[i, t * stride + j - pad], zero padded.
void conv_forward(const double* x, std::size_t cin, std::size_t lin, const double* w,
                  const double* b, std::size_t cout, std::size_t k, std::size_t stride,
                  double* y, std::size_t lout) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < lout; ++t) {
      double acc = b[o];
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - pad;
      for (std::size_t i = 0; i < cin; ++i) {
        const double* wi = w + (o * cin + i) * k;
        const double* xi = x + i * lin;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t idx = base + static_cast<std::ptrdiff_t>(j);
          if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(lin)) acc += wi[j] * xi[idx];
        }
      }
      y[o * lout + t] = acc;
    }
  }
}

// Accumulates gradients of conv_forward; gx may be null.
void conv_backward(const double* x, std::size_t cin, std::size_t lin, const double* w,
                   std::size_t cout, std::size_t k, std::size_t stride, const double* gy,
                   std::size_t lout, double* gx, double* gw, double* gb) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < lout; ++t) {
      const double g = gy[o * lout + t];
      if (g == 0.0) continue;
      gb[o] += g;
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - pad;
      for (std::size_t i = 0; i < cin; ++i) {
        const double* wi = w + (o * cin + i) * k;
        double* gwi = gw + (o * cin + i) * k;
        const double* xi = x + i * lin;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t idx = base + static_cast<std::ptrdiff_t>(j);
          if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(lin)) continue;
          gwi[j] += g * xi[idx];
          if (gx) gx[i * lin + idx] += g * wi[j];
        }
      }
    }
  }
}

struct BlockCache {
  std::vector<double> in;    // cin x lin
  std::vector<double> pre1;  // hidden x lout, before the first ReLU
  std::vector<double> act1;
  std::vector<double> sum;   // conv2 + skip, before the second ReLU
};

struct SampleCache {
  std::vector<BlockCache> blocks;
  std::vector<double> top;  // last block output, hidden x L
  std::vector<double> pooled;
  std::vector<double> head_pre;
  std::vector<double> head_act;
  std::vector<double> out_pre;
  std::vector<double> out;
};

void forward_sample(const Layout& l, const ParameterSet& ps, const double* x, SampleCache& c) {
  c.blocks.resize(l.blocks.size());
  std::vector<double> cur(x, x + l.blocks[0].cin * l.blocks[0].lin);
  for (std::size_t b = 0; b < l.blocks.size(); ++b) {
    const auto& bl = l.blocks[b];
    auto& bc = c.blocks[b];
    bc.in = std::move(cur);
    const std::size_t h = l.hidden;
    bc.pre1.assign(h * bl.lout, 0.0);
    conv_forward(bc.in.data(), bl.cin, bl.lin, ps[bl.w1].value.data(), ps[bl.b1].value.data(), h,
                 l.kernel, bl.stride, bc.pre1.data(), bl.lout);
    bc.act1.resize(bc.pre1.size());
    for (std::size_t k = 0; k < bc.pre1.size(); ++k) bc.act1[k] = std::max(0.0, bc.pre1[k]);
    bc.sum.assign(h * bl.lout, 0.0);
    conv_forward(bc.act1.data(), h, bl.lout, ps[bl.w2].value.data(), ps[bl.b2].value.data(), h,
                 l.kernel, 1, bc.sum.data(), bl.lout);
    if (bl.proj) {
      std::vector<double> skip(h * bl.lout);
      conv_forward(bc.in.data(), bl.cin, bl.lin, ps[bl.wp].value.data(), ps[bl.bp].value.data(),
                   h, 1, bl.stride, skip.data(), bl.lout);
      for (std::size_t k = 0; k < skip.size(); ++k) bc.sum[k] += skip[k];
    } else {
      for (std::size_t k = 0; k < bc.sum.size(); ++k) bc.sum[k] += bc.in[k];
    }
    cur.resize(bc.sum.size());
    for (std::size_t k = 0; k < bc.sum.size(); ++k) cur[k] = std::max(0.0, bc.sum[k]);
  }
  c.top = std::move(cur);

  const std::size_t len = l.blocks.back().lout;
  c.pooled.assign(l.hidden, 0.0);
  for (std::size_t ch = 0; ch < l.hidden; ++ch) {
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += c.top[ch * len + t];
    c.pooled[ch] = s / static_cast<double>(len);
  }

  const double* w1 = ps[l.fc1w].value.data();
  const double* b1 = ps[l.fc1b].value.data();
  c.head_pre.resize(l.head_hidden);
  c.head_act.resize(l.head_hidden);
  for (std::size_t r = 0; r < l.head_hidden; ++r) {
    double acc = b1[r];
    for (std::size_t k = 0; k < l.hidden; ++k) acc += w1[r * l.hidden + k] * c.pooled[k];
    c.head_pre[r] = acc;
    c.head_act[r] = std::max(0.0, acc);
  }
  const double* w2 = ps[l.fc2w].value.data();
  const double* b2 = ps[l.fc2b].value.data();
  c.out_pre.resize(l.embed);
  c.out.resize(l.embed);
  for (std::size_t r = 0; r < l.embed; ++r) {
    double acc = b2[r];
    for (std::size_t k = 0; k < l.head_hidden; ++k) acc += w2[r * l.head_hidden + k] * c.head_act[k];
    c.out_pre[r] = acc;
    c.out[r] = l.head_relu ? std::max(0.0, acc) : acc;
  }
}

void backward_sample(const Layout& l, const ParameterSet& ps, const SampleCache& c,
                     const double* g_out, ParameterSet& grads) {
  std::vector<double> g_pre(l.embed);
  for (std::size_t r = 0; r < l.embed; ++r)
    g_pre[r] = (l.head_relu && c.out_pre[r] <= 0.0) ? 0.0 : g_out[r];

  const double* w2 = ps[l.fc2w].value.data();
  double* gw2 = grads[l.fc2w].value.data();
  double* gb2 = grads[l.fc2b].value.data();
  std::vector<double> g_head(l.head_hidden, 0.0);
  for (std::size_t r = 0; r < l.embed; ++r) {
    gb2[r] += g_pre[r];
    for (std::size_t k = 0; k < l.head_hidden; ++k) {
      gw2[r * l.head_hidden + k] += g_pre[r] * c.head_act[k];
      g_head[k] += g_pre[r] * w2[r * l.head_hidden + k];
    }
  }
  for (std::size_t k = 0; k < l.head_hidden; ++k)
    if (c.head_pre[k] <= 0.0) g_head[k] = 0.0;

  const double* w1 = ps[l.fc1w].value.data();
  double* gw1 = grads[l.fc1w].value.data();
  double* gb1 = grads[l.fc1b].value.data();
  std::vector<double> g_pooled(l.hidden, 0.0);
  for (std::size_t r = 0; r < l.head_hidden; ++r) {
    gb1[r] += g_head[r];
    for (std::size_t k = 0; k < l.hidden; ++k) {
      gw1[r * l.hidden + k] += g_head[r] * c.pooled[k];
      g_pooled[k] += g_head[r] * w1[r * l.hidden + k];
    }
  }

  const std::size_t len = l.blocks.back().lout;
  std::vector<double> g_cur(l.hidden * len);
  for (std::size_t ch = 0; ch < l.hidden; ++ch)
    for (std::size_t t = 0; t < len; ++t)
      g_cur[ch * len + t] = g_pooled[ch] / static_cast<double>(len);

  for (std::size_t b = l.blocks.size(); b-- > 0;) {
    const auto& bl = l.blocks[b];
    const auto& bc = c.blocks[b];
    const std::size_t h = l.hidden;
    std::vector<double> g_sum(h * bl.lout);
    for (std::size_t k = 0; k < g_sum.size(); ++k) g_sum[k] = bc.sum[k] > 0.0 ? g_cur[k] : 0.0;

    std::vector<double> g_act1(h * bl.lout, 0.0);
    conv_backward(bc.act1.data(), h, bl.lout, ps[bl.w2].value.data(), h, l.kernel, 1,
                  g_sum.data(), bl.lout, g_act1.data(), grads[bl.w2].value.data(),
                  grads[bl.b2].value.data());
    for (std::size_t k = 0; k < g_act1.size(); ++k)
      if (bc.pre1[k] <= 0.0) g_act1[k] = 0.0;

    std::vector<double> g_in(bl.cin * bl.lin, 0.0);
    const bool need_input_grad = b > 0;
    conv_backward(bc.in.data(), bl.cin, bl.lin, ps[bl.w1].value.data(), h, l.kernel, bl.stride,
                  g_act1.data(), bl.lout, need_input_grad ? g_in.data() : nullptr,
                  grads[bl.w1].value.data(), grads[bl.b1].value.data());
    if (bl.proj) {
      conv_backward(bc.in.data(), bl.cin, bl.lin, ps[bl.wp].value.data(), h, 1, bl.stride,
                    g_sum.data(), bl.lout, need_input_grad ? g_in.data() : nullptr,
                    grads[bl.wp].value.data(), grads[bl.bp].value.data());
    } else if (need_input_grad) {
      for (std::size_t k = 0; k < g_in.size(); ++k) g_in[k] += g_sum[k];
    }
    g_cur = std::move(g_in);
  }
}

void check_batch(const EncoderConfig& c, const Array& batch) {
  require(batch.rank() == 3, "encode: batch must be N x c x T, got " + shape_string(batch.shape()));
  require(batch.extent(1) == c.input_channels && batch.extent(2) == c.input_length,
          "encode: batch shape " + shape_string(batch.shape()) + " does not match encoder input (" +
              std::to_string(c.input_channels) + " x " + std::to_string(c.input_length) + ")");
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  EncoderParams p;
  p.config = config;
  auto uniform_array = [&](Shape shape, double bound) {
    Array a(std::move(shape));
    for (auto& v : a.values()) v = rng.uniform(-bound, bound);
    return a;
  };
  // He-uniform weights for the ReLU layers, 1/sqrt(fan_in) biases.
  auto add_layer = [&](const std::string& prefix, Shape wshape, std::size_t fan_in,
                       std::size_t out) {
    const double fan = static_cast<double>(fan_in);
    p.params.add(prefix + ".weight", uniform_array(std::move(wshape), std::sqrt(6.0 / fan)));
    p.params.add(prefix + ".bias", uniform_array({out}, 1.0 / std::sqrt(fan)));
  };
  const std::size_t h = config.hidden_channels;
  const std::size_t k = config.kernel_size;
  for (std::uint32_t b = 0; b < config.blocks; ++b) {
    const std::size_t cin = b == 0 ? config.input_channels : h;
    const std::string block = "block" + std::to_string(b);
    add_layer(block + ".conv1", {h, cin, k}, cin * k, h);
    add_layer(block + ".conv2", {h, h, k}, h * k, h);
    if (config.block_has_projection(b)) add_layer(block + ".proj", {h, cin}, cin, h);
  }
  add_layer("head.fc1", {config.head_hidden, h}, h, config.head_hidden);
  add_layer("head.fc2", {config.embedding_dim, config.head_hidden}, config.head_hidden,
            config.embedding_dim);
  return p;
}

Array encode(const EncoderParams& params, const Array& batch) {
  check_batch(params.config, batch);
  const Layout l = make_layout(params);
  const std::size_t n = batch.extent(0);
  const std::size_t stride = batch.extent(1) * batch.extent(2);
  Array out = Array::matrix(n, l.embed);
  parallel_for(n, [&](std::size_t i) {
    SampleCache c;
    forward_sample(l, params.params, batch.data() + i * stride, c);
    std::copy(c.out.begin(), c.out.end(), out.row(i).begin());
  });
  return out;
}

ParameterSet encode_backward(const EncoderParams& params, const Array& batch,
                             const Array& grad_embeddings) {
  check_batch(params.config, batch);
  const Layout l = make_layout(params);
  const std::size_t n = batch.extent(0);
  require(grad_embeddings.rank() == 2 && grad_embeddings.rows() == n &&
              grad_embeddings.cols() == l.embed,
          "encode_backward: grad_embeddings must be N x e");
  const std::size_t stride = batch.extent(1) * batch.extent(2);
  std::vector<ParameterSet> per_sample(n);
  parallel_for(n, [&](std::size_t i) {
    per_sample[i] = params.params.zeros_like();
    const auto g = grad_embeddings.row(i);
    bool any = false;
    for (double v : g) any = any || v != 0.0;
    if (!any) return;
    SampleCache c;
    forward_sample(l, params.params, batch.data() + i * stride, c);
    backward_sample(l, params.params, c, g.data(), per_sample[i]);
  });
  // Fixed summation order keeps the result independent of the worker count.
  ParameterSet total = params.params.zeros_like();
  for (const auto& g : per_sample) total.add_scaled(g, 1.0);
  return total;
}

namespace {
constexpr char kCheckpointMagic[5] = {'X', 'C', 'L', 'R', 'P'};

[[noreturn]] void checkpoint_error(const std::filesystem::path& path, const std::string& what) {
  throw CheckpointError("checkpoint " + path.string() + ": " + what);
}
}  // namespace

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) checkpoint_error(path, "cannot open for writing");
  using namespace binio;
  os.write(kCheckpointMagic, 5);
  put_u32(os, kCheckpointVersion);
  const auto& c = params.config;
  put_u32(os, c.input_channels);
  put_u32(os, c.input_length);
  put_u32(os, c.blocks);
  put_u32(os, c.hidden_channels);
  put_u32(os, c.kernel_size);
  put_u32(os, static_cast<std::uint32_t>(c.strides.size()));
  for (auto s : c.strides) put_u32(os, s);
  put_u32(os, c.head_hidden);
  put_u32(os, c.embedding_dim);
  put_u64(os, c.seed);
  put_u8(os, static_cast<std::uint8_t>(c.head_activation));
  for (const auto& e : params.params) {
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
    for (auto ext : e.value.shape()) put_u32(os, static_cast<std::uint32_t>(ext));
    for (double v : e.value.values()) put_f64(os, v);
  }
  if (!os) checkpoint_error(path, "write failed");
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) checkpoint_error(path, "cannot open");
  using namespace binio;
  char magic[5];
  if (!get_bytes(is, magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0)
    checkpoint_error(path, "bad magic");
  std::uint32_t version = 0;
  if (!get_u32(is, version)) checkpoint_error(path, "truncated header");
  if (version != kCheckpointVersion)
    checkpoint_error(path, "unsupported version " + std::to_string(version));

  EncoderParams p;
  auto& c = p.config;
  std::uint32_t nstrides = 0;
  bool ok = get_u32(is, c.input_channels) && get_u32(is, c.input_length) &&
            get_u32(is, c.blocks) && get_u32(is, c.hidden_channels) &&
            get_u32(is, c.kernel_size) && get_u32(is, nstrides);
  if (!ok || nstrides > 4096) checkpoint_error(path, "truncated config");
  c.strides.resize(nstrides);
  for (auto& s : c.strides) ok = ok && get_u32(is, s);
  std::uint8_t act = 0;
  ok = ok && get_u32(is, c.head_hidden) && get_u32(is, c.embedding_dim) && get_u64(is, c.seed) &&
       get_u8(is, act);
  if (!ok) checkpoint_error(path, "truncated config");
  c.head_activation = static_cast<HeadActivation>(act);
  c.validate();

  while (is.peek() != std::char_traits<char>::eof()) {
    std::uint32_t name_len = 0, rank = 0;
    if (!get_u32(is, name_len) || name_len > 4096) checkpoint_error(path, "truncated array header");
    std::string name(name_len, '\0');
    if (!get_bytes(is, name.data(), name_len) || !get_u32(is, rank) || rank > 8)
      checkpoint_error(path, "truncated array header");
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint32_t v = 0;
      if (!get_u32(is, v)) checkpoint_error(path, "truncated array header");
      e = v;
    }
    std::vector<double> values(shape_size(shape));
    for (auto& v : values)
      if (!get_f64(is, v)) checkpoint_error(path, "truncated values for '" + name + "'");
    p.params.add(std::move(name), Array(std::move(shape), std::move(values)));
  }
  // Shapes must agree with the echoed configuration.
  const EncoderParams fresh = init_encoder(c);
  if (!fresh.params.same_layout(p.params)) checkpoint_error(path, "arrays do not match config");
  return p;
}

}  // namespace xclr
