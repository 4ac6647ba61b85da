#include "platont/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "platont/errors.hpp"
#include "platont/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace platont {

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const Dense& l : layers) n += l.w.a.size() + l.b.size();
    return n;
}

Mlp Mlp::build(const std::vector<int>& dims, double dropout, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp::build: need at least two dims");
    Mlp mlp;
    mlp.dropout = dropout;
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Dense l;
        l.w = Mat(dims[i], dims[i + 1]);
        const double bound = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
        for (double& v : l.w.a) v = rng.uniform(-bound, bound);
        l.b.assign(dims[i + 1], 0.0);
        mlp.layers.push_back(std::move(l));
    }
    return mlp;
}

Mat mlp_forward(const Mlp& mlp, const Mat& x, bool train, std::uint64_t mask_seed,
                MlpCache* cache) {
    if (x.cols != mlp.in_dim())
        throw ShapeError("mlp_forward: expected " + std::to_string(mlp.in_dim()) +
                         " input columns, got " + std::to_string(x.cols));
    Rng rng(stream_seed(mask_seed, 0xD201));
    const int n_layers = static_cast<int>(mlp.layers.size());
    if (cache) {
        cache->valid = true;
        cache->train = train;
        cache->input = x;
        cache->pre.assign(n_layers, Mat());
        cache->act.assign(n_layers, Mat());
        cache->mask.assign(n_layers, Mat());
    }
    Mat h = x;
    for (int li = 0; li < n_layers; ++li) {
        const Dense& l = mlp.layers[li];
        Mat y = matmul(h, l.w);
        for (int i = 0; i < y.rows; ++i)
            for (int j = 0; j < y.cols; ++j) y(i, j) += l.b[j];
        if (cache) cache->pre[li] = y;
        if (li + 1 < n_layers) {
            for (double& v : y.a) v = v > 0.0 ? v : 0.0;
            if (train && mlp.dropout > 0.0) {
                Mat mask(y.rows, y.cols);
                const double keep = 1.0 - mlp.dropout;
                for (double& mv : mask.a) mv = rng.uniform01() < keep ? 1.0 / keep : 0.0;
                for (std::size_t k = 0; k < y.a.size(); ++k) y.a[k] *= mask.a[k];
                if (cache) cache->mask[li] = std::move(mask);
            }
        }
        if (cache) cache->act[li] = y;
        h = std::move(y);
    }
    return h;
}

Mat mlp_backward(const Mlp& mlp, const MlpCache& cache, const Mat& upstream, Mlp& grads) {
    if (!cache.valid) throw StateError("mlp_backward: no cached forward pass");
    const int n_layers = static_cast<int>(mlp.layers.size());
    Mat d = upstream;
    for (int li = n_layers - 1; li >= 0; --li) {
        if (li + 1 < n_layers) {
            if (cache.train && mlp.dropout > 0.0 && cache.mask[li].rows > 0)
                for (std::size_t k = 0; k < d.a.size(); ++k) d.a[k] *= cache.mask[li].a[k];
            const Mat& pre = cache.pre[li];
            for (std::size_t k = 0; k < d.a.size(); ++k)
                if (pre.a[k] <= 0.0) d.a[k] = 0.0;
        }
        const Mat& in = li == 0 ? cache.input : cache.act[li - 1];
        Mat dw = matmul_tn(in, d);
        for (std::size_t k = 0; k < dw.a.size(); ++k) grads.layers[li].w.a[k] += dw.a[k];
        for (int j = 0; j < d.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < d.rows; ++i) s += d(i, j);
            grads.layers[li].b[j] += s;
        }
        if (li > 0) d = matmul_nt(d, mlp.layers[li].w);
    }
    return matmul_nt(d, mlp.layers[0].w);
}

Mat encode(const Mlp& enc, const Mat& x, bool train, std::uint64_t mask_seed, MlpCache* cache) {
    return mlp_forward(enc, x, train, mask_seed, cache);
}

Mat decode(const Mlp& dec, const Mat& z_agg, bool train, std::uint64_t mask_seed,
           MlpCache* cache) {
    return mlp_forward(dec, z_agg, train, mask_seed, cache);
}

Attention Attention::build(int latent_dim, std::uint64_t seed) {
    Attention att;
    att.w = Mat(3 * latent_dim, 3);
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / (3 * latent_dim + 3));
    for (double& v : att.w.a) v = rng.uniform(-bound, bound);
    att.b.assign(3, 0.0);
    return att;
}

Aggregated aggregate_latents(const Attention& att, const Mat& z0, const Mat& z1, const Mat& z2,
                             AttentionCache* cache) {
    if (z0.rows != z1.rows || z1.rows != z2.rows)
        throw ShapeError("aggregate_latents: row counts differ across channels");
    if (z0.cols != z1.cols || z1.cols != z2.cols)
        throw ShapeError("aggregate_latents: latent dims differ across channels");
    const int n = z0.rows, d = z0.cols;
    if (att.w.rows != 3 * d) throw ShapeError("aggregate_latents: attention input dim mismatch");

    Mat concat(n, 3 * d);
    for (int i = 0; i < n; ++i) {
        std::memcpy(concat.row(i), z0.row(i), sizeof(double) * d);
        std::memcpy(concat.row(i) + d, z1.row(i), sizeof(double) * d);
        std::memcpy(concat.row(i) + 2 * d, z2.row(i), sizeof(double) * d);
    }
    Mat logits = matmul(concat, att.w);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) logits(i, j) += att.b[j];

    Aggregated out;
    out.weights = Mat(n, 3);
    for (int i = 0; i < n; ++i) {
        const double m = std::max({logits(i, 0), logits(i, 1), logits(i, 2)});
        double s = 0.0;
        for (int j = 0; j < 3; ++j) {
            out.weights(i, j) = std::exp(logits(i, j) - m);
            s += out.weights(i, j);
        }
        for (int j = 0; j < 3; ++j) out.weights(i, j) /= s;
    }
    out.z_agg = Mat(n, d);
    const std::array<const Mat*, 3> zs{&z0, &z1, &z2};
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            const double wk = out.weights(i, k);
            const double* zr = zs[k]->row(i);
            double* ar = out.z_agg.row(i);
            for (int j = 0; j < d; ++j) ar[j] += wk * zr[j];
        }
    if (cache) {
        cache->valid = true;
        cache->concat = std::move(concat);
        cache->weights = out.weights;
    }
    return out;
}

void aggregate_backward(const Attention& att, const AttentionCache& cache,
                        const std::array<const Mat*, 3>& zs, const Mat& d_zagg,
                        std::array<Mat, 3>& d_z, Attention& grads) {
    if (!cache.valid) throw StateError("aggregate_backward: no cached forward pass");
    const int n = d_zagg.rows, d = d_zagg.cols;
    Mat d_w(n, 3); // gradient w.r.t. the softmax weights
    for (int i = 0; i < n; ++i) {
        const double* dz = d_zagg.row(i);
        for (int k = 0; k < 3; ++k) {
            const double wk = cache.weights(i, k);
            const double* zr = zs[k]->row(i);
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                d_z[k](i, j) += wk * dz[j];
                s += dz[j] * zr[j];
            }
            d_w(i, k) = s;
        }
    }
    // softmax backward: dl = w .* (dw - sum(dw .* w))
    Mat d_logits(n, 3);
    for (int i = 0; i < n; ++i) {
        double inner = 0.0;
        for (int k = 0; k < 3; ++k) inner += d_w(i, k) * cache.weights(i, k);
        for (int k = 0; k < 3; ++k) d_logits(i, k) = cache.weights(i, k) * (d_w(i, k) - inner);
    }
    Mat dw_att = matmul_tn(cache.concat, d_logits);
    for (std::size_t k = 0; k < dw_att.a.size(); ++k) grads.w.a[k] += dw_att.a[k];
    for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += d_logits(i, j);
        grads.b[j] += s;
    }
    Mat d_concat = matmul_nt(d_logits, att.w);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < d; ++j) d_z[k](i, j) += d_concat(i, k * d + j);
}

Scaler Scaler::fit(const Mat& x) {
    Scaler s;
    s.mean.assign(x.cols, 0.0);
    s.scale.assign(x.cols, 1.0);
    for (int j = 0; j < x.cols; ++j) {
        double m = 0.0;
        for (int i = 0; i < x.rows; ++i) m += x(i, j);
        m /= x.rows;
        double var = 0.0;
        for (int i = 0; i < x.rows; ++i) {
            const double d = x(i, j) - m;
            var += d * d;
        }
        s.mean[j] = m;
        s.scale[j] = std::max(std::sqrt(var / x.rows), 1e-8);
    }
    return s;
}

Mat Scaler::apply(const Mat& x) const {
    if (x.cols != static_cast<int>(mean.size())) throw ShapeError("Scaler::apply: dim mismatch");
    Mat y = x;
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y(i, j) = (y(i, j) - mean[j]) / scale[j];
    return y;
}

Mat Scaler::invert(const Mat& x) const {
    if (x.cols != static_cast<int>(mean.size())) throw ShapeError("Scaler::invert: dim mismatch");
    Mat y = x;
    for (int i = 0; i < y.rows; ++i)
        for (int j = 0; j < y.cols; ++j) y(i, j) = y(i, j) * scale[j] + mean[j];
    return y;
}

PlatontModel PlatontModel::build(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.input_dim < 1) throw std::invalid_argument("PlatontModel: input_dim must be >= 1");
    PlatontModel m;
    m.cfg = cfg;
    std::vector<int> enc_dims{cfg.input_dim};
    enc_dims.insert(enc_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    enc_dims.push_back(cfg.latent_dim);
    std::vector<int> dec_dims(enc_dims.rbegin(), enc_dims.rend());
    for (int c = 0; c < 3; ++c) {
        m.enc[c] = Mlp::build(enc_dims, cfg.dropout, stream_seed(seed, 0x100 + c));
        m.dec[c] = Mlp::build(dec_dims, cfg.dropout, stream_seed(seed, 0x200 + c));
        m.att[c] = Attention::build(cfg.latent_dim, stream_seed(seed, 0x300 + c));
        m.scaler[c].mean.assign(cfg.input_dim, 0.0);
        m.scaler[c].scale.assign(cfg.input_dim, 1.0);
    }
    return m;
}

std::size_t PlatontModel::param_count() const {
    std::size_t n = 0;
    for (int c = 0; c < 3; ++c) n += enc[c].param_count();
    for (int c = 0; c < 3; ++c) n += dec[c].param_count();
    for (int c = 0; c < 3; ++c) n += att[c].param_count();
    return n;
}

namespace {

void flat_push(std::vector<double>& out, const Mlp& m) {
    for (const Dense& l : m.layers) {
        out.insert(out.end(), l.w.a.begin(), l.w.a.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
}

void flat_push(std::vector<double>& out, const Attention& a) {
    out.insert(out.end(), a.w.a.begin(), a.w.a.end());
    out.insert(out.end(), a.b.begin(), a.b.end());
}

std::size_t flat_pull(Mlp& m, const std::vector<double>& in, std::size_t at) {
    for (Dense& l : m.layers) {
        std::copy(in.begin() + at, in.begin() + at + l.w.a.size(), l.w.a.begin());
        at += l.w.a.size();
        std::copy(in.begin() + at, in.begin() + at + l.b.size(), l.b.begin());
        at += l.b.size();
    }
    return at;
}

std::size_t flat_pull(Attention& a, const std::vector<double>& in, std::size_t at) {
    std::copy(in.begin() + at, in.begin() + at + a.w.a.size(), a.w.a.begin());
    at += a.w.a.size();
    std::copy(in.begin() + at, in.begin() + at + a.b.size(), a.b.begin());
    return at + a.b.size();
}

} // namespace

std::vector<double> PlatontModel::to_flat() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (int c = 0; c < 3; ++c) flat_push(flat, enc[c]);
    for (int c = 0; c < 3; ++c) flat_push(flat, dec[c]);
    for (int c = 0; c < 3; ++c) flat_push(flat, att[c]);
    return flat;
}

void PlatontModel::from_flat(const std::vector<double>& flat) {
    if (flat.size() != param_count()) throw ShapeError("PlatontModel::from_flat: size mismatch");
    std::size_t at = 0;
    for (int c = 0; c < 3; ++c) at = flat_pull(enc[c], flat, at);
    for (int c = 0; c < 3; ++c) at = flat_pull(dec[c], flat, at);
    for (int c = 0; c < 3; ++c) at = flat_pull(att[c], flat, at);
}

ModelGrads ModelGrads::zeros_like(const PlatontModel& m) {
    ModelGrads g;
    for (int c = 0; c < 3; ++c) {
        g.enc[c] = m.enc[c];
        g.dec[c] = m.dec[c];
        g.att[c] = m.att[c];
        for (Dense& l : g.enc[c].layers) {
            std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        for (Dense& l : g.dec[c].layers) {
            std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
        std::fill(g.att[c].w.a.begin(), g.att[c].w.a.end(), 0.0);
        std::fill(g.att[c].b.begin(), g.att[c].b.end(), 0.0);
    }
    return g;
}

std::vector<double> ModelGrads::to_flat() const {
    std::vector<double> flat;
    for (int c = 0; c < 3; ++c) flat_push(flat, enc[c]);
    for (int c = 0; c < 3; ++c) flat_push(flat, dec[c]);
    for (int c = 0; c < 3; ++c) flat_push(flat, att[c]);
    return flat;
}

ModelForward model_forward(const PlatontModel& m, const std::array<Mat, 3>& x_std, bool train,
                           std::uint64_t mask_seed) {
    ModelForward f;
    for (int c = 0; c < 3; ++c)
        f.z[c] = encode(m.enc[c], x_std[c], train, stream_seed(mask_seed, 0x10 + c),
                        &f.enc_cache[c]);
    for (int c = 0; c < 3; ++c) {
        if (m.cfg.attention) {
            Aggregated agg =
                aggregate_latents(m.att[c], f.z[0], f.z[1], f.z[2], &f.att_cache[c]);
            f.z_agg[c] = std::move(agg.z_agg);
            f.att_w[c] = std::move(agg.weights);
        } else {
            f.z_agg[c] = f.z[c];
        }
        f.recon[c] = decode(m.dec[c], f.z_agg[c], train, stream_seed(mask_seed, 0x20 + c),
                            &f.dec_cache[c]);
    }
    return f;
}

ModelGrads model_backward(const PlatontModel& m, const ModelForward& fwd,
                          const std::array<Mat, 3>& d_recon,
                          const std::array<Mat, 3>& d_z_extra) {
    ModelGrads g = ModelGrads::zeros_like(m);
    std::array<Mat, 3> d_z;
    for (int c = 0; c < 3; ++c) d_z[c] = Mat(fwd.z[c].rows, fwd.z[c].cols);

    const std::array<const Mat*, 3> zs{&fwd.z[0], &fwd.z[1], &fwd.z[2]};
    for (int c = 0; c < 3; ++c) {
        Mat d_zagg = mlp_backward(m.dec[c], fwd.dec_cache[c], d_recon[c], g.dec[c]);
        if (m.cfg.attention) {
            aggregate_backward(m.att[c], fwd.att_cache[c], zs, d_zagg, d_z, g.att[c]);
        } else {
            for (std::size_t k = 0; k < d_zagg.a.size(); ++k) d_z[c].a[k] += d_zagg.a[k];
        }
    }
    for (int c = 0; c < 3; ++c) {
        if (d_z_extra[c].rows > 0)
            for (std::size_t k = 0; k < d_z[c].a.size(); ++k) d_z[c].a[k] += d_z_extra[c].a[k];
        mlp_backward(m.enc[c], fwd.enc_cache[c], d_z[c], g.enc[c]);
    }
    return g;
}

void save_checkpoint(const PlatontModel& m, const std::string& path) {
    nlohmann::ordered_json header;
    header["schema"] = "platont-ckpt-1";
    header["input_dim"] = m.cfg.input_dim;
    header["hidden"] = m.cfg.hidden;
    header["latent_dim"] = m.cfg.latent_dim;
    header["dropout"] = m.cfg.dropout;
    header["attention"] = m.cfg.attention;
    header["deviations"] = {{"batchnorm_replaced_by_input_standardization", true}};

    std::vector<double> payload = m.to_flat();
    for (int c = 0; c < 3; ++c) {
        payload.insert(payload.end(), m.scaler[c].mean.begin(), m.scaler[c].mean.end());
        payload.insert(payload.end(), m.scaler[c].scale.begin(), m.scaler[c].scale.end());
    }
    header["param_count"] = payload.size();

    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write("PLNTCKPT", 8);
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const std::uint64_t pcount = payload.size();
    out.write(reinterpret_cast<const char*>(&pcount), 8);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(double)));
}

PlatontModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "PLNTCKPT", 8) != 0)
        throw FormatError("bad checkpoint magic in " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint header: " + std::string(e.what()));
    }
    ModelConfig cfg;
    cfg.input_dim = header.at("input_dim").get<int>();
    cfg.hidden = header.at("hidden").get<std::vector<int>>();
    cfg.latent_dim = header.at("latent_dim").get<int>();
    cfg.dropout = header.at("dropout").get<double>();
    cfg.attention = header.at("attention").get<bool>();

    PlatontModel m = PlatontModel::build(cfg, 0);
    std::uint64_t pcount = 0;
    in.read(reinterpret_cast<char*>(&pcount), 8);
    std::vector<double> payload(pcount);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(pcount * sizeof(double)));
    if (!in) throw FormatError("truncated checkpoint payload in " + path);

    const std::size_t core = m.param_count();
    const std::size_t per_scaler = static_cast<std::size_t>(cfg.input_dim);
    if (pcount != core + 6 * per_scaler) throw FormatError("checkpoint parameter count mismatch");
    m.from_flat({payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(core)});
    std::size_t at = core;
    for (int c = 0; c < 3; ++c) {
        m.scaler[c].mean.assign(payload.begin() + at, payload.begin() + at + per_scaler);
        at += per_scaler;
        m.scaler[c].scale.assign(payload.begin() + at, payload.begin() + at + per_scaler);
        at += per_scaler;
    }
    return m;
}

} // namespace platont
