#include "pwdlact/unet.hpp"

#include "pwdlact/rng.hpp"

namespace pwdlact {

void ResBlock::init(int cin_, int cout_, int temb_dim, bool wavelet, std::mt19937_64& rng) {
    cin = cin_;
    cout = cout_;
    use_wavelet = wavelet;
    gn1.init(cin, 8);
    conv1.init(cin, cout, 3, 1, 1, rng);
    temb_proj.init(temb_dim, cout, rng);
    gn2.init(cout, 8);
    if (use_wavelet)
        wt.init(cout, 3, rng);
    else
        conv2.init(cout, cout, 3, 1, 1, rng);
    if (cin != cout) skip.init(cin, cout, 1, 1, 0, rng);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) {
    Tensor h = conv1.forward(act1.forward(gn1.forward(x)));
    Tensor te = temb_proj.forward(temb);
    const int n = h.dim(0), hw = h.dim(2) * h.dim(3);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < cout; ++c) {
            const float add = te.v[static_cast<size_t>(i) * cout + c];
            float* p = h.data() + (static_cast<size_t>(i) * cout + c) * hw;
            for (int j = 0; j < hw; ++j) p[j] += add;
        }
    Tensor a2 = act2.forward(gn2.forward(h));
    Tensor m = use_wavelet ? wt.forward(a2) : conv2.forward(a2);
    add_inplace(m, cin == cout ? x : skip.forward(x));
    return m;
}

Tensor ResBlock::backward(const Tensor& dy, Tensor& dtemb) {
    Tensor da2 = use_wavelet ? wt.backward(dy) : conv2.backward(dy);
    Tensor dh = gn2.backward(act2.backward(da2));

    const int n = dh.dim(0), hw = dh.dim(2) * dh.dim(3);
    Tensor dte({n, cout});
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < cout; ++c) {
            double s = 0.0;
            const float* p = dh.data() + (static_cast<size_t>(i) * cout + c) * hw;
            for (int j = 0; j < hw; ++j) s += p[j];
            dte.v[static_cast<size_t>(i) * cout + c] = static_cast<float>(s);
        }
    add_inplace(dtemb, temb_proj.backward(dte));

    Tensor dx = gn1.backward(act1.backward(conv1.backward(dh)));
    add_inplace(dx, cin == cout ? dy : skip.backward(dy));
    return dx;
}

void ResBlock::params(std::vector<Param>& out, const std::string& prefix) {
    gn1.params(out, prefix + ".gn1");
    conv1.params(out, prefix + ".conv1");
    temb_proj.params(out, prefix + ".temb");
    gn2.params(out, prefix + ".gn2");
    if (use_wavelet)
        wt.params(out, prefix + ".wt");
    else
        conv2.params(out, prefix + ".conv2");
    if (cin != cout) skip.params(out, prefix + ".skip");
}

void DenoiserModel::init(unsigned long long seed, bool wavelet, int base_width) {
    if (base_width < 8 || base_width % 8 != 0)
        throw rejected_input("denoiser: base width must be a positive multiple of 8");
    base = base_width;
    temb_dim = 64;
    temb_hidden = 2 * temb_dim;
    use_wavelet = wavelet;
    auto rng = make_rng(mix_seed(seed, 0x756e6574ULL));

    stem.init(2, base, 3, 1, 1, rng);
    temb_fc1.init(temb_dim, temb_hidden, rng);
    temb_fc2.init(temb_hidden, temb_hidden, rng);
    enc1.init(base, base, temb_hidden, wavelet, rng);
    down1.init(base, base, 3, 2, 1, rng);
    enc2.init(base, base, temb_hidden, wavelet, rng);
    down2.init(base, 2 * base, 3, 2, 1, rng);
    enc3.init(2 * base, 2 * base, temb_hidden, wavelet, rng);
    dec2.init(3 * base, base, temb_hidden, wavelet, rng);
    dec1.init(2 * base, base, temb_hidden, wavelet, rng);
    out_gn.init(base, 8);
    out_conv.init(base, 1, 3, 1, 1, rng, true);
}

Tensor DenoiserModel::forward(const Tensor& x, const Tensor& prior, const std::vector<float>& t) {
    if (x.shape.size() != 4 || x.dim(1) != 1) throw rejected_input("denoiser: input must be [N,1,H,W]");
    if (!x.same_shape(prior)) throw rejected_input("denoiser: prior shape mismatch");
    if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0)
        throw rejected_input("denoiser: spatial size must be divisible by 8");
    if (static_cast<int>(t.size()) != x.dim(0))
        throw rejected_input("denoiser: one timestep per sample required");
    n_cache = x.dim(0);

    Tensor temb = temb_fc2.forward(temb_act.forward(temb_fc1.forward(timestep_embedding(t, temb_dim))));

    Tensor h0 = stem.forward(concat_channels(x, prior));
    Tensor e1 = enc1.forward(h0, temb);
    Tensor e2 = enc2.forward(down1.forward(e1), temb);
    Tensor e3 = enc3.forward(down2.forward(e2), temb);
    Tensor o2 = dec2.forward(concat_channels(up1.forward(e3), e2), temb);
    Tensor o1 = dec1.forward(concat_channels(up2.forward(o2), e1), temb);
    return out_conv.forward(out_act.forward(out_gn.forward(o1)));
}

void DenoiserModel::backward(const Tensor& dy) {
    Tensor dtemb({n_cache, temb_hidden});

    Tensor do1 = out_gn.backward(out_act.backward(out_conv.backward(dy)));
    Tensor dc1 = dec1.backward(do1, dtemb);
    Tensor du2, de1a;
    split_channels(dc1, base, du2, de1a);
    Tensor dc2 = dec2.backward(up2.backward(du2), dtemb);
    Tensor du1, de2a;
    split_channels(dc2, 2 * base, du1, de2a);
    Tensor dd2 = enc3.backward(up1.backward(du1), dtemb);
    Tensor de2 = down2.backward(dd2);
    add_inplace(de2, de2a);
    Tensor dd1 = enc2.backward(de2, dtemb);
    Tensor de1 = down1.backward(dd1);
    add_inplace(de1, de1a);
    stem.backward(enc1.backward(de1, dtemb));

    temb_fc1.backward(temb_act.backward(temb_fc2.backward(dtemb)));
}

void DenoiserModel::params(std::vector<Param>& out) {
    stem.params(out, "stem");
    temb_fc1.params(out, "temb_fc1");
    temb_fc2.params(out, "temb_fc2");
    enc1.params(out, "enc1");
    down1.params(out, "down1");
    enc2.params(out, "enc2");
    down2.params(out, "down2");
    enc3.params(out, "enc3");
    dec2.params(out, "dec2");
    dec1.params(out, "dec1");
    out_gn.params(out, "out_gn");
    out_conv.params(out, "out_conv");
}

size_t DenoiserModel::param_count() {
    std::vector<Param> ps;
    params(ps);
    size_t n = 0;
    for (const auto& p : ps) n += p.w->size();
    return n;
}

}  // namespace pwdlact
