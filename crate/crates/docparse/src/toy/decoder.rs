//! Tiny autoregressive decoder with hand-written backprop, all in f64.
//!
//! Parameters live in one flat `Vec<f64>`; `Layout` names sub-ranges of
//! it. That keeps the optimizer and finite-difference checks trivial:
//! both just index the flat vector.
//!
//! Architecture: position 0 is a learned linear projection of the
//! raster cells, later positions are token + position embeddings.
//! Each block is pre-norm RMSNorm, causal multi-head attention, then
//! RMSNorm and a ReLU MLP with hidden width 4d. Final RMSNorm feeds an
//! untied vocabulary head.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::loss::LogitsBatch;

use super::ToyError;

const RMS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TinyDecoderConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub vocab: usize,
    /// Maximum positions including the conditioning slot.
    pub max_len: usize,
    /// Flattened raster length projected into position 0.
    pub input_cells: usize,
    /// Parameter init seed.
    pub seed: u64,
}

impl Default for TinyDecoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            num_layers: 1,
            num_heads: 2,
            vocab: super::vocab_size(32),
            max_len: 24,
            input_cells: 32 * 32,
            seed: 0,
        }
    }
}

impl TinyDecoderConfig {
    fn validate(&self) -> Result<(), ToyError> {
        let bad = |msg: &str| Err(ToyError::BadDecoderConfig(msg.into()));
        if self.embed_dim == 0 || self.num_layers == 0 || self.num_heads == 0 || self.input_cells == 0 {
            return bad("all dimensions must be positive");
        }
        if self.embed_dim % self.num_heads != 0 {
            return bad("embed_dim must divide evenly into num_heads");
        }
        if self.vocab < 2 {
            return bad("vocab must hold at least two tokens");
        }
        if self.max_len < 2 {
            return bad("max_len must cover the conditioning slot plus one token");
        }
        Ok(())
    }

    fn hidden(&self) -> usize {
        4 * self.embed_dim
    }
}

#[derive(Debug, Clone)]
struct LayerLayout {
    g_attn: Range<usize>,
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
    wo: Range<usize>,
    g_ffn: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    img_w: Range<usize>,
    img_b: Range<usize>,
    tok_emb: Range<usize>,
    pos_emb: Range<usize>,
    layers: Vec<LayerLayout>,
    g_final: Range<usize>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl Layout {
    fn new(cfg: &TinyDecoderConfig) -> Self {
        let d = cfg.embed_dim;
        let hid = cfg.hidden();
        let mut c = Cursor(0);
        let img_w = c.take(d * cfg.input_cells);
        let img_b = c.take(d);
        let tok_emb = c.take(cfg.vocab * d);
        let pos_emb = c.take(cfg.max_len * d);
        let layers = (0..cfg.num_layers)
            .map(|_| LayerLayout {
                g_attn: c.take(d),
                wq: c.take(d * d),
                wk: c.take(d * d),
                wv: c.take(d * d),
                wo: c.take(d * d),
                g_ffn: c.take(d),
                w1: c.take(hid * d),
                b1: c.take(hid),
                w2: c.take(d * hid),
                b2: c.take(d),
            })
            .collect();
        let g_final = c.take(d);
        let head_w = c.take(cfg.vocab * d);
        let head_b = c.take(cfg.vocab);
        Self { img_w, img_b, tok_emb, pos_emb, layers, g_final, head_w, head_b, total: c.0 }
    }
}

/// Forward-pass intermediates needed by `backward`.
pub struct Cache {
    len: usize,
    cells: Vec<f64>,
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    x_last: Vec<f64>,
    nf: Vec<f64>,
    rms_f: Vec<f64>,
}

struct LayerCache {
    x_in: Vec<f64>,
    n1: Vec<f64>,
    rms1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads x len x len attention weights, zero above the diagonal.
    attn: Vec<f64>,
    /// Concatenated head outputs before the output projection.
    ctx: Vec<f64>,
    x_mid: Vec<f64>,
    n2: Vec<f64>,
    rms2: Vec<f64>,
    h_act: Vec<f64>,
}

pub struct TinyDecoder {
    cfg: TinyDecoderConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

impl fmt::Debug for TinyDecoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TinyDecoder")
            .field("cfg", &self.cfg)
            .field("num_params", &self.params.len())
            .finish()
    }
}

impl TinyDecoder {
    pub fn new(cfg: TinyDecoderConfig) -> Result<Self, ToyError> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let d = cfg.embed_dim;
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fill = |r: &Range<usize>, scale: f64, p: &mut [f64], rng: &mut ChaCha8Rng| {
            for v in &mut p[r.clone()] {
                *v = rng.gen_range(-scale..scale);
            }
        };
        fill(&layout.img_w, 1.0 / (cfg.input_cells as f64).sqrt(), &mut params, &mut rng);
        fill(&layout.tok_emb, 0.1, &mut params, &mut rng);
        fill(&layout.pos_emb, 0.1, &mut params, &mut rng);
        let mat = 1.0 / (d as f64).sqrt();
        let mat_wide = 1.0 / (cfg.hidden() as f64).sqrt();
        for ll in &layout.layers {
            params[ll.g_attn.clone()].fill(1.0);
            params[ll.g_ffn.clone()].fill(1.0);
            fill(&ll.wq, mat, &mut params, &mut rng);
            fill(&ll.wk, mat, &mut params, &mut rng);
            fill(&ll.wv, mat, &mut params, &mut rng);
            fill(&ll.wo, mat, &mut params, &mut rng);
            fill(&ll.w1, mat, &mut params, &mut rng);
            fill(&ll.w2, mat_wide, &mut params, &mut rng);
        }
        params[layout.g_final.clone()].fill(1.0);
        fill(&layout.head_w, mat, &mut params, &mut rng);
        Ok(Self { cfg, layout, params })
    }

    pub fn cfg(&self) -> &TinyDecoderConfig {
        &self.cfg
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.layout.total]
    }

    /// Runs the model on `[image] ++ tokens` and returns per-position
    /// logits (batch 1, seq `tokens.len() + 1`) plus the cache for
    /// `backward`. Position j predicts the token after input j.
    pub fn forward(&self, cells: &[f64], tokens: &[u32]) -> Result<(LogitsBatch, Cache), ToyError> {
        let cfg = &self.cfg;
        let d = cfg.embed_dim;
        let hid = cfg.hidden();
        let heads = cfg.num_heads;
        let hd = d / heads;
        let len = tokens.len() + 1;
        if len > cfg.max_len {
            return Err(ToyError::SequenceTooLong { len, max: cfg.max_len });
        }
        if cells.len() != cfg.input_cells {
            return Err(ToyError::BadInput(format!(
                "expected {} raster cells, got {}",
                cfg.input_cells,
                cells.len()
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab) {
            return Err(ToyError::BadInput(format!("token {t} outside vocabulary of {}", cfg.vocab)));
        }
        let p = &self.params;
        let lay = &self.layout;

        let mut x = vec![0.0; len * d];
        x[..d].copy_from_slice(&p[lay.img_b.clone()]);
        matvec_acc(&p[lay.img_w.clone()], cells, &mut x[..d], d, cfg.input_cells);
        let tok_emb = &p[lay.tok_emb.clone()];
        for (j, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            x[(j + 1) * d..(j + 2) * d].copy_from_slice(&tok_emb[t * d..(t + 1) * d]);
        }
        let pos_emb = &p[lay.pos_emb.clone()];
        for (xv, pv) in x.iter_mut().zip(&pos_emb[..len * d]) {
            *xv += pv;
        }

        let mut layers = Vec::with_capacity(cfg.num_layers);
        for ll in &lay.layers {
            let x_in = x;
            let (n1, rms1) = rms_forward(&x_in, &p[ll.g_attn.clone()], len, d);
            let mut q = vec![0.0; len * d];
            let mut k = vec![0.0; len * d];
            let mut v = vec![0.0; len * d];
            for i in 0..len {
                let ni = &n1[i * d..(i + 1) * d];
                matvec_acc(&p[ll.wq.clone()], ni, &mut q[i * d..(i + 1) * d], d, d);
                matvec_acc(&p[ll.wk.clone()], ni, &mut k[i * d..(i + 1) * d], d, d);
                matvec_acc(&p[ll.wv.clone()], ni, &mut v[i * d..(i + 1) * d], d, d);
            }
            let scale = 1.0 / (hd as f64).sqrt();
            let mut attn = vec![0.0; heads * len * len];
            let mut ctx = vec![0.0; len * d];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..len {
                    let qi = &q[i * d + off..i * d + off + hd];
                    let row = &mut attn[(h * len + i) * len..(h * len + i) * len + i + 1];
                    let mut peak = f64::NEG_INFINITY;
                    for (j, rv) in row.iter_mut().enumerate() {
                        let kj = &k[j * d + off..j * d + off + hd];
                        let s: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        *rv = s;
                        peak = peak.max(s);
                    }
                    let mut z = 0.0;
                    for rv in row.iter_mut() {
                        *rv = (*rv - peak).exp();
                        z += *rv;
                    }
                    for (j, rv) in row.iter_mut().enumerate() {
                        *rv /= z;
                        let a = *rv;
                        let vj = &v[j * d + off..j * d + off + hd];
                        for (c, vc) in vj.iter().enumerate() {
                            ctx[i * d + off + c] += a * vc;
                        }
                    }
                }
            }
            let mut x_mid = x_in.clone();
            for i in 0..len {
                matvec_acc(&p[ll.wo.clone()], &ctx[i * d..(i + 1) * d], &mut x_mid[i * d..(i + 1) * d], d, d);
            }
            let (n2, rms2) = rms_forward(&x_mid, &p[ll.g_ffn.clone()], len, d);
            let mut h_act = vec![0.0; len * hid];
            for i in 0..len {
                let hrow = &mut h_act[i * hid..(i + 1) * hid];
                hrow.copy_from_slice(&p[ll.b1.clone()]);
                matvec_acc(&p[ll.w1.clone()], &n2[i * d..(i + 1) * d], hrow, hid, d);
                for hv in hrow.iter_mut() {
                    if *hv < 0.0 {
                        *hv = 0.0;
                    }
                }
            }
            let mut x_out = x_mid.clone();
            for i in 0..len {
                let yrow = &mut x_out[i * d..(i + 1) * d];
                for (yv, bv) in yrow.iter_mut().zip(&p[ll.b2.clone()]) {
                    *yv += bv;
                }
                matvec_acc(&p[ll.w2.clone()], &h_act[i * hid..(i + 1) * hid], yrow, d, hid);
            }
            layers.push(LayerCache { x_in, n1, rms1, q, k, v, attn, ctx, x_mid, n2, rms2, h_act });
            x = x_out;
        }

        let x_last = x;
        let (nf, rms_f) = rms_forward(&x_last, &p[lay.g_final.clone()], len, d);
        let mut logits = vec![0.0; len * cfg.vocab];
        for i in 0..len {
            let lrow = &mut logits[i * cfg.vocab..(i + 1) * cfg.vocab];
            lrow.copy_from_slice(&p[lay.head_b.clone()]);
            matvec_acc(&p[lay.head_w.clone()], &nf[i * d..(i + 1) * d], lrow, cfg.vocab, d);
        }
        let batch = LogitsBatch::new(1, len, cfg.vocab, logits)?;
        let cache = Cache {
            len,
            cells: cells.to_vec(),
            tokens: tokens.to_vec(),
            layers,
            x_last,
            nf,
            rms_f,
        };
        Ok((batch, cache))
    }

    /// Accumulates parameter gradients for d(loss)/d(logits) into
    /// `grads`, which must have `num_params()` entries. The caller owns
    /// zeroing between steps.
    pub fn backward(&self, cache: &Cache, dlogits: &LogitsBatch, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.layout.total, "gradient buffer length");
        let cfg = &self.cfg;
        let d = cfg.embed_dim;
        let hid = cfg.hidden();
        let heads = cfg.num_heads;
        let hd = d / heads;
        let len = cache.len;
        let p = &self.params;
        let lay = &self.layout;

        // vocabulary head
        let mut dnf = vec![0.0; len * d];
        {
            let db = &mut grads[lay.head_b.clone()];
            for i in 0..len {
                for (bv, g) in db.iter_mut().zip(dlogits.row(0, i)) {
                    *bv += g;
                }
            }
        }
        {
            let dw = &mut grads[lay.head_w.clone()];
            for i in 0..len {
                matvec_bwd(
                    &p[lay.head_w.clone()],
                    &cache.nf[i * d..(i + 1) * d],
                    dlogits.row(0, i),
                    dw,
                    &mut dnf[i * d..(i + 1) * d],
                    cfg.vocab,
                    d,
                );
            }
        }
        let mut dx = vec![0.0; len * d];
        rms_backward(
            &cache.x_last,
            &p[lay.g_final.clone()],
            &cache.rms_f,
            &dnf,
            &mut dx,
            &mut grads[lay.g_final.clone()],
            len,
            d,
        );

        for (ll, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP: x_out = x_mid + W2 relu(W1 n2 + b1) + b2
            let mut dh_act = vec![0.0; len * hid];
            {
                let db2 = &mut grads[ll.b2.clone()];
                for i in 0..len {
                    for (bv, g) in db2.iter_mut().zip(&dx[i * d..(i + 1) * d]) {
                        *bv += g;
                    }
                }
            }
            {
                let dw2 = &mut grads[ll.w2.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.w2.clone()],
                        &lc.h_act[i * hid..(i + 1) * hid],
                        &dx[i * d..(i + 1) * d],
                        dw2,
                        &mut dh_act[i * hid..(i + 1) * hid],
                        d,
                        hid,
                    );
                }
            }
            for (dh, &hv) in dh_act.iter_mut().zip(&lc.h_act) {
                if hv <= 0.0 {
                    *dh = 0.0;
                }
            }
            let mut dn2 = vec![0.0; len * d];
            {
                let db1 = &mut grads[ll.b1.clone()];
                for i in 0..len {
                    for (bv, g) in db1.iter_mut().zip(&dh_act[i * hid..(i + 1) * hid]) {
                        *bv += g;
                    }
                }
            }
            {
                let dw1 = &mut grads[ll.w1.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.w1.clone()],
                        &lc.n2[i * d..(i + 1) * d],
                        &dh_act[i * hid..(i + 1) * hid],
                        dw1,
                        &mut dn2[i * d..(i + 1) * d],
                        hid,
                        d,
                    );
                }
            }
            // residual passes dx straight to x_mid; the norm path adds to it
            let mut dx_mid = dx;
            rms_backward(
                &lc.x_mid,
                &p[ll.g_ffn.clone()],
                &lc.rms2,
                &dn2,
                &mut dx_mid,
                &mut grads[ll.g_ffn.clone()],
                len,
                d,
            );

            // attention: x_mid = x_in + Wo ctx
            let mut dctx = vec![0.0; len * d];
            {
                let dwo = &mut grads[ll.wo.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.wo.clone()],
                        &lc.ctx[i * d..(i + 1) * d],
                        &dx_mid[i * d..(i + 1) * d],
                        dwo,
                        &mut dctx[i * d..(i + 1) * d],
                        d,
                        d,
                    );
                }
            }
            let mut dq = vec![0.0; len * d];
            let mut dk = vec![0.0; len * d];
            let mut dv = vec![0.0; len * d];
            let scale = 1.0 / (hd as f64).sqrt();
            let mut da = vec![0.0; len];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..len {
                    let arow = &lc.attn[(h * len + i) * len..(h * len + i) * len + i + 1];
                    let dci = &dctx[i * d + off..i * d + off + hd];
                    for (j, (&a, dav)) in arow.iter().zip(&mut da).enumerate() {
                        let vj = &lc.v[j * d + off..j * d + off + hd];
                        *dav = dci.iter().zip(vj).map(|(g, vc)| g * vc).sum();
                        let dvj = &mut dv[j * d + off..j * d + off + hd];
                        for (dvc, g) in dvj.iter_mut().zip(dci) {
                            *dvc += a * g;
                        }
                    }
                    // softmax jacobian: ds_j = a_j (da_j - sum_k a_k da_k)
                    let inner: f64 = arow.iter().zip(&da).map(|(a, g)| a * g).sum();
                    let qi = &lc.q[i * d + off..i * d + off + hd];
                    for (j, (&a, &dav)) in arow.iter().zip(&da[..=i]).enumerate() {
                        let ds = a * (dav - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = &lc.k[j * d + off..j * d + off + hd];
                        let dqi = &mut dq[i * d + off..i * d + off + hd];
                        for (dqc, kc) in dqi.iter_mut().zip(kj) {
                            *dqc += ds * kc;
                        }
                        let dkj = &mut dk[j * d + off..j * d + off + hd];
                        for (dkc, qc) in dkj.iter_mut().zip(qi) {
                            *dkc += ds * qc;
                        }
                    }
                }
            }
            let mut dn1 = vec![0.0; len * d];
            {
                let dwq = &mut grads[ll.wq.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.wq.clone()],
                        &lc.n1[i * d..(i + 1) * d],
                        &dq[i * d..(i + 1) * d],
                        dwq,
                        &mut dn1[i * d..(i + 1) * d],
                        d,
                        d,
                    );
                }
            }
            {
                let dwk = &mut grads[ll.wk.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.wk.clone()],
                        &lc.n1[i * d..(i + 1) * d],
                        &dk[i * d..(i + 1) * d],
                        dwk,
                        &mut dn1[i * d..(i + 1) * d],
                        d,
                        d,
                    );
                }
            }
            {
                let dwv = &mut grads[ll.wv.clone()];
                for i in 0..len {
                    matvec_bwd(
                        &p[ll.wv.clone()],
                        &lc.n1[i * d..(i + 1) * d],
                        &dv[i * d..(i + 1) * d],
                        dwv,
                        &mut dn1[i * d..(i + 1) * d],
                        d,
                        d,
                    );
                }
            }
            let mut dx_in = dx_mid;
            rms_backward(
                &lc.x_in,
                &p[ll.g_attn.clone()],
                &lc.rms1,
                &dn1,
                &mut dx_in,
                &mut grads[ll.g_attn.clone()],
                len,
                d,
            );
            dx = dx_in;
        }

        // embeddings and the image projection
        {
            let dpos = &mut grads[lay.pos_emb.clone()];
            for (pv, g) in dpos[..len * d].iter_mut().zip(&dx) {
                *pv += g;
            }
        }
        {
            let dtok = &mut grads[lay.tok_emb.clone()];
            for (j, &t) in cache.tokens.iter().enumerate() {
                let t = t as usize;
                let row = &mut dtok[t * d..(t + 1) * d];
                for (rv, g) in row.iter_mut().zip(&dx[(j + 1) * d..(j + 2) * d]) {
                    *rv += g;
                }
            }
        }
        {
            let dib = &mut grads[lay.img_b.clone()];
            for (bv, g) in dib.iter_mut().zip(&dx[..d]) {
                *bv += g;
            }
        }
        {
            let diw = &mut grads[lay.img_w.clone()];
            for o in 0..d {
                let g = dx[o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut diw[o * cfg.input_cells..(o + 1) * cfg.input_cells];
                for (rv, cv) in row.iter_mut().zip(&cache.cells) {
                    *rv += g * cv;
                }
            }
        }
    }

    /// Greedy decode starting from a task token. Returns the generated
    /// tokens (task excluded), including the end token when one was
    /// produced within the length budget.
    pub fn greedy_decode(&self, cells: &[f64], task: u32, eos: u32) -> Result<Vec<u32>, ToyError> {
        let mut toks = vec![task];
        while toks.len() + 1 < self.cfg.max_len {
            let (logits, _) = self.forward(cells, &toks)?;
            let next = argmax(logits.row(0, toks.len())) as u32;
            toks.push(next);
            if next == eos {
                break;
            }
        }
        Ok(toks.split_off(1))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("non-empty row")
}

/// y[o] += sum_i w[o * in_d + i] * x[i]
fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64], out_d: usize, in_d: usize) {
    for (o, yv) in y.iter_mut().enumerate().take(out_d) {
        let wrow = &w[o * in_d..(o + 1) * in_d];
        *yv += wrow.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// dw[o][i] += dy[o] x[i]; dx[i] += w[o][i] dy[o]
fn matvec_bwd(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], dx: &mut [f64], out_d: usize, in_d: usize) {
    for o in 0..out_d {
        let g = dy[o];
        if g == 0.0 {
            continue;
        }
        let wrow = &w[o * in_d..(o + 1) * in_d];
        let dwrow = &mut dw[o * in_d..(o + 1) * in_d];
        for i in 0..in_d {
            dwrow[i] += g * x[i];
            dx[i] += wrow[i] * g;
        }
    }
}

/// Per-position RMSNorm with gain: y_c = g_c x_c / rms(x).
fn rms_forward(x: &[f64], gain: &[f64], len: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; len * d];
    let mut rms = vec![0.0; len];
    for i in 0..len {
        let xi = &x[i * d..(i + 1) * d];
        let ms = xi.iter().map(|v| v * v).sum::<f64>() / d as f64;
        let r = (ms + RMS_EPS).sqrt();
        rms[i] = r;
        for ((yv, xv), gv) in y[i * d..(i + 1) * d].iter_mut().zip(xi).zip(gain) {
            *yv = gv * xv / r;
        }
    }
    (y, rms)
}

/// dx_k += dy_k g_k / r - x_k * sum_c(dy_c g_c x_c) / (d r^3)
fn rms_backward(
    x: &[f64],
    gain: &[f64],
    rms: &[f64],
    dy: &[f64],
    dx: &mut [f64],
    dgain: &mut [f64],
    len: usize,
    d: usize,
) {
    for i in 0..len {
        let xi = &x[i * d..(i + 1) * d];
        let dyi = &dy[i * d..(i + 1) * d];
        let r = rms[i];
        let s: f64 = dyi.iter().zip(gain).zip(xi).map(|((g, gn), xv)| g * gn * xv).sum();
        let s = s / (d as f64 * r * r * r);
        for (c, (dxv, (&dyv, &xv))) in dx[i * d..(i + 1) * d].iter_mut().zip(dyi.iter().zip(xi)).enumerate() {
            *dxv += dyv * gain[c] / r - xv * s;
            dgain[c] += dyv * xv / r;
        }
    }
}
