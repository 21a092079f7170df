//! Cross-attention from image tokens (queries) to frozen geometric-prior
//! tokens (keys and values).

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Bound, Graph, ParamId, ParamSet, Tensor, Var};

/// Which keys a query may attend to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyScope {
    /// One key set spanning every camera.
    #[default]
    Joint,
    /// Only keys from the query's own camera.
    PerCamera,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub enabled: bool,
    pub residual: bool,
    pub heads: usize,
    pub key_scope: KeyScope,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            enabled: true,
            residual: true,
            heads: 4,
            key_scope: KeyScope::Joint,
        }
    }
}

/// Projection handles into a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub heads: usize,
    pub head_dim: usize,
    pub prior_dim: usize,
}

impl AttentionParams {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        channels: usize,
        prior_dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::Config(format!(
                "{channels} channels cannot be split into {heads} heads"
            )));
        }
        if prior_dim == 0 {
            return Err(Error::Config("prior feature width must be positive".into()));
        }
        let sc = (1.0 / channels as f64).sqrt();
        let sg = (1.0 / prior_dim as f64).sqrt();
        Ok(AttentionParams {
            w_q: params.add_normal("fusion.w_q", &[channels, channels], sc, rng),
            w_k: params.add_normal("fusion.w_k", &[prior_dim, channels], sg, rng),
            w_v: params.add_normal("fusion.w_v", &[prior_dim, channels], sg, rng),
            w_o: params.add_normal("fusion.w_o", &[channels, channels], sc, rng),
            heads,
            head_dim: channels / heads,
            prior_dim,
        })
    }

    pub fn channels(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn param_count(channels: usize, prior_dim: usize) -> usize {
        2 * channels * channels + 2 * prior_dim * channels
    }
}

/// Fused features and the per-head attention weights that produced them.
pub struct FusionOutput {
    pub features: Var,
    /// One `[queries × keys]` map per head; empty when fusion is disabled.
    pub attention: Vec<Var>,
}

fn check_inputs(g: &Graph, f_hat: Var, prior: Var, ap: &AttentionParams) -> Result<(usize, usize)> {
    let (n, c) = g.value(f_hat).dims2()?;
    let (m, cg) = g.value(prior).dims2()?;
    if n == 0 || m == 0 {
        return Err(Error::Dimension(format!("fusion needs tokens, got {n} queries and {m} keys")));
    }
    if c != ap.channels() {
        return Err(Error::Dimension(format!(
            "query width {c} does not match {} heads of {}",
            ap.heads, ap.head_dim
        )));
    }
    if cg != ap.prior_dim {
        return Err(Error::Dimension(format!(
            "prior width {cg} does not match key/value input width {}",
            ap.prior_dim
        )));
    }
    Ok((n, m))
}

/// Additive mask restricting each query to keys of its own camera.
fn camera_mask(n: usize, m: usize, cameras: usize) -> Result<Tensor> {
    if cameras == 0 || n % cameras != 0 || m % cameras != 0 {
        return Err(Error::Dimension(format!(
            "{n} queries and {m} keys do not split evenly over {cameras} cameras"
        )));
    }
    let (qn, kn) = (n / cameras, m / cameras);
    let mut data = vec![-1e9; n * m];
    for i in 0..n {
        let cam = i / qn;
        for j in cam * kn..(cam + 1) * kn {
            data[i * m + j] = 0.0;
        }
    }
    Tensor::new(vec![n, m], data)
}

/// Attention weights per head, `softmax(Q Kᵀ / √d)` over keys.
fn attention_weights(
    g: &mut Graph,
    f_hat: Var,
    prior: Var,
    ap: &AttentionParams,
    p: &Bound,
    scope: KeyScope,
    cameras: usize,
) -> Result<(Vec<Var>, Var)> {
    let (n, m) = check_inputs(g, f_hat, prior, ap)?;
    let q = g.matmul(f_hat, p.var(ap.w_q))?;
    let k = g.matmul(prior, p.var(ap.w_k))?;
    let v = g.matmul(prior, p.var(ap.w_v))?;
    let mask = match scope {
        KeyScope::Joint => None,
        KeyScope::PerCamera => Some(g.constant(camera_mask(n, m, cameras)?)),
    };
    let inv = 1.0 / (ap.head_dim as f64).sqrt();
    let mut maps = Vec::with_capacity(ap.heads);
    for h in 0..ap.heads {
        let qh = g.slice_cols(q, h * ap.head_dim, ap.head_dim)?;
        let kh = g.slice_cols(k, h * ap.head_dim, ap.head_dim)?;
        let s = g.matmul_nt(qh, kh)?;
        let mut s = g.scale(s, inv);
        if let Some(mk) = mask {
            s = g.add(s, mk)?;
        }
        maps.push(g.softmax(s, 1)?);
    }
    Ok((maps, v))
}

/// Fuse prior features into the query tokens. `cameras` is only used by
/// [`KeyScope::PerCamera`].
pub fn fuse(
    g: &mut Graph,
    f_hat: Var,
    prior: Var,
    ap: Option<&AttentionParams>,
    p: &Bound,
    cfg: &FusionConfig,
    cameras: usize,
) -> Result<FusionOutput> {
    if !cfg.enabled {
        return Ok(FusionOutput {
            features: f_hat,
            attention: Vec::new(),
        });
    }
    let ap = ap.ok_or_else(|| Error::Contract("fusion is enabled but has no parameters".into()))?;
    let (maps, v) = attention_weights(g, f_hat, prior, ap, p, cfg.key_scope, cameras)?;
    let mut heads = Vec::with_capacity(ap.heads);
    for (h, a) in maps.iter().enumerate() {
        let vh = g.slice_cols(v, h * ap.head_dim, ap.head_dim)?;
        heads.push(g.matmul(*a, vh)?);
    }
    let o = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    let o = g.matmul(o, p.var(ap.w_o))?;
    let features = if cfg.residual { g.add(f_hat, o)? } else { o };
    Ok(FusionOutput {
        features,
        attention: maps,
    })
}

/// Attention weights as plain tensors, one `[queries × keys]` per head.
pub fn attention_map(
    f_hat: &Tensor,
    prior: &Tensor,
    ap: &AttentionParams,
    params: &ParamSet,
    scope: KeyScope,
    cameras: usize,
) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let f = g.constant(f_hat.clone());
    let k = g.constant(prior.clone());
    let (maps, _) = attention_weights(&mut g, f, k, ap, &p, scope, cameras)?;
    Ok(maps.into_iter().map(|m| g.value(m).clone()).collect())
}

/// Write maps as `head,query,key,weight` rows.
pub fn write_attention_csv(path: &Path, maps: &[Tensor]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "head,query,key,weight").map_err(io)?;
    for (h, m) in maps.iter().enumerate() {
        let (n, k) = m.dims2()?;
        for i in 0..n {
            for j in 0..k {
                writeln!(w, "{h},{i},{j},{:e}", m.get2(i, j)).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Read maps written by [`write_attention_csv`].
pub fn read_attention_csv(path: &Path) -> Result<Vec<Tensor>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("head,query,key,weight") {
        return Err(Error::format(path, "missing attention header"));
    }
    let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::format(path, format!("bad row {}: {line}", ln + 2));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    let heads = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let n = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let k = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
    if rows.len() != heads * n * k {
        return Err(Error::format(path, "attention table is not dense"));
    }
    let mut maps = vec![Tensor::zeros(&[n, k]); heads];
    for (h, i, j, w) in rows {
        maps[h].data_mut()[i * k + j] = w;
    }
    Ok(maps)
}
