//! Residual evolution-operator network. Each block advances a state by a time
//! lag d via u + d*N(u, feature(d)); K blocks compose left to right, each
//! receiving d/K. Identity at zero lag holds by construction, which is the
//! architectural counterpart of the semigroup identity property.
//!
//! The multiplicative skip factor is always the raw (physical) lag, so the
//! identity property survives data normalization; only the *feature* fed to
//! the inner MLP goes through the variant transform (identity, or -log10 for
//! lag ranges spanning several decades) followed by an affine map taken from
//! the dataset's lag channel. See `DeltaFeatureMap`.

use crate::error::{Error, Result};
use crate::mlp::{mlp_backprop, mlp_forward, MlpParams, MlpTape};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockVariant {
    /// Feature = lag itself. Accepts any lag >= 0.
    Standard,
    /// Feature = -log10(lag). Requires lag > 0; made for multiscale lag data.
    Multiscale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// Every block owns its own parameters.
    Recursive,
    /// One parameter set shared by all blocks; gradients accumulate across
    /// block applications.
    Recurrent,
}

/// Affine map applied to the variant-transformed lag before it enters the
/// MLP input. Datasets supply the map that sends their lag channel to
/// [-1, 1]; the default is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaFeatureMap {
    pub scale: f64,
    pub offset: f64,
}

impl Default for DeltaFeatureMap {
    fn default() -> Self {
        DeltaFeatureMap { scale: 1.0, offset: 0.0 }
    }
}

impl DeltaFeatureMap {
    pub fn apply(&self, repr: f64) -> f64 {
        self.scale * repr + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsgNet {
    state_dim: usize,
    num_blocks: usize,
    variant: BlockVariant,
    sharing: Sharing,
    /// One entry per block for `Recursive`, a single shared entry for
    /// `Recurrent`.
    blocks: Vec<MlpParams>,
}

impl OsgNet {
    /// Glorot-initialized network. Every block is an MLP from state_dim + 1
    /// inputs (state and lag feature) to state_dim outputs.
    pub fn new<R: Rng>(
        state_dim: usize,
        hidden: &[usize],
        num_blocks: usize,
        variant: BlockVariant,
        sharing: Sharing,
        rng: &mut R,
    ) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Shape("state dimension must be positive".into()));
        }
        if num_blocks == 0 {
            return Err(Error::Shape("need at least one block".into()));
        }
        let mut widths = vec![state_dim + 1];
        widths.extend_from_slice(hidden);
        widths.push(state_dim);
        let stored = match sharing {
            Sharing::Recursive => num_blocks,
            Sharing::Recurrent => 1,
        };
        let blocks = (0..stored)
            .map(|_| MlpParams::glorot(&widths, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(OsgNet { state_dim, num_blocks, variant, sharing, blocks })
    }

    /// Wraps existing block parameters, validating the in/out widths.
    pub fn from_blocks(
        state_dim: usize,
        blocks: Vec<MlpParams>,
        num_blocks: usize,
        variant: BlockVariant,
        sharing: Sharing,
    ) -> Result<Self> {
        let expected = match sharing {
            Sharing::Recursive => num_blocks,
            Sharing::Recurrent => 1,
        };
        if blocks.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} stored blocks, got {}",
                blocks.len()
            )));
        }
        if num_blocks == 0 {
            return Err(Error::Shape("need at least one block".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.input_dim() != state_dim + 1 || b.output_dim() != state_dim {
                return Err(Error::Shape(format!(
                    "block {i} maps {}->{}, expected {}->{}",
                    b.input_dim(),
                    b.output_dim(),
                    state_dim + 1,
                    state_dim
                )));
            }
        }
        Ok(OsgNet { state_dim, num_blocks, variant, sharing, blocks })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn variant(&self) -> BlockVariant {
        self.variant
    }

    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    /// Parameters applied at block position `i` (recurrent nets map every
    /// position to the single shared set).
    pub fn block_at(&self, i: usize) -> &MlpParams {
        match self.sharing {
            Sharing::Recursive => &self.blocks[i],
            Sharing::Recurrent => &self.blocks[0],
        }
    }

    pub fn stored_blocks(&self) -> &[MlpParams] {
        &self.blocks
    }

    pub fn stored_blocks_mut(&mut self) -> &mut [MlpParams] {
        &mut self.blocks
    }

    pub fn replace_block(&mut self, i: usize, params: MlpParams) {
        self.blocks[i] = params;
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.num_params()).sum()
    }

    pub fn zero_grads(&self) -> Vec<MlpParams> {
        self.blocks.iter().map(|b| b.zeros_like()).collect()
    }
}

fn check_delta(variant: BlockVariant, delta: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::InvalidDelta { value: delta, reason: "not finite".into() });
    }
    match variant {
        BlockVariant::Standard if delta < 0.0 => Err(Error::InvalidDelta {
            value: delta,
            reason: "standard blocks need a nonnegative lag".into(),
        }),
        BlockVariant::Multiscale if delta <= 0.0 => Err(Error::InvalidDelta {
            value: delta,
            reason: "multiscale blocks need a strictly positive lag (log10 feature)".into(),
        }),
        _ => Ok(()),
    }
}

fn lag_repr(variant: BlockVariant, d: f64) -> f64 {
    match variant {
        BlockVariant::Standard => d,
        BlockVariant::Multiscale => -d.log10(),
    }
}

/// d(repr)/d(lag).
fn lag_repr_deriv(variant: BlockVariant, d: f64) -> f64 {
    match variant {
        BlockVariant::Standard => 1.0,
        BlockVariant::Multiscale => -1.0 / (d * std::f64::consts::LN_10),
    }
}

/// Single-block forward with the identity feature map, for direct use and
/// for spelling out what one block computes: u + d * N(concat(u, feature)).
pub fn osg_block_forward(
    block: &MlpParams,
    u: &[f64],
    delta: f64,
    variant: BlockVariant,
) -> Result<Vec<f64>> {
    check_delta(variant, delta)?;
    let feature = lag_repr(variant, delta);
    let mut input = Vec::with_capacity(u.len() + 1);
    input.extend_from_slice(u);
    input.push(feature);
    let (y, _) = mlp_forward(block, &input)?;
    if delta == 0.0 {
        // Exact identity, bit for bit: adding 0.0*y would flip -0.0 to +0.0.
        return Ok(u.to_vec());
    }
    let mut out = u.to_vec();
    for (o, yi) in out.iter_mut().zip(&y) {
        *o += delta * yi;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct BlockRecord {
    mlp_tape: MlpTape,
    /// Raw MLP output before the residual update.
    y: Vec<f64>,
}

/// Tape of one whole-network forward pass.
#[derive(Debug, Clone)]
pub struct OsgTape {
    state_dim: usize,
    delta: f64,
    fmap: DeltaFeatureMap,
    records: Vec<BlockRecord>,
}

/// Forward pass through all K blocks with the identity feature map.
pub fn osg_forward(net: &OsgNet, u: &[f64], delta: f64) -> Result<(Vec<f64>, OsgTape)> {
    osg_forward_mapped(net, u, delta, &DeltaFeatureMap::default())
}

/// Forward pass through all K blocks; each block advances by delta/K and the
/// MLP lag feature is fmap(repr(delta/K)).
pub fn osg_forward_mapped(
    net: &OsgNet,
    u: &[f64],
    delta: f64,
    fmap: &DeltaFeatureMap,
) -> Result<(Vec<f64>, OsgTape)> {
    if u.len() != net.state_dim {
        return Err(Error::Shape(format!(
            "state has length {}, network expects {}",
            u.len(),
            net.state_dim
        )));
    }
    check_delta(net.variant, delta)?;
    let db = delta / net.num_blocks as f64;
    let feature = fmap.apply(lag_repr(net.variant, db));
    let mut records = Vec::with_capacity(net.num_blocks);
    let mut state = u.to_vec();
    let mut input = Vec::with_capacity(u.len() + 1);
    for i in 0..net.num_blocks {
        input.clear();
        input.extend_from_slice(&state);
        input.push(feature);
        let (y, mlp_tape) = mlp_forward(net.block_at(i), &input)?;
        if delta != 0.0 {
            for (s, yi) in state.iter_mut().zip(&y) {
                *s += db * yi;
            }
        }
        records.push(BlockRecord { mlp_tape, y });
    }
    Ok((state, OsgTape { state_dim: net.state_dim, delta, fmap: *fmap, records }))
}

/// Reverse-mode pass for a recorded forward. Returns gradients shaped like
/// `net.stored_blocks()` (recurrent nets accumulate into the single shared
/// set), the gradient with respect to the input state, and the derivative
/// with respect to the lag (diagnostic; training never differentiates lags).
pub fn osg_backprop(
    net: &OsgNet,
    tape: &OsgTape,
    upstream: &[f64],
) -> Result<(Vec<MlpParams>, Vec<f64>, f64)> {
    if tape.state_dim != net.state_dim || tape.records.len() != net.num_blocks {
        return Err(Error::Shape("tape does not match network".into()));
    }
    if upstream.len() != net.state_dim {
        return Err(Error::Shape(format!(
            "upstream has length {}, expected {}",
            upstream.len(),
            net.state_dim
        )));
    }
    let k = net.num_blocks as f64;
    let db = tape.delta / k;
    let repr_d = lag_repr_deriv(net.variant, db);
    let mut grads = net.zero_grads();
    let mut g = upstream.to_vec();
    let mut d_delta = 0.0;
    for i in (0..net.num_blocks).rev() {
        let rec = &tape.records[i];
        // out = s + db*y, so the MLP sees upstream db*g.
        let scaled: Vec<f64> = g.iter().map(|v| db * v).collect();
        let (block_grads, input_grad) = mlp_backprop(net.block_at(i), &rec.mlp_tape, &scaled)?;
        let slot = match net.sharing {
            Sharing::Recursive => i,
            Sharing::Recurrent => 0,
        };
        grads[slot].add_scaled(1.0, &block_grads)?;
        // d(out)/d(lag): direct db-scaling term plus the feature channel.
        let gy: f64 = g.iter().zip(&rec.y).map(|(a, b)| a * b).sum();
        d_delta += gy / k + input_grad[net.state_dim] * tape.fmap.scale * repr_d / k;
        for (gi, ig) in g.iter_mut().zip(&input_grad[..net.state_dim]) {
            *gi += ig;
        }
    }
    Ok((grads, g, d_delta))
}

/// Residual network without a lag input: u + N(u). Kept as the reference
/// architecture the lag-scaled design improves on; it cannot represent the
/// identity at zero lag unless N itself vanishes.
pub fn plain_resnet_forward(params: &MlpParams, u: &[f64]) -> Result<Vec<f64>> {
    if params.input_dim() != u.len() || params.output_dim() != u.len() {
        return Err(Error::Shape(format!(
            "plain residual block must map {n}->{n}",
            n = u.len()
        )));
    }
    let (y, _) = mlp_forward(params, u)?;
    Ok(u.iter().zip(&y).map(|(a, b)| a + b).collect())
}
