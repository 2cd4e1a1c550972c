//! Minimal fully connected network substrate: ReLU MLPs with manual
//! reverse-mode gradients, Adam, and a versioned binary checkpoint
//! layout (magic string, layer sizes, row-major weights).

use crate::{CoreError, Result, SlotRng};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;

/// Weights of one MLP. `weights[l]` is out_l x in_l row-major,
/// `biases[l]` has out_l entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Gradients shaped like an [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations cached by the forward pass: the input and each layer's
/// pre-activation.
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub pre_acts: Vec<Vec<f64>>,
}

impl MlpParams {
    /// He-uniform initialization for the ReLU layers, uniform
    /// (-1/sqrt(fan_in), 1/sqrt(fan_in)) for the output layer.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::Shape("an MLP needs at least input and output sizes".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::Shape("layer sizes must be nonzero".into()));
        }
        let mut rng = SlotRng::stream(seed, 0);
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = sizes[l];
            let bound = if l + 1 == layers {
                1.0 / sqrt(fan_in as f64)
            } else {
                sqrt(6.0 / fan_in as f64)
            };
            let w: Vec<f64> = (0..sizes[l] * sizes[l + 1])
                .map(|_| (rng.uniform() * 2.0 - 1.0) * bound)
                .collect();
            weights.push(w);
            biases.push(vec![0.0; sizes[l + 1]]);
        }
        Ok(MlpParams { sizes: sizes.to_vec(), weights, biases, seed })
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn assert_finite(&self, what: &str) -> Result<()> {
        for (l, w) in self.weights.iter().enumerate() {
            if w.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFinite(format!("{what}: weight layer {l}")));
            }
        }
        for (l, b) in self.biases.iter().enumerate() {
            if b.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFinite(format!("{what}: bias layer {l}")));
            }
        }
        Ok(())
    }
}

/// Affine -> ReLU per hidden layer, affine output (heads apply their own
/// transforms downstream).
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    if input.len() != params.sizes[0] {
        return Err(CoreError::Shape(format!(
            "input has {} entries, expected {}",
            input.len(),
            params.sizes[0]
        )));
    }
    let layers = params.weights.len();
    let mut pre_acts = Vec::with_capacity(layers);
    let mut act: Vec<f64> = input.to_vec();
    for l in 0..layers {
        let (n_in, n_out) = (params.sizes[l], params.sizes[l + 1]);
        let w = &params.weights[l];
        let mut z = params.biases[l].clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = 0.0;
            for (wi, ai) in row.iter().zip(&act) {
                acc += wi * ai;
            }
            *zo += acc;
        }
        pre_acts.push(z.clone());
        if l + 1 < layers {
            for x in &mut z {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        act = z;
        let _ = n_out;
    }
    Ok((act, ForwardCache { input: input.to_vec(), pre_acts }))
}

/// Exact reverse-mode gradients of output·output_grad; the ReLU
/// subgradient at 0 is 0. Accumulates into `grads`.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    output_grad: &[f64],
    grads: &mut MlpGrads,
) -> Result<()> {
    let layers = params.weights.len();
    let out_size = *params.sizes.last().unwrap();
    if output_grad.len() != out_size {
        return Err(CoreError::Shape(format!(
            "output_grad has {} entries, expected {out_size}",
            output_grad.len()
        )));
    }
    if cache.pre_acts.len() != layers {
        return Err(CoreError::Shape("cache does not match this network".into()));
    }
    let mut delta: Vec<f64> = output_grad.to_vec();
    for l in (0..layers).rev() {
        let n_in = params.sizes[l];
        // Activation feeding layer l.
        let act_in: Vec<f64> = if l == 0 {
            cache.input.clone()
        } else {
            cache.pre_acts[l - 1].iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect()
        };
        let gw = &mut grads.weights[l];
        let gb = &mut grads.biases[l];
        for (o, &d) in delta.iter().enumerate() {
            gb[o] += d;
            let row = &mut gw[o * n_in..(o + 1) * n_in];
            for (g, a) in row.iter_mut().zip(&act_in) {
                *g += d * a;
            }
        }
        if l > 0 {
            let w = &params.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&cache.pre_acts[l - 1]) {
                if z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok(())
}

/// Adam accumulators matching one [`MlpParams`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m_w: Vec<Vec<f64>>,
    pub v_w: Vec<Vec<f64>>,
    pub m_b: Vec<Vec<f64>>,
    pub v_b: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        AdamState {
            m_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn adam_update_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    st: (f64, f64, f64, f64, f64, f64),
    where_: &str,
) -> Result<()> {
    let (lr, b1, b2, eps, bc1, bc2) = st;
    for i in 0..p.len() {
        let gi = g[i];
        if !gi.is_finite() {
            return Err(CoreError::NonFinite(format!("gradient in {where_}")));
        }
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (sqrt(v_hat) + eps);
    }
    Ok(())
}

/// Standard Adam step with bias correction, minimizing along `grads`.
pub fn adam_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    state.step += 1;
    let bc1 = 1.0 - libm::pow(state.beta1, state.step as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, state.step as f64);
    let st = (state.lr, state.beta1, state.beta2, state.eps, bc1, bc2);
    for l in 0..params.weights.len() {
        adam_update_slice(
            &mut params.weights[l],
            &grads.weights[l],
            &mut state.m_w[l],
            &mut state.v_w[l],
            st,
            &format!("weight layer {l}"),
        )?;
        adam_update_slice(
            &mut params.biases[l],
            &grads.biases[l],
            &mut state.m_b[l],
            &mut state.v_b[l],
            st,
            &format!("bias layer {l}"),
        )?;
    }
    params.assert_finite("after adam_step")
}

const CKPT_MAGIC: &[u8; 8] = b"FBMLPv1\0";

/// Serializes one MLP: magic, u32 layer count, u32 sizes, u64 seed, then
/// row-major weights and biases per layer as little-endian f64.
/// Bit-exact round-trip.
pub fn encode_params(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(params.sizes.len() as u32).to_le_bytes());
    for &s in &params.sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.seed.to_le_bytes());
    for l in 0..params.weights.len() {
        for &x in &params.weights[l] {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        for &x in &params.biases[l] {
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<MlpParams> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(CoreError::Shape("checkpoint truncated".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != CKPT_MAGIC {
        return Err(CoreError::Shape("bad checkpoint magic".into()));
    }
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        let b = take(pos, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let n_sizes = read_u32(&mut pos)? as usize;
    if n_sizes < 2 || n_sizes > 64 {
        return Err(CoreError::Shape(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(read_u32(&mut pos)? as usize);
    }
    let seed = {
        let b = take(&mut pos, 8)?;
        u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
    };
    let read_f64s = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let b = take(pos, 8)?;
            v.push(f64::from_bits(u64::from_le_bytes([
                b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
            ])));
        }
        Ok(v)
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..n_sizes - 1 {
        weights.push(read_f64s(&mut pos, sizes[l] * sizes[l + 1])?);
        biases.push(read_f64s(&mut pos, sizes[l + 1])?);
    }
    if pos != bytes.len() {
        return Err(CoreError::Shape("trailing bytes in checkpoint".into()));
    }
    Ok(MlpParams { sizes, weights, biases, seed })
}

/// Central finite-difference gradient of `f` with respect to every
/// parameter of `params`. Test-support oracle, deliberately independent
/// of [`mlp_backward`].
pub fn finite_difference_grads<F: FnMut(&MlpParams) -> f64>(
    params: &MlpParams,
    mut f: F,
    h: f64,
) -> MlpGrads {
    let mut grads = params.zero_grads();
    let mut probe = params.clone();
    for l in 0..params.weights.len() {
        for i in 0..params.weights[l].len() {
            let orig = probe.weights[l][i];
            probe.weights[l][i] = orig + h;
            let up = f(&probe);
            probe.weights[l][i] = orig - h;
            let down = f(&probe);
            probe.weights[l][i] = orig;
            grads.weights[l][i] = (up - down) / (2.0 * h);
        }
        for i in 0..params.biases[l].len() {
            let orig = probe.biases[l][i];
            probe.biases[l][i] = orig + h;
            let up = f(&probe);
            probe.biases[l][i] = orig - h;
            let down = f(&probe);
            probe.biases[l][i] = orig;
            grads.biases[l][i] = (up - down) / (2.0 * h);
        }
    }
    grads
}

/// Compares analytic and finite-difference gradients, skipping
/// parameters whose pre-activation sits within `kink_tol` of a ReLU kink.
pub fn max_grad_rel_error(analytic: &MlpGrads, numeric: &MlpGrads) -> f64 {
    let mut worst: f64 = 0.0;
    let pairs = analytic
        .weights
        .iter()
        .flatten()
        .zip(numeric.weights.iter().flatten())
        .chain(analytic.biases.iter().flatten().zip(numeric.biases.iter().flatten()));
    for (&a, &n) in pairs {
        let scale = a.abs().max(n.abs()).max(1e-6);
        let rel = (a - n).abs() / scale;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_zero_output() {
        let mut p = MlpParams::init(&[2, 3, 2], 0).unwrap();
        for w in &mut p.weights {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let (out, _) = mlp_forward(&p, &[1.0, -1.0]).unwrap();
        assert_eq!(out, alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn relu_blocks_negative_hidden() {
        // 1-1-1 net, weight 1, bias 0: input -2 dies at the hidden ReLU.
        let p = MlpParams {
            sizes: alloc::vec![1, 1, 1],
            weights: alloc::vec![alloc::vec![1.0], alloc::vec![1.0]],
            biases: alloc::vec![alloc::vec![0.0], alloc::vec![0.0]],
            seed: 0,
        };
        let (out, _) = mlp_forward(&p, &[-2.0]).unwrap();
        assert_eq!(out[0], 0.0);
        let (out, _) = mlp_forward(&p, &[2.0]).unwrap();
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        // Independent scalar re-evaluation of a seed-0 2-3-2 net.
        let p = MlpParams::init(&[2, 3, 2], 0).unwrap();
        let input = [1.0, -1.0];
        let mut hidden = [0.0f64; 3];
        for o in 0..3 {
            let mut z = p.biases[0][o];
            z += p.weights[0][o * 2] * input[0] + p.weights[0][o * 2 + 1] * input[1];
            hidden[o] = z.max(0.0);
        }
        let mut expect = [0.0f64; 2];
        for o in 0..2 {
            let mut z = p.biases[1][o];
            for i in 0..3 {
                z += p.weights[1][o * 3 + i] * hidden[i];
            }
            expect[o] = z;
        }
        let (out, _) = mlp_forward(&p, &input).unwrap();
        assert!((out[0] - expect[0]).abs() < 1e-15);
        assert!((out[1] - expect[1]).abs() < 1e-15);
        assert!(mlp_forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn backward_zero_grad_and_linear_case() {
        let p = MlpParams::init(&[3, 4, 2], 1).unwrap();
        let (_, cache) = mlp_forward(&p, &[0.3, -0.2, 0.9]).unwrap();
        let mut g = p.zero_grads();
        mlp_backward(&p, &cache, &[0.0, 0.0], &mut g).unwrap();
        assert!(g.weights.iter().flatten().all(|&x| x == 0.0));

        // Linear net (no hidden layer): dW = outer(output_grad, input).
        let lin = MlpParams::init(&[3, 2], 2).unwrap();
        let input = [0.5, -1.5, 2.0];
        let (_, cache) = mlp_forward(&lin, &input).unwrap();
        let mut g = lin.zero_grads();
        mlp_backward(&lin, &cache, &[2.0, -1.0], &mut g).unwrap();
        for o in 0..2 {
            let og = [2.0, -1.0][o];
            for i in 0..3 {
                assert!((g.weights[0][o * 3 + i] - og * input[i]).abs() < 1e-15);
            }
            assert!((g.biases[0][o] - og).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..3u64 {
            let p = MlpParams::init(&[4, 8, 8, 3], seed).unwrap();
            let input = [0.2, -0.7, 1.3, 0.05];
            let out_grad = [1.0, -0.5, 0.25];
            let (_, cache) = mlp_forward(&p, &input).unwrap();
            let mut analytic = p.zero_grads();
            mlp_backward(&p, &cache, &out_grad, &mut analytic).unwrap();
            let numeric = finite_difference_grads(
                &p,
                |q| {
                    let (o, _) = mlp_forward(q, &input).unwrap();
                    o.iter().zip(out_grad).map(|(a, b)| a * b).sum()
                },
                1e-5,
            );
            let err = max_grad_rel_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn adam_examples() {
        let mut p = MlpParams {
            sizes: alloc::vec![1, 1],
            weights: alloc::vec![alloc::vec![0.5]],
            biases: alloc::vec![alloc::vec![0.0]],
            seed: 0,
        };
        let mut st = AdamState::new(&p, 3e-4);
        let zero = p.zero_grads();
        adam_step(&mut p, &zero, &mut st).unwrap();
        assert_eq!(p.weights[0][0], 0.5);
        assert_eq!(st.step, 1);

        // One step with g = 1 from fresh state: delta = -lr / (1 + eps').
        let mut p = MlpParams {
            sizes: alloc::vec![1, 1],
            weights: alloc::vec![alloc::vec![0.0]],
            biases: alloc::vec![alloc::vec![0.0]],
            seed: 0,
        };
        let mut st = AdamState::new(&p, 3e-4);
        let mut g = p.zero_grads();
        g.weights[0][0] = 1.0;
        adam_step(&mut p, &g, &mut st).unwrap();
        let expect = -3e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p.weights[0][0] - expect).abs() < 1e-18);

        // Constant gradient: update magnitude tends to lr.
        for _ in 0..5000 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        let before = p.weights[0][0];
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!(((before - p.weights[0][0]) / 3e-4 - 1.0).abs() < 1e-3);

        g.weights[0][0] = f64::NAN;
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let p = MlpParams::init(&[5, 7, 3], 42).unwrap();
        let bytes = encode_params(&p);
        let q = decode_params(&bytes).unwrap();
        assert_eq!(p, q);
        assert!(decode_params(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_params(b"not a checkpoint").is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::init(&[6, 10, 4], 9).unwrap();
        let b = MlpParams::init(&[6, 10, 4], 9).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init(&[6, 10, 4], 10).unwrap();
        assert_ne!(a, c);
    }
}
