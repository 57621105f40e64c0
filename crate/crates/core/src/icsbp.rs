//! Instance-colouring stick-breaking process (IC-SBP) for video.
//!
//! Soft attention masks are peeled off a per-pixel scope one slot at a
//! time: a seed pixel is chosen stochastically, a Gaussian kernel around
//! its embedding forms the alpha mask, and the stick-breaking recurrence
//! `m_k = s_{k-1} * alpha_k`, `s_k = s_{k-1} * (1 - alpha_k)` keeps the
//! masks normalised. Seeds sampled on the first frame are reused as slot
//! identities on later frames. All randomness flows through [`RandomTape`]
//! so tests can inject exact draws.

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

/// Per-pixel embeddings, `H x W x D_c`, plus optional feature channels.
#[derive(Debug, Clone)]
pub struct EmbeddingGrid {
    pub data: Array3<f64>,
    pub features: Option<Array3<f64>>,
}

impl EmbeddingGrid {
    pub fn new(data: Array3<f64>) -> Self {
        EmbeddingGrid {
            data,
            features: None,
        }
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn embedding_at(&self, i: usize, j: usize) -> Vec<f64> {
        self.data.index_axis(Axis(0), i).row(j).to_vec()
    }
}

/// A replayable source of uniform draws in `[0, 1)`.
///
/// `Recorded` tapes panic when exhausted; production code uses the seeded
/// variant, which never runs out.
#[derive(Debug, Clone)]
pub enum RandomTape {
    Recorded { values: Vec<f64>, cursor: usize },
    Seeded(ChaCha8Rng),
}

impl RandomTape {
    pub fn from_seed(seed: u64) -> Self {
        RandomTape::Seeded(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        RandomTape::Recorded { values, cursor: 0 }
    }

    pub fn next_uniform(&mut self) -> f64 {
        match self {
            RandomTape::Recorded { values, cursor } => {
                let v = *values
                    .get(*cursor)
                    .expect("recorded random tape exhausted");
                *cursor += 1;
                v
            }
            RandomTape::Seeded(rng) => rng.gen::<f64>(),
        }
    }
}

/// A stored cluster seed identifying a slot across frames.
#[derive(Debug, Clone)]
pub struct SlotSeed {
    pub slot: usize,
    pub pixel: (usize, usize),
    pub embedding: Vec<f64>,
}

/// Seeds and idle flags carried from the first frame into propagation.
#[derive(Debug, Clone)]
pub struct SlotMemory {
    pub seeds: Vec<Option<SlotSeed>>,
    pub idle: Vec<bool>,
}

/// Mask bookkeeping for one frame.
#[derive(Debug, Clone)]
pub struct MaskState {
    /// Masks of the `K' - 1` special components from the pre-scope.
    pub special_masks: Vec<Array2<f64>>,
    /// Initial scope `s_0` (the last pre-scope channel).
    pub s0: Array2<f64>,
    /// Slot masks, in stick-breaking order.
    pub masks: Vec<Array2<f64>>,
    /// Current scope `s_k`; after decomposition this is the remaining scope.
    pub scope: Array2<f64>,
    pub seeds: Vec<Option<SlotSeed>>,
    pub idle: Vec<bool>,
    /// Slot capacity `K`.
    pub capacity: usize,
}

impl MaskState {
    pub fn new(special_masks: Vec<Array2<f64>>, s0: Array2<f64>, capacity: usize) -> Self {
        let scope = s0.clone();
        MaskState {
            special_masks,
            s0,
            masks: Vec::with_capacity(capacity),
            scope,
            seeds: Vec::with_capacity(capacity),
            idle: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// The scope left unexplained after all slots ran; flagged unused.
    pub fn remaining_scope(&self) -> &Array2<f64> {
        &self.scope
    }

    pub fn memory(&self) -> SlotMemory {
        SlotMemory {
            seeds: self.seeds.clone(),
            idle: self.idle.clone(),
        }
    }
}

/// Channelwise softmax of the pre-scope logits. Returns the `K' - 1`
/// special-component masks and the scope `s_0` (last channel).
pub fn pre_scope(logits: &Array3<f64>) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
    let (h, w, channels) = logits.dim();
    if channels < 2 {
        return Err(CoreError::ShapeMismatch(format!(
            "pre-scope needs at least 2 channels, got {channels}"
        )));
    }
    let mut planes = vec![Array2::<f64>::zeros((h, w)); channels];
    for i in 0..h {
        for j in 0..w {
            let mut max = f64::NEG_INFINITY;
            for c in 0..channels {
                max = max.max(logits[(i, j, c)]);
            }
            let mut denom = 0.0;
            for c in 0..channels {
                denom += (logits[(i, j, c)] - max).exp();
            }
            for c in 0..channels {
                planes[c][(i, j)] = (logits[(i, j, c)] - max).exp() / denom;
            }
        }
    }
    let s0 = planes.pop().expect("at least two channels");
    Ok((planes, s0))
}

/// Gaussian kernel response of every pixel embedding to a seed vector:
/// `alpha(i,j) = exp(-||emb(i,j) - seed||^2 / (2 sigma^2))`.
pub fn gaussian_alpha(embeddings: &EmbeddingGrid, seed_vec: &[f64], sigma: f64) -> Array2<f64> {
    assert!(sigma > 0.0, "kernel bandwidth must be positive");
    let (h, w, d) = embeddings.data.dim();
    assert_eq!(d, seed_vec.len(), "embedding dimension mismatch");
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut alpha = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut sq = 0.0;
            for c in 0..d {
                let diff = embeddings.data[(i, j, c)] - seed_vec[c];
                sq += diff * diff;
            }
            alpha[(i, j)] = (-sq * inv).exp();
        }
    }
    alpha
}

/// One stick-breaking step: appends `m_k = s_{k-1} * alpha` and updates the
/// scope to `s_k = s_{k-1} * (1 - alpha)`.
pub fn sbp_step(state: &mut MaskState, alpha: &Array2<f64>) -> Result<()> {
    if state.masks.len() >= state.capacity {
        return Err(CoreError::CapacityExceeded(state.capacity));
    }
    let mask = &state.scope * alpha;
    state.scope = &state.scope * &alpha.mapv(|a| 1.0 - a);
    state.masks.push(mask);
    Ok(())
}

/// Draws a uniform score map from the tape (row-major) and returns the
/// pixel maximizing `scope * u`, first occurrence winning exact ties.
pub fn select_seed(
    state: &MaskState,
    embeddings: &EmbeddingGrid,
    tape: &mut RandomTape,
) -> ((usize, usize), Vec<f64>) {
    let (h, w) = state.scope.dim();
    let mut best = ((0usize, 0usize), f64::NEG_INFINITY);
    for i in 0..h {
        for j in 0..w {
            let score = state.scope[(i, j)] * tape.next_uniform();
            if score > best.1 {
                best = ((i, j), score);
            }
        }
    }
    let (pixel, _) = best;
    (pixel, embeddings.embedding_at(pixel.0, pixel.1))
}

/// Samples an independent Bernoulli per pixel with probability equal to the
/// scope value; the slot is idle iff every sample comes up zero. All `H * W`
/// tape values are consumed regardless of outcome.
pub fn check_termination(state: &MaskState, tape: &mut RandomTape) -> bool {
    let mut any = false;
    for &s in state.scope.iter() {
        let hit = tape.next_uniform() < s;
        any = any || hit;
    }
    !any
}

/// Stick-breaking parameters: slot count `K` and kernel bandwidth.
#[derive(Debug, Clone, Copy)]
pub struct SbpParams {
    pub slots: usize,
    pub kernel_sigma: f64,
}

fn push_idle(state: &mut MaskState) {
    let (h, w) = state.scope.dim();
    state.masks.push(Array2::zeros((h, w)));
    state.seeds.push(None);
    state.idle.push(true);
}

/// Decomposes one frame into `K` slot masks.
///
/// Without `memory` (first frame) the first `K - 1` slots each run a
/// termination check, then seed selection and a stick-breaking step; one
/// extra step is run for the last component and the remaining scope is left
/// flagged as unused. With `memory` (propagation) the stored seed vectors
/// are reused in order, idle slots stay idle, and no tape values are drawn.
pub fn decompose_frame(
    embeddings: &EmbeddingGrid,
    pre_scope_logits: &Array3<f64>,
    params: &SbpParams,
    tape: &mut RandomTape,
    memory: Option<&SlotMemory>,
) -> Result<MaskState> {
    if params.slots < 1 {
        return Err(CoreError::ShapeMismatch(
            "slot count must be at least 1".into(),
        ));
    }
    let (special, s0) = pre_scope(pre_scope_logits)?;
    let mut state = MaskState::new(special, s0, params.slots);

    for k in 0..params.slots {
        if let Some(mem) = memory {
            let seed = mem.seeds.get(k).and_then(|s| s.as_ref());
            if mem.idle.get(k).copied().unwrap_or(true) || seed.is_none() {
                push_idle(&mut state);
                continue;
            }
            let seed = seed.unwrap();
            let alpha = gaussian_alpha(embeddings, &seed.embedding, params.kernel_sigma);
            sbp_step(&mut state, &alpha)?;
            state.seeds.push(Some(seed.clone()));
            state.idle.push(false);
            continue;
        }

        let last = k + 1 == params.slots;
        if !last {
            if check_termination(&state, tape) {
                push_idle(&mut state);
                continue;
            }
        } else if state.scope.iter().all(|&s| s == 0.0) {
            // Nothing left for the final component; no seed to sample.
            push_idle(&mut state);
            continue;
        }
        let (pixel, seed_vec) = select_seed(&state, embeddings, tape);
        let alpha = gaussian_alpha(embeddings, &seed_vec, params.kernel_sigma);
        sbp_step(&mut state, &alpha)?;
        state.seeds.push(Some(SlotSeed {
            slot: k,
            pixel,
            embedding: seed_vec,
        }));
        state.idle.push(false);
    }
    Ok(state)
}
