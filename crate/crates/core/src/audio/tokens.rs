use super::mel::{FRAMES_PER_SEGMENT, N_FRAMES, N_MELS, N_SEGMENTS};
use super::{AudioError, MelSpectrogram, Result};

/// Side of a square patch, in frames and in mel bins.
pub const PATCH_SIZE: usize = 16;
/// Values per flattened patch.
pub const PATCH_DIM: usize = PATCH_SIZE * PATCH_SIZE;
/// Patch tokens per 30 s clip: 3 x (1024 / 16) x (128 / 16).
pub const RAW_TOKENS: usize = N_SEGMENTS * (FRAMES_PER_SEGMENT / PATCH_SIZE) * (N_MELS / PATCH_SIZE);
pub const ALLOWED_POOL_FACTORS: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

/// A sequence of equal-width vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    data: Vec<f64>,
    n_tokens: usize,
    dim: usize,
}

impl TokenGrid {
    pub fn new(data: Vec<f64>, n_tokens: usize, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() != n_tokens * dim {
            return Err(AudioError::Shape {
                expected_rows: n_tokens,
                expected_cols: dim,
                rows: if dim == 0 { 0 } else { data.len() / dim },
                cols: dim,
            });
        }
        Ok(Self { data, n_tokens, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(AudioError::Shape {
                expected_rows: rows.len(),
                expected_cols: dim,
                rows: rows.len(),
                cols: rows.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
            });
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }
}

/// Mean-pooling group size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    factor: usize,
}

impl PoolConfig {
    /// Accepts only the powers of two 1..=128.
    pub fn new(factor: usize) -> Result<Self> {
        if ALLOWED_POOL_FACTORS.contains(&factor) {
            Ok(Self { factor })
        } else {
            Err(AudioError::PoolFactorNotAllowed(factor))
        }
    }

    /// Any positive factor; divisibility is still checked when pooling.
    pub fn custom(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(AudioError::PoolFactorNotAllowed(0));
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }
}

/// How log-mel values are normalized before patching.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MelNorm {
    /// Per-clip z-normalization.
    #[default]
    PerClip,
    Fixed { mean: f64, std: f64 },
    None,
}

pub fn normalize_mel(mel: &MelSpectrogram, norm: MelNorm) -> MelSpectrogram {
    let (mean, std) = match norm {
        MelNorm::None => return mel.clone(),
        MelNorm::Fixed { mean, std } => (mean, std),
        MelNorm::PerClip => {
            let n = mel.values().len() as f64;
            let mean = mel.values().iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = mel
                .values()
                .iter()
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        }
    };
    // a constant spectrogram only gets centered
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    let mut out = mel.clone();
    for v in out.values_mut() {
        *v = ((*v as f64 - mean) * scale) as f32;
    }
    out
}

/// Cuts each 1024-frame segment into non-overlapping 16x16 patches in
/// time-major raster order; each patch is flattened frame by frame.
pub fn patchify(mel: &MelSpectrogram) -> Result<TokenGrid> {
    if mel.shape() != (N_FRAMES, N_MELS) {
        return Err(AudioError::Shape {
            expected_rows: N_FRAMES,
            expected_cols: N_MELS,
            rows: mel.n_frames(),
            cols: mel.n_bins(),
        });
    }
    let t_patches = FRAMES_PER_SEGMENT / PATCH_SIZE;
    let f_patches = N_MELS / PATCH_SIZE;
    let mut data = Vec::with_capacity(RAW_TOKENS * PATCH_DIM);
    for seg in 0..N_SEGMENTS {
        for tp in 0..t_patches {
            for fp in 0..f_patches {
                for dt in 0..PATCH_SIZE {
                    let frame = seg * FRAMES_PER_SEGMENT + tp * PATCH_SIZE + dt;
                    let row = mel.frame(frame);
                    data.extend(
                        row[fp * PATCH_SIZE..(fp + 1) * PATCH_SIZE]
                            .iter()
                            .map(|&v| v as f64),
                    );
                }
            }
        }
    }
    TokenGrid::new(data, RAW_TOKENS, PATCH_DIM)
}

/// Output token i is the mean of input tokens `[i * p, (i + 1) * p)`.
pub fn mean_pool_tokens(grid: &TokenGrid, cfg: PoolConfig) -> Result<TokenGrid> {
    let p = cfg.factor();
    if grid.n_tokens() % p != 0 {
        return Err(AudioError::PoolFactor {
            factor: p,
            n_tokens: grid.n_tokens(),
        });
    }
    if p == 1 {
        return Ok(grid.clone());
    }
    let dim = grid.dim();
    let n_out = grid.n_tokens() / p;
    let mut data = vec![0.0; n_out * dim];
    for (i, out) in data.chunks_mut(dim).enumerate() {
        for j in i * p..(i + 1) * p {
            for (o, v) in out.iter_mut().zip(grid.token(j)) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o /= p as f64;
        }
    }
    TokenGrid::new(data, n_out, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mel_with(f: impl Fn(usize, usize) -> f32) -> MelSpectrogram {
        let mut v = Vec::with_capacity(N_FRAMES * N_MELS);
        for t in 0..N_FRAMES {
            for b in 0..N_MELS {
                v.push(f(t, b));
            }
        }
        MelSpectrogram::from_values(v, N_FRAMES, N_MELS).unwrap()
    }

    #[test]
    fn patch_count_and_width() {
        let grid = patchify(&mel_with(|t, b| (t + b) as f32)).unwrap();
        assert_eq!((grid.n_tokens(), grid.dim()), (1536, 256));
    }

    #[test]
    fn constant_mel_gives_identical_tokens() {
        let grid = patchify(&mel_with(|_, _| 2.5)).unwrap();
        let first = grid.token(0).to_vec();
        assert!(grid.tokens().all(|t| t == first.as_slice()));
    }

    #[test]
    fn single_cell_lands_in_token_zero() {
        let grid = patchify(&mel_with(|t, b| if t == 0 && b == 0 { 1.0 } else { 0.0 })).unwrap();
        assert_eq!(grid.token(0)[0], 1.0);
        for i in 0..grid.n_tokens() {
            let nz = grid.token(i).iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nz, usize::from(i == 0));
        }
    }

    #[test]
    fn raster_order_is_time_major() {
        // token 1 is the next band of the same frames; token 8 the next frames
        let grid = patchify(&mel_with(|t, b| (t * 1000 + b) as f32)).unwrap();
        assert_eq!(grid.token(1)[0], 16.0);
        assert_eq!(grid.token(8)[0], 16_000.0);
        assert_eq!(grid.token(512)[0], 1_024_000.0);
        assert_eq!(grid.token(0)[16], 1000.0);
    }

    #[test]
    fn pool_by_eight_gives_192() {
        let grid = patchify(&mel_with(|t, b| (t % 7 + b) as f32)).unwrap();
        let pooled = mean_pool_tokens(&grid, PoolConfig::new(8).unwrap()).unwrap();
        assert_eq!((pooled.n_tokens(), pooled.dim()), (192, 256));
    }

    #[test]
    fn pool_identity_and_errors() {
        let grid = TokenGrid::new((0..12).map(f64::from).collect(), 6, 2).unwrap();
        assert_eq!(mean_pool_tokens(&grid, PoolConfig::new(1).unwrap()).unwrap(), grid);
        assert!(matches!(
            mean_pool_tokens(&grid, PoolConfig::new(4).unwrap()),
            Err(AudioError::PoolFactor { .. })
        ));
        assert!(PoolConfig::new(3).is_err());
        assert!(PoolConfig::custom(3).is_ok());
        assert!(PoolConfig::custom(0).is_err());
    }

    #[test]
    fn patchify_rejects_wrong_shape() {
        assert!(MelSpectrogram::from_values(vec![0.0; 10], 5, 2).is_err());
    }

    #[test]
    fn per_clip_norm_is_zero_mean_unit_var() {
        let mel = normalize_mel(&mel_with(|t, b| ((t * 31 + b * 7) % 13) as f32), MelNorm::PerClip);
        let n = mel.values().len() as f64;
        let mean = mel.values().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = mel.values().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);
        let flat = normalize_mel(&mel_with(|_, _| 4.0), MelNorm::PerClip);
        assert!(flat.values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn pooling_composes(vals in proptest::collection::vec(-10.0f64..10.0, 64 * 3), p in 0usize..4, q in 0usize..3) {
            let (p, q) = (1usize << p, 1usize << q);
            let grid = TokenGrid::new(vals, 64, 3).unwrap();
            let once = mean_pool_tokens(&grid, PoolConfig::custom(p * q).unwrap()).unwrap();
            let twice = mean_pool_tokens(
                &mean_pool_tokens(&grid, PoolConfig::custom(p).unwrap()).unwrap(),
                PoolConfig::custom(q).unwrap(),
            ).unwrap();
            prop_assert_eq!(once.n_tokens(), twice.n_tokens());
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn pooling_constant_tokens(v in proptest::collection::vec(-5.0f64..5.0, 4), p in 0usize..6) {
            let p = 1usize << p;
            let grid = TokenGrid::new(v.repeat(32), 32, 4).unwrap();
            let pooled = mean_pool_tokens(&grid, PoolConfig::custom(p).unwrap()).unwrap();
            for t in pooled.tokens() {
                for (a, b) in t.iter().zip(&v) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
