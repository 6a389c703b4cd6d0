//! Gaussian-random-field velocity dataset generation and ingestion.
//!
//! Fields are synthesized by shaping complex white noise with the power-law
//! spectrum `((4π²(k² + k'²) + τ²)/2)^(-α/2)` (wavenumbers mirrored over
//! `[0, n/2]`, periodic boundary), inverse-FFT'ing, taking the real part,
//! and rescaling each sample affinely to exactly [-1, 1]. The velocity map
//! `v = 2(x + 2)` then lands in [2, 6] km/s over a 5 km x 1 km domain.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{ScalarField2D, TensorBundle};

/// Horizontal extent of the physical domain (km).
pub const DOMAIN_X_KM: f64 = 5.0;
/// Vertical extent of the physical domain (km).
pub const DOMAIN_Z_KM: f64 = 1.0;

/// Env var naming a default dataset root directory.
pub const DATA_ROOT_ENV: &str = "LATENTPINN_DATA";

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Spectral-synthesis parameters. Defaults mirror the GRF dataset setup:
/// τ = 7, α = 2.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    /// Image side length (grid points); even, at least 4.
    pub n: usize,
    /// Correlation parameter τ.
    pub tau: f64,
    /// Spectral decay α; must exceed 1 so the spectrum decays.
    pub alpha: f64,
    /// RNG seed.
    pub seed: u64,
}

impl Default for GrfParams {
    fn default() -> Self {
        Self {
            n: 128,
            tau: 7.0,
            alpha: 2.5,
            seed: 0,
        }
    }
}

impl GrfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::validation(format!(
                "grf image side must be even and >= 4, got {}",
                self.n
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::validation(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::validation(format!(
                "alpha must be > 1 for a decaying spectrum, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draws the complex white-noise array used by [`sample_grf`].
pub fn draw_noise(params: &GrfParams, stream: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    Array2::from_shape_simple_fn((params.n, params.n), || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// Wavenumber value for FFT index `j` on an `n`-point periodic axis:
/// `0, 1, ..., n/2, n/2-1, ..., 1`.
fn wavenumber(j: usize, n: usize) -> f64 {
    j.min(n - j) as f64
}

/// Spectral amplitude of the mirrored-wavenumber mode `(ki, kj)`, including
/// the `n²·√2·τ^(α-1)` prefactor.
fn spectral_amplitude(params: &GrfParams, ki: f64, kj: f64) -> f64 {
    let scale = (params.n * params.n) as f64 * 2f64.sqrt() * params.tau.powf(params.alpha - 1.0);
    scale * ((4.0 * PI * PI * (ki * ki + kj * kj) + params.tau * params.tau) / 2.0)
        .powf(-params.alpha / 2.0)
}

/// Shapes `noise` by the spectrum, zeroing the DC mode. Shared by the FFT
/// path and the brute-force DFT oracle.
pub fn shaped_spectrum(params: &GrfParams, noise: &Array2<Complex64>) -> Array2<Complex64> {
    let n = params.n;
    let mut f = Array2::zeros((n, n));
    for i in 0..n {
        let ki = wavenumber(i, n);
        for j in 0..n {
            let kj = wavenumber(j, n);
            f[[i, j]] = noise[[i, j]] * spectral_amplitude(params, ki, kj);
        }
    }
    f[[0, 0]] = Complex64::new(0.0, 0.0);
    f
}

/// Unnormalized inverse FFT along both axes, then 1/n² scaling.
fn ifft2(mut f: Array2<Complex64>) -> Array2<Complex64> {
    let n = f.nrows();
    let mut planner = rustfft::FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    // rows
    for mut row in f.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        ifft.process(slice);
    }
    // columns via transpose
    let mut ft = f.reversed_axes().as_standard_layout().into_owned();
    for mut row in ft.rows_mut() {
        let slice = row.as_slice_mut().expect("row-major layout");
        ifft.process(slice);
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = ft.reversed_axes().as_standard_layout().into_owned();
    out.mapv_inplace(|c| c * norm);
    out
}

/// Rescales values affinely so min = -1 and max = +1 exactly.
fn rescale_unit(values: &mut Array2<f64>) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min).is_finite() || max - min < 1e-30 {
        return Err(Error::validation(format!(
            "degenerate field: value range [{min}, {max}] cannot be rescaled"
        )));
    }
    let span = max - min;
    values.mapv_inplace(|v| 2.0 * ((v - min) / span) - 1.0);
    Ok(())
}

/// Generates one GRF image in [-1, 1] (pixel spacing 1).
///
/// With `noise = None` the complex white noise is drawn from `params.seed`
/// (stream 0). A provided noise array must match the `n x n` Fourier grid.
/// A degenerate (constant) field is a generation error.
pub fn sample_grf(params: &GrfParams, noise: Option<&Array2<Complex64>>) -> Result<ScalarField2D> {
    let (field, _imag_ratio) = sample_grf_diagnostic(params, noise)?;
    Ok(field)
}

/// Like [`sample_grf`], also returning the imaginary-residue ratio
/// `||Im x|| / ||Re x||` of the inverse FFT (a realness diagnostic).
pub fn sample_grf_diagnostic(
    params: &GrfParams,
    noise: Option<&Array2<Complex64>>,
) -> Result<(ScalarField2D, f64)> {
    params.validate()?;
    let n = params.n;
    let owned;
    let noise = match noise {
        Some(arr) => {
            if arr.dim() != (n, n) {
                return Err(Error::validation(format!(
                    "noise shape {:?} does not match Fourier grid {n}x{n}",
                    arr.dim()
                )));
            }
            arr
        }
        None => {
            owned = draw_noise(params, 0);
            &owned
        }
    };
    let spectrum = shaped_spectrum(params, noise);
    let complex_field = ifft2(spectrum);
    let re_norm: f64 = complex_field.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    let im_norm: f64 = complex_field.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    let imag_ratio = if re_norm > 0.0 { im_norm / re_norm } else { f64::INFINITY };
    let mut values = complex_field.mapv(|c| c.re);
    rescale_unit(&mut values)?;
    let field = ScalarField2D::new(1.0, 1.0, 0.0, 0.0, values)?;
    Ok((field, imag_ratio))
}

/// Maps an image in [-1, 1] to velocity `v = 2(x + 2)` km/s and re-spans the
/// grid to the 5 km x 1 km physical domain.
pub fn to_velocity(image: &ScalarField2D) -> Result<ScalarField2D> {
    let min = image.min_value();
    let max = image.max_value();
    if min < -1.0 - 1e-6 || max > 1.0 + 1e-6 {
        return Err(Error::validation(format!(
            "image range [{min}, {max}] is outside [-1, 1]"
        )));
    }
    let values = image.values().mapv(|x| 2.0 * (x + 2.0));
    ScalarField2D::new(
        DOMAIN_X_KM / (image.nx() - 1) as f64,
        DOMAIN_Z_KM / (image.nz() - 1) as f64,
        0.0,
        0.0,
        values,
    )
}

/// Inverse of the velocity map for a general range: velocity -> [-1, 1].
pub fn normalize_velocity(v: &ScalarField2D, range: (f64, f64)) -> Result<ScalarField2D> {
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::validation(format!("invalid velocity range [{lo}, {hi}]")));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    v.map(|x| (x - mid) / half)
}

/// Image in [-1, 1] -> velocity range. For range (2, 6) this is `2(x + 2)`.
pub fn denormalize_velocity(image: &ScalarField2D, range: (f64, f64)) -> Result<ScalarField2D> {
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::validation(format!("invalid velocity range [{lo}, {hi}]")));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    image.map(|x| mid + half * x)
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// How a dataset's samples were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Grf(GrfParams),
    External,
    Ldm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// On-disk dataset description: sample files, splits, velocity range, and
/// provenance. Lives at `<root>/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub sample_paths: Vec<String>,
    pub split: SplitIndices,
    pub velocity_range: (f64, f64),
    pub generator: Generator,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.sample_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_paths.is_empty()
    }

    pub fn sample_file(&self, index: usize) -> PathBuf {
        self.root.join(&self.sample_paths[index])
    }

    /// Loads sample `index` as a velocity field (tensor name "v").
    pub fn load_field(&self, index: usize) -> Result<ScalarField2D> {
        let bundle = TensorBundle::load(self.sample_file(index))?;
        ScalarField2D::from_bundle(&bundle, "v")
    }

    pub fn indices(&self, split: &str) -> Result<&[usize]> {
        match split {
            "train" => Ok(&self.split.train),
            "valid" => Ok(&self.split.valid),
            "test" => Ok(&self.split.test),
            other => Err(Error::validation(format!(
                "unknown split {other:?}; expected train, valid, or test"
            ))),
        }
    }

    /// Checks split disjointness/coverage, path existence, and range order.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.velocity_range;
        if !(lo < hi) {
            return Err(Error::validation(format!(
                "velocity_range ({lo}, {hi}) must satisfy v_min < v_max"
            )));
        }
        let mut seen = vec![false; self.sample_paths.len()];
        for idx in self
            .split
            .train
            .iter()
            .chain(&self.split.valid)
            .chain(&self.split.test)
        {
            if *idx >= self.sample_paths.len() {
                return Err(Error::validation(format!(
                    "split index {idx} out of range for {} samples",
                    self.sample_paths.len()
                )));
            }
            if seen[*idx] {
                return Err(Error::validation(format!("split index {idx} appears twice")));
            }
            seen[*idx] = true;
        }
        for p in &self.sample_paths {
            let full = self.root.join(p);
            if !full.is_file() {
                return Err(Error::validation(format!(
                    "manifest sample missing on disk: {}",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest serialization failed: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    /// Loads `<dir>/manifest.json`, re-rooting at `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let json = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&json)
            .map_err(|e| Error::format(format!("manifest field invalid: {e}")))?;
        manifest.root = dir.to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Rounded split sizes for `count` samples; fractions must be positive and
/// sum to at most 1.
pub fn split_counts(count: usize, fracs: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (ft, fv, fe) = fracs;
    if !(ft > 0.0 && fv > 0.0 && fe > 0.0) {
        return Err(Error::validation(format!(
            "split fractions must be positive, got {fracs:?}"
        )));
    }
    if ft + fv + fe > 1.0 + 1e-9 {
        return Err(Error::validation(format!(
            "split fractions sum to {} > 1",
            ft + fv + fe
        )));
    }
    let n_train = ((count as f64) * ft).round() as usize;
    let n_valid = ((count as f64) * fv).round() as usize;
    let n_test = ((count as f64) * fe).round() as usize;
    let n_train = n_train.min(count);
    let n_valid = n_valid.min(count - n_train);
    let n_test = n_test.min(count - n_train - n_valid);
    Ok((n_train, n_valid, n_test))
}

fn sample_rel_path(index: usize) -> String {
    format!("{SAMPLES_DIR}/{index:06}.lpnb")
}

/// Generates `count` GRF velocity fields under `out_dir` and writes the
/// manifest. Sample `i` is a pure function of `(params.seed, i)`: its noise
/// comes from seed `params.seed ^ i`, retrying on the next ChaCha stream if
/// a draw degenerates to a constant field.
pub fn build_dataset(
    count: usize,
    params: &GrfParams,
    split_fracs: (f64, f64, f64),
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    params.validate()?;
    let (n_train, n_valid, n_test) = split_counts(count, split_fracs)?;
    let out_dir = out_dir.as_ref();
    let samples_dir = out_dir.join(SAMPLES_DIR);
    std::fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;

    let result: Result<Vec<String>> = (0..count)
        .into_par_iter()
        .map(|index| {
            let field = generate_indexed_sample(params, index as u64)?;
            let velocity = to_velocity(&field)?;
            let mut bundle = velocity.to_bundle("v")?;
            bundle.set_meta("index", index as i64);
            bundle.set_meta("seed", params.seed as i64);
            let rel = sample_rel_path(index);
            bundle.save(out_dir.join(&rel))?;
            Ok(rel)
        })
        .collect();

    let sample_paths = match result {
        Ok(paths) => paths,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&samples_dir);
            return Err(e);
        }
    };

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        sample_paths,
        split: SplitIndices {
            train: (0..n_train).collect(),
            valid: (n_train..n_train + n_valid).collect(),
            test: (n_train + n_valid..n_train + n_valid + n_test).collect(),
        },
        velocity_range: (2.0, 6.0),
        generator: Generator::Grf(*params),
    };
    manifest.save()?;
    manifest.validate()?;
    Ok(manifest)
}

/// One dataset sample in [-1, 1], deterministic in `(params.seed, index)`.
pub fn generate_indexed_sample(params: &GrfParams, index: u64) -> Result<ScalarField2D> {
    let indexed = GrfParams {
        seed: params.seed ^ index,
        ..*params
    };
    for stream in 0..8 {
        let noise = draw_noise(&indexed, stream);
        match sample_grf(&indexed, Some(&noise)) {
            Ok(field) => return Ok(field),
            Err(Error::Validation(_)) if stream + 1 < 8 => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::validation(format!(
        "GRF generation degenerate for seed {} index {index} after 8 substreams",
        params.seed
    )))
}

/// Builds a manifest over the `.lpnb` field files in `dir`.
///
/// Files whose values already lie in [-1, 1] are treated as raw images and
/// affinely rescaled into `velocity_range`; all samples land in the train
/// split. Shapes must agree across files.
pub fn ingest_folder(
    dir: impl AsRef<Path>,
    velocity_range: (f64, f64),
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let (lo, hi) = velocity_range;
    if !(lo < hi) {
        return Err(Error::validation(format!("invalid velocity range [{lo}, {hi}]")));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "lpnb").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::validation(format!(
            "no .lpnb field files found in {}",
            dir.display()
        )));
    }

    let mut shape: Option<(usize, usize)> = None;
    let mut offenders = Vec::new();
    let mut sample_paths = Vec::new();
    for path in &files {
        let bundle = TensorBundle::load(path)?;
        let field = load_ingested_field(&bundle)?;
        match shape {
            None => shape = Some((field.nz(), field.nx())),
            Some(s) if s != (field.nz(), field.nx()) => {
                offenders.push(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    field.nz(),
                    field.nx(),
                    s.0,
                    s.1
                ));
            }
            _ => {}
        }
        // Raw images in [-1, 1] get rescaled into the velocity range in place.
        if field.min_value() >= -1.0 - 1e-6 && field.max_value() <= 1.0 + 1e-6 {
            let rescaled = denormalize_velocity(&field, velocity_range)?;
            rescaled.to_bundle("v")?.save(path)?;
        }
        let rel = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        sample_paths.push(rel);
    }
    if !offenders.is_empty() {
        return Err(Error::validation(format!(
            "heterogeneous field shapes: {}",
            offenders.join("; ")
        )));
    }

    let count = sample_paths.len();
    let manifest = DatasetManifest {
        root: dir.to_path_buf(),
        sample_paths,
        split: SplitIndices {
            train: (0..count).collect(),
            valid: Vec::new(),
            test: Vec::new(),
        },
        velocity_range,
        generator: Generator::External,
    };
    manifest.save()?;
    manifest.validate()?;
    Ok(manifest)
}

fn load_ingested_field(bundle: &TensorBundle) -> Result<ScalarField2D> {
    if bundle.metadata.contains_key("dx") {
        return ScalarField2D::from_bundle(bundle, "v");
    }
    // Bare tensor without grid metadata: assume the standard domain.
    let values = bundle
        .require("v")?
        .to_f64()
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|_| Error::format("tensor \"v\" is not rank 2".to_string()))?;
    let (nz, nx) = values.dim();
    ScalarField2D::new(
        DOMAIN_X_KM / (nx - 1) as f64,
        DOMAIN_Z_KM / (nz - 1) as f64,
        0.0,
        0.0,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Brute-force O(n^4) inverse DFT of the shaped spectrum, independent of
    /// the FFT path: x[a][b] = (1/n²) Σ_ij F[i][j] e^{2πi(ai/n + bj/n)}.
    fn dft_oracle(params: &GrfParams, noise: &Array2<Complex64>) -> Array2<f64> {
        let n = params.n;
        let f = shaped_spectrum(params, noise);
        let mut out = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let phase = 2.0 * PI * ((a * i) as f64 + (b * j) as f64) / n as f64;
                        acc += f[[i, j]] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[[a, b]] = (acc / (n * n) as f64).re;
            }
        }
        let min = out.iter().copied().fold(f64::INFINITY, f64::min);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.mapv(|v| 2.0 * (v - min) / (max - min) - 1.0)
    }

    #[test]
    fn fft_matches_brute_force_dft() {
        let params = GrfParams {
            n: 8,
            tau: 7.0,
            alpha: 2.5,
            seed: 42,
        };
        let noise = draw_noise(&params, 0);
        let expected = dft_oracle(&params, &noise);
        let got = sample_grf(&params, Some(&noise)).unwrap();
        let norm: f64 = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err: f64 = got
            .values()
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err / norm < 1e-10, "relative error {}", err / norm);
    }

    #[test]
    fn default_params_give_unit_range_near_zero_mean() {
        let params = GrfParams::default(); // n=128, tau=7, alpha=2.5, seed=0
        let field = sample_grf(&params, None).unwrap();
        assert_eq!(field.min_value(), -1.0);
        assert_eq!(field.max_value(), 1.0);
        let mean = field.values().sum() / field.values().len() as f64;
        assert!(mean.abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn zero_noise_is_a_generation_error() {
        let params = GrfParams {
            n: 8,
            ..Default::default()
        };
        let noise = Array2::zeros((8, 8));
        assert!(matches!(
            sample_grf(&params, Some(&noise)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn velocity_map_endpoints() {
        let img = ScalarField2D::new(
            1.0,
            1.0,
            0.0,
            0.0,
            ndarray::arr2(&[[-1.0, 0.0], [1.0, 0.5]]),
        )
        .unwrap();
        let v = to_velocity(&img).unwrap();
        assert_eq!(v.values()[[0, 0]], 2.0);
        assert_eq!(v.values()[[0, 1]], 4.0);
        assert_eq!(v.values()[[1, 0]], 6.0);
        // spans 5 km x 1 km
        assert_abs_diff_eq!(v.x_max(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z_max(), 1.0, epsilon = 1e-12);

        let bad = ScalarField2D::new(1.0, 1.0, 0.0, 0.0, ndarray::arr2(&[[-2.0, 0.0], [1.0, 0.5]]))
            .unwrap();
        assert!(to_velocity(&bad).is_err());
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_counts(10, (0.8, 0.1, 0.1)).unwrap(), (8, 1, 1));
        assert_eq!(
            split_counts(50000, (0.78, 0.02, 0.20)).unwrap(),
            (39000, 1000, 10000)
        );
        assert!(split_counts(10, (0.8, 0.3, 0.1)).is_err());
        assert!(split_counts(10, (0.8, 0.0, 0.1)).is_err());
    }

    #[test]
    fn dataset_build_is_deterministic_and_disjoint() {
        let params = GrfParams {
            n: 16,
            seed: 9,
            ..Default::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let m_a = build_dataset(10, &params, (0.8, 0.1, 0.1), dir_a.path()).unwrap();
        let m_b = build_dataset(10, &params, (0.8, 0.1, 0.1), dir_b.path()).unwrap();
        assert_eq!(m_a.split.train.len(), 8);
        assert_eq!(m_a.split.valid.len(), 1);
        assert_eq!(m_a.split.test.len(), 1);
        for i in 0..10 {
            let a = std::fs::read(m_a.sample_file(i)).unwrap();
            let b = std::fs::read(m_b.sample_file(i)).unwrap();
            assert_eq!(a, b, "sample {i} differs between runs");
        }
        let field = m_a.load_field(3).unwrap();
        assert!(field.min_value() >= 2.0 && field.max_value() <= 6.0);
        // reload and revalidate
        let loaded = DatasetManifest::load(dir_a.path()).unwrap();
        assert_eq!(loaded.sample_paths, m_a.sample_paths);
    }

    #[test]
    fn spectral_realness_and_statistics() {
        let mut means = Vec::new();
        let mut fields = Vec::new();
        for seed in 0..200u64 {
            let params = GrfParams {
                n: 64,
                seed,
                ..Default::default()
            };
            let (field, imag_ratio) = sample_grf_diagnostic(&params, None).unwrap();
            assert!(imag_ratio < 1e-9, "imag ratio {imag_ratio}");
            means.push(field.values().sum() / field.values().len() as f64);
            if seed < 6 {
                fields.push(field);
            }
        }
        let grand_mean = means.iter().sum::<f64>() / means.len() as f64;
        assert!(grand_mean.abs() < 0.05, "grand mean {grand_mean}");
        // distinct seeds decorrelate
        for pair in fields.windows(2) {
            let a = pair[0].values();
            let b = pair[1].values();
            let ma = a.sum() / a.len() as f64;
            let mb = b.sum() / b.len() as f64;
            let mut num = 0.0;
            let mut da = 0.0;
            let mut db = 0.0;
            for (x, y) in a.iter().zip(b.iter()) {
                num += (x - ma) * (y - mb);
                da += (x - ma) * (x - ma);
                db += (y - mb) * (y - mb);
            }
            let corr = num / (da * db).sqrt();
            assert!(corr.abs() < 0.2, "correlation {corr}");
        }
    }

    #[test]
    fn ingest_rescales_raw_images_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_folder(dir.path(), (2.0, 6.0)),
            Err(Error::Validation(_))
        ));
        for k in 0..3 {
            let params = GrfParams {
                n: 8,
                seed: k,
                ..Default::default()
            };
            let img = sample_grf(&params, None).unwrap();
            img.to_bundle("v")
                .unwrap()
                .save(dir.path().join(format!("f{k}.lpnb")))
                .unwrap();
        }
        let manifest = ingest_folder(dir.path(), (2.0, 6.0)).unwrap();
        assert_eq!(manifest.len(), 3);
        let f = manifest.load_field(0).unwrap();
        assert!(f.min_value() >= 2.0 - 1e-9 && f.max_value() <= 6.0 + 1e-9);
        assert_abs_diff_eq!(f.min_value(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.max_value(), 6.0, epsilon = 1e-9);
    }

    #[test]
    fn ingest_rejects_heterogeneous_shapes() {
        let dir = tempfile::tempdir().unwrap();
        for (k, n) in [(0usize, 8usize), (1, 16)] {
            let params = GrfParams {
                n,
                seed: k as u64,
                ..Default::default()
            };
            let img = sample_grf(&params, None).unwrap();
            img.to_bundle("v")
                .unwrap()
                .save(dir.path().join(format!("f{k}.lpnb")))
                .unwrap();
        }
        match ingest_folder(dir.path(), (2.0, 6.0)) {
            Err(Error::Validation(msg)) => assert!(msg.contains("heterogeneous"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
