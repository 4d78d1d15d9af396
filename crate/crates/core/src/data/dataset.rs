use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::simulator::{
    validate_size, Regime, Simulator, NUM_BANDS, NUM_PARAMS, SIMULATOR_VERSION,
};
use crate::error::{Error, Result};
use crate::tsh::NUM_SCALARS;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DTYPE: &str = "float32";

/// In-memory samples. Every value is exactly representable as `f32`, so the
/// on-disk container round-trips bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    size: usize,
    seed: u64,
    params: Vec<f64>,
    images: Vec<f64>,
    scalars: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayDescriptor {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub sample_count: usize,
    /// `[H, W, bands]`.
    pub image_extents: [usize; 3],
    pub arrays: Vec<ArrayDescriptor>,
    pub generator_seed: u64,
    pub simulator_version: String,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl Dataset {
    /// Draw `n` samples. Sample `i` uses its own ChaCha stream `i` under
    /// `seed`, so samples are independent of `n` and of generation order.
    pub fn generate(n: usize, size: usize, seed: u64, regime: Regime) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("sample count must be >= 1".into()));
        }
        let sim = Simulator::new(size)?;
        let upper = regime.upper();
        let mut params = Vec::with_capacity(n * NUM_PARAMS);
        let mut images = Vec::with_capacity(n * sim.image_len());
        let mut scalars = Vec::with_capacity(n * NUM_SCALARS);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x: Vec<f64> = (0..NUM_PARAMS)
                .map(|_| round_f32(rng.random_range(0.0..=upper)))
                .collect();
            let obs = sim.forward(&x, rng.random())?;
            params.extend(&x);
            images.extend(obs.image.into_iter().map(round_f32));
            scalars.extend(obs.scalars.into_iter().map(round_f32));
        }
        Ok(Dataset {
            size,
            seed,
            params,
            images,
            scalars,
        })
    }

    /// Build from raw arrays; values are rounded to `f32` precision.
    pub fn from_arrays(
        size: usize,
        seed: u64,
        params: Vec<f64>,
        images: Vec<f64>,
        scalars: Vec<f64>,
    ) -> Result<Self> {
        validate_size(size)?;
        let n = params.len() / NUM_PARAMS;
        let image_len = size * size * NUM_BANDS;
        if n == 0
            || params.len() != n * NUM_PARAMS
            || images.len() != n * image_len
            || scalars.len() != n * NUM_SCALARS
        {
            return Err(Error::dim(format!(
                "array lengths {}/{}/{} do not describe whole samples of size {size}",
                params.len(),
                images.len(),
                scalars.len()
            )));
        }
        let all = params.iter().chain(&images).chain(&scalars);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "dataset contains non-finite values".into(),
            ));
        }
        let round = |v: Vec<f64>| v.into_iter().map(round_f32).collect();
        Ok(Dataset {
            size,
            seed,
            params: round(params),
            images: round(images),
            scalars: round(scalars),
        })
    }

    pub fn len(&self) -> usize {
        self.params.len() / NUM_PARAMS
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn image_len(&self) -> usize {
        self.size * self.size * NUM_BANDS
    }

    pub fn params(&self, i: usize) -> &[f64] {
        &self.params[i * NUM_PARAMS..(i + 1) * NUM_PARAMS]
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let l = self.image_len();
        &self.images[i * l..(i + 1) * l]
    }

    pub fn scalars(&self, i: usize) -> &[f64] {
        &self.scalars[i * NUM_SCALARS..(i + 1) * NUM_SCALARS]
    }

    pub fn all_params(&self) -> &[f64] {
        &self.params
    }

    pub fn all_images(&self) -> &[f64] {
        &self.images
    }

    pub fn all_scalars(&self) -> &[f64] {
        &self.scalars
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Parameter("subset must be non-empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Parameter(format!(
                "sample index {bad} out of range for {} samples",
                self.len()
            )));
        }
        fn gather(indices: &[usize], width: usize, all: &[f64]) -> Vec<f64> {
            indices
                .iter()
                .flat_map(|&i| &all[i * width..(i + 1) * width])
                .copied()
                .collect()
        }
        Ok(Dataset {
            size: self.size,
            seed: self.seed,
            params: gather(indices, NUM_PARAMS, &self.params),
            images: gather(indices, self.image_len(), &self.images),
            scalars: gather(indices, NUM_SCALARS, &self.scalars),
        })
    }

    pub fn manifest(&self) -> DatasetManifest {
        let n = self.len();
        let desc = |name: &str, shape: Vec<usize>| ArrayDescriptor {
            name: name.into(),
            shape,
            dtype: DTYPE.into(),
            byte_offset: 0,
            file: format!("{name}.bin"),
        };
        DatasetManifest {
            version: MANIFEST_VERSION,
            sample_count: n,
            image_extents: [self.size, self.size, NUM_BANDS],
            arrays: vec![
                desc("params", vec![n, NUM_PARAMS]),
                desc("images", vec![n, self.size, self.size, NUM_BANDS]),
                desc("scalars", vec![n, NUM_SCALARS]),
            ],
            generator_seed: self.seed,
            simulator_version: SIMULATOR_VERSION.into(),
        }
    }

    /// Write `manifest.json` plus one little-endian `f32` file per array.
    pub fn save(&self, dir: &Path) -> Result<DatasetManifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for desc in &manifest.arrays {
            let values = self.array(&desc.name);
            let mut bytes = Vec::with_capacity(values.len() * 4);
            for &v in values {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            let path = dir.join(&desc.file);
            fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        validate_manifest(&manifest)?;
        let read = |name: &str| -> Result<Vec<f64>> {
            let desc = manifest
                .arrays
                .iter()
                .find(|d| d.name == name)
                .expect("validated");
            let file_end = manifest
                .arrays
                .iter()
                .filter(|d| d.file == desc.file)
                .map(span_end)
                .max()
                .expect("desc is in the list");
            read_array(dir, desc, file_end)
        };
        let (params, images, scalars) = (read("params")?, read("images")?, read("scalars")?);
        Dataset::from_arrays(
            manifest.image_extents[0],
            manifest.generator_seed,
            params,
            images,
            scalars,
        )
        .map_err(|e| Error::Format(e.to_string()))
    }

    fn array(&self, name: &str) -> &[f64] {
        match name {
            "params" => &self.params,
            "images" => &self.images,
            "scalars" => &self.scalars,
            _ => unreachable!("manifest names are fixed"),
        }
    }
}

fn validate_manifest(m: &DatasetManifest) -> Result<()> {
    let fail = |msg: String| Err(Error::Format(msg));
    if m.version != MANIFEST_VERSION {
        return fail(format!("unsupported manifest version {}", m.version));
    }
    let [h, w, c] = m.image_extents;
    if h != w || c != NUM_BANDS || validate_size(h).is_err() {
        return fail(format!("invalid image extents {:?}", m.image_extents));
    }
    if m.sample_count == 0 {
        return fail("manifest describes zero samples".into());
    }
    let n = m.sample_count;
    let expected = [
        ("params", vec![n, NUM_PARAMS]),
        ("images", vec![n, h, w, c]),
        ("scalars", vec![n, NUM_SCALARS]),
    ];
    if m.arrays.len() != expected.len() {
        return fail(format!(
            "expected {} arrays, found {}",
            expected.len(),
            m.arrays.len()
        ));
    }
    for (name, shape) in &expected {
        let matching: Vec<_> = m.arrays.iter().filter(|d| d.name == *name).collect();
        let [desc] = matching.as_slice() else {
            return fail(format!("array {name:?} must appear exactly once"));
        };
        if desc.shape != *shape {
            return fail(format!(
                "array {name:?} has shape {:?}, expected {shape:?}",
                desc.shape
            ));
        }
        if desc.dtype != DTYPE {
            return fail(format!(
                "array {name:?} has dtype {:?}, expected {DTYPE:?}",
                desc.dtype
            ));
        }
        let plain = Path::new(&desc.file)
            .file_name()
            .map(|f| f == desc.file.as_str())
            == Some(true);
        if !plain || desc.file == MANIFEST_FILE {
            return fail(format!(
                "array {name:?} file {:?} must be a plain file name",
                desc.file
            ));
        }
    }
    // arrays sharing a file must not overlap
    let mut spans: Vec<(&str, u64, u64)> = m
        .arrays
        .iter()
        .map(|d| (d.file.as_str(), d.byte_offset, span_end(d)))
        .collect();
    spans.sort();
    for pair in spans.windows(2) {
        if pair[0].0 == pair[1].0 && pair[1].1 < pair[0].2 {
            return fail(format!("overlapping arrays in {}", pair[0].0));
        }
    }
    Ok(())
}

fn span_end(d: &ArrayDescriptor) -> u64 {
    d.byte_offset + 4 * d.shape.iter().product::<usize>() as u64
}

/// `file_end` is the furthest byte any array in the same file claims; the
/// file must be exactly that long.
fn read_array(dir: &Path, desc: &ArrayDescriptor, file_end: u64) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(&desc.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let start = desc.byte_offset as usize;
    let end = span_end(desc) as usize;
    if bytes.len() as u64 != file_end {
        return Err(Error::Format(format!(
            "{} holds {} bytes, manifest describes {file_end}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes[start..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}
