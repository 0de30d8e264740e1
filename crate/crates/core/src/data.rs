//! Datasets: synthetic Patches, MNIST IDX loading, corruption and task splits.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labeled vectors with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    name: String,
    /// `(rows, cols)` when the vectors are images.
    shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                actual: labels.len(),
                context: "labels per input",
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        if let Some(v) = inputs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "dataset values must lie in [0, 1], found {v}"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
            name: name.into(),
            shape: None,
        })
    }

    pub fn with_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: rows * cols,
                context: "image shape",
            });
        }
        self.shape = Some((rows, cols));
        Ok(self)
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Length of each input vector.
    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            shape: self.shape,
        }
    }

    /// Examples whose label is in `classes`, in original order.
    pub fn filter_classes(&self, classes: &[usize]) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(&idx)
    }

    /// First `n` examples per class, preserving order.
    pub fn take_per_class(&self, n: usize) -> Self {
        let mut counts = vec![0usize; self.n_classes];
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = &mut counts[self.labels[i]];
                *c += 1;
                *c <= n
            })
            .collect();
        self.subset(&idx)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn map_inputs(&self, inputs: Array2<f64>) -> Self {
        Self {
            inputs,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            shape: self.shape,
        }
    }

    fn image_shape(&self) -> Result<(usize, usize)> {
        if let Some(s) = self.shape {
            return Ok(s);
        }
        let side = (self.dim() as f64).sqrt().round() as usize;
        if side * side == self.dim() {
            Ok((side, side))
        } else {
            Err(Error::UnknownShape(self.dim()))
        }
    }
}

/// Pixel layout of a Patches dataset: one shared on-set plus a disjoint
/// unique on-set per image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchesLayout {
    pub n_side: usize,
    pub shared: Vec<usize>,
    pub unique: Vec<Vec<usize>>,
    pub seed: u64,
}

impl PatchesLayout {
    /// Draws a layout over `n_side * n_side` pixels.
    pub fn generate(
        n_side: usize,
        n_images: usize,
        overlap: usize,
        on_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let (shared, unique) =
            draw_overlapping_sets(n_side * n_side, n_images, overlap, on_count, seed)?;
        Ok(Self {
            n_side,
            shared,
            unique,
            seed,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn n_images(&self) -> usize {
        self.unique.len()
    }

    /// Sorted on-pixels of image `k`.
    pub fn on_pixels(&self, k: usize) -> Vec<usize> {
        let mut on: Vec<usize> = self.shared.iter().chain(&self.unique[k]).copied().collect();
        on.sort_unstable();
        on
    }

    /// One binary image per class, label `k` for image `k`.
    pub fn to_dataset(&self) -> Dataset {
        let n = self.n_images();
        let mut inputs = Array2::zeros((n, self.n_pixels()));
        for k in 0..n {
            for p in self.on_pixels(k) {
                inputs[(k, p)] = 1.0;
            }
        }
        Dataset {
            inputs,
            labels: (0..n).collect(),
            n_classes: n,
            name: "patches".into(),
            shape: Some((self.n_side, self.n_side)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(s)?;
        let n = layout.n_pixels();
        let mut seen = BTreeSet::new();
        for &p in layout.shared.iter().chain(layout.unique.iter().flatten()) {
            if p >= n || !seen.insert(p) {
                return Err(Error::InfeasiblePatches(format!(
                    "pixel {p} is out of range or assigned twice"
                )));
            }
        }
        Ok(layout)
    }
}

/// Chooses `overlap` pixels shared by every pattern plus
/// `on_count - overlap` pixels unique to each pattern.
fn draw_overlapping_sets(
    n_pixels: usize,
    n_images: usize,
    overlap: usize,
    on_count: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if n_images == 0 {
        return Err(Error::InfeasiblePatches("need at least one image".into()));
    }
    if overlap > on_count || on_count > n_pixels {
        return Err(Error::InfeasiblePatches(format!(
            "need overlap <= on_count <= pixels, got {overlap} <= {on_count} <= {n_pixels}"
        )));
    }
    let n_unique = on_count - overlap;
    let needed = n_images * n_unique + overlap;
    if needed > n_pixels {
        return Err(Error::InfeasiblePatches(format!(
            "{n_images} images with {n_unique} unique and {overlap} shared pixels need {needed} of {n_pixels} pixels"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, n_pixels, needed).into_vec();
    let mut shared = picked[..overlap].to_vec();
    shared.sort_unstable();
    let unique = (0..n_images)
        .map(|k| {
            let start = overlap + k * n_unique;
            let mut u = picked[start..start + n_unique].to_vec();
            u.sort_unstable();
            u
        })
        .collect();
    Ok((shared, unique))
}

/// Patches dataset on an `n_side x n_side` grid.
pub fn gen_patches(
    n_side: usize,
    n_images: usize,
    overlap: usize,
    on_count: usize,
    seed: u64,
) -> Result<Dataset> {
    Ok(PatchesLayout::generate(n_side, n_images, overlap, on_count, seed)?.to_dataset())
}

/// Binary patterns over `n_bits` units sharing `overlap` on-bits, one per class.
pub fn gen_binary_patterns(
    n_bits: usize,
    n_patterns: usize,
    overlap: usize,
    on_count: usize,
    seed: u64,
) -> Result<Dataset> {
    let (shared, unique) = draw_overlapping_sets(n_bits, n_patterns, overlap, on_count, seed)?;
    let mut inputs = Array2::zeros((n_patterns, n_bits));
    for (k, u) in unique.iter().enumerate() {
        for &p in shared.iter().chain(u) {
            inputs[(k, p)] = 1.0;
        }
    }
    Dataset::new("binary-patterns", inputs, (0..n_patterns).collect(), n_patterns)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> IdxReader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.err("truncated header"))?;
        let v = u32::from_be_bytes(chunk.try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            // Report where the data stops relative to what the header promised.
            let at = self.bytes.len();
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                offset: at,
                message: format!("truncated payload: expected {len} bytes from offset {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut r = IdxReader { bytes, pos: 0, path };
    let magic = r.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        r.pos = 0;
        return Err(r.err(format!("bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")));
    }
    let n = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.payload(n * rows * cols)?.to_vec();
    Ok((n, rows, cols, pixels))
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = IdxReader { bytes, pos: 0, path };
    let magic = r.u32()?;
    if magic != IDX_LABELS_MAGIC {
        r.pos = 0;
        return Err(r.err(format!("bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")));
    }
    let n = r.u32()? as usize;
    Ok(r.payload(n)?.to_vec())
}

/// Loads an MNIST image/label file pair, scaling pixels by 1/255.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let (n, rows, cols, pixels) = parse_idx_images(images_path, &read_file(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &read_file(labels_path)?)?;
    if labels.len() != n {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!("{} labels for {n} images", labels.len()),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::LabelOutOfRange {
            label: l as usize,
            n_classes: 10,
        });
    }
    let inputs = Array2::from_shape_vec((n, rows * cols), pixels)
        .expect("payload length checked")
        .mapv(|p| p as f64 / 255.0);
    Ok(Dataset {
        inputs,
        labels: labels.into_iter().map(usize::from).collect(),
        n_classes: 10,
        name: "mnist".into(),
        shape: Some((rows, cols)),
    })
}

/// Standard MNIST file names under `root`: `(train, test)`.
pub fn load_mnist_dir(root: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let root = root.as_ref();
    let train = load_mnist(
        root.join("train-images-idx3-ubyte"),
        root.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_mnist(
        root.join("t10k-images-idx3-ubyte"),
        root.join("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    GaussianBlur,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Noise standard deviation or blur sigma, in pixel units.
    pub level: f64,
    pub seed: u64,
}

/// Normalized 1-D Gaussian kernel with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of a row-major image with zero padding.
pub fn blur_image(pixels: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = x as i64 + i as i64 - r;
                if (0..cols as i64).contains(&xx) {
                    acc += k * pixels[y * cols + xx as usize];
                }
            }
            tmp[y * cols + x] = acc;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let yy = y as i64 + i as i64 - r;
                if (0..rows as i64).contains(&yy) {
                    acc += k * tmp[yy as usize * cols + x];
                }
            }
            out[y * cols + x] = acc;
        }
    }
    out
}

/// Applies a corruption to every input; labels and shape are preserved and
/// values are clamped back to `[0, 1]`.
pub fn corrupt(dataset: &Dataset, spec: &CorruptionSpec) -> Result<Dataset> {
    if !(spec.level >= 0.0 && spec.level.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "corruption level must be non-negative, got {}",
            spec.level
        )));
    }
    if spec.level == 0.0 {
        return Ok(dataset.clone());
    }
    let mut inputs = dataset.inputs.clone();
    match spec.kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, spec.level).expect("level checked");
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            inputs.mapv_inplace(|x| (x + normal.sample(&mut rng)).clamp(0.0, 1.0));
        }
        CorruptionKind::GaussianBlur => {
            let (rows, cols) = dataset.image_shape()?;
            for mut row in inputs.rows_mut() {
                let blurred = blur_image(row.as_slice().unwrap(), rows, cols, spec.level);
                for (dst, v) in row.iter_mut().zip(blurred) {
                    *dst = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(dataset.map_inputs(inputs))
}

/// One incremental-learning task.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: usize,
    pub classes: Vec<usize>,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Same tasks in a different order; ids follow the new positions.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            tasks: order
                .iter()
                .enumerate()
                .map(|(id, &i)| Task {
                    id,
                    ..self.tasks[i].clone()
                })
                .collect(),
        }
    }
}

/// Splits a dataset into tasks by class group. Labels stay global.
pub fn split_tasks(dataset: &Dataset, groups: &[Vec<usize>]) -> Result<TaskSequence> {
    if groups.is_empty() {
        return Err(Error::InvalidGroups("no task groups".into()));
    }
    let mut seen = BTreeSet::new();
    let counts = dataset.class_counts();
    for group in groups {
        if group.is_empty() {
            return Err(Error::InvalidGroups("empty task group".into()));
        }
        for &c in group {
            if c >= dataset.n_classes() || counts[c] == 0 {
                return Err(Error::InvalidGroups(format!("class {c} has no examples")));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidGroups(format!(
                    "class {c} appears in more than one group"
                )));
            }
        }
    }
    let tasks = groups
        .iter()
        .enumerate()
        .map(|(id, classes)| Task {
            id,
            classes: classes.clone(),
            data: dataset.filter_classes(classes),
        })
        .collect();
    Ok(TaskSequence { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn on_set(d: &Dataset, k: usize) -> BTreeSet<usize> {
        d.inputs()
            .row(k)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn patches_reference_layout() {
        let d = gen_patches(10, 4, 15, 25, 1).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.dim(), 100);
        let sets: Vec<_> = (0..4).map(|k| on_set(&d, k)).collect();
        for s in &sets {
            assert_eq!(s.len(), 25);
        }
        let common: BTreeSet<usize> = sets[0]
            .iter()
            .filter(|p| sets.iter().all(|s| s.contains(p)))
            .copied()
            .collect();
        assert_eq!(common.len(), 15);
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(sets[i].intersection(&sets[j]).count(), 15);
            }
            assert_eq!(sets[i].difference(&common).count(), 10);
        }
    }

    #[test]
    fn patches_degenerate_overlaps() {
        let d = gen_patches(10, 4, 25, 25, 3).unwrap();
        for k in 1..4 {
            assert_eq!(d.inputs().row(0), d.inputs().row(k));
        }
        let d = gen_patches(10, 4, 0, 25, 3).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(d.inputs().row(i).dot(&d.inputs().row(j)), 0.0);
            }
        }
    }

    #[test]
    fn patches_infeasible_budget() {
        assert!(matches!(
            gen_patches(10, 4, 10, 40, 0),
            Err(Error::InfeasiblePatches(_))
        ));
        assert!(gen_patches(10, 4, 30, 25, 0).is_err());
    }

    #[test]
    fn patches_layout_json_round_trip() {
        let layout = PatchesLayout::generate(10, 4, 15, 25, 7).unwrap();
        let back = PatchesLayout::from_json(&layout.to_json().unwrap()).unwrap();
        assert_eq!(layout, back);
        assert_eq!(back.to_dataset(), layout.to_dataset());
    }

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn idx_parses_fabricated_zero_image() {
        let bytes = idx_images(1, 28, 28, &[0u8; 784]);
        let (n, r, c, px) = parse_idx_images(Path::new("x"), &bytes).unwrap();
        assert_eq!((n, r, c), (1, 28, 28));
        assert!(px.iter().all(|&p| p == 0));
    }

    #[test]
    fn idx_truncated_reports_offset() {
        let bytes = idx_images(2, 2, 2, &[1, 2, 3, 4, 5]);
        let err = parse_idx_images(Path::new("imgs"), &bytes).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 21),
            e => panic!("unexpected {e}"),
        }
        let err = parse_idx_images(Path::new("imgs"), &bytes[..6]).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 4, .. }));
    }

    #[test]
    fn idx_bad_magic() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        assert!(matches!(
            parse_idx_images(Path::new("x"), &bytes),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn kernel_is_normalized_with_expected_radius() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let k = gaussian_kernel(0.4);
        assert_eq!(k.len(), 5);
        assert_eq!(gaussian_kernel(0.0), vec![1.0]);
    }

    #[test]
    fn blur_of_interior_pixel_preserves_mass() {
        let mut img = vec![0.0; 15 * 15];
        img[7 * 15 + 7] = 1.0;
        let out = blur_image(&img, 15, 15, 1.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Symmetric around the source.
        assert!((out[7 * 15 + 6] - out[7 * 15 + 8]).abs() < 1e-15);
        assert!((out[6 * 15 + 7] - out[7 * 15 + 6]).abs() < 1e-15);
    }

    #[test]
    fn blur_at_edge_loses_mass_to_padding() {
        let mut img = vec![0.0; 9 * 9];
        img[0] = 1.0;
        let out = blur_image(&img, 9, 9, 1.0);
        let total: f64 = out.iter().sum();
        let k = gaussian_kernel(1.0);
        let half: f64 = k[3..].iter().sum();
        assert!((total - half * half).abs() < 1e-12);
    }

    #[test]
    fn corrupt_zero_level_is_identity() {
        let d = gen_patches(10, 4, 15, 25, 2).unwrap();
        for kind in [CorruptionKind::GaussianNoise, CorruptionKind::GaussianBlur] {
            let out = corrupt(&d, &CorruptionSpec { kind, level: 0.0, seed: 1 }).unwrap();
            assert_eq!(out, d);
        }
    }

    #[test]
    fn noise_is_unbiased_at_mid_gray() {
        let inputs = Array2::from_elem((100, 100), 0.5);
        let d = Dataset::new("gray", inputs, vec![0; 100], 1).unwrap();
        let spec = CorruptionSpec {
            kind: CorruptionKind::GaussianNoise,
            level: 0.2,
            seed: 11,
        };
        let out = corrupt(&d, &spec).unwrap();
        let mean = out.inputs().mean().unwrap();
        // 1e4 draws, sd 0.2 (clamping at 0/1 is symmetric) => SE 0.002.
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(out.inputs().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn blur_needs_a_shape() {
        let d = Dataset::new("v", Array2::zeros((2, 7)), vec![0, 1], 2).unwrap();
        let spec = CorruptionSpec {
            kind: CorruptionKind::GaussianBlur,
            level: 1.0,
            seed: 0,
        };
        assert!(matches!(corrupt(&d, &spec), Err(Error::UnknownShape(7))));
    }

    #[test]
    fn split_patches_into_two_tasks() {
        let d = gen_patches(10, 4, 15, 25, 5).unwrap();
        let seq = split_tasks(&d, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.tasks[0].data.labels(), &[0, 1]);
        assert_eq!(seq.tasks[1].data.labels(), &[2, 3]);

        let whole = split_tasks(&d, &[vec![0, 1, 2, 3]]).unwrap();
        assert_eq!(whole.tasks[0].data, d);
    }

    #[test]
    fn split_rejects_overlapping_groups() {
        let d = gen_patches(10, 4, 15, 25, 5).unwrap();
        assert!(matches!(
            split_tasks(&d, &[vec![0, 1], vec![1, 2]]),
            Err(Error::InvalidGroups(_))
        ));
    }

    #[test]
    fn dataset_rejects_out_of_range_values() {
        assert!(Dataset::new("bad", array![[1.5]], vec![0], 1).is_err());
        assert!(Dataset::new("bad", array![[0.5]], vec![1], 1).is_err());
    }
}
